//! Seeded synthetic EEG.
//!
//! Background is 1/f ("pink") noise on every channel. During seizure
//! intervals the active channels also carry a rhythmic 3–5 Hz spike-wave
//! burst whose RMS is `burst_ratio` times the background RMS.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_intervals, ChannelInfo, Recording};
use crate::error::{Error, Result};
use crate::fft::{bin_frequency, Fft1};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub sample_rate: f64,
    pub duration_s: f64,
    pub active_channels: Vec<usize>,
    pub seizure_intervals: Vec<(f64, f64)>,
    pub seed: u64,
    /// Background RMS in µV.
    pub background_rms: f64,
    /// Burst RMS relative to background RMS.
    pub burst_ratio: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_channels: 23,
            sample_rate: 256.0,
            duration_s: 60.0,
            active_channels: vec![0],
            seizure_intervals: Vec::new(),
            seed: 0,
            background_rms: 20.0,
            burst_ratio: 4.0,
        }
    }
}

// Harmonic weights of the spike-wave template.
const HARMONICS: [f64; 3] = [1.0, 0.5, 0.25];
const RAMP_S: f64 = 0.2;

fn pink_noise(n: usize, fs: f64, rms: f64, rng: &mut impl Rng, fft: &Fft1) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    fft.forward(&mut buf);
    let f_floor = 0.5;
    for (k, v) in buf.iter_mut().enumerate() {
        let f = bin_frequency(k, n, 1.0 / fs).abs();
        *v *= if k == 0 { 0.0 } else { 1.0 / f.max(f_floor).sqrt() };
    }
    fft.inverse(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let cur = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if cur > 0.0 {
        out.iter_mut().for_each(|v| *v *= rms / cur);
    }
    out
}

fn template_rms() -> f64 {
    (HARMONICS.iter().map(|h| h * h).sum::<f64>() / 2.0).sqrt()
}

pub fn synth_recording(cfg: &SynthConfig) -> Result<Recording> {
    if !(cfg.duration_s > 0.0) || !(cfg.sample_rate > 0.0) {
        return Err(Error::Config("duration and sample rate must be positive".into()));
    }
    if cfg.n_channels == 0 {
        return Err(Error::Config("need at least one channel".into()));
    }
    if cfg.active_channels.iter().any(|&c| c >= cfg.n_channels) {
        return Err(Error::Config(format!(
            "active channels {:?} out of range for {} channels",
            cfg.active_channels, cfg.n_channels
        )));
    }
    if cfg.active_channels.is_empty() && !cfg.seizure_intervals.is_empty() {
        return Err(Error::Config(
            "seizure intervals need at least one active channel".into(),
        ));
    }
    let n = (cfg.duration_s * cfg.sample_rate).round() as usize;
    if n == 0 {
        return Err(Error::Config("duration shorter than one sample".into()));
    }
    check_intervals(&cfg.seizure_intervals, n as f64 / cfg.sample_rate)?;

    let fft = Fft1::new(n);
    let mut samples: Vec<Vec<f64>> = (0..cfg.n_channels)
        .map(|c| {
            let mut rng = seed::rng(seed::derive_index(seed::derive(cfg.seed, "background"), c as u64));
            pink_noise(n, cfg.sample_rate, cfg.background_rms, &mut rng, &fft)
        })
        .collect();

    let amplitude = cfg.burst_ratio * cfg.background_rms / template_rms();
    for (ev, &(start, end)) in cfg.seizure_intervals.iter().enumerate() {
        let mut rng = seed::rng(seed::derive_index(seed::derive(cfg.seed, "burst"), ev as u64));
        let freq: f64 = rng.random_range(3.0..5.0);
        let first = (start * cfg.sample_rate).ceil() as usize;
        let last = ((end * cfg.sample_rate).ceil() as usize).min(n);
        for &c in &cfg.active_channels {
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            for (i, s) in samples[c][first..last].iter_mut().enumerate() {
                let t = (first + i) as f64 / cfg.sample_rate;
                let ramp = ((t - start).min(end - t) / RAMP_S).clamp(0.0, 1.0);
                let env = 0.5 - 0.5 * (std::f64::consts::PI * ramp).cos();
                let theta = std::f64::consts::TAU * freq * (t - start) + phase;
                let wave: f64 = HARMONICS
                    .iter()
                    .enumerate()
                    .map(|(h, w)| w * ((h + 1) as f64 * theta).sin())
                    .sum();
                *s += amplitude * env * wave;
            }
        }
    }

    let channels = (0..cfg.n_channels)
        .map(|c| ChannelInfo::new(format!("SYN{c:02}"), "uV"))
        .collect();
    Recording::new(
        format!("synth-{}", cfg.seed),
        channels,
        samples,
        cfg.sample_rate,
        cfg.seizure_intervals.clone(),
    )
}
