//! Seeded synthetic datasets for desk-scale runs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{feature_images, feature_vectors, BandSpec, FeatureImage, FeatureVector, StftConfig};
use crate::seed;
use crate::signal::{split, synth_recording, window, Label, Recording, Segment, SynthConfig};

/// A synthetic scalp-EEG recording with evenly spread seizure events.
#[derive(Debug, Clone, PartialEq)]
pub struct EegFixture {
    pub seed: u64,
    pub n_channels: usize,
    pub active_channel: usize,
    pub duration_s: f64,
    pub n_events: usize,
    pub event_s: f64,
    pub burst_ratio: f64,
    pub sample_rate: f64,
}

impl Default for EegFixture {
    fn default() -> Self {
        Self {
            seed: 0,
            n_channels: 23,
            active_channel: 0,
            duration_s: 240.0,
            n_events: 6,
            event_s: 10.0,
            burst_ratio: 4.0,
            sample_rate: 256.0,
        }
    }
}

impl EegFixture {
    /// Events sit in equal slots of the recording, each at a seeded offset.
    pub fn intervals(&self) -> Result<Vec<(f64, f64)>> {
        if self.n_events == 0 {
            return Ok(Vec::new());
        }
        let slot = self.duration_s / self.n_events as f64;
        if self.event_s + 2.0 > slot {
            return Err(Error::Config(format!(
                "{} events of {} s do not fit in {} s",
                self.n_events, self.event_s, self.duration_s
            )));
        }
        let mut rng = seed::stream(self.seed, "fixture-events");
        Ok((0..self.n_events)
            .map(|i| {
                let start = i as f64 * slot + 1.0 + rng.random_range(0.0..slot - self.event_s - 2.0);
                let start = start.floor();
                (start, start + self.event_s)
            })
            .collect())
    }

    pub fn recording(&self) -> Result<Recording> {
        synth_recording(&SynthConfig {
            n_channels: self.n_channels,
            sample_rate: self.sample_rate,
            duration_s: self.duration_s,
            active_channels: vec![self.active_channel],
            seizure_intervals: self.intervals()?,
            seed: seed::derive(self.seed, "fixture-signal"),
            burst_ratio: self.burst_ratio,
            ..SynthConfig::default()
        })
    }

    /// One-second, non-overlapping windows.
    pub fn segments(&self) -> Result<Vec<Segment>> {
        window(&self.recording()?, 1.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
}

/// Pipeline images of the active channel at `size`×`size`, balanced train split.
pub fn image_split(fx: &EegFixture, size: usize) -> Result<Split<FeatureImage>> {
    let s = split(fx.segments()?, seed::derive(fx.seed, "fixture-split"))?;
    let cfg = StftConfig::eeg(fx.sample_rate);
    let ch = [fx.active_channel];
    Ok(Split {
        train: feature_images(&s.train, &ch, &cfg, size)?,
        test: feature_images(&s.test, &ch, &cfg, size)?,
    })
}

/// Pipeline band-energy vectors (4 parts × 4 bands), balanced train split.
pub fn vector_split(fx: &EegFixture) -> Result<Split<FeatureVector>> {
    let s = split(fx.segments()?, seed::derive(fx.seed, "fixture-split"))?;
    let spec = BandSpec::integrated();
    Ok(Split {
        train: feature_vectors(&s.train, fx.active_channel, 4, &spec)?,
        test: feature_vectors(&s.test, fx.active_channel, 4, &spec)?,
    })
}

/// Uniform points in `[0,1]^dim` labeled by a random hyperplane through the
/// cube centre, keeping only points at least `margin` from it.
pub fn separable_vectors(seed: u64, n: usize, dim: usize, margin: f64) -> Vec<FeatureVector> {
    let mut rng = seed::stream(seed, "fixture-separable");
    let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let offset = w.iter().sum::<f64>() / 2.0;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let s = (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - offset) / norm;
        if s.abs() >= margin {
            let label = if s > 0.0 { Label::Seizure } else { Label::NonSeizure };
            out.push(FeatureVector { attrs: x, label });
        }
    }
    out
}

/// Vectors whose class shows only in overall power: a uniform direction in
/// `[0,1]^dim` scaled to unit maximum, times a gain drawn from `seizure_gain`
/// or `normal_gain`. Seizure samples come first.
pub fn power_coded_vectors(
    seed: u64,
    n_seizure: usize,
    n_normal: usize,
    dim: usize,
    seizure_gain: (f64, f64),
    normal_gain: (f64, f64),
) -> Vec<FeatureVector> {
    let mut rng = seed::stream(seed, "fixture-power");
    let mut draw = |label: Label, (lo, hi): (f64, f64)| {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let max = x.iter().copied().fold(0.0, f64::max);
        let g = rng.random_range(lo..hi);
        x.iter_mut().for_each(|v| *v *= g / max);
        FeatureVector { attrs: x, label }
    };
    let mut out: Vec<FeatureVector> = (0..n_seizure).map(|_| draw(Label::Seizure, seizure_gain)).collect();
    out.extend((0..n_normal).map(|_| draw(Label::NonSeizure, normal_gain)));
    out
}

/// Keeps every seizure sample and `ratio` times as many non-seizure samples
/// (or all of them when fewer exist), in the original order.
pub fn imbalance<T: Clone>(items: &[T], label: impl Fn(&T) -> Label, ratio: usize) -> Vec<T> {
    let positives = items.iter().filter(|v| label(v).is_seizure()).count();
    let mut budget = positives * ratio;
    items
        .iter()
        .filter(|v| {
            if label(v).is_seizure() {
                true
            } else if budget > 0 {
                budget -= 1;
                true
            } else {
                false
            }
        })
        .cloned()
        .collect()
}
