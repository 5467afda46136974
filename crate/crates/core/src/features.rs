//! Input encodings: time–frequency images for the free-space model,
//! band-energy vectors for the integrated model, and per-channel PSD band
//! attributes for channel selection.

use ndarray::{s, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::Fft1;
use crate::signal::{Label, Segment};

/// Channel count of the CHB-MIT montage.
pub const EEG_CHANNELS: usize = 23;
/// δ, θ, α, β, γ.
pub const RHYTHM_BANDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Taper {
    Hann,
    Rectangular,
}

impl Taper {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Taper::Rectangular => vec![1.0; n],
            Taper::Hann if n == 1 => vec![1.0],
            Taper::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    pub win_len: usize,
    pub hop: usize,
    pub pad_len: usize,
    pub f_max: f64,
    pub sample_rate: f64,
    pub taper: Taper,
}

impl StftConfig {
    /// Scalp EEG: 51-sample Hann window, 1-sample hop, 512-point DFT, 0–50 Hz.
    pub fn eeg(sample_rate: f64) -> Self {
        Self {
            win_len: 51,
            hop: 1,
            pad_len: 512,
            f_max: 50.0,
            sample_rate,
            taper: Taper::Hann,
        }
    }

    /// Intracranial EEG: window of half the sampling rate, 0–100 Hz.
    pub fn ieeg(sample_rate: f64) -> Self {
        let win_len = ((sample_rate / 2.0).round() as usize).max(1);
        Self {
            win_len,
            hop: 1,
            pad_len: win_len.next_power_of_two().max(512),
            f_max: 100.0,
            sample_rate,
            taper: Taper::Hann,
        }
    }
}

/// Power spectrogram, `values[[frame, bin]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Array2<f64>,
    pub freq_axis: Vec<f64>,
    pub time_axis: Vec<f64>,
}

/// One-sided weight that makes a real signal's DFT power sum to its energy.
fn one_sided(k: usize, n: usize) -> f64 {
    if k == 0 || (n % 2 == 0 && k == n / 2) {
        1.0
    } else {
        2.0
    }
}

/// Short-time power spectrum. Each frame is tapered, zero-padded to
/// `pad_len`, transformed, and reduced to one-sided power
/// `w_k |X_k|² / pad_len` for bins at or below `f_max`.
pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    if signal.is_empty() {
        return Err(Error::Config("empty signal".into()));
    }
    if cfg.hop == 0 {
        return Err(Error::Config("STFT hop must be positive".into()));
    }
    if cfg.win_len == 0 || cfg.win_len > signal.len() {
        return Err(Error::Config(format!(
            "window of {} samples does not fit a {}-sample signal",
            cfg.win_len,
            signal.len()
        )));
    }
    if cfg.pad_len < cfg.win_len {
        return Err(Error::Config("pad length shorter than window".into()));
    }
    if cfg.f_max > cfg.sample_rate / 2.0 + 1e-12 || cfg.f_max <= 0.0 {
        return Err(Error::BandAboveNyquist {
            low: 0.0,
            high: cfg.f_max,
            nyquist: cfg.sample_rate / 2.0,
        });
    }

    let df = cfg.sample_rate / cfg.pad_len as f64;
    let n_bins = (0..=cfg.pad_len / 2)
        .take_while(|&k| k as f64 * df <= cfg.f_max + 1e-9)
        .count();
    let n_frames = (signal.len() - cfg.win_len) / cfg.hop + 1;
    let taper = cfg.taper.weights(cfg.win_len);
    let fft = Fft1::new(cfg.pad_len);

    let mut values = Array2::zeros((n_frames, n_bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.pad_len];
    for frame in 0..n_frames {
        let start = frame * cfg.hop;
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for i in 0..cfg.win_len {
            buf[i].re = signal[start + i] * taper[i];
        }
        fft.forward(&mut buf);
        for k in 0..n_bins {
            values[[frame, k]] = one_sided(k, cfg.pad_len) * buf[k].norm_sqr() / cfg.pad_len as f64;
        }
    }
    let freq_axis = (0..n_bins).map(|k| k as f64 * df).collect();
    let time_axis = (0..n_frames)
        .map(|f| (f * cfg.hop) as f64 / cfg.sample_rate)
        .collect();
    Ok(Spectrogram {
        values,
        freq_axis,
        time_axis,
    })
}

/// Sorted, non-overlapping frequency bands, each half-open `[low, high)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpec {
    bands: Vec<(f64, f64)>,
}

impl BandSpec {
    pub fn new(bands: Vec<(f64, f64)>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::Config("band list is empty".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for &(lo, hi) in &bands {
            if !(lo < hi) || lo < prev || lo < 0.0 {
                return Err(Error::Config(format!(
                    "bands must be sorted, non-overlapping and non-empty: {bands:?}"
                )));
            }
            prev = hi;
        }
        Ok(Self { bands })
    }

    /// δ (0.4–4), θ (4–8), α (8–12), β (12–30), γ (30–70 Hz, capped below Nyquist).
    pub fn eeg_rhythms(sample_rate: f64) -> Self {
        let gamma_hi = 70.0_f64.min(0.99 * sample_rate / 2.0);
        Self::new(vec![
            (0.4, 4.0),
            (4.0, 8.0),
            (8.0, 12.0),
            (12.0, 30.0),
            (30.0, gamma_hi),
        ])
        .expect("rhythm bands need a sampling rate above 60.6 Hz")
    }

    /// 0–6, 6–14, 14–22, 22–30 Hz.
    pub fn integrated() -> Self {
        Self::new(vec![(0.0, 6.0), (6.0, 14.0), (14.0, 22.0), (22.0, 30.0)]).unwrap()
    }

    pub fn bands(&self) -> &[(f64, f64)] {
        &self.bands
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }
}

/// Periodogram power summed over each band.
pub fn band_energy(signal: &[f64], spec: &BandSpec, sample_rate: f64) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::Config("empty signal".into()));
    }
    let nyquist = sample_rate / 2.0;
    if let Some(&(lo, hi)) = spec.bands.iter().find(|&&(_, hi)| hi > nyquist) {
        return Err(Error::BandAboveNyquist {
            low: lo,
            high: hi,
            nyquist,
        });
    }
    let n = signal.len();
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft1::new(n).forward(&mut buf);
    let df = sample_rate / n as f64;
    let mut out = vec![0.0; spec.len()];
    for (k, v) in buf.iter().enumerate().take(n / 2 + 1) {
        let f = k as f64 * df;
        if let Some(b) = spec.bands.iter().position(|&(lo, hi)| f >= lo && f < hi) {
            out[b] += one_sided(k, n) * v.norm_sqr() / n as f64;
        }
    }
    Ok(out)
}

/// Band energies for every channel, channel-major.
pub fn band_attrs(seg: &Segment, spec: &BandSpec) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(seg.n_channels() * spec.len());
    for row in seg.data.rows() {
        let x: Vec<f64> = row.to_vec();
        out.extend(band_energy(&x, spec, seg.sample_rate)?);
    }
    Ok(out)
}

/// 115 attributes: five rhythm-band powers for each of the 23 channels.
pub fn channel_attrs(seg: &Segment) -> Result<Vec<f64>> {
    if seg.n_channels() != EEG_CHANNELS {
        return Err(Error::shape(
            format!("{EEG_CHANNELS} channels"),
            seg.n_channels(),
        ));
    }
    band_attrs(seg, &BandSpec::eeg_rhythms(seg.sample_rate))
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(src: &Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    let (sr, sc) = src.dim();
    let coord = |dst: usize, dst_n: usize, src_n: usize| -> (usize, usize, f64) {
        let x = ((dst as f64 + 0.5) * src_n as f64 / dst_n as f64 - 0.5).clamp(0.0, (src_n - 1) as f64);
        let i0 = x.floor() as usize;
        let i1 = (i0 + 1).min(src_n - 1);
        (i0, i1, x - i0 as f64)
    };
    let col_coords: Vec<_> = (0..cols).map(|c| coord(c, cols, sc)).collect();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let (r0, r1, fr) = coord(r, rows, sr);
        let (c0, c1, fc) = col_coords[c];
        let top = src[[r0, c0]] * (1.0 - fc) + src[[r0, c1]] * fc;
        let bottom = src[[r1, c0]] * (1.0 - fc) + src[[r1, c1]] * fc;
        top * (1.0 - fr) + bottom * fr
    })
}

/// Min-max scaling to [0, 1]; a constant array maps to zeros.
pub fn normalize_min_max(img: &mut Array2<f64>) {
    let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        img.mapv_inplace(|v| (v - lo) / (hi - lo));
    } else {
        img.fill(0.0);
    }
}

/// Tiles spectrograms row-major on a `⌈√n⌉`-column grid, frequency on the
/// vertical axis (row 0 = 0 Hz) and time on the horizontal axis, then
/// min-max normalizes the whole image.
pub fn assemble_image(spectros: &[Spectrogram], rows: usize, cols: usize) -> Result<Array2<f64>> {
    let n = spectros.len();
    if n == 0 {
        return Err(Error::Config("no spectrograms to assemble".into()));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let grid_cols = (n as f64).sqrt().ceil() as usize;
    let grid_rows = n.div_ceil(grid_cols);
    if grid_rows > rows || grid_cols > cols {
        return Err(Error::Config("image too small for tile grid".into()));
    }
    let mut img = Array2::zeros((rows, cols));
    for (i, sp) in spectros.iter().enumerate() {
        let (gr, gc) = (i / grid_cols, i % grid_cols);
        let r0 = gr * rows / grid_rows;
        let r1 = (gr + 1) * rows / grid_rows;
        let c0 = gc * cols / grid_cols;
        let c1 = (gc + 1) * cols / grid_cols;
        let tile = resize_bilinear(&sp.values.t().to_owned(), r1 - r0, c1 - c0);
        img.slice_mut(s![r0..r1, c0..c1]).assign(&tile);
    }
    normalize_min_max(&mut img);
    Ok(img)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub pixels: Array2<f64>,
    pub patient_id: String,
    pub label: Label,
}

/// STFT of the chosen channels of one segment, tiled into a `size`×`size` image.
pub fn feature_image(
    seg: &Segment,
    channels: &[usize],
    cfg: &StftConfig,
    size: usize,
) -> Result<FeatureImage> {
    if channels.is_empty() || channels.len() > EEG_CHANNELS {
        return Err(Error::Config(format!(
            "need 1..={EEG_CHANNELS} channels, got {}",
            channels.len()
        )));
    }
    let spectros = channels
        .iter()
        .map(|&c| {
            if c >= seg.n_channels() {
                return Err(Error::shape(format!("channel < {}", seg.n_channels()), c));
            }
            stft(&seg.channel(c), cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureImage {
        pixels: assemble_image(&spectros, size, size)?,
        patient_id: seg.recording_id.clone(),
        label: seg.label,
    })
}

/// Order-preserving parallel image extraction.
pub fn feature_images(
    segs: &[Segment],
    channels: &[usize],
    cfg: &StftConfig,
    size: usize,
) -> Result<Vec<FeatureImage>> {
    segs.par_iter()
        .map(|s| feature_image(s, channels, cfg, size))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub attrs: Vec<f64>,
    pub label: Label,
}

/// Splits one channel into `parts` equal sub-windows (remainder samples at
/// the end are dropped), computes band energies per part, concatenates them
/// part-major and scales so the largest attribute is 1.
pub fn feature_vector(
    seg: &Segment,
    channel: usize,
    parts: usize,
    spec: &BandSpec,
) -> Result<FeatureVector> {
    if channel >= seg.n_channels() {
        return Err(Error::shape(
            format!("channel < {}", seg.n_channels()),
            channel,
        ));
    }
    let x = seg.channel(channel);
    if parts == 0 || x.len() < parts {
        return Err(Error::Config(format!(
            "cannot split {} samples into {parts} parts",
            x.len()
        )));
    }
    let len = x.len() / parts;
    let mut attrs = Vec::with_capacity(parts * spec.len());
    for p in 0..parts {
        attrs.extend(band_energy(&x[p * len..(p + 1) * len], spec, seg.sample_rate)?);
    }
    let max = attrs.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        attrs.iter_mut().for_each(|v| *v /= max);
    }
    Ok(FeatureVector {
        attrs,
        label: seg.label,
    })
}

pub fn feature_vectors(
    segs: &[Segment],
    channel: usize,
    parts: usize,
    spec: &BandSpec,
) -> Result<Vec<FeatureVector>> {
    segs.par_iter()
        .map(|s| feature_vector(s, channel, parts, spec))
        .collect()
}
