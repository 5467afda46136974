//! Physics measurements returning the quantity a tolerance is applied to.

use std::f64::consts::{PI, TAU};

use dpu_core::freespace::{propagate_asm, ComplexField2D, FreespaceGeometry, FreespaceModel};
use dpu_core::integrated::{propagate_slab, ComplexField1D, IntegratedGeometry, IntegratedModel};
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use super::{asm_by_matrices, freespace_by_matrices, fwhm, huygens_1d, rng};

pub const PITCH: f64 = 9.2e-6;
pub const LAMBDA: f64 = 532e-9;

pub fn random_field(n: usize, seed: u64) -> Array2<Complex64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((n, n), |_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
}

/// Sum of random Fourier modes with `|k| <= kmax` on an `n`×`n` periodic grid.
/// `kmax = 3` on 64 pixels of 9.2 µm stays inside the band limit up to 0.1 m.
pub fn low_pass_field(n: usize, kmax: i64, seed: u64) -> Array2<Complex64> {
    let mut r = rng(seed);
    let mut modes = Vec::new();
    for ky in -kmax..=kmax {
        for kx in -kmax..=kmax {
            let c = Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
            modes.push((ky, kx, c));
        }
    }
    Array2::from_shape_fn((n, n), |(y, x)| {
        modes
            .iter()
            .map(|&(ky, kx, c)| c * Complex64::from_polar(1.0, TAU * (ky * y as i64 + kx * x as i64) as f64 / n as f64))
            .sum()
    })
}

pub fn field(a: Array2<Complex64>) -> ComplexField2D {
    ComplexField2D::new(a, PITCH, LAMBDA).unwrap()
}

pub fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Whether `z = 0` returns the input bit for bit, with and without padding.
pub fn zero_distance_is_identity() -> bool {
    [1, 2].iter().all(|&pad| {
        let u = field(random_field(24, 31));
        propagate_asm(&u, 0.0, pad).unwrap() == u
    })
}

/// Largest deviation of a propagated unit plane wave from `exp(j2πz/λ)`.
pub fn plane_wave_phase_error() -> f64 {
    let u = field(Array2::from_elem((32, 32), Complex64::new(1.0, 0.0)));
    [0.01, 0.1]
        .iter()
        .map(|&z| {
            let expected = Complex64::from_polar(1.0, TAU * z / LAMBDA);
            propagate_asm(&u, z, 1)
                .unwrap()
                .amplitude
                .iter()
                .map(|v| (v - expected).norm())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Largest relative power change over five low-pass fields.
pub fn unitarity_error() -> f64 {
    (0..5)
        .map(|seed| {
            let u = low_pass_field(64, 3, seed);
            let p_in: f64 = u.iter().map(|c| c.norm_sqr()).sum();
            (propagate_asm(&field(u), 0.1, 1).unwrap().power() / p_in - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest `|P(z1+z2)u − P(z2)P(z1)u|` relative to the peak amplitude.
pub fn semigroup_error() -> f64 {
    (0..5)
        .map(|seed| {
            let u = field(low_pass_field(64, 3, 10 + seed));
            let (z1, z2) = (0.03, 0.05);
            let direct = propagate_asm(&u, z1 + z2, 1).unwrap().amplitude;
            let steps = propagate_asm(&propagate_asm(&u, z1, 1).unwrap(), z2, 1).unwrap().amplitude;
            let scale = direct.iter().map(|c| c.norm()).fold(0.0, f64::max);
            max_abs_diff(&direct, &steps) / scale
        })
        .fold(0.0, f64::max)
}

/// Relative FWHM error of a Gaussian beam at `z/zR` = 0.5, 1, 1.5.
pub fn gaussian_width_errors() -> Vec<f64> {
    let n = 256;
    let w0 = 40.0 * PITCH;
    let zr = PI * w0 * w0 / LAMBDA;
    let c = (n as f64 - 1.0) / 2.0;
    let u = Array2::from_shape_fn((n, n), |(y, x)| {
        let r2 = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)) * PITCH * PITCH;
        Complex64::new((-r2 / (w0 * w0)).exp(), 0.0)
    });
    let fwhm_factor = (2.0 * 2f64.ln()).sqrt();
    [0.5 * zr, zr, 1.5 * zr]
        .iter()
        .map(|&z| {
            let out = propagate_asm(&field(u.clone()), z, 2).unwrap().intensity();
            let row: Vec<f64> = out.row(n / 2).to_vec();
            let expected = w0 * (1.0 + (z / zr).powi(2)).sqrt() * fwhm_factor;
            (fwhm(&row, PITCH) / expected - 1.0).abs()
        })
        .collect()
}

/// Spacing of intensity maxima within `half_width` samples of the centre.
pub fn fringe_period(intensity: &[f64], pitch: f64, half_width: usize) -> Option<f64> {
    let c = intensity.len() / 2;
    let mut peaks = Vec::new();
    for i in c - half_width..c + half_width {
        let (l, m, r) = (intensity[i - 1], intensity[i], intensity[i + 1]);
        if m > l && m >= r {
            let offset = 0.5 * (l - r) / (l - 2.0 * m + r);
            peaks.push(i as f64 + offset);
        }
    }
    (peaks.len() >= 3).then(|| (peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64 * pitch)
}

/// Relative error of the slab fringe period against `λ_eff·z/d` for two
/// 2 µm slits at two separations.
pub fn double_slit_errors() -> Vec<f64> {
    let pitch = 1e-7;
    let lambda_eff = 1.55e-6 / 2.85;
    let n = 16384;
    [(20e-6f64, 1e-3), (30e-6, 1.5e-3)]
        .iter()
        .map(|&(d, z)| {
            let slit = 20usize;
            let c = n / 2;
            let half = (d / pitch / 2.0).round() as usize;
            let mut amp = vec![Complex64::new(0.0, 0.0); n];
            for i in 0..slit {
                amp[c - half - slit / 2 + i] = Complex64::new(1.0, 0.0);
                amp[c + half - slit / 2 + i] = Complex64::new(1.0, 0.0);
            }
            let u = ComplexField1D { amplitude: amp, pitch, wavelength_eff: lambda_eff };
            let out = propagate_slab(&u, z, 2).unwrap().intensity();
            let expected = lambda_eff * z / d;
            let window = (2.5 * expected / pitch) as usize;
            fringe_period(&out, pitch, window).map_or(f64::INFINITY, |p| (p / expected - 1.0).abs())
        })
        .collect()
}

/// Largest deviation of the FFT propagator from the DFT-matrix oracle.
pub fn dft_oracle_error() -> f64 {
    [(16, 2e-3, 1), (16, 0.05, 2), (24, 0.01, 3), (32, 0.1, 4)]
        .iter()
        .map(|&(n, z, seed)| {
            let u = random_field(n, seed);
            let fast = propagate_asm(&field(u.clone()), z, 2).unwrap().amplitude;
            max_abs_diff(&fast, &asm_by_matrices(&u, PITCH, LAMBDA, z, 2))
        })
        .fold(0.0, f64::max)
}

/// Largest deviation of a two-layer forward pass from the matrix oracle on
/// 16×16 and 32×32 grids.
pub fn two_layer_oracle_error() -> f64 {
    [(16, 11), (32, 13)]
        .iter()
        .map(|&(n, seed)| {
            let mut m = FreespaceModel::new(FreespaceGeometry::scaled(n), 2).unwrap();
            m.randomize(seed);
            m.activations[0] = (1.3, -0.4);
            let mut r = rng(seed + 1);
            let img = Array2::from_shape_fn((n, n), |_| r.random_range(0.0..1.0));
            let (y, _) = m.forward(&img).unwrap();
            let g = &m.geometry;
            let oracle = freespace_by_matrices(&img, &m.layers, &m.activations, g.pitch, g.wavelength, g.distance, g.pad_factor);
            y.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Relative L2 deviation between the slab-ASM output intensity and a
/// Huygens sum over the modulated metaline, across ±150 µm.
pub fn metaline_huygens_deviation() -> f64 {
    let mut m = IntegratedModel::new(IntegratedGeometry::default()).unwrap();
    let states: Vec<bool> = (0..m.geometry.n_neurons).map(|i| i % 2 == 1).collect();
    m.set_states(&states).unwrap();
    let mut x = vec![0.0; 16];
    x[5] = 1.0;
    x[12] = 0.6;
    let at_metaline = m.propagate_half(&m.inject(&x).unwrap());
    let modulated = m.modulate_metaline(&at_metaline).unwrap();
    let asm = m.propagate_half(&modulated).intensity();
    let z = m.geometry.plane_distance / 2.0;
    let oracle: Vec<f64> = huygens_1d(&modulated.amplitude, modulated.pitch, modulated.wavelength_eff, z)
        .iter()
        .map(|c| c.norm_sqr())
        .collect();
    let g = &m.geometry;
    let lo = (0..g.n_samples()).find(|&i| g.coordinate(i) >= -150e-6).unwrap();
    let hi = (0..g.n_samples()).rfind(|&i| g.coordinate(i) <= 150e-6).unwrap();
    let num: f64 = (lo..=hi).map(|i| (asm[i] - oracle[i]).powi(2)).sum();
    let den: f64 = (lo..=hi).map(|i| oracle[i].powi(2)).sum();
    (num / den).sqrt()
}
