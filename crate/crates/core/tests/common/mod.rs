//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod checks;

use std::f64::consts::{PI, TAU};

use dpu_core::features::{FeatureImage, FeatureVector};
use dpu_core::signal::Label;
use dpu_core::train::{LossConfig, Trainable};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest relative error between the analytic gradient and central
/// differences of the loss, over every parameter.
///
/// The denominator never drops below `1e-5·max(1, |L|)`: below that, a
/// difference quotient with `h = 1e-6` carries double rounding of order
/// `ε·|L|/h` that would dominate a 1e-4 relative comparison.
pub fn max_fd_error<M: Trainable>(model: &M, sample: &M::Sample, loss: &LossConfig, h: f64) -> (f64, usize) {
    let (value, grad, _) = model.loss_grad(sample, loss).unwrap();
    let floor = 1e-5 * value.abs().max(1.0);
    let p0 = model.params();
    assert_eq!(grad.len(), p0.len());
    let mut worst = (0.0, 0);
    let mut m = model.clone();
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] = p0[i] + h;
        m.set_params(&p);
        let up = m.evaluate(sample, loss).unwrap().0;
        p[i] = p0[i] - h;
        m.set_params(&p);
        let down = m.evaluate(sample, loss).unwrap().0;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(floor);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    worst
}

pub fn random_image(rows: usize, cols: usize, seed: u64, label: Label) -> FeatureImage {
    let mut r = rng(seed);
    FeatureImage {
        pixels: Array2::from_shape_fn((rows, cols), |_| r.random_range(0.0..1.0)),
        patient_id: "toy".into(),
        label,
    }
}

pub fn random_vector(dim: usize, seed: u64, label: Label) -> FeatureVector {
    let mut r = rng(seed);
    FeatureVector {
        attrs: (0..dim).map(|_| r.random_range(0.0..1.0)).collect(),
        label,
    }
}

/// Unnormalized DFT matrix `F[k][n] = exp(∓j2πkn/N)`.
fn dft_matrix(n: usize, inverse: bool) -> Vec<Vec<Complex64>> {
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n)
        .map(|k| {
            (0..n)
                .map(|m| Complex64::from_polar(1.0, sign * TAU * ((k * m) % n) as f64 / n as f64))
                .collect()
        })
        .collect()
}

fn frequency(k: usize, n: usize, pitch: f64) -> f64 {
    let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    k / (n as f64 * pitch)
}

/// Band-limited angular-spectrum propagation written with explicit DFT
/// matrices: zero-pad, `F_r · U · F_c^T`, multiply by the transfer,
/// inverse, crop.
pub fn asm_by_matrices(
    u: &Array2<Complex64>,
    pitch: f64,
    wavelength: f64,
    z: f64,
    pad: usize,
) -> Array2<Complex64> {
    let (rows, cols) = u.dim();
    let (pr, pc) = (rows * pad, cols * pad);
    let mut padded = Array2::zeros((pr, pc));
    padded.slice_mut(ndarray::s![..rows, ..cols]).assign(u);
    let to_nd = |m: Vec<Vec<Complex64>>| {
        let n = m.len();
        Array2::from_shape_fn((n, n), |(i, j)| m[i][j])
    };
    let (fr, fc) = (to_nd(dft_matrix(pr, false)), to_nd(dft_matrix(pc, false)));
    let (ir, ic) = (to_nd(dft_matrix(pr, true)), to_nd(dft_matrix(pc, true)));
    let spectrum = fr.dot(&padded).dot(&fc.t());
    let lim = |n: usize| {
        let df = 1.0 / (n as f64 * pitch);
        1.0 / (wavelength * ((2.0 * df * z).powi(2) + 1.0).sqrt())
    };
    let (ly, lx) = (lim(pr), lim(pc));
    let filtered = Array2::from_shape_fn((pr, pc), |(r, c)| {
        let fy = frequency(r, pr, pitch);
        let fx = frequency(c, pc, pitch);
        let rad = 1.0 / (wavelength * wavelength) - fx * fx - fy * fy;
        if fx.abs() > lx || fy.abs() > ly || rad < 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            spectrum[[r, c]] * Complex64::from_polar(1.0, TAU * z * rad.sqrt())
        }
    });
    let back = ir.dot(&filtered).dot(&ic.t()) / (pr * pc) as f64;
    back.slice(ndarray::s![..rows, ..cols]).to_owned()
}

/// Two-layer free-space forward pass on the matrix propagator.
pub fn freespace_by_matrices(
    image: &Array2<f64>,
    layers: &[Array2<f64>],
    activations: &[(f64, f64)],
    pitch: f64,
    wavelength: f64,
    z: f64,
    pad: usize,
) -> Array2<f64> {
    let mut x = image.mapv(|v| TAU * v);
    let mut y = Array2::zeros(image.dim());
    for (i, h) in layers.iter().enumerate() {
        let u = Array2::from_shape_fn(x.dim(), |(r, c)| Complex64::from_polar(1.0, x[[r, c]] + h[[r, c]]));
        y = asm_by_matrices(&u, pitch, wavelength, z, pad).mapv(|v| v.norm_sqr());
        if let Some(&(a, b)) = activations.get(i) {
            x = y.mapv(|v| TAU / (1.0 + (-(a * v + b)).exp()));
        }
    }
    y
}

/// Scalar Huygens sum in a 2D slab: each source sample radiates the
/// far-zone 2D Green's function derivative
/// `(z/r)·sqrt(1/(λr))·exp(j(kr − π/4))·dx`.
pub fn huygens_1d(source: &[Complex64], pitch: f64, wavelength: f64, z: f64) -> Vec<Complex64> {
    let k = TAU / wavelength;
    let n = source.len();
    (0..n)
        .map(|i| {
            source
                .iter()
                .enumerate()
                .filter(|(_, s)| s.norm_sqr() > 0.0)
                .map(|(j, s)| {
                    let dx = (i as f64 - j as f64) * pitch;
                    let r = (dx * dx + z * z).sqrt();
                    s * Complex64::from_polar((z / r) * (1.0 / (wavelength * r)).sqrt() * pitch, k * r - PI / 4.0)
                })
                .sum()
        })
        .collect()
}

/// Recounts tp, fp, tn, fn from raw predictions and truths.
pub fn brute_counts(pred: &[Label], truth: &[Label]) -> [u64; 4] {
    let mut c = [0u64; 4];
    for (p, t) in pred.iter().zip(truth) {
        let idx = match (p.is_seizure(), t.is_seizure()) {
            (true, true) => 0,
            (true, false) => 1,
            (false, false) => 2,
            (false, true) => 3,
        };
        c[idx] += 1;
    }
    c
}

/// Full-width at half maximum of a sampled profile, with linear
/// interpolation at both crossings.
pub fn fwhm(profile: &[f64], pitch: f64) -> f64 {
    let (peak_i, peak) = profile
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let half = peak / 2.0;
    let cross = |range: Box<dyn Iterator<Item = usize>>, step: isize| {
        for i in range {
            let j = (i as isize + step) as usize;
            if profile[j] < half {
                let t = (profile[i] - half) / (profile[i] - profile[j]);
                return i as f64 + step as f64 * t;
            }
        }
        panic!("profile never drops below half maximum");
    };
    let right = cross(Box::new(peak_i..profile.len() - 1), 1);
    let left = cross(Box::new((1..=peak_i).rev()), -1);
    (right - left) * pitch
}
