//! Band-limited angular-spectrum propagation on a 2D grid.

use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{bin_frequency, Fft2};

/// Sampled complex amplitude on a plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField2D {
    pub amplitude: Array2<Complex64>,
    /// Metres per pixel.
    pub pitch: f64,
    /// Metres.
    pub wavelength: f64,
}

impl ComplexField2D {
    pub fn new(amplitude: Array2<Complex64>, pitch: f64, wavelength: f64) -> Result<Self> {
        check_optics(pitch, wavelength)?;
        Ok(Self {
            amplitude,
            pitch,
            wavelength,
        })
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.amplitude.mapv(|c| c.norm_sqr())
    }

    pub fn power(&self) -> f64 {
        self.amplitude.iter().map(|c| c.norm_sqr()).sum()
    }
}

pub(crate) fn check_optics(pitch: f64, wavelength: f64) -> Result<()> {
    if !(pitch > 0.0 && pitch.is_finite()) {
        return Err(Error::Config(format!("pixel pitch must be positive, got {pitch}")));
    }
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::Config(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    Ok(())
}

/// Largest spatial frequency that a sampled transfer function can carry
/// without aliasing its phase, for a padded window of `n·pitch` metres.
pub fn band_limit(n: usize, pitch: f64, wavelength: f64, z: f64) -> f64 {
    let df = 1.0 / (n as f64 * pitch);
    1.0 / (wavelength * ((2.0 * df * z).powi(2) + 1.0).sqrt())
}

/// Transfer value `exp(j·2πz·√(1/λ² − f²))` for squared radial frequency `f2`,
/// zero for evanescent components.
pub fn transfer_value(f2: f64, wavelength: f64, z: f64) -> Complex64 {
    let radicand = 1.0 - wavelength * wavelength * f2;
    if radicand < 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar(1.0, TAU * z / wavelength * radicand.sqrt())
}

/// A linear propagation operator for a fixed grid, distance and padding.
///
/// The field is zero-padded to `pad_factor` times its size before the DFT
/// and cropped afterwards; with `pad_factor == 1` the operator is circular.
#[derive(Clone)]
pub struct Propagator {
    rows: usize,
    cols: usize,
    pad_rows: usize,
    pad_cols: usize,
    fft: Fft2,
    /// `None` at zero distance.
    transfer: Option<Vec<Complex64>>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("pad_rows", &self.pad_rows)
            .field("pad_cols", &self.pad_cols)
            .finish()
    }
}

impl Propagator {
    pub fn new(
        rows: usize,
        cols: usize,
        pitch: f64,
        wavelength: f64,
        z: f64,
        pad_factor: usize,
    ) -> Result<Self> {
        check_optics(pitch, wavelength)?;
        if !(z >= 0.0 && z.is_finite()) {
            return Err(Error::Config(format!("distance must be >= 0, got {z}")));
        }
        if rows == 0 || cols == 0 || pad_factor == 0 {
            return Err(Error::Config("grid and pad factor must be positive".into()));
        }
        let (pad_rows, pad_cols) = (rows * pad_factor, cols * pad_factor);
        let transfer = (z > 0.0).then(|| {
            let fx_lim = band_limit(pad_cols, pitch, wavelength, z);
            let fy_lim = band_limit(pad_rows, pitch, wavelength, z);
            let mut t = Vec::with_capacity(pad_rows * pad_cols);
            for r in 0..pad_rows {
                let fy = bin_frequency(r, pad_rows, pitch);
                for c in 0..pad_cols {
                    let fx = bin_frequency(c, pad_cols, pitch);
                    t.push(if fx.abs() > fx_lim || fy.abs() > fy_lim {
                        Complex64::new(0.0, 0.0)
                    } else {
                        transfer_value(fx * fx + fy * fy, wavelength, z)
                    });
                }
            }
            t
        });
        Ok(Self {
            rows,
            cols,
            pad_rows,
            pad_cols,
            fft: Fft2::new(pad_rows, pad_cols),
            transfer,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn apply(&self, field: &[Complex64], conjugate: bool) -> Vec<Complex64> {
        assert_eq!(field.len(), self.rows * self.cols, "field size mismatch");
        let Some(transfer) = &self.transfer else {
            return field.to_vec();
        };
        let mut buf = vec![Complex64::new(0.0, 0.0); self.pad_rows * self.pad_cols];
        for r in 0..self.rows {
            buf[r * self.pad_cols..r * self.pad_cols + self.cols]
                .copy_from_slice(&field[r * self.cols..(r + 1) * self.cols]);
        }
        self.fft.forward(&mut buf);
        for (v, t) in buf.iter_mut().zip(transfer) {
            *v *= if conjugate { t.conj() } else { *t };
        }
        self.fft.inverse(&mut buf);
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            out.extend_from_slice(&buf[r * self.pad_cols..r * self.pad_cols + self.cols]);
        }
        out
    }

    /// Row-major field in, row-major field out.
    pub fn forward(&self, field: &[Complex64]) -> Vec<Complex64> {
        self.apply(field, false)
    }

    /// Hermitian adjoint of [`Propagator::forward`].
    pub fn adjoint(&self, field: &[Complex64]) -> Vec<Complex64> {
        self.apply(field, true)
    }
}

/// Propagates `u` over `z` metres. `pad_factor` 2 suppresses wrap-around;
/// 1 gives the circular (unitary on propagating modes) operator.
pub fn propagate_asm(u: &ComplexField2D, z: f64, pad_factor: usize) -> Result<ComplexField2D> {
    let (rows, cols) = u.amplitude.dim();
    let p = Propagator::new(rows, cols, u.pitch, u.wavelength, z, pad_factor)?;
    let flat: Vec<Complex64> = u.amplitude.iter().copied().collect();
    let out = p.forward(&flat);
    Ok(ComplexField2D {
        amplitude: Array2::from_shape_vec((rows, cols), out).expect("shape preserved"),
        pitch: u.pitch,
        wavelength: u.wavelength,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Complex64) -> ComplexField2D {
        ComplexField2D::new(Array2::from_shape_fn((rows, cols), |(r, c)| f(r, c)), 9.2e-6, 532e-9).unwrap()
    }

    #[test]
    fn zero_distance_is_identity() {
        let u = field(8, 12, |r, c| Complex64::new(r as f64, -(c as f64)));
        assert_eq!(propagate_asm(&u, 0.0, 2).unwrap(), u);
    }

    #[test]
    fn plane_wave_picks_up_propagation_phase() {
        let u = field(16, 16, |_, _| Complex64::new(1.0, 0.0));
        let z = 0.1;
        let out = propagate_asm(&u, z, 1).unwrap();
        let expected = Complex64::from_polar(1.0, TAU * z / 532e-9);
        for v in out.amplitude.iter() {
            assert!((v - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_optics() {
        let u = Array2::from_elem((4, 4), Complex64::new(1.0, 0.0));
        assert!(ComplexField2D::new(u.clone(), 0.0, 532e-9).is_err());
        assert!(ComplexField2D::new(u, 1e-6, -1.0).is_err());
        assert!(Propagator::new(4, 4, 1e-6, 1e-6, -1.0, 1).is_err());
    }

    #[test]
    fn adjoint_satisfies_inner_product_identity() {
        let p = Propagator::new(6, 10, 9.2e-6, 532e-9, 0.01, 2).unwrap();
        let a: Vec<Complex64> = (0..60).map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos())).collect();
        let b: Vec<Complex64> = (0..60).map(|i| Complex64::new((i as f64 * 0.2).cos(), (i as f64).sin())).collect();
        let pa = p.forward(&a);
        let phb = p.adjoint(&b);
        let lhs: Complex64 = pa.iter().zip(&b).map(|(x, y)| x * y.conj()).sum();
        let rhs: Complex64 = a.iter().zip(&phb).map(|(x, y)| x * y.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }
}
