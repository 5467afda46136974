//! Systematic-error stand-in for the optical bench.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct AberrationProfile {
    /// Amplitude gain applied to the first-layer input field.
    pub illumination: Array2<f64>,
    /// Radians added to the first-layer phase.
    pub phase_error: Array2<f64>,
    /// `(dx, dy)` pixel misregistration of captured intermediate intensities.
    pub shift: (isize, isize),
    /// Gain of the seizure and non-seizure detector regions.
    pub detector_gain: [f64; 2],
}

impl AberrationProfile {
    pub fn identity(dim: (usize, usize)) -> Self {
        Self {
            illumination: Array2::ones(dim),
            phase_error: Array2::zeros(dim),
            shift: (0, 0),
            detector_gain: [1.0, 1.0],
        }
    }

    /// Gaussian illumination with `σ = W/2` and i.i.d. phase error of
    /// standard deviation `phase_sigma` radians.
    pub fn gaussian(dim: (usize, usize), phase_sigma: f64, seed: u64) -> Result<Self> {
        let (rows, cols) = dim;
        let sigma = cols as f64 / 2.0;
        let (rc, cc) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
        let illumination = Array2::from_shape_fn(dim, |(r, c)| {
            let d2 = (r as f64 - rc).powi(2) + (c as f64 - cc).powi(2);
            (-d2 / (2.0 * sigma * sigma)).exp()
        });
        let normal = Normal::new(0.0, phase_sigma)
            .map_err(|e| Error::Config(format!("phase sigma {phase_sigma}: {e}")))?;
        let mut rng = seed::stream(seed, "aberration");
        let phase_error = Array2::from_shape_fn(dim, |_| normal.sample(&mut rng));
        Ok(Self {
            illumination,
            phase_error,
            ..Self::identity(dim)
        })
    }

    /// Gaussian illumination, 0.3 rad phase error, a one-pixel
    /// misregistration and a 10% detector imbalance.
    pub fn stress(dim: (usize, usize), seed: u64) -> Result<Self> {
        let mut p = Self::gaussian(dim, 0.3, seed)?;
        let mut rng = seed::stream(seed, "aberration-shift");
        p.shift = (if rng.random_bool(0.5) { 1 } else { -1 }, 0);
        p.detector_gain = [0.9, 1.0];
        Ok(p)
    }

    pub fn check(&self, dim: (usize, usize)) -> Result<()> {
        if self.illumination.dim() != dim || self.phase_error.dim() != dim {
            return Err(Error::shape(
                format!("{dim:?}"),
                format!(
                    "illumination {:?}, phase {:?}",
                    self.illumination.dim(),
                    self.phase_error.dim()
                ),
            ));
        }
        if self.shift.0.unsigned_abs() >= dim.1 || self.shift.1.unsigned_abs() >= dim.0 {
            return Err(Error::Config(format!(
                "shift {:?} exceeds the {}x{} grid",
                self.shift, dim.0, dim.1
            )));
        }
        let bad_gain = |g: &f64| !(g.is_finite() && *g >= 0.0);
        if self.illumination.iter().any(bad_gain) || self.detector_gain.iter().any(bad_gain) {
            return Err(Error::Config("gains must be finite and >= 0".into()));
        }
        if self.phase_error.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phase error".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.is_identity_field() && self.shift == (0, 0) && self.detector_gain == [1.0, 1.0]
    }

    pub(crate) fn is_identity_field(&self) -> bool {
        self.illumination.iter().all(|&g| g == 1.0) && self.phase_error.iter().all(|&e| e == 0.0)
    }

    /// `out[r][c] = y[r − dy][c − dx]`, zero outside.
    pub(crate) fn apply_shift(&self, y: &[f64], dim: (usize, usize)) -> Vec<f64> {
        shift(y, dim, self.shift.0, self.shift.1)
    }

    pub(crate) fn apply_shift_adjoint(&self, g: &[f64], dim: (usize, usize)) -> Vec<f64> {
        shift(g, dim, -self.shift.0, -self.shift.1)
    }
}

fn shift(y: &[f64], (rows, cols): (usize, usize), dx: isize, dy: isize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let sr = r as isize - dy;
        if sr < 0 || sr >= rows as isize {
            continue;
        }
        for c in 0..cols {
            let sc = c as isize - dx;
            if sc >= 0 && sc < cols as isize {
                out[r * cols + c] = y[sr as usize * cols + sc as usize];
            }
        }
    }
    out
}
