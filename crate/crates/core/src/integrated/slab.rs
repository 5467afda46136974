//! 1D fields in the slab and their band-limited angular-spectrum propagation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{bin_frequency, Fft1};
use crate::freespace::{band_limit, check_optics, transfer_value};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField1D {
    pub amplitude: Vec<Complex64>,
    /// Metres per sample.
    pub pitch: f64,
    /// Vacuum wavelength divided by the effective index.
    pub wavelength_eff: f64,
}

impl ComplexField1D {
    pub fn power(&self) -> f64 {
        self.amplitude.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.pitch
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.amplitude.iter().map(|c| c.norm_sqr()).collect()
    }
}

#[derive(Clone)]
pub struct SlabPropagator {
    len: usize,
    padded: usize,
    fft: Fft1,
    transfer: Option<Vec<Complex64>>,
}

impl std::fmt::Debug for SlabPropagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlabPropagator")
            .field("len", &self.len)
            .field("padded", &self.padded)
            .finish()
    }
}

impl SlabPropagator {
    pub fn new(len: usize, pitch: f64, wavelength_eff: f64, z: f64, pad_factor: usize) -> Result<Self> {
        check_optics(pitch, wavelength_eff)?;
        if !(z >= 0.0 && z.is_finite()) {
            return Err(Error::Config(format!("distance must be >= 0, got {z}")));
        }
        if len == 0 || pad_factor == 0 {
            return Err(Error::Config("field length and pad factor must be positive".into()));
        }
        let padded = len * pad_factor;
        let transfer = (z > 0.0).then(|| {
            let lim = band_limit(padded, pitch, wavelength_eff, z);
            (0..padded)
                .map(|k| {
                    let f = bin_frequency(k, padded, pitch);
                    if f.abs() > lim {
                        Complex64::new(0.0, 0.0)
                    } else {
                        transfer_value(f * f, wavelength_eff, z)
                    }
                })
                .collect()
        });
        Ok(Self {
            len,
            padded,
            fft: Fft1::new(padded),
            transfer,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn apply(&self, field: &[Complex64], conjugate: bool) -> Vec<Complex64> {
        assert_eq!(field.len(), self.len, "field length mismatch");
        let Some(transfer) = &self.transfer else {
            return field.to_vec();
        };
        let mut buf = vec![Complex64::new(0.0, 0.0); self.padded];
        buf[..self.len].copy_from_slice(field);
        self.fft.forward(&mut buf);
        for (v, t) in buf.iter_mut().zip(transfer) {
            *v *= if conjugate { t.conj() } else { *t };
        }
        self.fft.inverse(&mut buf);
        buf.truncate(self.len);
        buf
    }

    pub fn forward(&self, field: &[Complex64]) -> Vec<Complex64> {
        self.apply(field, false)
    }

    pub fn adjoint(&self, field: &[Complex64]) -> Vec<Complex64> {
        self.apply(field, true)
    }
}

/// 1D band-limited angular-spectrum propagation over `z` metres.
pub fn propagate_slab(u: &ComplexField1D, z: f64, pad_factor: usize) -> Result<ComplexField1D> {
    let p = SlabPropagator::new(u.amplitude.len(), u.pitch, u.wavelength_eff, z, pad_factor)?;
    Ok(ComplexField1D {
        amplitude: p.forward(&u.amplitude),
        pitch: u.pitch,
        wavelength_eff: u.wavelength_eff,
    })
}
