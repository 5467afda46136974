//! Simulation, training and evaluation of diffractive photonic computing
//! units for EEG seizure detection.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! * [`signal`]: EDF / CHB-MIT summary parsing, synthetic recordings, windowing, splits
//! * [`features`]: STFT images, band-energy vectors, PSD channel attributes
//! * [`forest`]: random forest with Gini importance and channel ranking
//! * [`freespace`]: differentiable free-space diffractive network and hardware emulator
//! * [`integrated`]: differentiable on-chip metaline model with optical bias
//! * [`train`]: losses, Adam, training loop, metrics, calibration, adaptation, throughput

pub mod error;
pub mod features;
pub mod fft;
pub mod fixtures;
pub mod forest;
pub mod freespace;
pub mod integrated;
pub mod seed;
pub mod signal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
