//! Free-space diffractive network: angular-spectrum propagation, phase
//! layers with sigmoid re-encoding, detector readout and a bench emulator.

mod emulator;
mod model;
mod propagation;

pub use emulator::AberrationProfile;
pub use model::{
    activation, decide, layer_forward, readout, DetectorRegions, FreespaceGeometry,
    FreespaceModel, Gradient, Readout, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub(crate) use model::{sigmoid, Start};
pub(crate) use propagation::check_optics;
pub use propagation::{band_limit, propagate_asm, transfer_value, ComplexField2D, Propagator};
