//! On-chip metaline network: waveguide injection, slab propagation,
//! binary meta-atom modulation, output-mode readout and optical bias.

mod model;
mod slab;

pub use model::{
    binarize, relaxed_phase, relaxed_phase_grad, IntegratedGeometry, IntegratedModel,
    IntegratedOutput, PhaseMode, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, SLOT_PHASE,
};
pub use slab::{propagate_slab, ComplexField1D, SlabPropagator};
