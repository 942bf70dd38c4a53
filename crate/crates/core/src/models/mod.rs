//! Full-order second-order systems, damping models and benchmark generators.

pub mod damping;
pub mod generators;
pub mod system;

pub use damping::{eval_coefficients, CoefficientEval, DampingSpec, GeneralizedDamping};
pub use generators::{
    generate_msd_chain, generate_random_spd_system, generate_structural_chain, MsdParams,
    RandomSpdOptions,
};
pub use system::{
    companion_form, eval_pencil, eval_transfer, eval_transfer_derivative, eval_transfer_split,
    sample_at, CompanionForm, SecondOrderSystem, TransferSample,
};
