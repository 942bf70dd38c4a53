//! Data-driven second-order balanced truncation.
//!
//! Reduced models `s² I + s D̃(s) + K̃` are built from transfer-function
//! samples of a second-order system `M q'' + D(s) q' + K q = Bu u`,
//! `y = Cp q + Cv q'`, without access to the system matrices. The intrusive
//! position-velocity balanced truncation serves as the reference.

pub mod dampingfit;
pub mod error;
pub mod gramians;
pub mod io;
pub mod linalg;
pub mod loewner;
pub mod metrics;
pub mod models;
pub mod quadrature;
pub mod reduction;
pub mod validation;

pub use error::{Error, Result};
