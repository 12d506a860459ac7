//! Completely positive Markovian generators for projected quantum dynamics.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod generators;
pub mod models;
pub mod opcore;
pub mod positivity;
pub mod projections;
pub mod qfgr;
pub mod random;
pub mod reduced;
pub mod special;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use opcore::{
    bohr_decompose, BohrDecomposition, CMatrix, CVector, DensityMatrix, HermitianOperator,
    Superoperator, C64,
};
pub use positivity::{ChoiMatrix, GksForm, GksReference};
pub use projections::{EntanglingFamily, KrausProjection, ProjectionKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
