//! A desk-scale laboratory for the H-functional on symmetry-reduced Fano
//! manifolds.
//!
//! The crate discretises `ℂP¹` and the one-point blow-up of `ℂP²` in the
//! moment coordinate of their circle actions, finds Kähler–Ricci solitons
//! as critical points of `H(φ) = ∫ f_φ e^{f_φ} ω_φⁿ`, and checks the
//! operator identities around them: self-adjointness and the spectral gap
//! of `L_φ`, `L̄_φ`, the first and second variation of `H`, and the grading
//! of the holomorphic vector fields by `ad(-grad f_φ)`.

// `!(x > 0.0)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod cli;
pub mod decomposition;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod operators;
pub mod oracle;
pub mod quadrature;
pub mod sample;
pub mod variation;

pub use error::{LabError, Result};
pub use geometry::{make_backend, Mode, ModelGeometry, ModelId, PotentialField};
