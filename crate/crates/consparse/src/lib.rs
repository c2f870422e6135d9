//! Sparse, physics-constrained neural constitutive models.
//!
//! This crate fits small constrained networks (input-convex and positive
//! monotone) to stress–strain, yield-surface, and hardening data while a
//! smoothed L0 penalty prunes parameters to exact zeros, and then exports
//! the surviving sub-network as a closed-form expression.
//!
//! The pieces:
//!
//! - [`autodiff`]: a scalar reverse-mode tape that can record its own
//!   backward pass, so losses defined on stresses (input-gradients of a
//!   potential) remain differentiable with respect to the parameters.
//! - [`gates`]: hard-concrete gating; every trainable scalar is θ̄·z with a
//!   stochastic gate z during training and a deterministic gate at test time.
//! - [`nets`]: gated input-convex, positive-monotone, and plain MLP forward
//!   passes with nonnegativity projection.
//! - [`hyper`]: hyperelastic kernels — invariants, normalization, second
//!   Piola-Kirchhoff stress, incompressible deformation modes, torsion.
//! - [`plast`]: elastoplastic kernels — π-plane transform, yield surfaces,
//!   isotropic elasticity, uniaxial response with neural hardening.
//! - [`train`]: full-batch Adam with constraint projection, multi-seed runs
//!   with median selection.
//! - [`symbolic`]: converts a trained gated network plus its physics wrapper
//!   into an expression tree, simplifies it, and renders it.
//! - [`data`]: embedded experimental tables, synthetic data generation, and
//!   CSV ingestion.

pub mod autodiff;
pub mod data;
pub mod gates;
pub mod hyper;
pub mod nets;
pub mod plast;
pub mod random;
pub mod symbolic;
pub mod train;

use std::fmt;

/// Errors shared across the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An operation produced a NaN or infinite forward value.
    NonFiniteValue { op: &'static str },
    /// Gate noise u must lie strictly inside (0, 1).
    InvalidNoise { u: f64 },
    /// Input vector length does not match the network's input width.
    ShapeError { expected: usize, got: usize },
    /// Deformation gradient with nonpositive determinant, nonpositive
    /// stretch, or a law-specific domain violation.
    InvalidDeformation(String),
    /// A loss was requested over an empty dataset.
    EmptyDataset,
    /// A dataset split needs more points than were provided.
    TooFewPoints { min: usize, got: usize },
    /// A scalar root find failed to bracket or converge.
    ConvergenceError(String),
    /// Gradient became non-finite during an optimizer step.
    NonFiniteGradient { index: usize },
    /// Name not present in the embedded dataset registry.
    UnknownDataset(String),
    /// CSV header is missing a required column.
    MissingColumn(String),
    /// CSV field failed to parse as a number (1-based row, 0-based column).
    NonNumeric { row: usize, col: usize },
    /// Hardening data must have strictly increasing strain.
    NonMonotoneStrain { row: usize },
    /// Rejection sampling or surface-ray search gave up.
    SamplingError(String),
    /// I/O failure while reading user data.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFiniteValue { op } => write!(f, "non-finite value from op '{op}'"),
            Error::InvalidNoise { u } => write!(f, "gate noise u={u} outside (0,1)"),
            Error::ShapeError { expected, got } => {
                write!(f, "input width mismatch: expected {expected}, got {got}")
            }
            Error::InvalidDeformation(msg) => write!(f, "invalid deformation: {msg}"),
            Error::EmptyDataset => write!(f, "empty dataset"),
            Error::TooFewPoints { min, got } => {
                write!(f, "too few points: need at least {min}, got {got}")
            }
            Error::ConvergenceError(msg) => write!(f, "root find failed: {msg}"),
            Error::NonFiniteGradient { index } => {
                write!(f, "non-finite gradient at parameter {index}")
            }
            Error::UnknownDataset(name) => write!(f, "unknown dataset '{name}'"),
            Error::MissingColumn(name) => write!(f, "missing column '{name}'"),
            Error::NonNumeric { row, col } => {
                write!(f, "non-numeric field at row {row}, column {col}")
            }
            Error::NonMonotoneStrain { row } => {
                write!(f, "strain not increasing at row {row}")
            }
            Error::SamplingError(msg) => write!(f, "sampling failed: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
