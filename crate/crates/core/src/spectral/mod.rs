//! Eigenmode bases, the linear operator, transforms, the dealiased quadratic
//! nonlinearity and the norms used throughout.

mod basis;
mod field;
mod transform;

pub use basis::{BasisSpec, Boundary, EigenvalueBounds, LinearSpectrum};
pub use field::{
    derivative, derivative_field, from_physical, l4_pow4, mass, nonlinearity, nonlinearity_with,
    norm, sup_norm, to_physical, Dealiaser, NormKind, SpectralField, NEUMANN_SYMMETRY_TOL,
};
pub use transform::{GridBuffer, Padding, TrigSeries};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("domain length must be positive and finite, got {0}")]
    InvalidLength(f64),
    #[error("truncation must retain at least one mode")]
    InvalidTruncation,
    #[error("mode index {index} outside 1..={modes}")]
    ModeIndex { index: usize, modes: usize },
    #[error("grid of {samples} samples cannot resolve the field, need at least {required}")]
    Resolution { samples: usize, required: usize },
    #[error("Neumann data violates even symmetry (relative defect {0:.3e})")]
    Symmetry(f64),
    #[error("grid period {found} does not match basis period {expected}")]
    PeriodMismatch { expected: f64, found: f64 },
    #[error("unsupported derivative order {0}")]
    DerivativeOrder(u32),
    #[error("Sobolev index {0} outside [-4, 4]")]
    SobolevIndex(f64),
    #[error("expected {expected} coefficients, found {found}")]
    CoefficientCount { expected: usize, found: usize },
}
