//! Spectral analysis of parameterized self-adjoint operator families.

pub mod adapted;
pub mod family;
pub mod flow;
pub mod par;
pub mod polarized;
pub mod spectral;
pub mod topology;

pub use family::{sample, FamilySample, FamilySpec, ParameterGrid};
pub use spectral::{HermitianOperator, RealWindow, SpectralDecomposition};
