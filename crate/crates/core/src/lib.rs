//! Forward simulation and inversion of Zeeman-resolved EIT spectra on the
//! ⁸⁷Rb D₂ line.

// NaN-rejecting `!(a > b)` guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atomic_structure;
pub mod error;
pub mod field_geometry;
pub mod linalg;
pub mod liouville;
pub mod lm;
pub mod magnetometer;
pub mod quadrature;
pub mod scalar;
pub mod spectra;
pub mod toy_model;

pub use error::{EitError, Result};
pub use scalar::Real;

pub type PhysicalConstantsF64 = atomic_structure::PhysicalConstants<f64>;
pub type PhysicalConstantsF32 = atomic_structure::PhysicalConstants<f32>;
pub type FieldGeometryF64 = field_geometry::FieldGeometry<f64>;
pub type FieldGeometryF32 = field_geometry::FieldGeometry<f32>;
pub type SphericalComponentsF64 = field_geometry::SphericalComponents<f64>;
pub type SphericalComponentsF32 = field_geometry::SphericalComponents<f32>;
pub type DensityMatrixF64 = liouville::DensityMatrix<f64>;
pub type DensityMatrixF32 = liouville::DensityMatrix<f32>;
pub type ScanConfigF64 = liouville::ScanConfig<f64>;
pub type ScanConfigF32 = liouville::ScanConfig<f32>;
pub type SpectrumF64 = spectra::Spectrum<f64>;
pub type SpectrumF32 = spectra::Spectrum<f32>;
pub type ToyParametersF64 = toy_model::ToyParameters<f64>;
pub type ToyParametersF32 = toy_model::ToyParameters<f32>;
