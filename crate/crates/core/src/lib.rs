//! Weighted degenerate elliptic operators on half spaces: special functions,
//! certified bounds, discretisations and spectral experiments.

pub mod assembly;
pub mod certify;
pub mod field;
pub mod geometry;
pub mod holder;
pub mod linalg;
pub mod quadrature;
pub mod report;
pub mod special;
pub mod spectral;
pub mod transform;

pub use field::Sampler;
pub use special::{CharacteristicSolution, PotentialKind, SpecialError, WeightFamily};
