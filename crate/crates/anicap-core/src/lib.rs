//! Anisotropic capillary surface calculus in the half-space.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! core: admissible anisotropies and their Wulff shapes, capillary triangle
//! meshes and smooth parametric patches, anisotropic curvatures, the capillary
//! energy with its first and second variations, stability spectra, a
//! volume-preserving gradient flow and the area-growth probes used for
//! half-plane rigidity. File formats and the command line live in the
//! companion `anicap` crate.
//!
//! All computations are for surfaces in three-space; the container is the
//! upper half-space `{x3 >= 0}` whose wall has outward normal `-E3`.

#![no_std]
// Guards such as `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod anisotropy;
pub mod bernstein;
pub mod config;
pub mod error;
pub mod flow;
pub mod jet;
pub mod linalg;
pub mod mesh;
pub mod numeric;
pub mod parametric;
pub mod shapes;
pub mod sphere;
pub mod stability;
pub mod state;
pub mod variational;

pub use anisotropy::{AnisoEval, Anisotropy, DerivativeReport, Family};
pub use config::HalfSpaceConfig;
pub use error::{Error, Result};
pub use mesh::{CapillaryMesh, VertexKind};
pub use state::{BoundaryGeometry, GeometricState, PointGeometry};

/// Column 3-vector used throughout.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix used for shape operators and `A_F`.
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Unit vector of the third axis; the wall normal is `-E3`.
pub const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);
