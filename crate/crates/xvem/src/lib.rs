//! Enriched virtual element discretisation of the Poisson problem on general
//! polygonal meshes.
//!
//! The local spaces are spanned by polynomials of arbitrary degree k plus a
//! user-supplied set of enrichment fields (by default the harmonic corner
//! singularities r^a sin(a theta)), so that accuracy near cracks and
//! re-entrant corners is not limited by the solution's regularity. The crate
//! also ships the mesh generators, manufactured problems and the
//! convergence-study driver used by the `xvem` binary.
//!
//! Everything numerical is generic over the scalar type through
//! [`scalar::Real`] (f32 or f64); concrete f64 aliases are exported at the
//! crate root.

pub mod assembly;
pub mod config;
pub mod driver;
pub mod enrichment;
pub mod error;
pub mod geometry;
pub mod local_spaces;
pub mod mesh;
pub mod postprocess;
pub mod problems;
pub mod projector;
pub mod quadrature;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Real;

/// f64 aliases for the main public types.
pub type Point2 = geometry::Point2<f64>;
pub type Mesh = mesh::Mesh<f64>;
pub type EnrichmentSpace = enrichment::EnrichmentSpace<f64>;
pub type EnrichmentPlan = enrichment::EnrichmentPlan<f64>;
pub type Spaces = local_spaces::Spaces<f64>;
pub type DofVector = local_spaces::DofVector<f64>;
