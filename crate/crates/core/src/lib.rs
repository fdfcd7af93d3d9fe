//! Finite-element machinery for the vibration modes of a fluid held in an
//! elastic vessel.
//!
//! The solid is discretized in displacement/Herrmann-pressure form (MINI or
//! Taylor–Hood), the fluid in pure displacement form with lowest-order
//! Brezzi–Douglas–Marini elements. The crate covers mesh generation and
//! newest-vertex bisection, assembly of the constrained symmetric pencil, a
//! shift-invert Lanczos eigensolver with a dense cross-check, a residual a
//! posteriori estimator and the adaptive solve–estimate–mark–refine loop.
//!
//! Nothing here touches the filesystem; readers and writers live in the
//! companion CLI crate.

pub mod adaptivity;
pub mod assembly;
pub mod eigen;
pub mod estimator;
pub mod fe;
pub mod fitting;
pub mod mesh;
pub mod quadrature;
pub mod sparse;
pub mod study;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use assembly::{BlockSystem, Family, MaterialField, ScalarField};
pub use eigen::{EigenPair, SolveOptions, SpectrumReport};
pub use mesh::{EdgeTag, GeometryPreset, GeometrySpec, Mesh, Subdomain};
