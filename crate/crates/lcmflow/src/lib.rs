//! Dense variational optical flow with a mesh-Laplacian smoothness term.
//!
//! The estimator minimizes a robust brightness + gradient constancy data
//! term combined with a global smoothness penalty and a cotangent-weighted
//! mesh Laplacian regularizer, using coarse-to-fine nested fixed-point
//! iterations over a sparse linear system.

pub mod bench;
pub mod error;
pub mod flo;
pub mod flow;
pub mod image;
pub mod mesh;
pub mod metrics;
pub mod solver;
pub mod sparse;
pub mod warp;

pub use error::{Error, Result};
pub use flow::FlowField;
pub use image::Image;
pub use solver::{compute_flow, LinearSolverKind, SolverParams};
