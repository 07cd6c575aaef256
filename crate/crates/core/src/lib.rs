//! Two-stage 3D try-on optimizer over a hybrid tetrahedral body
//! representation.
//!
//! The crate builds a capsule-proxy body, fits an SDF field over an outer
//! shell tetrahedral grid, extracts meshes with Marching Tetrahedra, renders
//! them differentiably, and optimizes geometry and texture against silhouette,
//! normal, and reconstruction targets plus score distillation from a small
//! trainable denoiser with mask-guided image-prompt attention.

pub mod body_proxy;
pub mod field;
pub mod error;
pub mod mesh;
pub mod optim;
pub mod tetgrid;

pub use error::{Error, Result};
pub use mesh::TriMesh;
