//! Multi-view textured mesh recovery by differentiable rendering.
//!
//! An oriented point cloud is turned into an indicator grid by a spectral
//! Poisson solve, meshed with marching cubes, rasterized and shaded with a
//! microfacet BRDF under per-view environment maps, and optimized against
//! images, masks and depth maps. Every stage exposes a hand-written adjoint.

pub mod bvh;
pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod grid;
pub mod iso;
pub mod losses_opt;
pub mod mesh;
pub mod pbr;
pub mod pipeline;
pub mod psr;
pub mod raster;
pub mod scene_io;
pub mod texgrid;
pub mod visualhull;

pub use error::{Error, Result};

/// Double-precision 3-vector used for positions, normals and gradients.
pub type Vec3 = nalgebra::Vector3<f64>;
