//! Simulation side of sequential angle selection for sparse-angle CT.
//!
//! The crate covers everything the learning agent interacts with: binary
//! polygon phantoms, a parallel-beam projector with its exact adjoint,
//! per-angle Gaussian measurement noise, SIRT reconstruction, PSNR, and the
//! episode environment that turns a set of acquired angles into a belief
//! state. Non-learned angle schedules live in [`baselines`].

pub mod baselines;
pub mod container;
pub mod env;
pub mod geometry;
pub mod image;
pub mod mask;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod projector;
pub mod sirt;

pub use env::{ReconState, RewardSpec, ScanEnv, StepRecord};
pub use geometry::{Geometry, N_ANGLES};
pub use image::Image;
pub use mask::AngleMask;
pub use metrics::{psnr, QualityScore};
pub use noise::NoiseModel;
pub use phantom::{Phantom, ShapeKind, ShapeSpec};
pub use projector::{Projector, Sinogram};
pub use sirt::SirtConfig;
