//! Rigid-motion and scene-flow toolkit for LIDAR point clouds.
//!
//! Modules:
//! - [`pcio`]: scans, flow files, meshes and scene manifests
//! - [`voxelgrid`]: sparse voxel partitioning and fixed voxel features
//! - [`rigidmotion`]: planar/spatial rigid motions and local/world reframing
//! - [`decoder`]: NMS, rotated-box IoU, median motion pooling, ground truth
//! - [`losses`]: scene-flow, rigid-motion, ego-motion and detection losses
//! - [`baselines`]: closed-form rigid fits and point-to-point ICP
//! - [`augmentor`]: mixed-reality LIDAR scene augmentation
//! - [`eval`]: evaluation metrics and the end-to-end pipeline

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augmentor;
pub mod baselines;
pub mod config;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod losses;
pub mod pcio;
pub mod rigidmotion;
pub mod spatial;
pub mod voxelgrid;

pub use error::{Error, Result};

/// Derives a child seed from a base seed and a key (splitmix64 finalizer).
pub(crate) fn mix_seed(seed: u64, key: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    key.iter().fold(mix(seed), |acc, k| mix(acc ^ mix(*k)))
}
