//! Sparse voxel partitioning with fixed per-voxel statistics.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcio::PointCloud;
use crate::rigidmotion::{Vec2, Vec3};

/// Length of the per-voxel feature vector.
pub const FEATURE_LEN: usize = 7;

pub type VoxelIndex = [usize; 3];
pub type GroundIndex = [usize; 2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub voxel_size: [f64; 3],
    /// Voxel counts along x, y, z.
    pub extents: [usize; 3],
    /// Maximum number of points retained per voxel.
    pub sample_cap: usize,
    pub rng_seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            origin: [0.0, -40.0, -3.0],
            voxel_size: [0.2, 0.2, 0.4],
            extents: [352, 400, 10],
            sample_cap: 35,
            rng_seed: 0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.voxel_size.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidArgument(format!("voxel size must be positive, got {:?}", self.voxel_size)));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        if self.sample_cap == 0 {
            return Err(Error::InvalidArgument("sample cap must be at least 1".into()));
        }
        if self.extents.contains(&0) {
            return Err(Error::InvalidArgument("grid extents must be nonzero".into()));
        }
        Ok(())
    }

    /// Voxel containing `p`, using half-open `[low, high)` intervals per axis.
    pub fn index_of(&self, p: &Vec3) -> Option<VoxelIndex> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel_size[a]).floor();
            if !(f >= 0.0 && f < self.extents[a] as f64) {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(idx)
    }

    pub fn voxel_center(&self, idx: &VoxelIndex) -> Vec3 {
        Vec3::from_fn(|a, _| self.origin[a] + (idx[a] as f64 + 0.5) * self.voxel_size[a])
    }

    /// Ground-plane center of column `(i, j)`.
    pub fn ground_center(&self, idx: &GroundIndex) -> Vec2 {
        Vec2::new(
            self.origin[0] + (idx[0] as f64 + 0.5) * self.voxel_size[0],
            self.origin[1] + (idx[1] as f64 + 0.5) * self.voxel_size[1],
        )
    }

    /// Corners of the grid's ground rectangle.
    pub fn ground_bounds(&self) -> (Vec2, Vec2) {
        let lo = Vec2::new(self.origin[0], self.origin[1]);
        let hi = lo + Vec2::new(self.extents[0] as f64 * self.voxel_size[0], self.extents[1] as f64 * self.voxel_size[1]);
        (lo, hi)
    }

    pub fn ground_index_of(&self, p: &Vec3) -> Option<GroundIndex> {
        let mut idx = [0usize; 2];
        for a in 0..2 {
            let f = ((p[a] - self.origin[a]) / self.voxel_size[a]).floor();
            if !(f >= 0.0 && f < self.extents[a] as f64) {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(idx)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelCell {
    /// Retained point indices into the source cloud, ascending.
    pub points: Vec<usize>,
    /// Points that fell into the voxel before subsampling.
    pub total: usize,
    pub feature: [f64; FEATURE_LEN],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseVoxelGrid {
    pub spec: GridSpec,
    pub cells: BTreeMap<VoxelIndex, VoxelCell>,
    /// Points outside the grid bounds.
    pub dropped: usize,
    /// In-bounds points removed by per-voxel subsampling.
    pub discarded: usize,
}

impl SparseVoxelGrid {
    pub fn retained(&self) -> usize {
        self.cells.values().map(|c| c.points.len()).sum()
    }
}

/// Groups points by voxel, subsamples crowded voxels and encodes each
/// occupied voxel.
///
/// Subsampling draws from an RNG keyed on the voxel index and the grid seed,
/// so the outcome does not depend on the order voxels are visited.
pub fn voxelize(cloud: &PointCloud, spec: &GridSpec) -> Result<SparseVoxelGrid> {
    spec.validate()?;
    let mut members: BTreeMap<VoxelIndex, Vec<usize>> = BTreeMap::new();
    let mut dropped = 0;
    for (i, p) in cloud.points.iter().enumerate() {
        match spec.index_of(p) {
            Some(idx) => members.entry(idx).or_default().push(i),
            None => dropped += 1,
        }
    }

    let mut discarded = 0;
    let cells = members
        .into_iter()
        .map(|(idx, all)| {
            let total = all.len();
            let kept = if total > spec.sample_cap {
                let mut rng = ChaCha8Rng::seed_from_u64(crate::mix_seed(spec.rng_seed, &[idx[0] as u64, idx[1] as u64, idx[2] as u64]));
                let mut pick: Vec<usize> = rand::seq::index::sample(&mut rng, total, spec.sample_cap)
                    .into_iter()
                    .map(|k| all[k])
                    .collect();
                pick.sort_unstable();
                discarded += total - pick.len();
                pick
            } else {
                all
            };
            let pts: Vec<Vec3> = kept.iter().map(|&i| cloud.points[i]).collect();
            let refl: Vec<f32> = kept.iter().map(|&i| cloud.reflectance_at(i)).collect();
            let feature = encode_cell(&pts, &refl, total, &spec.voxel_center(&idx), spec.sample_cap);
            (
                idx,
                VoxelCell {
                    points: kept,
                    total,
                    feature,
                },
            )
        })
        .collect();

    Ok(SparseVoxelGrid {
        spec: *spec,
        cells,
        dropped,
        discarded,
    })
}

/// Fixed 7-statistic voxel descriptor:
/// `[occupancy, min(count/T, 1), centroid − center (3), mean distance to
/// centroid, mean reflectance]`.
///
/// `count` is the number of points in the voxel before subsampling; the
/// remaining statistics use the retained `points`.
pub fn encode_cell(points: &[Vec3], reflectance: &[f32], count: usize, center: &Vec3, sample_cap: usize) -> [f64; FEATURE_LEN] {
    debug_assert!(!points.is_empty());
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let spread = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    let refl = reflectance.iter().map(|&r| r as f64).sum::<f64>() / n;
    let offset = centroid - center;
    [
        1.0,
        (count as f64 / sample_cap as f64).min(1.0),
        offset.x,
        offset.y,
        offset.z,
        spread,
        refl,
    ]
}

/// Stacks each column's vertical voxels into one ground-cell vector of length
/// `D · FEATURE_LEN`; empty voxels contribute zeros.
pub fn flatten_to_ground(grid: &SparseVoxelGrid) -> BTreeMap<GroundIndex, Vec<f64>> {
    let depth = grid.spec.extents[2];
    let mut out: BTreeMap<GroundIndex, Vec<f64>> = BTreeMap::new();
    for (idx, cell) in &grid.cells {
        let column = out.entry([idx[0], idx[1]]).or_insert_with(|| vec![0.0; depth * FEATURE_LEN]);
        column[idx[2] * FEATURE_LEN..(idx[2] + 1) * FEATURE_LEN].copy_from_slice(&cell.feature);
    }
    out
}
