//! Ground-plane fitting and the drivable-region map built on top of it.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decoder::{clip_convex, polygon_area};
use crate::error::{Error, Result};
use crate::pcio::PointCloud;
use crate::rigidmotion::{Vec2, Vec3};

/// Points this far above the plane or more, and below
/// [`OBSTACLE_BAND_TOP`], block a cell.
pub const OBSTACLE_BAND_BOTTOM: f64 = 0.3;
pub const OBSTACLE_BAND_TOP: f64 = 2.5;

/// Plane `n·x = d` with upward unit normal.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundPlane {
    pub normal: Vec3,
    pub offset: f64,
    pub inliers: Vec<usize>,
    pub threshold: f64,
}

impl GroundPlane {
    pub fn height(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Height of the plane above the point `(x, y)`; NaN for a vertical plane.
    pub fn z_at(&self, x: f64, y: f64) -> f64 {
        (self.offset - self.normal.x * x - self.normal.y * y) / self.normal.z
    }

    /// Angle between the normal and the vertical axis.
    pub fn tilt(&self) -> f64 {
        self.normal.z.clamp(-1.0, 1.0).acos()
    }
}

fn inliers_of(points: &[Vec3], normal: &Vec3, offset: f64, thresh: f64) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| (normal.dot(&points[i]) - offset).abs() <= thresh)
        .collect()
}

fn least_squares_plane(points: &[Vec3], idx: &[usize]) -> (Vec3, f64) {
    let c = idx.iter().fold(Vec3::zeros(), |acc, &i| acc + points[i]) / idx.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = points[i] - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let mut n: Vec3 = eig.eigenvectors.column(k).into_owned().normalize();
    if n.z < 0.0 {
        n = -n;
    }
    (n, n.dot(&c))
}

/// Robust plane fit: best consensus over `iters` random three-point
/// hypotheses, then a least-squares refit on the consensus set.
pub fn ransac_ground(cloud: &PointCloud, iters: usize, inlier_thresh: f64, rng_seed: u64) -> Result<GroundPlane> {
    let pts = &cloud.points;
    if pts.len() < 3 {
        return Err(Error::Degenerate(format!("plane fit needs 3 points, got {}", pts.len())));
    }
    if !(inlier_thresh > 0.0) || iters == 0 {
        return Err(Error::InvalidArgument("ransac needs iters > 0 and a positive threshold".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<(usize, Vec3, f64)> = None;
    for _ in 0..iters {
        let s = rand::seq::index::sample(&mut rng, pts.len(), 3);
        let (a, b, c) = (pts[s.index(0)], pts[s.index(1)], pts[s.index(2)]);
        let (e1, e2) = (b - a, c - a);
        let cross = e1.cross(&e2);
        if cross.norm() <= 1e-12 * e1.norm() * e2.norm() {
            continue;
        }
        let mut n = cross.normalize();
        if n.z < 0.0 {
            n = -n;
        }
        let d = n.dot(&a);
        let count = pts.iter().filter(|p| (n.dot(p) - d).abs() <= inlier_thresh).count();
        if best.is_none_or(|(c, _, _)| count > c) {
            best = Some((count, n, d));
        }
    }
    let Some((_, n, d)) = best else {
        return Err(Error::Degenerate("no three non-collinear points found".into()));
    };
    let mut inliers = inliers_of(pts, &n, d, inlier_thresh);
    let (mut normal, mut offset) = (n, d);
    if inliers.len() >= 3 {
        let (rn, rd) = least_squares_plane(pts, &inliers);
        let refit = inliers_of(pts, &rn, rd, inlier_thresh);
        if refit.len() >= 3 {
            (normal, offset, inliers) = (rn, rd, refit);
        }
    }
    Ok(GroundPlane {
        normal,
        offset,
        inliers,
        threshold: inlier_thresh,
    })
}

pub type CellIndex = [i64; 2];

/// Square ground cells in the sensor's horizontal plane.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMap {
    pub cell: f64,
    /// `true` for drivable cells; cells without ground evidence are absent.
    pub cells: BTreeMap<CellIndex, bool>,
}

impl OccupancyMap {
    pub fn new(cell: f64) -> Self {
        Self {
            cell,
            cells: BTreeMap::new(),
        }
    }

    /// Map whose drivable cells are exactly `cells`.
    pub fn from_drivable(cell: f64, cells: impl IntoIterator<Item = CellIndex>) -> Self {
        Self {
            cell,
            cells: cells.into_iter().map(|c| (c, true)).collect(),
        }
    }

    pub fn cell_of(&self, x: f64, y: f64) -> CellIndex {
        [(x / self.cell).floor() as i64, (y / self.cell).floor() as i64]
    }

    pub fn cell_square(&self, c: &CellIndex) -> [Vec2; 4] {
        let (x0, y0) = (c[0] as f64 * self.cell, c[1] as f64 * self.cell);
        let (x1, y1) = (x0 + self.cell, y0 + self.cell);
        [Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)]
    }

    pub fn is_drivable(&self, c: &CellIndex) -> bool {
        self.cells.get(c).copied().unwrap_or(false)
    }

    pub fn drivable_cells(&self) -> Vec<CellIndex> {
        self.cells.iter().filter(|(_, d)| **d).map(|(c, _)| *c).collect()
    }

    /// True when every cell the convex polygon overlaps with positive area
    /// is drivable.
    pub fn polygon_drivable(&self, poly: &[Vec2]) -> bool {
        let (mut lo, mut hi) = (poly[0], poly[0]);
        for p in poly {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let (c0, c1) = (self.cell_of(lo.x, lo.y), self.cell_of(hi.x, hi.y));
        for i in c0[0]..=c1[0] {
            for j in c0[1]..=c1[1] {
                let c = [i, j];
                if self.is_drivable(&c) {
                    continue;
                }
                if polygon_area(&clip_convex(poly, &self.cell_square(&c))) > 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

/// Cells holding ground inliers and no point inside the obstacle band.
pub fn drivable_region(cloud: &PointCloud, plane: &GroundPlane, cell: f64) -> Result<OccupancyMap> {
    if !(cell > 0.0) {
        return Err(Error::InvalidArgument(format!("cell size must be positive, got {cell}")));
    }
    let mut map = OccupancyMap::new(cell);
    let mut is_inlier = vec![false; cloud.len()];
    for &i in &plane.inliers {
        if let Some(f) = is_inlier.get_mut(i) {
            *f = true;
        }
    }
    let mut blocked = std::collections::BTreeSet::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let c = map.cell_of(p.x, p.y);
        let h = plane.height(p);
        if (OBSTACLE_BAND_BOTTOM..=OBSTACLE_BAND_TOP).contains(&h) {
            blocked.insert(c);
        } else if is_inlier[i] {
            map.cells.insert(c, true);
        }
    }
    for c in blocked {
        if let Some(d) = map.cells.get_mut(&c) {
            *d = false;
        }
    }
    Ok(map)
}
