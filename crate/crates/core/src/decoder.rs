//! Object and ego motion decoding from per-cell motion fields.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::pcio::PointCloud;
use crate::rigidmotion::{angle_diff, rot2, world_to_local, wrap_angle, PlanarRigidMotion, Vec2, Vec3};
use crate::voxelgrid::{GridSpec, GroundIndex};

/// Ground-plane-oriented 3D box with a detection score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    /// Length (along the heading), width, height in meters.
    pub size: [f64; 3],
    pub yaw: f64,
    pub score: f64,
}

impl OrientedBox {
    pub fn new(center: Vec3, size: [f64; 3], yaw: f64, score: f64) -> Self {
        Self {
            center,
            size,
            yaw: wrap_angle(yaw),
            score,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.size.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidArgument(format!("box size must be positive: {:?}", self.size)));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidArgument(format!("box score {} outside [0, 1]", self.score)));
        }
        if !self.center.iter().all(|v| v.is_finite()) || !self.yaw.is_finite() {
            return Err(Error::InvalidArgument("non-finite box".into()));
        }
        Ok(())
    }

    /// Footprint corners in counter-clockwise order.
    pub fn footprint(&self) -> [Vec2; 4] {
        let r = rot2(self.yaw);
        let (hl, hw) = (self.size[0] / 2.0, self.size[1] / 2.0);
        let c = self.center.xy();
        [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]].map(|[x, y]| c + r * Vec2::new(x, y))
    }

    pub fn area(&self) -> f64 {
        self.size[0] * self.size[1]
    }

    /// Whether a ground-plane point lies in the footprint (boundary included).
    pub fn contains_ground(&self, p: &Vec2) -> bool {
        let local = rot2(-self.yaw) * (p - self.center.xy());
        local.x.abs() <= self.size[0] / 2.0 && local.y.abs() <= self.size[1] / 2.0
    }
}

fn cross(o: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

pub fn polygon_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - a.y * b.x
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Clips a convex polygon against a counter-clockwise convex clip polygon.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(&a, &b, &cur) >= 0.0;
            let prev_in = cross(&a, &b, &prev) >= 0.0;
            if cur_in != prev_in {
                let dp = cross(&a, &b, &prev);
                let dc = cross(&a, &b, &cur);
                let s = dp / (dp - dc);
                out.push(prev + (cur - prev) * s);
            }
            if cur_in {
                out.push(cur);
            }
        }
    }
    out
}

/// Intersection over union of two box footprints.
pub fn ground_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let (fa, fb) = (a.footprint(), b.footprint());
    if fa == fb {
        return 1.0;
    }
    let inter = polygon_area(&clip_convex(&fa, &fb));
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Score-thresholded non-maximum suppression. Output is sorted by descending
/// score; equal scores keep input order.
pub fn nms(boxes: &[OrientedBox], score_thresh: f64, overlap_thresh: f64) -> Vec<OrientedBox> {
    let mut order: Vec<usize> = (0..boxes.len()).filter(|&i| boxes[i].score >= score_thresh).collect();
    order.sort_by(|&i, &j| boxes[j].score.total_cmp(&boxes[i].score).then(i.cmp(&j)));
    let mut kept: Vec<OrientedBox> = Vec::new();
    for i in order {
        if kept.iter().all(|k| ground_iou(k, &boxes[i]) <= overlap_thresh) {
            kept.push(boxes[i]);
        }
    }
    kept
}

/// Per-ground-cell world motions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MotionField {
    cells: BTreeMap<GroundIndex, PlanarRigidMotion>,
}

impl MotionField {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, idx: GroundIndex, m: PlanarRigidMotion) -> Result<()> {
        if !m.is_world() {
            return Err(Error::FrameMismatch(format!("cell {idx:?}: motion field entries must be world-tagged")));
        }
        self.cells.insert(idx, m);
        Ok(())
    }

    pub fn get(&self, idx: &GroundIndex) -> Option<&PlanarRigidMotion> {
        self.cells.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroundIndex, &PlanarRigidMotion)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn lower_median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

/// Observed angle minimizing the summed absolute wrapped deviation. Ties go to
/// the smallest angle, and sums run in sorted order, so the result does not
/// depend on the input order.
fn circular_median(mut angles: Vec<f64>) -> f64 {
    angles.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, angles[0]);
    for &c in &angles {
        let cost: f64 = angles.iter().map(|&a| angle_diff(a, c).abs()).sum();
        if cost < best.0 {
            best = (cost, c);
        }
    }
    best.1
}

/// Median pooling: componentwise lower median of translations and circular
/// median of angles.
pub fn median_motion(motions: &[PlanarRigidMotion]) -> Option<PlanarRigidMotion> {
    if motions.is_empty() {
        return None;
    }
    let tx = lower_median(motions.iter().map(|m| m.translation[0]).collect());
    let ty = lower_median(motions.iter().map(|m| m.translation[1]).collect());
    let theta = circular_median(motions.iter().map(|m| m.theta).collect());
    Some(PlanarRigidMotion::world(theta, Vec2::new(tx, ty)))
}

/// Pools the field over the occupied cells whose centers fall inside the box.
pub fn pool_object_motion(field: &MotionField, bbox: &OrientedBox, grid: &GridSpec) -> Result<PlanarRigidMotion> {
    let inside: Vec<PlanarRigidMotion> = field
        .iter()
        .filter(|(idx, _)| bbox.contains_ground(&grid.ground_center(idx)))
        .map(|(_, m)| *m)
        .collect();
    median_motion(&inside).ok_or(Error::NoMotion {
        x: bbox.center.x,
        y: bbox.center.y,
        yaw: bbox.yaw,
    })
}

/// Pools the field over the occupied cells outside every box.
pub fn pool_ego_motion(field: &MotionField, boxes: &[OrientedBox], grid: &GridSpec) -> Result<PlanarRigidMotion> {
    let outside: Vec<PlanarRigidMotion> = field
        .iter()
        .filter(|(idx, _)| {
            let c = grid.ground_center(idx);
            !boxes.iter().any(|b| b.contains_ground(&c))
        })
        .map(|(_, m)| *m)
        .collect();
    median_motion(&outside).ok_or(Error::NoBackground)
}

/// World motion of static scene points under ego pose `ego`: the inverse pose.
pub fn background_motion(ego: &PlanarRigidMotion) -> Result<PlanarRigidMotion> {
    ego.inverse()
}

/// Index of the highest-scoring box containing `p` (lowest index on ties) and
/// how many boxes contain it.
fn owner(boxes: &[OrientedBox], p: &Vec2) -> (Option<usize>, usize) {
    let mut best: Option<usize> = None;
    let mut hits = 0;
    for (i, b) in boxes.iter().enumerate() {
        if b.contains_ground(p) {
            hits += 1;
            if best.is_none_or(|j| b.score > boxes[j].score) {
                best = Some(i);
            }
        }
    }
    (best, hits)
}

/// Ground truth derived from object and ego motions.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Per-point flow.
    pub flow: Vec<Vec3>,
    /// Object owning each point, `None` for background.
    pub owner: Vec<Option<usize>>,
    /// World-frame motion of every occupied ground cell.
    pub world_field: MotionField,
    /// The same motions expressed about each cell's center.
    pub local_targets: BTreeMap<GroundIndex, PlanarRigidMotion>,
    /// Points that fell inside more than one box.
    pub ambiguous_points: usize,
}

impl GroundTruth {
    pub fn foreground_mask(&self) -> Vec<bool> {
        self.owner.iter().map(Option::is_some).collect()
    }
}

/// Builds per-point flow and per-cell motion targets.
///
/// Points inside a box move with that object's world motion,
/// `v = R p + t − p`. All other points are static; with the ego pose
/// `(θ, t)` of frame `t+1` expressed in frame `t`, they move with the inverse
/// pose, `v = R(θ)ᵀ(p − t) − p`. Vertical flow is zero.
///
/// A cell takes the motion of the box containing its center, or the
/// background motion otherwise.
pub fn synthesize_gt(
    objects: &[(OrientedBox, PlanarRigidMotion)],
    ego: &PlanarRigidMotion,
    cloud: &PointCloud,
    grid: &GridSpec,
) -> Result<GroundTruth> {
    if !ego.is_world() {
        return Err(Error::FrameMismatch("ground-truth motions must be world-tagged".into()));
    }
    synthesize_from_background(objects, &background_motion(ego)?, cloud, grid)
}

/// [`synthesize_gt`] given the motion of static points directly.
pub fn synthesize_from_background(
    objects: &[(OrientedBox, PlanarRigidMotion)],
    background: &PlanarRigidMotion,
    cloud: &PointCloud,
    grid: &GridSpec,
) -> Result<GroundTruth> {
    if !background.is_world() || objects.iter().any(|(_, m)| !m.is_world()) {
        return Err(Error::FrameMismatch("ground-truth motions must be world-tagged".into()));
    }
    let background = *background;
    let boxes: Vec<OrientedBox> = objects.iter().map(|(b, _)| *b).collect();

    let mut flow = Vec::with_capacity(cloud.len());
    let mut owners = Vec::with_capacity(cloud.len());
    let mut ambiguous = 0;
    let mut occupied = std::collections::BTreeSet::new();
    for p in &cloud.points {
        let xy = p.xy();
        let (who, hits) = owner(&boxes, &xy);
        if hits > 1 {
            ambiguous += 1;
        }
        let v = match who {
            Some(i) => {
                let m = &objects[i].1;
                m.rotation() * xy + m.t() - xy
            }
            None => background.rotation() * xy + background.t() - xy,
        };
        flow.push(Vec3::new(v.x, v.y, 0.0));
        owners.push(who);
        if let Some(idx) = grid.index_of(p) {
            occupied.insert([idx[0], idx[1]]);
        }
    }
    if ambiguous > 0 {
        log::warn!("{ambiguous} points fall inside more than one box; assigned to the highest-scoring box");
    }

    let mut world_field = MotionField::new();
    let mut local_targets = BTreeMap::new();
    for idx in occupied {
        let c = grid.ground_center(&idx);
        let m = match owner(&boxes, &c).0 {
            Some(i) => objects[i].1,
            None => background,
        };
        world_field.insert(idx, m)?;
        local_targets.insert(idx, world_to_local(&m, c)?);
    }

    Ok(GroundTruth {
        flow,
        owner: owners,
        world_field,
        local_targets,
        ambiguous_points: ambiguous,
    })
}
