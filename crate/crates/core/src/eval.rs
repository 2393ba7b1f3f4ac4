//! Scene-flow and motion metrics, and the pipeline that produces them from a
//! scene pair.

use serde::{Deserialize, Serialize};

use crate::augmentor::AugmentedScenePair;
use crate::baselines::{icp, IcpConfig};
use crate::decoder::{
    background_motion, ground_iou, nms, pool_ego_motion, pool_object_motion, synthesize_from_background, synthesize_gt,
    MotionField, OrientedBox,
};
use crate::error::{Error, Result};
use crate::rigidmotion::{angle_diff, local_to_world, PlanarRigidMotion, RigidMotion3D, Vec2, Vec3};
use crate::voxelgrid::GridSpec;

/// Mean endpoint error over foreground, background and all points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpeSplit {
    pub fg: f64,
    pub bg: f64,
    pub all: f64,
}

/// Empty subsets contribute an error of zero.
pub fn epe(pred: &[Vec3], gt: &[Vec3], fg_mask: &[bool]) -> Result<EpeSplit> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch { expected: gt.len(), actual: pred.len() });
    }
    if fg_mask.len() != gt.len() {
        return Err(Error::LengthMismatch { expected: gt.len(), actual: fg_mask.len() });
    }
    let (mut sum, mut n) = ([0.0; 2], [0usize; 2]);
    for ((p, g), fg) in pred.iter().zip(gt).zip(fg_mask) {
        let k = usize::from(!*fg);
        sum[k] += (p - g).norm();
        n[k] += 1;
    }
    let mean = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
    Ok(EpeSplit {
        fg: mean(sum[0], n[0]),
        bg: mean(sum[1], n[1]),
        all: mean(sum[0] + sum[1], n[0] + n[1]),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectMotionErrors {
    pub rot: f64,
    pub trans: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy matching: candidate pairs with IoU ≥ `tp_iou` are taken in order of
/// decreasing IoU (ties by detection, then ground-truth index). Motion errors
/// average over the matched pairs.
pub fn object_motion_errors(
    pred: &[(OrientedBox, PlanarRigidMotion)],
    gt: &[(OrientedBox, PlanarRigidMotion)],
    tp_iou: f64,
) -> ObjectMotionErrors {
    let mut pairs = Vec::new();
    for (i, (pb, _)) in pred.iter().enumerate() {
        for (j, (gb, _)) in gt.iter().enumerate() {
            let iou = ground_iou(pb, gb);
            if iou >= tp_iou && iou > 0.0 {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let (mut rot, mut trans, mut tp) = (0.0, 0.0, 0);
    for (_, i, j) in pairs {
        if pred_used[i] || gt_used[j] {
            continue;
        }
        pred_used[i] = true;
        gt_used[j] = true;
        let (p, g) = (local_to_world(&pred[i].1), local_to_world(&gt[j].1));
        rot += angle_diff(p.theta, g.theta).abs();
        trans += (p.t() - g.t()).norm();
        tp += 1;
    }
    let mean = |s: f64| if tp == 0 { 0.0 } else { s / tp as f64 };
    ObjectMotionErrors {
        rot: mean(rot),
        trans: mean(trans),
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
    }
}

/// Wrapped rotation error and translation error norm.
pub fn ego_errors(pred: &PlanarRigidMotion, gt: &PlanarRigidMotion) -> Result<(f64, f64)> {
    if !pred.is_world() || !gt.is_world() {
        return Err(Error::FrameMismatch("ego motions must be world-tagged".into()));
    }
    Ok((angle_diff(pred.theta, gt.theta).abs(), (pred.t() - gt.t()).norm()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub epe: EpeSplit,
    pub obj_rot_rad: f64,
    pub obj_tr_m: f64,
    pub ego_rot_rad: f64,
    pub ego_tr_m: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub const CSV_HEADER: &str = "fg,bg,all,obj_rot_rad,obj_tr_m,ego_rot_rad,ego_tr_m,tp,fp,fn";

impl EvalReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epe.fg, self.epe.bg, self.epe.all, self.obj_rot_rad, self.obj_tr_m, self.ego_rot_rad, self.ego_tr_m, self.tp, self.fp, self.fn_
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}\n", self.csv_row())
    }

    pub fn is_finite(&self) -> bool {
        [self.epe.fg, self.epe.bg, self.epe.all, self.obj_rot_rad, self.obj_tr_m, self.ego_rot_rad, self.ego_tr_m]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Minimum detection score kept before suppression.
    pub score: f64,
    /// Ground IoU above which the lower-scored box is suppressed.
    pub nms_overlap: f64,
    /// Minimum IoU for a detection to count as a true positive.
    pub tp_iou: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            score: 0.5,
            nms_overlap: 0.1,
            tp_iou: 0.5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("score", self.score), ("nms_overlap", self.nms_overlap), ("tp_iou", self.tp_iou)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("thresholds: {name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    /// The exact per-cell motion field of the ground truth.
    #[default]
    GroundTruth,
    /// Ego motion from ICP between the scans; each box's motion from ICP of
    /// its points against the whole second scan.
    Icp,
}

/// Offset added to the motion of every cell inside a ground-truth box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub dtheta: f64,
    pub dt: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub source: FieldSource,
    pub injection: Option<Injection>,
    pub grid: GridSpec,
    pub thresholds: Thresholds,
    pub icp: IcpConfig,
    /// Upper bound on source points used for the scan-to-scan ICP.
    pub icp_max_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source: FieldSource::GroundTruth,
            injection: None,
            grid: GridSpec::default(),
            thresholds: Thresholds::default(),
            icp: IcpConfig::default(),
            icp_max_points: 20_000,
        }
    }
}

fn stride_sample(points: &[Vec3], max: usize) -> Vec<Vec3> {
    let step = points.len().div_ceil(max.max(1)).max(1);
    points.iter().step_by(step).copied().collect()
}

fn icp_field(pair: &AugmentedScenePair, boxes: &[OrientedBox], cfg: &PipelineConfig) -> Result<MotionField> {
    let src = stride_sample(&pair.scan_t.points, cfg.icp_max_points);
    let scene = icp(&src, &pair.scan_t1.points, &cfg.icp)?.motion;
    let background = scene.to_planar();
    let tree = crate::spatial::KdTree::new(&pair.scan_t1.points);
    let mut objects = Vec::with_capacity(boxes.len());
    for b in boxes {
        let inside: Vec<Vec3> = pair
            .scan_t
            .points
            .iter()
            .filter(|p| b.contains_ground(&Vec2::new(p.x, p.y)))
            .map(|p| scene.apply(p))
            .collect();
        let m = if inside.is_empty() {
            background
        } else {
            let r = crate::baselines::icp_with_tree(&inside, &tree, &pair.scan_t1.points, &cfg.icp)?;
            r.motion.compose(&scene).to_planar()
        };
        objects.push((*b, m));
    }
    Ok(synthesize_from_background(&objects, &background, &pair.scan_t, &cfg.grid)?.world_field)
}

fn gt_field(pair: &AugmentedScenePair, cfg: &PipelineConfig) -> Result<MotionField> {
    let gt = synthesize_gt(&pair.objects, &pair.ego, &pair.scan_t, &cfg.grid)?;
    let Some(inj) = cfg.injection else {
        return Ok(gt.world_field);
    };
    let boxes = pair.boxes();
    let mut field = MotionField::new();
    for (idx, m) in gt.world_field.iter() {
        let c = cfg.grid.ground_center(idx);
        let m = if boxes.iter().any(|b| b.contains_ground(&c)) {
            PlanarRigidMotion::world(m.theta + inj.dtheta, m.t() + Vec2::from(inj.dt))
        } else {
            *m
        };
        field.insert(*idx, m)?;
    }
    Ok(field)
}

/// Decodes detections and motions from a motion field and scores them
/// against the pair's ground truth. Detections whose footprint covers no
/// occupied cell have no motion estimate and are dropped.
pub fn evaluate_field(
    pair: &AugmentedScenePair,
    field: &MotionField,
    detections: &[OrientedBox],
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    let kept = nms(detections, cfg.thresholds.score, cfg.thresholds.nms_overlap);
    let mut pred = Vec::with_capacity(kept.len());
    for b in kept {
        match pool_object_motion(field, &b, &cfg.grid) {
            Ok(m) => pred.push((b, m)),
            Err(Error::NoMotion { .. }) => log::warn!("detection at ({:.2}, {:.2}) covers no occupied cell", b.center.x, b.center.y),
            Err(e) => return Err(e),
        }
    }
    let boxes: Vec<OrientedBox> = pred.iter().map(|(b, _)| *b).collect();
    let bg_pred = pool_ego_motion(field, &boxes, &cfg.grid)?;
    let bg_gt = background_motion(&pair.ego)?;

    let flow = synthesize_from_background(&pred, &bg_pred, &pair.scan_t, &cfg.grid)?
        .flow
        .into_iter()
        // Stored ground-truth flow has f32 precision.
        .map(|v| v.map(|c| c as f32 as f64))
        .collect::<Vec<_>>();
    let fg: Vec<bool> = pair
        .scan_t
        .points
        .iter()
        .map(|p| pair.objects.iter().any(|(b, _)| b.contains_ground(&Vec2::new(p.x, p.y))))
        .collect();
    let split = epe(&flow, &pair.flow, &fg)?;
    let obj = object_motion_errors(&pred, &pair.objects, cfg.thresholds.tp_iou);
    let (ego_rot, ego_tr) = ego_errors(&bg_pred, &bg_gt)?;
    Ok(EvalReport {
        epe: split,
        obj_rot_rad: obj.rot,
        obj_tr_m: obj.trans,
        ego_rot_rad: ego_rot,
        ego_tr_m: ego_tr,
        tp: obj.tp,
        fp: obj.fp,
        fn_: obj.fn_,
    })
}

/// Builds a motion field from the configured source, decodes it using the
/// ground-truth boxes as detections, and reports the errors.
pub fn run_pipeline(pair: &AugmentedScenePair, cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.grid.validate()?;
    cfg.thresholds.validate()?;
    let boxes = pair.boxes();
    let field = match cfg.source {
        FieldSource::GroundTruth => gt_field(pair, cfg)?,
        FieldSource::Icp => icp_field(pair, &boxes, cfg)?,
    };
    evaluate_field(pair, &field, &boxes, cfg)
}

/// Flow induced on `points` by a 3D rigid motion.
pub fn flow_of(m: &RigidMotion3D, points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|p| m.apply(p) - p).collect()
}
