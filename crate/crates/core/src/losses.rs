//! Pure loss evaluators and their gradients with respect to predictions.
//!
//! Gradients are the analytic (sub)gradients; at kinks of `|·|` the sign is
//! taken as zero.

use serde::{Deserialize, Serialize};

use crate::decoder::{ground_iou, OrientedBox};
use crate::error::{Error, Result};
use crate::rigidmotion::{angle_diff, PlanarRigidMotion, Vec3};

/// Proposals with IoU above this against any ground-truth box are positive.
pub const POSITIVE_IOU: f64 = 0.6;
/// Proposals whose best IoU is below this are negative.
pub const NEGATIVE_IOU: f64 = 0.45;
/// Knee of the smooth-ℓ1 function.
pub const SMOOTH_L1_KNEE: f64 = 1.0;
/// Length of the box residual vector.
pub const RESIDUAL_LEN: usize = 7;

pub type Residual = [f64; RESIDUAL_LEN];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            lambda: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("loss weight {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected: a, actual: b })
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean ℓ1 distance between predicted and true per-cell flow.
pub fn flow_loss(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    same_len(gt.len(), pred.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g).abs().sum()).sum();
    Ok(sum / pred.len() as f64)
}

pub fn flow_loss_grad(pred: &[Vec3], gt: &[Vec3]) -> Result<Vec<Vec3>> {
    same_len(gt.len(), pred.len())?;
    let k = pred.len() as f64;
    Ok(pred.iter().zip(gt).map(|(p, g)| (p - g).map(sign) / k).collect())
}

fn check_frames(pred: &[PlanarRigidMotion], gt: &[PlanarRigidMotion]) -> Result<()> {
    same_len(gt.len(), pred.len())?;
    for (j, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.origin != g.origin {
            return Err(Error::FrameMismatch(format!(
                "cell {j}: prediction in {:?} but target in {:?}",
                p.origin, g.origin
            )));
        }
    }
    Ok(())
}

/// `(1/K) Σ ‖tⱼ − t*ⱼ‖₁ + λ |θⱼ − θ*ⱼ|` with wrapped angle differences.
/// Each prediction must share its target's reference frame.
pub fn rigmo_loss(pred: &[PlanarRigidMotion], gt: &[PlanarRigidMotion], lambda: f64) -> Result<f64> {
    check_frames(pred, gt)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(gt).map(|(p, g)| motion_l1(p, g, lambda)).sum();
    Ok(sum / pred.len() as f64)
}

fn motion_l1(p: &PlanarRigidMotion, g: &PlanarRigidMotion, lambda: f64) -> f64 {
    (p.translation[0] - g.translation[0]).abs()
        + (p.translation[1] - g.translation[1]).abs()
        + lambda * angle_diff(p.theta, g.theta).abs()
}

/// Gradient of [`rigmo_loss`] as `(∂/∂θ, ∂/∂tx, ∂/∂ty)` per cell.
pub fn rigmo_loss_grad(pred: &[PlanarRigidMotion], gt: &[PlanarRigidMotion], lambda: f64) -> Result<Vec<[f64; 3]>> {
    check_frames(pred, gt)?;
    let k = pred.len() as f64;
    Ok(pred.iter().zip(gt).map(|(p, g)| motion_l1_grad(p, g, lambda).map(|v| v / k)).collect())
}

fn motion_l1_grad(p: &PlanarRigidMotion, g: &PlanarRigidMotion, lambda: f64) -> [f64; 3] {
    [
        lambda * sign(angle_diff(p.theta, g.theta)),
        sign(p.translation[0] - g.translation[0]),
        sign(p.translation[1] - g.translation[1]),
    ]
}

/// `‖t − t*‖₁ + λ |θ − θ*|` between background motions.
pub fn ego_loss(pred: &PlanarRigidMotion, gt: &PlanarRigidMotion, lambda: f64) -> Result<f64> {
    if !pred.is_world() || !gt.is_world() {
        return Err(Error::FrameMismatch("ego motions must be world-tagged".into()));
    }
    Ok(motion_l1(pred, gt, lambda))
}

pub fn ego_loss_grad(pred: &PlanarRigidMotion, gt: &PlanarRigidMotion, lambda: f64) -> Result<[f64; 3]> {
    if !pred.is_world() || !gt.is_world() {
        return Err(Error::FrameMismatch("ego motions must be world-tagged".into()));
    }
    Ok(motion_l1_grad(pred, gt, lambda))
}

/// Regression target of a ground-truth box relative to an anchor:
/// center offsets in the plane over the anchor diagonal, vertical offset over
/// the anchor height, log size ratios, and the wrapped yaw difference.
pub fn encode_residual(anchor: &OrientedBox, gt: &OrientedBox) -> Residual {
    let diag = (anchor.size[0].powi(2) + anchor.size[1].powi(2)).sqrt();
    [
        (gt.center.x - anchor.center.x) / diag,
        (gt.center.y - anchor.center.y) / diag,
        (gt.center.z - anchor.center.z) / anchor.size[2],
        (gt.size[0] / anchor.size[0]).ln(),
        (gt.size[1] / anchor.size[1]).ln(),
        (gt.size[2] / anchor.size[2]).ln(),
        angle_diff(gt.yaw, anchor.yaw),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProposalLabel {
    Positive,
    Negative,
    Ignored,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProposalMatch {
    pub labels: Vec<ProposalLabel>,
    /// Ground-truth index each positive proposal regresses toward.
    pub matched: Vec<Option<usize>>,
    pub residuals: Vec<Option<Residual>>,
}

impl ProposalMatch {
    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().enumerate().filter(|(_, l)| **l == ProposalLabel::Positive).map(|(i, _)| i)
    }

    pub fn negatives(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().enumerate().filter(|(_, l)| **l == ProposalLabel::Negative).map(|(i, _)| i)
    }
}

/// Labels proposals against ground-truth boxes.
///
/// A proposal is positive if it has the highest IoU (> 0) with some
/// ground-truth box or IoU above [`POSITIVE_IOU`] with any; negative if its
/// best IoU is below [`NEGATIVE_IOU`]; ignored otherwise.
#[allow(clippy::needless_range_loop)] // column access into the IoU table
pub fn match_proposals(proposals: &[OrientedBox], gts: &[OrientedBox]) -> ProposalMatch {
    let iou: Vec<Vec<f64>> = proposals.iter().map(|p| gts.iter().map(|g| ground_iou(p, g)).collect()).collect();
    let mut positive = vec![false; proposals.len()];
    let mut matched: Vec<Option<usize>> = vec![None; proposals.len()];

    for g in 0..gts.len() {
        let best = (0..proposals.len())
            .filter(|&p| iou[p][g] > 0.0)
            .max_by(|&a, &b| iou[a][g].total_cmp(&iou[b][g]).then(b.cmp(&a)));
        if let Some(p) = best {
            positive[p] = true;
            matched[p] = Some(g);
        }
    }
    let mut labels = Vec::with_capacity(proposals.len());
    for p in 0..proposals.len() {
        let best = (0..gts.len()).max_by(|&a, &b| iou[p][a].total_cmp(&iou[p][b]).then(b.cmp(&a)));
        let best_iou = best.map_or(0.0, |g| iou[p][g]);
        if best_iou > POSITIVE_IOU {
            positive[p] = true;
            matched[p] = best;
        }
        labels.push(if positive[p] {
            ProposalLabel::Positive
        } else if best_iou < NEGATIVE_IOU {
            ProposalLabel::Negative
        } else {
            ProposalLabel::Ignored
        });
    }
    let residuals = (0..proposals.len())
        .map(|p| matched[p].filter(|_| positive[p]).map(|g| encode_residual(&proposals[p], &gts[g])))
        .collect();
    let matched = (0..proposals.len()).map(|p| matched[p].filter(|_| positive[p])).collect();
    ProposalMatch {
        labels,
        matched,
        residuals,
    }
}

/// Binary cross-entropy of probability `p` against label `y ∈ {0, 1}`.
pub fn bce(p: f64, y: f64) -> f64 {
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < SMOOTH_L1_KNEE {
        0.5 * a * a / SMOOTH_L1_KNEE
    } else {
        a - 0.5 * SMOOTH_L1_KNEE
    }
}

fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < SMOOTH_L1_KNEE {
        x / SMOOTH_L1_KNEE
    } else {
        sign(x)
    }
}

fn check_det(pos: &[f64], neg: &[f64], rp: &[Residual], rg: &[Residual]) -> Result<()> {
    if pos.is_empty() && neg.is_empty() {
        return Err(Error::InvalidArgument("detection loss needs at least one positive or negative".into()));
    }
    same_len(pos.len(), rp.len())?;
    same_len(pos.len(), rg.len())?;
    if let Some(p) = pos.iter().chain(neg).find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")));
    }
    Ok(())
}

/// `(1/M_pos) Σ [BCE(pₖ, 1) + Σ smoothℓ1(rₖ − r*ₖ)] + (1/M_neg) Σ BCE(pₗ, 0)`.
/// An empty positive or negative set contributes zero.
pub fn det_loss(pos_probs: &[f64], neg_probs: &[f64], residual_pred: &[Residual], residual_gt: &[Residual]) -> Result<f64> {
    check_det(pos_probs, neg_probs, residual_pred, residual_gt)?;
    let mut loss = 0.0;
    if !pos_probs.is_empty() {
        let sum: f64 = pos_probs
            .iter()
            .zip(residual_pred.iter().zip(residual_gt))
            .map(|(p, (r, g))| bce(*p, 1.0) + r.iter().zip(g).map(|(a, b)| smooth_l1(a - b)).sum::<f64>())
            .sum();
        loss += sum / pos_probs.len() as f64;
    }
    if !neg_probs.is_empty() {
        loss += neg_probs.iter().map(|p| bce(*p, 0.0)).sum::<f64>() / neg_probs.len() as f64;
    }
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetLossGrad {
    pub pos_probs: Vec<f64>,
    pub neg_probs: Vec<f64>,
    pub residuals: Vec<Residual>,
}

pub fn det_loss_grad(pos_probs: &[f64], neg_probs: &[f64], residual_pred: &[Residual], residual_gt: &[Residual]) -> Result<DetLossGrad> {
    check_det(pos_probs, neg_probs, residual_pred, residual_gt)?;
    let mp = pos_probs.len() as f64;
    let mn = neg_probs.len() as f64;
    Ok(DetLossGrad {
        pos_probs: pos_probs.iter().map(|p| -1.0 / (p * mp)).collect(),
        neg_probs: neg_probs.iter().map(|p| 1.0 / ((1.0 - p) * mn)).collect(),
        residuals: residual_pred
            .iter()
            .zip(residual_gt)
            .map(|(r, g)| std::array::from_fn(|i| smooth_l1_grad(r[i] - g[i]) / mp))
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub flow: f64,
    pub rigmo: f64,
    pub ego: f64,
    pub det: f64,
}

/// `α L_flow + β L_rigmo + γ L_ego + L_det`.
pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> f64 {
    weights.alpha * parts.flow + weights.beta * parts.rigmo + weights.gamma * parts.ego + parts.det
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigidmotion::{world_to_local, Vec2};
    use std::f64::consts::PI;

    #[test]
    fn flow_loss_examples() {
        let gt = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.0, 0.5)];
        assert_eq!(flow_loss(&gt, &gt).unwrap(), 0.0);
        let pred = vec![gt[0] + Vec3::new(1.0, 0.0, 0.0), gt[1] + Vec3::new(0.0, 2.0, 0.0)];
        assert!((flow_loss(&pred, &gt).unwrap() - 1.5).abs() < 1e-12);
        let scaled: Vec<Vec3> = gt.iter().zip(&pred).map(|(g, p)| g + (p - g) * -3.0).collect();
        assert!((flow_loss(&scaled, &gt).unwrap() - 4.5).abs() < 1e-12);
        assert!(matches!(flow_loss(&pred[..1], &gt), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn rigmo_loss_examples() {
        let o = Vec2::new(3.0, 1.0);
        let gt = PlanarRigidMotion::local(0.2, Vec2::new(0.5, 0.5), o);
        assert_eq!(rigmo_loss(&[gt], &[gt], 2.0).unwrap(), 0.0);
        let pred = PlanarRigidMotion::local(0.25, Vec2::new(0.6, 0.7), o);
        assert!((rigmo_loss(&[pred], &[gt], 2.0).unwrap() - 0.4).abs() < 1e-12);

        let other = PlanarRigidMotion::local(0.2, Vec2::new(0.5, 0.5), Vec2::new(0.0, 0.0));
        assert!(matches!(rigmo_loss(&[other], &[gt], 1.0), Err(Error::FrameMismatch(_))));
        let world = PlanarRigidMotion::world(0.2, Vec2::new(0.5, 0.5));
        assert!(rigmo_loss(&[world], &[gt], 1.0).is_err());
    }

    #[test]
    fn rigmo_loss_after_common_reframing() {
        // Same rotation on both sides: reframing shifts both translations by
        // the same (R − I) o, so the loss is unchanged.
        let pw = PlanarRigidMotion::world(0.3, Vec2::new(1.0, -2.0));
        let gw = PlanarRigidMotion::world(0.3, Vec2::new(0.5, 0.25));
        let in_world = rigmo_loss(&[pw], &[gw], 1.5).unwrap();
        let origins = [Vec2::new(10.0, 3.0), Vec2::new(-4.0, 7.5)];
        for o in origins {
            let l = rigmo_loss(&[world_to_local(&pw, o).unwrap()], &[world_to_local(&gw, o).unwrap()], 1.5).unwrap();
            assert!((l - in_world).abs() < 1e-12);
        }
    }

    #[test]
    fn ego_loss_examples() {
        let g = PlanarRigidMotion::world(0.1, Vec2::new(1.0, 2.0));
        assert_eq!(ego_loss(&g, &g, 3.0).unwrap(), 0.0);
        let p = PlanarRigidMotion::world(0.1, Vec2::new(2.0, 3.0));
        for lambda in [0.0, 1.0, 7.0] {
            assert!((ego_loss(&p, &g, lambda).unwrap() - 2.0).abs() < 1e-12);
        }
        let a = PlanarRigidMotion::world(PI - 0.01, Vec2::zeros());
        let b = PlanarRigidMotion::world(-PI + 0.01, Vec2::zeros());
        assert!((ego_loss(&a, &b, 1.0).unwrap() - 0.02).abs() < 1e-12);
        let local = PlanarRigidMotion::local(0.0, Vec2::zeros(), Vec2::new(1.0, 0.0));
        assert!(ego_loss(&local, &g, 1.0).is_err());
    }

    fn bx(x: f64, y: f64) -> OrientedBox {
        OrientedBox::new(Vec3::new(x, y, 0.0), [4.0, 2.0, 1.5], 0.0, 1.0)
    }

    #[test]
    fn proposal_matching_rules() {
        let gt = bx(0.0, 0.0);
        // Shift of 0.6 m along the length: IoU = 3.4 / 4.6 ≈ 0.739.
        let m = match_proposals(&[bx(0.6, 0.0), bx(0.0, 0.3)], &[gt]);
        assert_eq!(m.labels, vec![ProposalLabel::Positive, ProposalLabel::Positive]);

        // Sole proposal with IoU 1.2 / 6.8 ≈ 0.176 is still the argmax.
        let m = match_proposals(&[bx(2.8, 0.0)], &[gt]);
        assert!(ground_iou(&bx(2.8, 0.0), &gt) < 0.2);
        assert_eq!(m.labels, vec![ProposalLabel::Positive]);
        assert_eq!(m.matched, vec![Some(0)]);

        let m = match_proposals(&[bx(50.0, 0.0)], &[gt]);
        assert_eq!(m.labels, vec![ProposalLabel::Negative]);
        assert!(m.residuals[0].is_none());

        // A second, worse proposal between the bands is ignored.
        let m = match_proposals(&[bx(0.0, 0.0), bx(1.5, 0.0)], &[gt]);
        let mid = ground_iou(&bx(1.5, 0.0), &gt);
        assert!(mid > NEGATIVE_IOU && mid < POSITIVE_IOU);
        assert_eq!(m.labels, vec![ProposalLabel::Positive, ProposalLabel::Ignored]);
    }

    #[test]
    fn residual_of_identical_box_is_zero() {
        let b = bx(3.0, 4.0);
        assert_eq!(encode_residual(&b, &b), [0.0; 7]);
        let m = match_proposals(&[b], &[b]);
        assert_eq!(m.residuals[0], Some([0.0; 7]));
    }

    #[test]
    fn every_overlapped_gt_gets_a_positive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let gts: Vec<OrientedBox> = (0..3).map(|_| bx(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0))).collect();
            let props: Vec<OrientedBox> = (0..15).map(|_| bx(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0))).collect();
            let m = match_proposals(&props, &gts);
            for g in &gts {
                let best = (0..props.len()).max_by(|&a, &b| ground_iou(&props[a], g).total_cmp(&ground_iou(&props[b], g)));
                if let Some(p) = best.filter(|&p| ground_iou(&props[p], g) > 0.0) {
                    assert_eq!(m.labels[p], ProposalLabel::Positive);
                }
            }
        }
    }

    #[test]
    fn det_loss_examples() {
        let eps = 1e-12;
        let l = det_loss(&[1.0 - eps], &[eps], &[[0.0; 7]], &[[0.0; 7]]).unwrap();
        assert!(l < 1e-10);
        let l = det_loss(&[0.5], &[], &[[0.0; 7]], &[[0.0; 7]]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert!((smooth_l1(0.5) - 0.125).abs() < 1e-15);
        assert!((smooth_l1(-2.0) - 1.5).abs() < 1e-15);
        assert!(det_loss(&[], &[], &[], &[]).is_err());
        assert!(det_loss(&[1.0], &[], &[[0.0; 7]], &[[0.0; 7]]).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossParts::default(), &w), 0.0);
        let ones = LossParts { flow: 1.0, rigmo: 1.0, ego: 1.0, det: 1.0 };
        assert_eq!(total_loss(&ones, &w), 4.0);
        let w2 = LossWeights { alpha: 2.0, ..w };
        assert_eq!(total_loss(&ones, &w2), 5.0);
        assert!(LossWeights { lambda: -1.0, ..w }.validate().is_err());
    }
}
