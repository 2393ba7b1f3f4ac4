//! Classical estimators: closed-form rigid fits and point-to-point ICP.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigidmotion::{rot2, PlanarRigidMotion, RigidMotion3D, Vec2, Vec3};
use crate::spatial::KdTree;

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64
}

/// Least-squares rigid motion minimizing `Σ ‖R sᵢ + t − dᵢ‖²`.
///
/// Both sets are centered, the cross-covariance is decomposed by SVD, and a
/// reflection is undone by flipping the sign of the last singular direction.
pub fn fit_rigid(src: &[Vec3], dst: &[Vec3]) -> Result<RigidMotion3D> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch {
            expected: src.len(),
            actual: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 correspondences, got {}", src.len())));
    }
    let cs = centroid(src);
    let cd = centroid(dst);

    let mut spread = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s - cs;
        spread += a * a.transpose();
        cross += a * (d - cd).transpose();
    }
    let mut ev = SymmetricEigen::new(spread).eigenvalues.as_slice().to_vec();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 || ev[1] <= ev[0] * 1e-12 {
        return Err(Error::Degenerate("source points are collinear or coincident".into()));
    }

    let svd = cross.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Degenerate("svd failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("svd failed".into()))?;
    let v = v_t.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let rotation = v * fix * u.transpose();
    let translation = cd - rotation * cs;
    Ok(RigidMotion3D {
        rotation,
        translation,
    })
}

/// Sum of squared residuals `Σ ‖R sᵢ + t − dᵢ‖²`.
pub fn rigid_residual(m: &RigidMotion3D, src: &[Vec3], dst: &[Vec3]) -> f64 {
    src.iter().zip(dst).map(|(s, d)| (m.apply(s) - d).norm_squared()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iter: usize,
    /// Convergence threshold on the change of the estimate between iterations.
    pub tol: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IcpResult {
    pub motion: RigidMotion3D,
    pub iterations: usize,
    pub converged: bool,
    /// RMS nearest-neighbor distance after each association step, followed
    /// by the RMS distance under the final estimate.
    pub rms_history: Vec<f64>,
}

impl IcpResult {
    pub fn final_rms(&self) -> f64 {
        *self.rms_history.last().unwrap_or(&0.0)
    }
}

/// Point-to-point ICP aligning `src` onto `dst`, starting from the identity.
pub fn icp(src: &[Vec3], dst: &[Vec3], config: &IcpConfig) -> Result<IcpResult> {
    icp_with_tree(src, &KdTree::new(dst), dst, config)
}

/// ICP against a prebuilt index over `dst`.
pub fn icp_with_tree(src: &[Vec3], tree: &KdTree, dst: &[Vec3], config: &IcpConfig) -> Result<IcpResult> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::InvalidArgument("icp needs non-empty clouds".into()));
    }
    let mut current = RigidMotion3D::identity();
    let mut history = Vec::new();
    let mut matched = Vec::with_capacity(src.len());
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iter {
        iterations += 1;
        matched.clear();
        let mut sq = 0.0;
        for s in src {
            let (j, d2) = tree.nearest(&current.apply(s)).expect("non-empty tree");
            matched.push(dst[j]);
            sq += d2;
        }
        history.push((sq / src.len() as f64).sqrt());

        let next = fit_rigid(src, &matched)?;
        let change = (next.rotation - current.rotation).norm() + (next.translation - current.translation).norm();
        current = next;
        if change < config.tol {
            converged = true;
            break;
        }
    }

    let sq: f64 = src
        .iter()
        .map(|s| tree.nearest(&current.apply(s)).expect("non-empty tree").1)
        .sum();
    history.push((sq / src.len() as f64).sqrt());
    Ok(IcpResult {
        motion: current,
        iterations,
        converged,
        rms_history: history,
    })
}

/// Per-point flow `T p − p` induced by a spatial motion.
pub fn flow_from_motion(m: &RigidMotion3D, points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|p| m.apply(p) - p).collect()
}

fn check_planar_input(points: &[Vec2], flows: &[Vec2]) -> Result<Vec2> {
    if points.len() != flows.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            actual: flows.len(),
        });
    }
    if points.len() < 2 {
        return Err(Error::Degenerate("need at least 2 points".into()));
    }
    let c = points.iter().fold(Vec2::zeros(), |a, p| a + p) / points.len() as f64;
    if points.iter().all(|p| *p == points[0]) {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    Ok(c)
}

/// Least-squares planar motion `(θ, t)` minimizing `Σ ‖R pᵢ + t − (pᵢ + vᵢ)‖²`.
/// Returns the world-tagged motion and the root of the summed squared residual.
pub fn fit_planar_from_flow(points: &[Vec2], flows: &[Vec2]) -> Result<(PlanarRigidMotion, f64)> {
    let cp = check_planar_input(points, flows)?;
    let targets: Vec<Vec2> = points.iter().zip(flows).map(|(p, v)| p + v).collect();
    let cq = targets.iter().fold(Vec2::zeros(), |a, q| a + q) / targets.len() as f64;
    let (mut dot, mut cross) = (0.0, 0.0);
    for (p, q) in points.iter().zip(&targets) {
        let a = p - cp;
        let b = q - cq;
        dot += a.dot(&b);
        cross += a.x * b.y - a.y * b.x;
    }
    let theta = cross.atan2(dot);
    let r = rot2(theta);
    let t = cq - r * cp;
    let rss = planar_rss(points, &targets, &r, &t);
    Ok((PlanarRigidMotion::world(theta, t), rss))
}

/// Best translation for a fixed rotation `θ`, and the resulting residual.
pub fn fit_planar_with_rotation(points: &[Vec2], flows: &[Vec2], theta: f64) -> Result<(PlanarRigidMotion, f64)> {
    check_planar_input(points, flows)?;
    let r = rot2(theta);
    let targets: Vec<Vec2> = points.iter().zip(flows).map(|(p, v)| p + v).collect();
    let t = points
        .iter()
        .zip(&targets)
        .fold(Vec2::zeros(), |a, (p, q)| a + (q - r * p))
        / points.len() as f64;
    let rss = planar_rss(points, &targets, &r, &t);
    Ok((PlanarRigidMotion::world(theta, t), rss))
}

fn planar_rss(points: &[Vec2], targets: &[Vec2], r: &Matrix2<f64>, t: &Vec2) -> f64 {
    points
        .iter()
        .zip(targets)
        .map(|(p, q)| (r * p + t - q).norm_squared())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigidmotion::planar_flow;
    use nalgebra::{Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn yaw(theta: f64) -> Matrix3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), theta).into_inner()
    }

    #[test]
    fn fit_identity() {
        let src = random_points(20, 1);
        let m = fit_rigid(&src, &src).unwrap();
        assert!((m.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(m.translation.norm() < 1e-12);
        assert!(rigid_residual(&m, &src, &src) < 1e-20);
    }

    #[test]
    fn fit_translation() {
        let src = random_points(20, 2);
        let dst: Vec<Vec3> = src.iter().map(|p| p + Vec3::new(0.1, 0.0, 0.0)).collect();
        let m = fit_rigid(&src, &dst).unwrap();
        assert!((m.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!((m.translation - Vec3::new(0.1, 0.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn fit_rotation() {
        let src = random_points(30, 3);
        let r = yaw(0.3);
        let dst: Vec<Vec3> = src.iter().map(|p| r * p).collect();
        let m = fit_rigid(&src, &dst).unwrap();
        assert!((m.to_planar().theta - 0.3).abs() < 1e-10);
        assert!(m.rotation.determinant() > 0.0);
    }

    #[test]
    fn fit_rejects_degenerate() {
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(fit_rigid(&line, &line), Err(Error::Degenerate(_))));
        assert!(fit_rigid(&line[..2], &line[..2]).is_err());
        assert!(matches!(fit_rigid(&line, &line[..3]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn fit_planar_points_need_reflection_fix() {
        // Coplanar source: the cross-covariance is rank 2 and a naive solution
        // may be a reflection.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let src: Vec<Vec3> = (0..10)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0))
            .collect();
        let r = yaw(-1.2);
        let dst: Vec<Vec3> = src.iter().map(|p| r * p + Vec3::new(1.0, 2.0, 3.0)).collect();
        let m = fit_rigid(&src, &dst).unwrap();
        assert!((m.rotation.determinant() - 1.0).abs() < 1e-12);
        assert!((m.rotation - r).amax() < 1e-10);
    }

    #[test]
    fn fit_is_global_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = random_points(40, 5);
        let dst: Vec<Vec3> = src
            .iter()
            .map(|p| yaw(0.4) * p + Vec3::new(0.5, -0.2, 0.1) + Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)))
            .collect();
        let m = fit_rigid(&src, &dst).unwrap();
        let best = rigid_residual(&m, &src, &dst);
        for _ in 0..1000 {
            let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let dr = Rotation3::from_scaled_axis(axis.normalize() * 1e-3 * rng.random_range(0.0..1.0f64)).into_inner();
            let dt = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 1e-3;
            let perturbed = RigidMotion3D {
                rotation: dr * m.rotation,
                translation: m.translation + dt,
            };
            assert!(rigid_residual(&perturbed, &src, &dst) >= best);
        }
    }

    #[test]
    fn icp_identical_clouds() {
        let src = random_points(200, 6);
        let r = icp(&src, &src, &IcpConfig::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        assert!((r.motion.rotation - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn icp_recovers_translation() {
        let src = random_points(500, 7);
        let dst: Vec<Vec3> = src.iter().map(|p| p + Vec3::new(0.2, 0.1, 0.0)).collect();
        let r = icp(&src, &dst, &IcpConfig::default()).unwrap();
        assert!((r.motion.translation - Vec3::new(0.2, 0.1, 0.0)).amax() < 1e-6);
        assert!((r.motion.rotation - Matrix3::identity()).amax() < 1e-6);
    }

    #[test]
    fn icp_objective_nonincreasing() {
        let src = random_points(300, 8);
        let dst: Vec<Vec3> = src.iter().map(|p| yaw(0.15) * p + Vec3::new(0.3, -0.2, 0.05)).collect();
        let r = icp(&src, &dst, &IcpConfig::default()).unwrap();
        for w in r.rms_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", r.rms_history);
        }
        assert!(r.final_rms() < 1e-9);
    }

    #[test]
    fn icp_rejects_empty() {
        assert!(icp(&[], &random_points(3, 1), &IcpConfig::default()).is_err());
        assert!(icp(&random_points(3, 1), &[], &IcpConfig::default()).is_err());
    }

    #[test]
    fn planar_fit_examples() {
        let pts = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.5), Vec2::new(-2.0, 3.0)];
        let zero = vec![Vec2::zeros(); 3];
        let (m, rss) = fit_planar_from_flow(&pts, &zero).unwrap();
        assert!(m.theta.abs() < 1e-15 && m.t().norm() < 1e-15 && rss < 1e-15);

        let truth = PlanarRigidMotion::world(0.2, Vec2::new(1.0, 0.0));
        let flows: Vec<Vec2> = pts.iter().map(|p| planar_flow(p, &Vec2::zeros(), &truth)).collect();
        let (m, rss) = fit_planar_from_flow(&pts, &flows).unwrap();
        assert!((m.theta - 0.2).abs() < 1e-10);
        assert!((m.t() - truth.t()).amax() < 1e-10);
        assert!(rss < 1e-10);
    }

    #[test]
    fn planar_fit_claim1_configuration_residual() {
        // Same flow at p and q (a θ = 0.3 motion applied locally about two
        // origins). Forcing θ = 0.3 in world coordinates leaves residual
        // ‖(I − R)Δo‖ / √2.
        let o_a = Vec2::new(0.0, 0.0);
        let o_b = Vec2::new(4.0, -1.0);
        let d = Vec2::new(0.5, 0.25);
        let m = PlanarRigidMotion::world(0.3, Vec2::new(0.2, 0.0));
        let v = planar_flow(&(o_a + d), &o_a, &m);
        let pts = vec![o_a + d, o_b + d];
        let (_, rss) = fit_planar_with_rotation(&pts, &[v, v], 0.3).unwrap();
        let closed = ((Matrix2::identity() - rot2(0.3)) * (o_a - o_b)).norm();
        assert!(rss > 0.0);
        assert!((rss * 2f64.sqrt() - closed).abs() < 1e-12);
        // With the rotation free, pure translation explains both points.
        let (free, rss_free) = fit_planar_from_flow(&pts, &[v, v]).unwrap();
        assert!(free.theta.abs() < 1e-12 && rss_free < 1e-12);
    }

    #[test]
    fn planar_fit_degenerate() {
        assert!(fit_planar_from_flow(&[Vec2::zeros()], &[Vec2::zeros()]).is_err());
        let same = vec![Vec2::new(1.0, 1.0); 3];
        assert!(fit_planar_from_flow(&same, &[Vec2::zeros(); 3]).is_err());
    }

    #[test]
    fn planar_fit_agrees_with_spatial_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let truth = PlanarRigidMotion::world(rng.random_range(-3.0..3.0), Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)));
            let pts: Vec<Vec2> = (0..12).map(|_| Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0))).collect();
            let flows: Vec<Vec2> = pts.iter().map(|p| planar_flow(p, &Vec2::zeros(), &truth)).collect();
            let (planar, _) = fit_planar_from_flow(&pts, &flows).unwrap();
            let src: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p.x, p.y, 0.0)).collect();
            let dst: Vec<Vec3> = pts.iter().zip(&flows).map(|(p, v)| Vec3::new(p.x + v.x, p.y + v.y, 0.0)).collect();
            let spatial = fit_rigid(&src, &dst).unwrap().to_planar();
            assert!(crate::rigidmotion::angle_diff(planar.theta, spatial.theta).abs() < 1e-9);
            assert!((planar.t() - spatial.t()).amax() < 1e-9);
        }
    }
}
