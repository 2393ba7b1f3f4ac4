//! Planar and spatial rigid motions, their local/world reframing, and the
//! flow they induce.
//!
//! A planar motion `(θ, t)` expressed about an origin `o` moves a point `p`
//! to `o + R(θ)(p − o) + t`, so the induced flow is
//! `v = R(p − o) + t − (p − o)`. Reframing the same physical motion to a
//! different origin changes only the translation:
//!
//! ```text
//! t_world = (I − R) o + t_local        t_local = (R − I) o + t_world
//! ```
//!
//! The world form depends on where the motion happens; the local form does
//! not. [`check_claim1`], [`check_claim2`] and [`stationarity_experiment`]
//! make both statements executable.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Shortest signed difference `a − b`, wrapped.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

pub fn rot2(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Reference origin a planar motion is expressed about.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", content = "origin", rename_all = "snake_case")]
pub enum OriginTag {
    World,
    Local([f64; 2]),
}

impl OriginTag {
    pub fn origin(&self) -> Vec2 {
        match self {
            OriginTag::World => Vec2::zeros(),
            OriginTag::Local(o) => Vec2::new(o[0], o[1]),
        }
    }
}

/// Rotation about the vertical axis plus a ground-plane translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarRigidMotion {
    pub theta: f64,
    pub translation: [f64; 2],
    pub origin: OriginTag,
}

impl PlanarRigidMotion {
    pub fn world(theta: f64, translation: Vec2) -> Self {
        Self {
            theta: wrap_angle(theta),
            translation: [translation.x, translation.y],
            origin: OriginTag::World,
        }
    }

    pub fn local(theta: f64, translation: Vec2, origin: Vec2) -> Self {
        Self {
            theta: wrap_angle(theta),
            translation: [translation.x, translation.y],
            origin: OriginTag::Local([origin.x, origin.y]),
        }
    }

    pub fn identity() -> Self {
        Self::world(0.0, Vec2::zeros())
    }

    pub fn t(&self) -> Vec2 {
        Vec2::new(self.translation[0], self.translation[1])
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rot2(self.theta)
    }

    pub fn is_world(&self) -> bool {
        matches!(self.origin, OriginTag::World)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite()
            && self.translation.iter().all(|v| v.is_finite())
            && match self.origin {
                OriginTag::World => true,
                OriginTag::Local(o) => o.iter().all(|v| v.is_finite()),
            }
    }

    /// Moves a world-coordinate ground point, honoring the origin tag.
    pub fn transform_point(&self, p: Vec2) -> Vec2 {
        let o = self.origin.origin();
        o + self.rotation() * (p - o) + self.t()
    }

    /// Inverse of a world-tagged motion.
    pub fn inverse(&self) -> Result<Self> {
        self.require_world("inverse")?;
        let rt = self.rotation().transpose();
        Ok(Self::world(-self.theta, -(rt * self.t())))
    }

    /// `self ∘ other`: apply `other` first. Both must be world-tagged.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.require_world("compose")?;
        other.require_world("compose")?;
        Ok(Self::world(
            self.theta + other.theta,
            self.rotation() * other.t() + self.t(),
        ))
    }

    pub fn to_3d(&self) -> RigidMotion3D {
        let world = local_to_world(self);
        let t = world.t();
        RigidMotion3D {
            rotation: Rotation3::from_axis_angle(&Vector3::z_axis(), world.theta).into_inner(),
            translation: Vec3::new(t.x, t.y, 0.0),
        }
    }

    fn require_world(&self, what: &str) -> Result<()> {
        if self.is_world() {
            Ok(())
        } else {
            Err(Error::FrameMismatch(format!("{what} needs a world-tagged motion")))
        }
    }
}

/// Spatial rigid motion `x ↦ R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidMotion3D {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidMotion3D {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Checks `RᵀR = I` and `det R = +1` within `1e-9`.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "not a rotation: orthogonality error {ortho:e}, det {det}"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Rotation angle of `R` in radians.
    pub fn angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Projects onto the ground plane: yaw from the rotation, planar part of t.
    pub fn to_planar(&self) -> PlanarRigidMotion {
        let yaw = self.rotation[(1, 0)].atan2(self.rotation[(0, 0)]);
        PlanarRigidMotion::world(yaw, self.translation.xy())
    }
}

/// Anything that maps a local offset `d = p − o` to `R d + t`.
pub trait LocalDisplacement {
    fn displace(&self, d: &Vec3) -> Vec3;
}

impl LocalDisplacement for PlanarRigidMotion {
    fn displace(&self, d: &Vec3) -> Vec3 {
        let xy = self.rotation() * d.xy() + self.t();
        Vec3::new(xy.x, xy.y, d.z)
    }
}

impl LocalDisplacement for RigidMotion3D {
    fn displace(&self, d: &Vec3) -> Vec3 {
        self.rotation * d + self.translation
    }
}

/// Flow at `p` induced by motion `m` expressed about `o`:
/// `v = [R(p − o) + t] − (p − o)`.
///
/// The origin tag of a planar motion is not consulted; `o` is authoritative.
/// Planar motions yield zero vertical flow.
pub fn flow_from_local_motion<M: LocalDisplacement>(p: &Vec3, o: &Vec3, m: &M) -> Vec3 {
    let d = p - o;
    m.displace(&d) - d
}

/// Planar flow `R(p − o) + t − (p − o)` for ground-plane points.
pub fn planar_flow(p: &Vec2, o: &Vec2, m: &PlanarRigidMotion) -> Vec2 {
    let d = p - o;
    m.rotation() * d + m.t() - d
}

/// Re-expresses a motion about the world origin; world motions pass through.
pub fn local_to_world(m: &PlanarRigidMotion) -> PlanarRigidMotion {
    match m.origin {
        OriginTag::World => *m,
        OriginTag::Local(_) => {
            let o = m.origin.origin();
            let r = m.rotation();
            PlanarRigidMotion {
                theta: m.theta,
                translation: {
                    let t = (Matrix2::identity() - r) * o + m.t();
                    [t.x, t.y]
                },
                origin: OriginTag::World,
            }
        }
    }
}

/// Re-expresses a world motion about `origin`.
pub fn world_to_local(m: &PlanarRigidMotion, origin: Vec2) -> Result<PlanarRigidMotion> {
    m.require_world("world_to_local")?;
    let r = m.rotation();
    let t = (r - Matrix2::identity()) * origin + m.t();
    Ok(PlanarRigidMotion {
        theta: m.theta,
        translation: [t.x, t.y],
        origin: OriginTag::Local([origin.x, origin.y]),
    })
}

/// Outcome of testing whether one world motion can explain a common flow at
/// two distinct points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Claim1Report {
    /// The unique world motion explaining `v` at both points: `R = I, t = v`.
    pub unique_motion: PlanarRigidMotion,
    /// `Δo = p − q`.
    pub offset: Vec2,
    p: Vec2,
    v: Vec2,
}

impl Claim1Report {
    /// World translation needed at `x` to produce flow `v` with rotation `θ`.
    fn required_translation(&self, x: &Vec2, theta: f64) -> Vec2 {
        self.v - (rot2(theta) - Matrix2::identity()) * x
    }

    /// `‖t_p(θ) − t_q(θ)‖ = ‖(I − R(θ)) Δo‖`: how far apart the world
    /// translations demanded by the two points are for rotation `θ`.
    pub fn inconsistency(&self, theta: f64) -> f64 {
        let q = self.p - self.offset;
        (self.required_translation(&self.p, theta) - self.required_translation(&q, theta)).norm()
    }

    /// Whether a single world motion with rotation `θ` explains both points.
    pub fn explains_both(&self, theta: f64, tol: f64) -> bool {
        self.inconsistency(theta) <= tol
    }
}

/// Solves for the world motions that produce flow `v` at both `p` and `q`.
///
/// Subtracting the two flow equations leaves `(R − I)(p − q) = 0`. Written in
/// the unknowns `(cos θ − 1, sin θ)` this is a linear system with matrix
/// `[[Δx, −Δy], [Δy, Δx]]` of determinant `‖Δo‖² > 0`, so its only solution
/// is `cos θ = 1, sin θ = 0`, after which `t = v`.
pub fn check_claim1(p: Vec2, q: Vec2, v: Vec2) -> Result<Claim1Report> {
    let offset = p - q;
    if offset == Vec2::zeros() {
        return Err(Error::Precondition("p and q must differ".into()));
    }
    let system = Matrix2::new(offset.x, -offset.y, offset.y, offset.x);
    let u = system
        .lu()
        .solve(&Vec2::zeros())
        .ok_or_else(|| Error::Degenerate("singular reframing system".into()))?;
    let theta = u.y.atan2(1.0 + u.x);
    let t = v - (rot2(theta) - Matrix2::identity()) * p;
    Ok(Claim1Report {
        unique_motion: PlanarRigidMotion::world(theta, t),
        offset,
        p,
        v,
    })
}

/// Returns whether a local motion produces bitwise-identical flow at two
/// points that share local coordinates (`p − o_a == q − o_b` exactly).
pub fn check_claim2(p: Vec2, o_a: Vec2, q: Vec2, o_b: Vec2, m: &PlanarRigidMotion) -> Result<bool> {
    if p - o_a != q - o_b {
        return Err(Error::Precondition(format!(
            "local coordinates differ: {:?} vs {:?}",
            p - o_a,
            q - o_b
        )));
    }
    let vp = planar_flow(&p, &o_a, m);
    let vq = planar_flow(&q, &o_b, m);
    Ok(vp.x.to_bits() == vq.x.to_bits() && vp.y.to_bits() == vq.y.to_bits())
}

/// One row of the translation-target spread table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpreadRow {
    pub theta: f64,
    /// Max pairwise distance between world-frame translations inferred at
    /// different grid positions.
    pub world_spread: f64,
    /// Same for local-frame motions (translation and angle).
    pub local_spread: f64,
    /// `2 sin(|θ|/2) · max ‖Δo‖`.
    pub closed_form: f64,
}

/// Offsets of the patch points around each grid position. Dyadic so that
/// `(o + d) − o == d` holds exactly for integer-spaced grids.
const PATCH: [[f64; 2]; 5] = [[0.0, 0.0], [0.25, 0.0], [0.0, 0.25], [-0.25, 0.0], [0.0, -0.5]];
const PATCH_TRANSLATION: [f64; 2] = [0.5, -0.25];

/// Places the same local motion patch at every node of a `grid_n × grid_n`
/// lattice, infers the motion from the resulting flow both in world and in
/// local coordinates, and reports how much the inferred translations vary
/// across positions for each rotation.
pub fn stationarity_experiment(grid_n: usize, spacing: f64, thetas: &[f64]) -> Result<Vec<SpreadRow>> {
    if grid_n < 2 {
        return Err(Error::InvalidArgument("grid_n must be at least 2".into()));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidArgument("spacing must be positive".into()));
    }
    let positions: Vec<Vec2> = (0..grid_n)
        .flat_map(|i| (0..grid_n).map(move |j| Vec2::new(i as f64 * spacing, j as f64 * spacing)))
        .collect();
    let max_offset = positions
        .iter()
        .flat_map(|a| positions.iter().map(move |b| (a - b).norm()))
        .fold(0.0, f64::max);

    thetas
        .iter()
        .map(|&theta| {
            let patch_motion = PlanarRigidMotion::world(theta, Vec2::from(PATCH_TRANSLATION));
            let mut world = Vec::with_capacity(positions.len());
            let mut local = Vec::with_capacity(positions.len());
            for o in &positions {
                let pts: Vec<Vec2> = PATCH.iter().map(|d| o + Vec2::from(*d)).collect();
                let flows: Vec<Vec2> = pts.iter().map(|p| planar_flow(p, o, &patch_motion)).collect();
                let (w, _) = crate::baselines::fit_planar_from_flow(&pts, &flows)?;
                let local_pts: Vec<Vec2> = pts.iter().map(|p| p - o).collect();
                let (l, _) = crate::baselines::fit_planar_from_flow(&local_pts, &flows)?;
                world.push(w);
                local.push(l);
            }
            let spread = |ms: &[PlanarRigidMotion]| {
                let mut s: f64 = 0.0;
                for a in ms {
                    for b in ms {
                        s = s.max((a.t() - b.t()).norm()).max(angle_diff(a.theta, b.theta).abs());
                    }
                }
                s
            };
            Ok(SpreadRow {
                theta,
                world_spread: spread(&world),
                local_spread: spread(&local),
                closed_form: 2.0 * (theta.abs() / 2.0).sin() * max_offset,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_angle_ties_to_plus_pi() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.1 - 2.0 * PI) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pure_translation_flow() {
        let m = PlanarRigidMotion::world(0.0, Vec2::new(0.3, 0.0));
        for p in [Vec3::new(1.0, 2.0, 3.0), Vec3::new(-5.0, 0.0, 1.0)] {
            let v = flow_from_local_motion(&p, &Vec3::new(0.5, 0.5, 0.0), &m);
            assert!((v - Vec3::new(0.3, 0.0, 0.0)).amax() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn_flow() {
        let m = PlanarRigidMotion::world(PI / 2.0, Vec2::zeros());
        let v = flow_from_local_motion(&Vec3::new(2.0, 0.0, 0.0), &Vec3::new(1.0, 0.0, 0.0), &m);
        assert!((v - Vec3::new(-1.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn flow_at_origin_is_translation() {
        let m = PlanarRigidMotion::world(1.1, Vec2::new(0.4, -0.2));
        let o = Vec3::new(3.0, 4.0, 0.0);
        assert_eq!(flow_from_local_motion(&o, &o, &m), Vec3::new(0.4, -0.2, 0.0));
    }

    #[test]
    fn flow_from_3d_motion() {
        let m = RigidMotion3D {
            rotation: Matrix3::identity(),
            translation: Vec3::new(0.0, 0.0, 1.0),
        };
        let v = flow_from_local_motion(&Vec3::new(1.0, 1.0, 1.0), &Vec3::zeros(), &m);
        assert_eq!(v, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn local_to_world_examples() {
        let m = PlanarRigidMotion::local(0.0, Vec2::new(1.0, 2.0), Vec2::new(5.0, 5.0));
        assert_eq!(local_to_world(&m).t(), Vec2::new(1.0, 2.0));

        let m = PlanarRigidMotion::local(PI / 2.0, Vec2::new(-1.0, 1.0), Vec2::new(1.0, 0.0));
        let w = local_to_world(&m);
        assert!(w.t().norm() < 1e-15);
        assert!(w.is_world());
        assert_eq!(w.theta, m.theta);

        let m = PlanarRigidMotion::local(2.0, Vec2::new(0.7, -0.1), Vec2::zeros());
        assert_eq!(local_to_world(&m).t(), m.t());
    }

    #[test]
    fn world_to_local_examples() {
        let w = PlanarRigidMotion::world(PI / 2.0, Vec2::zeros());
        let l = world_to_local(&w, Vec2::new(1.0, 0.0)).unwrap();
        assert!((l.t() - Vec2::new(-1.0, 1.0)).norm() < 1e-15);

        let w = PlanarRigidMotion::world(0.0, Vec2::new(3.0, -4.0));
        assert_eq!(world_to_local(&w, Vec2::new(9.0, 1.0)).unwrap().t(), Vec2::new(3.0, -4.0));

        let local = PlanarRigidMotion::local(0.2, Vec2::zeros(), Vec2::zeros());
        assert!(matches!(world_to_local(&local, Vec2::zeros()), Err(Error::FrameMismatch(_))));
    }

    #[test]
    fn claim1_unique_motion_is_pure_translation() {
        let r = check_claim1(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.5, 0.0)).unwrap();
        assert_eq!(r.unique_motion.theta, 0.0);
        assert_eq!(r.unique_motion.t(), Vec2::new(0.5, 0.0));
        assert!(r.explains_both(0.0, 0.0));
        assert!(!r.explains_both(0.3, 1e-6));
        assert!(check_claim1(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0), Vec2::zeros()).is_err());
    }

    #[test]
    fn claim1_oracle_theta_grid() {
        // Exhaustive scan: for each θ the best shared translation is the mean
        // of the two required translations; its residual vanishes only at θ = 0.
        let p = Vec2::new(0.0, 0.0);
        let q = Vec2::new(1.0, 0.0);
        let v = Vec2::new(0.5, 0.0);
        let report = check_claim1(p, q, v).unwrap();
        for k in -314..=314 {
            let theta = k as f64 * 0.01;
            let r = rot2(theta);
            let tp = v - (r * p - p);
            let tq = v - (r * q - q);
            let t = (tp + tq) / 2.0;
            let res = ((r * p + t - p - v).norm_squared() + (r * q + t - q - v).norm_squared()).sqrt();
            if k == 0 {
                assert!(res < 1e-15);
            } else {
                assert!(res > 1e-4, "theta {theta} residual {res}");
            }
            assert!((report.inconsistency(theta) - (tp - tq).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn claim1_local_motion_configuration() {
        // Flow produced by a θ = 0.3 local motion at p (about o_a) and at q
        // (about o_b) is identical, yet no world motion with θ = 0.3 fits both.
        let o_a = Vec2::new(2.0, 1.0);
        let o_b = Vec2::new(-1.0, 3.0);
        let d = Vec2::new(0.25, 0.5);
        let m = PlanarRigidMotion::world(0.3, Vec2::new(0.1, 0.2));
        let (p, q) = (o_a + d, o_b + d);
        let v = planar_flow(&p, &o_a, &m);
        let report = check_claim1(p, q, v).unwrap();
        let expected = 2.0 * (0.15f64).sin() * (o_a - o_b).norm();
        assert!(report.inconsistency(0.3) > 0.0);
        assert!((report.inconsistency(0.3) - expected).abs() < 1e-12);
    }

    #[test]
    fn claim2_precondition() {
        let m = PlanarRigidMotion::world(0.4, Vec2::new(1.0, 0.0));
        let ok = check_claim2(
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(6.0, 1.0),
            Vec2::new(5.0, 0.0),
            &m,
        )
        .unwrap();
        assert!(ok);
        let err = check_claim2(
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(6.0, 1.5),
            Vec2::new(5.0, 0.0),
            &m,
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn stationarity_examples() {
        let rows = stationarity_experiment(10, 1.0, &[0.0, 0.5]).unwrap();
        assert!(rows[0].world_spread < 1e-12);
        let expected = 2.0 * (0.25f64).sin() * Vec2::new(9.0, 9.0).norm();
        assert!((rows[1].world_spread - expected).abs() < 1e-9);
        assert!((rows[1].closed_form - expected).abs() < 1e-12);
        assert_eq!(rows[0].local_spread, 0.0);
        assert_eq!(rows[1].local_spread, 0.0);
        assert!(stationarity_experiment(1, 1.0, &[0.1]).is_err());
    }

    #[test]
    fn planar_inverse_and_compose() {
        let m = PlanarRigidMotion::world(0.7, Vec2::new(1.0, -2.0));
        let id = m.compose(&m.inverse().unwrap()).unwrap();
        assert!(id.theta.abs() < 1e-15 && id.t().norm() < 1e-15);
        let p = Vec2::new(3.0, 4.0);
        let back = m.inverse().unwrap().transform_point(m.transform_point(p));
        assert!((back - p).norm() < 1e-14);
    }

    #[test]
    fn rigid3d_validation_and_projection() {
        let m = PlanarRigidMotion::world(0.3, Vec2::new(1.0, 2.0)).to_3d();
        assert!(RigidMotion3D::new(m.rotation, m.translation).is_ok());
        let p = m.to_planar();
        assert!((p.theta - 0.3).abs() < 1e-15);
        let mut bad = m.rotation;
        bad[(0, 0)] = -bad[(0, 0)];
        assert!(RigidMotion3D::new(bad, Vec3::zeros()).is_err());
    }

    fn motion() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
        (-PI..PI, -50.0..50.0f64, -50.0..50.0f64, -80.0..80.0f64, -80.0..80.0f64)
    }

    proptest! {
        #[test]
        fn reframing_round_trip((theta, tx, ty, ox, oy) in motion()) {
            let m = PlanarRigidMotion::world(theta, Vec2::new(tx, ty));
            let o = Vec2::new(ox, oy);
            let back = local_to_world(&world_to_local(&m, o).unwrap());
            prop_assert_eq!(back.theta, m.theta);
            prop_assert!((back.t() - m.t()).amax() < 1e-12);
        }

        #[test]
        fn flow_is_frame_independent((theta, tx, ty, ox, oy) in motion(), px in -40.0..40.0f64, py in -40.0..40.0f64) {
            // Same physical motion, expressed about two different origins,
            // induces the same flow.
            let local_a = PlanarRigidMotion::local(theta, Vec2::new(tx, ty), Vec2::new(ox, oy));
            let world = local_to_world(&local_a);
            let o_b = Vec2::new(px + 1.0, py - 2.0);
            let local_b = world_to_local(&world, o_b).unwrap();
            let p = Vec2::new(px, py);
            let va = planar_flow(&p, &Vec2::new(ox, oy), &local_a);
            let vb = planar_flow(&p, &o_b, &local_b);
            prop_assert!((va - vb).amax() < 1e-9);
        }

        #[test]
        fn two_sine_law(theta in -PI..PI, dx in -100.0..100.0f64, dy in -100.0..100.0f64) {
            let d = Vec2::new(dx, dy);
            let lhs = ((Matrix2::identity() - rot2(theta)) * d).norm();
            let rhs = 2.0 * (theta.abs() / 2.0).sin() * d.norm();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
