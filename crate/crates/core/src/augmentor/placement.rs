//! Virtual car placement and kinematic motion sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ground::OccupancyMap;
use crate::decoder::{ground_iou, OrientedBox};
use crate::error::{Error, Result};
use crate::pcio::TriangleMesh;
use crate::rigidmotion::{local_to_world, rot2, PlanarRigidMotion, RigidMotion3D, Vec2, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    /// Speed range (m/s).
    pub speed: [f64; 2],
    /// Curvature range (1/m).
    pub curvature: [f64; 2],
    /// Time between the two frames (s).
    pub dt: f64,
    /// Rejection-sampling budget per requested car.
    pub attempts_per_car: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            speed: [2.0, 12.0],
            curvature: [-0.05, 0.05],
            dt: 0.1,
            attempts_per_car: 500,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.speed) || !ordered(self.curvature) {
            return Err(Error::Config("placement: speed and curvature ranges must be finite with lo <= hi".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("placement: dt must be positive".into()));
        }
        if self.attempts_per_car == 0 {
            return Err(Error::Config("placement: attempts_per_car must be positive".into()));
        }
        Ok(())
    }
}

/// Planar pose of a car: footprint center and heading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarPose {
    pub position: [f64; 2],
    pub yaw: f64,
}

/// Motion over `dt` of a car following a circular arc, as a world-frame
/// rigid motion. The arc is traced by the footprint center.
pub fn ackermann_motion(speed: f64, curvature: f64, dt: f64, pose: &CarPose) -> PlanarRigidMotion {
    let s = speed * dt;
    let theta = s * curvature;
    let chord = if curvature == 0.0 {
        Vec2::new(s, 0.0)
    } else {
        Vec2::new(theta.sin() / curvature, (1.0 - theta.cos()) / curvature)
    };
    let center = Vec2::from(pose.position);
    local_to_world(&PlanarRigidMotion::local(theta, rot2(pose.yaw) * chord, center))
}

/// Draws speed and curvature uniformly from their ranges.
pub fn ackermann_sample(speed: [f64; 2], curvature: [f64; 2], dt: f64, pose: &CarPose, rng: &mut impl Rng) -> PlanarRigidMotion {
    let s = uniform(speed, rng);
    let k = uniform(curvature, rng);
    ackermann_motion(s, k, dt, pose)
}

fn uniform(r: [f64; 2], rng: &mut impl Rng) -> f64 {
    if r[0] < r[1] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Recenters a mesh so its footprint is centered on the origin and its
/// lowest vertex sits at z = 0. Returns the mesh and its length, width and
/// height.
pub fn normalize_mesh(mesh: &TriangleMesh) -> (TriangleMesh, [f64; 3]) {
    let (lo, hi) = mesh.bounds();
    let shift = Vec3::new(-(lo.x + hi.x) / 2.0, -(lo.y + hi.y) / 2.0, -lo.z);
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        *v += shift;
    }
    (out, [hi.x - lo.x, hi.y - lo.y, hi.z - lo.z])
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacedCar {
    pub mesh_id: usize,
    pub pose: CarPose,
    /// Ground height under the footprint center.
    pub ground_z: f64,
    /// Length, width and height of the normalized mesh.
    pub dims: [f64; 3],
    /// World-frame motion from frame t to frame t+1.
    pub motion: PlanarRigidMotion,
}

/// Margin added to the box around a car so returns on its outer surface fall
/// inside the box despite rounding.
pub const BOX_MARGIN: f64 = 1e-6;

impl PlacedCar {
    pub fn box_t(&self) -> OrientedBox {
        let [l, w, h] = self.dims;
        OrientedBox::new(
            Vec3::new(self.pose.position[0], self.pose.position[1], self.ground_z + h / 2.0),
            [l + 2.0 * BOX_MARGIN, w + 2.0 * BOX_MARGIN, h + 2.0 * BOX_MARGIN],
            self.pose.yaw,
            1.0,
        )
    }

    pub fn box_t1(&self) -> OrientedBox {
        let b = self.box_t();
        let c = self.motion.transform_point(Vec2::new(b.center.x, b.center.y));
        OrientedBox::new(Vec3::new(c.x, c.y, b.center.z), b.size, b.yaw + self.motion.theta, b.score)
    }

    /// Rigid transform taking the normalized mesh to its pose at frame t.
    pub fn placement(&self) -> RigidMotion3D {
        let mut m = PlanarRigidMotion::world(self.pose.yaw, Vec2::from(self.pose.position)).to_3d();
        m.translation.z += self.ground_z;
        m
    }
}

/// Places `k` cars by rejection sampling. Each car's footprint must lie in
/// drivable cells at both frames and must not overlap any other car at the
/// same frame.
pub fn place_cars(
    region: &OccupancyMap,
    dims: &[[f64; 3]],
    ground_z: impl Fn(f64, f64) -> f64,
    k: usize,
    cfg: &PlacementConfig,
    rng_seed: u64,
) -> Result<Vec<PlacedCar>> {
    cfg.validate()?;
    if dims.is_empty() {
        return Err(Error::InvalidArgument("no car meshes to place".into()));
    }
    let cells = region.drivable_cells();
    if cells.is_empty() {
        return Err(Error::PlacementExhausted {
            attempts: 0,
            placed: 0,
            requested: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let budget = cfg.attempts_per_car * k.max(1);
    let mut placed: Vec<PlacedCar> = Vec::with_capacity(k);
    let mut attempts = 0;
    while placed.len() < k {
        if attempts == budget {
            return Err(Error::PlacementExhausted {
                attempts,
                placed: placed.len(),
                requested: k,
            });
        }
        attempts += 1;
        let mesh_id = rng.random_range(0..dims.len());
        let cell = cells[rng.random_range(0..cells.len())];
        let x = (cell[0] as f64 + rng.random::<f64>()) * region.cell;
        let y = (cell[1] as f64 + rng.random::<f64>()) * region.cell;
        let pose = CarPose {
            position: [x, y],
            yaw: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        };
        let motion = ackermann_sample(cfg.speed, cfg.curvature, cfg.dt, &pose, &mut rng);
        let car = PlacedCar {
            mesh_id,
            pose,
            ground_z: ground_z(x, y),
            dims: dims[mesh_id],
            motion,
        };
        let (b0, b1) = (car.box_t(), car.box_t1());
        if !region.polygon_drivable(&b0.footprint()) || !region.polygon_drivable(&b1.footprint()) {
            continue;
        }
        if placed.iter().any(|o| ground_iou(&o.box_t(), &b0) > 0.0 || ground_iou(&o.box_t1(), &b1) > 0.0) {
            continue;
        }
        placed.push(car);
    }
    Ok(placed)
}
