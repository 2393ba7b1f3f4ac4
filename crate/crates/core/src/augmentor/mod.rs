//! Mixed-reality scan augmentation: virtual cars are dropped into a real
//! scan's drivable area, the LIDAR is re-simulated at two instants, and the
//! exact motion of every point is recorded.

pub mod fixtures;
pub mod ground;
pub mod placement;
pub mod raycast;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ground::{drivable_region, ransac_ground, GroundPlane, OccupancyMap};
pub use placement::{ackermann_motion, ackermann_sample, normalize_mesh, place_cars, CarPose, PlacedCar, PlacementConfig};
pub use raycast::{raycast_scan, SensorModel};

use crate::decoder::{synthesize_gt, OrientedBox};
use crate::error::{Error, Result};
use crate::mix_seed;
use crate::pcio::{self, EgoMode, ObjectRecord, PointCloud, SceneManifest, TriangleMesh};
use crate::rigidmotion::{PlanarRigidMotion, Vec2, Vec3};
use crate::voxelgrid::GridSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub ransac_iters: usize,
    pub ransac_threshold: f64,
    /// Side of a drivable-region cell (m).
    pub drivable_cell: f64,
    /// Inclusive range for the number of cars per scene.
    pub cars: [usize; 2],
    pub placement: PlacementConfig,
    pub ego_mode: EgoMode,
    /// Speed and curvature ranges for a sampled ego motion.
    pub ego_speed: [f64; 2],
    pub ego_curvature: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            ransac_iters: 200,
            ransac_threshold: 0.15,
            drivable_cell: 1.0,
            cars: [1, 3],
            placement: PlacementConfig::default(),
            ego_mode: EgoMode::Identity,
            ego_speed: [0.0, 10.0],
            ego_curvature: [-0.02, 0.02],
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ransac_iters == 0 || !(self.ransac_threshold > 0.0) || !(self.drivable_cell > 0.0) {
            return Err(Error::Config("augment: ransac_iters, ransac_threshold and drivable_cell must be positive".into()));
        }
        if self.cars[0] == 0 || self.cars[0] > self.cars[1] {
            return Err(Error::Config(format!("augment: car count range {:?} must satisfy 1 <= lo <= hi", self.cars)));
        }
        self.placement.validate()
    }
}

/// Two scans with per-point flow for the first and the motion of every
/// object and of the sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedScenePair {
    pub scan_t: PointCloud,
    pub scan_t1: PointCloud,
    /// Flow of each point of `scan_t` into the sensor frame at t+1.
    pub flow: Vec<Vec3>,
    /// Boxes at frame t with world-frame motions mapping frame-t points to
    /// their frame-t+1 sensor coordinates.
    pub objects: Vec<(OrientedBox, PlanarRigidMotion)>,
    /// Pose of the sensor at t+1 expressed in the frame at t.
    pub ego: PlanarRigidMotion,
    pub ego_mode: EgoMode,
}

pub const SCAN_T_FILE: &str = "scan_t.bin";
pub const SCAN_T1_FILE: &str = "scan_t1.bin";
pub const FLOW_FILE: &str = "flow.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

impl AugmentedScenePair {
    pub fn boxes(&self) -> Vec<OrientedBox> {
        self.objects.iter().map(|(b, _)| *b).collect()
    }

    /// Writes both scans, the flow and a manifest into `dir`; returns the
    /// manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        pcio::write_velodyne_bin(&self.scan_t, dir.join(SCAN_T_FILE))?;
        pcio::write_velodyne_bin(&self.scan_t1, dir.join(SCAN_T1_FILE))?;
        pcio::write_flow(&self.flow, dir.join(FLOW_FILE))?;
        let manifest = SceneManifest {
            scan_t: SCAN_T_FILE.into(),
            scan_t1: SCAN_T1_FILE.into(),
            objects: self.objects.iter().map(|(b, m)| ObjectRecord::new(b, m)).collect(),
            ego: (&self.ego).into(),
            ego_mode: self.ego_mode,
            flow: Some(FLOW_FILE.into()),
        };
        let path = dir.join(MANIFEST_FILE);
        manifest.save(&path)?;
        Ok(path)
    }

    /// Loads a pair from its manifest. Without a flow file the flow is
    /// regenerated from the recorded motions.
    pub fn load(manifest_path: impl AsRef<Path>, grid: &GridSpec) -> Result<Self> {
        let m = SceneManifest::load(manifest_path)?;
        let scan_t = pcio::read_velodyne_bin(&m.scan_t)?;
        let scan_t1 = pcio::read_velodyne_bin(&m.scan_t1)?;
        let objects: Vec<_> = m.boxes().into_iter().zip(m.motions()).collect();
        let ego = m.ego_motion();
        let flow = match &m.flow {
            Some(p) => pcio::read_flow(p)?,
            None => synthesize_gt(&objects, &ego, &scan_t, grid)?.flow,
        };
        if flow.len() != scan_t.len() {
            return Err(Error::LengthMismatch {
                expected: scan_t.len(),
                actual: flow.len(),
            });
        }
        Ok(Self {
            scan_t,
            scan_t1,
            flow,
            objects,
            ego,
            ego_mode: m.ego_mode,
        })
    }
}

/// Everything produced while generating a pair.
#[derive(Clone, Debug)]
pub struct Augmentation {
    pub pair: AugmentedScenePair,
    pub plane: GroundPlane,
    pub cars: Vec<PlacedCar>,
    /// Car meshes posed at frame t, in the sensor frame at t.
    pub meshes_t: Vec<TriangleMesh>,
    /// Car meshes posed at frame t+1, in the sensor frame at t+1.
    pub meshes_t1: Vec<TriangleMesh>,
}

fn outside_boxes(cloud: &PointCloud, boxes: &[OrientedBox]) -> Vec<bool> {
    cloud
        .points
        .iter()
        .map(|p| !boxes.iter().any(|b| b.contains_ground(&Vec2::new(p.x, p.y))))
        .collect()
}

/// Generates one augmented pair from a real scan and a set of car meshes.
///
/// Scans are rounded to `f32` before the flow is computed so that the saved
/// files reproduce the ground truth exactly.
pub fn make_pair(
    original: &PointCloud,
    meshes: &[TriangleMesh],
    sensor: &SensorModel,
    cfg: &AugmentConfig,
    grid: &GridSpec,
    rng_seed: u64,
) -> Result<Augmentation> {
    cfg.validate()?;
    sensor.validate()?;
    original.validate()?;
    let plane = ransac_ground(original, cfg.ransac_iters, cfg.ransac_threshold, mix_seed(rng_seed, &[1]))?;
    let mut region = drivable_region(original, &plane, cfg.drivable_cell)?;
    // Cars must land inside the grid so their motion can be decoded.
    let (lo, hi) = grid.ground_bounds();
    let cell = region.cell;
    region.cells.retain(|c, _| {
        let (x0, y0) = (c[0] as f64 * cell, c[1] as f64 * cell);
        x0 >= lo.x && y0 >= lo.y && x0 + cell <= hi.x && y0 + cell <= hi.y
    });

    let normalized: Vec<(TriangleMesh, [f64; 3])> = meshes.iter().map(normalize_mesh).collect();
    let dims: Vec<[f64; 3]> = normalized.iter().map(|(_, d)| *d).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(rng_seed, &[2]));
    let k = rng.random_range(cfg.cars[0]..=cfg.cars[1]);
    let cars = place_cars(&region, &dims, |x, y| plane.z_at(x, y), k, &cfg.placement, mix_seed(rng_seed, &[3]))?;

    let ego = match cfg.ego_mode {
        EgoMode::Identity => PlanarRigidMotion::identity(),
        EgoMode::Sampled => {
            let origin = CarPose { position: [0.0, 0.0], yaw: 0.0 };
            ackermann_sample(cfg.ego_speed, cfg.ego_curvature, cfg.placement.dt, &origin, &mut rng)
        }
    };
    let ego_inv = ego.inverse()?;
    let ego_inv_3d = ego_inv.to_3d();

    let meshes_t: Vec<TriangleMesh> = cars.iter().map(|c| normalized[c.mesh_id].0.transformed(&c.placement())).collect();
    let meshes_t1: Vec<TriangleMesh> = cars
        .iter()
        .zip(&meshes_t)
        .map(|(c, m)| m.transformed(&c.motion.to_3d()).transformed(&ego_inv_3d))
        .collect();
    let boxes_t: Vec<OrientedBox> = cars.iter().map(PlacedCar::box_t).collect();
    let boxes_t1: Vec<OrientedBox> = cars.iter().map(PlacedCar::box_t1).collect();

    let sensor_t = SensorModel {
        rng_seed: mix_seed(sensor.rng_seed ^ rng_seed, &[5]),
        ..sensor.clone()
    };
    let sensor_t1 = SensorModel {
        rng_seed: mix_seed(sensor.rng_seed ^ rng_seed, &[6]),
        ..sensor.clone()
    };

    let scene_t = original.filtered(&outside_boxes(original, &boxes_t));
    let scan_t = raycast_scan(&meshes_t, &scene_t, &sensor_t)?.cloud.quantized();

    let mut scene_t1 = original.filtered(&outside_boxes(original, &boxes_t1));
    if cfg.ego_mode == EgoMode::Sampled {
        for p in &mut scene_t1.points {
            *p = ego_inv_3d.apply(p);
        }
    }
    let scan_t1 = raycast_scan(&meshes_t1, &scene_t1, &sensor_t1)?.cloud.quantized();

    let objects = cars
        .iter()
        .zip(&boxes_t)
        .map(|(c, b)| {
            let m = match cfg.ego_mode {
                EgoMode::Identity => c.motion,
                EgoMode::Sampled => ego_inv.compose(&c.motion)?,
            };
            Ok((*b, m))
        })
        .collect::<Result<Vec<(OrientedBox, PlanarRigidMotion)>>>()?;
    let flow = synthesize_gt(&objects, &ego, &scan_t, grid)?
        .flow
        .iter()
        .map(|v| v.map(|c| c as f32 as f64))
        .collect();

    Ok(Augmentation {
        pair: AugmentedScenePair {
            scan_t,
            scan_t1,
            flow,
            objects,
            ego,
            ego_mode: cfg.ego_mode,
        },
        plane,
        cars,
        meshes_t,
        meshes_t1,
    })
}
