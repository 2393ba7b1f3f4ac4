//! Synthetic inputs for demos and tests: a street scene scanned by the
//! simulated sensor and a low-poly car with glass windows.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::raycast::{raycast_returns, OpaqueScene, SensorModel};
use crate::error::{Error, Result};
use crate::pcio::{PointCloud, TriangleMesh};
use crate::rigidmotion::Vec3;

/// Height of the synthetic ground below the sensor (m).
pub const SENSOR_HEIGHT: f64 = 1.73;

struct Builder {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    transparent: Vec<bool>,
}

impl Builder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
            transparent: Vec::new(),
        }
    }

    /// Quad with corners in counter-clockwise order seen from outside.
    fn quad(&mut self, c: [Vec3; 4], glass: bool) {
        let b = self.vertices.len();
        self.vertices.extend(c);
        self.triangles.push([b, b + 1, b + 2]);
        self.triangles.push([b, b + 2, b + 3]);
        self.transparent.extend([glass, glass]);
    }

    /// Axis-aligned box; `glass` selects which of the faces
    /// `[-x, +x, -y, +y, -z, +z]` are transparent, `skip` which are omitted.
    fn cuboid(&mut self, lo: Vec3, hi: Vec3, glass: [bool; 6], skip: [bool; 6]) {
        let v = |x: bool, y: bool, z: bool| Vec3::new(if x { hi.x } else { lo.x }, if y { hi.y } else { lo.y }, if z { hi.z } else { lo.z });
        let faces = [
            [v(false, false, false), v(false, false, true), v(false, true, true), v(false, true, false)],
            [v(true, false, false), v(true, true, false), v(true, true, true), v(true, false, true)],
            [v(false, false, false), v(true, false, false), v(true, false, true), v(false, false, true)],
            [v(false, true, false), v(false, true, true), v(true, true, true), v(true, true, false)],
            [v(false, false, false), v(false, true, false), v(true, true, false), v(true, false, false)],
            [v(false, false, true), v(true, false, true), v(true, true, true), v(false, true, true)],
        ];
        for (i, f) in faces.into_iter().enumerate() {
            if !skip[i] {
                self.quad(f, glass[i]);
            }
        }
    }

    fn finish(self) -> TriangleMesh {
        TriangleMesh::new(self.vertices, self.triangles, self.transparent).expect("fixture mesh is valid")
    }
}

/// A 4.2 m × 1.8 m × 1.5 m car: an opaque body and a cabin whose sides,
/// windshield and rear window are glass.
pub fn car_mesh() -> TriangleMesh {
    let mut b = Builder::new();
    b.cuboid(Vec3::new(-2.1, -0.9, 0.0), Vec3::new(2.1, 0.9, 1.0), [false; 6], [false; 6]);
    let glass = [true, true, true, true, false, false];
    let skip = [false, false, false, false, true, false];
    b.cuboid(Vec3::new(-1.2, -0.8, 1.0), Vec3::new(0.8, 0.8, 1.5), glass, skip);
    b.finish()
}

/// The car as Wavefront OBJ text plus its material library.
pub fn car_obj_text(mtl_name: &str) -> (String, String) {
    let mesh = car_mesh();
    let mut obj = format!("mtllib {mtl_name}\no car\n");
    for v in &mesh.vertices {
        writeln!(obj, "v {} {} {}", v.x, v.y, v.z).expect("write to string");
    }
    let mut current = None;
    for (t, glass) in mesh.triangles.iter().zip(&mesh.transparent) {
        let mat = if *glass { "glass" } else { "paint" };
        if current != Some(mat) {
            writeln!(obj, "usemtl {mat}").expect("write to string");
            current = Some(mat);
        }
        writeln!(obj, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("write to string");
    }
    let mtl = "newmtl paint\nKd 0.6 0.1 0.1\nd 1.0\n\nnewmtl glass\nKd 0.2 0.3 0.4\nd 0.3\n".to_string();
    (obj, mtl)
}

/// Writes `car.obj` and `car.mtl` into `dir` and returns the OBJ path.
pub fn write_car_obj(dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (obj, mtl) = car_obj_text("car.mtl");
    let obj_path = dir.join("car.obj");
    fs::write(&obj_path, obj).map_err(|e| Error::io(&obj_path, e))?;
    let mtl_path = dir.join("car.mtl");
    fs::write(&mtl_path, mtl).map_err(|e| Error::io(&mtl_path, e))?;
    Ok(obj_path)
}

/// Flat ground with building blocks along both sides of a street running
/// along x and a few poles. Block layout depends on `seed`.
pub fn street_scene(seed: u64) -> Vec<TriangleMesh> {
    let z0 = -SENSOR_HEIGHT;
    let mut ground = Builder::new();
    let g = 100.0;
    ground.quad(
        [Vec3::new(-g, -g, z0), Vec3::new(g, -g, z0), Vec3::new(g, g, z0), Vec3::new(-g, g, z0)],
        false,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Builder::new();
    for side in [-1.0, 1.0] {
        let mut x = -60.0;
        while x < 60.0 {
            let len = rng.random_range(8.0..20.0);
            let setback = rng.random_range(12.0..18.0);
            let height = rng.random_range(4.0..12.0);
            let (y0, y1) = if side > 0.0 { (setback, setback + 10.0) } else { (-setback - 10.0, -setback) };
            blocks.cuboid(Vec3::new(x, y0, z0), Vec3::new(x + len, y1, z0 + height), [false; 6], [false; 6]);
            x += len + rng.random_range(2.0..6.0);
        }
    }
    for _ in 0..6 {
        let x = rng.random_range(-40.0..40.0);
        let y = if rng.random::<bool>() { 9.0 } else { -9.0 };
        blocks.cuboid(Vec3::new(x, y, z0), Vec3::new(x + 0.3, y + 0.3, z0 + 4.0), [false; 6], [false; 6]);
    }
    vec![ground.finish(), blocks.finish()]
}

/// Scan of [`street_scene`] with reflectance drawn uniformly.
pub fn synthetic_scan(sensor: &SensorModel, seed: u64) -> Result<PointCloud> {
    let scene = OpaqueScene::new(&street_scene(seed));
    let returns = raycast_returns(&scene, sensor)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = returns.iter().map(|r| r.point).collect();
    let reflectance = returns.iter().map(|_| rng.random_range(0.0f32..1.0)).collect();
    PointCloud::new(points, Some(reflectance), "sensor")
}
