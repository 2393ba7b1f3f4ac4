//! Reading and writing scans, flow files, meshes and scene manifests.
//!
//! Scans use the KITTI velodyne layout: consecutive 16-byte records of four
//! little-endian `f32` values `(x, y, z, reflectance)`. Flow files use the
//! same idea with three `f32` per point.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoder::OrientedBox;
use crate::error::{Error, Result};
use crate::rigidmotion::{PlanarRigidMotion, Vec2, Vec3};

const RECORD_BYTES: usize = 16;
const FLOW_RECORD_BYTES: usize = 12;

/// Ordered points in one coordinate frame, with optional reflectance.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub reflectance: Option<Vec<f32>>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, reflectance: Option<Vec<f32>>, frame_id: impl Into<String>) -> Result<Self> {
        let cloud = Self {
            points,
            reflectance,
            frame_id: frame_id.into(),
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        Self::new(points, None, "sensor")
    }

    pub fn empty(frame_id: impl Into<String>) -> Self {
        Self {
            points: Vec::new(),
            reflectance: None,
            frame_id: frame_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn reflectance_at(&self, i: usize) -> f32 {
        self.reflectance.as_ref().map_or(0.0, |r| r[i])
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = &self.reflectance {
            if r.len() != self.points.len() {
                return Err(Error::LengthMismatch {
                    expected: self.points.len(),
                    actual: r.len(),
                });
            }
            if let Some(i) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
        }
        if let Some(i) = self.points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(())
    }

    /// Keeps the points for which `keep` is true, preserving order.
    pub fn filtered(&self, keep: &[bool]) -> Self {
        let points = self.points.iter().zip(keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
        let reflectance = self
            .reflectance
            .as_ref()
            .map(|r| r.iter().zip(keep).filter(|(_, k)| **k).map(|(v, _)| *v).collect());
        Self {
            points,
            reflectance,
            frame_id: self.frame_id.clone(),
        }
    }

    /// Rounds every coordinate to the nearest `f32`, the precision of the
    /// on-disk scan format.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            *p = p.map(|c| c as f32 as f64);
        }
        out
    }

    /// Appends another cloud; missing reflectance is filled with zeros.
    pub fn extend(&mut self, other: &PointCloud) {
        if self.reflectance.is_some() || other.reflectance.is_some() {
            let n = self.points.len();
            let mut r = self.reflectance.take().unwrap_or_else(|| vec![0.0; n]);
            match &other.reflectance {
                Some(o) => r.extend_from_slice(o),
                None => r.extend(std::iter::repeat_n(0.0, other.len())),
            }
            self.reflectance = Some(r);
        }
        self.points.extend_from_slice(&other.points);
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn f32_at(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

/// Reads a KITTI-layout scan. Point order follows the file.
pub fn read_velodyne_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (bytes.len() / RECORD_BYTES * RECORD_BYTES) as u64,
            reason: format!("length {} is not a multiple of {RECORD_BYTES}", bytes.len()),
        });
    }
    let n = bytes.len() / RECORD_BYTES;
    let mut points = Vec::with_capacity(n);
    let mut reflectance = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let v = [f32_at(rec, 0), f32_at(rec, 4), f32_at(rec, 8), f32_at(rec, 12)];
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        points.push(Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64));
        reflectance.push(v[3]);
    }
    Ok(PointCloud {
        points,
        reflectance: Some(reflectance),
        frame_id: "sensor".into(),
    })
}

/// Writes a KITTI-layout scan; absent reflectance is written as zero.
///
/// Coordinates are narrowed to `f32`; clouds read from a scan file round-trip
/// bit-exactly.
pub fn write_velodyne_bin(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    cloud.validate()?;
    let mut out = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for (i, p) in cloud.points.iter().enumerate() {
        let rec = [p.x as f32, p.y as f32, p.z as f32, cloud.reflectance_at(i)];
        if !rec.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        for v in rec {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an `N×3` little-endian `f32` flow file.
pub fn read_flow(path: impl AsRef<Path>) -> Result<Vec<Vec3>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() % FLOW_RECORD_BYTES != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (bytes.len() / FLOW_RECORD_BYTES * FLOW_RECORD_BYTES) as u64,
            reason: format!("length {} is not a multiple of {FLOW_RECORD_BYTES}", bytes.len()),
        });
    }
    bytes
        .chunks_exact(FLOW_RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let v = [f32_at(rec, 0), f32_at(rec, 4), f32_at(rec, 8)];
            if v.iter().all(|x| x.is_finite()) {
                Ok(Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64))
            } else {
                Err(Error::NonFinite { index: i })
            }
        })
        .collect()
}

pub fn write_flow(flow: &[Vec3], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(flow.len() * FLOW_RECORD_BYTES);
    for (i, v) in flow.iter().enumerate() {
        let rec = [v.x as f32, v.y as f32, v.z as f32];
        if !rec.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        for x in rec {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Triangle soup with a per-triangle transparency bit.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub transparent: Vec<bool>,
}

/// Triangles with area below this (m²) are dropped at load time.
const MIN_TRIANGLE_AREA: f64 = 1e-12;

impl TriangleMesh {
    /// Builds a mesh, checking indices and dropping zero-area triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, transparent: Vec<bool>) -> Result<Self> {
        if triangles.len() != transparent.len() {
            return Err(Error::LengthMismatch {
                expected: triangles.len(),
                actual: transparent.len(),
            });
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::InvalidArgument(format!("triangle {t:?} references a missing vertex")));
        }
        let (triangles, transparent): (Vec<_>, Vec<_>) = triangles
            .into_iter()
            .zip(transparent)
            .filter(|(t, _)| {
                let [a, b, c] = t.map(|i| vertices[i]);
                (b - a).cross(&(c - a)).norm() / 2.0 > MIN_TRIANGLE_AREA
            })
            .unzip();
        Ok(Self {
            vertices,
            triangles,
            transparent,
        })
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|v| self.vertices[v])
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Axis-aligned bounds `(min, max)`; zeros for an empty mesh.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        if self.vertices.is_empty() {
            return (Vec3::zeros(), Vec3::zeros());
        }
        self.vertices.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), v| (lo.inf(v), hi.sup(v)),
        )
    }

    /// Applies `x ↦ R x + t` to every vertex.
    pub fn transformed(&self, m: &crate::rigidmotion::RigidMotion3D) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| m.apply(v)).collect(),
            triangles: self.triangles.clone(),
            transparent: self.transparent.clone(),
        }
    }
}

/// Reads a Wavefront OBJ mesh and its MTL sidecar. Polygons are
/// fan-triangulated; faces whose material has dissolve `d < 1` (or `Tr > 0`)
/// are transparent.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let mesh_err = |reason: String| Error::Mesh {
        path: path.to_path_buf(),
        reason,
    };
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if ext.as_deref() != Some("obj") {
        return Err(mesh_err("unsupported mesh format (expected .obj)".into()));
    }
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let opts = tobj::LoadOptions {
        triangulate: true,
        single_index: false,
        ignore_points: true,
        ignore_lines: true,
    };
    let (models, materials) = tobj::load_obj(path, &opts).map_err(|e| match e {
        tobj::LoadError::FaceVertexOutOfBounds => mesh_err("dangling vertex index".into()),
        other => mesh_err(other.to_string()),
    })?;
    let materials = materials.unwrap_or_else(|e| {
        log::warn!("{}: materials unavailable ({e}); treating all faces as opaque", path.display());
        Vec::new()
    });
    let see_through: Vec<bool> = materials
        .iter()
        .map(|m| {
            let dissolve = m.dissolve.unwrap_or(1.0);
            let tr = m.unknown_param.get("Tr").and_then(|v| v.trim().parse::<f64>().ok()).unwrap_or(0.0);
            dissolve < 1.0 || tr > 0.0
        })
        .collect();

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut transparent = Vec::new();
    for model in &models {
        let base = vertices.len();
        let mesh = &model.mesh;
        vertices.extend(mesh.positions.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])));
        let flag = mesh.material_id.and_then(|id| see_through.get(id).copied()).unwrap_or(false);
        for tri in mesh.indices.chunks_exact(3) {
            triangles.push([base + tri[0] as usize, base + tri[1] as usize, base + tri[2] as usize]);
            transparent.push(flag);
        }
    }
    TriangleMesh::new(vertices, triangles, transparent).map_err(|e| mesh_err(e.to_string()))
}

/// Planar motion as stored in manifests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl From<&PlanarRigidMotion> for MotionRecord {
    fn from(m: &PlanarRigidMotion) -> Self {
        let w = crate::rigidmotion::local_to_world(m);
        Self {
            theta: w.theta,
            tx: w.translation[0],
            ty: w.translation[1],
        }
    }
}

impl From<MotionRecord> for PlanarRigidMotion {
    fn from(r: MotionRecord) -> Self {
        PlanarRigidMotion::world(r.theta, Vec2::new(r.tx, r.ty))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    #[serde(default = "one")]
    pub score: f64,
    pub motion: MotionRecord,
}

fn one() -> f64 {
    1.0
}

impl ObjectRecord {
    pub fn new(b: &OrientedBox, m: &PlanarRigidMotion) -> Self {
        Self {
            center: [b.center.x, b.center.y, b.center.z],
            size: b.size,
            yaw: b.yaw,
            score: b.score,
            motion: m.into(),
        }
    }

    pub fn to_box(&self) -> OrientedBox {
        OrientedBox::new(Vec3::from(self.center), self.size, self.yaw, self.score)
    }
}

/// How the ego motion of a generated pair was produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EgoMode {
    #[default]
    Identity,
    Sampled,
}

/// One scene pair: two scans and their ground truth. Paths are stored
/// relative to the manifest file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scan_t: PathBuf,
    pub scan_t1: PathBuf,
    pub objects: Vec<ObjectRecord>,
    pub ego: MotionRecord,
    #[serde(default)]
    pub ego_mode: EgoMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<PathBuf>,
}

impl SceneManifest {
    /// Loads a manifest, resolving its paths against the manifest's directory
    /// and checking that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: SceneManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        m.scan_t = dir.join(&m.scan_t);
        m.scan_t1 = dir.join(&m.scan_t1);
        m.flow = m.flow.map(|f| dir.join(f));
        for p in [Some(&m.scan_t), Some(&m.scan_t1), m.flow.as_ref()].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Manifest(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Manifest(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn boxes(&self) -> Vec<OrientedBox> {
        self.objects.iter().map(ObjectRecord::to_box).collect()
    }

    pub fn motions(&self) -> Vec<PlanarRigidMotion> {
        self.objects.iter().map(|o| o.motion.into()).collect()
    }

    pub fn ego_motion(&self) -> PlanarRigidMotion {
        self.ego.into()
    }
}
