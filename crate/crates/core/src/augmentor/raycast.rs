//! LIDAR simulation against triangle meshes.
//!
//! The sensor sits at the origin of its own frame. Every ray of the
//! azimuth × elevation lattice returns the nearest opaque hit; transparent
//! triangles are invisible to both returns and occlusion. A bounding-volume
//! hierarchy prunes the triangle tests but never changes their outcome.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mix_seed;
use crate::pcio::{PointCloud, TriangleMesh};
use crate::rigidmotion::Vec3;

/// Hits closer than this along a ray are ignored.
pub const T_MIN: f64 = 1e-9;
/// An original point is occluded by hits strictly before `1 - OCCLUSION_EPS`
/// along its sensor segment.
pub const OCCLUSION_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// Azimuth step (rad); the lattice covers a full turn.
    pub azimuth_step: f64,
    /// Elevation of each channel (rad).
    pub elevations: Vec<f64>,
    /// Range noise `σ(r) = noise_a + noise_b · r`.
    pub noise_a: f64,
    pub noise_b: f64,
    pub dropout: f64,
    pub max_range: f64,
    pub rng_seed: u64,
    /// Reflectance assigned to simulated returns.
    pub return_reflectance: f32,
}

impl Default for SensorModel {
    fn default() -> Self {
        let (lo, hi) = (-24.8f64.to_radians(), 2.0f64.to_radians());
        Self {
            azimuth_step: 0.2f64.to_radians(),
            elevations: (0..64).map(|i| lo + (hi - lo) * i as f64 / 63.0).collect(),
            noise_a: 0.01,
            noise_b: 0.001,
            dropout: 0.02,
            max_range: 120.0,
            rng_seed: 0,
            return_reflectance: 0.3,
        }
    }
}

impl SensorModel {
    /// Same lattice and range, no noise and no dropout.
    pub fn noiseless(&self) -> Self {
        Self {
            noise_a: 0.0,
            noise_b: 0.0,
            dropout: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("sensor: {m}")));
        if !(self.azimuth_step > 0.0 && self.azimuth_step.is_finite()) {
            return bad("azimuth_step must be positive");
        }
        if self.elevations.is_empty() || self.elevations.iter().any(|e| !e.is_finite() || e.abs() >= std::f64::consts::FRAC_PI_2) {
            return bad("elevations must be non-empty and inside (-pi/2, pi/2)");
        }
        if !(self.noise_a >= 0.0 && self.noise_b >= 0.0) {
            return bad("noise coefficients must be >= 0");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.max_range > 0.0) {
            return bad("max_range must be positive");
        }
        Ok(())
    }

    pub fn sigma(&self, range: f64) -> f64 {
        self.noise_a + self.noise_b * range
    }

    pub fn azimuth_count(&self) -> usize {
        (std::f64::consts::TAU / self.azimuth_step).round().max(1.0) as usize
    }

    pub fn ray_count(&self) -> usize {
        self.azimuth_count() * self.elevations.len()
    }

    /// Unit direction of ray `idx`, ordered channel-major.
    pub fn ray_direction(&self, idx: usize) -> Vec3 {
        let n_az = self.azimuth_count();
        let el = self.elevations[idx / n_az];
        let az = (idx % n_az) as f64 * self.azimuth_step;
        Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

/// Möller–Trumbore ray/triangle intersection. Returns the ray parameter of
/// the hit, which may be negative; parallel rays miss.
pub fn ray_triangle(orig: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() <= 1e-14 * e1.norm() * e2.norm() * dir.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = orig - tri[0];
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&qvec) * inv)
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn padded(mut self) -> Self {
        let scale = self.lo.abs().max().max(self.hi.abs().max()).max(1.0);
        let pad = Vec3::repeat(1e-9 * scale);
        self.lo -= pad;
        self.hi += pad;
        self
    }

    /// Parameter interval where the ray is inside the box.
    fn slab(&self, orig: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for a in 0..3 {
            if dir[a] == 0.0 {
                if orig[a] < self.lo[a] || orig[a] > self.hi[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let (mut near, mut far) = ((self.lo[a] - orig[a]) * inv, (self.hi[a] - orig[a]) * inv);
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

const LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Opaque triangles of a set of posed meshes with a BVH over them.
#[derive(Clone, Debug)]
pub struct OpaqueScene {
    pub triangles: Vec<[Vec3; 3]>,
    /// `(mesh index, triangle index within that mesh)` per triangle.
    pub source: Vec<(usize, usize)>,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: usize,
}

fn better(a: &Hit, b: &Option<Hit>) -> bool {
    match b {
        None => true,
        Some(b) => a.t < b.t || (a.t == b.t && a.triangle < b.triangle),
    }
}

impl OpaqueScene {
    pub fn new(meshes: &[TriangleMesh]) -> Self {
        let mut triangles = Vec::new();
        let mut source = Vec::new();
        for (m, mesh) in meshes.iter().enumerate() {
            for i in 0..mesh.len() {
                if !mesh.transparent[i] {
                    triangles.push(mesh.triangle(i));
                    source.push((m, i));
                }
            }
        }
        let mut scene = Self {
            order: (0..triangles.len()).collect(),
            triangles,
            source,
            nodes: Vec::new(),
        };
        if !scene.triangles.is_empty() {
            let n = scene.triangles.len();
            scene.build(0, n);
        }
        scene
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn centroid(&self, i: usize) -> Vec3 {
        let t = &self.triangles[i];
        (t[0] + t[1] + t[2]) / 3.0
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut bounds = Aabb::empty();
        let mut cb = Aabb::empty();
        for &i in &self.order[start..end] {
            for v in &self.triangles[i] {
                bounds.grow(v);
            }
            cb.grow(&self.centroid(i));
        }
        let bounds = bounds.padded();
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, end });
            return id;
        }
        let axis = (cb.hi - cb.lo).imax();
        let mid = (end - start) / 2;
        let tris = std::mem::take(&mut self.order);
        let mut order = tris;
        order[start..end].select_nth_unstable_by(mid, |&a, &b| self.centroid(a)[axis].total_cmp(&self.centroid(b)[axis]));
        self.order = order;
        self.nodes.push(Node::Leaf { bounds, start, end });
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        self.nodes[id] = Node::Inner { bounds, left, right };
        id
    }

    /// Nearest hit with `t ∈ (tmin, tmax]`; ties go to the lowest triangle.
    pub fn closest_hit(&self, orig: &Vec3, dir: &Vec3, tmin: f64, tmax: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        if self.nodes.is_empty() {
            return None;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let Some((t0, t1)) = node.bounds().slab(orig, dir) else { continue };
            let limit = best.map_or(tmax, |b| b.t);
            if t0 > limit || t1 < tmin {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &i in &self.order[start..end] {
                        if let Some(t) = ray_triangle(orig, dir, &self.triangles[i]) {
                            let h = Hit { t, triangle: i };
                            if t > tmin && t <= tmax && better(&h, &best) {
                                best = Some(h);
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        best
    }

    /// Whether any triangle is hit with `t ∈ (tmin, tmax)`.
    pub fn any_hit(&self, orig: &Vec3, dir: &Vec3, tmin: f64, tmax: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let Some((t0, t1)) = node.bounds().slab(orig, dir) else { continue };
            if t0 >= tmax || t1 <= tmin {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    let hit = self.order[start..end].iter().any(|&i| {
                        ray_triangle(orig, dir, &self.triangles[i]).is_some_and(|t| t > tmin && t < tmax)
                    });
                    if hit {
                        return true;
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        false
    }
}

/// One simulated LIDAR return.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimReturn {
    pub ray: usize,
    /// Index of the posed mesh that produced the return.
    pub mesh: usize,
    /// Triangle index within that mesh.
    pub triangle: usize,
    pub true_range: f64,
    pub range: f64,
    pub point: Vec3,
}

/// Casts every sensor ray against the scene. Noise and dropout for a ray are
/// drawn from a generator keyed on the sensor seed and the ray index.
pub fn raycast_returns(scene: &OpaqueScene, sensor: &SensorModel) -> Result<Vec<SimReturn>> {
    sensor.validate()?;
    if scene.is_empty() {
        return Ok(Vec::new());
    }
    let origin = Vec3::zeros();
    let returns = (0..sensor.ray_count())
        .into_par_iter()
        .filter_map(|ray| {
            let dir = sensor.ray_direction(ray);
            let hit = scene.closest_hit(&origin, &dir, T_MIN, sensor.max_range)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(sensor.rng_seed, &[ray as u64]));
            if sensor.dropout > 0.0 && rng.random::<f64>() < sensor.dropout {
                return None;
            }
            let sigma = sensor.sigma(hit.t);
            let range = if sigma > 0.0 {
                hit.t + Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng)
            } else {
                hit.t
            };
            if range <= 0.0 {
                return None;
            }
            let (mesh, triangle) = scene.source[hit.triangle];
            Some(SimReturn {
                ray,
                mesh,
                triangle,
                true_range: hit.t,
                range,
                point: dir * range,
            })
        })
        .collect();
    Ok(returns)
}

/// Indices of points whose segment from the sensor crosses an opaque
/// triangle strictly before the point.
pub fn occluded_points(scene: &OpaqueScene, points: &[Vec3]) -> Vec<usize> {
    if scene.is_empty() {
        return Vec::new();
    }
    let origin = Vec3::zeros();
    (0..points.len())
        .into_par_iter()
        .filter(|&i| scene.any_hit(&origin, &points[i], T_MIN, 1.0 - OCCLUSION_EPS))
        .collect()
}

#[derive(Clone, Debug)]
pub struct ScanSynthesis {
    /// Surviving original points in their original order, then the
    /// simulated returns in ray order.
    pub cloud: PointCloud,
    /// Sorted indices of removed original points.
    pub removed: Vec<usize>,
    pub returns: Vec<SimReturn>,
    /// Number of original points kept; simulated returns start here.
    pub kept: usize,
}

pub fn raycast_scan(meshes: &[TriangleMesh], original: &PointCloud, sensor: &SensorModel) -> Result<ScanSynthesis> {
    original.validate()?;
    let scene = OpaqueScene::new(meshes);
    let returns = raycast_returns(&scene, sensor)?;
    let removed = occluded_points(&scene, &original.points);
    let mut keep = vec![true; original.len()];
    for &i in &removed {
        keep[i] = false;
    }
    let mut cloud = original.filtered(&keep);
    let kept = cloud.len();
    let sim = PointCloud {
        points: returns.iter().map(|r| r.point).collect(),
        reflectance: original.reflectance.as_ref().map(|_| vec![sensor.return_reflectance; returns.len()]),
        frame_id: original.frame_id.clone(),
    };
    cloud.extend(&sim);
    Ok(ScanSynthesis {
        cloud,
        removed,
        returns,
        kept,
    })
}
