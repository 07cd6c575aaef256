//! Capsule-union body prior: the stand-in for a licensed parametric human.
//!
//! A skeleton of capsules (bone segments with radii) defines an analytic
//! union SDF. The proxy mesh is extracted from it, shells are displaced along
//! angle-weighted normals, and `MeshSdf` provides the exact signed-distance
//! oracle (closest-feature pseudonormal sign) used to initialize the SDF
//! field.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, UnionFind};
use crate::tetgrid::extract_isosurface;

/// One capsule: segment from `a` to `b` with the given radius,
/// in body-height units.
#[derive(Debug, Clone, Copy)]
pub struct Bone {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

/// Connected capsule skeleton, normalized to unit height inside
/// [-0.5, 0.5]^3.
#[derive(Debug, Clone)]
pub struct SkeletonSpec {
    pub bones: Vec<Bone>,
}

/// Default humanoid skeleton (15 bones), shipped with the crate.
pub const HUMANOID_SKELETON: &str = include_str!("../assets/humanoid.skel");

impl SkeletonSpec {
    /// Normalizes to unit height about the bounding-box center and checks
    /// the invariants (positive radii, connected bone graph, unit bounds).
    pub fn new(bones: Vec<Bone>) -> Result<Self> {
        if bones.is_empty() {
            return Err(Error::invalid("skeleton has no bones"));
        }
        for (i, b) in bones.iter().enumerate() {
            if !(b.radius > 0.0) {
                return Err(Error::invalid(format!(
                    "bone {i} has non-positive radius {}",
                    b.radius
                )));
            }
            if !b.a.iter().chain(b.b.iter()).all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("bone {i} has non-finite endpoints")));
            }
        }
        let mut spec = SkeletonSpec { bones };
        spec.normalize();
        spec.check_connected()?;
        spec.check_bounds()?;
        Ok(spec)
    }

    /// Parses the bone-per-line text format:
    /// `ax ay az  bx by bz  radius`, `#` comments allowed.
    pub fn from_str(text: &str) -> Result<Self> {
        let mut bones = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("line {}: bad number {s:?}", ln + 1)))
                })
                .collect::<Result<_>>()?;
            if nums.len() != 7 {
                return Err(Error::Parse(format!(
                    "line {}: expected 7 numbers per bone, got {}",
                    ln + 1,
                    nums.len()
                )));
            }
            bones.push(Bone {
                a: Vector3::new(nums[0], nums[1], nums[2]),
                b: Vector3::new(nums[3], nums[4], nums[5]),
                radius: nums[6],
            });
        }
        SkeletonSpec::new(bones)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        SkeletonSpec::from_str(&std::fs::read_to_string(path)?)
    }

    pub fn default_humanoid() -> Self {
        SkeletonSpec::from_str(HUMANOID_SKELETON).expect("builtin skeleton is valid")
    }

    /// Capsule bounding box including radii.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for b in &self.bones {
            let r = Vector3::repeat(b.radius);
            lo = lo.inf(&(b.a.inf(&b.b) - r));
            hi = hi.sup(&(b.a.sup(&b.b) + r));
        }
        (lo, hi)
    }

    fn normalize(&mut self) {
        let (lo, hi) = self.bounds();
        let height = hi.y - lo.y;
        let center = (lo + hi) / 2.0;
        let scale = 1.0 / height;
        for b in &mut self.bones {
            b.a = (b.a - center) * scale;
            b.b = (b.b - center) * scale;
            b.radius *= scale;
        }
    }

    fn check_connected(&self) -> Result<()> {
        let mut uf = UnionFind::new(self.bones.len());
        for i in 0..self.bones.len() {
            for j in (i + 1)..self.bones.len() {
                let (bi, bj) = (&self.bones[i], &self.bones[j]);
                let d = segment_segment_distance(&bi.a, &bi.b, &bj.a, &bj.b);
                if d <= bi.radius + bj.radius {
                    uf.union(i, j);
                }
            }
        }
        let root = uf.find(0);
        for i in 1..self.bones.len() {
            if uf.find(i) != root {
                return Err(Error::invalid(format!(
                    "bone graph disconnected: bone {i} does not touch bone 0's component"
                )));
            }
        }
        Ok(())
    }

    fn check_bounds(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        let eps = 1e-9;
        for v in [&lo, &hi] {
            if v.iter().any(|&c| c < -0.5 - eps || c > 0.5 + eps) {
                return Err(Error::invalid(format!(
                    "normalized skeleton exceeds the unit box: {lo:?} .. {hi:?}"
                )));
            }
        }
        Ok(())
    }

    /// Exact union-of-capsules signed distance.
    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        let mut d = f64::INFINITY;
        for b in &self.bones {
            d = d.min(point_segment_distance(p, &b.a, &b.b) - b.radius);
        }
        d
    }
}

pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Closest distance between segments (a1,b1) and (a2,b2).
pub fn segment_segment_distance(
    a1: &Vector3<f64>,
    b1: &Vector3<f64>,
    a2: &Vector3<f64>,
    b2: &Vector3<f64>,
) -> f64 {
    let d1 = b1 - a1;
    let d2 = b2 - a2;
    let r = a1 - a2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (mut s, mut t);
    if a <= 1e-18 && e <= 1e-18 {
        return (a1 - a2).norm();
    }
    if a <= 1e-18 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= 1e-18 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            s = if denom != 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
        }
    }
    let p1 = a1 + d1 * s;
    let p2 = a2 + d2 * t;
    (p1 - p2).norm()
}

/// Extracts the watertight capsule-union surface at the given resolution
/// (cells along the height axis).
pub fn build_humanoid_proxy(spec: &SkeletonSpec, resolution: usize) -> Result<TriMesh> {
    if resolution < 8 {
        return Err(Error::invalid("proxy resolution must be at least 8"));
    }
    let (lo, hi) = spec.bounds();
    let cell = (hi.y - lo.y) / resolution as f64;
    let pad = Vector3::repeat(2.0 * cell);
    let lo = lo - pad;
    let hi = hi + pad;
    let ext = hi - lo;
    let dims = [
        (ext.x / cell).ceil() as usize,
        (ext.y / cell).ceil() as usize,
        (ext.z / cell).ceil() as usize,
    ];
    let out = extract_isosurface(lo, hi, dims, |p| spec.sdf(p))?;
    if out.mesh.is_empty() {
        return Err(Error::numerical("proxy extraction produced no surface"));
    }
    Ok(out.mesh)
}

/// Displaces every vertex outward along its angle-weighted normal.
/// Topology is preserved; the input must be watertight.
pub fn build_outer_shell(mesh: &TriMesh, offset: f64) -> Result<TriMesh> {
    if offset < 0.0 {
        return Err(Error::invalid("shell offset must be non-negative"));
    }
    if !mesh.is_watertight() {
        return Err(Error::invalid("outer shell requires a watertight mesh"));
    }
    let normals = mesh.vertex_normals_angle_weighted();
    let vertices = mesh
        .vertices
        .iter()
        .zip(&normals)
        .map(|(v, n)| v + n * offset)
        .collect();
    Ok(TriMesh {
        vertices,
        faces: mesh.faces.clone(),
        vertex_colors: mesh.vertex_colors.clone(),
    })
}

/// Area-weighted surface samples jittered along the face normal within
/// [-band, band]. Deterministic for a fixed seed.
pub fn sample_points_near_shell(
    shell: &TriMesh,
    count: usize,
    band: f64,
    seed: u64,
) -> Result<Vec<Vector3<f64>>> {
    if count == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    if !(band > 0.0) {
        return Err(Error::invalid("sample band must be positive"));
    }
    if shell.is_empty() {
        return Err(Error::invalid("cannot sample an empty mesh"));
    }
    let mut cumulative = Vec::with_capacity(shell.faces.len());
    let mut total = 0.0;
    for f in 0..shell.faces.len() {
        total += shell.face_area(f);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::invalid("mesh has zero surface area"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = rng.random::<f64>() * total;
        let f = cumulative.partition_point(|&c| c < pick).min(shell.faces.len() - 1);
        let [i, j, k] = shell.faces[f];
        let a = shell.vertices[i as usize];
        let b = shell.vertices[j as usize];
        let c = shell.vertices[k as usize];
        // uniform barycentric via the sqrt trick
        let r1 = rng.random::<f64>().sqrt();
        let r2 = rng.random::<f64>();
        let p = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
        let n = shell.face_normal(f);
        let t = (rng.random::<f64>() * 2.0 - 1.0) * band;
        points.push(p + n * t);
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Exact signed distance to a watertight mesh
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feature {
    Vert(u8),
    Edge(u8), // edge k joins corner k and k+1
    Face,
}

/// Closest point on triangle (a,b,c) to p, with the closest feature.
fn closest_point_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> (Vector3<f64>, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::Vert(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::Vert(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::Vert(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

struct BvhNode {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    // leaf: range into `order`; inner: child node ids
    left: usize,
    right: usize,
    start: usize,
    count: usize,
}

/// Exact signed-distance oracle for a watertight mesh.
///
/// Magnitude is the distance to the nearest triangle; the sign comes from the
/// angle-weighted pseudonormal of the closest feature (negative inside).
pub struct MeshSdf {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
    face_normals: Vec<Vector3<f64>>,
    edge_pseudo: HashMap<(u32, u32), Vector3<f64>>,
    vertex_pseudo: Vec<Vector3<f64>>,
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
}

impl MeshSdf {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::invalid("signed distance of an empty mesh"));
        }
        let vertices = mesh.vertices.clone();
        let faces = mesh.faces.clone();
        let face_normals: Vec<Vector3<f64>> =
            (0..faces.len()).map(|f| mesh.face_normal(f)).collect();

        let mut edge_pseudo: HashMap<(u32, u32), Vector3<f64>> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                *edge_pseudo.entry(key).or_insert_with(Vector3::zeros) += face_normals[fi];
            }
        }

        let mut vertex_pseudo = vec![Vector3::zeros(); vertices.len()];
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let i = f[k] as usize;
                let p = vertices[i];
                let e1 = vertices[f[(k + 1) % 3] as usize] - p;
                let e2 = vertices[f[(k + 2) % 3] as usize] - p;
                let denom = e1.norm() * e2.norm();
                if denom > 0.0 {
                    let cos = (e1.dot(&e2) / denom).clamp(-1.0, 1.0);
                    vertex_pseudo[i] += cos.acos() * face_normals[fi];
                }
            }
        }

        let mut sdf = MeshSdf {
            vertices,
            faces,
            face_normals,
            edge_pseudo,
            vertex_pseudo,
            nodes: Vec::new(),
            order: Vec::new(),
        };
        sdf.build_bvh();
        Ok(sdf)
    }

    fn face_bounds(&self, f: usize) -> (Vector3<f64>, Vector3<f64>) {
        let [i, j, k] = self.faces[f];
        let a = self.vertices[i as usize];
        let b = self.vertices[j as usize];
        let c = self.vertices[k as usize];
        (a.inf(&b).inf(&c), a.sup(&b).sup(&c))
    }

    fn build_bvh(&mut self) {
        self.order = (0..self.faces.len() as u32).collect();
        let centroids: Vec<Vector3<f64>> = (0..self.faces.len())
            .map(|f| {
                let [i, j, k] = self.faces[f];
                (self.vertices[i as usize] + self.vertices[j as usize]
                    + self.vertices[k as usize])
                    / 3.0
            })
            .collect();
        let mut order = std::mem::take(&mut self.order);
        let n = order.len();
        self.build_node(&mut order, 0, n, &centroids);
        self.order = order;
    }

    fn build_node(
        &mut self,
        order: &mut [u32],
        start: usize,
        end: usize,
        centroids: &[Vector3<f64>],
    ) -> usize {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &f in &order[start..end] {
            let (flo, fhi) = self.face_bounds(f as usize);
            lo = lo.inf(&flo);
            hi = hi.sup(&fhi);
        }
        let id = self.nodes.len();
        self.nodes.push(BvhNode {
            lo,
            hi,
            left: 0,
            right: 0,
            start,
            count: 0,
        });
        let count = end - start;
        if count <= 8 {
            self.nodes[id].count = count;
            return id;
        }
        // median split along the widest centroid axis
        let ext = hi - lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = start + count / 2;
        order[start..end]
            .select_nth_unstable_by(count / 2, |&a, &b| {
                centroids[a as usize][axis]
                    .partial_cmp(&centroids[b as usize][axis])
                    .unwrap()
            });
        let left = self.build_node(order, start, mid, centroids);
        let right = self.build_node(order, mid, end, centroids);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id
    }

    fn box_distance_sq(lo: &Vector3<f64>, hi: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let c = p[k].clamp(lo[k], hi[k]);
            d2 += (p[k] - c) * (p[k] - c);
        }
        d2
    }

    fn nearest(&self, p: &Vector3<f64>) -> (f64, usize, Vector3<f64>, Feature) {
        let mut best = (f64::INFINITY, 0usize, Vector3::zeros(), Feature::Face);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if Self::box_distance_sq(&node.lo, &node.hi, p) >= best.0 {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    let [i, j, k] = self.faces[f as usize];
                    let (q, feat) = closest_point_triangle(
                        p,
                        &self.vertices[i as usize],
                        &self.vertices[j as usize],
                        &self.vertices[k as usize],
                    );
                    let d2 = (p - q).norm_squared();
                    if d2 < best.0 {
                        best = (d2, f as usize, q, feat);
                    }
                }
            } else {
                // visit the nearer child first
                let dl = Self::box_distance_sq(&self.nodes[node.left].lo, &self.nodes[node.left].hi, p);
                let dr =
                    Self::box_distance_sq(&self.nodes[node.right].lo, &self.nodes[node.right].hi, p);
                if dl < dr {
                    stack.push(node.right);
                    stack.push(node.left);
                } else {
                    stack.push(node.left);
                    stack.push(node.right);
                }
            }
        }
        best
    }

    fn pseudonormal(&self, face: usize, feature: Feature) -> Vector3<f64> {
        let f = self.faces[face];
        match feature {
            Feature::Face => self.face_normals[face],
            Feature::Edge(k) => {
                let a = f[k as usize];
                let b = f[(k as usize + 1) % 3];
                self.edge_pseudo[&(a.min(b), a.max(b))]
            }
            Feature::Vert(k) => self.vertex_pseudo[f[k as usize] as usize],
        }
    }

    /// Signed distance: negative inside, positive outside, zero on surface.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        let (d2, face, q, feature) = self.nearest(p);
        let d = d2.sqrt();
        if d == 0.0 {
            return 0.0;
        }
        let n = self.pseudonormal(face, feature);
        if (p - q).dot(&n) >= 0.0 {
            d
        } else {
            -d
        }
    }
}

/// Convenience one-shot oracle. Builds the acceleration structure per call;
/// hold a [`MeshSdf`] for repeated queries.
pub fn mesh_signed_distance(mesh: &TriMesh, point: &Vector3<f64>) -> Result<f64> {
    Ok(MeshSdf::new(mesh)?.signed_distance(point))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    fn single_bone_spec() -> SkeletonSpec {
        SkeletonSpec::new(vec![Bone {
            a: Vector3::new(0.0, -0.25, 0.0),
            b: Vector3::new(0.0, 0.25, 0.0),
            radius: 0.1,
        }])
        .unwrap()
    }

    #[test]
    fn empty_bone_list_rejected() {
        assert!(SkeletonSpec::new(vec![]).is_err());
    }

    #[test]
    fn zero_radius_bone_rejected() {
        let r = SkeletonSpec::new(vec![Bone {
            a: Vector3::zeros(),
            b: Vector3::zeros(),
            radius: 0.0,
        }]);
        assert!(r.is_err());
    }

    #[test]
    fn disconnected_skeleton_rejected() {
        let r = SkeletonSpec::new(vec![
            Bone {
                a: Vector3::new(0.0, -0.4, 0.0),
                b: Vector3::new(0.0, -0.2, 0.0),
                radius: 0.02,
            },
            Bone {
                a: Vector3::new(0.0, 0.2, 0.0),
                b: Vector3::new(0.0, 0.4, 0.0),
                radius: 0.02,
            },
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn single_capsule_proxy_matches_analytic_sdf() {
        let spec = single_bone_spec();
        let res = 24;
        let mesh = build_humanoid_proxy(&spec, res).unwrap();
        assert!(mesh.is_watertight());
        assert_eq!(mesh.connected_components(), 1);
        let cell = 1.0 / res as f64;
        for v in &mesh.vertices {
            assert!(
                spec.sdf(v).abs() < cell,
                "vertex {v:?} off the capsule by {}",
                spec.sdf(v).abs()
            );
        }
    }

    #[test]
    fn default_humanoid_is_single_watertight_component() {
        let spec = SkeletonSpec::default_humanoid();
        assert_eq!(spec.bones.len(), 15);
        let mesh = build_humanoid_proxy(&spec, 48).unwrap();
        assert!(mesh.is_watertight());
        assert_eq!(mesh.connected_components(), 1);
        assert!(mesh.signed_volume() > 0.0);
        // unit height within one cell
        let (lo, hi) = mesh.bounds().unwrap();
        assert!((hi.y - lo.y - 1.0).abs() < 1.0 / 48.0 + 1e-9);
    }

    #[test]
    fn shell_of_icosphere_grows_radius() {
        let m = icosphere(2);
        let shell = build_outer_shell(&m, 0.05).unwrap();
        for v in &shell.vertices {
            assert!((v.norm() - 1.05).abs() < 1e-3);
        }
        assert_eq!(shell.faces, m.faces);
        assert!(shell.signed_volume() > m.signed_volume());
    }

    #[test]
    fn shell_offset_zero_is_identity() {
        let m = icosphere(1);
        let shell = build_outer_shell(&m, 0.0).unwrap();
        for (a, b) in shell.vertices.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn shell_rejects_open_mesh() {
        let open = TriMesh::new(
            vec![
                Vector3::zeros(),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(build_outer_shell(&open, 0.05).is_err());
    }

    // The exact -offset distance holds on bodies with no crevice narrower
    // than twice the offset (the capsule proxy and the icosphere); humanoid
    // armpits violate that clearance, so the humanoid is checked by volume.
    #[test]
    fn shell_distance_is_minus_offset_on_capsule() {
        let spec = single_bone_spec();
        let body = build_humanoid_proxy(&spec, 32).unwrap();
        let offset = 0.05;
        let shell = build_outer_shell(&body, offset).unwrap();
        let sdf = MeshSdf::new(&shell).unwrap();
        let mut checked = 0;
        for v in body.vertices.iter().step_by(7) {
            let d = sdf.signed_distance(v);
            assert!(
                (d + offset).abs() < 0.1 * offset,
                "body vertex at {d} from shell, expected -{offset}"
            );
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn humanoid_shell_volume_grows() {
        let spec = SkeletonSpec::default_humanoid();
        let body = build_humanoid_proxy(&spec, 32).unwrap();
        let shell = build_outer_shell(&body, 0.05).unwrap();
        assert!(shell.signed_volume() > body.signed_volume());
    }

    #[test]
    fn signed_distance_icosphere_analytic() {
        let m = icosphere(3);
        let sdf = MeshSdf::new(&m).unwrap();
        // center: ~ -1 (inscribed surface slightly inside the unit sphere)
        let d0 = sdf.signed_distance(&Vector3::zeros());
        assert!((d0 + 1.0).abs() < 5e-3, "center distance {d0}");
        // far outside along +x
        let d10 = sdf.signed_distance(&Vector3::new(10.0, 0.0, 0.0));
        assert!((d10 - 9.0).abs() < 5e-3, "far distance {d10}");
        // exactly at a vertex
        let dv = sdf.signed_distance(&m.vertices[17]);
        assert!(dv.abs() < 1e-12);
    }

    #[test]
    fn signed_distance_rejects_empty_mesh() {
        assert!(MeshSdf::new(&TriMesh::default()).is_err());
        assert!(mesh_signed_distance(&TriMesh::default(), &Vector3::zeros()).is_err());
    }

    #[test]
    fn sampling_stays_in_band_and_is_deterministic() {
        let m = icosphere(2);
        let pts1 = sample_points_near_shell(&m, 1000, 0.05, 42).unwrap();
        let pts2 = sample_points_near_shell(&m, 1000, 0.05, 42).unwrap();
        assert_eq!(pts1.len(), 1000);
        for (a, b) in pts1.iter().zip(&pts2) {
            assert_eq!(a, b);
        }
        let sdf = MeshSdf::new(&m).unwrap();
        for p in &pts1 {
            assert!(sdf.signed_distance(p).abs() <= 0.05 + 1e-9);
        }
        let pts3 = sample_points_near_shell(&m, 1000, 0.05, 43).unwrap();
        assert_ne!(pts1[0], pts3[0]);
    }

    #[test]
    fn sampling_count_zero_rejected() {
        let m = icosphere(0);
        assert!(sample_points_near_shell(&m, 0, 0.05, 1).is_err());
    }

    // Ray-parity oracle: count crossings along a fixed direction.
    fn ray_hits(mesh: &TriMesh, origin: &Vector3<f64>, dir: &Vector3<f64>) -> usize {
        let mut hits = 0;
        for f in &mesh.faces {
            let a = mesh.vertices[f[0] as usize];
            let b = mesh.vertices[f[1] as usize];
            let c = mesh.vertices[f[2] as usize];
            let e1 = b - a;
            let e2 = c - a;
            let pv = dir.cross(&e2);
            let det = e1.dot(&pv);
            if det.abs() < 1e-14 {
                continue;
            }
            let inv = 1.0 / det;
            let tv = origin - a;
            let u = tv.dot(&pv) * inv;
            if !(0.0..=1.0).contains(&u) {
                continue;
            }
            let qv = tv.cross(&e1);
            let v = dir.dot(&qv) * inv;
            if v < 0.0 || u + v > 1.0 {
                continue;
            }
            let t = e2.dot(&qv) * inv;
            if t > 0.0 {
                hits += 1;
            }
        }
        hits
    }

    #[test]
    fn sign_agrees_with_ray_parity_on_humanoid() {
        let spec = SkeletonSpec::default_humanoid();
        let mesh = build_humanoid_proxy(&spec, 32).unwrap();
        let sdf = MeshSdf::new(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dir = Vector3::new(0.5377, 0.8323, 0.1337).normalize();
        let mut agree = 0;
        let n = 10_000;
        for _ in 0..n {
            let p = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            let inside_parity = ray_hits(&mesh, &p, &dir) % 2 == 1;
            let inside_sdf = sdf.signed_distance(&p) < 0.0;
            if inside_parity == inside_sdf {
                agree += 1;
            }
        }
        assert!(
            agree as f64 / n as f64 >= 0.999,
            "sign agreement {} / {}",
            agree,
            n
        );
    }
}
