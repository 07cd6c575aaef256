//! Triangle meshes: the explicit half of the hybrid representation.
//!
//! `TriMesh` carries positions, faces, and optional per-vertex colors. It is
//! produced by iso-surface extraction, displaced into outer shells, rendered,
//! and exported as OBJ (with colors packed onto the `v` lines).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Watertight-capable triangle mesh with optional per-vertex RGB colors.
#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
    /// RGB in [0,1], one triple per vertex when present.
    pub vertex_colors: Option<Vec<[f64; 3]>>,
}

impl TriMesh {
    /// Builds a mesh and validates face indices (and color count when given).
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u32;
        for f in &faces {
            if f[0] >= n || f[1] >= n || f[2] >= n {
                return Err(Error::invalid(format!(
                    "face index out of range: {:?} with {} vertices",
                    f, n
                )));
            }
        }
        Ok(TriMesh {
            vertices,
            faces,
            vertex_colors: None,
        })
    }

    pub fn with_colors(mut self, colors: Vec<[f64; 3]>) -> Result<Self> {
        if colors.len() != self.vertices.len() {
            return Err(Error::invalid(format!(
                "{} colors for {} vertices",
                colors.len(),
                self.vertices.len()
            )));
        }
        self.vertex_colors = Some(colors);
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Axis-aligned bounds; `None` for an empty vertex set.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices[1..] {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        Some((lo, hi))
    }

    /// Every directed edge must appear exactly once, i.e. each undirected
    /// edge is shared by exactly two faces with opposite orientation.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                if a == b {
                    return false;
                }
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &c)| c == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Signed volume via the divergence theorem; positive for outward
    /// counter-clockwise winding.
    pub fn signed_volume(&self) -> f64 {
        let mut six_v = 0.0;
        for f in &self.faces {
            let a = self.vertices[f[0] as usize];
            let b = self.vertices[f[1] as usize];
            let c = self.vertices[f[2] as usize];
            six_v += a.cross(&b).dot(&c);
        }
        six_v / 6.0
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [i, j, k] = self.faces[f];
        let a = self.vertices[i as usize];
        let b = self.vertices[j as usize];
        let c = self.vertices[k as usize];
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let [i, j, k] = self.faces[f];
        let a = self.vertices[i as usize];
        let b = self.vertices[j as usize];
        let c = self.vertices[k as usize];
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    /// Number of connected components over the face adjacency graph
    /// (faces joined through shared vertices).
    pub fn connected_components(&self) -> usize {
        if self.faces.is_empty() {
            return 0;
        }
        let mut uf = UnionFind::new(self.vertices.len());
        for f in &self.faces {
            uf.union(f[0] as usize, f[1] as usize);
            uf.union(f[1] as usize, f[2] as usize);
        }
        let mut roots: Vec<usize> = self
            .faces
            .iter()
            .map(|f| uf.find(f[0] as usize))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// Area-weighted unit vertex normals: the sum of unnormalized face
    /// normals around each vertex, renormalized. This is the weighting the
    /// differentiable renderer assumes.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let a = self.vertices[f[0] as usize];
            let b = self.vertices[f[1] as usize];
            let c = self.vertices[f[2] as usize];
            let n = (b - a).cross(&(c - a));
            for &i in f {
                acc[i as usize] += n;
            }
        }
        for n in &mut acc {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        acc
    }

    /// Angle-weighted unit vertex normals, exact for inside/outside tests on
    /// watertight meshes and used for shell displacement.
    pub fn vertex_normals_angle_weighted(&self) -> Vec<Vector3<f64>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let n = self.face_normal(fi);
            for k in 0..3 {
                let i = f[k] as usize;
                let p = self.vertices[i];
                let e1 = self.vertices[f[(k + 1) % 3] as usize] - p;
                let e2 = self.vertices[f[(k + 2) % 3] as usize] - p;
                let denom = e1.norm() * e2.norm();
                if denom > 0.0 {
                    let cos = (e1.dot(&e2) / denom).clamp(-1.0, 1.0);
                    acc[i] += cos.acos() * n;
                }
            }
        }
        for n in &mut acc {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        acc
    }

    /// One-ring vertex adjacency (undirected, deduplicated).
    pub fn vertex_adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k] as usize;
                let b = f[(k + 1) % 3];
                if !adj[a].contains(&b) {
                    adj[a].push(b);
                }
                let b = b as usize;
                let a = f[k];
                if !adj[b].contains(&a) {
                    adj[b].push(a);
                }
            }
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }

    /// Writes `v x y z [r g b]` and 1-indexed `f` lines with six decimals.
    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        for (i, v) in self.vertices.iter().enumerate() {
            match &self.vertex_colors {
                Some(colors) => {
                    let c = colors[i];
                    writeln!(
                        w,
                        "v {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
                        v.x, v.y, v.z, c[0], c[1], c[2]
                    )?;
                }
                None => writeln!(w, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z)?,
            }
        }
        for f in &self.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the OBJ subset produced by `write_obj` (positions, optional
    /// per-vertex colors, triangular faces).
    pub fn read_obj(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut vertices = Vec::new();
        let mut colors = Vec::new();
        let mut faces: Vec<[u32; 3]> = Vec::new();
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let nums: Vec<f64> = it
                        .map(|s| {
                            s.parse::<f64>().map_err(|_| {
                                Error::Parse(format!("line {}: bad vertex component {s:?}", ln + 1))
                            })
                        })
                        .collect::<Result<_>>()?;
                    match nums.len() {
                        3 => vertices.push(Vector3::new(nums[0], nums[1], nums[2])),
                        6 => {
                            vertices.push(Vector3::new(nums[0], nums[1], nums[2]));
                            colors.push([nums[3], nums[4], nums[5]]);
                        }
                        n => {
                            return Err(Error::Parse(format!(
                                "line {}: vertex with {} components",
                                ln + 1,
                                n
                            )))
                        }
                    }
                }
                Some("f") => {
                    let idx: Vec<u32> = it
                        .map(|s| {
                            // tolerate v/vt/vn references; only the position index is used
                            let first = s.split('/').next().unwrap_or(s);
                            first.parse::<u32>().map_err(|_| {
                                Error::Parse(format!("line {}: bad face index {s:?}", ln + 1))
                            })
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() != 3 {
                        return Err(Error::Parse(format!(
                            "line {}: only triangular faces are supported",
                            ln + 1
                        )));
                    }
                    if idx.iter().any(|&i| i == 0) {
                        return Err(Error::Parse(format!("line {}: OBJ indices are 1-based", ln + 1)));
                    }
                    faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {} // ignore normals, texcoords, groups
            }
        }
        if !colors.is_empty() && colors.len() != vertices.len() {
            return Err(Error::Parse(
                "mixed colored and uncolored vertex lines".into(),
            ));
        }
        let mut mesh = TriMesh::new(vertices, faces)?;
        if !colors.is_empty() {
            mesh = mesh.with_colors(colors)?;
        }
        Ok(mesh)
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Unit icosphere: subdivided icosahedron with vertices projected to the
/// sphere. Used as the analytic test body throughout the suite.
pub fn icosphere(subdivisions: u32) -> TriMesh {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0u32; 3];
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let m = ((vertices[a as usize] + vertices[b as usize]) / 2.0).normalize();
                    vertices.push(m);
                    (vertices.len() - 1) as u32
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }
    TriMesh {
        vertices,
        faces,
        vertex_colors: None,
    }
}
