//! Tetrahedral lattice and Marching Tetrahedra iso-surface extraction.
//!
//! Cubes are split into 6 tets by the Kuhn subdivision (all cubes share the
//! same main diagonal), so neighboring cubes agree on face diagonals and MT
//! output is watertight whenever the surface stays inside the active band.
//! Crossing vertices carry provenance (the grid edge and its SDF values) so
//! losses can chain gradients back into the SDF samples.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::body_proxy::MeshSdf;
use crate::error::{Error, Result};
use crate::mesh::{TriMesh, UnionFind};

/// Regular tetrahedral grid over an axis-aligned box.
#[derive(Debug, Clone)]
pub struct TetGrid {
    pub vertices: Vec<Vector3<f64>>,
    /// Vertex-index quadruples, all positively oriented.
    pub tets: Vec<[u32; 4]>,
    /// Per-tet flag; MT only visits active tets.
    pub active: Vec<bool>,
    /// Cells per axis.
    pub dims: [usize; 3],
    pub origin: Vector3<f64>,
    /// Per-axis cell spacing.
    pub cell: Vector3<f64>,
}

/// One scalar per grid vertex.
#[derive(Debug, Clone)]
pub struct SdfSamples(pub Vec<f64>);

impl SdfSamples {
    pub fn validate(&self, grid: &TetGrid) -> Result<()> {
        if self.0.len() != grid.vertices.len() {
            return Err(Error::invalid(format!(
                "{} sdf samples for {} grid vertices",
                self.0.len(),
                grid.vertices.len()
            )));
        }
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite sdf sample"));
        }
        Ok(())
    }
}

/// Crossing-vertex provenance: `mesh.vertices[i]` lies on grid edge
/// (`grid_a`, `grid_b`) with (nudged) endpoint values (`s_a`, `s_b`).
#[derive(Debug, Clone, Copy)]
pub struct MtCrossing {
    pub grid_a: u32,
    pub grid_b: u32,
    pub s_a: f64,
    pub s_b: f64,
}

/// MT result with per-vertex provenance for gradient chaining.
#[derive(Debug, Clone)]
pub struct MtOutput {
    pub mesh: TriMesh,
    pub crossings: Vec<MtCrossing>,
}

// The 6 monotone corner paths of the Kuhn subdivision: axis orders.
const KUHN_AXIS_ORDERS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn permutation_parity(p: &[usize]) -> bool {
    // true = even
    let mut inversions = 0;
    for i in 0..p.len() {
        for j in (i + 1)..p.len() {
            if p[i] > p[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 0
}

impl TetGrid {
    /// Regular lattice with every tet active.
    pub fn lattice(lo: Vector3<f64>, hi: Vector3<f64>, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("grid dims must be positive"));
        }
        let ext = hi - lo;
        if ext.iter().any(|&e| e <= 0.0) {
            return Err(Error::invalid("degenerate grid bounds"));
        }
        let cell = Vector3::new(
            ext.x / dims[0] as f64,
            ext.y / dims[1] as f64,
            ext.z / dims[2] as f64,
        );
        let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    vertices.push(Vector3::new(
                        lo.x + i as f64 * cell.x,
                        lo.y + j as f64 * cell.y,
                        lo.z + k as f64 * cell.z,
                    ));
                }
            }
        }
        let vid = |i: usize, j: usize, k: usize| -> u32 {
            (i + j * (nx + 1) + k * (nx + 1) * (ny + 1)) as u32
        };

        // Per-cube tet corner offsets, orientation-corrected once.
        let mut corner_sets: Vec<[[usize; 3]; 4]> = Vec::with_capacity(6);
        for order in KUHN_AXIS_ORDERS {
            let mut c = [[0usize; 3]; 4];
            let mut cur = [0usize; 3];
            for (step, &axis) in order.iter().enumerate() {
                cur[axis] = 1;
                c[step + 1] = cur;
            }
            // Positive orientation: even axis orders already are; odd ones
            // need the two middle corners swapped.
            if !permutation_parity(&order) {
                c.swap(1, 2);
            }
            corner_sets.push(c);
        }

        let mut tets = Vec::with_capacity(nx * ny * nz * 6);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    for c in &corner_sets {
                        tets.push([
                            vid(i + c[0][0], j + c[0][1], k + c[0][2]),
                            vid(i + c[1][0], j + c[1][1], k + c[1][2]),
                            vid(i + c[2][0], j + c[2][1], k + c[2][2]),
                            vid(i + c[3][0], j + c[3][1], k + c[3][2]),
                        ]);
                    }
                }
            }
        }
        let active = vec![true; tets.len()];
        Ok(TetGrid {
            vertices,
            tets,
            active,
            dims,
            origin: lo,
            cell,
        })
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tets[t];
        let p = &self.vertices;
        let e1 = p[b as usize] - p[a as usize];
        let e2 = p[c as usize] - p[a as usize];
        let e3 = p[d as usize] - p[a as usize];
        e1.cross(&e2).dot(&e3) / 6.0
    }

    /// Vertex ids referenced by at least one active tet, ascending.
    pub fn active_vertex_ids(&self) -> Vec<u32> {
        let mut seen = vec![false; self.vertices.len()];
        for (t, tet) in self.tets.iter().enumerate() {
            if self.active[t] {
                for &v in tet {
                    seen[v as usize] = true;
                }
            }
        }
        (0..self.vertices.len() as u32)
            .filter(|&v| seen[v as usize])
            .collect()
    }

    /// Connected components of the active tet set (adjacency = shared face).
    pub fn active_components(&self) -> usize {
        let active: Vec<usize> = (0..self.tets.len()).filter(|&t| self.active[t]).collect();
        if active.is_empty() {
            return 0;
        }
        let mut face_map: HashMap<[u32; 3], usize> = HashMap::new();
        let mut uf = UnionFind::new(active.len());
        for (slot, &t) in active.iter().enumerate() {
            let tet = self.tets[t];
            for skip in 0..4 {
                let mut tri: Vec<u32> = (0..4).filter(|&k| k != skip).map(|k| tet[k]).collect();
                tri.sort_unstable();
                let key = [tri[0], tri[1], tri[2]];
                match face_map.entry(key) {
                    std::collections::hash_map::Entry::Occupied(e) => {
                        let other = *e.get();
                        uf.union(slot, other);
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(slot);
                    }
                }
            }
        }
        let mut roots: Vec<usize> = (0..active.len()).map(|s| uf.find(s)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}

/// Band-restricted grid around a watertight body: active tets are those whose
/// circumscribing cell intersects `|SDF| <= band`.
pub fn build_tet_grid(
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    resolution: usize,
    body: &TriMesh,
    band: f64,
) -> Result<TetGrid> {
    if resolution < 8 {
        return Err(Error::invalid(format!(
            "tet grid resolution {} < 8 would degenerate the extracted surface",
            resolution
        )));
    }
    let mut grid = TetGrid::lattice(lo, hi, [resolution; 3])?;
    let sdf = MeshSdf::new(body)?;
    let half_diag = 0.5 * grid.cell.norm();
    let (nx, ny) = (grid.dims[0], grid.dims[1]);
    let ncells = grid.dims[0] * grid.dims[1] * grid.dims[2];
    let mut cell_active = vec![false; ncells];
    for (ci, flag) in cell_active.iter_mut().enumerate() {
        let i = ci % nx;
        let j = (ci / nx) % ny;
        let k = ci / (nx * ny);
        let center = grid.origin
            + Vector3::new(
                (i as f64 + 0.5) * grid.cell.x,
                (j as f64 + 0.5) * grid.cell.y,
                (k as f64 + 0.5) * grid.cell.z,
            );
        *flag = sdf.signed_distance(&center).abs() <= band + half_diag;
    }
    for (t, a) in grid.active.iter_mut().enumerate() {
        *a = cell_active[t / 6];
    }
    Ok(grid)
}

/// Crossing point of the linear field along an edge:
/// v = (s_b·v_a − s_a·v_b) / (s_b − s_a).
fn crossing_point(va: &Vector3<f64>, vb: &Vector3<f64>, sa: f64, sb: f64) -> Vector3<f64> {
    (va * sb - vb * sa) / (sb - sa)
}

/// Partial derivatives of the crossing vertex w.r.t. its endpoint SDF values.
///
/// Returns (∂v/∂s_a, ∂v/∂s_b) for the interpolation formula above. Rejected
/// when the endpoint values do not straddle zero.
pub fn mt_vertex_jacobian(
    va: &Vector3<f64>,
    vb: &Vector3<f64>,
    sa: f64,
    sb: f64,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if sa * sb >= 0.0 {
        return Err(Error::invalid(format!(
            "no crossing on edge: s_a={sa}, s_b={sb}"
        )));
    }
    let denom = (sb - sa) * (sb - sa);
    let d_sa = (va - vb) * (sb / denom);
    let d_sb = (vb - va) * (sa / denom);
    Ok((d_sa, d_sb))
}

/// Marching Tetrahedra over the active tets.
///
/// Zero-valued samples are nudged to +1e-8 before sign classification.
/// Crossing vertices on shared edges are merged through an edge-keyed map,
/// and triangle winding is chosen so normals point toward positive SDF.
pub fn marching_tetrahedra_full(grid: &TetGrid, sdf: &SdfSamples) -> Result<MtOutput> {
    sdf.validate(grid)?;
    let values: Vec<f64> = sdf
        .0
        .iter()
        .map(|&s| if s == 0.0 { 1e-8 } else { s })
        .collect();

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut crossings: Vec<MtCrossing> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut edge_vertex: HashMap<(u32, u32), u32> = HashMap::new();

    let mut vertex_on_edge = |ga: u32, gb: u32| -> u32 {
        let key = (ga.min(gb), ga.max(gb));
        *edge_vertex.entry(key).or_insert_with(|| {
            let (a, b) = (key.0, key.1);
            let (sa, sb) = (values[a as usize], values[b as usize]);
            let p = crossing_point(
                &grid.vertices[a as usize],
                &grid.vertices[b as usize],
                sa,
                sb,
            );
            vertices.push(p);
            crossings.push(MtCrossing {
                grid_a: a,
                grid_b: b,
                s_a: sa,
                s_b: sb,
            });
            (vertices.len() - 1) as u32
        })
    };

    for (t, tet) in grid.tets.iter().enumerate() {
        if !grid.active[t] {
            continue;
        }
        let s = [
            values[tet[0] as usize],
            values[tet[1] as usize],
            values[tet[2] as usize],
            values[tet[3] as usize],
        ];
        let neg: Vec<usize> = (0..4).filter(|&k| s[k] < 0.0).collect();
        match neg.len() {
            0 | 4 => {}
            1 | 3 => {
                // Local order (a, b, c, d) as an even permutation of
                // (0,1,2,3); triangle (p_ab, p_ac, p_ad) faces outward when
                // `a` is the lone negative, and is flipped when `a` is the
                // lone positive.
                let lone_negative = neg.len() == 1;
                let a = if lone_negative {
                    neg[0]
                } else {
                    (0..4).find(|k| !neg.contains(k)).unwrap()
                };
                let mut rest: Vec<usize> = (0..4).filter(|&k| k != a).collect();
                let perm = [a, rest[0], rest[1], rest[2]];
                if !permutation_parity(&perm) {
                    rest.swap(1, 2);
                }
                let p0 = vertex_on_edge(tet[a], tet[rest[0]]);
                let p1 = vertex_on_edge(tet[a], tet[rest[1]]);
                let p2 = vertex_on_edge(tet[a], tet[rest[2]]);
                if lone_negative {
                    faces.push([p0, p1, p2]);
                } else {
                    faces.push([p0, p2, p1]);
                }
            }
            2 => {
                // Quad perimeter p_ac, p_ad, p_bd, p_bc with negatives (a,b)
                // and positives (c,d); winding flips with the permutation
                // parity of (a,b,c,d).
                let (a, b) = (neg[0], neg[1]);
                let pos: Vec<usize> = (0..4).filter(|k| !neg.contains(k)).collect();
                let (c, d) = (pos[0], pos[1]);
                let even = permutation_parity(&[a, b, c, d]);
                let q0 = vertex_on_edge(tet[a], tet[c]);
                let q1 = vertex_on_edge(tet[a], tet[d]);
                let q2 = vertex_on_edge(tet[b], tet[d]);
                let q3 = vertex_on_edge(tet[b], tet[c]);
                if even {
                    faces.push([q0, q1, q2]);
                    faces.push([q0, q2, q3]);
                } else {
                    faces.push([q0, q2, q1]);
                    faces.push([q0, q3, q2]);
                }
            }
            _ => unreachable!(),
        }
    }

    let mesh = TriMesh::new(vertices, faces)?;
    Ok(MtOutput { mesh, crossings })
}

/// Spec-facing MT entry point: just the extracted mesh.
pub fn marching_tetrahedra(grid: &TetGrid, sdf: &SdfSamples) -> Result<TriMesh> {
    Ok(marching_tetrahedra_full(grid, sdf)?.mesh)
}

/// Extracts the zero level set of a scalar field over a fresh lattice.
pub fn extract_isosurface(
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    dims: [usize; 3],
    f: impl Fn(&Vector3<f64>) -> f64,
) -> Result<MtOutput> {
    let grid = TetGrid::lattice(lo, hi, dims)?;
    let samples = SdfSamples(grid.vertices.iter().map(|v| f(v)).collect());
    marching_tetrahedra_full(&grid, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> (Vector3<f64>, Vector3<f64>) {
        (Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn lattice_counts_and_positive_volumes() {
        let (lo, hi) = unit_box();
        let g = TetGrid::lattice(lo, hi, [8, 8, 8]).unwrap();
        assert_eq!(g.tets.len(), 8 * 8 * 8 * 6);
        for t in 0..g.tets.len() {
            assert!(g.tet_volume(t) > 0.0, "tet {t} not positively oriented");
        }
    }

    #[test]
    fn tet_volumes_partition_the_box() {
        let lo = Vector3::new(-0.3, 0.1, -2.0);
        let hi = Vector3::new(0.9, 1.4, -0.5);
        let g = TetGrid::lattice(lo, hi, [5, 7, 3]).unwrap();
        let total: f64 = (0..g.tets.len()).map(|t| g.tet_volume(t)).sum();
        let ext = hi - lo;
        let vol = ext.x * ext.y * ext.z;
        assert!((total - vol).abs() / vol < 1e-9);
    }

    #[test]
    fn linear_field_gives_exactly_planar_mesh() {
        let (lo, hi) = unit_box();
        // 9 cells so the plane does not coincide with a lattice plane
        let g = TetGrid::lattice(lo, hi, [9, 9, 9]).unwrap();
        let sdf = SdfSamples(g.vertices.iter().map(|v| v.x - 0.5).collect());
        let mesh = marching_tetrahedra(&g, &sdf).unwrap();
        assert!(!mesh.is_empty());
        for v in &mesh.vertices {
            assert!(
                (v.x - 0.5).abs() < 1e-14,
                "crossing vertex off the plane: {}",
                v.x
            );
        }
    }

    #[test]
    fn all_positive_yields_empty_mesh() {
        let (lo, hi) = unit_box();
        let g = TetGrid::lattice(lo, hi, [8, 8, 8]).unwrap();
        let sdf = SdfSamples(vec![1.0; g.vertices.len()]);
        let mesh = marching_tetrahedra(&g, &sdf).unwrap();
        assert!(mesh.is_empty());
    }

    #[test]
    fn sphere_extraction_is_watertight_and_accurate() {
        let lo = Vector3::new(-0.5, -0.5, -0.5);
        let hi = Vector3::new(0.5, 0.5, 0.5);
        let g = TetGrid::lattice(lo, hi, [32, 32, 32]).unwrap();
        let r = 0.3;
        let sdf = SdfSamples(g.vertices.iter().map(|v| v.norm() - r).collect());
        let mesh = marching_tetrahedra(&g, &sdf).unwrap();
        assert!(mesh.is_watertight());
        assert!(mesh.signed_volume() > 0.0);
        let cell = 1.0 / 32.0;
        for v in &mesh.vertices {
            assert!((v.norm() - r).abs() < 1.5 * cell);
        }
        let area: f64 = (0..mesh.faces.len()).map(|f| mesh.face_area(f)).sum();
        let expect = 4.0 * std::f64::consts::PI * r * r;
        assert!(
            (area - expect).abs() / expect < 0.05,
            "area {area} vs analytic {expect}"
        );
    }

    #[test]
    fn mt_scale_invariance() {
        let lo = Vector3::new(-0.5, -0.5, -0.5);
        let hi = Vector3::new(0.5, 0.5, 0.5);
        let g = TetGrid::lattice(lo, hi, [12, 12, 12]).unwrap();
        let base: Vec<f64> = g.vertices.iter().map(|v| v.norm() - 0.31).collect();
        let a = marching_tetrahedra(&g, &SdfSamples(base.clone())).unwrap();
        let b = marching_tetrahedra(
            &g,
            &SdfSamples(base.iter().map(|s| s * 37.5).collect()),
        )
        .unwrap();
        assert_eq!(a.faces, b.faces);
        for (va, vb) in a.vertices.iter().zip(&b.vertices) {
            assert!((va - vb).norm() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_hand_derivation_and_symmetry() {
        let va = Vector3::new(0.0, 0.0, 0.0);
        let vb = Vector3::new(1.0, 0.0, 0.0);
        let (d_sa, d_sb) = mt_vertex_jacobian(&va, &vb, -1.0, 1.0).unwrap();
        // v = (s_b v_a - s_a v_b)/(s_b - s_a) = (0.5, 0, 0)
        let v = crossing_point(&va, &vb, -1.0, 1.0);
        assert!((v - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
        // d v.x / d s_a = s_b/(s_b-s_a)^2 (v_a.x - v_b.x) = -0.25
        assert!((d_sa.x - (-0.25)).abs() < 1e-15);
        assert!((d_sb.x - (-0.25)).abs() < 1e-15);

        // swapping endpoints swaps the jacobians
        let (e_sb, e_sa) = mt_vertex_jacobian(&vb, &va, 1.0, -1.0).unwrap();
        assert!((d_sa - e_sa).norm() < 1e-15);
        assert!((d_sb - e_sb).norm() < 1e-15);
    }

    #[test]
    fn jacobian_rejects_non_crossing() {
        let va = Vector3::zeros();
        let vb = Vector3::new(1.0, 0.0, 0.0);
        assert!(mt_vertex_jacobian(&va, &vb, 1.0, 1.0).is_err());
        assert!(mt_vertex_jacobian(&va, &vb, 0.5, 0.5).is_err());
    }

    #[test]
    fn jacobian_finite_difference() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let h = 1e-4;
        for _ in 0..50 {
            let va = Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let vb = Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let sa = -(0.1 + rng.random::<f64>());
            let sb = 0.1 + rng.random::<f64>();
            let (d_sa, d_sb) = mt_vertex_jacobian(&va, &vb, sa, sb).unwrap();
            let fd_sa = (crossing_point(&va, &vb, sa + h, sb)
                - crossing_point(&va, &vb, sa - h, sb))
                / (2.0 * h);
            let fd_sb = (crossing_point(&va, &vb, sa, sb + h)
                - crossing_point(&va, &vb, sa, sb - h))
                / (2.0 * h);
            assert!((d_sa - fd_sa).norm() / fd_sa.norm().max(1e-12) < 1e-5);
            assert!((d_sb - fd_sb).norm() / fd_sb.norm().max(1e-12) < 1e-5);
        }
    }

    #[test]
    fn taylor_step_predicts_vertex_motion() {
        let lo = Vector3::new(-0.5, -0.5, -0.5);
        let hi = Vector3::new(0.5, 0.5, 0.5);
        let g = TetGrid::lattice(lo, hi, [10, 10, 10]).unwrap();
        let base: Vec<f64> = g.vertices.iter().map(|v| v.norm() - 0.3).collect();
        let out = marching_tetrahedra_full(&g, &SdfSamples(base.clone())).unwrap();

        let delta = 1e-3;
        let perturbed: Vec<f64> = base.iter().map(|s| s + delta).collect();
        let out2 = marching_tetrahedra_full(&g, &SdfSamples(perturbed)).unwrap();
        let by_edge: HashMap<(u32, u32), usize> = out2
            .crossings
            .iter()
            .enumerate()
            .map(|(i, c)| ((c.grid_a, c.grid_b), i))
            .collect();

        let mut checked = 0;
        for (i, c) in out.crossings.iter().enumerate() {
            let Some(&j) = by_edge.get(&(c.grid_a, c.grid_b)) else {
                continue; // crossing left the edge under perturbation
            };
            let (d_sa, d_sb) = mt_vertex_jacobian(
                &g.vertices[c.grid_a as usize],
                &g.vertices[c.grid_b as usize],
                c.s_a,
                c.s_b,
            )
            .unwrap();
            let predicted = out.mesh.vertices[i] + (d_sa + d_sb) * delta;
            let actual = out2.mesh.vertices[j];
            let motion = (actual - out.mesh.vertices[i]).norm();
            if motion > 1e-9 {
                let err = (predicted - actual).norm() / motion;
                assert!(err < 1e-3, "taylor mismatch at vertex {i}: {err}");
                checked += 1;
            }
        }
        assert!(checked > 100, "too few comparable crossings: {checked}");
    }

    #[test]
    fn resolution_below_eight_rejected() {
        let body = crate::mesh::icosphere(1);
        let r = build_tet_grid(
            Vector3::new(-1.5, -1.5, -1.5),
            Vector3::new(1.5, 1.5, 1.5),
            4,
            &body,
            0.1,
        );
        assert!(r.is_err());
    }
}
