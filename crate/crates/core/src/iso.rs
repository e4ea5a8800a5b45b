//! Marching cubes with per-vertex edge provenance, its inverse-normal
//! backward rule, and mesh topology checks.
//!
//! The 256-case table is generated at first use from a per-face rule: on
//! each cube face, walking its corners counter-clockwise as seen from
//! outside, every outside-to-inside edge is joined to the next
//! inside-to-outside edge. The rule depends only on the face's four corner
//! values, so the two cells sharing a face always agree and the extracted
//! surface is watertight (including the ambiguous cases).

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;
use crate::mesh::{Provenance, TriangleMesh};
use crate::Vec3;

/// Cube corners are `c = x + 2y + 4z`; edges join corners differing in one bit.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

fn edge_index(a: usize, b: usize) -> usize {
    let key = (a.min(b), a.max(b));
    EDGES.iter().position(|&e| e == key).expect("corners must share an edge")
}

/// Corners of the six cube faces, counter-clockwise about the outward normal.
fn cube_faces() -> [[usize; 4]; 6] {
    let mut faces = [[0; 4]; 6];
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let corner = |a: usize, b: usize| (side << axis) | (a << u) | (b << v);
            faces[2 * axis + side] = if side == 1 {
                [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)]
            } else {
                [corner(0, 0), corner(0, 1), corner(1, 1), corner(1, 0)]
            };
        }
    }
    faces
}

fn share_face(faces: &[[usize; 4]; 6], e1: usize, e2: usize) -> bool {
    let (a, b) = EDGES[e1];
    let (c, d) = EDGES[e2];
    faces.iter().any(|q| [a, b, c, d].iter().all(|x| q.contains(x)))
}

/// Triangulates polygon `0..n` using only diagonals accepted by `allowed`.
/// A diagonal joining two vertices on the same cube face could be chosen
/// again by the neighbouring cell, which would make that edge non-manifold;
/// diagonals between vertices without a common face belong to one cell only.
fn triangulate(n: usize, allowed: &dyn Fn(usize, usize) -> bool) -> Option<Vec<[usize; 3]>> {
    fn sub(i: usize, j: usize, allowed: &dyn Fn(usize, usize) -> bool) -> Option<Vec<[usize; 3]>> {
        if j - i < 2 {
            return Some(Vec::new());
        }
        for k in i + 1..j {
            if (k - i > 1 && !allowed(i, k)) || (j - k > 1 && !allowed(k, j)) {
                continue;
            }
            if let (Some(mut a), Some(b)) = (sub(i, k, allowed), sub(k, j, allowed)) {
                a.push([i, k, j]);
                a.extend(b);
                return Some(a);
            }
        }
        None
    }
    sub(0, n - 1, allowed)
}

/// Triangles (as edge-index triples) for each of the 256 inside/outside
/// corner configurations; bit `c` set means corner `c` is inside.
fn case_table() -> &'static [Vec<[u8; 3]>] {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let faces = cube_faces();
        (0..256usize)
            .map(|case| {
                let inside = |c: usize| (case >> c) & 1 == 1;
                let mut next = [usize::MAX; 12];
                for q in &faces {
                    for i in 0..4 {
                        let (a, b) = (q[i], q[(i + 1) % 4]);
                        if inside(a) || !inside(b) {
                            continue;
                        }
                        // Entry edge (outside -> inside); find the next exit.
                        for j in 1..4 {
                            let (c, d) = (q[(i + j) % 4], q[(i + j + 1) % 4]);
                            if inside(c) && !inside(d) {
                                next[edge_index(a, b)] = edge_index(c, d);
                                break;
                            }
                        }
                    }
                }
                let mut tris = Vec::new();
                let mut seen = [false; 12];
                for start in 0..12 {
                    if next[start] == usize::MAX || seen[start] {
                        continue;
                    }
                    let mut ring = Vec::new();
                    let mut e = start;
                    while !seen[e] {
                        seen[e] = true;
                        ring.push(e as u8);
                        e = next[e];
                    }
                let allowed = |a: usize, b: usize| !share_face(&faces, ring[a] as usize, ring[b] as usize);
                    let ids = triangulate(ring.len(), &allowed)
                        .expect("every marching-cubes loop admits a manifold triangulation");
                    tris.extend(ids.iter().map(|t| t.map(|k| ring[k])));
                }
                tris
            })
            .collect()
    })
}

/// Extracts the `iso` level set of `phi` as a triangle mesh in the grid's
/// coordinate frame. Faces are wound so their normals point toward
/// increasing `phi`; `phi < iso` is the interior.
pub fn marching_cubes(phi: &ScalarGrid, iso: f64) -> Result<TriangleMesh> {
    if phi.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in scalar grid".into()));
    }
    let n = phi.res;
    if n < 2 {
        return Err(Error::EmptySurface(iso));
    }
    let table = case_table();
    let vals = &phi.values;
    let stride = [1, n, n * n];

    let mut vertices = Vec::new();
    let mut provenance = Vec::new();
    let mut edge_vertex: HashMap<usize, u32> = HashMap::new();
    let mut faces = Vec::new();

    for z in 0..n - 1 {
        for y in 0..n - 1 {
            for x in 0..n - 1 {
                let base = phi.index(x, y, z);
                let corner_node = |c: usize| base + (c & 1) * stride[0] + ((c >> 1) & 1) * stride[1] + (c >> 2) * stride[2];
                let mut case = 0usize;
                for c in 0..8 {
                    if vals[corner_node(c)] < iso {
                        case |= 1 << c;
                    }
                }
                let tris = &table[case];
                if tris.is_empty() {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                for tri in tris {
                    let mut out = [0u32; 3];
                    for (k, &e) in tri.iter().enumerate() {
                        let e = e as usize;
                        if local[e] == u32::MAX {
                            let (ca, cb) = EDGES[e];
                            let (na, nb) = (corner_node(ca), corner_node(cb));
                            let axis = if e < 4 { 0 } else if e < 8 { 1 } else { 2 };
                            let key = na * 3 + axis;
                            local[e] = *edge_vertex.entry(key).or_insert_with(|| {
                                let w = (iso - vals[na]) / (vals[nb] - vals[na]);
                                vertices.push(edge_point(phi, na, nb, w));
                                provenance.push(Provenance { node_a: na, node_b: nb, w });
                                (vertices.len() - 1) as u32
                            });
                        }
                        out[k] = local[e];
                    }
                    faces.push(out);
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::EmptySurface(iso));
    }

    let mut mesh = TriangleMesh::new(vertices, faces);
    let fallback = std::mem::take(&mut mesh.vertex_normals);
    mesh.vertex_normals = mesh
        .vertices
        .iter()
        .zip(&fallback)
        .map(|(v, f)| {
            let g = phi.gradient(v);
            let len = g.norm();
            if len > 0.0 {
                g / len
            } else {
                *f
            }
        })
        .collect();
    mesh.provenance = provenance;
    Ok(mesh)
}

fn node_coords(phi: &ScalarGrid, node: usize) -> Vec3 {
    let n = phi.res;
    phi.node_position(node % n, (node / n) % n, node / (n * n))
}

/// Point at fraction `w` along the grid edge `a -> b`.
pub fn edge_point(phi: &ScalarGrid, a: usize, b: usize, w: f64) -> Vec3 {
    node_coords(phi, a) * (1.0 - w) + node_coords(phi, b) * w
}

/// Backpropagates vertex gradients to grid values with `dV/dPhi = -n`,
/// splitting each vertex's scalar onto its edge endpoints by `(1 - w, w)`.
pub fn mc_backward(mesh: &TriangleMesh, dl_dv: &[Vec3], grid_len: usize) -> Result<Vec<f64>> {
    if mesh.provenance.len() != mesh.vertices.len() || mesh.vertex_normals.len() != mesh.vertices.len() {
        return Err(Error::Data("mesh has no marching-cubes provenance".into()));
    }
    if dl_dv.len() != mesh.vertices.len() {
        return Err(Error::Data(format!(
            "{} vertex gradients for {} vertices",
            dl_dv.len(),
            mesh.vertices.len()
        )));
    }
    let mut out = vec![0.0; grid_len];
    for ((p, n), g) in mesh.provenance.iter().zip(&mesh.vertex_normals).zip(dl_dv) {
        let s = -g.dot(n);
        out[p.node_a] += (1.0 - p.w) * s;
        out[p.node_b] += p.w * s;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WatertightReport {
    pub is_watertight: bool,
    pub boundary_edge_count: usize,
    pub euler_characteristic: i64,
}

/// Counts undirected-edge incidences; watertight iff every edge has exactly
/// two incident faces.
pub fn watertight_check(mesh: &TriangleMesh) -> WatertightReport {
    let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let boundary = edges.values().filter(|&&c| c == 1).count();
    let manifold = edges.values().all(|&c| c == 2);
    let mut used = vec![false; mesh.vertices.len()];
    for f in &mesh.faces {
        for &v in f {
            used[v as usize] = true;
        }
    }
    let v = used.iter().filter(|&&u| u).count() as i64;
    WatertightReport {
        is_watertight: manifold && !mesh.faces.is_empty(),
        boundary_edge_count: boundary,
        euler_characteristic: v - edges.len() as i64 + mesh.faces.len() as i64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(n: usize, origin: f64, spacing: f64, f: impl Fn(&Vec3) -> f64) -> ScalarGrid {
        let mut g = ScalarGrid::filled(n, origin, spacing, 0.0);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let i = g.index(x, y, z);
                    g.values[i] = f(&g.node_position(x, y, z));
                }
            }
        }
        g
    }

    fn sphere_grid(n: usize, r: f64) -> ScalarGrid {
        let c = Vec3::repeat(0.5);
        sampled(n, 0.0, 1.0 / (n - 1) as f64, |p| (p - c).norm() - r)
    }

    #[test]
    fn every_case_is_closed_inside_the_cube() {
        // Every crossed cube edge carries exactly one surface vertex.
        let table = case_table();
        for (case, tris) in table.iter().enumerate() {
            let crossed = (0..12)
                .filter(|&e| {
                    let (a, b) = EDGES[e];
                    ((case >> a) & 1) != ((case >> b) & 1)
                })
                .count();
            let used: std::collections::HashSet<u8> = tris.iter().flatten().copied().collect();
            assert_eq!(used.len(), crossed, "case {case}");
        }
        assert!(table[0].is_empty() && table[255].is_empty());
    }

    #[test]
    fn single_corner_case() {
        let mut g = ScalarGrid::filled(2, 0.0, 1.0, 1.0);
        g.values[0] = -1.0;
        let m = marching_cubes(&g, 0.0).unwrap();
        assert_eq!(m.faces.len(), 1);
        assert_eq!(m.vertices.len(), 3);
        for p in &m.provenance {
            assert_eq!(p.w, 0.5);
        }
        // Normal points away from the inside corner (toward increasing phi).
        let n = m.face_normal(0);
        assert!(n.dot(&Vec3::repeat(1.0)) > 0.0);
    }

    #[test]
    fn orientation_follows_increasing_phi() {
        let g = sphere_grid(24, 0.3);
        let m = marching_cubes(&g, 0.0).unwrap();
        let c = Vec3::repeat(0.5);
        for f in 0..m.faces.len() {
            let [a, b, cc] = m.triangle(f);
            let centroid = (a + b + cc) / 3.0;
            assert!(m.face_normal(f).dot(&(centroid - c)) > 0.0);
        }
        for (v, n) in m.vertices.iter().zip(&m.vertex_normals) {
            assert!(n.dot(&(v - c).normalize()) > 0.99);
        }
    }

    #[test]
    fn sphere_at_64() {
        let n = 64;
        let r = 0.3;
        let g = sphere_grid(n, r);
        let m = marching_cubes(&g, 0.0).unwrap();
        let cell = g.spacing;
        let c = Vec3::repeat(0.5);
        let worst = m.vertices.iter().map(|v| ((v - c).norm() - r).abs()).fold(0.0, f64::max);
        assert!(worst <= 0.5 * cell, "max radial error {} cells", worst / cell);
        let rep = watertight_check(&m);
        assert!(rep.is_watertight);
        assert_eq!(rep.euler_characteristic, 2);
    }

    #[test]
    fn provenance_reconstructs_vertices_bit_exactly() {
        let g = sphere_grid(20, 0.27);
        let m = marching_cubes(&g, 0.0).unwrap();
        for (v, p) in m.vertices.iter().zip(&m.provenance) {
            assert_eq!(*v, edge_point(&g, p.node_a, p.node_b, p.w));
            assert!((0.0..=1.0).contains(&p.w));
        }
        let again = marching_cubes(&g, 0.0).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn uniform_grid_has_no_surface() {
        let g = ScalarGrid::filled(8, 0.0, 1.0, 1.0);
        assert!(matches!(marching_cubes(&g, 0.0), Err(Error::EmptySurface(_))));
    }

    #[test]
    fn random_fields_are_watertight() {
        // Ambiguous faces are frequent in white noise; the padded border
        // keeps the surface closed.
        let mut s = 0x9e37_79b9_7f4a_7c15u64;
        for trial in 0..20 {
            let n = 10;
            let mut g = ScalarGrid::filled(n, 0.0, 1.0, 1.0);
            for z in 1..n - 1 {
                for y in 1..n - 1 {
                    for x in 1..n - 1 {
                        s ^= s << 13;
                        s ^= s >> 7;
                        s ^= s << 17;
                        let i = g.index(x, y, z);
                        g.values[i] = (s % 1000) as f64 / 500.0 - 1.0;
                    }
                }
            }
            if let Ok(m) = marching_cubes(&g, 0.0) {
                let rep = watertight_check(&m);
                assert!(rep.is_watertight, "trial {trial}: {rep:?}");
            }
        }
    }

    #[test]
    fn two_tori_have_zero_euler_characteristic() {
        let torus = |p: &Vec3, c: Vec3| {
            let q = p - c;
            let ring = (q.x * q.x + q.y * q.y).sqrt() - 0.15;
            (ring * ring + q.z * q.z).sqrt() - 0.06
        };
        let (c1, c2) = (Vec3::new(0.28, 0.5, 0.5), Vec3::new(0.72, 0.5, 0.5));
        let g = sampled(72, 0.0, 1.0 / 71.0, |p| torus(p, c1).min(torus(p, c2)));
        let m = marching_cubes(&g, 0.0).unwrap();
        let (labels, count) = m.face_components();
        assert_eq!(count, 2);
        for k in 0..count {
            let part = m.extract_component(&labels, k);
            let rep = watertight_check(&part);
            assert!(rep.is_watertight);
            assert_eq!(rep.euler_characteristic, 0);
        }
    }

    #[test]
    fn single_triangle_report() {
        let m = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]);
        let rep = watertight_check(&m);
        assert!(!rep.is_watertight);
        assert_eq!(rep.boundary_edge_count, 3);
    }

    #[test]
    fn backward_zero_and_orthogonal() {
        let g = sphere_grid(16, 0.3);
        let m = marching_cubes(&g, 0.0).unwrap();
        let zero = mc_backward(&m, &vec![Vec3::zeros(); m.vertices.len()], g.values.len()).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let tangent: Vec<Vec3> = m
            .vertex_normals
            .iter()
            .map(|n| n.cross(&Vec3::new(0.3, -0.7, 0.2)))
            .collect();
        let out = mc_backward(&m, &tangent, g.values.len()).unwrap();
        assert!(out.iter().all(|&v| v.abs() < 1e-15));
        let no_prov = TriangleMesh::new(m.vertices.clone(), m.faces.clone());
        assert!(mc_backward(&no_prov, &tangent, g.values.len()).is_err());
    }

    #[test]
    fn backward_matches_hand_distribution_for_linear_loss() {
        let g = sphere_grid(16, 0.3);
        let m = marching_cubes(&g, 0.0).unwrap();
        let c = Vec3::new(0.2, -1.3, 0.7);
        let out = mc_backward(&m, &vec![c; m.vertices.len()], g.values.len()).unwrap();
        let mut expect = vec![0.0; g.values.len()];
        for (p, n) in m.provenance.iter().zip(&m.vertex_normals) {
            let s = -(c.x * n.x + c.y * n.y + c.z * n.z);
            expect[p.node_a] += s * (1.0 - p.w);
            expect[p.node_b] += s * p.w;
        }
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn descent_step_shrinks_sphere() {
        let g = sphere_grid(32, 0.3);
        let m = marching_cubes(&g, 0.0).unwrap();
        let c = Vec3::repeat(0.5);
        let mean_radius = |m: &TriangleMesh| {
            m.vertices.iter().map(|v| (v - c).norm()).sum::<f64>() / m.vertices.len() as f64
        };
        let k = m.vertices.len() as f64;
        let dl_dv: Vec<Vec3> = m.vertices.iter().map(|v| (v - c).normalize() / k).collect();
        let grad = mc_backward(&m, &dl_dv, g.values.len()).unwrap();
        let mut stepped = g.clone();
        for (v, d) in stepped.values.iter_mut().zip(&grad) {
            *v -= 2.0 * d;
        }
        let m2 = marching_cubes(&stepped, 0.0).unwrap();
        assert!(mean_radius(&m2) < mean_radius(&m));
    }
}
