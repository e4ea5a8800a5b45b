//! Triangle meshes with optional marching-cubes provenance.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::Vec3;

/// Where a marching-cubes vertex came from: the grid edge `(node_a, node_b)`
/// and the interpolation weight placing it at `(1 - w) * a + w * b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub node_a: usize,
    pub node_b: usize,
    pub w: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    /// Counter-clockwise seen from outside.
    pub faces: Vec<[u32; 3]>,
    pub vertex_normals: Vec<Vec3>,
    /// Present only for meshes extracted by marching cubes.
    pub provenance: Vec<Provenance>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        let mut m = Self {
            vertices,
            faces,
            vertex_normals: Vec::new(),
            provenance: Vec::new(),
        };
        m.vertex_normals = m.area_weighted_normals();
        m
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized face normal (length = 2 * area).
    pub fn face_cross(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let n = self.face_cross(f);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| 0.5 * self.face_cross(f).norm())
            .sum()
    }

    pub fn area_weighted_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::zeros(); self.vertices.len()];
        for (f, face) in self.faces.iter().enumerate() {
            let n = self.face_cross(f);
            for &v in face {
                normals[v as usize] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    /// Applies `f` to every vertex. Vertex normals are left untouched, which
    /// is only correct for translations and uniform scalings.
    pub fn map_vertices(&mut self, f: impl Fn(&Vec3) -> Vec3) {
        for v in &mut self.vertices {
            *v = f(v);
        }
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        Some((lo, hi))
    }

    /// Samples `k` points uniformly by area; returns positions and the
    /// index of the face each one landed on.
    pub fn sample_surface<R: Rng>(&self, k: usize, rng: &mut R) -> Result<(Vec<Vec3>, Vec<usize>)> {
        if k == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        let mut cdf = Vec::with_capacity(self.faces.len());
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            total += 0.5 * self.face_cross(f).norm();
            cdf.push(total);
        }
        if !(total > 0.0) {
            return Err(Error::Numeric("cannot sample a zero-area mesh".into()));
        }
        let mut points = Vec::with_capacity(k);
        let mut face_ids = Vec::with_capacity(k);
        for _ in 0..k {
            let t = rng.gen::<f64>() * total;
            let f = cdf.partition_point(|&c| c <= t).min(cdf.len() - 1);
            let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let [a, b, c] = self.triangle(f);
            points.push(a + (b - a) * u + (c - a) * v);
            face_ids.push(f);
        }
        Ok((points, face_ids))
    }

    /// Labels each face with a connected-component id (faces sharing a
    /// vertex are connected). Returns `(labels, component_count)`.
    pub fn face_components(&self) -> (Vec<usize>, usize) {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for face in &self.faces {
            let a = find(&mut parent, face[0] as usize);
            for &v in &face[1..] {
                let b = find(&mut parent, v as usize);
                if a != b {
                    parent[b] = a;
                }
            }
        }
        let mut ids = HashMap::new();
        let labels = self
            .faces
            .iter()
            .map(|face| {
                let root = find(&mut parent, face[0] as usize);
                let next = ids.len();
                *ids.entry(root).or_insert(next)
            })
            .collect();
        (labels, ids.len())
    }

    /// Sub-mesh made of the faces with `labels[f] == which`.
    pub fn extract_component(&self, labels: &[usize], which: usize) -> TriangleMesh {
        let mut remap = HashMap::new();
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (f, face) in self.faces.iter().enumerate() {
            if labels[f] != which {
                continue;
            }
            let mut out = [0u32; 3];
            for (k, &v) in face.iter().enumerate() {
                out[k] = *remap.entry(v).or_insert_with(|| {
                    vertices.push(self.vertices[v as usize]);
                    (vertices.len() - 1) as u32
                });
            }
            faces.push(out);
        }
        TriangleMesh::new(vertices, faces)
    }

    /// Concatenates meshes, offsetting face indices.
    pub fn merge(parts: &[TriangleMesh]) -> TriangleMesh {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for part in parts {
            let off = vertices.len() as u32;
            vertices.extend_from_slice(&part.vertices);
            faces.extend(part.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        }
        TriangleMesh::new(vertices, faces)
    }
}

/// Axis-aligned unit cube `[0,1]^3` as 8 vertices and 12 outward triangles.
pub fn unit_cube() -> TriangleMesh {
    let vertices = (0..8)
        .map(|c| Vec3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64))
        .collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    TriangleMesh::new(vertices, faces)
}

/// Icosphere of the given radius and subdivision level, outward winding.
pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
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
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| center + v * radius).collect();
    TriangleMesh::new(vertices, faces)
}
