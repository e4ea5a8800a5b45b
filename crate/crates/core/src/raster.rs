//! Hard z-buffered rasterization with perspective-correct interpolation, a
//! soft silhouette for boundary gradients, and the adjoints of both.
//!
//! Pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`; buffers are stored
//! row-major with index `x + width * y`. Triangles with a vertex at or behind
//! the near plane `z <= NEAR` are skipped.

use std::collections::HashMap;

use crate::error::{data_err, Error, Result};
use crate::mesh::TriangleMesh;
use crate::scene_io::Camera;
use crate::Vec3;

/// Near-plane depth below which triangles are dropped.
pub const NEAR: f64 = 1e-6;

/// Default influence band of the soft silhouette, in pixels.
pub const DEFAULT_BAND: f64 = 3.0;

/// Default soft-silhouette sharpness, in squared pixels.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Per-pixel outputs of [`rasterize`].
#[derive(Debug, Clone)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// 1 where a triangle covers the pixel center, else 0.
    pub coverage: Vec<f64>,
    /// Camera-space z of the visible surface, 0 where uncovered.
    pub depth: Vec<f64>,
    /// Visible face or -1.
    pub face_id: Vec<i64>,
    /// Perspective-correct barycentrics of the visible face.
    pub barycentrics: Vec<[f64; 3]>,
    /// `channels` interpolated attributes per pixel.
    pub attributes: Vec<f64>,
    /// Interpolated and renormalized world-space vertex normals.
    pub normals: Vec<Vec3>,
    /// Interpolated world-space surface point.
    pub positions: Vec<Vec3>,
}

impl GBuffer {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn is_covered(&self, i: usize) -> bool {
        self.face_id[i] >= 0
    }
}

#[inline]
fn orient(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Screen positions and depths of all vertices; `None` behind the near plane.
fn project_vertices(mesh: &TriangleMesh, camera: &Camera) -> Vec<Option<[f64; 3]>> {
    mesh.vertices
        .iter()
        .map(|v| {
            let p = camera.project(v);
            (!p.behind && p.z > NEAR).then_some([p.u, p.v, p.z])
        })
        .collect()
}

fn face_screen(proj: &[Option<[f64; 3]>], f: &[u32; 3]) -> Option<[[f64; 3]; 3]> {
    Some([proj[f[0] as usize]?, proj[f[1] as usize]?, proj[f[2] as usize]?])
}

/// Inclusive pixel range whose centers fall in `[lo, hi]`.
fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let a = (lo - 0.5).ceil().max(0.0);
    let b = (hi - 0.5).floor().min(n as f64 - 1.0);
    (a <= b).then(|| (a as usize, b as usize))
}

fn check_mesh(mesh: &TriangleMesh) -> Result<()> {
    if mesh.vertices.is_empty() || mesh.faces.is_empty() {
        return data_err("cannot rasterize an empty mesh");
    }
    Ok(())
}

/// Rasterizes `mesh` with `channels` per-vertex attributes (`attrs` is
/// `n x channels`, row-major) into `camera`'s image plane.
pub fn rasterize(mesh: &TriangleMesh, attrs: &[f64], channels: usize, camera: &Camera) -> Result<GBuffer> {
    let (w, h) = (camera.width, camera.height);
    if w * h == 0 {
        return data_err("raster target has zero pixels");
    }
    check_mesh(mesh)?;
    if attrs.len() != mesh.vertices.len() * channels {
        return data_err(format!(
            "attribute buffer has {} values, expected {} x {}",
            attrs.len(),
            mesh.vertices.len(),
            channels
        ));
    }
    let n = w * h;
    let mut gb = GBuffer {
        width: w,
        height: h,
        channels,
        coverage: vec![0.0; n],
        depth: vec![0.0; n],
        face_id: vec![-1; n],
        barycentrics: vec![[0.0; 3]; n],
        attributes: vec![0.0; n * channels],
        normals: vec![Vec3::zeros(); n],
        positions: vec![Vec3::zeros(); n],
    };
    let mut zbuf = vec![f64::INFINITY; n];
    let proj = project_vertices(mesh, camera);
    for (fi, f) in mesh.faces.iter().enumerate() {
        let Some(s) = face_screen(&proj, f) else { continue };
        let (a, b, c) = ([s[0][0], s[0][1]], [s[1][0], s[1][1]], [s[2][0], s[2][1]]);
        let area = orient(a, b, c);
        if area.abs() < 1e-12 {
            continue;
        }
        let Some((x0, x1)) = pixel_span(a[0].min(b[0]).min(c[0]), a[0].max(b[0]).max(c[0]), w) else {
            continue;
        };
        let Some((y0, y1)) = pixel_span(a[1].min(b[1]).min(c[1]), a[1].max(b[1]).max(c[1]), h) else {
            continue;
        };
        let inv_area = 1.0 / area;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let b0 = orient(b, c, p) * inv_area;
                let b1 = orient(c, a, p) * inv_area;
                let b2 = orient(a, b, p) * inv_area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                // Perspective-correct weights from screen weights.
                let q = [b0 / s[0][2], b1 / s[1][2], b2 / s[2][2]];
                let z = 1.0 / (q[0] + q[1] + q[2]);
                let i = x + w * y;
                if !(z < zbuf[i]) {
                    continue;
                }
                zbuf[i] = z;
                let l1 = q[1] * z;
                let l2 = q[2] * z;
                gb.barycentrics[i] = [1.0 - l1 - l2, l1, l2];
                gb.face_id[i] = fi as i64;
                gb.depth[i] = z;
            }
        }
    }
    for i in 0..n {
        let Ok(fi) = usize::try_from(gb.face_id[i]) else { continue };
        let f = mesh.faces[fi].map(|v| v as usize);
        let [_, l1, l2] = gb.barycentrics[i];
        gb.coverage[i] = 1.0;
        // a0 + l1 (a1 - a0) + l2 (a2 - a0) reproduces constants exactly.
        for ch in 0..channels {
            let a0 = attrs[f[0] * channels + ch];
            let a1 = attrs[f[1] * channels + ch];
            let a2 = attrs[f[2] * channels + ch];
            gb.attributes[i * channels + ch] = a0 + l1 * (a1 - a0) + l2 * (a2 - a0);
        }
        let (v0, v1, v2) = (mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        gb.positions[i] = v0 + (v1 - v0) * l1 + (v2 - v0) * l2;
        if mesh.vertex_normals.len() == mesh.vertices.len() {
            let (n0, n1, n2) = (mesh.vertex_normals[f[0]], mesh.vertex_normals[f[1]], mesh.vertex_normals[f[2]]);
            let nn = n0 + (n1 - n0) * l1 + (n2 - n0) * l2;
            let len = nn.norm();
            gb.normals[i] = if len > 0.0 { nn / len } else { mesh.face_normal(fi) };
        } else {
            gb.normals[i] = mesh.face_normal(fi);
        }
    }
    Ok(gb)
}

/// Reverse of the interpolation in [`rasterize`] with barycentrics held
/// fixed. Returns `(dL/dattrs, dL/dvertices)`; the vertex gradient carries
/// only the depth path, through each vertex's camera-space z.
pub fn raster_adjoint(
    gb: &GBuffer,
    mesh: &TriangleMesh,
    camera: &Camera,
    dl_dattributes: Option<&[f64]>,
    dl_ddepth: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<Vec3>)> {
    let n = gb.pixel_count();
    let c = gb.channels;
    if let Some(g) = dl_dattributes {
        if g.len() != n * c {
            return data_err("attribute gradient does not match the G-buffer");
        }
    }
    if let Some(g) = dl_ddepth {
        if g.len() != n {
            return data_err("depth gradient does not match the G-buffer");
        }
    }
    let nv = mesh.vertices.len();
    let mut dattrs = vec![0.0; nv * c];
    let mut dz = vec![0.0; nv];
    for i in 0..n {
        let Ok(fi) = usize::try_from(gb.face_id[i]) else { continue };
        let Some(f) = mesh.faces.get(fi) else {
            return data_err("G-buffer face id outside the mesh");
        };
        let l = gb.barycentrics[i];
        if let Some(g) = dl_dattributes {
            for ch in 0..c {
                let gv = g[i * c + ch];
                if gv != 0.0 {
                    for k in 0..3 {
                        dattrs[f[k] as usize * c + ch] += l[k] * gv;
                    }
                }
            }
        }
        if let Some(g) = dl_ddepth {
            if g[i] != 0.0 {
                for k in 0..3 {
                    dz[f[k] as usize] += l[k] * g[i];
                }
            }
        }
    }
    let zrow = camera.rotation.row(2).transpose();
    let dverts = dz.iter().map(|&d| zrow * d).collect();
    Ok((dattrs, dverts))
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Closest point parameter on segment `a b` to `p`.
#[inline]
fn segment_param(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    if l2 == 0.0 {
        return 0.0;
    }
    (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0)
}

/// A projected edge that can bound the silhouette: a fold (both neighbours
/// on one side), a boundary edge, or a non-manifold edge.
#[derive(Debug, Clone, Copy)]
struct ContourEdge {
    a: u32,
    b: u32,
    sa: [f64; 2],
    sb: [f64; 2],
}

/// Nearest contour point of a pixel center.
#[derive(Debug, Clone, Copy)]
struct Nearest {
    edge: u32,
    t: f64,
    /// `p - q` with `q` the closest contour point.
    diff: [f64; 2],
}

/// Whether the closed triangle `s` (signed doubled area `area`) covers `p`.
#[inline]
fn covers(s: &[[f64; 2]; 3], area: f64, p: [f64; 2]) -> bool {
    let inv = 1.0 / area;
    orient(s[1], s[2], p) * inv >= 0.0 && orient(s[2], s[0], p) * inv >= 0.0 && orient(s[0], s[1], p) * inv >= 0.0
}

/// Projected faces with nonzero area, bucketed into square tiles for point
/// coverage queries anywhere on the image plane.
struct FaceBins {
    faces: Vec<([[f64; 2]; 3], f64)>,
    origin: [f64; 2],
    tile: f64,
    dims: [usize; 2],
    bins: Vec<Vec<u32>>,
}

impl FaceBins {
    const TILE: f64 = 8.0;

    fn new(mesh: &TriangleMesh, proj: &[Option<[f64; 3]>]) -> Self {
        let mut faces = Vec::with_capacity(mesh.faces.len());
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for f in &mesh.faces {
            let Some(s3) = face_screen(proj, f) else { continue };
            let s = [[s3[0][0], s3[0][1]], [s3[1][0], s3[1][1]], [s3[2][0], s3[2][1]]];
            let area = orient(s[0], s[1], s[2]);
            if area.abs() < 1e-12 {
                continue;
            }
            for c in &s {
                for a in 0..2 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
            faces.push((s, area));
        }
        if faces.is_empty() {
            return Self {
                faces,
                origin: [0.0; 2],
                tile: Self::TILE,
                dims: [0; 2],
                bins: Vec::new(),
            };
        }
        // Far-off projections (vertices near the camera plane) would blow up
        // the tile count; widen tiles so the grid stays bounded.
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let tile = Self::TILE.max(span / 512.0);
        let dims = [((hi[0] - lo[0]) / tile) as usize + 1, ((hi[1] - lo[1]) / tile) as usize + 1];
        let mut bins = vec![Vec::new(); dims[0] * dims[1]];
        for (fi, (s, _)) in faces.iter().enumerate() {
            let cell = |c: f64, o: f64, n: usize| (((c - o) / tile) as usize).min(n - 1);
            let xs = s.iter().map(|c| cell(c[0], lo[0], dims[0]));
            let ys = s.iter().map(|c| cell(c[1], lo[1], dims[1]));
            let (x0, x1) = (xs.clone().min().unwrap(), xs.max().unwrap());
            let (y0, y1) = (ys.clone().min().unwrap(), ys.max().unwrap());
            for y in y0..=y1 {
                for x in x0..=x1 {
                    bins[x + dims[0] * y].push(fi as u32);
                }
            }
        }
        Self {
            faces,
            origin: lo,
            tile,
            dims,
            bins,
        }
    }

    fn covered(&self, p: [f64; 2]) -> bool {
        let fx = (p[0] - self.origin[0]) / self.tile;
        let fy = (p[1] - self.origin[1]) / self.tile;
        if !(fx >= 0.0 && fy >= 0.0) || fx >= self.dims[0] as f64 || fy >= self.dims[1] as f64 {
            return false;
        }
        let bin = &self.bins[fx as usize + self.dims[0] * fy as usize];
        bin.iter().any(|&fi| {
            let (s, area) = &self.faces[fi as usize];
            covers(s, *area, p)
        })
    }
}

/// Offset, in pixels, of the probe that decides whether a contour edge is
/// exposed.
const PROBE: f64 = 1e-4;

/// Contour edges that lie on the boundary of the projected surface. An edge
/// shared by exactly two faces whose opposite corners project to opposite
/// sides of it is interior and dropped; so is a contour edge whose outer side
/// is covered by other faces (a fold hidden behind the surface), judged at
/// its midpoint.
fn exposed_contour(mesh: &TriangleMesh, proj: &[Option<[f64; 3]>], bins: &FaceBins) -> Vec<ContourEdge> {
    let mut edges: HashMap<(u32, u32), Vec<(usize, usize)>> = HashMap::with_capacity(mesh.faces.len() * 2);
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edges.entry((a.min(b), a.max(b))).or_default().push((fi, k));
        }
    }
    let screen = |v: u32| proj[v as usize].map(|p| [p[0], p[1]]);
    let mut keys: Vec<(u32, u32)> = edges.keys().copied().collect();
    keys.sort_unstable();
    let mut out = Vec::new();
    for key in keys {
        let incident = &edges[&key];
        let (Some(sa), Some(sb)) = (screen(key.0), screen(key.1)) else { continue };
        let corner = |&(fi, k): &(usize, usize)| screen(mesh.faces[fi][(k + 2) % 3]);
        let sides: Vec<f64> = incident.iter().filter_map(corner).map(|c| orient(sa, sb, c)).collect();
        if sides.len() != incident.len() {
            continue;
        }
        if sides.len() == 2 && sides[0] * sides[1] < 0.0 {
            continue;
        }
        let e = [sb[0] - sa[0], sb[1] - sa[1]];
        let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
        if len == 0.0 {
            continue;
        }
        let mid = [0.5 * (sa[0] + sb[0]), 0.5 * (sa[1] + sb[1])];
        // Left normal of a -> b; a corner with positive orientation is on
        // its side.
        let left = [-e[1] / len, e[0] / len];
        let mut probe_sides = Vec::with_capacity(2);
        for &side in &sides {
            if side > 0.0 {
                probe_sides.push(-1.0);
            } else if side < 0.0 {
                probe_sides.push(1.0);
            }
        }
        probe_sides.dedup();
        let exposed = probe_sides
            .iter()
            .any(|&dir| !bins.covered([mid[0] + dir * PROBE * left[0], mid[1] + dir * PROBE * left[1]]));
        if exposed {
            out.push(ContourEdge {
                a: key.0,
                b: key.1,
                sa,
                sb,
            });
        }
    }
    out
}

/// `sigmoid(d^2 / gamma)` rounds to exactly 1 in f64 once `d^2 / gamma`
/// exceeds this, so pixels farther from the contour keep their hard value.
const SATURATION: f64 = 37.0;

/// Support radius actually visited: the configured band, cut at the
/// distance where the sigmoid saturates.
fn reach(gamma: f64, band: f64) -> f64 {
    band.min((SATURATION * gamma).sqrt())
}

/// Soft silhouette `s(p) = sigmoid(sign(p) d(p)^2 / gamma)` where `d` is the
/// distance from the pixel center to the nearest exposed contour edge (see
/// [`exposed_contour`]) and `sign` is +1 on hard-covered pixels, -1
/// elsewhere. Beyond the band the hard coverage is returned. The transition
/// is symmetric about the projected outline, so a mesh matching a binary
/// mask has no systematic push in or out.
#[derive(Debug, Clone)]
pub struct SoftSilhouette {
    pub width: usize,
    pub height: usize,
    pub gamma: f64,
    pub band: f64,
    pub values: Vec<f64>,
    /// Vertex pairs of the exposed contour edges.
    edges: Vec<(u32, u32)>,
    nearest: Vec<Option<Nearest>>,
    sign: Vec<f64>,
}

fn check_soft_params(gamma: f64, band: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Config(format!("soft silhouette gamma must be positive, got {gamma}")));
    }
    if !(band >= 0.0) || !band.is_finite() {
        return Err(Error::Config(format!("soft silhouette band must be nonnegative, got {band}")));
    }
    Ok(())
}

pub fn soft_silhouette(mesh: &TriangleMesh, camera: &Camera, gamma: f64, band: f64) -> Result<SoftSilhouette> {
    check_soft_params(gamma, band)?;
    check_mesh(mesh)?;
    let (w, h) = (camera.width, camera.height);
    let n = w * h;
    if n == 0 {
        return data_err("raster target has zero pixels");
    }
    let proj = project_vertices(mesh, camera);
    let bins = FaceBins::new(mesh, &proj);
    let mut sign = vec![-1.0; n];
    for (s, area) in &bins.faces {
        let xs = s.iter().map(|c| c[0]);
        let ys = s.iter().map(|c| c[1]);
        let Some((x0, x1)) = pixel_span(xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max), w)
        else {
            continue;
        };
        let Some((y0, y1)) = pixel_span(ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max), h)
        else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                if covers(s, *area, [x as f64 + 0.5, y as f64 + 0.5]) {
                    sign[x + w * y] = 1.0;
                }
            }
        }
    }
    let contour = exposed_contour(mesh, &proj, &bins);
    let r = reach(gamma, band);
    let mut best = vec![f64::INFINITY; n];
    let mut nearest: Vec<Option<Nearest>> = vec![None; n];
    for (ei, e) in contour.iter().enumerate() {
        let lo = [e.sa[0].min(e.sb[0]) - r, e.sa[1].min(e.sb[1]) - r];
        let hi = [e.sa[0].max(e.sb[0]) + r, e.sa[1].max(e.sb[1]) + r];
        let Some((x0, x1)) = pixel_span(lo[0], hi[0], w) else { continue };
        let Some((y0, y1)) = pixel_span(lo[1], hi[1], h) else { continue };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let t = segment_param(p, e.sa, e.sb);
                let q = [e.sa[0] + t * (e.sb[0] - e.sa[0]), e.sa[1] + t * (e.sb[1] - e.sa[1])];
                let diff = [p[0] - q[0], p[1] - q[1]];
                let d2 = diff[0] * diff[0] + diff[1] * diff[1];
                let i = x + w * y;
                if d2 <= r * r && d2 < best[i] {
                    best[i] = d2;
                    nearest[i] = Some(Nearest {
                        edge: ei as u32,
                        t,
                        diff,
                    });
                }
            }
        }
    }
    let values = (0..n)
        .map(|i| match nearest[i] {
            Some(_) => sigmoid(sign[i] * best[i] / gamma),
            None => 0.5 * (sign[i] + 1.0),
        })
        .collect();
    Ok(SoftSilhouette {
        width: w,
        height: h,
        gamma,
        band,
        values,
        edges: contour.iter().map(|e| (e.a, e.b)).collect(),
        nearest,
        sign,
    })
}

/// Gradient of `sum_p dl_ds[p] * s(p)` wrt the mesh vertices, chained through
/// the camera projection. `sil` must come from [`soft_silhouette`] on the
/// same mesh and camera.
pub fn soft_silhouette_adjoint(
    mesh: &TriangleMesh,
    camera: &Camera,
    sil: &SoftSilhouette,
    dl_ds: &[f64],
) -> Result<Vec<Vec3>> {
    if dl_ds.len() != sil.values.len() || sil.width != camera.width || sil.height != camera.height {
        return data_err("silhouette gradient does not match the silhouette buffer");
    }
    if sil.edges.iter().any(|&(a, b)| a.max(b) as usize >= mesh.vertices.len()) {
        return data_err("silhouette was computed for a different mesh");
    }
    let gamma = sil.gamma;
    let mut d2d = vec![[0.0f64; 2]; mesh.vertices.len()];
    for (i, near) in sil.nearest.iter().enumerate() {
        let (Some(nb), g) = (near, dl_ds[i]) else { continue };
        if g == 0.0 {
            continue;
        }
        let x = sil.sign[i] * (nb.diff[0] * nb.diff[0] + nb.diff[1] * nb.diff[1]) / gamma;
        // ds/d(d^2) = sign sigmoid(x) sigmoid(-x) / gamma.
        let dx = g * sil.sign[i] * sigmoid(x) * sigmoid(-x) / gamma;
        if dx == 0.0 {
            continue;
        }
        // d(d^2)/da = -2 (1 - t)(p - q), d(d^2)/db = -2 t (p - q).
        let (va, vb) = sil.edges[nb.edge as usize];
        for a in 0..2 {
            d2d[va as usize][a] += dx * -2.0 * (1.0 - nb.t) * nb.diff[a];
            d2d[vb as usize][a] += dx * -2.0 * nb.t * nb.diff[a];
        }
    }
    Ok(chain_screen_gradient(mesh, camera, &d2d))
}

/// Maps per-vertex gradients wrt screen `(u, v)` to world positions.
fn chain_screen_gradient(mesh: &TriangleMesh, camera: &Camera, d2d: &[[f64; 2]]) -> Vec<Vec3> {
    mesh.vertices
        .iter()
        .zip(d2d)
        .map(|(v, g)| {
            if g[0] == 0.0 && g[1] == 0.0 {
                return Vec3::zeros();
            }
            let j = camera.project_jacobian(v);
            j.row(0).transpose() * g[0] + j.row(1).transpose() * g[1]
        })
        .collect()
}
