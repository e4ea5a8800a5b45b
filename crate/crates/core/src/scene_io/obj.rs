//! Wavefront OBJ/MTL export with a per-face texture atlas.
//!
//! Every face gets its own square cell in a fixed-size atlas; the triangle
//! occupies the lower-left half of the cell. Texels are filled by
//! interpolating the per-vertex parameters with barycentrics clamped to the
//! triangle, so texels outside the triangle act as padding.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::image::{encode_srgb8, Image};
use crate::error::{data_err, Result};
use crate::mesh::TriangleMesh;
use crate::Vec3;

pub const ATLAS_SIZE: usize = 1024;

/// Paths written by [`export_mesh`].
#[derive(Debug, Clone)]
pub struct ExportedFiles {
    pub obj: PathBuf,
    pub mtl: PathBuf,
    pub diffuse: PathBuf,
    pub specular: PathBuf,
    pub roughness: PathBuf,
}

struct Atlas {
    cells_per_row: usize,
    cell: usize,
}

impl Atlas {
    fn new(faces: usize) -> Self {
        let cells_per_row = ((faces as f64).sqrt().ceil() as usize).max(1);
        Self {
            cells_per_row,
            cell: (ATLAS_SIZE / cells_per_row).max(1),
        }
    }

    /// Texel-space corners of face `f`'s triangle.
    fn corners(&self, f: usize) -> [[f64; 2]; 3] {
        let x0 = ((f % self.cells_per_row) * self.cell) as f64;
        let y0 = ((f / self.cells_per_row) * self.cell) as f64;
        let s = self.cell as f64;
        let pad = if self.cell >= 4 { 1.0 } else { 0.0 };
        [
            [x0 + pad, y0 + pad],
            [x0 + s - pad, y0 + pad],
            [x0 + pad, y0 + s - pad],
        ]
    }
}

/// Barycentrics of `p` in triangle `t`, clamped onto the triangle.
fn clamped_barycentric(t: &[[f64; 2]; 3], p: [f64; 2]) -> [f64; 3] {
    let (ax, ay) = (t[1][0] - t[0][0], t[1][1] - t[0][1]);
    let (bx, by) = (t[2][0] - t[0][0], t[2][1] - t[0][1]);
    let det = ax * by - ay * bx;
    if det.abs() < 1e-12 {
        return [1.0 / 3.0; 3];
    }
    let (px, py) = (p[0] - t[0][0], p[1] - t[0][1]);
    let u = ((px * by - py * bx) / det).max(0.0);
    let v = ((ax * py - ay * px) / det).max(0.0);
    let s = u + v;
    let (u, v) = if s > 1.0 { (u / s, v / s) } else { (u, v) };
    [1.0 - u - v, u, v]
}

fn bake_atlas(mesh: &TriangleMesh, params: &[[f64; 7]], atlas: &Atlas) -> [Image; 3] {
    let mut diffuse = Image::new(ATLAS_SIZE, ATLAS_SIZE, 3);
    let mut specular = Image::new(ATLAS_SIZE, ATLAS_SIZE, 3);
    let mut rough = Image::new(ATLAS_SIZE, ATLAS_SIZE, 1);
    for (f, face) in mesh.faces.iter().enumerate() {
        let t = atlas.corners(f);
        let x0 = (f % atlas.cells_per_row) * atlas.cell;
        let y0 = (f / atlas.cells_per_row) * atlas.cell;
        for y in y0..(y0 + atlas.cell).min(ATLAS_SIZE) {
            for x in x0..(x0 + atlas.cell).min(ATLAS_SIZE) {
                let b = clamped_barycentric(&t, [x as f64 + 0.5, y as f64 + 0.5]);
                let mut p = [0.0; 7];
                for (k, &vi) in face.iter().enumerate() {
                    for c in 0..7 {
                        p[c] += b[k] * params[vi as usize][c];
                    }
                }
                // Image rows run top to bottom; UV v runs bottom to top.
                let row = ATLAS_SIZE - 1 - y;
                for c in 0..3 {
                    diffuse.set(x, row, c, p[c] as f32);
                    specular.set(x, row, c, p[3 + c] as f32);
                }
                rough.set(x, row, 0, p[6] as f32);
            }
        }
    }
    [diffuse, specular, rough]
}

/// Writes a linear-valued data map (no sRGB curve) as 8-bit PNG.
fn write_data_png(img: &Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| ((v as f64).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let color = if img.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer(path, &bytes, img.width as u32, img.height as u32, color)?;
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Exports `mesh` to `<stem>.obj` + `<stem>.mtl` and three atlas PNGs.
///
/// `params` holds per-vertex activated reflectance
/// `[a_d.r, a_d.g, a_d.b, a_s.r, a_s.g, a_s.b, alpha]`. Diffuse albedo is
/// also baked as sRGB vertex colors.
pub fn export_mesh(mesh: &TriangleMesh, params: &[[f64; 7]], stem: &Path) -> Result<ExportedFiles> {
    if mesh.is_empty() {
        return data_err("cannot export an empty mesh");
    }
    if params.len() != mesh.vertices.len() {
        return data_err(format!(
            "{} parameter rows for {} vertices",
            params.len(),
            mesh.vertices.len()
        ));
    }
    let files = ExportedFiles {
        obj: stem.with_extension("obj"),
        mtl: stem.with_extension("mtl"),
        diffuse: with_suffix(stem, "_diffuse.png"),
        specular: with_suffix(stem, "_specular.png"),
        roughness: with_suffix(stem, "_roughness.png"),
    };
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }

    let atlas = Atlas::new(mesh.faces.len());
    let [diffuse, specular, rough] = bake_atlas(mesh, params, &atlas);
    super::image::write_png(&diffuse, &files.diffuse)?;
    write_data_png(&specular, &files.specular)?;
    write_data_png(&rough, &files.roughness)?;

    let mut mtl = String::new();
    writeln!(mtl, "newmtl surface").unwrap();
    writeln!(mtl, "Ka 0 0 0\nKd 1 1 1\nKs 0.04 0.04 0.04\nNs 100\nillum 2").unwrap();
    writeln!(mtl, "map_Kd {}", file_name(&files.diffuse)).unwrap();
    writeln!(mtl, "map_Ks {}", file_name(&files.specular)).unwrap();
    writeln!(mtl, "map_Pr {}", file_name(&files.roughness)).unwrap();
    fs::write(&files.mtl, mtl)?;

    let normals = if mesh.vertex_normals.len() == mesh.vertices.len() {
        mesh.vertex_normals.clone()
    } else {
        mesh.area_weighted_normals()
    };
    let mut obj = String::with_capacity(mesh.vertices.len() * 80 + mesh.faces.len() * 120);
    writeln!(obj, "mtllib {}", file_name(&files.mtl)).unwrap();
    for (v, p) in mesh.vertices.iter().zip(params) {
        let c: Vec<f64> = (0..3).map(|k| encode_srgb8(p[k] as f32) as f64 / 255.0).collect();
        writeln!(obj, "v {} {} {} {} {} {}", v.x, v.y, v.z, c[0], c[1], c[2]).unwrap();
    }
    for n in &normals {
        writeln!(obj, "vn {} {} {}", n.x, n.y, n.z).unwrap();
    }
    let inv = 1.0 / ATLAS_SIZE as f64;
    for f in 0..mesh.faces.len() {
        for [x, y] in atlas.corners(f) {
            writeln!(obj, "vt {} {}", x * inv, y * inv).unwrap();
        }
    }
    writeln!(obj, "usemtl surface").unwrap();
    for (f, face) in mesh.faces.iter().enumerate() {
        let t = 3 * f + 1;
        let [a, b, c] = face.map(|i| i + 1);
        writeln!(obj, "f {a}/{t}/{a} {b}/{}/{b} {c}/{}/{c}", t + 1, t + 2).unwrap();
    }
    fs::write(&files.obj, obj)?;
    Ok(files)
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    stem.with_file_name(name)
}

/// Reads the `v` and `f` records of an OBJ file, preserving vertex order.
/// Polygons are fan-triangulated.
pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize| crate::Error::Data(format!("{}:{line}: malformed OBJ record", path.display()));
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    *c = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad(ln + 1))?;
                }
                vertices.push(Vec3::from(xyz));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| bad(ln + 1))?;
                    let i = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if i < 0 || i as usize >= vertices.len() {
                        return Err(bad(ln + 1));
                    }
                    idx.push(i as u32);
                }
                if idx.len() < 3 {
                    return Err(bad(ln + 1));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(TriangleMesh::new(vertices, faces))
}

/// Loads an OBJ (and its MTL) with an independent third-party parser and
/// returns `(vertex_count, triangle_count, material_count)`.
pub fn check_obj_loads(path: &Path) -> Result<(usize, usize, usize)> {
    let opts = tobj::LoadOptions {
        triangulate: true,
        single_index: false,
        ..Default::default()
    };
    let (models, materials) = tobj::load_obj(path, &opts)?;
    let materials = materials?;
    let verts = models.iter().map(|m| m.mesh.positions.len() / 3).sum();
    let tris = models.iter().map(|m| m.mesh.indices.len() / 3).sum();
    Ok((verts, tris, materials.len()))
}
