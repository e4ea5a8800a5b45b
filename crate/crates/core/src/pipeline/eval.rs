//! Forward rendering of trained runs and evaluation metrics.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::artifacts::RunArtifacts;
use super::optimize::{shade_gbuffer, vertex_attributes};
use crate::bvh::Bvh;
use crate::error::{data_err, Error, Result};
use crate::mesh::TriangleMesh;
use crate::raster::{rasterize, GBuffer};
use crate::scene_io::{load_scene, read_obj, Camera, Image, Scene};
use crate::texgrid::CHANNELS;

/// Rendered image with the G-buffer it came from.
#[derive(Debug, Clone)]
pub struct Rendering {
    pub rgb: Image,
    pub gbuffer: GBuffer,
}

/// Forward-only render with the env map of the nearest training view.
pub fn render_full(art: &RunArtifacts, camera: &Camera) -> Result<Rendering> {
    let attrs = vertex_attributes(&art.vertex_params);
    let gb = rasterize(&art.mesh, &attrs, CHANNELS, camera)?;
    let env = art.env_for(&camera.center());
    let rgb = shade_gbuffer(&gb, camera, env)?;
    let flat: Vec<f64> = rgb.iter().flat_map(|c| c.iter().copied()).collect();
    Ok(Rendering {
        rgb: Image::from_f64(camera.width, camera.height, 3, &flat),
        gbuffer: gb,
    })
}

pub fn render_view(art: &RunArtifacts, camera: &Camera) -> Result<Image> {
    Ok(render_full(art, camera)?.rgb)
}

/// Mean of the two directed mean point-to-surface distances between
/// `n_samples` area-uniform samples of each mesh and the other mesh.
pub fn chamfer(a: &TriangleMesh, b: &TriangleMesh, n_samples: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return data_err("chamfer distance needs two non-empty meshes");
    }
    if n_samples == 0 {
        return Err(Error::Config("chamfer needs at least one sample".into()));
    }
    let directed = |from: &TriangleMesh, to: &TriangleMesh, seed: u64| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (pts, _) = from.sample_surface(n_samples, &mut rng)?;
        let bvh = Bvh::new(to);
        let d: Vec<f64> = pts.iter().map(|p| bvh.distance(p)).collect();
        Ok(crate::losses_opt::pairwise_sum(&d) / n_samples as f64)
    };
    // Each direction uses its own stream so the result is symmetric.
    let ab = directed(a, b, seed)?;
    let ba = directed(b, a, seed)?;
    Ok(0.5 * (ab + ba))
}

/// `10 log10(1 / MSE)` over the pixels where `region` is set; identical
/// images give `f64::INFINITY`.
pub fn psnr(img: &[f64], reference: &[f64], channels: usize, region: &[bool]) -> Result<f64> {
    if img.len() != reference.len() || region.len() * channels != img.len() {
        return data_err("psnr inputs have mismatched sizes");
    }
    let mut sq = Vec::with_capacity(img.len());
    for (i, (a, b)) in img.iter().zip(reference).enumerate() {
        if region[i / channels] {
            sq.push((a - b) * (a - b));
        }
    }
    if sq.is_empty() {
        return data_err("psnr region is empty");
    }
    let mse = crate::losses_opt::pairwise_sum(&sq) / sq.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// PSNR of a rendering against an observed view over the union of the
/// rendered coverage and the observed mask.
pub fn view_psnr(r: &Rendering, image: &Image, mask: &Image) -> Result<f64> {
    let region: Vec<bool> = (0..r.gbuffer.pixel_count())
        .map(|i| r.gbuffer.coverage[i] > 0.5 || mask.data[i] > 0.5)
        .collect();
    psnr(&r.rgb.to_f64(), &image.to_f64(), 3, &region)
}

/// Mean PSNR over all views of `scene`.
pub fn scene_psnr(art: &RunArtifacts, scene: &Scene) -> Result<f64> {
    let mut sum = 0.0;
    for v in &scene.views {
        let r = render_full(art, &v.camera)?;
        sum += view_psnr(&r, &v.image, &v.mask)?;
    }
    Ok(sum / scene.views.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub chamfer: Option<f64>,
    /// Chamfer divided by the domain box diagonal.
    pub chamfer_relative: Option<f64>,
    pub train_psnr: f64,
    pub heldout_psnr: Option<f64>,
    pub vertices: usize,
    pub faces: usize,
}

pub const CHAMFER_SAMPLES: usize = 100_000;

/// Evaluates a run against a scene directory; `gt_mesh.obj` and the
/// `heldout/` sub-scene are used when present.
pub fn evaluate(art: &RunArtifacts, scene_dir: &Path, seed: u64) -> Result<EvalReport> {
    let scene = load_scene(scene_dir)?;
    let train_psnr = scene_psnr(art, &scene)?;
    let gt_path = scene_dir.join("gt_mesh.obj");
    let chamfer = if gt_path.exists() {
        Some(self::chamfer(&art.mesh, &read_obj(&gt_path)?, CHAMFER_SAMPLES, seed)?)
    } else {
        None
    };
    let heldout_dir = scene_dir.join("heldout");
    let heldout_psnr = if heldout_dir.join(crate::scene_io::CAMERAS_FILE).exists() {
        Some(scene_psnr(art, &load_scene(&heldout_dir)?)?)
    } else {
        None
    };
    Ok(EvalReport {
        chamfer,
        chamfer_relative: chamfer.map(|c| c / art.domain_box.diagonal()),
        train_psnr,
        heldout_psnr,
        vertices: art.mesh.vertices.len(),
        faces: art.mesh.faces.len(),
    })
}
