//! Synthetic multi-view datasets rendered with this crate's own renderer.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{icosphere, TriangleMesh};
use crate::pbr::{env_texel_direction, EnvironmentMap, ENV_HEIGHT, ENV_WIDTH};
use crate::raster::rasterize;
use crate::scene_io::{export_mesh, load_scene, write_scene, Camera, CameraView, DomainBox, Image, Scene};
use crate::texgrid::CHANNELS;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseShape {
    Sphere,
    BumpySphere,
    Cube,
    TwoBlobs,
}

impl std::str::FromStr for BaseShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Self::Sphere),
            "bumpy_sphere" => Ok(Self::BumpySphere),
            "cube" => Ok(Self::Cube),
            "two_blobs" => Ok(Self::TwoBlobs),
            other => Err(Error::Config(format!("unknown base shape `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TexturePattern {
    Constant,
    Stripes,
    Blobs,
}

impl std::str::FromStr for TexturePattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "stripes" => Ok(Self::Stripes),
            "blobs" => Ok(Self::Blobs),
            other => Err(Error::Config(format!("unknown texture pattern `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvPattern {
    Uniform,
    Sky,
}

impl std::str::FromStr for EnvPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "sky" => Ok(Self::Sky),
            other => Err(Error::Config(format!("unknown env pattern `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub base: BaseShape,
    pub texture: TexturePattern,
    pub env: EnvPattern,
    pub n_views: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Novel views written to `heldout/`.
    pub heldout_views: usize,
    /// Relative standard deviation of Gaussian depth noise.
    pub depth_noise: f64,
    /// Fraction of valid depth pixels replaced by gross outliers.
    pub depth_outliers: f64,
    /// Depth is marked invalid within this many pixels (chessboard distance)
    /// of the silhouette boundary, like filtered stereo depth at occluding
    /// contours.
    #[serde(default)]
    pub depth_edge_band: usize,
    pub supersample: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            base: BaseShape::BumpySphere,
            texture: TexturePattern::Blobs,
            env: EnvPattern::Sky,
            n_views: 24,
            width: 256,
            height: 256,
            seed: 0,
            heldout_views: 4,
            depth_noise: 0.0,
            depth_outliers: 0.0,
            depth_edge_band: 0,
            supersample: 4,
        }
    }
}

/// Half-width of the world-space domain cube of every synthetic scene.
pub const SYNTH_DOMAIN_HALF: f64 = 1.0;
pub const CAMERA_DISTANCE: f64 = 3.0;
/// Focal length as a multiple of the image width.
pub const FOCAL_FACTOR: f64 = 1.8;
/// Elevation of the main training ring, in degrees. Level with the object so
/// its underside is seen by silhouettes and depth.
const LOW_RING_DEG: f64 = 0.0;

/// Ground-truth surface of a base shape, centered at the origin.
pub fn base_mesh(base: BaseShape) -> TriangleMesh {
    match base {
        BaseShape::Sphere => icosphere(Vec3::zeros(), 0.5, 5),
        BaseShape::BumpySphere => {
            let mut m = icosphere(Vec3::zeros(), 1.0, 5);
            m.map_vertices(|d| d * bumpy_radius(d));
            TriangleMesh::new(m.vertices, m.faces)
        }
        BaseShape::Cube => {
            let mut m = icosphere(Vec3::zeros(), 1.0, 5);
            m.map_vertices(|d| d * (0.4 / d.amax()));
            TriangleMesh::new(m.vertices, m.faces)
        }
        BaseShape::TwoBlobs => TriangleMesh::merge(&[
            icosphere(Vec3::new(-0.32, 0.0, 0.0), 0.3, 4),
            icosphere(Vec3::new(0.32, 0.05, 0.0), 0.28, 4),
        ]),
    }
}

/// Radius of the bumpy sphere along unit direction `d` (y up): six vertical
/// ridges plus a gentle polar flattening.
pub fn bumpy_radius(d: &Vec3) -> f64 {
    let phi = d.z.atan2(d.x);
    let sin2 = 1.0 - d.y * d.y;
    0.5 * (1.0 + 0.1 * (6.0 * phi).cos() * sin2 + 0.04 * (2.0 * d.y * d.y - 1.0))
}

/// Ground-truth reflectance `[a_d, a_s, alpha]` at world point `p`.
pub fn texture_at(pattern: TexturePattern, p: &Vec3) -> [f64; CHANNELS] {
    let mix = |a: [f64; 3], b: [f64; 3], t: f64| -> [f64; 3] { std::array::from_fn(|k| a[k] + (b[k] - a[k]) * t) };
    let warm = [0.75, 0.45, 0.25];
    let cool = [0.2, 0.45, 0.7];
    let a_d = match pattern {
        TexturePattern::Constant => [0.6, 0.45, 0.3],
        TexturePattern::Stripes => mix(warm, cool, 0.5 + 0.5 * (std::f64::consts::TAU * 2.0 * p.y).sin()),
        TexturePattern::Blobs => {
            let t = (std::f64::consts::TAU * 1.5 * p.x).sin()
                * (std::f64::consts::TAU * 1.5 * p.y).sin()
                * (std::f64::consts::TAU * 1.5 * p.z).cos();
            mix(warm, cool, 0.5 + 0.5 * t)
        }
    };
    [a_d[0], a_d[1], a_d[2], 0.05, 0.05, 0.05, 0.5]
}

/// Ground-truth lighting.
pub fn env_map(pattern: EnvPattern) -> EnvironmentMap {
    match pattern {
        EnvPattern::Uniform => EnvironmentMap::uniform(ENV_HEIGHT, ENV_WIDTH, 1.0 / std::f64::consts::PI),
        EnvPattern::Sky => {
            let sun = Vec3::new(0.5, 0.7, 0.5).normalize();
            let mut rad = Vec::with_capacity(ENV_HEIGHT * ENV_WIDTH * 3);
            for h in 0..ENV_HEIGHT {
                for w in 0..ENV_WIDTH {
                    let (d, _) = env_texel_direction(h, w, ENV_HEIGHT, ENV_WIDTH);
                    let sky = 0.12 + 0.18 * d.y.max(0.0);
                    let s = d.dot(&sun).max(0.0).powi(4);
                    rad.push(sky + 0.45 * s);
                    rad.push(sky + 0.4 * s + 0.02);
                    rad.push(sky + 0.3 * s + 0.06 * d.y.max(0.0));
                }
            }
            EnvironmentMap::from_radiance(ENV_HEIGHT, ENV_WIDTH, &rad).expect("sky radiance is valid")
        }
    }
}

fn ring_camera(azimuth: f64, elevation: f64, width: usize, height: usize) -> Camera {
    let eye = Vec3::new(
        elevation.cos() * azimuth.cos(),
        elevation.sin(),
        elevation.cos() * azimuth.sin(),
    ) * CAMERA_DISTANCE;
    Camera::look_at(eye, Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), FOCAL_FACTOR * width as f64, width, height)
}

/// Training cameras: three quarters on a level ring, the rest on a top ring.
pub fn training_cameras(n: usize, width: usize, height: usize) -> Vec<Camera> {
    let top = n / 4;
    let ring = n - top;
    let tau = std::f64::consts::TAU;
    let mut cams: Vec<Camera> = (0..ring)
        .map(|i| ring_camera(tau * i as f64 / ring as f64, LOW_RING_DEG.to_radians(), width, height))
        .collect();
    cams.extend(
        (0..top).map(|i| ring_camera(tau * (i as f64 + 0.5) / top as f64, 55f64.to_radians(), width, height)),
    );
    cams
}

/// Novel cameras between the training rings.
pub fn heldout_cameras(n: usize, width: usize, height: usize) -> Vec<Camera> {
    let tau = std::f64::consts::TAU;
    (0..n)
        .map(|i| ring_camera(tau * (i as f64 + 0.37) / n as f64, 30f64.to_radians(), width, height))
        .collect()
}

/// Box-filters an `s`-times supersampled image.
fn downsample(img: &[f64], w: usize, h: usize, c: usize, s: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h * c];
    let sw = w * s;
    let inv = 1.0 / (s * s) as f64;
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for dy in 0..s {
                    for dx in 0..s {
                        acc += img[((y * s + dy) * sw + x * s + dx) * c + ch];
                    }
                }
                out[(y * w + x) * c + ch] = acc * inv;
            }
        }
    }
    out
}

/// Shaded RGB of `mesh` with per-vertex reflectance at `camera`'s
/// resolution times `supersample`, box-filtered back down.
pub fn render_gt(
    mesh: &TriangleMesh,
    params: &[[f64; CHANNELS]],
    env: &EnvironmentMap,
    camera: &Camera,
    supersample: usize,
) -> Result<Vec<f64>> {
    let cam = camera.scaled(supersample);
    let attrs: Vec<f64> = params.iter().flat_map(|p| p.iter().copied()).collect();
    let gb = rasterize(mesh, &attrs, CHANNELS, &cam)?;
    let rgb = super::optimize::shade_gbuffer(&gb, &cam, env)?;
    let flat: Vec<f64> = rgb.iter().flat_map(|c| c.iter().copied()).collect();
    Ok(downsample(&flat, camera.width, camera.height, 3, supersample))
}

fn render_views<R: Rng>(
    mesh: &TriangleMesh,
    params: &[[f64; CHANNELS]],
    env: &EnvironmentMap,
    cams: Vec<Camera>,
    opts: &SynthOptions,
    rng: &mut R,
) -> Result<Vec<CameraView>> {
    let noise = Normal::new(0.0, opts.depth_noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut views = Vec::with_capacity(cams.len());
    for (i, camera) in cams.into_iter().enumerate() {
        let (w, h) = (camera.width, camera.height);
        let rgb = render_gt(mesh, params, env, &camera, opts.supersample)?;
        let gb = rasterize(mesh, &vec![0.0; mesh.vertices.len()], 1, &camera)?;
        let mut depth = gb.depth.clone();
        for (d, &c) in depth.iter_mut().zip(&gb.coverage) {
            if c > 0.5 {
                if opts.depth_outliers > 0.0 && rng.gen::<f64>() < opts.depth_outliers {
                    *d *= rng.gen_range(0.8..1.2);
                } else if opts.depth_noise > 0.0 {
                    *d *= 1.0 + noise.sample(rng);
                }
            }
        }
        let valid = erode(&gb.coverage, w, h, opts.depth_edge_band);
        for (d, &v) in depth.iter_mut().zip(&valid) {
            if v == 0.0 {
                *d = 0.0;
            }
        }
        views.push(CameraView {
            camera,
            image: Image::from_f64(w, h, 3, &rgb),
            mask: Image::from_f64(w, h, 1, &gb.coverage),
            depth: Image::from_f64(w, h, 1, &depth),
            valid: Image::from_f64(w, h, 1, &valid),
            env_index: i,
        });
    }
    Ok(views)
}

/// Binary erosion with a (2r+1)^2 square; pixels outside the image count as
/// empty.
fn erode(mask: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut out = mask.to_vec();
    for _ in 0..r {
        let cur = out.clone();
        for y in 0..h {
            for x in 0..w {
                if cur[y * w + x] == 0.0 {
                    continue;
                }
                let edge = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
                if edge || (y - 1..=y + 1).any(|yy| (x - 1..=x + 1).any(|xx| cur[yy * w + xx] == 0.0)) {
                    out[y * w + x] = 0.0;
                }
            }
        }
    }
    out
}

/// Per-vertex ground-truth reflectance of `mesh`.
pub fn gt_params(mesh: &TriangleMesh, pattern: TexturePattern) -> Vec<[f64; CHANNELS]> {
    mesh.vertices.iter().map(|p| texture_at(pattern, p)).collect()
}

/// Renders a synthetic dataset into `dir` (training views, `heldout/`,
/// `gt_mesh.obj`, `gt_env.pfm`) and returns the training scene as read back
/// from disk.
pub fn make_synthetic_scene(opts: &SynthOptions, dir: &Path) -> Result<Scene> {
    if opts.n_views < 2 {
        return Err(Error::Config("a synthetic scene needs at least 2 views".into()));
    }
    if opts.width == 0 || opts.height == 0 || opts.supersample == 0 {
        return Err(Error::Config("image size and supersampling must be positive".into()));
    }
    if !(0.0..1.0).contains(&opts.depth_outliers) || !(opts.depth_noise >= 0.0) {
        return Err(Error::Config("depth noise settings out of range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mesh = base_mesh(opts.base);
    let params = gt_params(&mesh, opts.texture);
    let env = env_map(opts.env);
    let domain = DomainBox::cubified(Vec3::repeat(-SYNTH_DOMAIN_HALF), Vec3::repeat(SYNTH_DOMAIN_HALF));

    let train = render_views(&mesh, &params, &env, training_cameras(opts.n_views, opts.width, opts.height), opts, &mut rng)?;
    std::fs::create_dir_all(dir)?;
    write_scene(&Scene::new(train, domain)?, dir)?;
    if opts.heldout_views >= 2 {
        let clean = SynthOptions {
            depth_noise: 0.0,
            depth_outliers: 0.0,
            depth_edge_band: 0,
            ..opts.clone()
        };
        let cams = heldout_cameras(opts.heldout_views, opts.width, opts.height);
        let held = render_views(&mesh, &params, &env, cams, &clean, &mut rng)?;
        write_scene(&Scene::new(held, domain)?, &dir.join("heldout"))?;
    }
    export_mesh(&mesh, &params, &dir.join("gt_mesh"))?;
    env.save_pfm(&dir.join("gt_env.pfm"))?;
    std::fs::write(dir.join("synth.json"), serde_json::to_string_pretty(opts)?)?;
    load_scene(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::ray_triangle;
    use crate::iso::watertight_check;

    #[test]
    fn ring_cameras_look_at_the_center() {
        for cam in training_cameras(24, 64, 64).iter().chain(&heldout_cameras(4, 64, 64)) {
            let to_c = -cam.center();
            assert!((cam.forward().dot(&to_c) - to_c.norm()).abs() < 1e-9);
        }
        assert_eq!(training_cameras(24, 8, 8).len(), 24);
    }

    #[test]
    fn base_meshes_fit_the_domain_and_close() {
        for base in [BaseShape::Sphere, BaseShape::BumpySphere, BaseShape::Cube, BaseShape::TwoBlobs] {
            let m = base_mesh(base);
            let (lo, hi) = m.bounding_box().unwrap();
            assert!(lo.amin() > -0.7 && hi.amax() < 0.7, "{base:?}");
            assert!(watertight_check(&m).is_watertight, "{base:?}");
        }
    }

    #[test]
    fn emitted_depth_matches_ray_casting() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SynthOptions {
            base: BaseShape::Sphere,
            n_views: 4,
            width: 48,
            height: 40,
            heldout_views: 0,
            supersample: 2,
            ..Default::default()
        };
        let scene = make_synthetic_scene(&opts, dir.path()).unwrap();
        let mesh = base_mesh(BaseShape::Sphere);
        let v = &scene.views[1];
        let mut checked = 0;
        for y in 0..v.height() {
            for x in 0..v.width() {
                if v.mask.at(x, y, 0) != 1.0 {
                    continue;
                }
                let o = v.camera.center();
                let d = v.camera.ray_direction(x as f64 + 0.5, y as f64 + 0.5).normalize();
                let t = (0..mesh.faces.len())
                    .filter_map(|f| ray_triangle(&o, &d, &mesh.triangle(f)))
                    .fold(f64::INFINITY, f64::min);
                let z = t * d.dot(&v.camera.forward());
                assert!((z - v.depth.at(x, y, 0) as f64).abs() < 1e-5 * z, "pixel ({x},{y})");
                checked += 1;
            }
        }
        assert!(checked > 100);
        // Masks are exactly the coverage of the ground-truth mesh.
        let gb = rasterize(&mesh, &vec![0.0; mesh.vertices.len()], 1, &v.camera).unwrap();
        assert_eq!(v.mask.to_f64(), gb.coverage);
        assert!(dir.path().join("gt_mesh.obj").exists());
    }

    #[test]
    fn synthetic_scene_is_reproducible() {
        let opts = SynthOptions {
            n_views: 3,
            width: 24,
            height: 24,
            heldout_views: 2,
            supersample: 2,
            depth_noise: 0.01,
            depth_outliers: 0.05,
            ..Default::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = make_synthetic_scene(&opts, a.path()).unwrap();
        let sb = make_synthetic_scene(&opts, b.path()).unwrap();
        assert_eq!(sa, sb);
        assert!(a.path().join("heldout").join("cameras.json").exists());
    }

    #[test]
    fn erosion_strips_a_band() {
        let (w, h) = (7, 6);
        let mut m = vec![0.0; w * h];
        for y in 1..5 {
            for x in 1..6 {
                m[y * w + x] = 1.0;
            }
        }
        let e = erode(&m, w, h, 1);
        let kept: Vec<usize> = (0..w * h).filter(|&i| e[i] == 1.0).collect();
        assert_eq!(kept, vec![2 * w + 2, 2 * w + 3, 2 * w + 4, 3 * w + 2, 3 * w + 3, 3 * w + 4]);
        assert_eq!(erode(&m, w, h, 0), m);
        assert_eq!(erode(&vec![1.0; w * h], w, h, 1)[0], 0.0);
    }
}
