//! Initialization and the coarse-to-fine optimization loop.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::artifacts::{write_checkpoint, RunArtifacts};
use super::config::{InitMode, OptimConfig};
use crate::error::{Error, Result};
use crate::iso::{marching_cubes, mc_backward};
use crate::losses_opt::{
    depth_loss, photometric_loss, silhouette_loss, total_loss, AdamState, LossRecord, LossWeights,
};
use crate::mesh::TriangleMesh;
use crate::pbr::{shade, shade_adjoint, EnvironmentMap, ShadeInputs, ENV_HEIGHT, ENV_WIDTH};
use crate::psr::{resample, OrientedPointCloud, PsrConfig, PsrForward, PsrSolver};
use crate::raster::{raster_adjoint, rasterize, soft_silhouette, soft_silhouette_adjoint, GBuffer};
use crate::scene_io::{Camera, CameraView, DomainBox, Scene};
use crate::texgrid::{TextureGrid, CHANNELS};
use crate::visualhull::{carve, hull_mesh};
use crate::Vec3;

/// Initial oriented point cloud in unit-cube coordinates.
pub fn initialize<R: Rng>(scene: &Scene, cfg: &OptimConfig, rng: &mut R) -> Result<OrientedPointCloud> {
    cfg.validate()?;
    let k = cfg.coarse_n_points;
    match cfg.init_mode {
        InitMode::VisualHull => {
            let grid = carve(&scene.views, &scene.domain_box, cfg.hull_res)?;
            let mesh = hull_mesh(&grid)?;
            resample(&mesh, k, rng)
        }
        InitMode::Sphere => Ok(sphere_cloud(cfg.sphere_radius, k, rng)),
    }
}

/// `k` uniform samples of the sphere of radius `r` centered in the unit
/// cube, with outward normals.
pub fn sphere_cloud<R: Rng>(r: f64, k: usize, rng: &mut R) -> OrientedPointCloud {
    let c = Vec3::repeat(0.5);
    let mut positions = Vec::with_capacity(k);
    let mut normals = Vec::with_capacity(k);
    for _ in 0..k {
        let z: f64 = rng.gen_range(-1.0..=1.0);
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - z * z).max(0.0).sqrt();
        let d = Vec3::new(s * phi.cos(), s * phi.sin(), z);
        positions.push(c + d * r);
        normals.push(d);
    }
    OrientedPointCloud { positions, normals }
}

/// Per-view observations converted once to f64 buffers.
pub(crate) struct ViewData {
    pub image: Vec<f64>,
    pub mask: Vec<f64>,
    pub depth: Vec<f64>,
    pub valid: Vec<f64>,
}

impl ViewData {
    pub fn new(v: &CameraView) -> Self {
        Self {
            image: v.image.to_f64(),
            mask: v.mask.to_f64(),
            depth: v.depth.to_f64(),
            valid: v.valid.to_f64(),
        }
    }
}

/// Surface extracted from the current cloud.
pub(crate) struct Surface {
    pub fwd: PsrForward,
    /// Mesh in unit-cube coordinates with marching-cubes provenance.
    pub unit: TriangleMesh,
    pub world: TriangleMesh,
}

pub(crate) fn extract_surface(solver: &mut PsrSolver, cloud: &OrientedPointCloud, domain: &DomainBox) -> Result<Surface> {
    let fwd = solver.forward(cloud)?;
    let unit = marching_cubes(&fwd.phi, 0.0)?;
    let mut world = unit.clone();
    world.map_vertices(|v| domain.to_world(v));
    world.provenance.clear();
    Ok(Surface { fwd, unit, world })
}

/// Per-vertex activated reflectance as a flat `n x 7` attribute buffer.
pub(crate) fn vertex_attributes(params: &[[f64; CHANNELS]]) -> Vec<f64> {
    params.iter().flat_map(|p| p.iter().copied()).collect()
}

pub(crate) fn view_dirs(gb: &GBuffer, camera: &Camera) -> Vec<Vec3> {
    let eye = camera.center();
    gb.positions
        .iter()
        .zip(&gb.coverage)
        .map(|(p, &c)| {
            if c > 0.5 {
                let d = eye - p;
                let len = d.norm();
                if len > 0.0 {
                    d / len
                } else {
                    Vec3::zeros()
                }
            } else {
                Vec3::zeros()
            }
        })
        .collect()
}

/// Forward shading of a G-buffer whose attributes are activated reflectance.
pub(crate) fn shade_gbuffer(gb: &GBuffer, camera: &Camera, env: &EnvironmentMap) -> Result<Vec<[f64; 3]>> {
    let params = pixel_params(gb);
    let dirs = view_dirs(gb, camera);
    shade(
        &ShadeInputs {
            params: &params,
            normals: &gb.normals,
            view_dirs: &dirs,
            coverage: &gb.coverage,
        },
        env,
    )
}

fn pixel_params(gb: &GBuffer) -> Vec<[f64; CHANNELS]> {
    gb.attributes
        .chunks_exact(CHANNELS)
        .map(|c| std::array::from_fn(|k| c[k]))
        .collect()
}

/// Loss terms of one view.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ViewLoss {
    pub l_c: f64,
    pub l_s: f64,
    pub l_d: f64,
    pub total: f64,
}

pub(crate) struct ViewGrads {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub texture: Vec<f64>,
    pub env: Vec<f64>,
}

/// Learnable state.
#[derive(Debug, Clone)]
pub struct Model {
    pub cloud: OrientedPointCloud,
    pub texture: TextureGrid,
    pub envs: Vec<EnvironmentMap>,
}

/// Everything fixed for the duration of one view evaluation.
pub(crate) struct Ctx<'a> {
    pub cfg: &'a OptimConfig,
    pub weights: LossWeights,
    pub domain: &'a DomainBox,
}

/// Forward pass and (optionally) the full adjoint chain for one view.
pub(crate) fn view_pass(
    ctx: &Ctx<'_>,
    solver: &mut PsrSolver,
    model: &Model,
    view: &CameraView,
    data: &ViewData,
    want_grad: bool,
) -> Result<(ViewLoss, Option<ViewGrads>)> {
    let cfg = ctx.cfg;
    let w = &ctx.weights;
    let cam = &view.camera;
    let surf = extract_surface(solver, &model.cloud, ctx.domain)?;
    let params_v = model.texture.sample(&surf.unit.vertices);
    let attrs = vertex_attributes(&params_v);
    let gb = rasterize(&surf.world, &attrs, CHANNELS, cam)?;
    let env = &model.envs[view.env_index];

    let params_px = pixel_params(&gb);
    let dirs = view_dirs(&gb, cam);
    let inputs = ShadeInputs {
        params: &params_px,
        normals: &gb.normals,
        view_dirs: &dirs,
        coverage: &gb.coverage,
    };
    let rgb = shade(&inputs, env)?;
    let rgb_flat: Vec<f64> = rgb.iter().flat_map(|c| c.iter().copied()).collect();
    let region: Vec<bool> = (0..gb.pixel_count())
        .map(|i| gb.coverage[i] > 0.5 && (!cfg.use_mask || data.mask[i] > 0.5))
        .collect();
    let lc = photometric_loss(&data.image, &rgb_flat, &region, 3)?;
    let ld = depth_loss(&data.depth, &data.valid, &gb.depth, &gb.coverage, cfg.depth_loss_type)?;
    let (sil, ls) = if cfg.use_mask {
        let sil = soft_silhouette(&surf.world, cam, cfg.gamma, cfg.band)?;
        let ls = silhouette_loss(&data.mask, &sil.values, cfg.silhouette_loss_type)?;
        (Some(sil), Some(ls))
    } else {
        (None, None)
    };
    let l_s = ls.as_ref().map_or(0.0, |l| l.value);
    let loss = ViewLoss {
        l_c: lc.value,
        l_s,
        l_d: ld.value,
        total: total_loss(lc.value, l_s, ld.value, w),
    };
    if !loss.total.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss:?}")));
    }
    if !want_grad {
        return Ok((loss, None));
    }

    // Photometric path: shading -> interpolation -> texture grid.
    let d_rgb: Vec<[f64; 3]> = lc
        .grad
        .chunks_exact(3)
        .map(|g| [w.lambda_c * g[0], w.lambda_c * g[1], w.lambda_c * g[2]])
        .collect();
    let sg = shade_adjoint(&inputs, env, &d_rgb)?;
    let d_attr_px: Vec<f64> = sg.params.iter().flat_map(|p| p.iter().copied()).collect();
    let d_depth: Vec<f64> = ld.grad.iter().map(|g| w.lambda_d * g).collect();
    let (d_attr_v, mut d_vert) = raster_adjoint(&gb, &surf.world, cam, Some(&d_attr_px), Some(&d_depth))?;
    let d_params_v: Vec<[f64; CHANNELS]> = d_attr_v
        .chunks_exact(CHANNELS)
        .map(|c| std::array::from_fn(|k| c[k]))
        .collect();
    let (d_tex, _) = model.texture.sample_adjoint(&surf.unit.vertices, &d_params_v)?;

    // Geometry path: silhouette and depth -> vertices -> grid -> points.
    if let (Some(sil), Some(ls)) = (&sil, &ls) {
        let d_s: Vec<f64> = ls.grad.iter().map(|g| w.lambda_s * g).collect();
        let dv = soft_silhouette_adjoint(&surf.world, cam, sil, &d_s)?;
        for (a, b) in d_vert.iter_mut().zip(dv) {
            *a += b;
        }
    }
    let scale = ctx.domain.extent().x;
    let d_unit: Vec<Vec3> = d_vert.iter().map(|g| g * scale).collect();
    let r = solver.resolution();
    let d_phi = mc_backward(&surf.unit, &d_unit, r * r * r)?;
    let (d_pos, d_nrm) = solver.backward(&model.cloud, &surf.fwd, &d_phi)?;
    Ok((
        loss,
        Some(ViewGrads {
            positions: d_pos,
            normals: d_nrm,
            texture: d_tex,
            env: sg.env_raw,
        }),
    ))
}

fn flatten_points(cloud: &OrientedPointCloud) -> Vec<f64> {
    let mut v = cloud.flatten_positions();
    v.extend(cloud.flatten_normals());
    v
}

fn unflatten_points(flat: &[f64], cloud: &mut OrientedPointCloud) {
    let k = cloud.len();
    for i in 0..k {
        cloud.positions[i] = Vec3::new(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
        let j = 3 * (k + i);
        cloud.normals[i] = Vec3::new(flat[j], flat[j + 1], flat[j + 2]);
    }
}

/// Adam moments for every parameter block.
struct Optimizers {
    points: AdamState,
    texture: AdamState,
    envs: Vec<AdamState>,
}

impl Optimizers {
    fn new(cfg: &OptimConfig, model: &Model) -> Self {
        Self {
            points: AdamState::new("points", 6 * model.cloud.len(), cfg.lr_points),
            texture: AdamState::new("texture", model.texture.raw.len(), cfg.lr_texture),
            envs: (0..model.envs.len())
                .map(|i| AdamState::new(format!("env[{i}]"), model.envs[i].raw.len(), cfg.lr_env))
                .collect(),
        }
    }

    fn step(&mut self, model: &mut Model, env_index: usize, g: &ViewGrads, r: usize) -> Result<()> {
        let mut flat = flatten_points(&model.cloud);
        let mut grad: Vec<f64> = g.positions.iter().flat_map(|p| p.iter().copied()).collect();
        grad.extend(g.normals.iter().flat_map(|p| p.iter().copied()));
        self.points.update(&mut flat, &grad)?;
        unflatten_points(&flat, &mut model.cloud);
        model.cloud.clamp_positions(r);
        self.texture.update(&mut model.texture.raw, &g.texture)?;
        self.envs[env_index].update(&mut model.envs[env_index].raw, &g.env)?;
        Ok(())
    }
}

/// Adds epoch and view context to numeric failures.
fn with_context(e: Error, epoch: usize, view: usize) -> Error {
    match e {
        Error::Config(_) | Error::Data(_) | Error::Io(_) | Error::Image(_) | Error::Json(_) | Error::Obj(_) => e,
        Error::NonFiniteGradient(block) => {
            log::error!("epoch {epoch}, view {view}: non-finite gradient in `{block}`");
            Error::NonFiniteGradient(block)
        }
        other => Error::Numeric(format!("epoch {epoch}, view {view}: {other}")),
    }
}

/// Solves, extracts and resamples the current surface.
fn resample_cloud(
    solver: &mut PsrSolver,
    cloud: &OrientedPointCloud,
    domain: &DomainBox,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<OrientedPointCloud> {
    let surf = extract_surface(solver, cloud, domain)?;
    let mut c = resample(&surf.unit, k, rng)?;
    c.clamp_positions(solver.resolution());
    Ok(c)
}

/// Runs the full schedule. Checkpoints, the loss CSV and the final
/// artifacts go to `out` when given.
pub fn optimize(scene: &Scene, cfg: &OptimConfig, out: Option<&Path>) -> Result<RunArtifacts> {
    cfg.validate()?;
    scene.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cloud = initialize(scene, cfg, &mut rng)?;
    cloud.clamp_positions(cfg.coarse_grid_res);
    let model = Model {
        cloud,
        texture: TextureGrid::new(cfg.tex_res)?,
        envs: (0..scene.env_count())
            .map(|_| EnvironmentMap::uniform(ENV_HEIGHT, ENV_WIDTH, cfg.env_init))
            .collect(),
    };
    optimize_from(scene, cfg, model, &mut rng, out)
}

/// Runs the schedule starting from an explicit model.
pub fn optimize_from(
    scene: &Scene,
    cfg: &OptimConfig,
    mut model: Model,
    rng: &mut ChaCha8Rng,
    out: Option<&Path>,
) -> Result<RunArtifacts> {
    let psr_cfg = PsrConfig {
        sigma: cfg.sigma,
        ..Default::default()
    };
    let ctx = Ctx {
        cfg,
        weights: cfg.weights(),
        domain: &scene.domain_box,
    };
    let data: Vec<ViewData> = scene.views.iter().map(ViewData::new).collect();
    let mut solver = PsrSolver::new(cfg.coarse_grid_res, psr_cfg)?;
    let mut opt = Optimizers::new(cfg, &model);
    let mut records = Vec::with_capacity(cfg.total_epochs());
    let mut order: Vec<usize> = (0..scene.views.len()).collect();
    let started = Instant::now();

    for epoch in 0..cfg.total_epochs() {
        let fine = epoch >= cfg.coarse_epochs;
        let stage = if fine { cfg.fine() } else { cfg.coarse() };
        let local = if fine { epoch - cfg.coarse_epochs } else { epoch };
        if fine && local == 0 {
            solver = PsrSolver::new(stage.grid_res, psr_cfg)?;
            model.cloud = resample_cloud(&mut solver, &model.cloud, ctx.domain, stage.n_points, rng)
                .map_err(|e| with_context(e, epoch, 0))?;
            while model.texture.res < cfg.tex_res_fine {
                model.texture = model.texture.upsample(cfg.tex_res_fine)?;
            }
            opt.points.reset(6 * model.cloud.len());
            opt.texture.reset(model.texture.raw.len());
            log::info!(
                "stage transition: grid {}^3, {} points, texture {}^3",
                stage.grid_res,
                stage.n_points,
                model.texture.res
            );
        } else if local > 0 && local % cfg.resample_every == 0 {
            model.cloud = resample_cloud(&mut solver, &model.cloud, ctx.domain, stage.n_points, rng)
                .map_err(|e| with_context(e, epoch, 0))?;
            opt.points.reset(6 * model.cloud.len());
        }

        order.shuffle(rng);
        let mut sum = ViewLoss::default();
        for &vi in &order {
            let view = &scene.views[vi];
            let step = view_pass(&ctx, &mut solver, &model, view, &data[vi], true)
                .and_then(|(loss, g)| {
                    let g = g.expect("gradients requested");
                    opt.step(&mut model, view.env_index, &g, solver.resolution())?;
                    Ok(loss)
                })
                .map_err(|e| with_context(e, epoch, vi));
            let loss = match step {
                Ok(l) => l,
                Err(e) => {
                    if let Some(dir) = out {
                        let _ = write_checkpoint(dir, epoch, &model);
                    }
                    return Err(e);
                }
            };
            sum.l_c += loss.l_c;
            sum.l_s += loss.l_s;
            sum.l_d += loss.l_d;
            sum.total += loss.total;
        }
        let n = scene.views.len() as f64;
        let rec = LossRecord {
            epoch,
            l_c: sum.l_c / n,
            l_s: sum.l_s / n,
            l_d: sum.l_d / n,
            total: sum.total / n,
        };
        log::info!(
            "epoch {epoch}: L_c {:.5} L_s {:.5} L_d {:.5} total {:.5} ({:.1}s)",
            rec.l_c,
            rec.l_s,
            rec.l_d,
            rec.total,
            started.elapsed().as_secs_f64()
        );
        records.push(rec);
        if let Some(dir) = out {
            if (epoch + 1) % cfg.resample_every == 0 {
                write_checkpoint(dir, epoch + 1, &model)?;
            }
        }
    }

    let art = RunArtifacts::from_model(scene, cfg, model, solver.resolution(), records)?;
    if let Some(dir) = out {
        art.save(dir)?;
    }
    Ok(art)
}

/// Forward-only losses of every view for the current model.
pub fn evaluate_losses(scene: &Scene, cfg: &OptimConfig, model: &Model, grid_res: usize) -> Result<Vec<ViewLoss>> {
    let ctx = Ctx {
        cfg,
        weights: cfg.weights(),
        domain: &scene.domain_box,
    };
    let mut solver = PsrSolver::new(
        grid_res,
        PsrConfig {
            sigma: cfg.sigma,
            ..Default::default()
        },
    )?;
    scene
        .views
        .iter()
        .map(|v| view_pass(&ctx, &mut solver, model, v, &ViewData::new(v), false).map(|(l, _)| l))
        .collect()
}
