//! Run outputs and their on-disk layout.
//!
//! ```text
//! <out>/mesh.obj, mesh.mtl, mesh_*.png   exported textured mesh
//! <out>/cloud.json                       final oriented points + grid res
//! <out>/texture.mftg                     texture grid
//! <out>/env_NNN.pfm                      one environment map per env index
//! <out>/run.json                         domain box, camera centers, config
//! <out>/loss.csv                         per-epoch losses
//! <out>/checkpoints/epoch_NNNN/          cloud, texture and env maps
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::OptimConfig;
use super::optimize::{extract_surface, Model};
use crate::error::{data_err, Result};
use crate::losses_opt::{read_loss_csv, write_loss_csv, LossRecord};
use crate::mesh::TriangleMesh;
use crate::pbr::EnvironmentMap;
use crate::psr::{OrientedPointCloud, PsrConfig, PsrSolver};
use crate::scene_io::{export_mesh, DomainBox, ExportedFiles, Scene};
use crate::texgrid::{TextureGrid, CHANNELS};
use crate::Vec3;

#[derive(Debug, Serialize, Deserialize)]
struct CloudFile {
    grid_res: usize,
    positions: Vec<[f64; 3]>,
    normals: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunFile {
    domain_box: DomainBox,
    /// Training camera centers with the env map each one used.
    env_views: Vec<([f64; 3], usize)>,
    env_count: usize,
    config: OptimConfig,
}

/// A finished (or loaded) reconstruction.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    /// Final surface in world coordinates.
    pub mesh: TriangleMesh,
    /// Activated reflectance at each mesh vertex.
    pub vertex_params: Vec<[f64; CHANNELS]>,
    pub cloud: OrientedPointCloud,
    pub grid_res: usize,
    pub texture: TextureGrid,
    pub envs: Vec<EnvironmentMap>,
    pub env_views: Vec<(Vec3, usize)>,
    pub domain_box: DomainBox,
    pub losses: Vec<LossRecord>,
    pub config: OptimConfig,
}

fn write_cloud(path: &Path, cloud: &OrientedPointCloud, grid_res: usize) -> Result<()> {
    let f = CloudFile {
        grid_res,
        positions: cloud.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
        normals: cloud.normals.iter().map(|p| [p.x, p.y, p.z]).collect(),
    };
    fs::write(path, serde_json::to_string(&f)?)?;
    Ok(())
}

pub fn read_cloud(path: &Path) -> Result<(OrientedPointCloud, usize)> {
    let f: CloudFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let cloud = OrientedPointCloud::new(
        f.positions.into_iter().map(Vec3::from).collect(),
        f.normals.into_iter().map(Vec3::from).collect(),
    )?;
    Ok((cloud, f.grid_res))
}

pub fn save_cloud(path: &Path, cloud: &OrientedPointCloud, grid_res: usize) -> Result<()> {
    write_cloud(path, cloud, grid_res)
}

fn env_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("env_{i:03}.pfm"))
}

/// Writes the learnable state after `epoch` epochs.
pub fn write_checkpoint(out: &Path, epoch: usize, model: &Model) -> Result<PathBuf> {
    let dir = out.join("checkpoints").join(format!("epoch_{epoch:04}"));
    fs::create_dir_all(&dir)?;
    write_cloud(&dir.join("cloud.json"), &model.cloud, 0)?;
    model.texture.save(&dir.join("texture.mftg"))?;
    for (i, e) in model.envs.iter().enumerate() {
        e.save_pfm(&env_path(&dir, i))?;
    }
    Ok(dir)
}

/// Surface of `cloud` at `grid_res` in world coordinates with its per-vertex
/// reflectance.
pub fn final_surface(
    cloud: &OrientedPointCloud,
    grid_res: usize,
    sigma: f64,
    texture: &TextureGrid,
    domain: &DomainBox,
) -> Result<(TriangleMesh, Vec<[f64; CHANNELS]>)> {
    let mut solver = PsrSolver::new(
        grid_res,
        PsrConfig {
            sigma,
            ..Default::default()
        },
    )?;
    let surf = extract_surface(&mut solver, cloud, domain)?;
    let params = texture.sample(&surf.unit.vertices);
    Ok((surf.world, params))
}

impl RunArtifacts {
    pub fn from_model(
        scene: &Scene,
        cfg: &OptimConfig,
        model: Model,
        grid_res: usize,
        losses: Vec<LossRecord>,
    ) -> Result<Self> {
        let (mesh, vertex_params) =
            final_surface(&model.cloud, grid_res, cfg.sigma, &model.texture, &scene.domain_box)?;
        Ok(Self {
            mesh,
            vertex_params,
            cloud: model.cloud,
            grid_res,
            texture: model.texture,
            envs: model.envs,
            env_views: scene.views.iter().map(|v| (v.camera.center(), v.env_index)).collect(),
            domain_box: scene.domain_box,
            losses,
            config: cfg.clone(),
        })
    }

    /// Env map used for a camera centered at `center`: the one of the
    /// nearest training view.
    pub fn env_for(&self, center: &Vec3) -> &EnvironmentMap {
        let mut best = (f64::INFINITY, 0);
        for (c, e) in &self.env_views {
            let d = (c - center).norm_squared();
            if d < best.0 {
                best = (d, *e);
            }
        }
        &self.envs[best.1]
    }

    pub fn export(&self, stem: &Path) -> Result<ExportedFiles> {
        export_mesh(&self.mesh, &self.vertex_params, stem)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.export(&dir.join("mesh"))?;
        write_cloud(&dir.join("cloud.json"), &self.cloud, self.grid_res)?;
        self.texture.save(&dir.join("texture.mftg"))?;
        for (i, e) in self.envs.iter().enumerate() {
            e.save_pfm(&env_path(dir, i))?;
        }
        let run = RunFile {
            domain_box: self.domain_box,
            env_views: self.env_views.iter().map(|(c, e)| ([c.x, c.y, c.z], *e)).collect(),
            env_count: self.envs.len(),
            config: self.config.clone(),
        };
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&run)?)?;
        write_loss_csv(&dir.join("loss.csv"), &self.losses)?;
        Ok(())
    }

    /// Loads a saved run; the mesh is re-extracted from the stored cloud.
    pub fn load(dir: &Path) -> Result<Self> {
        let run: RunFile = serde_json::from_str(&fs::read_to_string(dir.join("run.json"))?)?;
        let (cloud, grid_res) = read_cloud(&dir.join("cloud.json"))?;
        let texture = TextureGrid::load(&dir.join("texture.mftg"))?;
        let envs = (0..run.env_count)
            .map(|i| EnvironmentMap::load_pfm(&env_path(dir, i)))
            .collect::<Result<Vec<_>>>()?;
        if run.env_views.iter().any(|(_, e)| *e >= envs.len()) {
            return data_err("run.json references a missing environment map");
        }
        let losses = read_loss_csv(&dir.join("loss.csv"))?;
        let (mesh, vertex_params) = final_surface(&cloud, grid_res, run.config.sigma, &texture, &run.domain_box)?;
        Ok(Self {
            mesh,
            vertex_params,
            cloud,
            grid_res,
            texture,
            envs,
            env_views: run.env_views.into_iter().map(|(c, e)| (Vec3::from(c), e)).collect(),
            domain_box: run.domain_box,
            losses,
            config: run.config,
        })
    }
}
