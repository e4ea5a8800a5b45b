//! Optimization settings, read from a flat TOML key-value file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses_opt::{LossKind, LossWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    VisualHull,
    Sphere,
}

impl std::str::FromStr for InitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual_hull" => Ok(Self::VisualHull),
            "sphere" => Ok(Self::Sphere),
            other => Err(Error::Config(format!("unknown init_mode `{other}`"))),
        }
    }
}

/// Grid resolution, point count and epoch budget of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub grid_res: usize,
    pub n_points: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub coarse_grid_res: usize,
    pub coarse_n_points: usize,
    pub coarse_epochs: usize,
    pub fine_grid_res: usize,
    pub fine_n_points: usize,
    pub fine_epochs: usize,
    /// Epochs between point-cloud resamplings (also the checkpoint cadence).
    pub resample_every: usize,
    /// Texture grid cells per axis in the coarse stage.
    pub tex_res: usize,
    /// Texture grid cells per axis after the stage transition.
    pub tex_res_fine: usize,
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lambda_d: f64,
    pub lr_points: f64,
    pub lr_texture: f64,
    pub lr_env: f64,
    /// Poisson Gaussian bandwidth in grid cells.
    pub sigma: f64,
    /// Soft silhouette sharpness in squared pixels.
    pub gamma: f64,
    /// Soft silhouette support beyond each triangle, in pixels.
    pub band: f64,
    pub seed: u64,
    pub init_mode: InitMode,
    pub use_mask: bool,
    pub depth_loss_type: LossKind,
    pub silhouette_loss_type: LossKind,
    /// Visual hull carving resolution.
    pub hull_res: usize,
    /// Radius of the sphere initialization in unit-cube coordinates.
    pub sphere_radius: f64,
    /// Initial uniform radiance of every environment map.
    pub env_init: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            coarse_grid_res: 128,
            coarse_n_points: 10_000,
            coarse_epochs: 150,
            fine_grid_res: 256,
            fine_n_points: 60_000,
            fine_epochs: 150,
            resample_every: 50,
            tex_res: 128,
            tex_res_fine: 256,
            lambda_c: w.lambda_c,
            lambda_s: w.lambda_s,
            lambda_d: w.lambda_d,
            lr_points: 5e-4,
            lr_texture: 1e-4,
            lr_env: 1e-2,
            sigma: 2.0,
            gamma: crate::raster::DEFAULT_GAMMA,
            band: crate::raster::DEFAULT_BAND,
            seed: 0,
            init_mode: InitMode::VisualHull,
            use_mask: true,
            depth_loss_type: LossKind::L1,
            silhouette_loss_type: LossKind::L2,
            hull_res: 128,
            sphere_radius: 0.3,
            env_init: 1.0 / std::f64::consts::PI,
        }
    }
}

fn pow2(name: &str, v: usize, min: usize) -> Result<()> {
    if v < min || !v.is_power_of_two() {
        return Err(Error::Config(format!("{name} must be a power of two >= {min}, got {v}")));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

impl OptimConfig {
    pub fn coarse(&self) -> Stage {
        Stage {
            grid_res: self.coarse_grid_res,
            n_points: self.coarse_n_points,
            epochs: self.coarse_epochs,
        }
    }

    pub fn fine(&self) -> Stage {
        Stage {
            grid_res: self.fine_grid_res,
            n_points: self.fine_n_points,
            epochs: self.fine_epochs,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_c: self.lambda_c,
            lambda_s: self.lambda_s,
            lambda_d: self.lambda_d,
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.coarse_epochs + self.fine_epochs
    }

    pub fn validate(&self) -> Result<()> {
        pow2("coarse_grid_res", self.coarse_grid_res, 8)?;
        pow2("fine_grid_res", self.fine_grid_res, 8)?;
        pow2("tex_res", self.tex_res, 1)?;
        pow2("tex_res_fine", self.tex_res_fine, 1)?;
        pow2("hull_res", self.hull_res, 8)?;
        if self.fine_grid_res < self.coarse_grid_res {
            return Err(Error::Config("fine_grid_res must not be below coarse_grid_res".into()));
        }
        if self.tex_res_fine < self.tex_res {
            return Err(Error::Config("tex_res_fine must not be below tex_res".into()));
        }
        if self.coarse_n_points == 0 || self.fine_n_points == 0 {
            return Err(Error::Config("point counts must be positive".into()));
        }
        if self.resample_every == 0 {
            return Err(Error::Config("resample_every must be at least 1".into()));
        }
        self.weights().validate()?;
        for (name, v) in [
            ("lr_points", self.lr_points),
            ("lr_texture", self.lr_texture),
            ("lr_env", self.lr_env),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("env_init", self.env_init),
        ] {
            positive(name, v)?;
        }
        if !(self.band >= 0.0) || !self.band.is_finite() {
            return Err(Error::Config(format!("band must be nonnegative, got {}", self.band)));
        }
        if !(self.sphere_radius > 0.0 && self.sphere_radius < 0.5) {
            return Err(Error::Config(format!("sphere_radius must lie in (0, 0.5), got {}", self.sphere_radius)));
        }
        if !self.use_mask && self.init_mode == InitMode::VisualHull {
            return Err(Error::Config(
                "visual hull initialization needs masks; set init_mode = \"sphere\" when use_mask = false".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }
}
