//! Calibrated multi-view scenes and file-format plumbing.
//!
//! World points map to the unit cube of every grid through the scene's
//! [`DomainBox`]. Cameras follow the x-right / y-down / z-forward pinhole
//! model with pixel `(i, j)` centered at `(i + 0.5, j + 0.5)`.

mod camera;
mod dataset;
mod image;
mod obj;

pub use self::camera::{project_homogeneous, Camera, Projection};
pub use self::dataset::{load_scene, write_scene, CAMERAS_FILE};
pub use self::image::{
    decode_srgb8, encode_srgb8, export_image, linear_to_srgb, read_mask_png, read_pfm,
    read_png_linear, srgb_to_linear, write_mask_png, write_pfm, write_png, Image,
};
pub use self::obj::{check_obj_loads, export_mesh, read_obj, ExportedFiles, ATLAS_SIZE};

use serde::{Deserialize, Serialize};

use crate::error::{data_err, Result};
use crate::Vec3;

/// Rotation orthonormality tolerance applied when loading scenes.
pub const ROTATION_TOLERANCE: f64 = 1e-4;

/// Axis-aligned world box mapped onto `[0, 1]^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl DomainBox {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self {
            min: min.into(),
            max: max.into(),
        }
    }

    /// Smallest cube centered on `(min + max) / 2` that contains the box.
    pub fn cubified(min: Vec3, max: Vec3) -> Self {
        let c = (min + max) / 2.0;
        let half = (max - min).max() / 2.0;
        let h = Vec3::repeat(half);
        Self::new(c - h, c + h)
    }

    pub fn min(&self) -> Vec3 {
        Vec3::from(self.min)
    }

    pub fn max(&self) -> Vec3 {
        Vec3::from(self.max)
    }

    pub fn extent(&self) -> Vec3 {
        self.max() - self.min()
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn to_unit(&self, p: &Vec3) -> Vec3 {
        (p - self.min()).component_div(&self.extent())
    }

    pub fn to_world(&self, u: &Vec3) -> Vec3 {
        self.min() + u.component_mul(&self.extent())
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.extent();
        if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) || !e.iter().all(|v| v.is_finite()) {
            return data_err(format!("domain_box must have positive extent, got {:?}", self));
        }
        Ok(())
    }
}

/// One calibrated view with its observations.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub camera: Camera,
    /// Linear RGB.
    pub image: Image,
    /// Binary foreground mask (1 channel).
    pub mask: Image,
    /// Metric camera-space depth (1 channel).
    pub depth: Image,
    /// Binary depth validity (1 channel).
    pub valid: Image,
    pub env_index: usize,
}

impl CameraView {
    pub fn width(&self) -> usize {
        self.camera.width
    }

    pub fn height(&self) -> usize {
        self.camera.height
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate(ROTATION_TOLERANCE)?;
        let (w, h) = (self.width(), self.height());
        for (name, img, ch) in [
            ("image", &self.image, 3),
            ("mask", &self.mask, 1),
            ("depth", &self.depth, 1),
            ("valid", &self.valid, 1),
        ] {
            if img.width != w || img.height != h || img.channels != ch {
                return data_err(format!(
                    "{name} is {}x{}x{}, expected {w}x{h}x{ch}",
                    img.width, img.height, img.channels
                ));
            }
        }
        for (name, img) in [("mask", &self.mask), ("valid", &self.valid)] {
            if img.data.iter().any(|&v| v != 0.0 && v != 1.0) {
                return data_err(format!("{name} must be binary"));
            }
        }
        let bad_depth = self
            .depth
            .data
            .iter()
            .zip(&self.valid.data)
            .any(|(&d, &ok)| ok == 1.0 && !(d >= 0.0 && d.is_finite()));
        if bad_depth {
            return data_err("depth must be finite and non-negative where valid");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub views: Vec<CameraView>,
    pub domain_box: DomainBox,
}

impl Scene {
    pub fn new(views: Vec<CameraView>, domain_box: DomainBox) -> Result<Self> {
        let s = Self { views, domain_box };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.len() < 2 {
            return data_err("at least 2 views required");
        }
        self.domain_box.validate()?;
        for (i, v) in self.views.iter().enumerate() {
            v.validate()
                .map_err(|e| crate::Error::Data(format!("view {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn env_count(&self) -> usize {
        self.views.iter().map(|v| v.env_index + 1).max().unwrap_or(0)
    }

    /// Index of the view whose camera center is closest to `center`.
    pub fn nearest_view(&self, center: &Vec3) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, v) in self.views.iter().enumerate() {
            let d = (v.camera.center() - center).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}
