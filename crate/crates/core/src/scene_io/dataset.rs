//! On-disk dataset layout: `cameras.json` plus image, mask and depth files.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4};
use serde::{Deserialize, Serialize};

use super::image::{read_mask_png, read_pfm, read_png_linear, write_mask_png, write_pfm, write_png, Image};
use super::{Camera, CameraView, DomainBox, Scene};
use crate::error::{data_err, Error, Result};

pub const CAMERAS_FILE: &str = "cameras.json";

#[derive(Debug, Serialize, Deserialize)]
struct CamerasFile {
    views: Vec<ViewEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain_box: Option<DomainBox>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ViewEntry {
    intrinsics: [[f64; 3]; 3],
    world_to_camera: [[f64; 4]; 3],
    image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    env_index: Option<usize>,
}

/// Resolves an optional auxiliary file. A missing entry, or a missing parent
/// directory, means "not provided"; a missing file inside an existing
/// directory is an error.
fn optional_file(root: &Path, rel: &Option<String>) -> Result<Option<std::path::PathBuf>> {
    let Some(rel) = rel else { return Ok(None) };
    let path = root.join(rel);
    if path.exists() {
        return Ok(Some(path));
    }
    match path.parent() {
        Some(dir) if dir != root && !dir.exists() => Ok(None),
        _ => data_err(format!("missing file {}", path.display())),
    }
}

fn single_channel(img: Image, what: &str, path: &Path) -> Result<Image> {
    if img.channels != 1 {
        return data_err(format!("{what} {} must have one channel", path.display()));
    }
    Ok(img)
}

pub fn load_scene(dir: &Path) -> Result<Scene> {
    let cam_path = dir.join(CAMERAS_FILE);
    let text = fs::read_to_string(&cam_path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", cam_path.display())))?;
    let file: CamerasFile = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("garbled {}: {e}", cam_path.display())))?;
    if file.views.len() < 2 {
        return data_err("at least 2 views required");
    }

    let mut views = Vec::with_capacity(file.views.len());
    for (i, entry) in file.views.iter().enumerate() {
        let image_path = dir.join(&entry.image);
        let image = read_png_linear(&image_path)?;
        let (w, h) = (image.width, image.height);
        let k = Matrix3::from_fn(|r, c| entry.intrinsics[r][c]);
        let rt = Matrix3x4::from_fn(|r, c| entry.world_to_camera[r][c]);
        let camera = Camera::new(k, rt, w, h);

        let mask = match optional_file(dir, &entry.mask)? {
            Some(p) => read_mask_png(&p)?,
            None => Image::filled(w, h, 1, 1.0),
        };
        let (depth, valid) = match optional_file(dir, &entry.depth)? {
            Some(p) => {
                let depth = single_channel(read_pfm(&p)?, "depth", &p)?;
                let valid = match optional_file(dir, &entry.valid)? {
                    Some(vp) => read_mask_png(&vp)?,
                    None => {
                        let data = depth
                            .data
                            .iter()
                            .map(|&d| if d > 0.0 && d.is_finite() { 1.0 } else { 0.0 })
                            .collect();
                        Image { data, ..depth.clone() }
                    }
                };
                (depth, valid)
            }
            None => (Image::new(w, h, 1), Image::new(w, h, 1)),
        };
        let view = CameraView {
            camera,
            image,
            mask,
            depth,
            valid,
            env_index: entry.env_index.unwrap_or(i),
        };
        view.validate()
            .map_err(|e| Error::Data(format!("view {i} ({}): {e}", entry.image)))?;
        views.push(view);
    }

    let domain_box = match file.domain_box {
        Some(b) => b,
        None => crate::visualhull::estimate_domain_box(&views)?,
    };
    Scene::new(views, domain_box)
}

/// Writes `scene` in the layout read by [`load_scene`]. Images are stored
/// as 8-bit sRGB, so only already-quantized images round-trip exactly.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<()> {
    for sub in ["images", "masks", "depths"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let mut entries = Vec::with_capacity(scene.views.len());
    for (i, v) in scene.views.iter().enumerate() {
        let image = format!("images/{i:03}.png");
        let mask = format!("masks/{i:03}.png");
        let depth = format!("depths/{i:03}.pfm");
        let valid = format!("depths/{i:03}_valid.png");
        write_png(&v.image, &dir.join(&image))?;
        write_mask_png(&v.mask, &dir.join(&mask))?;
        write_pfm(&v.depth, &dir.join(&depth))?;
        write_mask_png(&v.valid, &dir.join(&valid))?;
        let k = &v.camera.intrinsics;
        let rt = v.camera.world_to_camera();
        entries.push(ViewEntry {
            intrinsics: std::array::from_fn(|r| std::array::from_fn(|c| k[(r, c)])),
            world_to_camera: std::array::from_fn(|r| std::array::from_fn(|c| rt[(r, c)])),
            image,
            mask: Some(mask),
            depth: Some(depth),
            valid: Some(valid),
            env_index: Some(v.env_index),
        });
    }
    let file = CamerasFile {
        views: entries,
        domain_box: Some(scene.domain_box),
    };
    fs::write(dir.join(CAMERAS_FILE), serde_json::to_string_pretty(&file)?)?;
    Ok(())
}
