//! Float image buffers, sRGB PNG and PFM codecs.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{data_err, Error, Result};

/// Row-major `height x width x channels` float image, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_f64(width: usize, height: usize, channels: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data: data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Bilinear sample of channel `c` at continuous pixel coordinates where
    /// pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`. Returns `None`
    /// outside the image.
    pub fn sample_bilinear(&self, u: f64, v: f64, c: usize) -> Option<f64> {
        if !(u >= 0.0 && v >= 0.0 && u <= self.width as f64 && v <= self.height as f64) {
            return None;
        }
        let x = (u - 0.5).clamp(0.0, (self.width - 1) as f64);
        let y = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let a = self.at(x0, y0, c) as f64;
        let b = self.at(x1, y0, c) as f64;
        let cc = self.at(x0, y1, c) as f64;
        let d = self.at(x1, y1, c) as f64;
        Some((a * (1.0 - fx) + b * fx) * (1.0 - fy) + (cc * (1.0 - fx) + d * fx) * fy)
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return data_err("image contains NaN or Inf values");
        }
        Ok(())
    }
}

pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

/// 8-bit sRGB code for a linear value, clamped to `[0, 1]`.
pub fn encode_srgb8(linear: f32) -> u8 {
    let c = (linear as f64).clamp(0.0, 1.0);
    (linear_to_srgb(c) * 255.0).round() as u8
}

pub fn decode_srgb8(code: u8) -> f32 {
    srgb_to_linear(code as f64 / 255.0) as f32
}

/// Tone-mapped PNG: clamp to [0,1] then sRGB encode. 1 or 3 channels.
pub fn write_png(img: &Image, path: &Path) -> Result<()> {
    img.check_finite()?;
    let bytes: Vec<u8> = img.data.iter().map(|&v| encode_srgb8(v)).collect();
    let color = match img.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        n => return data_err(format!("PNG export supports 1 or 3 channels, got {n}")),
    };
    image::save_buffer(path, &bytes, img.width as u32, img.height as u32, color)?;
    Ok(())
}

/// Binary mask PNG: 0 or 255, no tone curve.
pub fn write_mask_png(img: &Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img.data.iter().map(|&v| if v >= 0.5 { 255 } else { 0 }).collect();
    image::save_buffer(
        path,
        &bytes,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::L8,
    )?;
    Ok(())
}

/// Reads an 8-bit sRGB PNG into linear RGB.
pub fn read_png_linear(path: &Path) -> Result<Image> {
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(Image {
        width: w as usize,
        height: h as usize,
        channels: 3,
        data: rgb.as_raw().iter().map(|&b| decode_srgb8(b)).collect(),
    })
}

/// Reads a PNG as a binary single-channel mask (`> 127` is foreground).
pub fn read_mask_png(path: &Path) -> Result<Image> {
    let l = image::open(path)?.to_luma8();
    let (w, h) = l.dimensions();
    Ok(Image {
        width: w as usize,
        height: h as usize,
        channels: 1,
        data: l.as_raw().iter().map(|&b| if b > 127 { 1.0 } else { 0.0 }).collect(),
    })
}

/// Little-endian PFM (scale -1.0), rows stored bottom-to-top.
pub fn write_pfm(img: &Image, path: &Path) -> Result<()> {
    img.check_finite()?;
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        n => return data_err(format!("PFM supports 1 or 3 channels, got {n}")),
    };
    let mut out = Vec::with_capacity(img.data.len() * 4 + 32);
    write!(out, "{tag}\n{} {}\n-1.0\n", img.width, img.height)?;
    let row = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let bad = |what: &str| Error::Data(format!("{}: bad PFM {what}", path.display()));
    // Header: three whitespace-separated tokens lines, then one whitespace byte.
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    pos += 1;
    let channels = match tokens[0] {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(bad("magic")),
    };
    let width: usize = tokens[1].parse().map_err(|_| bad("width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("scale"))?;
    let little = scale < 0.0;
    let n = width * height * channels;
    if bytes.len() < pos + n * 4 {
        return Err(bad("payload length"));
    }
    let row = width * channels;
    let mut data = vec![0f32; n];
    for (k, chunk) in bytes[pos..pos + n * 4].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let file_row = k / row;
        let y = height - 1 - file_row;
        data[y * row + k % row] = v;
    }
    Ok(Image {
        width,
        height,
        channels,
        data,
    })
}

/// Writes `<stem>.png` (tone-mapped) and `<stem>.pfm` (raw linear floats).
pub fn export_image(img: &Image, stem: &Path) -> Result<()> {
    img.check_finite()?;
    write_png(img, &stem.with_extension("png"))?;
    write_pfm(img, &stem.with_extension("pfm"))
}
