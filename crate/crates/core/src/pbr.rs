//! Image-based Cook-Torrance shading under a learnable lat-long environment
//! map, with the reverse-mode derivatives of every input.
//!
//! Each environment texel is a directional light at its center direction,
//! weighted by the texel's exact solid angle. The BRDF is a Lambertian term
//! `a_d` plus `a_s * D * F * G / (4 (w_o . n)(w_i . n) + eps)` with Schlick
//! Fresnel, a GGX distribution and a separable geometry term.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{data_err, Result};
use crate::scene_io::{read_pfm, write_pfm, Image};
use crate::Vec3;

pub const F0: f64 = 0.04;
pub const DENOM_EPS: f64 = 1e-6;
pub const ENV_HEIGHT: usize = 4;
pub const ENV_WIDTH: usize = 8;

/// Unit direction of texel `(h, w)` and its solid angle. Rows run from the
/// `+y` pole (`h = 0`) to the `-y` pole; the solid angle is the exact area
/// of the latitude-longitude cell, so the texels tile the sphere.
pub fn env_texel_direction(h: usize, w: usize, height: usize, width: usize) -> (Vec3, f64) {
    let (hf, wf) = (height as f64, width as f64);
    let theta = PI * (h as f64 + 0.5) / hf;
    let phi = 2.0 * PI * (w as f64 + 0.5) / wf;
    let dir = Vec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin());
    let d_omega = (2.0 * PI / wf) * ((PI * h as f64 / hf).cos() - (PI * (h as f64 + 1.0) / hf).cos());
    (dir, d_omega)
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn softplus_inverse(y: f64) -> f64 {
    let y = y.max(1e-12);
    y + (-(-y).exp()).ln_1p()
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

/// Per-view lighting: `height x width` texels of RGB radiance stored as raw
/// values behind a softplus.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    pub height: usize,
    pub width: usize,
    /// `height * width * 3` raw values, texel-major, row `h` outermost.
    pub raw: Vec<f64>,
}

impl EnvironmentMap {
    pub fn uniform(height: usize, width: usize, radiance: f64) -> Self {
        Self {
            height,
            width,
            raw: vec![softplus_inverse(radiance); height * width * 3],
        }
    }

    pub fn from_radiance(height: usize, width: usize, radiance: &[f64]) -> Result<Self> {
        if radiance.len() != height * width * 3 {
            return data_err("environment radiance has the wrong size");
        }
        if radiance.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return data_err("environment radiance must be finite and nonnegative");
        }
        Ok(Self {
            height,
            width,
            raw: radiance.iter().map(|&v| softplus_inverse(v)).collect(),
        })
    }

    pub fn texel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn radiance(&self) -> Vec<f64> {
        self.raw.iter().map(|&v| softplus(v)).collect()
    }

    /// Texel directions and solid angles in storage order.
    pub fn texels(&self) -> Vec<(Vec3, f64)> {
        (0..self.height)
            .flat_map(|h| (0..self.width).map(move |w| (h, w)))
            .map(|(h, w)| env_texel_direction(h, w, self.height, self.width))
            .collect()
    }

    /// Saves activated radiance as a `width x height` RGB PFM.
    pub fn save_pfm(&self, path: &Path) -> Result<()> {
        let rad = self.radiance();
        let img = Image::from_f64(self.width, self.height, 3, &rad);
        write_pfm(&img, path)
    }

    pub fn load_pfm(path: &Path) -> Result<Self> {
        let img = read_pfm(path)?;
        if img.channels != 3 {
            return data_err("environment map PFM must have 3 channels");
        }
        Self::from_radiance(img.height, img.width, &img.to_f64())
    }
}

/// Reflectance at one surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrdfParams {
    pub a_d: [f64; 3],
    pub a_s: [f64; 3],
    pub alpha: f64,
}

impl BrdfParams {
    pub fn from_slice(p: &[f64; 7]) -> Self {
        Self {
            a_d: [p[0], p[1], p[2]],
            a_s: [p[3], p[4], p[5]],
            alpha: p[6],
        }
    }
}

#[inline]
fn chi(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Schlick Fresnel with the cosine clamped to `[0, 1]`.
pub fn fresnel(cos_h: f64) -> f64 {
    let c = cos_h.clamp(0.0, 1.0);
    F0 + (1.0 - F0) * (1.0 - c).powi(5)
}

/// GGX distribution for `c = h . n`; zero when `c <= 0`.
pub fn ggx_d(c: f64, alpha: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let c2 = c * c;
    // c^2 (a^2 + (1 - c^2) / c^2) = c^2 a^2 + 1 - c^2
    let q = c2 * a2 + 1.0 - c2;
    a2 * chi(c) / (PI * q * q)
}

/// One factor of the geometry term for direction `w` with `a = w . n`,
/// `b = w . h` and `c = h . n > 0`.
pub fn geometry_factor(a: f64, b: f64, c: f64, alpha: f64) -> f64 {
    if a == 0.0 || chi(b / a) == 0.0 {
        return 0.0;
    }
    let t = alpha * alpha * (1.0 - a * a) / (c * c);
    2.0 / (1.0 + (1.0 + t).sqrt())
}

/// `G_p` and its partials wrt `a`, `c` and `alpha`.
fn geometry_factor_grad(a: f64, b: f64, c: f64, alpha: f64) -> (f64, f64, f64, f64) {
    if a == 0.0 || chi(b / a) == 0.0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let a2 = alpha * alpha;
    let t = a2 * (1.0 - a * a) / (c * c);
    let root = (1.0 + t).sqrt();
    let g = 2.0 / (1.0 + root);
    let dg_dt = -1.0 / ((1.0 + root) * (1.0 + root) * root);
    let dt_da = -2.0 * a * a2 / (c * c);
    let dt_dc = -2.0 * a2 * (1.0 - a * a) / (c * c * c);
    let dt_dalpha = 2.0 * alpha * (1.0 - a * a) / (c * c);
    (g, dg_dt * dt_da, dg_dt * dt_dc, dg_dt * dt_dalpha)
}

/// Specular factor `S = D F G / (4 (w_o . n)(w_i . n) + eps)` so that the
/// Cook-Torrance term is `a_s * S`. Returns `S`, `dS/dalpha` and `dS/dn`.
fn specular(n: &Vec3, w_i: &Vec3, w_o: &Vec3, alpha: f64, want_grad: bool) -> (f64, f64, Vec3) {
    let zero = (0.0, 0.0, Vec3::zeros());
    let hs = w_i + w_o;
    let hl = hs.norm();
    if hl < 1e-12 {
        return zero;
    }
    let h = hs / hl;
    let c = h.dot(n);
    if c <= 0.0 {
        return zero;
    }
    let cos_i = n.dot(w_i);
    let cos_o = n.dot(w_o);
    let f = fresnel(w_o.dot(&h));
    let (bi, bo) = (w_i.dot(&h), w_o.dot(&h));
    let den = 4.0 * cos_o * cos_i + DENOM_EPS;
    let d = ggx_d(c, alpha);
    if !want_grad {
        let g = geometry_factor(cos_i, bi, c, alpha) * geometry_factor(cos_o, bo, c, alpha);
        return (d * f * g / den, 0.0, Vec3::zeros());
    }
    let (gi, gi_a, gi_c, gi_al) = geometry_factor_grad(cos_i, bi, c, alpha);
    let (go, go_a, go_c, go_al) = geometry_factor_grad(cos_o, bo, c, alpha);
    let g = gi * go;
    let s = d * f * g / den;
    if g == 0.0 {
        return (s, 0.0, Vec3::zeros());
    }
    let a2 = alpha * alpha;
    let c2 = c * c;
    let q = c2 * a2 + 1.0 - c2;
    let dd_dalpha = (2.0 * alpha / (PI * q * q)) * (1.0 - 2.0 * c2 * a2 / q);
    let dd_dc = -4.0 * a2 * c * (a2 - 1.0) / (PI * q * q * q);
    let dg_dalpha = gi_al * go + gi * go_al;
    let ds_dalpha = f * (dd_dalpha * g + d * dg_dalpha) / den;
    // dG/dn through a_i = n.w_i, a_o = n.w_o and c = n.h.
    let dg_dn = (w_i * gi_a + h * gi_c) * go + (w_o * go_a + h * go_c) * gi;
    let dd_dn = h * dd_dc;
    let dden_dn = (w_o * cos_i + w_i * cos_o) * 4.0;
    let ds_dn = (dd_dn * g + dg_dn * d) * (f / den) - dden_dn * (s / den);
    (s, ds_dalpha, ds_dn)
}

/// Full BRDF value per color channel.
pub fn brdf(w_i: &Vec3, w_o: &Vec3, n: &Vec3, p: &BrdfParams) -> [f64; 3] {
    let (s, _, _) = specular(n, w_i, w_o, p.alpha, false);
    std::array::from_fn(|c| p.a_d[c] + p.a_s[c] * s)
}

/// Cook-Torrance term without `a_s`; exposed for reciprocity checks.
pub fn cook_torrance_factor(w_i: &Vec3, w_o: &Vec3, n: &Vec3, alpha: f64) -> f64 {
    specular(n, w_i, w_o, alpha, false).0
}

/// Shading inputs for one image, one entry per pixel.
#[derive(Debug, Clone, Copy)]
pub struct ShadeInputs<'a> {
    pub params: &'a [[f64; 7]],
    pub normals: &'a [Vec3],
    /// Unit vectors from the surface point toward the camera.
    pub view_dirs: &'a [Vec3],
    pub coverage: &'a [f64],
}

impl ShadeInputs<'_> {
    fn check(&self) -> Result<()> {
        let n = self.coverage.len();
        if self.params.len() != n || self.normals.len() != n || self.view_dirs.len() != n {
            return data_err("shading buffers have mismatched sizes");
        }
        Ok(())
    }
}

/// Outgoing radiance per pixel; uncovered pixels are zero.
pub fn shade(inputs: &ShadeInputs<'_>, env: &EnvironmentMap) -> Result<Vec<[f64; 3]>> {
    inputs.check()?;
    let rad = env.radiance();
    let texels = env.texels();
    let mut out = vec![[0.0; 3]; inputs.coverage.len()];
    for (i, o) in out.iter_mut().enumerate() {
        if inputs.coverage[i] == 0.0 {
            continue;
        }
        let p = BrdfParams::from_slice(&inputs.params[i]);
        let (n, w_o) = (inputs.normals[i], inputs.view_dirs[i]);
        for (t, (w_i, d_omega)) in texels.iter().enumerate() {
            let cos_i = n.dot(w_i);
            if cos_i <= 0.0 {
                continue;
            }
            let (s, _, _) = specular(&n, w_i, &w_o, p.alpha, false);
            let k = cos_i * d_omega;
            for c in 0..3 {
                o[c] += (p.a_d[c] + p.a_s[c] * s) * rad[3 * t + c] * k;
            }
        }
    }
    Ok(out)
}

/// Gradients produced by [`shade_adjoint`].
#[derive(Debug, Clone)]
pub struct ShadeGrads {
    pub params: Vec<[f64; 7]>,
    pub normals: Vec<Vec3>,
    /// Gradient wrt the raw (pre-softplus) environment values.
    pub env_raw: Vec<f64>,
}

pub fn shade_adjoint(inputs: &ShadeInputs<'_>, env: &EnvironmentMap, dl_drgb: &[[f64; 3]]) -> Result<ShadeGrads> {
    inputs.check()?;
    if dl_drgb.len() != inputs.coverage.len() {
        return data_err("shading gradient has the wrong size");
    }
    let rad = env.radiance();
    let texels = env.texels();
    let n_px = inputs.coverage.len();
    let mut grads = ShadeGrads {
        params: vec![[0.0; 7]; n_px],
        normals: vec![Vec3::zeros(); n_px],
        env_raw: vec![0.0; env.raw.len()],
    };
    let mut d_rad = vec![0.0; env.raw.len()];
    for i in 0..n_px {
        let g = dl_drgb[i];
        if inputs.coverage[i] == 0.0 || g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let p = BrdfParams::from_slice(&inputs.params[i]);
        let (n, w_o) = (inputs.normals[i], inputs.view_dirs[i]);
        let mut dp = [0.0; 7];
        let mut dn = Vec3::zeros();
        for (t, (w_i, d_omega)) in texels.iter().enumerate() {
            let cos_i = n.dot(w_i);
            if cos_i <= 0.0 {
                continue;
            }
            let (s, ds_dalpha, ds_dn) = specular(&n, w_i, &w_o, p.alpha, true);
            let k = cos_i * d_omega;
            // sum_c g_c L_c (a_d,c + a_s,c S) k
            let mut gl_ad = 0.0;
            let mut gl_as = 0.0;
            for c in 0..3 {
                let gl = g[c] * rad[3 * t + c];
                let f = p.a_d[c] + p.a_s[c] * s;
                d_rad[3 * t + c] += g[c] * f * k;
                dp[c] += gl * k;
                dp[3 + c] += gl * s * k;
                gl_ad += gl * f;
                gl_as += gl * p.a_s[c];
            }
            dp[6] += gl_as * ds_dalpha * k;
            dn += w_i * (gl_ad * d_omega) + ds_dn * (gl_as * k);
        }
        grads.params[i] = dp;
        grads.normals[i] = dn;
    }
    for (k, d) in d_rad.iter().enumerate() {
        grads.env_raw[k] = d * sigmoid(env.raw[k]);
    }
    Ok(grads)
}
