//! Learnable dense reflectance grid sampled trilinearly at vertex positions.
//!
//! The grid has `res` cells per axis and `(res + 1)^3` nodes at `i / res` in
//! the unit cube. Each node stores seven raw values, mapped to reflectance by
//! [`activate`]: diffuse RGB and specular RGB through a sigmoid, roughness as
//! `0.01 + 0.99 * sigmoid`.
//!
//! Checkpoint layout (little-endian): magic `MFTG`, `u32` version (1), `u32`
//! cells per axis, `u32` channel count (7), `u32` length of the channel-order
//! string followed by its ASCII bytes, then `(res + 1)^3 * 7` `f32` raw values,
//! node-major with x fastest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{data_err, Error, Result};
use crate::grid::Stencil;
use crate::Vec3;

pub const CHANNELS: usize = 7;
pub const CHANNEL_ORDER: &str = "diffuse_r,diffuse_g,diffuse_b,specular_r,specular_g,specular_b,roughness";
pub const MIN_ROUGHNESS: f64 = 0.01;

const MAGIC: &[u8; 4] = b"MFTG";
const VERSION: u32 = 1;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logit(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

/// Activated parameters and their derivatives wrt the raw values.
pub fn activate(raw: &[f64; CHANNELS]) -> ([f64; CHANNELS], [f64; CHANNELS]) {
    let mut out = [0.0; CHANNELS];
    let mut d = [0.0; CHANNELS];
    for c in 0..6 {
        let s = sigmoid(raw[c]);
        out[c] = s;
        d[c] = s * (1.0 - s);
    }
    let s = sigmoid(raw[6]);
    out[6] = MIN_ROUGHNESS + (1.0 - MIN_ROUGHNESS) * s;
    d[6] = (1.0 - MIN_ROUGHNESS) * s * (1.0 - s);
    (out, d)
}

/// Raw values producing the neutral start: gray diffuse 0.5, specular 0.04,
/// roughness 0.5.
pub fn initial_raw() -> [f64; CHANNELS] {
    let s = logit(0.04);
    let a = logit((0.5 - MIN_ROUGHNESS) / (1.0 - MIN_ROUGHNESS));
    [0.0, 0.0, 0.0, s, s, s, a]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureGrid {
    /// Cells per axis.
    pub res: usize,
    /// `(res + 1)^3 * 7` raw values, node-major.
    pub raw: Vec<f64>,
}

impl TextureGrid {
    pub fn new(res: usize) -> Result<Self> {
        Self::filled(res, initial_raw())
    }

    pub fn filled(res: usize, raw: [f64; CHANNELS]) -> Result<Self> {
        if res == 0 {
            return Err(Error::Config("texture grid resolution must be positive".into()));
        }
        let n = (res + 1).pow(3);
        let mut values = Vec::with_capacity(n * CHANNELS);
        for _ in 0..n {
            values.extend_from_slice(&raw);
        }
        Ok(Self { res, raw: values })
    }

    pub fn node_count(&self) -> usize {
        (self.res + 1).pow(3)
    }

    #[inline]
    pub fn node_index(&self, x: usize, y: usize, z: usize) -> usize {
        let n = self.res + 1;
        x + n * (y + n * z)
    }

    /// Interpolated raw values, written as `v_m + sum_k w_k (v_k - v_m)`
    /// around the heaviest corner `m` so that constants and node positions
    /// are reproduced exactly.
    fn raw_at(&self, stencil: &Stencil) -> [f64; CHANNELS] {
        let m = (0..8).fold(0, |m, k| if stencil.w[k] > stencil.w[m] { k } else { m });
        let vm = &self.raw[stencil.idx[m] * CHANNELS..(stencil.idx[m] + 1) * CHANNELS];
        let mut r: [f64; CHANNELS] = std::array::from_fn(|c| vm[c]);
        let mut acc = [0.0; CHANNELS];
        for k in (0..8).filter(|&k| k != m && stencil.w[k] != 0.0) {
            let base = stencil.idx[k] * CHANNELS;
            for c in 0..CHANNELS {
                acc[c] += stencil.w[k] * (self.raw[base + c] - vm[c]);
            }
        }
        for c in 0..CHANNELS {
            r[c] += acc[c];
        }
        r
    }

    /// Activated parameters at unit-cube positions (clamped to the cube).
    pub fn sample(&self, positions: &[Vec3]) -> Vec<[f64; CHANNELS]> {
        positions
            .iter()
            .map(|p| activate(&self.raw_at(&Stencil::clamped(p, self.res))).0)
            .collect()
    }

    /// Reverse of [`Self::sample`]: gradients wrt the raw grid and the
    /// positions (unit-cube coordinates; zero along clamped axes).
    pub fn sample_adjoint(&self, positions: &[Vec3], dl_dparams: &[[f64; CHANNELS]]) -> Result<(Vec<f64>, Vec<Vec3>)> {
        if positions.len() != dl_dparams.len() {
            return data_err("texture gradient count does not match positions");
        }
        let mut draw = vec![0.0; self.raw.len()];
        let mut dpos = Vec::with_capacity(positions.len());
        for (p, g) in positions.iter().zip(dl_dparams) {
            if g.iter().all(|&v| v == 0.0) {
                dpos.push(Vec3::zeros());
                continue;
            }
            let s = Stencil::clamped(p, self.res);
            let (_, d) = activate(&self.raw_at(&s));
            let graw: [f64; CHANNELS] = std::array::from_fn(|c| g[c] * d[c]);
            let mut gp = Vec3::zeros();
            for k in 0..8 {
                let base = s.idx[k] * CHANNELS;
                let mut dot = 0.0;
                for c in 0..CHANNELS {
                    draw[base + c] += s.w[k] * graw[c];
                    dot += self.raw[base + c] * graw[c];
                }
                for a in 0..3 {
                    gp[a] += s.dw[k][a] * dot;
                }
            }
            for a in 0..3 {
                if !(0.0..=1.0).contains(&p[a]) {
                    gp[a] = 0.0;
                }
            }
            dpos.push(gp);
        }
        Ok((draw, dpos))
    }

    /// Trilinear 2x refinement of the raw field. Every old node keeps its
    /// value exactly. Fails if the result would exceed `max_res` cells.
    pub fn upsample(&self, max_res: usize) -> Result<TextureGrid> {
        let res = self.res * 2;
        if res > max_res {
            return Err(Error::Config(format!(
                "texture grid upsampling to {res} cells exceeds the cap of {max_res}"
            )));
        }
        let n = res + 1;
        let mut raw = Vec::with_capacity(n * n * n * CHANNELS);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let p = Vec3::new(x as f64, y as f64, z as f64) / res as f64;
                    raw.extend_from_slice(&self.raw_at(&Stencil::clamped(&p, self.res)));
                }
            }
        }
        Ok(TextureGrid { res, raw })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(32 + self.raw.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.res as u32).to_le_bytes());
        out.extend_from_slice(&(CHANNELS as u32).to_le_bytes());
        out.extend_from_slice(&(CHANNEL_ORDER.len() as u32).to_le_bytes());
        out.extend_from_slice(CHANNEL_ORDER.as_bytes());
        for v in &self.raw {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TextureGrid> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| Error::Data("texture checkpoint truncated".into()))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return data_err("not a texture grid checkpoint");
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
        let version = u32_at(take(4)?);
        if version != VERSION as usize {
            return data_err(format!("unsupported texture checkpoint version {version}"));
        }
        let res = u32_at(take(4)?);
        let channels = u32_at(take(4)?);
        let order_len = u32_at(take(4)?);
        let order = take(order_len)?;
        if channels != CHANNELS || order != CHANNEL_ORDER.as_bytes() || res == 0 {
            return data_err("texture checkpoint has an unexpected channel layout");
        }
        let count = (res + 1).pow(3) * CHANNELS;
        let body = take(count * 4)?;
        let raw = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        Ok(TextureGrid { res, raw })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{adjoint_identity, check_gradient};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(res: usize, seed: u64) -> TextureGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = TextureGrid::new(res).unwrap();
        for v in g.raw.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        g
    }

    fn random_points(k: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k)
            .map(|_| Vec3::new(rng.gen_range(0.02..0.98), rng.gen_range(0.02..0.98), rng.gen_range(0.02..0.98)))
            .collect()
    }

    #[test]
    fn initial_values() {
        let g = TextureGrid::new(4).unwrap();
        let p = g.sample(&[Vec3::new(0.3, 0.6, 0.9)])[0];
        for c in 0..3 {
            assert!((p[c] - 0.5).abs() < 1e-15);
            assert!((p[3 + c] - 0.04).abs() < 1e-15);
        }
        assert!((p[6] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn node_sample_is_activated_node_value() {
        let g = random_grid(4, 1);
        let i = g.node_index(1, 3, 2);
        let node: [f64; CHANNELS] = std::array::from_fn(|c| g.raw[i * CHANNELS + c]);
        let p = g.sample(&[Vec3::new(0.25, 0.75, 0.5)])[0];
        assert_eq!(p, activate(&node).0);
    }

    #[test]
    fn constant_grid_is_constant_everywhere() {
        let raw = [0.3, -1.0, 2.0, 0.1, 0.2, -0.4, 1.5];
        let g = TextureGrid::filled(5, raw).unwrap();
        let want = activate(&raw).0;
        for p in random_points(50, 2) {
            assert_eq!(g.sample(&[p])[0], want);
        }
    }

    fn loss(g: &TextureGrid, pts: &[Vec3], w: &[[f64; CHANNELS]]) -> f64 {
        g.sample(pts)
            .iter()
            .zip(w)
            .map(|(p, w)| p.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    fn weights(k: usize, seed: u64) -> Vec<[f64; CHANNELS]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn raw_gradient_matches_finite_differences() {
        let g = random_grid(3, 3);
        let pts = random_points(20, 4);
        let w = weights(20, 5);
        let (draw, _) = g.sample_adjoint(&pts, &w).unwrap();
        let f = |x: &[f64]| {
            let gg = TextureGrid { res: g.res, raw: x.to_vec() };
            loss(&gg, &pts, &w)
        };
        let r = check_gradient(f, &draw, &g.raw, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn position_gradient_matches_finite_differences() {
        let g = random_grid(3, 6);
        let pts = random_points(15, 7);
        let w = weights(15, 8);
        let (_, dpos) = g.sample_adjoint(&pts, &w).unwrap();
        let flat: Vec<f64> = dpos.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let x0: Vec<f64> = pts.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let f = |x: &[f64]| {
            let p: Vec<Vec3> = x.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
            loss(&g, &p, &w)
        };
        let r = check_gradient(f, &flat, &x0, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn zero_upstream_gives_zeros() {
        let g = random_grid(3, 9);
        let pts = random_points(10, 10);
        let (draw, dpos) = g.sample_adjoint(&pts, &vec![[0.0; CHANNELS]; 10]).unwrap();
        assert!(draw.iter().all(|&v| v == 0.0));
        assert!(dpos.iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn node_sample_gradient_lands_on_that_node() {
        let g = random_grid(4, 11);
        let i = g.node_index(2, 1, 3);
        let (draw, _) = g.sample_adjoint(&[Vec3::new(0.5, 0.25, 0.75)], &[[1.0; CHANNELS]]).unwrap();
        for (k, v) in draw.iter().enumerate() {
            if k / CHANNELS != i {
                assert_eq!(*v, 0.0);
            } else {
                assert!(*v > 0.0);
            }
        }
    }

    #[test]
    fn interpolation_adjoint_identity() {
        // Linear part only: raw values -> interpolated raw values.
        let g = random_grid(3, 12);
        let pts = random_points(30, 13);
        let forward = |x: &[f64]| {
            let gg = TextureGrid { res: g.res, raw: x.to_vec() };
            pts.iter()
                .flat_map(|p| gg.raw_at(&Stencil::clamped(p, gg.res)))
                .collect::<Vec<f64>>()
        };
        let adjoint = |y: &[f64]| {
            let mut out = vec![0.0; g.raw.len()];
            for (p, gy) in pts.iter().zip(y.chunks(CHANNELS)) {
                let s = Stencil::clamped(p, g.res);
                for k in 0..8 {
                    for c in 0..CHANNELS {
                        out[s.idx[k] * CHANNELS + c] += s.w[k] * gy[c];
                    }
                }
            }
            out
        };
        let r = adjoint_identity(forward, adjoint, g.raw.len(), pts.len() * CHANNELS, 5, 14);
        assert!(r.max_rel_error <= 1e-10, "{r:?}");
    }

    #[test]
    fn gradient_is_local_to_eight_nodes() {
        let g = random_grid(5, 15);
        let (draw, _) = g.sample_adjoint(&[Vec3::new(0.33, 0.51, 0.77)], &[[1.0; CHANNELS]]).unwrap();
        let touched = (0..g.node_count())
            .filter(|&n| draw[n * CHANNELS..(n + 1) * CHANNELS].iter().any(|&v| v != 0.0))
            .count();
        assert_eq!(touched, 8);
    }

    #[test]
    fn upsample_constant_and_old_nodes() {
        let c = TextureGrid::filled(3, [0.1; CHANNELS]).unwrap().upsample(64).unwrap();
        assert_eq!(c.res, 6);
        assert!(c.raw.iter().all(|&v| v == 0.1));

        let g = random_grid(4, 16);
        let u = g.upsample(64).unwrap();
        for z in 0..=4 {
            for y in 0..=4 {
                for x in 0..=4 {
                    let p = Vec3::new(x as f64, y as f64, z as f64) / 4.0;
                    assert_eq!(u.sample(&[p]), g.sample(&[p]));
                }
            }
        }
        assert!(g.upsample(7).is_err());
    }

    #[test]
    fn upsample_reproduces_a_linear_ramp() {
        let res = 4;
        let mut g = TextureGrid::new(res).unwrap();
        let ramp = |p: Vec3, c: usize| 0.3 * p.x - 1.2 * p.y + 0.7 * p.z + c as f64 * 0.1;
        for z in 0..=res {
            for y in 0..=res {
                for x in 0..=res {
                    let p = Vec3::new(x as f64, y as f64, z as f64) / res as f64;
                    let i = g.node_index(x, y, z);
                    for c in 0..CHANNELS {
                        g.raw[i * CHANNELS + c] = ramp(p, c);
                    }
                }
            }
        }
        let u = g.upsample(64).unwrap();
        let r2 = u.res;
        for z in 0..=r2 {
            for y in 0..=r2 {
                for x in 0..=r2 {
                    let p = Vec3::new(x as f64, y as f64, z as f64) / r2 as f64;
                    let i = u.node_index(x, y, z);
                    for c in 0..CHANNELS {
                        assert!((u.raw[i * CHANNELS + c] - ramp(p, c)).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tex.bin");
        let mut g = random_grid(3, 17);
        for v in g.raw.iter_mut() {
            *v = *v as f32 as f64;
        }
        g.save(&path).unwrap();
        assert_eq!(TextureGrid::load(&path).unwrap(), g);
        std::fs::write(&path, b"MFTG\x01\0\0\0").unwrap();
        assert!(TextureGrid::load(&path).is_err());
    }

    proptest! {
        #[test]
        fn activations_stay_in_range(raw in proptest::array::uniform7(-1e6f64..1e6)) {
            let (a, d) = activate(&raw);
            for c in 0..6 {
                prop_assert!((0.0..=1.0).contains(&a[c]));
            }
            prop_assert!(a[6] >= MIN_ROUGHNESS && a[6] <= 1.0);
            prop_assert!(d.iter().all(|v| v.is_finite() && *v >= 0.0));
        }

        #[test]
        fn weights_partition_unity(x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0) {
            let s = Stencil::clamped(&Vec3::new(x, y, z), 7);
            prop_assert!((s.w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }
}
