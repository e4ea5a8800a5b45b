//! Spectral Poisson reconstruction of an indicator grid from an oriented
//! point cloud, and its exact reverse-mode derivative.
//!
//! Normals are splatted onto an `r^3` periodic grid (nodes at `i / r`) with
//! trilinear weights, the Poisson equation is solved in Fourier space with a
//! Gaussian low-pass, and the result is re-centered on the point samples and
//! scaled by the magnitude at the grid corner. The resulting field is
//! negative inside and positive outside (the side the normals point to).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{signed_freq, RealFft3, C64};
use crate::grid::{ScalarGrid, Stencil};
use crate::mesh::TriangleMesh;
use crate::Vec3;

/// Positions in unit-cube coordinates with one unit normal each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientedPointCloud {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl OrientedPointCloud {
    pub fn new(positions: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if positions.len() != normals.len() {
            return Err(Error::Data(format!(
                "{} positions but {} normals",
                positions.len(),
                normals.len()
            )));
        }
        Ok(Self { positions, normals })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Rescales every normal to unit length (zero normals are left as is).
    pub fn normalize_normals(&mut self) {
        for n in &mut self.normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
    }

    /// Clamps positions to `[eps, 1 - eps]` with `eps = 1 / (2 r)`.
    pub fn clamp_positions(&mut self, r: usize) {
        let eps = 0.5 / r as f64;
        for p in &mut self.positions {
            for a in 0..3 {
                p[a] = p[a].clamp(eps, 1.0 - eps);
            }
        }
    }

    pub fn flatten_positions(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn flatten_normals(&self) -> Vec<f64> {
        self.normals.iter().flat_map(|p| p.iter().copied()).collect()
    }
}

fn unflatten(v: &[f64]) -> Vec<Vec3> {
    v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsrConfig {
    /// Gaussian bandwidth in grid cells.
    pub sigma: f64,
    /// Target magnitude of the field at the grid corner.
    pub m: f64,
}

impl Default for PsrConfig {
    fn default() -> Self {
        Self { sigma: 2.0, m: 0.5 }
    }
}

/// Intermediate values of a forward solve needed by the backward pass.
#[derive(Debug, Clone)]
pub struct PsrForward {
    /// Normalized field.
    pub phi: ScalarGrid,
    /// Unnormalized field `Phi'`.
    pub raw: Vec<f64>,
    /// `Phi'` at the grid corner.
    pub anchor: f64,
    /// Mean of `Phi'` over the point samples.
    pub mean: f64,
}

/// Full complex kernel `[K_x, K_y, K_z]` at bin `k` of an `r`-point grid.
fn full_kernel(r: usize, sigma: f64, k: [usize; 3]) -> [C64; 3] {
    let u = k.map(|kc| signed_freq(kc, r));
    let u2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    if u2 == 0.0 {
        return [C64::default(); 3];
    }
    let rf = r as f64;
    let g = (-2.0 * sigma * sigma * u2 / (rf * rf)).exp();
    let s = -g / (2.0 * std::f64::consts::PI * u2);
    u.map(|uc| C64::new(0.0, s * uc))
}

/// Reusable solver for one grid resolution (FFT plans and spectral kernel).
#[derive(Debug)]
pub struct PsrSolver {
    r: usize,
    cfg: PsrConfig,
    fft: RealFft3,
    /// Per-frequency `K_c = g(u) * i u_c / (-2 pi |u|^2)` on the half
    /// spectrum. Component `c` is zero where `u_c` is the Nyquist frequency:
    /// that is the Hermitian part of the kernel, so the real-to-real solve
    /// equals the real part of the full complex one.
    kernel: Vec<[C64; 3]>,
}

impl PsrSolver {
    pub fn new(r: usize, cfg: PsrConfig) -> Result<Self> {
        if !(cfg.sigma > 0.0) || !cfg.sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be positive, got {}", cfg.sigma)));
        }
        if !(cfg.m > 0.0) {
            return Err(Error::Config(format!("m must be positive, got {}", cfg.m)));
        }
        if r < 2 || !r.is_power_of_two() {
            return Err(Error::Config(format!("grid resolution must be a power of two, got {r}")));
        }
        let fft = RealFft3::new(r);
        let mut kernel = vec![[C64::default(); 3]; fft.spectrum_len()];
        for kz in 0..r {
            for ky in 0..r {
                for kx in 0..=r / 2 {
                    let k = full_kernel(r, cfg.sigma, [kx, ky, kz]);
                    let mut entry = k;
                    for (c, kc) in [kx, ky, kz].into_iter().enumerate() {
                        if 2 * kc == r {
                            entry[c] = C64::default();
                        }
                    }
                    kernel[fft.spectrum_index(kx, ky, kz)] = entry;
                }
            }
        }
        Ok(Self { r, cfg, fft, kernel })
    }

    pub fn resolution(&self) -> usize {
        self.r
    }

    pub fn config(&self) -> PsrConfig {
        self.cfg
    }

    /// Trilinear splat of the normals onto the periodic grid, one field per axis.
    pub fn scatter_normals(&self, cloud: &OrientedPointCloud) -> [Vec<f64>; 3] {
        let n = self.r * self.r * self.r;
        let mut v = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (p, nrm) in cloud.positions.iter().zip(&cloud.normals) {
            let s = Stencil::periodic(p, self.r);
            for c in 0..3 {
                s.scatter(&mut v[c], nrm[c]);
            }
        }
        v
    }

    /// Linear spectral solve `Phi' = Re IFFT(sum_c K_c FFT(v_c))`.
    pub fn spectral_solve(&mut self, v: &[Vec<f64>; 3]) -> Vec<f64> {
        let m = self.fft.spectrum_len();
        let mut acc = vec![C64::default(); m];
        let mut buf = vec![C64::default(); m];
        for c in 0..3 {
            self.fft.forward(&v[c], &mut buf);
            for ((a, b), k) in acc.iter_mut().zip(&buf).zip(&self.kernel) {
                *a += k[c] * b;
            }
        }
        let mut out = vec![0.0; v[0].len()];
        self.fft.inverse(&mut acc, &mut out);
        out
    }

    /// Transpose of [`Self::spectral_solve`]:
    /// `v_c = Re IFFT(conj(K_c) FFT(y))`.
    pub fn spectral_adjoint(&mut self, y: &[f64]) -> [Vec<f64>; 3] {
        let m = self.fft.spectrum_len();
        let mut spec = vec![C64::default(); m];
        self.fft.forward(y, &mut spec);
        let mut out: [Vec<f64>; 3] = Default::default();
        let mut buf = vec![C64::default(); m];
        for c in 0..3 {
            for ((b, s), k) in buf.iter_mut().zip(&spec).zip(&self.kernel) {
                *b = k[c].conj() * s;
            }
            out[c] = vec![0.0; y.len()];
            self.fft.inverse(&mut buf, &mut out[c]);
        }
        out
    }

    /// `Phi'` for a cloud (before normalization).
    pub fn raw_field(&mut self, cloud: &OrientedPointCloud) -> Vec<f64> {
        let v = self.scatter_normals(cloud);
        self.spectral_solve(&v)
    }

    pub fn forward(&mut self, cloud: &OrientedPointCloud) -> Result<PsrForward> {
        if cloud.is_empty() {
            return Err(Error::Data("cannot solve for an empty point cloud".into()));
        }
        let raw = self.raw_field(cloud);
        let anchor = raw[0];
        if !(anchor.abs() >= 1e-12) {
            return Err(Error::DegenerateNormalization(anchor.abs()));
        }
        let mean = cloud
            .positions
            .iter()
            .map(|p| Stencil::periodic(p, self.r).gather(&raw))
            .sum::<f64>()
            / cloud.len() as f64;
        let a = self.cfg.m / anchor.abs();
        let values = raw.iter().map(|&v| a * (v - mean)).collect();
        Ok(PsrForward {
            phi: ScalarGrid::periodic(self.r, values),
            raw,
            anchor,
            mean,
        })
    }

    /// Reverse-mode derivative of [`Self::forward`]: returns
    /// `(dL/dpositions, dL/dnormals)` for an upstream `dL/dPhi`.
    pub fn backward(
        &mut self,
        cloud: &OrientedPointCloud,
        fwd: &PsrForward,
        dl_dphi: &[f64],
    ) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
        let n = self.r * self.r * self.r;
        if dl_dphi.len() != n {
            return Err(Error::Data(format!("gradient has {} values, grid has {n}", dl_dphi.len())));
        }
        if !(fwd.anchor.abs() >= 1e-12) {
            return Err(Error::DegenerateNormalization(fwd.anchor.abs()));
        }
        let k = cloud.len();
        let s = fwd.anchor;
        let a = self.cfg.m / s.abs();

        // Phi = a (Phi' - mu), a = m / |Phi'[0]|, mu = mean_p interp(Phi', x_p).
        let mut draw: Vec<f64> = dl_dphi.iter().map(|&g| a * g).collect();
        let sum_g: f64 = dl_dphi.iter().sum();
        let da: f64 = dl_dphi.iter().zip(&fwd.raw).map(|(g, v)| g * (v - fwd.mean)).sum();
        let dmu = -a * sum_g;
        draw[0] += da * (-self.cfg.m * s.signum() / (s * s));

        let mut dpos = vec![Vec3::zeros(); k];
        let per_point = dmu / k as f64;
        let stencils: Vec<Stencil> = cloud.positions.iter().map(|p| Stencil::periodic(p, self.r)).collect();
        for (st, dp) in stencils.iter().zip(dpos.iter_mut()) {
            st.scatter(&mut draw, per_point);
            *dp += st.gather_grad(&fwd.raw) * per_point;
        }

        let dv = self.spectral_adjoint(&draw);
        let mut dnrm = vec![Vec3::zeros(); k];
        for ((st, nrm), (dp, dn)) in stencils
            .iter()
            .zip(&cloud.normals)
            .zip(dpos.iter_mut().zip(dnrm.iter_mut()))
        {
            for c in 0..3 {
                dn[c] = st.gather(&dv[c]);
                *dp += st.gather_grad(&dv[c]) * nrm[c];
            }
        }
        Ok((dpos, dnrm))
    }
}

/// One-shot forward solve.
pub fn solve(cloud: &OrientedPointCloud, cfg: PsrConfig, r: usize) -> Result<ScalarGrid> {
    Ok(PsrSolver::new(r, cfg)?.forward(cloud)?.phi)
}

/// One-shot adjoint (recomputes the forward pass).
pub fn solve_adjoint(
    cloud: &OrientedPointCloud,
    cfg: PsrConfig,
    r: usize,
    dl_dphi: &[f64],
) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let mut solver = PsrSolver::new(r, cfg)?;
    let fwd = solver.forward(cloud)?;
    solver.backward(cloud, &fwd, dl_dphi)
}

/// Area-uniform resampling of a closed mesh; each point takes the unit
/// normal of the face it lands on.
pub fn resample<R: Rng>(mesh: &TriangleMesh, k: usize, rng: &mut R) -> Result<OrientedPointCloud> {
    let (positions, faces) = mesh.sample_surface(k, rng)?;
    let normals = faces.iter().map(|&f| mesh.face_normal(f)).collect();
    OrientedPointCloud::new(positions, normals)
}

/// Flattened-parameter helpers used by gradient tests.
pub fn cloud_from_flat(positions: &[f64], normals: &[f64]) -> OrientedPointCloud {
    OrientedPointCloud {
        positions: unflatten(positions),
        normals: unflatten(normals),
    }
}
