//! Cubic 3-D FFTs built from 1-D plans.
//!
//! [`Fft3`] is a full complex transform. Each pass transforms the contiguous
//! axis and then rotates the axes `(x, y, z) -> (y, z, x)` with a transposing
//! copy; three passes restore the original layout.
//!
//! [`RealFft3`] transforms real fields into the half spectrum `kx <= n/2`,
//! stored with `kz` fastest: index `kz + n * (kx + h * ky)`, `h = n/2 + 1`.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex<f64>;

pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
    rotated: Vec<C64>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            scratch: vec![C64::default(); scratch_len],
            rotated: vec![C64::default(); n * n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&mut self, data: &mut [C64]) {
        let plan = Arc::clone(&self.forward);
        self.run(plan.as_ref(), data);
    }

    /// Inverse transform normalized by `1 / n^3`, in place.
    pub fn inverse(&mut self, data: &mut [C64]) {
        let plan = Arc::clone(&self.inverse);
        self.run(plan.as_ref(), data);
        let s = 1.0 / (self.n * self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    fn run(&mut self, plan: &dyn Fft<f64>, data: &mut [C64]) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n, "FFT buffer size mismatch");
        for _ in 0..3 {
            plan.process_with_scratch(data, &mut self.scratch);
            // rotated[(y, z, x)] = data[(x, y, z)], x fastest in both layouts.
            for z in 0..n {
                for y in 0..n {
                    let src = &data[n * (y + n * z)..n * (y + n * z) + n];
                    for (x, v) in src.iter().enumerate() {
                        self.rotated[y + n * (z + n * x)] = *v;
                    }
                }
            }
            data.copy_from_slice(&self.rotated);
        }
    }
}

/// `dst[b + nb * (c + nc * a)] = src[a + na * (b + nb * c)]`.
fn rotate_forward(src: &[C64], dst: &mut [C64], na: usize, nb: usize, nc: usize) {
    for c in 0..nc {
        for b in 0..nb {
            let row = &src[na * (b + nb * c)..na * (b + nb * c) + na];
            let base = b + nb * c;
            for (a, v) in row.iter().enumerate() {
                dst[base + nb * nc * a] = *v;
            }
        }
    }
}

/// `dst[c + nc * (a + na * b)] = src[a + na * (b + nb * c)]`.
fn rotate_backward(src: &[C64], dst: &mut [C64], na: usize, nb: usize, nc: usize) {
    for b in 0..nb {
        for a in 0..na {
            let out = &mut dst[nc * (a + na * b)..nc * (a + na * b) + nc];
            for (c, v) in out.iter_mut().enumerate() {
                *v = src[a + na * (b + nb * c)];
            }
        }
    }
}

/// Real-input 3-D FFT on an `n^3` grid producing the half spectrum.
pub struct RealFft3 {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
    work: Vec<C64>,
    row: Vec<f64>,
}

impl std::fmt::Debug for RealFft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft3").field("n", &self.n).finish()
    }
}

impl RealFft3 {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n % 2 == 0, "real FFT size must be even");
        let mut rp = RealFftPlanner::<f64>::new();
        let r2c = rp.plan_fft_forward(n);
        let c2r = rp.plan_fft_inverse(n);
        let mut cp = FftPlanner::new();
        let forward = cp.plan_fft_forward(n);
        let inverse = cp.plan_fft_inverse(n);
        let scratch_len = [
            forward.get_inplace_scratch_len(),
            inverse.get_inplace_scratch_len(),
            r2c.get_scratch_len(),
            c2r.get_scratch_len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let h = n / 2 + 1;
        Self {
            n,
            r2c,
            c2r,
            forward,
            inverse,
            scratch: vec![C64::default(); scratch_len],
            work: vec![C64::default(); h * n * n],
            row: vec![0.0; n],
        }
    }

    /// Number of stored spectrum entries, `n * n * (n/2 + 1)`.
    pub fn spectrum_len(&self) -> usize {
        self.n * self.n * (self.n / 2 + 1)
    }

    /// Position of frequency `(kx, ky, kz)`, `kx <= n/2`, in the spectrum.
    #[inline]
    pub fn spectrum_index(&self, kx: usize, ky: usize, kz: usize) -> usize {
        kz + self.n * (kx + (self.n / 2 + 1) * ky)
    }

    /// Unnormalized forward transform of a real field (x fastest).
    pub fn forward(&mut self, data: &[f64], spectrum: &mut [C64]) {
        let n = self.n;
        let h = n / 2 + 1;
        assert_eq!(data.len(), n * n * n, "FFT input size mismatch");
        assert_eq!(spectrum.len(), h * n * n, "spectrum size mismatch");
        // Rows along x into work[(kx, y, z)].
        for (src, dst) in data.chunks_exact(n).zip(self.work.chunks_exact_mut(h)) {
            self.row.copy_from_slice(src);
            self.r2c
                .process_with_scratch(&mut self.row, dst, &mut self.scratch)
                .expect("real FFT buffer sizes");
        }
        // (kx, y, z) -> (y, z, kx), transform y.
        rotate_forward(&self.work, spectrum, h, n, n);
        for line in spectrum.chunks_exact_mut(n) {
            self.forward.process_with_scratch(line, &mut self.scratch);
        }
        // (ky, z, kx) -> (z, kx, ky), transform z.
        rotate_forward(spectrum, &mut self.work, n, n, h);
        for line in self.work.chunks_exact_mut(n) {
            self.forward.process_with_scratch(line, &mut self.scratch);
        }
        spectrum.copy_from_slice(&self.work);
    }

    /// Inverse transform normalized by `1 / n^3`. The spectrum must be
    /// Hermitian; it is used as scratch space and left unspecified.
    pub fn inverse(&mut self, spectrum: &mut [C64], out: &mut [f64]) {
        let n = self.n;
        let h = n / 2 + 1;
        assert_eq!(out.len(), n * n * n, "FFT output size mismatch");
        assert_eq!(spectrum.len(), h * n * n, "spectrum size mismatch");
        for line in spectrum.chunks_exact_mut(n) {
            self.inverse.process_with_scratch(line, &mut self.scratch);
        }
        // (z, kx, ky) -> (ky, z, kx), transform y.
        rotate_backward(spectrum, &mut self.work, n, h, n);
        for line in self.work.chunks_exact_mut(n) {
            self.inverse.process_with_scratch(line, &mut self.scratch);
        }
        // (y, z, kx) -> (kx, y, z), real rows along x.
        rotate_backward(&self.work, spectrum, n, n, h);
        let s = 1.0 / (n * n * n) as f64;
        for (src, dst) in spectrum.chunks_exact_mut(h).zip(out.chunks_exact_mut(n)) {
            // Self-conjugate bins are real up to rounding.
            src[0].im = 0.0;
            src[h - 1].im = 0.0;
            self.c2r
                .process_with_scratch(src, dst, &mut self.scratch)
                .expect("real FFT buffer sizes");
            for v in dst.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Signed integer frequency of bin `k` for an `n`-point transform
/// (`k` for `k < n/2`, else `k - n`).
#[inline]
pub fn signed_freq(k: usize, n: usize) -> f64 {
    if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_dft(data: &[C64], n: usize) -> Vec<C64> {
        let mut out = vec![C64::default(); data.len()];
        for kz in 0..n {
            for ky in 0..n {
                for kx in 0..n {
                    let mut acc = C64::default();
                    for z in 0..n {
                        for y in 0..n {
                            for x in 0..n {
                                let ph = -2.0 * PI * ((kx * x + ky * y + kz * z) as f64) / n as f64;
                                acc += data[x + n * (y + n * z)] * C64::from_polar(1.0, ph);
                            }
                        }
                    }
                    out[kx + n * (ky + n * kz)] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft_and_inverts() {
        let n = 4;
        let data: Vec<C64> = (0..n * n * n)
            .map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let reference = naive_dft(&data, n);
        let mut fft = Fft3::new(n);
        let mut buf = data.clone();
        fft.forward(&mut buf);
        for (a, b) in buf.iter().zip(&reference) {
            assert!((a - b).norm() < 1e-12);
        }
        fft.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&data) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn real_transform_matches_complex_half() {
        let n = 8;
        let data: Vec<f64> = (0..n * n * n).map(|i| (i as f64 * 0.731).sin() + 0.1 * (i % 5) as f64).collect();
        let mut full: Vec<C64> = data.iter().map(|&v| C64::new(v, 0.0)).collect();
        Fft3::new(n).forward(&mut full);
        let mut rf = RealFft3::new(n);
        let mut spec = vec![C64::default(); rf.spectrum_len()];
        rf.forward(&data, &mut spec);
        for kz in 0..n {
            for ky in 0..n {
                for kx in 0..=n / 2 {
                    let a = spec[rf.spectrum_index(kx, ky, kz)];
                    let b = full[kx + n * (ky + n * kz)];
                    assert!((a - b).norm() < 1e-11, "{kx} {ky} {kz}");
                }
            }
        }
        let mut back = vec![0.0; n * n * n];
        rf.inverse(&mut spec, &mut back);
        for (a, b) in back.iter().zip(&data) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn frequencies_follow_numpy_convention() {
        let f: Vec<f64> = (0..8).map(|k| signed_freq(k, 8)).collect();
        assert_eq!(f, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }
}
