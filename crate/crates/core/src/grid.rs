//! Regular scalar grids over the unit cube and trilinear stencils.
//!
//! Grids are stored x-fastest: `index = x + n * (y + n * z)`.

use crate::Vec3;

/// A cubic grid of scalar samples. Node `(i, j, k)` sits at unit-cube
/// coordinate `origin + spacing * (i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub res: usize,
    pub origin: f64,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(res: usize, origin: f64, spacing: f64, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), res * res * res, "grid value count mismatch");
        Self {
            res,
            origin,
            spacing,
            values,
        }
    }

    /// Poisson grid layout: `r` nodes per axis at `i / r` (periodic domain).
    pub fn periodic(r: usize, values: Vec<f64>) -> Self {
        Self::new(r, 0.0, 1.0 / r as f64, values)
    }

    pub fn filled(res: usize, origin: f64, spacing: f64, value: f64) -> Self {
        Self::new(res, origin, spacing, vec![value; res * res * res])
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.res * (y + self.res * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    pub fn node_position(&self, x: usize, y: usize, z: usize) -> Vec3 {
        Vec3::new(
            self.origin + self.spacing * x as f64,
            self.origin + self.spacing * y as f64,
            self.origin + self.spacing * z as f64,
        )
    }

    /// Trilinear sample, clamped to the grid's bounding box.
    pub fn sample(&self, p: &Vec3) -> f64 {
        let s = self.clamped_stencil(p);
        s.idx
            .iter()
            .zip(s.w.iter())
            .map(|(&i, &w)| w * self.values[i])
            .sum()
    }

    /// Central-difference gradient of the trilinear interpolant with a step
    /// of one grid cell.
    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        let h = self.spacing;
        let mut g = Vec3::zeros();
        for a in 0..3 {
            let mut pp = *p;
            let mut pm = *p;
            pp[a] += h;
            pm[a] -= h;
            g[a] = (self.sample(&pp) - self.sample(&pm)) / (2.0 * h);
        }
        g
    }

    fn clamped_stencil(&self, p: &Vec3) -> Stencil {
        let n = self.res;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let g = ((p[a] - self.origin) / self.spacing).clamp(0.0, (n - 1) as f64);
            let i0 = (g.floor() as usize).min(n.saturating_sub(2));
            base[a] = i0;
            frac[a] = g - i0 as f64;
        }
        Stencil::build(base, frac, 1.0 / self.spacing, |x, y, z| {
            x.min(n - 1) + n * (y.min(n - 1) + n * z.min(n - 1))
        })
    }
}

/// Eight trilinear weights with their position derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
    /// d w / d p in unit-cube coordinates.
    pub dw: [[f64; 3]; 8],
}

impl Stencil {
    fn build(
        base: [usize; 3],
        frac: [f64; 3],
        inv_spacing: f64,
        index: impl Fn(usize, usize, usize) -> usize,
    ) -> Self {
        let mut s = Stencil {
            idx: [0; 8],
            w: [0.0; 8],
            dw: [[0.0; 3]; 8],
        };
        for c in 0..8 {
            let d = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let mut f = [0.0; 3];
            let mut df = [0.0; 3];
            for a in 0..3 {
                if d[a] == 1 {
                    f[a] = frac[a];
                    df[a] = inv_spacing;
                } else {
                    f[a] = 1.0 - frac[a];
                    df[a] = -inv_spacing;
                }
            }
            s.idx[c] = index(base[0] + d[0], base[1] + d[1], base[2] + d[2]);
            s.w[c] = f[0] * f[1] * f[2];
            s.dw[c] = [df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]];
        }
        s
    }

    /// Periodic stencil on an `r`-node grid with nodes at `i / r`.
    pub fn periodic(p: &Vec3, r: usize) -> Self {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let g = p[a] * r as f64;
            let fl = g.floor();
            base[a] = (fl as i64).rem_euclid(r as i64) as usize;
            frac[a] = g - fl;
        }
        Stencil::build(base, frac, r as f64, |x, y, z| {
            x % r + r * ((y % r) + r * (z % r))
        })
    }

    /// Non-periodic stencil over `cells` cells per axis, nodes at
    /// `i / cells` for `i in 0..=cells`. Positions are clamped to `[0, 1]`.
    pub fn clamped(p: &Vec3, cells: usize) -> Self {
        let n = cells + 1;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let g = (p[a].clamp(0.0, 1.0)) * cells as f64;
            let i0 = (g.floor() as usize).min(cells - 1);
            base[a] = i0;
            frac[a] = g - i0 as f64;
        }
        Stencil::build(base, frac, cells as f64, |x, y, z| x + n * (y + n * z))
    }

    #[inline]
    pub fn gather(&self, values: &[f64]) -> f64 {
        (0..8).map(|c| self.w[c] * values[self.idx[c]]).sum()
    }

    /// Gradient of the interpolant wrt the sample position.
    #[inline]
    pub fn gather_grad(&self, values: &[f64]) -> Vec3 {
        let mut g = Vec3::zeros();
        for c in 0..8 {
            let v = values[self.idx[c]];
            g[0] += self.dw[c][0] * v;
            g[1] += self.dw[c][1] * v;
            g[2] += self.dw[c][2] * v;
        }
        g
    }

    #[inline]
    pub fn scatter(&self, values: &mut [f64], amount: f64) {
        for c in 0..8 {
            values[self.idx[c]] += self.w[c] * amount;
        }
    }
}
