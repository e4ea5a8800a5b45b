//! Finite-difference and adjoint-identity checks shared by gradient tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Outcome of comparing two gradients or two sides of an adjoint identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    /// Largest absolute difference divided by the largest reference magnitude.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
    pub step: f64,
}

impl GradReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error <= rel_tol
    }
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn finite_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!("non-finite function value at coordinate {i}")));
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Compares `analytic` against `reference`, scaling by the largest
/// reference magnitude (or 1e-300 when the reference is all zero).
pub fn compare(analytic: &[f64], reference: &[f64], step: f64) -> GradReport {
    assert_eq!(analytic.len(), reference.len());
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut worst = 0;
    let mut max_abs = 0.0f64;
    for (i, (a, r)) in analytic.iter().zip(reference).enumerate() {
        let d = (a - r).abs();
        if d > max_abs || d.is_nan() {
            max_abs = d;
            worst = i;
        }
    }
    GradReport {
        max_rel_error: max_abs / scale,
        max_abs_error: max_abs,
        worst_index: worst,
        step,
    }
}

/// Checks the gradient of `f` at `x` against finite differences.
pub fn check_gradient(f: impl FnMut(&[f64]) -> f64, analytic: &[f64], x: &[f64], h: f64) -> Result<GradReport> {
    let numeric = finite_difference(f, x, h)?;
    Ok(compare(analytic, &numeric, h))
}

/// Compares `<grad, d>` with the central difference of `f` along `d` for
/// `trials` random unit-variance directions.
pub fn directional_check(
    mut f: impl FnMut(&[f64]) -> f64,
    grad: &[f64],
    x: &[f64],
    h: f64,
    trials: usize,
    seed: u64,
) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut analytic = Vec::with_capacity(trials);
    let mut numeric = Vec::with_capacity(trials);
    for _ in 0..trials {
        let d: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a - h * b).collect();
        let (fp, fm) = (f(&xp), f(&xm));
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric("non-finite function value".into()));
        }
        numeric.push((fp - fm) / (2.0 * h));
        analytic.push(grad.iter().zip(&d).map(|(g, v)| g * v).sum());
    }
    Ok(compare(&analytic, &numeric, h))
}

/// Checks `<A x, y> = <x, At y>` for random `x` (length `n_in`) and `y`
/// (length `n_out`). The error of each trial is relative to
/// `|A x| |y|`, so cancellation in the inner product is not penalized.
pub fn adjoint_identity(
    mut forward: impl FnMut(&[f64]) -> Vec<f64>,
    mut adjoint: impl FnMut(&[f64]) -> Vec<f64>,
    n_in: usize,
    n_out: usize,
    trials: usize,
    seed: u64,
) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        step: 0.0,
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norm = |a: &[f64]| dot(a, a).sqrt();
    for t in 0..trials {
        let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ax = forward(&x);
        let aty = adjoint(&y);
        assert_eq!(ax.len(), n_out, "forward output length");
        assert_eq!(aty.len(), n_in, "adjoint output length");
        let lhs = dot(&ax, &y);
        let rhs = dot(&x, &aty);
        let scale = (norm(&ax) * norm(&y)).max(norm(&x) * norm(&aty)).max(1e-300);
        let abs = (lhs - rhs).abs();
        let rel = abs / scale;
        if rel > report.max_rel_error || rel.is_nan() {
            report.max_rel_error = rel;
            report.worst_index = t;
        }
        report.max_abs_error = report.max_abs_error.max(abs);
    }
    report
}
