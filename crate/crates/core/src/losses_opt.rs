//! Image losses with their gradients, the weighted objective and Adam.
//!
//! All reductions use pairwise summation in a fixed order so loss values are
//! bit-reproducible.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{data_err, Error, Result};

/// Norm used by the silhouette and depth terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LossKind {
    #[default]
    L1,
    L2,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L1" => Ok(LossKind::L1),
            "L2" => Ok(LossKind::L2),
            other => Err(Error::Config(format!("unknown loss type `{other}` (expected L1 or L2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lambda_d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_c: 5.0,
            lambda_s: 10.0,
            lambda_d: 30.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_c", self.lambda_c), ("lambda_s", self.lambda_s), ("lambda_d", self.lambda_d)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// A scalar loss and its gradient wrt the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Pairwise (tree) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return data_err(format!("{what}: size mismatch ({a} vs {b})"));
    }
    Ok(())
}

/// Elementwise residual loss over the entries selected by `keep`, averaged
/// over `count`.
fn masked_loss(gt: &[f64], pred: &[f64], keep: impl Fn(usize) -> bool, count: usize, kind: LossKind) -> LossValue {
    let mut terms = vec![0.0; pred.len()];
    let mut grad = vec![0.0; pred.len()];
    if count == 0 {
        return LossValue { value: 0.0, grad };
    }
    let inv = 1.0 / count as f64;
    for i in 0..pred.len() {
        if !keep(i) {
            continue;
        }
        let r = gt[i] - pred[i];
        match kind {
            LossKind::L1 => {
                terms[i] = r.abs();
                grad[i] = -sign(r) * inv;
            }
            LossKind::L2 => {
                terms[i] = r * r;
                grad[i] = -2.0 * r * inv;
            }
        }
    }
    LossValue {
        value: pairwise_sum(&terms) * inv,
        grad,
    }
}

/// Per-pixel mean of `(S - S_hat)^2` (or `|S - S_hat|` for L1).
pub fn silhouette_loss(gt: &[f64], pred: &[f64], kind: LossKind) -> Result<LossValue> {
    same_len(gt.len(), pred.len(), "silhouette loss")?;
    Ok(masked_loss(gt, pred, |_| true, pred.len(), kind))
}

/// Mean depth residual over pixels that are both valid and covered; zero if
/// there are none.
pub fn depth_loss(gt: &[f64], valid: &[f64], pred: &[f64], coverage: &[f64], kind: LossKind) -> Result<LossValue> {
    same_len(gt.len(), pred.len(), "depth loss")?;
    same_len(valid.len(), pred.len(), "depth loss")?;
    same_len(coverage.len(), pred.len(), "depth loss")?;
    let keep = |i: usize| valid[i] > 0.5 && coverage[i] > 0.5;
    let count = (0..pred.len()).filter(|&i| keep(i)).count();
    Ok(masked_loss(gt, pred, keep, count, kind))
}

/// Mean absolute difference over `region` pixels and all `channels`:
/// `sum |I - I_hat| / (|region| * channels)`.
pub fn photometric_loss(gt: &[f64], pred: &[f64], region: &[bool], channels: usize) -> Result<LossValue> {
    same_len(gt.len(), pred.len(), "photometric loss")?;
    same_len(region.len() * channels, pred.len(), "photometric loss")?;
    let count = region.iter().filter(|&&r| r).count() * channels;
    if count == 0 {
        log::warn!("photometric loss region is empty");
    }
    Ok(masked_loss(gt, pred, |i| region[i / channels], count, LossKind::L1))
}

/// `lambda_c L_c + lambda_s L_s + lambda_d L_d`.
pub fn total_loss(c: f64, s: f64, d: f64, w: &LossWeights) -> f64 {
    w.lambda_c * c + w.lambda_s * s + w.lambda_d * d
}

/// Adam moments for one named parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub name: String,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(name: impl Into<String>, len: usize, lr: f64) -> Self {
        Self {
            name: name.into(),
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// Drops the moments, e.g. after the block was resampled or resized.
    pub fn reset(&mut self, len: usize) {
        self.m = vec![0.0; len];
        self.v = vec![0.0; len];
        self.step = 0;
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() || params.len() != self.m.len() {
            return data_err(format!(
                "parameter block `{}`: {} params, {} grads, {} moments",
                self.name,
                params.len(),
                grad.len(),
                self.m.len()
            ));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(self.name.clone()));
        }
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub l_c: f64,
    pub l_s: f64,
    pub l_d: f64,
    pub total: f64,
}

pub const LOSS_CSV_HEADER: &str = "epoch,L_c,L_s,L_d,total";

/// Writes `records` as CSV with full round-trip precision.
pub fn write_loss_csv(path: &Path, records: &[LossRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{LOSS_CSV_HEADER}")?;
    for r in records {
        writeln!(f, "{},{:e},{:e},{:e},{:e}", r.epoch, r.l_c, r.l_s, r.l_d, r.total)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(LOSS_CSV_HEADER) {
        return data_err("loss CSV header mismatch");
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return data_err(format!("bad loss CSV row `{l}`"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Data(format!("bad number `{s}`")));
            Ok(LossRecord {
                epoch: f[0].parse().map_err(|_| Error::Data(format!("bad epoch `{}`", f[0])))?,
                l_c: num(f[1])?,
                l_s: num(f[2])?,
                l_d: num(f[3])?,
                total: num(f[4])?,
            })
        })
        .collect()
}
