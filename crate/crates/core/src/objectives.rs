//! Loss terms: distribution alignment, non-uniformity, task losses and the
//! composite training objective.
//!
//! Plain-value versions take slices; the `*_tape` versions record on a
//! [`Tape`] so they can be differentiated.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Mat, Tape, UnaryFn, Var};
use crate::error::{Error, Result};
use crate::hyperbolicity::HyperbolicityProfile;
use crate::layers::LayerVars;

/// Balancing factors of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub omega_nu: f64,
    pub omega_was: f64,
    /// Wasserstein order.
    pub p: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            omega_nu: 0.1,
            omega_was: 0.1,
            p: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_nu >= 0.0 && self.omega_nu.is_finite())
            || !(self.omega_was >= 0.0 && self.omega_was.is_finite())
        {
            return Err(Error::Config(
                "loss weights must be finite and nonnegative".into(),
            ));
        }
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(Error::Config(format!(
                "Wasserstein order must be ≥ 1, got {}",
                self.p
            )));
        }
        Ok(())
    }
}

/// How model hyperbolicities are compared with the geometric ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparisonMode {
    /// Wasserstein distance between the two distributions.
    #[default]
    Distribution,
    /// Mean squared error node by node.
    Pairwise,
    /// Squared difference of the means.
    Mean,
}

impl ComparisonMode {
    pub const ALL: [ComparisonMode; 3] = [Self::Distribution, Self::Pairwise, Self::Mean];
}

impl fmt::Display for ComparisonMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Distribution => "distribution",
            Self::Pairwise => "pairwise",
            Self::Mean => "mean",
        })
    }
}

impl FromStr for ComparisonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distribution" => Ok(Self::Distribution),
            "pairwise" => Ok(Self::Pairwise),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Config(format!(
                "unknown comparison mode `{other}` (expected distribution, pairwise or mean)"
            ))),
        }
    }
}

/// Edge decoder `P = 1 / (e^{(d - r)/t} + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FermiDirac {
    pub r: f64,
    pub t: f64,
}

impl Default for FermiDirac {
    fn default() -> Self {
        Self { r: 2.0, t: 1.0 }
    }
}

impl FermiDirac {
    pub fn new(r: f64, t: f64) -> Result<Self> {
        let fd = Self { r, t };
        fd.validate()?;
        Ok(fd)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r > 0.0 && self.t > 0.0 && self.r.is_finite() && self.t.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "decoder needs r, t > 0, got r = {}, t = {}",
                self.r, self.t
            )))
        }
    }
}

pub fn fermi_dirac_prob(d: f64, fd: &FermiDirac) -> f64 {
    sigmoid((fd.r - d) / fd.t)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `m` quantiles of sorted `samples` at levels `i/(m-1)`, linearly
/// interpolated. Equals `samples` when `m` is its length.
pub fn quantiles(samples: &[f64], m: usize) -> Vec<f64> {
    let n = samples.len();
    if m == 1 || n == 1 {
        let mid = if n == 1 {
            samples[0]
        } else {
            let pos = 0.5 * (n - 1) as f64;
            interpolate(samples, pos)
        };
        return vec![mid; m];
    }
    (0..m)
        .map(|i| {
            if m == n {
                samples[i]
            } else {
                interpolate(samples, i as f64 * (n - 1) as f64 / (m - 1) as f64)
            }
        })
        .collect()
}

fn interpolate(samples: &[f64], pos: f64) -> f64 {
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(samples.len() - 1);
    let frac = pos - lo as f64;
    samples[lo] + frac * (samples[hi] - samples[lo])
}

/// `m` equally spaced points of `[0, 1]` at the quantile midpoints `(i + ½)/m`.
pub fn uniform_reference(m: usize) -> Vec<f64> {
    (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect()
}

/// p-Wasserstein distance between two empirical distributions on the line.
///
/// Equal-size inputs are paired by rank. Otherwise both are compared at
/// `max(|a|, |b|)` interpolated quantiles.
pub fn wasserstein_1d(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty(
            "Wasserstein distance of an empty sample".into(),
        ));
    }
    if !(p >= 1.0) {
        return Err(Error::Config(format!(
            "Wasserstein order must be ≥ 1, got {p}"
        )));
    }
    let m = a.len().max(b.len());
    let qa = quantiles(&sorted(a), m);
    let qb = quantiles(&sorted(b), m);
    let cost = qa
        .iter()
        .zip(&qb)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        / m as f64;
    Ok(cost.powf(1.0 / p))
}

/// Profile values divided by their maximum; all zeros stay zero.
pub fn normalize_delta(profile: &HyperbolicityProfile) -> Result<Vec<f64>> {
    normalize_values(&profile.per_node)
}

pub fn normalize_values(delta: &[f64]) -> Result<Vec<f64>> {
    if delta.is_empty() {
        return Err(Error::Empty("empty hyperbolicity profile".into()));
    }
    let max = delta.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(vec![0.0; delta.len()]);
    }
    Ok(delta.iter().map(|d| d / max).collect())
}

/// `-(1/|V|) Σ (β_ℝ² + β_𝔻²)`.
pub fn non_uniformity(beta_r: &[f64], beta_d: &[f64]) -> Result<f64> {
    if beta_r.len() != beta_d.len() || beta_r.is_empty() {
        return Err(Error::Shape(format!(
            "β lists of length {} and {}",
            beta_r.len(),
            beta_d.len()
        )));
    }
    let s: f64 = beta_r.iter().zip(beta_d).map(|(r, d)| r * r + d * d).sum();
    Ok(-s / beta_r.len() as f64)
}

/// Rank-paired Wasserstein distance between the column `beta` and fixed
/// `target` samples. Ties in `beta` are ordered by row index; the
/// permutation is treated as constant.
pub fn wasserstein_tape(t: &Tape, beta: Var, target: &[f64], p: f64) -> Result<Var> {
    let (n, cols) = t.shape(beta);
    if cols != 1 || n != target.len() || n == 0 {
        return Err(Error::Shape(format!(
            "alignment of {n}×{cols} β against {} targets",
            target.len()
        )));
    }
    let order: Vec<usize> = t.with_value(beta, |b| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| b[[i, 0]].total_cmp(&b[[j, 0]]).then(i.cmp(&j)));
        idx
    });
    let paired = t.gather_rows(beta, Rc::from(order))?;
    let target = Mat::from_shape_vec((n, 1), sorted(target)).expect("n×1");
    let diff = t.sub(paired, t.leaf(target))?;
    let cost = t.mean(t.unary(UnaryFn::AbsPow(p), diff));
    Ok(t.unary(UnaryFn::Pow(1.0 / p), cost))
}

pub fn non_uniformity_tape(t: &Tape, beta_r: Var, beta_d: Var) -> Result<Var> {
    let s = t.add(t.square(beta_r), t.square(beta_d))?;
    Ok(t.neg(t.mean(s)))
}

fn mask_check(mask: &[usize], n: usize) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::Empty("loss mask is empty".into()));
    }
    if let Some(&v) = mask.iter().find(|&&v| v >= n) {
        return Err(Error::Shape(format!("masked node {v} outside 0..{n}")));
    }
    Ok(())
}

/// Mean negative log-likelihood of the true class over the masked rows.
pub fn cross_entropy_nc(t: &Tape, logits: Var, labels: &[usize], mask: &[usize]) -> Result<Var> {
    let (n, classes) = t.shape(logits);
    mask_check(mask, n)?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    let picks: Vec<(usize, usize)> = mask
        .iter()
        .map(|&v| {
            if labels[v] < classes {
                Ok((v, labels[v]))
            } else {
                Err(Error::Shape(format!(
                    "label {} of node {v} outside 0..{classes}",
                    labels[v]
                )))
            }
        })
        .collect::<Result<_>>()?;
    let logp = t.pick(t.log_softmax_rows(logits), Rc::from(picks))?;
    Ok(t.neg(t.mean(logp)))
}

/// Euclidean distance between the rows of each pair, `k×1`.
fn pair_distances(t: &Tape, z: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let u: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let v: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let diff = t.sub(t.gather_rows(z, u.into())?, t.gather_rows(z, v.into())?)?;
    Ok(t.row_norm(diff))
}

/// Binary cross-entropy of the decoder on positives (target 1) and
/// negatives (target 0), averaged over all pairs.
pub fn lp_loss(
    t: &Tape,
    z: Var,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
    fd: &FermiDirac,
) -> Result<Var> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Empty(
            "link loss needs positive and negative pairs".into(),
        ));
    }
    // -ln σ(x) = softplus(-x) and -ln(1 - σ(x)) = softplus(x), x = (r - d)/t
    let logit = |pairs: &[(usize, usize)]| -> Result<Var> {
        let d = pair_distances(t, z, pairs)?;
        Ok(t.scale(t.offset(t.neg(d), fd.r), 1.0 / fd.t))
    };
    let lp = t.sum(t.softplus(t.neg(logit(pos)?)));
    let ln = t.sum(t.softplus(logit(neg)?));
    Ok(t.scale(t.add(lp, ln)?, 1.0 / (pos.len() + neg.len()) as f64))
}

/// Decoder probabilities for `pairs` of rows of `z`.
pub fn edge_probabilities(z: &Mat, pairs: &[(usize, usize)], fd: &FermiDirac) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(u, v)| {
            let d = (&z.row(u) - &z.row(v)).mapv(|x| x * x).sum().sqrt();
            fermi_dirac_prob(d, fd)
        })
        .collect()
}

/// The composite loss and the values of its parts.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub task: f64,
    /// Layer-averaged non-uniformity, when weighted in.
    pub non_uniformity: Option<f64>,
    /// Layer-averaged alignment term, when weighted in.
    pub alignment: Option<f64>,
}

/// Alignment of one layer's `β_ℝ` with the normalized profile `mu`
/// (node-indexed).
pub fn alignment_tape(
    t: &Tape,
    beta_r: Var,
    mu: &[f64],
    mode: ComparisonMode,
    p: f64,
) -> Result<Var> {
    let n = t.shape(beta_r).0;
    if mu.len() != n {
        return Err(Error::Shape(format!(
            "{} profile values for {n} nodes",
            mu.len()
        )));
    }
    match mode {
        ComparisonMode::Distribution => wasserstein_tape(t, beta_r, mu, p),
        ComparisonMode::Pairwise => {
            let target = t.leaf(Mat::from_shape_vec((n, 1), mu.to_vec()).expect("n×1"));
            Ok(t.mean(t.square(t.sub(beta_r, target)?)))
        }
        ComparisonMode::Mean => {
            let mean_mu = mu.iter().sum::<f64>() / n as f64;
            Ok(t.square(t.offset(t.mean(beta_r), -mean_mu)))
        }
    }
}

/// `L_task + ω_nu·L_nu + ω_was·L_align`, with the last two averaged over
/// layers. A zero weight leaves its term off the tape entirely.
pub fn overall_loss(
    t: &Tape,
    task: Var,
    layers: &[LayerVars],
    mu: &[f64],
    weights: &LossWeights,
    mode: ComparisonMode,
) -> Result<LossTerms> {
    weights.validate()?;
    if layers.is_empty() {
        return Err(Error::Empty("no β record".into()));
    }
    let per_layer = 1.0 / layers.len() as f64;
    let mut total = task;
    let mut terms = LossTerms {
        total,
        task: t.scalar(task),
        non_uniformity: None,
        alignment: None,
    };
    if weights.omega_nu != 0.0 {
        let mut acc = non_uniformity_tape(t, layers[0].beta_r, layers[0].beta_d)?;
        for l in &layers[1..] {
            acc = t.add(acc, non_uniformity_tape(t, l.beta_r, l.beta_d)?)?;
        }
        let nu = t.scale(acc, per_layer);
        terms.non_uniformity = Some(t.scalar(nu));
        total = t.add(total, t.scale(nu, weights.omega_nu))?;
    }
    if weights.omega_was != 0.0 {
        let mut acc = alignment_tape(t, layers[0].beta_r, mu, mode, weights.p)?;
        for l in &layers[1..] {
            acc = t.add(acc, alignment_tape(t, l.beta_r, mu, mode, weights.p)?)?;
        }
        let align = t.scale(acc, per_layer);
        terms.alignment = Some(t.scalar(align));
        total = t.add(total, t.scale(align, weights.omega_was))?;
    }
    terms.total = total;
    Ok(terms)
}
