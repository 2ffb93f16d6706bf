//! Gromov four-point hyperbolicity of finite metrics and per-node local profiles.
//!
//! For points `x, y, z, t` the four-point slack is
//!
//! ```text
//! τ(x,y,z,t) = max(0, [d(x,y) + d(z,t) - max(d(x,z) + d(y,t), d(z,y) + d(x,t))] / 2)
//! ```
//!
//! and a metric's worst-case hyperbolicity `δ∞` is the supremum of `τ` over
//! all quadruples while the average hyperbolicity `δ₁` is its mean over
//! uniformly drawn ordered quadruples (with replacement). Quadruples range
//! over graph vertices only; points in the interior of edges are not
//! enumerated.
//!
//! Two facts drive the implementation:
//!
//! - Any quadruple with a repeated point has `τ = 0`, so only 4-subsets of
//!   distinct points contribute.
//! - For a 4-subset with pairing sums `S₁ ≥ S₂ ≥ S₃`, exactly the 8 orderings
//!   whose leading pairing realizes `S₁` get `τ = (S₁ - S₂)/2`; the other 16
//!   get 0. Hence `δ∞ = max (S₁ - S₂)/2` and `δ₁ = 4·Σ(S₁ - S₂) / n⁴`.

mod cache;
mod profile;

pub use cache::ProfileCache;
pub use profile::{
    local_profile, local_profile_with, EmpiricalDistribution, Histogram, HyperbolicityMode,
    HyperbolicityProfile, ProfileOptions, DEFAULT_BIN_WIDTH,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{
    biconnected_components, induced_subgraph, shortest_paths, DistanceMatrix, WeightedGraph,
};

/// Largest node count accepted by [`delta_one_exact`] by default.
pub const DEFAULT_EXACT_LIMIT: usize = 60;
/// Default sample count for [`delta_one_sampled`].
pub const DEFAULT_SAMPLES: usize = 100_000;

const SAMPLE_CHUNK: usize = 4096;
const PAIR_BLOCK: usize = 256;

/// Least `δ ≥ 0` satisfying the four-point condition for this ordered tuple.
pub fn four_point_tau(d: &DistanceMatrix, x: usize, y: usize, z: usize, t: usize) -> Result<f64> {
    let n = d.len();
    if [x, y, z, t].iter().any(|&i| i >= n) {
        return Err(Error::Domain(format!("quadruple index outside 0..{n}")));
    }
    let pts = [x, y, z, t];
    for a in 0..4 {
        for b in (a + 1)..4 {
            if !d.is_reachable(pts[a], pts[b]) {
                return Err(Error::Domain(format!(
                    "nodes {} and {} lie in different components",
                    pts[a], pts[b]
                )));
            }
        }
    }
    Ok(tau_unchecked(d, x, y, z, t))
}

#[inline]
fn tau_unchecked(d: &DistanceMatrix, x: usize, y: usize, z: usize, t: usize) -> f64 {
    let lead = d.get(x, y) + d.get(z, t);
    let other = (d.get(x, z) + d.get(y, t)).max(d.get(z, y) + d.get(x, t));
    ((lead - other) / 2.0).max(0.0)
}

/// `S₁ - S₂` for the quadruple formed by two pairs.
#[inline]
fn pairing_gap(d: &DistanceMatrix, x: usize, y: usize, z: usize, t: usize) -> f64 {
    let a = d.get(x, y) + d.get(z, t);
    let b = d.get(x, z) + d.get(y, t);
    let c = d.get(x, t) + d.get(y, z);
    let (hi, mid) = if a >= b {
        if b >= c {
            (a, b)
        } else if a >= c {
            (a, c)
        } else {
            (c, a)
        }
    } else if a >= c {
        (b, a)
    } else if b >= c {
        (b, c)
    } else {
        (c, b)
    };
    hi - mid
}

fn require_connected(d: &DistanceMatrix) -> Result<()> {
    if d.is_connected() {
        Ok(())
    } else {
        Err(Error::Domain(
            "metric spans several components; restrict to one component first".into(),
        ))
    }
}

/// Worst-case four-point hyperbolicity `δ∞`.
///
/// Pairs are visited in decreasing order of distance and each is combined
/// with every longer pair. A quadruple whose largest pairing sum is realized
/// by pairs `(p, q)` with `d(p) ≥ d(q)` satisfies `(S₁ - S₂)/2 ≤ d(q)/2`, and it
/// is visited when `q` is the outer pair, so the scan stops once the outer
/// pair's half-length falls to the running maximum. It also stops when the
/// maximum reaches half the diameter, the global upper bound.
pub fn delta_inf(d: &DistanceMatrix) -> Result<f64> {
    require_connected(d)?;
    let n = d.len();
    if n < 4 {
        return Ok(0.0);
    }
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    pairs.sort_by(|a, b| {
        d.get(b.0, b.1)
            .total_cmp(&d.get(a.0, a.1))
            .then_with(|| a.cmp(b))
    });
    let half_diameter = d.get(pairs[0].0, pairs[0].1) / 2.0;
    let mut best = 0.0_f64;
    let mut start = 1;
    while start < pairs.len() {
        let (x, y) = pairs[start];
        if d.get(x, y) / 2.0 <= best || best >= half_diameter {
            break;
        }
        let end = (start + PAIR_BLOCK).min(pairs.len());
        let block_best = (start..end)
            .into_par_iter()
            .map(|i| {
                let (x, y) = pairs[i];
                let mut local = 0.0_f64;
                for &(z, t) in &pairs[..i] {
                    local = local.max(pairing_gap(d, x, y, z, t));
                }
                local / 2.0
            })
            .reduce(|| 0.0, f64::max);
        best = best.max(block_best);
        start = end;
    }
    Ok(best)
}

/// `δ∞` of a connected graph's path metric, computed block by block.
///
/// Shortest paths between two nodes of a biconnected component never leave
/// it, and any quadruple spread over several blocks has `τ = 0`, so the graph
/// value is the maximum over blocks. Blocks with fewer than four nodes
/// contribute 0.
pub fn graph_delta_inf(g: &WeightedGraph) -> Result<f64> {
    if !g.is_connected() {
        return Err(Error::Domain(
            "graph has several components; restrict to one component first".into(),
        ));
    }
    let mut best = 0.0_f64;
    for block in biconnected_components(g) {
        if block.len() < 4 {
            continue;
        }
        let sub = induced_subgraph(g, &block)?;
        best = best.max(delta_inf(&shortest_paths(&sub))?);
    }
    Ok(best)
}

/// Sum of `S₁ - S₂` over all 4-subsets, accumulated in a fixed order.
fn gap_sum(d: &DistanceMatrix) -> f64 {
    let n = d.len();
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut s = 0.0;
            for b in (a + 1)..n {
                for c in (b + 1)..n {
                    for e in (c + 1)..n {
                        s += pairing_gap(d, a, b, c, e);
                    }
                }
            }
            s
        })
        .collect();
    partial.iter().sum()
}

/// Exact average hyperbolicity `δ₁` over all `n⁴` ordered quadruples,
/// for metrics with at most `exact_limit` points.
pub fn delta_one_exact(d: &DistanceMatrix, exact_limit: usize) -> Result<f64> {
    let n = d.len();
    if n > exact_limit {
        return Err(Error::ExactLimit {
            n,
            limit: exact_limit,
        });
    }
    require_connected(d)?;
    if n < 4 {
        return Ok(0.0);
    }
    let n4 = (n as f64).powi(4);
    Ok(4.0 * gap_sum(d) / n4)
}

/// Monte-Carlo estimate of `δ₁` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte-Carlo `δ₁` from i.i.d. uniform ordered quadruples.
///
/// Samples are drawn in fixed-size chunks, chunk `i` from its own ChaCha
/// stream of `seed`, so the estimate does not depend on the thread count.
pub fn delta_one_sampled(
    d: &DistanceMatrix,
    num_samples: usize,
    seed: u64,
) -> Result<DeltaEstimate> {
    if num_samples < 100 {
        return Err(Error::Config(format!(
            "at least 100 samples required, got {num_samples}"
        )));
    }
    require_connected(d)?;
    let n = d.len();
    if n == 0 {
        return Err(Error::Empty("metric has no points".into()));
    }
    let chunks = num_samples.div_ceil(SAMPLE_CHUNK);
    let moments: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = SAMPLE_CHUNK.min(num_samples - c * SAMPLE_CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let x = rng.random_range(0..n);
                let y = rng.random_range(0..n);
                let z = rng.random_range(0..n);
                let t = rng.random_range(0..n);
                let tau = tau_unchecked(d, x, y, z, t);
                s += tau;
                s2 += tau * tau;
            }
            (s, s2)
        })
        .collect();
    let (sum, sum_sq) = moments
        .iter()
        .fold((0.0, 0.0), |(a, b), &(s, s2)| (a + s, b + s2));
    let m = num_samples as f64;
    let mean = sum / m;
    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(DeltaEstimate {
        estimate: mean,
        std_error: (var / m).sqrt(),
    })
}
