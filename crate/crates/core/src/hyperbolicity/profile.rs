use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    delta_one_exact, delta_one_sampled, graph_delta_inf, DEFAULT_EXACT_LIMIT, DEFAULT_SAMPLES,
};
use crate::error::{Error, Result};
use crate::graph::{k_hop_subgraph, shortest_paths, WeightedGraph};

/// Histogram bin width used when none is given.
pub const DEFAULT_BIN_WIDTH: f64 = 0.5;

/// Which hyperbolicity statistic to compute per neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HyperbolicityMode {
    /// Worst case over quadruples.
    Inf,
    /// Mean over uniform ordered quadruples.
    One,
}

impl fmt::Display for HyperbolicityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HyperbolicityMode::Inf => "inf",
            HyperbolicityMode::One => "one",
        })
    }
}

impl FromStr for HyperbolicityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" => Ok(Self::Inf),
            "one" | "1" => Ok(Self::One),
            other => Err(Error::Config(format!(
                "unknown hyperbolicity mode `{other}` (expected inf or one)"
            ))),
        }
    }
}

/// Knobs for the average-hyperbolicity path of [`local_profile_with`].
#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    pub exact_limit: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            exact_limit: DEFAULT_EXACT_LIMIT,
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

/// Local hyperbolicity `δ_v` of every node's k-hop neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicityProfile {
    pub k: usize,
    pub mode: HyperbolicityMode,
    /// Indexed by node id.
    pub per_node: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProfileJson {
    k: usize,
    mode: HyperbolicityMode,
    delta: IndexMap<String, f64>,
}

impl HyperbolicityProfile {
    pub fn len(&self) -> usize {
        self.per_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_node.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.per_node.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_distribution(&self) -> Result<EmpiricalDistribution> {
        EmpiricalDistribution::new(self.per_node.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        let delta = self
            .per_node
            .iter()
            .enumerate()
            .map(|(i, &d)| (i.to_string(), d))
            .collect();
        Ok(serde_json::to_string_pretty(&ProfileJson {
            k: self.k,
            mode: self.mode,
            delta,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ProfileJson = serde_json::from_str(text)?;
        let n = raw.delta.len();
        let mut per_node = vec![f64::NAN; n];
        for (key, value) in raw.delta {
            let id: usize = key
                .parse()
                .map_err(|_| Error::Validation(format!("bad node key `{key}`")))?;
            if id >= n {
                return Err(Error::Validation(format!(
                    "node keys must be dense, found {id} among {n}"
                )));
            }
            if !(value >= 0.0) {
                return Err(Error::Validation(format!("negative delta for node {id}")));
            }
            per_node[id] = value;
        }
        if per_node.iter().any(|x| x.is_nan()) {
            return Err(Error::Validation("duplicate node keys".into()));
        }
        Ok(Self {
            k: raw.k,
            mode: raw.mode,
            per_node,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// [`local_profile_with`] using default options.
pub fn local_profile(
    g: &WeightedGraph,
    k: usize,
    mode: HyperbolicityMode,
) -> Result<HyperbolicityProfile> {
    local_profile_with(g, k, mode, &ProfileOptions::default())
}

/// Hyperbolicity of each node's k-hop induced subgraph under the
/// subgraph's own path metric. Neighborhoods with fewer than four nodes get 0.
/// Nodes are processed in parallel.
pub fn local_profile_with(
    g: &WeightedGraph,
    k: usize,
    mode: HyperbolicityMode,
    opts: &ProfileOptions,
) -> Result<HyperbolicityProfile> {
    if k == 0 {
        return Err(Error::Config("hop count k must be at least 1".into()));
    }
    let per_node = (0..g.num_nodes())
        .into_par_iter()
        .map(|v| -> Result<f64> {
            let sub = k_hop_subgraph(g, v, k)?;
            if sub.graph.num_nodes() < 4 || sub.graph.num_edges() + 1 == sub.graph.num_nodes() {
                // Too small, or a tree (connected with n - 1 edges).
                return Ok(0.0);
            }
            match mode {
                HyperbolicityMode::Inf => graph_delta_inf(&sub.graph),
                HyperbolicityMode::One => {
                    let d = shortest_paths(&sub.graph);
                    if d.len() <= opts.exact_limit {
                        delta_one_exact(&d, opts.exact_limit)
                    } else {
                        let seed = opts.seed ^ (v as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                        Ok(delta_one_sampled(&d, opts.samples, seed)?.estimate)
                    }
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(HyperbolicityProfile { k, mode, per_node })
}

/// Sorted sample list of a scalar distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty(
                "distribution needs at least one sample".into(),
            ));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::Validation("NaN sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Half-open bins `[e_i, e_{i+1})` of width `bin_width`, anchored at a
    /// multiple of the width at or below the smallest sample.
    pub fn histogram(&self, bin_width: f64) -> Result<Histogram> {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::Config(format!(
                "bin width must be positive, got {bin_width}"
            )));
        }
        let lo = (self.samples[0] / bin_width).floor();
        let hi = (self.samples[self.samples.len() - 1] / bin_width).floor();
        let bins = (hi - lo) as usize + 1;
        let edges: Vec<f64> = (0..=bins).map(|i| (lo + i as f64) * bin_width).collect();
        let mut counts = vec![0usize; bins];
        for &x in &self.samples {
            let i = ((x / bin_width).floor() - lo) as usize;
            counts[i.min(bins - 1)] += 1;
        }
        Ok(Histogram { edges, counts })
    }
}

/// Bin edges (one more than counts) and per-bin counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(left, right, count)` for every non-empty bin.
    pub fn nonzero_bins(&self) -> Vec<(f64, f64, usize)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (self.edges[i], self.edges[i + 1], c))
            .collect()
    }

    /// CSV with header `bin_left,bin_right,count`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "bin_left,bin_right,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{},{}", self.edges[i], self.edges[i + 1], c)?;
        }
        Ok(())
    }
}
