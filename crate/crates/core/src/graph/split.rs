use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NodeId, WeightedGraph};
use crate::error::{Error, Result};

/// Train/validation/test partition. Holds node ids for node tasks and edge
/// indices (into [`WeightedGraph::edges`]) for link tasks; link splits also
/// carry sampled non-edges used as validation/test negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub val_negatives: Vec<(NodeId, NodeId)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_negatives: Vec<(NodeId, NodeId)>,
}

impl SplitSpec {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn set_sizes(population: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(Error::Config(format!(
            "split fractions must be positive, got ({a}, {b}, {c})"
        )));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions sum to {} instead of 1",
            a + b + c
        )));
    }
    let val = (population as f64 * b).round() as usize;
    let test = (population as f64 * c).round() as usize;
    let train = population.saturating_sub(val + test);
    if train == 0 || val == 0 || test == 0 || val + test >= population {
        return Err(Error::Empty(format!(
            "population of {population} cannot give every split at least one element"
        )));
    }
    Ok((train, val, test))
}

fn partition(
    population: usize,
    fractions: (f64, f64, f64),
    rng: &mut ChaCha8Rng,
) -> Result<[Vec<usize>; 3]> {
    let (train, val, _) = set_sizes(population, fractions)?;
    let mut ids: Vec<usize> = (0..population).collect();
    ids.shuffle(rng);
    let mut tr = ids[..train].to_vec();
    let mut va = ids[train..train + val].to_vec();
    let mut te = ids[train + val..].to_vec();
    tr.sort_unstable();
    va.sort_unstable();
    te.sort_unstable();
    Ok([tr, va, te])
}

/// Random node partition, deterministic in `seed`.
pub fn split_nodes(g: &WeightedGraph, fractions: (f64, f64, f64), seed: u64) -> Result<SplitSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [train, val, test] = partition(g.num_nodes(), fractions, &mut rng)?;
    Ok(SplitSpec {
        train,
        val,
        test,
        seed,
        val_negatives: Vec::new(),
        test_negatives: Vec::new(),
    })
}

/// Random edge partition plus one uniformly drawn non-edge per validation
/// and test edge. Negatives are rejection-sampled and distinct.
pub fn split_edges(g: &WeightedGraph, fractions: (f64, f64, f64), seed: u64) -> Result<SplitSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [train, val, test] = partition(g.num_edges(), fractions, &mut rng)?;
    let n = g.num_nodes();
    let non_edges = n * (n - 1) / 2 - g.num_edges();
    if non_edges < val.len() + test.len() {
        return Err(Error::Empty(
            "graph is too dense to sample disjoint negative edges".into(),
        ));
    }
    let mut used = HashSet::new();
    let mut draw = |count: usize, rng: &mut ChaCha8Rng| {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v || g.has_edge(u, v) {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if used.insert(key) {
                out.push(key);
            }
        }
        out
    };
    let val_negatives = draw(val.len(), &mut rng);
    let test_negatives = draw(test.len(), &mut rng);
    Ok(SplitSpec {
        train,
        val,
        test,
        seed,
        val_negatives,
        test_negatives,
    })
}

/// `count` uniform draws from the non-edges of `g` (repeats allowed),
/// returned as `(min, max)` pairs.
pub fn sample_non_edges(
    g: &WeightedGraph,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(NodeId, NodeId)>> {
    let n = g.num_nodes();
    if n < 2 || n * (n - 1) / 2 == g.num_edges() {
        return Err(Error::Empty("graph has no non-edges to sample".into()));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !g.has_edge(u, v) {
            out.push((u.min(v), u.max(v)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_lattice, generate_tree};

    #[test]
    fn ten_nodes_sixty_twenty_twenty() {
        let g = WeightedGraph::unweighted(10, &[]).unwrap();
        let s = split_nodes(&g, (0.6, 0.2, 0.2), 7).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
        assert_eq!(s, split_nodes(&g, (0.6, 0.2, 0.2), 7).unwrap());
        assert_ne!(s, split_nodes(&g, (0.6, 0.2, 0.2), 8).unwrap());
    }

    #[test]
    fn twenty_edges_link_split() {
        let g = generate_lattice(2, 7).unwrap();
        assert_eq!(g.num_edges(), 19);
        let g = generate_tree(1, 20).unwrap();
        assert_eq!(g.num_edges(), 20);
        let s = split_edges(&g, (0.85, 0.05, 0.10), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (17, 1, 2));
        assert_eq!(s.val_negatives.len(), 1);
        assert_eq!(s.test_negatives.len(), 2);
        for &(u, v) in s.val_negatives.iter().chain(&s.test_negatives) {
            assert!(u != v && !g.has_edge(u, v));
        }
    }

    #[test]
    fn degenerate_fractions_rejected() {
        let g = WeightedGraph::unweighted(10, &[]).unwrap();
        assert!(split_nodes(&g, (1.0, 0.0, 0.0), 0).is_err());
        assert!(split_nodes(&g, (0.5, 0.2, 0.2), 0).is_err());
        let tiny = WeightedGraph::unweighted(2, &[]).unwrap();
        assert!(matches!(
            split_nodes(&tiny, (0.6, 0.2, 0.2), 0),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn json_shape() {
        let g = WeightedGraph::unweighted(5, &[]).unwrap();
        let s = split_nodes(&g, (0.6, 0.2, 0.2), 1).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 4);
        for k in ["train", "val", "test", "seed"] {
            assert!(v.get(k).is_some());
        }
    }

    #[test]
    fn sampled_non_edges_avoid_edges() {
        let g = generate_lattice(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let neg = sample_non_edges(&g, 200, &mut rng).unwrap();
        assert_eq!(neg.len(), 200);
        assert!(neg.iter().all(|&(u, v)| u < v && !g.has_edge(u, v)));
        let full = WeightedGraph::unweighted(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(sample_non_edges(&full, 1, &mut rng).is_err());
    }
}
