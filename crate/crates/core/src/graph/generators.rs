//! Synthetic graphs: grids, balanced trees and a lattice+tree hybrid.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Edge, NodeId, WeightedGraph};
use crate::error::{Error, Result};

/// `rows × cols` grid with 4-neighbor connectivity; node `(r, c)` is `r * cols + c`.
pub fn generate_lattice(rows: usize, cols: usize) -> Result<WeightedGraph> {
    if rows < 2 || cols < 2 {
        return Err(Error::Config(format!(
            "lattice needs at least 2x2, got {rows}x{cols}"
        )));
    }
    let mut pairs = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let id = r * cols + c;
            if c + 1 < cols {
                pairs.push((id, id + 1));
            }
            if r + 1 < rows {
                pairs.push((id, id + cols));
            }
        }
    }
    WeightedGraph::unweighted(rows * cols, &pairs)
}

/// Balanced rooted tree in breadth-first numbering; node 0 is the root.
pub fn generate_tree(branching: usize, depth: usize) -> Result<WeightedGraph> {
    if branching == 0 {
        return Err(Error::Config("tree branching factor must be >= 1".into()));
    }
    let mut pairs = Vec::new();
    let mut level: Vec<NodeId> = vec![0];
    let mut next_id = 1;
    for _ in 0..depth {
        let mut next_level = Vec::with_capacity(level.len() * branching);
        for &parent in &level {
            for _ in 0..branching {
                pairs.push((parent, next_id));
                next_level.push(next_id);
                next_id += 1;
            }
        }
        level = next_level;
    }
    WeightedGraph::unweighted(next_id, &pairs)
}

/// Disjoint union of `lattice` and `tree` joined by one unit edge between
/// `glue.0` (a lattice node) and `glue.1` (a tree node, normally the root).
/// Tree nodes are shifted by `lattice.num_nodes()`.
pub fn generate_combined(
    lattice: &WeightedGraph,
    tree: &WeightedGraph,
    glue: (NodeId, NodeId),
) -> Result<WeightedGraph> {
    let offset = lattice.num_nodes();
    if glue.0 >= offset || glue.1 >= tree.num_nodes() {
        return Err(Error::Validation(format!(
            "glue ({}, {}) outside lattice 0..{} / tree 0..{}",
            glue.0,
            glue.1,
            offset,
            tree.num_nodes()
        )));
    }
    let mut edges: Vec<Edge> = lattice.edges().to_vec();
    edges.extend(tree.edges().iter().map(|e| Edge {
        u: e.u + offset,
        v: e.v + offset,
        w: e.w,
    }));
    edges.push(Edge {
        u: glue.0,
        v: glue.1 + offset,
        w: 1.0,
    });
    WeightedGraph::new(offset + tree.num_nodes(), edges)
}

/// The reference lattice+tree construction used by the synthetic experiments:
/// a 5×5 grid whose corner node 0 is joined to the root of a depth-3 binary tree.
#[derive(Debug, Clone)]
pub struct ReferenceCombined {
    pub graph: WeightedGraph,
    /// Nodes `0..lattice_nodes` are lattice nodes, the rest are tree nodes.
    pub lattice_nodes: usize,
}

impl ReferenceCombined {
    /// Planted class: 0 for lattice nodes, 1 for tree nodes.
    pub fn class_of(&self, v: NodeId) -> usize {
        usize::from(v >= self.lattice_nodes)
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.graph.num_nodes())
            .map(|v| self.class_of(v))
            .collect()
    }
}

pub fn reference_combined() -> ReferenceCombined {
    let lattice = generate_lattice(5, 5).expect("5x5 lattice is valid");
    let tree = generate_tree(2, 3).expect("binary tree is valid");
    let graph = generate_combined(&lattice, &tree, (0, 0)).expect("glue ids are valid");
    ReferenceCombined {
        graph,
        lattice_nodes: 25,
    }
}

fn gaussian(sd: f64) -> Result<Normal<f64>> {
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(Error::Config(format!(
            "standard deviation must be finite and nonnegative, got {sd}"
        )));
    }
    Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()))
}

/// `dim`-wide features whose column `label` is 1 and the rest 0, plus
/// independent Gaussian noise of standard deviation `noise`.
pub fn noisy_class_features(
    labels: &[usize],
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if classes > dim {
        return Err(Error::Config(format!(
            "{classes} classes do not fit in {dim} feature columns"
        )));
    }
    let normal = gaussian(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Array2::from_shape_fn((labels.len(), dim), |(v, j)| {
        f64::from(u8::from(labels[v] == j)) + normal.sample(&mut rng)
    }))
}

/// Features spread along breadth-first trees: each component's lowest node
/// draws a standard normal vector and every other node adds `N(0, step²)`
/// noise to its BFS parent's vector.
pub fn diffused_features(
    g: &WeightedGraph,
    dim: usize,
    step: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    let normal = gaussian(step)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.num_nodes();
    let mut x = Array2::zeros((n, dim));
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        for j in 0..dim {
            x[[root, j]] = rand_distr::StandardNormal.sample(&mut rng);
        }
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in g.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    for j in 0..dim {
                        x[[v, j]] = x[[u, j]] + normal.sample(&mut rng);
                    }
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(x)
}
