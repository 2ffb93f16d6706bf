//! Weighted undirected graphs and the machinery built on them.

mod generators;
mod io;
mod paths;
mod split;

pub use generators::{
    diffused_features, generate_combined, generate_lattice, generate_tree, noisy_class_features,
    reference_combined, ReferenceCombined,
};
pub use io::{
    load_edge_list, load_features_csv, load_labels_csv, parse_edge_list, write_edge_list,
    write_features_csv, write_labels_csv, EdgeList,
};
pub use paths::{
    biconnected_components, hop_distances, induced_subgraph, k_hop_subgraph, shortest_paths,
    DistanceMatrix, Subgraph,
};
pub use split::{sample_non_edges, split_edges, split_nodes, SplitSpec};

use std::collections::HashSet;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Node identifier, dense in `0..num_nodes`.
pub type NodeId = usize;

/// An undirected edge with a strictly positive length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub w: f64,
}

/// Undirected simple graph with positive edge weights and optional node data.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    num_nodes: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, f64)>>,
    features: Option<Array2<f64>>,
    labels: Option<Vec<usize>>,
}

impl WeightedGraph {
    /// Builds a graph, rejecting self-loops, duplicates, bad ids and
    /// non-positive weights.
    pub fn new(num_nodes: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); num_nodes];
        for (i, e) in edges.iter().enumerate() {
            if e.u >= num_nodes || e.v >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge {i} ({}, {}) references a node outside 0..{num_nodes}",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(Error::Validation(format!("self-loop at node {}", e.u)));
            }
            if !(e.w > 0.0) || !e.w.is_finite() {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) has non-positive or non-finite weight {}",
                    e.u, e.v, e.w
                )));
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            if !seen.insert(key) {
                return Err(Error::Validation(format!(
                    "duplicate edge ({}, {})",
                    key.0, key.1
                )));
            }
            adjacency[e.u].push((e.v, e.w));
            adjacency[e.v].push((e.u, e.w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(n, _)| n);
        }
        Ok(Self {
            num_nodes,
            edges,
            adjacency,
            features: None,
            labels: None,
        })
    }

    /// Convenience constructor for unit-weight graphs.
    pub fn unweighted(num_nodes: usize, pairs: &[(NodeId, NodeId)]) -> Result<Self> {
        let edges = pairs.iter().map(|&(u, v)| Edge { u, v, w: 1.0 }).collect();
        Self::new(num_nodes, edges)
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.num_nodes {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                self.num_nodes
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::Shape(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `v` with edge weights, sorted by neighbor id.
    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency[u]
            .binary_search_by_key(&v, |&(n, _)| n)
            .is_ok()
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// True when every edge carries the same weight.
    pub fn is_uniformly_weighted(&self) -> bool {
        match self.edges.first() {
            None => true,
            Some(first) => self.edges.iter().all(|e| e.w == first.w),
        }
    }

    /// Copy of the graph with every weight multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { w: e.w * s, ..*e })
            .collect();
        let mut g = Self::new(self.num_nodes, edges)?;
        g.features = self.features.clone();
        g.labels = self.labels.clone();
        Ok(g)
    }

    /// Same node set and node data, restricted to the given edges.
    pub fn with_edge_subset(&self, keep: &[usize]) -> Result<Self> {
        let edges = keep.iter().map(|&i| self.edges[i]).collect();
        let mut g = Self::new(self.num_nodes, edges)?;
        g.features = self.features.clone();
        g.labels = self.labels.clone();
        Ok(g)
    }

    /// Connected component id per node, numbered in order of first node.
    pub fn components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.num_nodes];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..self.num_nodes {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    /// Stable content hash of the topology and weights (node data excluded).
    pub fn content_hash(&self) -> String {
        let mut keys: Vec<(usize, usize, u64)> = self
            .edges
            .iter()
            .map(|e| (e.u.min(e.v), e.u.max(e.v), e.w.to_bits()))
            .collect();
        keys.sort_unstable();
        let mut hasher = Sha256::new();
        hasher.update((self.num_nodes as u64).to_le_bytes());
        for (u, v, w) in keys {
            hasher.update((u as u64).to_le_bytes());
            hasher.update((v as u64).to_le_bytes());
            hasher.update(w.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_loop_duplicates_and_bad_weights() {
        assert!(matches!(
            WeightedGraph::unweighted(2, &[(0, 0)]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            WeightedGraph::unweighted(2, &[(0, 1), (1, 0)]),
            Err(Error::Validation(_))
        ));
        assert!(WeightedGraph::new(2, vec![Edge { u: 0, v: 1, w: 0.0 }]).is_err());
        assert!(WeightedGraph::new(
            2,
            vec![Edge {
                u: 0,
                v: 1,
                w: -1.0
            }]
        )
        .is_err());
        assert!(WeightedGraph::unweighted(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn components_and_hash() {
        let g = WeightedGraph::unweighted(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(g.components(), vec![0, 0, 1, 1]);
        assert!(!g.is_connected());
        let h = WeightedGraph::unweighted(4, &[(3, 2), (1, 0)]).unwrap();
        assert_eq!(g.content_hash(), h.content_hash());
        assert_ne!(g.content_hash(), g.scaled(2.0).unwrap().content_hash());
    }

    #[test]
    fn node_data_shapes_checked() {
        let g = WeightedGraph::unweighted(3, &[(0, 1)]).unwrap();
        assert!(g.clone().with_labels(vec![0, 1]).is_err());
        assert!(g.clone().with_features(Array2::zeros((2, 4))).is_err());
        let g = g.with_labels(vec![0, 2, 1]).unwrap();
        assert_eq!(g.num_classes(), Some(3));
    }
}
