use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;

use super::{Edge, NodeId, WeightedGraph};
use crate::error::{Error, Result};

/// Dense all-pairs shortest-path metric. Unreachable pairs hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps a row-major matrix, checking it is square, symmetric, nonnegative
    /// and zero on the diagonal.
    pub fn from_rows(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::Shape(format!(
                "{} entries for a {n}x{n} matrix",
                d.len()
            )));
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::Validation(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let x = d[i * n + j];
                if x.is_nan() || x < 0.0 || x != d[j * n + i] {
                    return Err(Error::Validation(format!(
                        "entry ({i}, {j}) is negative, NaN or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn is_reachable(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_finite()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// True when every pair is reachable.
    pub fn is_connected(&self) -> bool {
        self.d.iter().all(|x| x.is_finite())
    }

    /// Largest finite distance.
    pub fn diameter(&self) -> f64 {
        self.d
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            d: self.d.iter().map(|x| x * s).collect(),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct State {
    dist: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn bfs_row(g: &WeightedGraph, source: NodeId, unit: f64) -> Vec<f64> {
    let hops = hop_distances(g, source);
    hops.into_iter()
        .map(|h| h.map_or(f64::INFINITY, |h| h as f64 * unit))
        .collect()
}

fn dijkstra_row(g: &WeightedGraph, source: NodeId) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.num_nodes()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(State {
        dist: 0.0,
        node: source,
    });
    while let Some(State { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in g.neighbors(node) {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(State {
                    dist: nd,
                    node: next,
                });
            }
        }
    }
    dist
}

/// Exact all-pairs shortest paths: BFS when all weights are equal, Dijkstra
/// otherwise. Sources are processed in parallel; each row is computed
/// independently so the result does not depend on scheduling.
pub fn shortest_paths(g: &WeightedGraph) -> DistanceMatrix {
    let n = g.num_nodes();
    let unit = g.edges().first().map(|e| e.w);
    let uniform = g.is_uniformly_weighted();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| match (uniform, unit) {
            (true, Some(w)) => bfs_row(g, s, w),
            (true, None) => (0..n)
                .map(|t| if t == s { 0.0 } else { f64::INFINITY })
                .collect(),
            (false, _) => dijkstra_row(g, s),
        })
        .collect();
    let mut d = Vec::with_capacity(n * n);
    for row in rows {
        d.extend(row);
    }
    // Dijkstra sums are symmetric in exact arithmetic only; mirror the upper
    // triangle so d[i][j] == d[j][i] bit for bit.
    for i in 0..n {
        for j in (i + 1)..n {
            d[j * n + i] = d[i * n + j];
        }
    }
    DistanceMatrix { n, d }
}

/// Unweighted hop count from `source` to every node (`None` if unreachable).
pub fn hop_distances(g: &WeightedGraph, source: NodeId) -> Vec<Option<usize>> {
    let mut hops = vec![None; g.num_nodes()];
    let mut queue = VecDeque::new();
    hops[source] = Some(0);
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let h = hops[u].unwrap_or(0);
        for &(v, _) in g.neighbors(u) {
            if hops[v].is_none() {
                hops[v] = Some(h + 1);
                queue.push_back(v);
            }
        }
    }
    hops
}

/// Induced subgraph together with its mapping back to the parent graph.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub graph: WeightedGraph,
    /// `nodes[local] = parent id`, ascending.
    pub nodes: Vec<NodeId>,
    /// Local id of the node the subgraph was grown from.
    pub center: usize,
}

impl Subgraph {
    pub fn local_of(&self, parent: NodeId) -> Option<usize> {
        self.nodes.binary_search(&parent).ok()
    }
}

/// Induced subgraph on every node within `k` hops (edge count, not length)
/// of `v`, keeping original weights.
pub fn k_hop_subgraph(g: &WeightedGraph, v: NodeId, k: usize) -> Result<Subgraph> {
    if v >= g.num_nodes() {
        return Err(Error::Domain(format!(
            "node {v} outside 0..{}",
            g.num_nodes()
        )));
    }
    let mut local = vec![usize::MAX; g.num_nodes()];
    let mut nodes = Vec::new();
    let mut frontier = vec![v];
    let mut depth = vec![usize::MAX; g.num_nodes()];
    depth[v] = 0;
    let mut visited = vec![v];
    let mut level = 0;
    while !frontier.is_empty() && level < k {
        let mut next = Vec::new();
        for &u in &frontier {
            for &(w, _) in g.neighbors(u) {
                if depth[w] == usize::MAX {
                    depth[w] = level + 1;
                    next.push(w);
                    visited.push(w);
                }
            }
        }
        frontier = next;
        level += 1;
    }
    visited.sort_unstable();
    for &u in &visited {
        local[u] = nodes.len();
        nodes.push(u);
    }
    let mut edges = Vec::new();
    for &u in &nodes {
        for &(w, weight) in g.neighbors(u) {
            if u < w && local[w] != usize::MAX {
                edges.push(Edge {
                    u: local[u],
                    v: local[w],
                    w: weight,
                });
            }
        }
    }
    let graph = WeightedGraph::new(nodes.len(), edges)?;
    Ok(Subgraph {
        graph,
        center: local[v],
        nodes,
    })
}

/// Subgraph induced by `nodes` (ascending parent ids), relabeled `0..len`.
pub fn induced_subgraph(g: &WeightedGraph, nodes: &[NodeId]) -> Result<WeightedGraph> {
    let mut local = vec![usize::MAX; g.num_nodes()];
    for (i, &u) in nodes.iter().enumerate() {
        if u >= g.num_nodes() {
            return Err(Error::Domain(format!(
                "node {u} outside 0..{}",
                g.num_nodes()
            )));
        }
        local[u] = i;
    }
    let mut edges = Vec::new();
    for &u in nodes {
        for &(w, weight) in g.neighbors(u) {
            if u < w && local[w] != usize::MAX {
                edges.push(Edge {
                    u: local[u],
                    v: local[w],
                    w: weight,
                });
            }
        }
    }
    WeightedGraph::new(nodes.len(), edges)
}

/// Node sets of the biconnected components (blocks) with at least one edge,
/// each sorted ascending. Cut vertices appear in every block they join.
pub fn biconnected_components(g: &WeightedGraph) -> Vec<Vec<NodeId>> {
    let n = g.num_nodes();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut timer = 0;
    let mut edge_stack: Vec<(NodeId, NodeId)> = Vec::new();
    let mut blocks = Vec::new();
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        // (node, parent, next neighbor index)
        let mut stack = vec![(root, usize::MAX, 0)];
        while let Some(&mut (u, parent, ref mut next)) = stack.last_mut() {
            if let Some(&(w, _)) = g.neighbors(u).get(*next) {
                *next += 1;
                if disc[w] == usize::MAX {
                    edge_stack.push((u, w));
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, u, 0));
                } else if w != parent && disc[w] < disc[u] {
                    edge_stack.push((u, w));
                    low[u] = low[u].min(disc[w]);
                }
                continue;
            }
            stack.pop();
            if parent == usize::MAX {
                continue;
            }
            low[parent] = low[parent].min(low[u]);
            if low[u] >= disc[parent] {
                let mut block = Vec::new();
                while let Some((a, b)) = edge_stack.pop() {
                    block.push(a);
                    block.push(b);
                    if (a, b) == (parent, u) {
                        break;
                    }
                }
                block.sort_unstable();
                block.dedup();
                blocks.push(block);
            }
        }
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_lattice;

    fn path_weighted(ws: &[f64]) -> WeightedGraph {
        let edges = ws
            .iter()
            .enumerate()
            .map(|(i, &w)| Edge { u: i, v: i + 1, w })
            .collect();
        WeightedGraph::new(ws.len() + 1, edges).unwrap()
    }

    #[test]
    fn path_and_cycle_distances() {
        let d = shortest_paths(&WeightedGraph::unweighted(3, &[(0, 1), (1, 2)]).unwrap());
        assert_eq!(d.get(0, 2), 2.0);
        let c4 = WeightedGraph::unweighted(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let d = shortest_paths(&c4);
        assert_eq!(d.get(0, 2), 2.0);
        assert_eq!(d.get(0, 1), 1.0);
    }

    #[test]
    fn weighted_path_sum() {
        let d = shortest_paths(&path_weighted(&[2.5, 1.5]));
        assert_eq!(d.get(0, 2), 4.0);
    }

    #[test]
    fn dijkstra_prefers_lighter_detour() {
        let g = WeightedGraph::new(
            3,
            vec![
                Edge { u: 0, v: 2, w: 5.0 },
                Edge { u: 0, v: 1, w: 1.0 },
                Edge { u: 1, v: 2, w: 1.5 },
            ],
        )
        .unwrap();
        assert_eq!(shortest_paths(&g).get(0, 2), 2.5);
    }

    #[test]
    fn unreachable_is_infinite() {
        let g = WeightedGraph::unweighted(4, &[(0, 1), (2, 3)]).unwrap();
        let d = shortest_paths(&g);
        assert!(d.get(0, 3).is_infinite());
        assert!(!d.is_reachable(1, 2));
        assert!(!d.is_connected());
        assert_eq!(d.diameter(), 1.0);
    }

    #[test]
    fn edgeless_graph() {
        let g = WeightedGraph::unweighted(2, &[]).unwrap();
        let d = shortest_paths(&g);
        assert_eq!(d.get(0, 0), 0.0);
        assert!(d.get(0, 1).is_infinite());
    }

    #[test]
    fn k_hop_on_path_and_star() {
        let p = WeightedGraph::unweighted(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let s = k_hop_subgraph(&p, 2, 1).unwrap();
        assert_eq!(s.nodes, vec![1, 2, 3]);
        assert_eq!(s.graph.num_edges(), 2);
        assert_eq!(s.center, 1);

        let star = WeightedGraph::unweighted(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let s = k_hop_subgraph(&star, 0, 1).unwrap();
        assert_eq!(s.nodes.len(), 5);
        assert_eq!(s.graph.num_edges(), 4);

        let s0 = k_hop_subgraph(&star, 3, 0).unwrap();
        assert_eq!(s0.nodes, vec![3]);
    }

    #[test]
    fn lattice_diamond() {
        let g = generate_lattice(5, 5).unwrap();
        let s = k_hop_subgraph(&g, 12, 2).unwrap();
        // Manhattan ball of radius 2 around (2, 2).
        let expected: Vec<usize> = (0..25)
            .filter(|&i| {
                let (r, c) = ((i / 5) as i64, (i % 5) as i64);
                (r - 2).abs() + (c - 2).abs() <= 2
            })
            .collect();
        assert_eq!(s.nodes, expected);
        assert_eq!(s.nodes.len(), 13);
        // 8 horizontal + 8 vertical lattice edges survive.
        assert_eq!(s.graph.num_edges(), 16);
    }

    #[test]
    fn hop_count_ignores_weights() {
        let g = path_weighted(&[10.0, 10.0, 0.1]);
        let s = k_hop_subgraph(&g, 0, 2).unwrap();
        assert_eq!(s.nodes, vec![0, 1, 2]);
        assert_eq!(s.graph.edges()[0].w, 10.0);
    }

    #[test]
    fn blocks_of_small_graphs() {
        // two triangles sharing node 2, plus a pendant edge 4-5
        let g =
            WeightedGraph::unweighted(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2), (4, 5)])
                .unwrap();
        let mut b = biconnected_components(&g);
        b.sort();
        assert_eq!(b, vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5]]);

        let tree = WeightedGraph::unweighted(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]).unwrap();
        let b = biconnected_components(&tree);
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|blk| blk.len() == 2));

        let cycle =
            WeightedGraph::unweighted(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        assert_eq!(biconnected_components(&cycle), vec![vec![0, 1, 2, 3, 4]]);

        let isolated = WeightedGraph::unweighted(3, &[(0, 1)]).unwrap();
        assert_eq!(biconnected_components(&isolated), vec![vec![0, 1]]);
    }

    #[test]
    fn induced_keeps_weights() {
        let g = WeightedGraph::new(
            4,
            vec![
                Edge { u: 0, v: 1, w: 2.0 },
                Edge { u: 1, v: 2, w: 3.0 },
                Edge { u: 2, v: 3, w: 4.0 },
            ],
        )
        .unwrap();
        let h = induced_subgraph(&g, &[1, 2, 3]).unwrap();
        assert_eq!(h.num_edges(), 2);
        assert_eq!(h.neighbors(0), &[(1, 3.0)]);
        assert!(induced_subgraph(&g, &[7]).is_err());
    }
}
