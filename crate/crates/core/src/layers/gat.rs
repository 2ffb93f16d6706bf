use std::rc::Rc;

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

use super::Dropout;

/// Receiver/sender pairs of every attention edge, self-loops first per node.
#[derive(Debug, Clone)]
pub struct AttentionEdges {
    num_nodes: usize,
    /// Node `v` whose embedding is updated.
    pub target: Rc<[usize]>,
    /// Neighbor `j` sending the message.
    pub source: Rc<[usize]>,
    /// 0 on self-loops, 1 elsewhere; `E×1`.
    pub off_diagonal: Mat,
}

impl AttentionEdges {
    /// Neighborhoods of `g` with a self-loop added at every node.
    pub fn from_graph(g: &WeightedGraph) -> Self {
        let mut target = Vec::new();
        let mut source = Vec::new();
        for v in 0..g.num_nodes() {
            target.push(v);
            source.push(v);
            for &(j, _) in g.neighbors(v) {
                target.push(v);
                source.push(j);
            }
        }
        let off_diagonal = Mat::from_shape_fn((target.len(), 1), |(k, _)| {
            f64::from(u8::from(target[k] != source[k]))
        });
        Self {
            num_nodes: g.num_nodes(),
            target: target.into(),
            source: source.into(),
            off_diagonal,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }
}

/// Bound parameters of one Euclidean attention layer. `w` is `[out × in]`,
/// `a` is `1 × 2·out`.
#[derive(Debug, Clone, Copy)]
pub struct GatParams {
    pub w: Var,
    pub a: Var,
    pub leaky_slope: f64,
}

/// Layer output and the per-edge attention coefficients (before dropout).
#[derive(Debug, Clone, Copy)]
pub struct AttentionOutput {
    pub out: Var,
    pub alpha: Var,
}

/// `aᵀ[u_v ∥ u_j]` for every attention edge.
pub(crate) fn edge_logits(t: &Tape, u: Var, a: Var, edges: &AttentionEdges) -> Result<Var> {
    let dim = t.shape(u).1;
    if t.shape(a) != (1, 2 * dim) {
        return Err(Error::Shape(format!(
            "attention vector {:?} for width {dim}",
            t.shape(a)
        )));
    }
    let s_v = t.row_sum(t.mul(u, t.slice_cols(a, 0, dim)?)?);
    let s_j = t.row_sum(t.mul(u, t.slice_cols(a, dim, 2 * dim)?)?);
    t.add(
        t.gather_rows(s_v, edges.target.clone())?,
        t.gather_rows(s_j, edges.source.clone())?,
    )
}

/// Softmax-weighted sum of `messages[source]` into each target, then ELU.
pub(crate) fn aggregate(
    t: &Tape,
    messages: Var,
    alpha: Var,
    edges: &AttentionEdges,
    drop: &mut Dropout,
) -> Result<Var> {
    let alpha = drop.apply(t, alpha)?;
    let msg = t.mul(t.gather_rows(messages, edges.source.clone())?, alpha)?;
    let agg = t.scatter_rows(msg, edges.target.clone(), edges.num_nodes())?;
    Ok(t.elu(agg))
}

/// Euclidean graph attention: `h'_v = ELU(Σ_j α_vj W h_j)` with
/// `α_v· = softmax_j LeakyReLU(aᵀ[W h_v ∥ W h_j])`.
pub fn gat_forward(
    t: &Tape,
    h: Var,
    edges: &AttentionEdges,
    p: &GatParams,
    drop: &mut Dropout,
) -> Result<AttentionOutput> {
    if t.shape(h).0 != edges.num_nodes() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} nodes",
            t.shape(h).0,
            edges.num_nodes()
        )));
    }
    let wh = t.matmul(h, t.transpose(p.w))?;
    let e = t.leaky_relu(edge_logits(t, wh, p.a, edges)?, p.leaky_slope);
    let alpha = t.segment_softmax(e, edges.target.clone())?;
    let out = aggregate(t, wh, alpha, edges, drop)?;
    Ok(AttentionOutput { out, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;
    use ndarray::arr2;

    fn elu(x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            x.exp_m1()
        }
    }

    fn leaky(x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            0.2 * x
        }
    }

    #[test]
    fn single_node_is_transformed_input() {
        let g = WeightedGraph::new(1, vec![]).unwrap();
        let edges = AttentionEdges::from_graph(&g);
        let t = Tape::new();
        let h = t.leaf(arr2(&[[1.0, -2.0]]));
        let p = GatParams {
            w: t.leaf(arr2(&[[1.0, 1.0], [0.5, 0.0]])),
            a: t.leaf(arr2(&[[1.0, 2.0, 3.0, 4.0]])),
            leaky_slope: 0.2,
        };
        let o = gat_forward(&t, h, &edges, &p, &mut Dropout::eval()).unwrap();
        assert_eq!(t.value(o.alpha), arr2(&[[1.0]]));
        assert_eq!(t.value(o.out), arr2(&[[elu(-1.0), 0.5]]));
    }

    #[test]
    fn path_matches_hand_evaluation() {
        let g = WeightedGraph::unweighted(3, &[(0, 1), (1, 2)]).unwrap();
        let edges = AttentionEdges::from_graph(&g);
        let h0 = arr2(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let w0 = arr2(&[[1.0, -1.0], [2.0, 0.0]]);
        let a0 = [1.0, 0.0, -1.0, 1.0];
        let t = Tape::new();
        let p = GatParams {
            w: t.leaf(w0.clone()),
            a: t.leaf(arr2(&[a0])),
            leaky_slope: 0.2,
        };
        let o = gat_forward(&t, t.leaf(h0.clone()), &edges, &p, &mut Dropout::eval()).unwrap();
        let out = t.value(o.out);

        // independent evaluation straight from the definition
        let wh: Vec<[f64; 2]> = (0..3)
            .map(|v| {
                let x = [h0[[v, 0]], h0[[v, 1]]];
                [
                    w0[[0, 0]] * x[0] + w0[[0, 1]] * x[1],
                    w0[[1, 0]] * x[0] + w0[[1, 1]] * x[1],
                ]
            })
            .collect();
        let nbrs = [vec![0, 1], vec![1, 0, 2], vec![2, 1]];
        for v in 0..3 {
            let e: Vec<f64> = nbrs[v]
                .iter()
                .map(|&j| {
                    leaky(a0[0] * wh[v][0] + a0[1] * wh[v][1] + a0[2] * wh[j][0] + a0[3] * wh[j][1])
                })
                .collect();
            let z: f64 = e.iter().map(|x| x.exp()).sum();
            for k in 0..2 {
                let s: f64 = nbrs[v]
                    .iter()
                    .zip(&e)
                    .map(|(&j, x)| x.exp() / z * wh[j][k])
                    .sum();
                assert!((out[[v, k]] - elu(s)).abs() < 1e-14, "node {v} dim {k}");
            }
        }
    }

    #[test]
    fn attention_normalizes_per_node() {
        let g = WeightedGraph::unweighted(5, &[(0, 1), (0, 2), (0, 3), (3, 4)]).unwrap();
        let edges = AttentionEdges::from_graph(&g);
        let t = Tape::new();
        let h = t.leaf(Mat::from_shape_fn((5, 3), |(i, j)| {
            (i * 3 + j) as f64 * 0.1 - 0.5
        }));
        let p = GatParams {
            w: t.leaf(Mat::from_shape_fn((4, 3), |(i, j)| {
                (i as f64 - j as f64) * 0.3
            })),
            a: t.leaf(Mat::from_shape_fn((1, 8), |(_, j)| j as f64 * 0.1 - 0.4)),
            leaky_slope: 0.2,
        };
        let o = gat_forward(&t, h, &edges, &p, &mut Dropout::eval()).unwrap();
        let alpha = t.value(o.alpha);
        let mut sums = [0.0; 5];
        for (k, &v) in edges.target.iter().enumerate() {
            sums[v] += alpha[[k, 0]];
        }
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = WeightedGraph::unweighted(2, &[(0, 1)]).unwrap();
        let edges = AttentionEdges::from_graph(&g);
        let t = Tape::new();
        let p = GatParams {
            w: t.leaf(Mat::zeros((2, 2))),
            a: t.leaf(Mat::zeros((1, 3))),
            leaky_slope: 0.2,
        };
        let h = t.leaf(Mat::zeros((2, 2)));
        assert!(gat_forward(&t, h, &edges, &p, &mut Dropout::eval()).is_err());
        let h = t.leaf(Mat::zeros((3, 2)));
        assert!(gat_forward(&t, h, &edges, &p, &mut Dropout::eval()).is_err());
    }
}
