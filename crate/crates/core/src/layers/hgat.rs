use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

use super::gat::{aggregate, edge_logits, AttentionEdges, AttentionOutput};
use super::hyp::{distance, exp0, log0, mobius_add, mobius_matvec};
use super::Dropout;

/// Bound parameters of one hyperbolic attention layer. `w` is `[out × in]`,
/// `b` is a `1 × out` tangent vector mapped into the ball before use, `a` is
/// `1 × 2·out` and `c` is the `1×1` curvature.
#[derive(Debug, Clone, Copy)]
pub struct HgatParams {
    pub w: Var,
    pub b: Var,
    pub a: Var,
    pub c: Var,
    pub leaky_slope: f64,
}

/// Tangent-space output, its image in the ball and the attention weights.
#[derive(Debug, Clone, Copy)]
pub struct HgatOutput {
    pub tangent: Var,
    pub ball: Var,
    pub alpha: Var,
}

impl HgatOutput {
    pub fn attention(&self) -> AttentionOutput {
        AttentionOutput {
            out: self.tangent,
            alpha: self.alpha,
        }
    }
}

/// Hyperbolic graph attention over ball-valued rows `x`.
///
/// With `m_j = (W ⊗ x_j) ⊕ exp_o(b)` and `ĥ_j = log_o(W ⊗ x_j)`:
/// `e_vj = LeakyReLU(aᵀ[ĥ_v ∥ ĥ_j] · d(x_v, x_j))`, `α = softmax_j e_vj` and
/// the tangent output is `ELU(Σ_j α_vj log_o(m_j))`.
pub fn hgat_forward(
    t: &Tape,
    x: Var,
    edges: &AttentionEdges,
    p: &HgatParams,
    drop: &mut Dropout,
) -> Result<HgatOutput> {
    let c = t.scalar(p.c);
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!(
            "curvature must be positive, got {c}"
        )));
    }
    let outside = t.with_value(x, |m| {
        m.rows().into_iter().position(|r| c * r.dot(&r) >= 1.0)
    });
    if let Some(row) = outside {
        return Err(Error::Domain(format!(
            "row {row} is not a point of the ball with curvature {c}"
        )));
    }
    if t.shape(x).0 != edges.num_nodes() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} nodes",
            t.shape(x).0,
            edges.num_nodes()
        )));
    }
    let wx = mobius_matvec(t, p.w, x, p.c)?;
    let m = mobius_add(t, wx, exp0(t, p.b, p.c)?, p.c)?;
    let hhat = log0(t, wx, p.c)?;
    let logits = edge_logits(t, hhat, p.a, edges)?;
    let d = distance(
        t,
        t.gather_rows(x, edges.target.clone())?,
        t.gather_rows(x, edges.source.clone())?,
        p.c,
    )?;
    let d = t.mul(d, t.leaf(edges.off_diagonal.clone()))?;
    let e = t.leaky_relu(t.mul(logits, d)?, p.leaky_slope);
    let alpha = t.segment_softmax(e, edges.target.clone())?;
    let tangent = aggregate(t, log0(t, m, p.c)?, alpha, edges, drop)?;
    let ball = exp0(t, tangent, p.c)?;
    Ok(HgatOutput {
        tangent,
        ball,
        alpha,
    })
}
