use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

use super::hyp::log0;

/// Bound space-selection parameters: `m` is `[q_dim × hidden]`, `b` and `q`
/// are `1 × q_dim`.
#[derive(Debug, Clone, Copy)]
pub struct FusionParams {
    pub m: Var,
    pub b: Var,
    pub q: Var,
}

/// Fused embeddings and the per-node selection weights, all on the tape.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    /// `n × hidden`.
    pub z: Var,
    /// Weight on the Euclidean branch, `n×1`.
    pub beta_r: Var,
    /// Weight on the hyperbolic branch, `n×1`.
    pub beta_d: Var,
    /// Selection scores before the softmax.
    pub w_r: Var,
    pub w_d: Var,
}

fn score(t: &Tape, z: Var, p: &FusionParams) -> Result<Var> {
    let hidden = t.add(t.matmul(z, t.transpose(p.m))?, p.b)?;
    t.matmul(t.tanh(hidden), t.transpose(p.q))
}

/// Convex combination of the Euclidean rows `z_r` and the tangent images of
/// the ball rows `z_d_ball`, weighted by a two-way softmax of
/// `qᵀ tanh(M z + b)` scores.
pub fn fusion_forward(
    t: &Tape,
    z_r: Var,
    z_d_ball: Var,
    c: Var,
    p: &FusionParams,
) -> Result<LayerVars> {
    if t.shape(z_r) != t.shape(z_d_ball) {
        return Err(Error::Shape(format!(
            "branch outputs {:?} and {:?}",
            t.shape(z_r),
            t.shape(z_d_ball)
        )));
    }
    let z_d = log0(t, z_d_ball, c)?;
    let w_r = score(t, z_r, p)?;
    let w_d = score(t, z_d, p)?;
    let beta_r = t.sigmoid(t.sub(w_r, w_d)?);
    let beta_d = t.offset(t.neg(beta_r), 1.0);
    let z = t.add(t.mul(beta_r, z_r)?, t.mul(beta_d, z_d)?)?;
    Ok(LayerVars {
        z,
        beta_r,
        beta_d,
        w_r,
        w_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Mat;
    use crate::layers::hyp::exp0;
    use ndarray::arr2;

    fn setup(t: &Tape, hidden: usize, q_dim: usize) -> FusionParams {
        FusionParams {
            m: t.leaf(Mat::from_shape_fn((q_dim, hidden), |(i, j)| {
                0.3 * (i as f64 - j as f64).sin()
            })),
            b: t.leaf(Mat::from_elem((1, q_dim), 0.1)),
            q: t.leaf(Mat::from_shape_fn((1, q_dim), |(_, j)| {
                0.5 - 0.25 * j as f64
            })),
        }
    }

    #[test]
    fn weights_sum_to_one_and_combination_is_convex() {
        let t = Tape::new();
        let p = setup(&t, 3, 4);
        let c = t.scalar_leaf(1.0);
        let z_r = t.leaf(Mat::from_shape_fn((5, 3), |(i, j)| {
            (i as f64 - 2.0) * 0.4 + j as f64 * 0.1
        }));
        let ball = t.leaf(Mat::from_shape_fn((5, 3), |(i, j)| {
            0.1 * (i as f64 * 0.7 - j as f64)
        }));
        let o = fusion_forward(&t, z_r, ball, c, &p).unwrap();
        let (br, bd) = (t.value(o.beta_r), t.value(o.beta_d));
        let zr = t.value(z_r);
        let zd = t.value(log0(&t, ball, c).unwrap());
        let z = t.value(o.z);
        for v in 0..5 {
            assert!((br[[v, 0]] + bd[[v, 0]] - 1.0).abs() < 1e-12);
            assert!(br[[v, 0]] > 0.0 && br[[v, 0]] < 1.0);
            for k in 0..3 {
                let (lo, hi) = (zr[[v, k]].min(zd[[v, k]]), zr[[v, k]].max(zd[[v, k]]));
                assert!(z[[v, k]] >= lo - 1e-15 && z[[v, k]] <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn equal_branches_pass_through() {
        let t = Tape::new();
        let p = setup(&t, 2, 3);
        let c = t.scalar_leaf(1.0);
        let common = Mat::from_shape_fn((3, 2), |(i, j)| 0.2 * i as f64 - 0.3 * j as f64);
        let ball = exp0(&t, t.leaf(common.clone()), c).unwrap();
        let z_r = log0(&t, ball, c).unwrap();
        let o = fusion_forward(&t, z_r, ball, c, &p).unwrap();
        let zr = t.value(z_r);
        assert!(t
            .value(o.z)
            .iter()
            .zip(zr.iter())
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn saturated_scores_select_euclidean_branch() {
        let t = Tape::new();
        // hidden 1, q_dim 1: w = q tanh(m z + b); with m=1, b=0, q=20/tanh(1)
        // the scores are 20 at z = 1 and 0 at z = 0.
        let p = FusionParams {
            m: t.leaf(arr2(&[[1.0]])),
            b: t.leaf(arr2(&[[0.0]])),
            q: t.leaf(arr2(&[[20.0 / 1f64.tanh()]])),
        };
        let c = t.scalar_leaf(1.0);
        let z_r = t.leaf(arr2(&[[1.0]]));
        let ball = t.leaf(arr2(&[[0.0]]));
        let o = fusion_forward(&t, z_r, ball, c, &p).unwrap();
        assert!((t.scalar(o.w_r) - t.scalar(o.w_d) - 20.0).abs() < 1e-12);
        assert!((t.scalar(o.beta_r) - 1.0).abs() < 1e-8);
        assert!((t.scalar(o.z) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn matches_shifted_two_way_softmax() {
        let t = Tape::new();
        let c = t.scalar_leaf(1.0);
        let z_r = t.leaf(arr2(&[[0.3, -0.1], [0.2, 0.4]]));
        let ball = t.leaf(arr2(&[[0.1, 0.2], [-0.3, 0.0]]));
        let p = setup(&t, 2, 2);
        let o = fusion_forward(&t, z_r, ball, c, &p).unwrap();
        let beta = t.value(o.beta_r);
        for shift in [0.0, 3.7, -250.0] {
            let s = t.scalar_leaf(shift);
            let w = t
                .concat_cols(t.add(o.w_r, s).unwrap(), t.add(o.w_d, s).unwrap())
                .unwrap();
            let soft = t.value(t.softmax_rows(w));
            for v in 0..2 {
                assert!((soft[[v, 0]] - beta[[v, 0]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mismatched_branches_rejected() {
        let t = Tape::new();
        let p = setup(&t, 2, 2);
        let c = t.scalar_leaf(1.0);
        let a = t.leaf(Mat::zeros((3, 2)));
        let b = t.leaf(Mat::zeros((2, 2)));
        assert!(fusion_forward(&t, a, b, c, &p).is_err());
    }
}
