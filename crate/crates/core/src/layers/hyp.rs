//! Poincaré ball operations recorded on a [`Tape`].
//!
//! Points are the rows of an `n×d` matrix and the curvature is a `1×1` node,
//! so it can be trained. Results match [`crate::poincare`] row by row,
//! including the boundary projection and the `atanh` clamp.

use crate::autodiff::{Tape, UnaryFn, Var};
use crate::error::Result;
use crate::poincare::{ATANH_CLAMP, BALL_MARGIN};

const MIN_NORM: f64 = 1e-15;

fn sqrt_c(t: &Tape, c: Var) -> Var {
    t.sqrt(c)
}

/// Rescales rows longer than `(1 - μ)/√c` onto that radius.
pub fn project(t: &Tape, x: Var, c: Var) -> Result<Var> {
    let norm = t.maximum(t.row_norm(x), t.scalar_leaf(MIN_NORM))?;
    let radius = t.scale(t.unary(UnaryFn::Pow(-0.5), c), 1.0 - BALL_MARGIN);
    let factor = t.minimum(t.div(radius, norm)?, t.scalar_leaf(1.0))?;
    t.mul(x, factor)
}

/// Row-wise exponential map at the origin.
pub fn exp0(t: &Tape, v: Var, c: Var) -> Result<Var> {
    let s = t.mul(sqrt_c(t, c), t.row_norm(v))?;
    let y = t.mul(v, t.unary(UnaryFn::TanhOverX, s))?;
    project(t, y, c)
}

/// Row-wise logarithmic map at the origin.
pub fn log0(t: &Tape, y: Var, c: Var) -> Result<Var> {
    let s = t.mul(sqrt_c(t, c), t.row_norm(y))?;
    let s = t.clamp(s, 0.0, ATANH_CLAMP);
    t.mul(y, t.unary(UnaryFn::AtanhOverX, s))
}

/// Row-wise Möbius addition; a `1×d` operand is broadcast over rows.
pub fn mobius_add(t: &Tape, x: Var, y: Var, c: Var) -> Result<Var> {
    let xy = t.row_sum(t.mul(x, y)?);
    let x2 = t.row_sum(t.square(x));
    let y2 = t.row_sum(t.square(y));
    let cxy2 = t.scale(t.mul(c, xy)?, 2.0);
    let a = t.offset(t.add(cxy2, t.mul(c, y2)?)?, 1.0);
    let b = t.offset(t.neg(t.mul(c, x2)?), 1.0);
    let cc = t.square(c);
    let den = t.offset(t.add(cxy2, t.mul(cc, t.mul(x2, y2)?)?)?, 1.0);
    let num = t.add(t.mul(a, x)?, t.mul(b, y)?)?;
    project(t, t.div(num, den)?, c)
}

/// Möbius matrix action on rows: `exp_o(log_o(x) Wᵀ)` with `W` of shape `[out × in]`.
pub fn mobius_matvec(t: &Tape, w: Var, x: Var, c: Var) -> Result<Var> {
    let tangent = t.matmul(log0(t, x, c)?, t.transpose(w))?;
    exp0(t, tangent, c)
}

/// Row-wise geodesic distance, `n×1`.
pub fn distance(t: &Tape, x: Var, y: Var, c: Var) -> Result<Var> {
    let u = mobius_add(t, t.neg(x), y, c)?;
    let sc = sqrt_c(t, c);
    let s = t.clamp(t.mul(sc, t.row_norm(u))?, 0.0, ATANH_CLAMP);
    let d = t.div(t.atanh(s), sc)?;
    Ok(t.scale(d, 2.0))
}
