//! Curvature-`c` Poincaré ball on plain `f64` vectors.
//!
//! The ball is `{x : c‖x‖² < 1}` with conformal factor `λ_x = 2 / (1 - c‖x‖²)`.
//! Every ball-valued result is projected to norm at most `(1 - μ)/√c` with
//! margin [`BALL_MARGIN`], and `atanh` arguments are clamped below 1, so
//! nothing here returns a non-finite value for finite input.
//!
//! The differentiable counterparts used by the network live in
//! [`crate::layers::hyp`]; this module is the reference they are tested against.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Projection margin μ.
pub const BALL_MARGIN: f64 = 1e-5;
/// Largest argument passed to `atanh`.
pub const ATANH_CLAMP: f64 = 1.0 - 1e-15;

/// Positive curvature magnitude `c`; the ball radius is `1/√c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(Self(c))
        } else {
            Err(Error::Domain(format!(
                "curvature must be positive, got {c}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn sqrt(self) -> f64 {
        self.0.sqrt()
    }

    /// Largest norm a projected point may have.
    pub fn max_norm(self) -> f64 {
        (1.0 - BALL_MARGIN) / self.sqrt()
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Self(1.0)
    }
}

/// A point strictly inside the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPoint {
    coords: Vec<f64>,
    c: Curvature,
}

impl BallPoint {
    /// Wraps coordinates that already satisfy `c‖x‖² < 1 - μ`.
    pub fn new(coords: Vec<f64>, c: Curvature) -> Result<Self> {
        if c.value() * norm_sq(&coords) >= 1.0 - BALL_MARGIN
            || coords.iter().any(|x| !x.is_finite())
        {
            return Err(Error::Domain("point lies outside the ball margin".into()));
        }
        Ok(Self { coords, c })
    }

    pub fn origin(dim: usize, c: Curvature) -> Self {
        Self {
            coords: vec![0.0; dim],
            c,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        norm_sq(&self.coords).sqrt()
    }

    /// Additive inverse `-x`.
    pub fn neg(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|x| -x).collect(),
            c: self.c,
        }
    }

    /// Conformal factor `λ_x`.
    pub fn conformal_factor(&self) -> f64 {
        2.0 / (1.0 - self.c.value() * norm_sq(&self.coords))
    }

    /// `c‖x‖² < 1 - μ`.
    pub fn is_valid(&self) -> bool {
        self.c.value() * norm_sq(&self.coords) < 1.0 - BALL_MARGIN
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_pair(x: &BallPoint, y: &BallPoint) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "dimension {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    if x.c != y.c {
        return Err(Error::Domain(format!(
            "curvature {} vs {}",
            x.c.value(),
            y.c.value()
        )));
    }
    Ok(())
}

fn clamped_atanh(s: f64) -> f64 {
    s.clamp(0.0, ATANH_CLAMP).atanh()
}

/// Rescales `v` onto norm `(1 - μ)/√c` when it is longer than that.
pub fn project_to_ball(v: &[f64], c: Curvature) -> BallPoint {
    let norm = norm_sq(v).sqrt();
    let max = c.max_norm();
    let coords = if norm > max {
        let mut s = max / norm;
        let mut out: Vec<f64> = v.iter().map(|x| x * s).collect();
        // rounding can leave the result an ulp outside
        while norm_sq(&out).sqrt() > max {
            s *= 1.0 - f64::EPSILON;
            out = v.iter().map(|x| x * s).collect();
        }
        out
    } else {
        v.to_vec()
    };
    BallPoint { coords, c }
}

/// Möbius addition `x ⊕_c y`.
pub fn mobius_add(x: &BallPoint, y: &BallPoint) -> Result<BallPoint> {
    check_pair(x, y)?;
    let c = x.c.value();
    let xy = dot(&x.coords, &y.coords);
    let x2 = norm_sq(&x.coords);
    let y2 = norm_sq(&y.coords);
    let a = 1.0 + 2.0 * c * xy + c * y2;
    let b = 1.0 - c * x2;
    let den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    let out: Vec<f64> = x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(xi, yi)| (a * xi + b * yi) / den)
        .collect();
    Ok(project_to_ball(&out, x.c))
}

/// Exponential map at the origin: `tanh(√c‖v‖) v / (√c‖v‖)`.
pub fn exp_origin(v: &[f64], c: Curvature) -> BallPoint {
    let norm = norm_sq(v).sqrt();
    if norm == 0.0 {
        return BallPoint::origin(v.len(), c);
    }
    let s = c.sqrt() * norm;
    let scale = s.tanh() / s;
    project_to_ball(&v.iter().map(|x| x * scale).collect::<Vec<_>>(), c)
}

/// Logarithmic map at the origin: `atanh(√c‖y‖) y / (√c‖y‖)`.
pub fn log_origin(y: &BallPoint) -> Vec<f64> {
    let norm = y.norm();
    if norm == 0.0 {
        return vec![0.0; y.dim()];
    }
    let s = y.c.sqrt() * norm;
    let scale = clamped_atanh(s) / s;
    y.coords.iter().map(|x| x * scale).collect()
}

/// Exponential map at `x`: `x ⊕ tanh(√c λ_x ‖v‖/2) v/(√c‖v‖)`.
pub fn exp_at(x: &BallPoint, v: &[f64]) -> Result<BallPoint> {
    if v.len() != x.dim() {
        return Err(Error::Shape(format!(
            "tangent dim {} vs {}",
            v.len(),
            x.dim()
        )));
    }
    let norm = norm_sq(v).sqrt();
    if norm == 0.0 {
        return Ok(x.clone());
    }
    let sc = x.c.sqrt();
    let lambda = x.conformal_factor();
    let scale = (sc * lambda * norm / 2.0).tanh() / (sc * norm);
    let step = project_to_ball(&v.iter().map(|t| t * scale).collect::<Vec<_>>(), x.c);
    mobius_add(x, &step)
}

/// Logarithmic map at `x`: `(2/(√c λ_x)) atanh(√c‖u‖) u/‖u‖` with `u = -x ⊕ y`.
pub fn log_at(x: &BallPoint, y: &BallPoint) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    if x.coords == y.coords {
        return Ok(vec![0.0; x.dim()]);
    }
    let u = mobius_add(&x.neg(), y)?;
    let norm = u.norm();
    if norm == 0.0 {
        return Ok(vec![0.0; x.dim()]);
    }
    let sc = x.c.sqrt();
    let scale = 2.0 / (sc * x.conformal_factor()) * clamped_atanh(sc * norm) / norm;
    Ok(u.coords.iter().map(|t| t * scale).collect())
}

/// Möbius matrix action `W ⊗_c x = exp_o(W log_o(x))`; `W` is `[out × in]`.
pub fn mobius_matvec(w: &Array2<f64>, x: &BallPoint) -> Result<BallPoint> {
    if w.ncols() != x.dim() {
        return Err(Error::Shape(format!(
            "matrix has {} columns, point has dim {}",
            w.ncols(),
            x.dim()
        )));
    }
    let t = log_origin(x);
    let wt = w.dot(&ArrayView1::from(&t[..]));
    if wt.iter().all(|&v| v == 0.0) {
        return Ok(BallPoint::origin(w.nrows(), x.c));
    }
    Ok(exp_origin(wt.as_slice().expect("contiguous"), x.c))
}

/// Geodesic distance `(2/√c) atanh(√c‖-x ⊕ y‖)`.
pub fn hyp_distance(x: &BallPoint, y: &BallPoint) -> Result<f64> {
    check_pair(x, y)?;
    if x.coords == y.coords {
        return Ok(0.0);
    }
    let u = mobius_add(&x.neg(), y)?;
    let sc = x.c.sqrt();
    Ok(2.0 / sc * clamped_atanh(sc * u.norm()))
}
