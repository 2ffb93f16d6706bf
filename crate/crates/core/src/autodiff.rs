//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation as it is evaluated. Values are
//! `Array2<f64>`; scalars are `1×1` and vectors are `n×1`. Elementwise binary
//! operations broadcast along any axis of length 1. Calling
//! [`Tape::backward`] on a `1×1` node walks the record once in reverse and
//! returns the gradient of every node that influences it.
//!
//! ```
//! use jsgnn::autodiff::Tape;
//! use ndarray::arr2;
//!
//! let t = Tape::new();
//! let x = t.leaf(arr2(&[[3.0]]));
//! let y = t.mul(x, x).unwrap();
//! let g = t.backward(y).unwrap();
//! assert_eq!(g.get(x).unwrap()[[0, 0]], 6.0);
//! ```

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise scalar functions with analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryFn {
    Tanh,
    /// Caller keeps inputs inside (-1, 1).
    Atanh,
    LeakyRelu(f64),
    /// Exponential linear unit with unit slope.
    Elu,
    Exp,
    Log,
    Sqrt,
    Square,
    Softplus,
    Sigmoid,
    /// `|x|^p`.
    AbsPow(f64),
    /// `x^p` for `x ≥ 0`.
    Pow(f64),
    /// `tanh(s)/s`, equal to 1 at 0.
    TanhOverX,
    /// `atanh(s)/s`, equal to 1 at 0.
    AtanhOverX,
    Clamp(f64, f64),
}

const SERIES_CUTOFF: f64 = 1e-3;

impl UnaryFn {
    fn eval(self, x: f64) -> f64 {
        match self {
            UnaryFn::Tanh => x.tanh(),
            UnaryFn::Atanh => x.atanh(),
            UnaryFn::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            UnaryFn::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            UnaryFn::Exp => x.exp(),
            UnaryFn::Log => x.ln(),
            UnaryFn::Sqrt => x.sqrt(),
            UnaryFn::Square => x * x,
            UnaryFn::Softplus => softplus(x),
            UnaryFn::Sigmoid => sigmoid(x),
            UnaryFn::AbsPow(p) => x.abs().powf(p),
            UnaryFn::Pow(p) => x.powf(p),
            UnaryFn::TanhOverX => {
                if x.abs() < SERIES_CUTOFF {
                    let s2 = x * x;
                    1.0 - s2 / 3.0 + 2.0 * s2 * s2 / 15.0
                } else {
                    x.tanh() / x
                }
            }
            UnaryFn::AtanhOverX => {
                if x.abs() < SERIES_CUTOFF {
                    let s2 = x * x;
                    1.0 + s2 / 3.0 + s2 * s2 / 5.0
                } else {
                    x.atanh() / x
                }
            }
            UnaryFn::Clamp(lo, hi) => x.clamp(lo, hi),
        }
    }

    /// Derivative at input `x` with output `y`.
    fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryFn::Tanh => 1.0 - y * y,
            UnaryFn::Atanh => 1.0 / (1.0 - x * x),
            UnaryFn::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            UnaryFn::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            UnaryFn::Exp => y,
            UnaryFn::Log => 1.0 / x,
            UnaryFn::Sqrt => {
                if y > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
            UnaryFn::Square => 2.0 * x,
            UnaryFn::Softplus => sigmoid(x),
            UnaryFn::Sigmoid => y * (1.0 - y),
            UnaryFn::AbsPow(p) => {
                if x == 0.0 {
                    0.0
                } else {
                    p * x.abs().powf(p - 1.0) * x.signum()
                }
            }
            UnaryFn::Pow(p) => {
                if x == 0.0 {
                    0.0
                } else {
                    p * x.powf(p - 1.0)
                }
            }
            UnaryFn::TanhOverX => {
                if x.abs() < SERIES_CUTOFF {
                    let s2 = x * x;
                    -2.0 * x / 3.0 + 8.0 * x * s2 / 15.0
                } else {
                    let t = x.tanh();
                    ((1.0 - t * t) * x - t) / (x * x)
                }
            }
            UnaryFn::AtanhOverX => {
                if x.abs() < SERIES_CUTOFF {
                    let s2 = x * x;
                    2.0 * x / 3.0 + 4.0 * x * s2 / 5.0
                } else {
                    (x / (1.0 - x * x) - x.atanh()) / (x * x)
                }
            }
            UnaryFn::Clamp(lo, hi) => {
                if x < lo || x > hi {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
    Max,
    Min,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary(Binary, Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Unary(UnaryFn, Var),
    MatMul(Var, Var),
    Transpose(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    RowSum(Var),
    RowNorm(Var),
    Sum(Var),
    Mean(Var),
    GatherRows(Var, Rc<[usize]>),
    ScatterRows(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Rc<[usize]>),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    PickElems(Var, Rc<[(usize, usize)]>),
}

struct Node {
    value: Mat,
    op: Op,
}

/// Record of a computation; nodes are appended in evaluation order.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    /// `None` when the node does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient, or zeros of the given shape.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Mat {
        self.get(v).cloned().unwrap_or_else(|| Mat::zeros(shape))
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    };
    Some((dim(a.0, b.0)?, dim(a.1, b.1)?))
}

/// Sums `g` down to `shape` along broadcast axes.
fn reduce_to(g: Mat, shape: (usize, usize)) -> Mat {
    let mut g = g;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn shape(m: &Mat) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

fn accumulate(slot: &mut Option<Mat>, g: Mat) {
    match slot {
        Some(existing) => *existing += &g,
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    /// Input or parameter node.
    pub fn leaf(&self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_leaf(&self, x: f64) -> Var {
        self.leaf(Mat::from_elem((1, 1), x))
    }

    /// Copy of a node's value.
    pub fn value(&self, v: Var) -> Mat {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        shape(&self.nodes.borrow()[v.0].value)
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value[[0, 0]]
    }

    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&Mat) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    fn binary(&self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            let out = broadcast_shape(shape(x), shape(y)).ok_or_else(|| {
                Error::Shape(format!(
                    "cannot broadcast {:?} with {:?} in {kind:?}",
                    shape(x),
                    shape(y)
                ))
            })?;
            let xb = x.broadcast(out).expect("checked");
            let yb = y.broadcast(out).expect("checked");
            let mut r = Mat::zeros(out);
            Zip::from(&mut r).and(&xb).and(&yb).for_each(|r, &p, &q| {
                *r = match kind {
                    Binary::Add => p + q,
                    Binary::Sub => p - q,
                    Binary::Mul => p * q,
                    Binary::Div => p / q,
                    Binary::Max => p.max(q),
                    Binary::Min => p.min(q),
                }
            });
            r
        };
        Ok(self.push(value, Op::Binary(kind, a, b)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    /// Elementwise maximum; ties send the gradient to `a`.
    pub fn maximum(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Max, a, b)
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn minimum(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Min, a, b)
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        let value = self.nodes.borrow()[a.0].value.mapv(|x| x * s);
        self.push(value, Op::Scale(a, s))
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// `a + s` elementwise.
    pub fn offset(&self, a: Var, s: f64) -> Var {
        let value = self.nodes.borrow()[a.0].value.mapv(|x| x + s);
        self.push(value, Op::Offset(a))
    }

    pub fn unary(&self, f: UnaryFn, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.mapv(|x| f.eval(x));
        self.push(value, Op::Unary(f, a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(UnaryFn::Tanh, a)
    }

    pub fn atanh(&self, a: Var) -> Var {
        self.unary(UnaryFn::Atanh, a)
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Var {
        self.unary(UnaryFn::LeakyRelu(slope), a)
    }

    pub fn elu(&self, a: Var) -> Var {
        self.unary(UnaryFn::Elu, a)
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(UnaryFn::Exp, a)
    }

    pub fn log(&self, a: Var) -> Var {
        self.unary(UnaryFn::Log, a)
    }

    pub fn sqrt(&self, a: Var) -> Var {
        self.unary(UnaryFn::Sqrt, a)
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(UnaryFn::Square, a)
    }

    pub fn softplus(&self, a: Var) -> Var {
        self.unary(UnaryFn::Softplus, a)
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(UnaryFn::Sigmoid, a)
    }

    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(UnaryFn::Clamp(lo, hi), a)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            if x.ncols() != y.nrows() {
                return Err(Error::Shape(format!(
                    "matmul {:?} x {:?}",
                    shape(x),
                    shape(y)
                )));
            }
            x.dot(y)
        };
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.t().to_owned();
        self.push(value, Op::Transpose(a))
    }

    /// `[a | b]` column-wise.
    pub fn concat_cols(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            if x.nrows() != y.nrows() {
                return Err(Error::Shape(format!(
                    "concat {:?} with {:?}",
                    shape(x),
                    shape(y)
                )));
            }
            ndarray::concatenate(Axis(1), &[x.view(), y.view()]).expect("rows match")
        };
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            if start >= end || end > x.ncols() {
                return Err(Error::Shape(format!(
                    "column slice {start}..{end} of {:?}",
                    shape(x)
                )));
            }
            x.slice(ndarray::s![.., start..end]).to_owned()
        };
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    /// Per-row sum, `n×d → n×1`.
    pub fn row_sum(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0]
            .value
            .sum_axis(Axis(1))
            .insert_axis(Axis(1));
        self.push(value, Op::RowSum(a))
    }

    /// Per-row Euclidean norm, `n×d → n×1`. The gradient of a zero row is zero.
    pub fn row_norm(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0]
            .value
            .map_axis(Axis(1), |r| r.dot(&r).sqrt())
            .insert_axis(Axis(1));
        self.push(value, Op::RowNorm(a))
    }

    pub fn sum(&self, a: Var) -> Var {
        let s = self.nodes.borrow()[a.0].value.sum();
        self.push(Mat::from_elem((1, 1), s), Op::Sum(a))
    }

    pub fn mean(&self, a: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            x.sum() / x.len() as f64
        };
        self.push(Mat::from_elem((1, 1), value), Op::Mean(a))
    }

    /// `out[k] = a[idx[k]]`.
    pub fn gather_rows(&self, a: Var, idx: Rc<[usize]>) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            if let Some(&bad) = idx.iter().find(|&&i| i >= x.nrows()) {
                return Err(Error::Shape(format!("row {bad} of {} rows", x.nrows())));
            }
            x.select(Axis(0), &idx)
        };
        Ok(self.push(value, Op::GatherRows(a, idx)))
    }

    /// `out[idx[k]] += a[k]` into `rows` rows.
    pub fn scatter_rows(&self, a: Var, idx: Rc<[usize]>, rows: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            if idx.len() != x.nrows() || idx.iter().any(|&i| i >= rows) {
                return Err(Error::Shape(format!(
                    "scatter of {} rows with {} indices into {rows}",
                    x.nrows(),
                    idx.len()
                )));
            }
            let mut out = Mat::zeros((rows, x.ncols()));
            for (k, &i) in idx.iter().enumerate() {
                let mut row = out.row_mut(i);
                row += &x.row(k);
            }
            out
        };
        Ok(self.push(value, Op::ScatterRows(a, idx)))
    }

    /// Softmax of an `E×1` column within groups sharing the same `segment` id.
    pub fn segment_softmax(&self, a: Var, segment: Rc<[usize]>) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            if x.ncols() != 1 || x.nrows() != segment.len() {
                return Err(Error::Shape(format!(
                    "segment softmax over {:?} with {} segment ids",
                    shape(x),
                    segment.len()
                )));
            }
            let groups = segment.iter().copied().max().map_or(0, |m| m + 1);
            let mut max = vec![f64::NEG_INFINITY; groups];
            for (k, &s) in segment.iter().enumerate() {
                max[s] = max[s].max(x[[k, 0]]);
            }
            let mut denom = vec![0.0; groups];
            let mut out = Mat::zeros((x.nrows(), 1));
            for (k, &s) in segment.iter().enumerate() {
                let e = (x[[k, 0]] - max[s]).exp();
                out[[k, 0]] = e;
                denom[s] += e;
            }
            for (k, &s) in segment.iter().enumerate() {
                out[[k, 0]] /= denom[s];
            }
            out
        };
        Ok(self.push(value, Op::SegmentSoftmax(a, segment)))
    }

    pub fn softmax_rows(&self, a: Var) -> Var {
        let mut value = self.nodes.borrow()[a.0].value.clone();
        for mut row in value.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&self, a: Var) -> Var {
        let mut value = self.nodes.borrow()[a.0].value.clone();
        for mut row in value.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        self.push(value, Op::LogSoftmaxRows(a))
    }

    /// Column vector of the selected `(row, col)` entries.
    pub fn pick(&self, a: Var, idx: Rc<[(usize, usize)]>) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut out = Mat::zeros((idx.len(), 1));
            for (k, &(r, c)) in idx.iter().enumerate() {
                out[[k, 0]] = *x
                    .get((r, c))
                    .ok_or_else(|| Error::Shape(format!("entry ({r}, {c}) of {:?}", shape(x))))?;
            }
            out
        };
        Ok(self.push(value, Op::PickElems(a, idx)))
    }

    /// Gradients of the `1×1` node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if shape(&nodes[loss.0].value) != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                shape(&nodes[loss.0].value)
            )));
        }
        let mut grads: Vec<Option<Mat>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Mat::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {}
                Op::Binary(kind, a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    let out = shape(&g);
                    let xb = x.broadcast(out).expect("forward checked");
                    let yb = y.broadcast(out).expect("forward checked");
                    let (ga, gb) = match kind {
                        Binary::Add => (g.clone(), g.clone()),
                        Binary::Sub => (g.clone(), -&g),
                        Binary::Mul => (&g * &yb, &g * &xb),
                        Binary::Div => {
                            let ga = &g / &yb;
                            let mut gb = Mat::zeros(out);
                            Zip::from(&mut gb)
                                .and(&g)
                                .and(&xb)
                                .and(&yb)
                                .for_each(|r, &g, &p, &q| *r = -g * p / (q * q));
                            (ga, gb)
                        }
                        Binary::Max | Binary::Min => {
                            let mut ga = Mat::zeros(out);
                            let mut gb = Mat::zeros(out);
                            let pick_a = |p: f64, q: f64| match kind {
                                Binary::Max => p >= q,
                                _ => p <= q,
                            };
                            Zip::from(&mut ga)
                                .and(&mut gb)
                                .and(&g)
                                .and(&xb)
                                .and(&yb)
                                .for_each(|ra, rb, &g, &p, &q| {
                                    if pick_a(p, q) {
                                        *ra = g;
                                    } else {
                                        *rb = g;
                                    }
                                });
                            (ga, gb)
                        }
                    };
                    accumulate(&mut grads[a.0], reduce_to(ga, shape(x)));
                    accumulate(&mut grads[b.0], reduce_to(gb, shape(y)));
                }
                Op::Scale(a, s) => accumulate(&mut grads[a.0], g.mapv(|x| x * s)),
                Op::Offset(a) => accumulate(&mut grads[a.0], g.clone()),
                Op::Unary(f, a) => {
                    let x = val(*a);
                    let mut ga = Mat::zeros(shape(x));
                    Zip::from(&mut ga)
                        .and(&g)
                        .and(x)
                        .and(&node.value)
                        .for_each(|r, &g, &x, &y| *r = g * f.deriv(x, y));
                    accumulate(&mut grads[a.0], ga);
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    accumulate(&mut grads[a.0], g.dot(&y.t()));
                    accumulate(&mut grads[b.0], x.t().dot(&g));
                }
                Op::Transpose(a) => accumulate(&mut grads[a.0], g.t().to_owned()),
                Op::ConcatCols(a, b) => {
                    let k = val(*a).ncols();
                    accumulate(&mut grads[a.0], g.slice(ndarray::s![.., ..k]).to_owned());
                    accumulate(&mut grads[b.0], g.slice(ndarray::s![.., k..]).to_owned());
                }
                Op::SliceCols(a, start) => {
                    let x = val(*a);
                    let mut ga = Mat::zeros(shape(x));
                    ga.slice_mut(ndarray::s![.., *start..*start + g.ncols()])
                        .assign(&g);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::RowSum(a) => {
                    let x = val(*a);
                    let ga = g.broadcast(shape(x)).expect("n×1").to_owned();
                    accumulate(&mut grads[a.0], ga);
                }
                Op::RowNorm(a) => {
                    let x = val(*a);
                    let mut ga = Mat::zeros(shape(x));
                    for r in 0..x.nrows() {
                        let norm = node.value[[r, 0]];
                        if norm > 0.0 {
                            let f = g[[r, 0]] / norm;
                            for c in 0..x.ncols() {
                                ga[[r, c]] = f * x[[r, c]];
                            }
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Sum(a) => {
                    let x = val(*a);
                    accumulate(&mut grads[a.0], Mat::from_elem(shape(x), g[[0, 0]]));
                }
                Op::Mean(a) => {
                    let x = val(*a);
                    let s = g[[0, 0]] / x.len() as f64;
                    accumulate(&mut grads[a.0], Mat::from_elem(shape(x), s));
                }
                Op::GatherRows(a, idx) => {
                    let x = val(*a);
                    let mut ga = Mat::zeros(shape(x));
                    for (k, &i) in idx.iter().enumerate() {
                        let mut row = ga.row_mut(i);
                        row += &g.row(k);
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::ScatterRows(a, idx) => {
                    accumulate(&mut grads[a.0], g.select(Axis(0), idx));
                }
                Op::SegmentSoftmax(a, segment) => {
                    let y = &node.value;
                    let groups = segment.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; groups];
                    for (k, &s) in segment.iter().enumerate() {
                        dot[s] += g[[k, 0]] * y[[k, 0]];
                    }
                    let mut ga = Mat::zeros(shape(y));
                    for (k, &s) in segment.iter().enumerate() {
                        ga[[k, 0]] = y[[k, 0]] * (g[[k, 0]] - dot[s]);
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let dot = (&g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = y * &(&g - &dot);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let soft = node.value.mapv(f64::exp);
                    let gsum = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = &g - &(&soft * &gsum);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::PickElems(a, idx) => {
                    let x = val(*a);
                    let mut ga = Mat::zeros(shape(x));
                    for (k, &(r, c)) in idx.iter().enumerate() {
                        ga[[r, c]] += g[[k, 0]];
                    }
                    accumulate(&mut grads[a.0], ga);
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}
