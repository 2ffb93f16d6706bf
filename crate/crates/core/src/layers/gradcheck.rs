use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

use super::{BoundParams, ParamStore};

/// Largest disagreement between tape and finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter and flat index of the worst entry.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the tape gradient of `loss` against central differences with
/// step `h` over every scalar of `params`.
///
/// The relative error of an entry is `|a − n| / max(|a|, |n|, floor)`.
pub fn finite_diff_check<F>(params: &ParamStore, h: f64, floor: f64, loss: F) -> Result<GradCheck>
where
    F: Fn(&Tape, &BoundParams) -> Result<Var>,
{
    if !(h > 0.0) || !(floor > 0.0) {
        return Err(Error::Config("step and floor must be positive".into()));
    }
    let eval = |p: &ParamStore| -> Result<f64> {
        let t = Tape::new();
        let v = loss(&t, &p.bind(&t))?;
        Ok(t.scalar(v))
    };
    let t = Tape::new();
    let bound = params.bind(&t);
    let grads = t.backward(loss(&t, &bound)?)?;

    let mut probe = params.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (name, value) in params.iter() {
        let var = bound.get(name)?;
        let analytic = grads.get_or_zeros(var, value.dim());
        for (i, (&x, &a)) in value.iter().zip(analytic.iter()).enumerate() {
            let set = |p: &mut ParamStore, v: f64| {
                *p.get_mut(name)
                    .expect("probe mirrors params")
                    .iter_mut()
                    .nth(i)
                    .expect("index") = v
            };
            set(&mut probe, x + h);
            let up = eval(&probe)?;
            set(&mut probe, x - h);
            let down = eval(&probe)?;
            set(&mut probe, x);
            let n = (up - down) / (2.0 * h);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            out.checked += 1;
            if rel > out.max_rel_error || !rel.is_finite() {
                out.max_rel_error = rel;
                out.worst = (name.to_string(), i);
                out.analytic = a;
                out.numeric = n;
            }
        }
    }
    Ok(out)
}
