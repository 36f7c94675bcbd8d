//! Central finite-difference gradient checking.

use super::{ParamStore, Tape, Var};
use crate::error::Result;

/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Entry with the largest error: (flat index, analytic, numeric).
    pub worst: (usize, f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn param(&self, name: &str) -> Option<&ParamCheck> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Compares the tape gradient of `loss_fn` against central differences with
/// step `h` for every entry of every parameter in `params`.
///
/// `loss_fn` must build a scalar loss on the given tape from the given store
/// and must be deterministic.
pub fn grad_check<F>(params: &ParamStore, h: f64, loss_fn: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(params, &mut tape)?;
    let analytic = tape.backward(loss)?.param_grads(&tape, params);

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(store, &mut tape)?;
        Ok(tape.value(loss).item())
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        params: Vec::with_capacity(params.len()),
    };
    for (id, name, value) in params.iter() {
        let mut check = ParamCheck {
            name: name.to_string(),
            max_rel_error: 0.0,
            worst: (0, 0.0, 0.0),
        };
        for i in 0..value.len() {
            let orig = value.data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[id.index()].data()[i];
            let err = relative_error(a, numeric);
            if i == 0 || err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst = (i, a, numeric);
            }
        }
        report.max_rel_error = report.max_rel_error.max(check.max_rel_error);
        report.params.push(check);
    }
    Ok(report)
}
