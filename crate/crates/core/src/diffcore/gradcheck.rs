//! Central-difference gradient checking.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Denominator floor for relative errors, so gradients that are zero on
/// both sides compare as equal instead of dividing by zero.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub entries: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn param(&self, name: &str) -> Option<&ParamCheck> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Largest relative error over parameters whose name satisfies `pred`.
    pub fn max_rel_error_where(&self, pred: impl Fn(&str) -> bool) -> f64 {
        self.params.iter().filter(|p| pred(&p.name)).map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn evaluate<F>(f: &F, store: &ParamStore) -> Result<f64>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::no_grad();
    let out = f(store, &mut tape)?;
    let v = tape.value(out).item()?;
    if !v.is_finite() {
        return Err(Error::Evaluation(format!("function value {v} is not finite")));
    }
    Ok(v)
}

/// Compares tape gradients of the scalar built by `f` against central
/// differences for every entry of every parameter in `store`.
///
/// `f` must be deterministic: any noise it uses has to be fixed up front.
pub fn grad_check<F>(store: &ParamStore, step: f64, tolerance: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::Config(format!("grad_check step must be positive, got {step}")));
    }
    let mut tape = Tape::new();
    let out = f(store, &mut tape)?;
    let base = tape.value(out).item()?;
    if !base.is_finite() {
        return Err(Error::Evaluation(format!("function value {base} is not finite")));
    }
    let analytic = tape.backward(out, store)?;
    drop(tape);

    let mut probe = store.clone();
    let mut params = Vec::with_capacity(store.len());
    for (id, name, value) in store.iter() {
        let grad = analytic.get(id);
        let mut worst: f64 = 0.0;
        for i in 0..value.len() {
            let orig = value.data()[i];
            probe.get_mut(id).data_mut()[i] = orig + step;
            let plus = evaluate(&f, &probe)?;
            probe.get_mut(id).data_mut()[i] = orig - step;
            let minus = evaluate(&f, &probe)?;
            probe.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
        params.push(ParamCheck {
            name: name.to_string(),
            max_rel_error: worst,
            max_abs_analytic: grad.data().iter().fold(0.0, |m: f64, v| m.max(v.abs())),
            entries: value.len(),
        });
    }
    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { params, tolerance, max_rel_error, passed: max_rel_error <= tolerance })
}
