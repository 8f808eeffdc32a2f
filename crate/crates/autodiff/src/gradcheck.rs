//! Central finite-difference check of tape gradients.

use crate::error::AutodiffError;
use crate::params::ParameterSet;
use crate::tape::{Tape, Var};

/// Worst entry found by [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: Option<String>,
    pub worst_entry: usize,
    pub entries_checked: usize,
}

/// Gradients smaller than this are compared on an absolute scale. A
/// parameter with an exactly zero gradient still sees one-ulp changes in
/// the loss under central differences.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|analytic - numeric| / max(|analytic|, |numeric|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares reverse-mode gradients of `loss_fn` with central differences
/// over every entry of every trainable parameter.
///
/// `loss_fn` receives a fresh tape and one leaf per parameter (in parameter
/// order) and must return a scalar node.
pub fn grad_check<F, E>(params: &ParameterSet, epsilon: f64, mut loss_fn: F) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<AutodiffError>,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(AutodiffError::BadEpsilon(epsilon).into());
    }
    fn eval<F, E>(loss_fn: &mut F, p: &ParameterSet) -> Result<f64, E>
    where
        F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    {
        let mut tape = Tape::new();
        let vars = tape.params(p);
        let root = loss_fn(&mut tape, &vars)?;
        Ok(tape.value(root).data()[0])
    }

    let first = eval(&mut loss_fn, params)?;
    let second = eval(&mut loss_fn, params)?;
    if first.to_bits() != second.to_bits() {
        return Err(AutodiffError::NonDeterministic { first, second }.into());
    }

    let analytic = {
        let mut tape = Tape::new();
        let vars = tape.params(params);
        let root = loss_fn(&mut tape, &vars)?;
        tape.backward(root)?.for_params(params)
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: None,
        worst_entry: 0,
        entries_checked: 0,
    };
    let mut probe = params.clone();
    for id in params.ids() {
        if !params.get(id).trainable {
            continue;
        }
        for k in 0..params.tensor(id).len() {
            let orig = params.tensor(id).data()[k];
            probe.tensor_mut(id).data_mut()[k] = orig + epsilon;
            let plus = eval(&mut loss_fn, &probe)?;
            probe.tensor_mut(id).data_mut()[k] = orig - epsilon;
            let minus = eval(&mut loss_fn, &probe)?;
            probe.tensor_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(analytic[id.index()].data()[k], numeric);
            report.entries_checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_param = Some(params.get(id).name.clone());
                report.worst_entry = k;
            }
        }
    }
    Ok(report)
}
