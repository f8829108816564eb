use super::tape::{Parameter, Tape, Var};
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Analytic and central-difference derivative of one parameter coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl CoordinateCheck {
    /// `|g_ad − g_fd| / max(1e−8, |g_ad| + |g_fd|)`.
    pub fn relative_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / (self.analytic.abs() + self.numeric.abs()).max(1e-8)
    }

    pub fn absolute_error(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }
}

/// Compares tape gradients of the scalar computed by `f` against central
/// differences and returns the largest relative error over coordinates.
///
/// `f` receives a fresh tape and the parameters bound on it (same order as
/// `params`) and must return a 1×1 value. Parameter values are restored
/// before returning; their `grad` fields are overwritten with the analytic
/// gradient.
pub fn grad_check<F>(params: &mut [Parameter], f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    Ok(compare_gradients(params, f)?
        .iter()
        .map(CoordinateCheck::relative_error)
        .fold(0.0, f64::max))
}

/// Per-coordinate form of [`grad_check`].
pub fn compare_gradients<F>(params: &mut [Parameter], f: F) -> Result<Vec<CoordinateCheck>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |params: &[Parameter]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = tape.bind(params);
        let out = f(&mut tape, &vars)?;
        let v = tape.scalar(out);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("objective value {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars = tape.bind(params);
    let out = f(&mut tape, &vars)?;
    if !tape.scalar(out).is_finite() {
        return Err(Error::NonFinite("objective value".into()));
    }
    let grads = tape.backward(out)?;
    for p in params.iter_mut() {
        p.zero_grad();
    }
    Tape::accumulate_param_grads(&grads, &vars, params);

    let mut checks = Vec::new();
    for pi in 0..params.len() {
        for k in 0..params[pi].len() {
            let original = params[pi].value.data()[k];
            params[pi].value.data_mut()[k] = original + FD_STEP;
            let plus = eval(params);
            params[pi].value.data_mut()[k] = original - FD_STEP;
            let minus = eval(params);
            params[pi].value.data_mut()[k] = original;
            let numeric = (plus? - minus?) / (2.0 * FD_STEP);
            let analytic = params[pi].grad.data()[k];
            if !analytic.is_finite() {
                return Err(Error::NonFinite(format!(
                    "analytic gradient of {}[{k}]",
                    params[pi].name
                )));
            }
            checks.push(CoordinateCheck {
                param: params[pi].name.clone(),
                index: k,
                analytic,
                numeric,
            });
        }
    }
    Ok(checks)
}
