//! Central finite-difference verification of tape gradients.

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Agreement between analytic and numeric gradients for one parameter.
///
/// `max_rel_error` is `max_i |analytic_i - numeric_i|` divided by the larger
/// of the two gradients' max-norms, so entries that are tiny relative to the
/// rest of the tensor do not dominate through rounding noise. The divisor is
/// floored at [`SCALE_FLOOR`] times the largest gradient of any parameter, so
/// a parameter the objective is (nearly) invariant to is judged on absolute
/// rather than relative error.
pub const SCALE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub index: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub worst_element: usize,
    pub gradient_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub step: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error < self.tol)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().fold(0.0, |m, p| m.max(p.max_rel_error))
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.max_rel_error >= self.tol)
    }
}

/// Evaluate `f` on fresh tapes and return central-difference gradients for
/// every parameter.
pub fn central_difference<F>(f: &F, params: &[Tensor], step: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.constant(p.clone())).collect();
        let out = f(&tape, &vars)?;
        let v = tape.item(out)?;
        if !v.is_finite() {
            return Err(Error::Numerical(format!("objective evaluated to {v}")));
        }
        Ok(v)
    };
    eval(params)?;

    let mut work = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Tensor::zeros(params[p].shape());
        for i in 0..params[p].len() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + step;
            let plus = eval(&work)?;
            work[p].data_mut()[i] = orig - step;
            let minus = eval(&work)?;
            work[p].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Compare tape gradients of the scalar built by `f` against central
/// differences with step `step`; a parameter passes when its relative error
/// is below `tol`.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    finite_diff_check_on(Tape::new(), f, params, step, tol)
}

/// As [`finite_diff_check`], with the analytic pass recorded on `tape`.
pub fn finite_diff_check_on<F>(
    tape: Tape,
    f: F,
    params: &[Tensor],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Argument(format!("finite-difference step {step}")));
    }
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars)?;
    let value = tape.item(out)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("objective evaluated to {value}")));
    }
    let grads = tape.backward(out)?;
    let numeric = central_difference(&f, params, step)?;

    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(&numeric)
        .map(|(v, num)| grads.get_or_zeros(*v, num.shape()))
        .collect();
    let global = analytic
        .iter()
        .chain(&numeric)
        .fold(0.0f64, |m, t| m.max(t.max_abs()));
    let checks = analytic
        .iter()
        .zip(&numeric)
        .enumerate()
        .map(|(index, (ana, num))| {
            let scale = ana.max_abs().max(num.max_abs());
            let (worst_element, max_abs_error) = ana
                .data()
                .iter()
                .zip(num.data())
                .map(|(a, n)| (a - n).abs())
                .enumerate()
                .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
            let denom = scale.max(SCALE_FLOOR * global);
            let max_rel_error = if denom > 0.0 {
                max_abs_error / denom
            } else {
                0.0
            };
            ParamCheck {
                index,
                max_abs_error,
                max_rel_error,
                worst_element,
                gradient_scale: scale,
            }
        })
        .collect();
    Ok(GradCheckReport {
        params: checks,
        step,
        tol,
    })
}
