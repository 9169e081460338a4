//! Central finite-difference verification of analytic gradients.

use super::FusionError;

/// Denominator floor so that vanishing gradients are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckResult {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares the analytic gradient returned by `loss` against central
/// differences over every parameter and returns the worst relative error.
pub fn gradient_check<F>(loss: F, params: &[f64], step: f64) -> Result<f64, FusionError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let all: Vec<usize> = (0..params.len()).collect();
    gradient_check_at(loss, params, step, &all).map(|r| r.max_rel_error)
}

/// Like [`gradient_check`] but only perturbs the listed coordinates.
pub fn gradient_check_at<F>(mut loss: F, params: &[f64], step: f64, indices: &[usize]) -> Result<GradCheckResult, FusionError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if !(1e-7..=1e-3).contains(&step) {
        return Err(FusionError::Invalid(format!("finite-difference step {step} outside [1e-7, 1e-3]")));
    }
    let (f0, analytic) = loss(params);
    if !f0.is_finite() {
        return Err(FusionError::NonFiniteLoss);
    }
    if analytic.len() != params.len() {
        return Err(FusionError::Shape(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut p = params.to_vec();
    let mut result = GradCheckResult {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for &i in indices {
        let orig = p[i];
        p[i] = orig + step;
        let (fp, _) = loss(&p);
        p[i] = orig - step;
        let (fm, _) = loss(&p);
        p[i] = orig;
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(FusionError::NonFiniteLoss);
        }
        let numeric = (fp - fm) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > result.max_rel_error {
            result.max_rel_error = err;
            result.worst_index = i;
        }
        result.checked += 1;
    }
    Ok(result)
}
