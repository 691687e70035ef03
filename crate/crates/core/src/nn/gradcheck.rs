//! Central finite-difference check of an analytic gradient.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Coordinate where `max_rel_err` occurred.
    pub worst_index: usize,
    pub coordinates: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error with the denominator floored at `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradient returned by `loss_fn` at `params` against
/// `(f(θ + h e_j) - f(θ - h e_j)) / 2h` for every coordinate `j`.
///
/// `loss_fn` returns the scalar loss and its analytic gradient; only the
/// loss is used at the probe points.
pub fn grad_check<F>(loss_fn: F, params: &[f64], h: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let (loss, analytic) = loss_fn(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss at base point".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::dims(
            "analytic gradient",
            params.len(),
            analytic.len(),
        ));
    }

    let mut probe = params.to_vec();
    let mut worst = (0.0, 0);
    for j in 0..params.len() {
        probe[j] = params[j] + h;
        let up = loss_fn(&probe)?.0;
        probe[j] = params[j] - h;
        let down = loss_fn(&probe)?.0;
        probe[j] = params[j];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite(format!("loss at probe point {j}")));
        }
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[j], numeric);
        if err > worst.0 {
            worst = (err, j);
        }
    }
    Ok(GradCheckReport {
        max_rel_err: worst.0,
        worst_index: worst.1,
        coordinates: params.len(),
        tolerance,
        passed: worst.0 < tolerance,
    })
}
