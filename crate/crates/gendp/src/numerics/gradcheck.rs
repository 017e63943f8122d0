//! Central-difference verification of tape gradients.

use super::tensor::{GradAccum, ParamSet};
use super::NumericsError;

/// Compares `grads` (from a backward pass) against central finite
/// differences of `f` over every coordinate of every trainable parameter,
/// returning the maximum relative error
/// `|fd − g| / max(|fd|, |g|, 1)`.
///
/// `f` must be a deterministic function of the parameter values and `h`
/// must be positive; a non-finite evaluation is an error.
pub fn finite_diff_check<F>(
    params: &mut ParamSet,
    grads: &GradAccum,
    mut f: F,
    h: f64,
) -> Result<f64, NumericsError>
where
    F: FnMut(&ParamSet) -> Result<f64, NumericsError>,
{
    if !(h > 0.0) {
        return Err(NumericsError::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let ids: Vec<_> = params
        .iter()
        .filter(|(_, e)| e.trainable())
        .map(|(id, _)| id)
        .collect();
    let mut max_rel: f64 = 0.0;
    for id in ids {
        let n = params.entry(id).numel();
        for k in 0..n {
            let orig = params.entry(id).data()[k];
            params.data_mut(id)[k] = orig + h;
            let plus = f(params)?;
            params.data_mut(id)[k] = orig - h;
            let minus = f(params)?;
            params.data_mut(id)[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NumericsError::NonFinite("finite-difference evaluation"));
            }
            let fd = (plus - minus) / (2.0 * h);
            let g = grads.get(id).map(|g| g[k]).unwrap_or(0.0);
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1.0);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
