use crate::error::{DressError, Result};
use crate::metrics::sari_ids;

/// `β SARI(X, Ŷ, Y) + (1 − β) SARI(X, Y, Ŷ)`, each rescaled to `[0, 1]`.
/// An empty output scores 0.
pub fn simplicity_reward(source: &[usize], output: &[usize], reference: &[usize], beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(DressError::InvalidArgument(format!("beta = {beta} outside [0, 1]")));
    }
    if output.is_empty() {
        return Ok(0.0);
    }
    let forward = sari_ids(source, output, &[reference])?.total / 100.0;
    let reverse = sari_ids(source, reference, &[output])?.total / 100.0;
    Ok((beta * forward + (1.0 - beta) * reverse).clamp(0.0, 1.0))
}
