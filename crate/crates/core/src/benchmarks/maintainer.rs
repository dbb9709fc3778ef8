//! Win-rate maintainer: the cheapest bid the model believes keeps a target
//! win rate, as exchange-side shading services tend to do.

use crate::error::{Error, Result};
use crate::winrate::{logit, FeatureVector, WinRateModel};

pub const DEFAULT_TARGET_WIN_RATE: f64 = 0.9;

/// Unclamped inverse of the win-rate curve at `target`.
pub fn winrate_inverse(model: &WinRateModel, features: &FeatureVector, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!(
            "target win rate {target} must be in (0, 1)"
        )));
    }
    let alpha = model.alpha(features)?;
    Ok(model.currency_scale() * ((logit(target) - alpha) / model.beta()).exp())
}

/// [`winrate_inverse`] clamped to `(0, value]`.
pub fn winrate_maintainer_bid(
    model: &WinRateModel,
    features: &FeatureVector,
    target: f64,
    value: f64,
) -> Result<f64> {
    let b = winrate_inverse(model, features, target)?;
    Ok(b.min(value).max(f64::MIN_POSITIVE))
}
