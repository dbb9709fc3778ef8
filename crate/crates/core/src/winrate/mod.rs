//! Logistic win-rate model over request features and log bid:
//! `Pr(win) = logistic(w0 + Σ wᵢxᵢ + β·log b)`.

mod features;
mod objective;
mod train;

pub use features::{Attribute, EncodeStats, FeatureVector, Vocabulary};
pub use objective::LogisticObjective;
pub use train::{train, train_with, ObservationWeighting, TrainingConfig, WinRateFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Trained win-rate weights.
///
/// Bids are divided by `currency_scale` before the log transform, so `w0`
/// and `alpha` live in scaled units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct WinRateModel {
    w0: f64,
    weights: Vec<f64>,
    beta: f64,
    currency_scale: f64,
}

#[derive(Deserialize)]
struct RawModel {
    w0: f64,
    weights: Vec<f64>,
    beta: f64,
    currency_scale: f64,
}

impl TryFrom<RawModel> for WinRateModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        WinRateModel::new(raw.w0, raw.weights, raw.beta, raw.currency_scale)
    }
}

impl WinRateModel {
    pub fn new(w0: f64, weights: Vec<f64>, beta: f64, currency_scale: f64) -> Result<Self> {
        if !w0.is_finite() || weights.iter().any(|w| !w.is_finite()) || !beta.is_finite() {
            return Err(Error::ModelRejected("non-finite weight".into()));
        }
        if beta <= 0.0 {
            return Err(Error::ModelRejected(format!(
                "bid coefficient beta = {beta} is not positive"
            )));
        }
        if !(currency_scale > 0.0 && currency_scale.is_finite()) {
            return Err(Error::ModelRejected(format!(
                "currency scale {currency_scale} must be positive"
            )));
        }
        Ok(WinRateModel {
            w0,
            weights,
            beta,
            currency_scale,
        })
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn currency_scale(&self) -> f64 {
        self.currency_scale
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `w0 + Σ wᵢxᵢ`.
    pub fn alpha(&self, features: &FeatureVector) -> Result<f64> {
        if features.dim() != self.weights.len() {
            return Err(Error::Domain(format!(
                "feature dimension {} does not match model dimension {}",
                features.dim(),
                self.weights.len()
            )));
        }
        Ok(self.w0 + features.dot(&self.weights))
    }

    pub fn predict_win_rate(&self, features: &FeatureVector, bid: f64) -> Result<f64> {
        if !(bid > 0.0) {
            return Err(Error::Domain(format!("bid {bid} must be positive")));
        }
        let alpha = self.alpha(features)?;
        Ok(logistic(
            alpha + self.beta * (bid / self.currency_scale).ln(),
        ))
    }
}
