//! Shading factor predicted by logistic regression on request features and
//! applied as a multiplier on the unshaded bid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::landscape::FeedbackRecord;
use crate::winrate::{logistic, FeatureVector, LogisticObjective};

/// Lower clamp on training targets so `mbtw = 0` stays inside the logit's
/// domain.
const MIN_TARGET: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorLrConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub tolerance: f64,
}

impl Default for FactorLrConfig {
    fn default() -> Self {
        FactorLrConfig {
            learning_rate: 2.0,
            epochs: 3000,
            l2_penalty: 0.0,
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadingFactorModel {
    pub w0: f64,
    pub weights: Vec<f64>,
}

impl ShadingFactorModel {
    /// Fit on records carrying `min_bid_to_win`, with the record's value as
    /// the unshaded bid. Target: `mbtw / value` clamped into `(0, 1]`.
    pub fn train(records: &[FeedbackRecord], config: &FactorLrConfig, exec: Exec) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::DegenerateData("no records to fit".into()));
        }
        if !(config.learning_rate > 0.0) || config.epochs < 1 {
            return Err(Error::config(
                "factor-lr",
                "learning_rate > 0 and epochs >= 1 required",
            ));
        }
        let dim = records[0].features.dim();
        let mut targets = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let mbtw = r.min_bid_to_win.ok_or_else(|| {
                Error::DegenerateData(format!("record {i} has no min_bid_to_win"))
            })?;
            if !(r.value > 0.0) || r.features.dim() != dim {
                return Err(Error::Domain(format!("record {i}: bad value or dimension")));
            }
            targets.push((mbtw / r.value).clamp(MIN_TARGET, 1.0));
        }
        let objective = LogisticObjective::new(
            records.iter().map(|r| r.features.clone()).collect(),
            None,
            targets,
            vec![1.0; records.len()],
            dim,
            config.l2_penalty,
        );
        let mut theta = vec![0.0; objective.n_params()];
        objective.descend(
            &mut theta,
            config.learning_rate,
            config.epochs,
            config.tolerance,
            exec,
        );
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::ModelRejected("factor-lr weights diverged".into()));
        }
        Ok(ShadingFactorModel {
            w0: theta[0],
            weights: theta[1..].to_vec(),
        })
    }

    /// Predicted factor in `(0, 1)`.
    pub fn factor(&self, features: &FeatureVector) -> f64 {
        logistic(self.w0 + features.dot(&self.weights))
    }

    pub fn apply(&self, features: &FeatureVector, unshaded_bid: f64) -> f64 {
        self.factor(features) * unshaded_bid
    }
}
