use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::landscape::FeedbackRecord;

use super::{LogisticObjective, WinRateModel};

const WEIGHT_BUCKETS: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationWeighting {
    #[default]
    None,
    /// Inverse empirical density of the record's log-bid bucket, normalised
    /// to mean 1. Evens out the crowding of cheap losing bids.
    BidLikelihood,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub observation_weighting: ObservationWeighting,
    pub seed: u64,
    /// Early stop once every gradient component is below this.
    pub tolerance: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1.0,
            epochs: 3000,
            l2_penalty: 0.0,
            observation_weighting: ObservationWeighting::None,
            seed: 0,
            tolerance: 1e-7,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.epochs < 1 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::config("l2_penalty", "must be nonnegative"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("tolerance", "must be nonnegative"));
        }
        Ok(())
    }
}

/// A trained model plus the diagnostics of the run.
#[derive(Clone, Debug)]
pub struct WinRateFit {
    pub model: WinRateModel,
    pub final_loss: f64,
    pub epochs_run: usize,
}

pub fn train(records: &[FeedbackRecord], config: &TrainingConfig) -> Result<WinRateFit> {
    train_with(records, config, Exec::default())
}

pub fn train_with(
    records: &[FeedbackRecord],
    config: &TrainingConfig,
    exec: Exec,
) -> Result<WinRateFit> {
    config.validate()?;
    let dim = check_records(records)?;

    let scale = median(records.iter().map(|r| r.bid).collect());
    let log_bids: Vec<f64> = records.iter().map(|r| (r.bid / scale).ln()).collect();
    let weights = match config.observation_weighting {
        ObservationWeighting::None => vec![1.0; records.len()],
        ObservationWeighting::BidLikelihood => inverse_density_weights(&log_bids),
    };
    let objective = build_objective(records, log_bids, weights, dim, config.l2_penalty);

    let mut theta = initial_params(objective.n_params(), config.seed);
    let epochs_run = objective.descend(
        &mut theta,
        config.learning_rate,
        config.epochs,
        config.tolerance,
        exec,
    );
    let final_loss = objective.loss(&theta, exec);

    let model = WinRateModel::new(theta[0], theta[2..].to_vec(), theta[1], scale)?;
    Ok(WinRateFit {
        model,
        final_loss,
        epochs_run,
    })
}

/// The objective `train` minimises, exposed for gradient checks.
pub(crate) fn build_objective(
    records: &[FeedbackRecord],
    log_bids: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
    l2: f64,
) -> LogisticObjective {
    LogisticObjective::new(
        records.iter().map(|r| r.features.clone()).collect(),
        Some(log_bids),
        records
            .iter()
            .map(|r| if r.won { 1.0 } else { 0.0 })
            .collect(),
        weights,
        dim,
        l2,
    )
}

impl LogisticObjective {
    /// Win-rate objective over feedback records with bids in raw units
    /// (log taken without currency normalisation).
    pub fn for_feedback(records: &[FeedbackRecord], l2: f64) -> Result<Self> {
        let dim = check_records(records)?;
        let log_bids = records.iter().map(|r| r.bid.ln()).collect();
        Ok(build_objective(
            records,
            log_bids,
            vec![1.0; records.len()],
            dim,
            l2,
        ))
    }
}

fn check_records(records: &[FeedbackRecord]) -> Result<usize> {
    let first = records
        .first()
        .ok_or_else(|| Error::DegenerateData("no training records".into()))?;
    let dim = first.features.dim();
    let (mut wins, mut losses) = (0usize, 0usize);
    for (i, r) in records.iter().enumerate() {
        if !(r.bid > 0.0 && r.bid.is_finite()) {
            return Err(Error::Domain(format!(
                "record {i}: bid {} must be positive",
                r.bid
            )));
        }
        if r.features.dim() != dim {
            return Err(Error::Domain(format!(
                "record {i}: feature dimension {} differs from {dim}",
                r.features.dim()
            )));
        }
        if r.won {
            wins += 1;
        } else {
            losses += 1;
        }
    }
    if wins == 0 || losses == 0 {
        return Err(Error::DegenerateData(format!(
            "need both wins and losses, got {wins} wins and {losses} losses"
        )));
    }
    Ok(dim)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn inverse_density_weights(log_bids: &[f64]) -> Vec<f64> {
    let lo = log_bids.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = log_bids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / WEIGHT_BUCKETS as f64;
    let bucket = |x: f64| {
        if width > 0.0 {
            (((x - lo) / width) as usize).min(WEIGHT_BUCKETS - 1)
        } else {
            0
        }
    };
    let mut counts = [0usize; WEIGHT_BUCKETS];
    for &x in log_bids {
        counts[bucket(x)] += 1;
    }
    let occupied = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = log_bids.len() as f64;
    log_bids
        .iter()
        .map(|&x| n / (occupied * counts[bucket(x)] as f64))
        .collect()
}

/// Small seeded jitter around zero, with β starting at 1 so a bid column
/// without spread still yields an increasing model.
fn initial_params(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.01).expect("valid normal");
    let mut theta: Vec<f64> = (0..n).map(|_| jitter.sample(&mut rng)).collect();
    theta[1] += 1.0;
    theta
}
