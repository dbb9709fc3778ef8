//! Registry of bidding policies: training dispatch, inference and the
//! versioned model document.

use serde::{Deserialize, Serialize};

use crate::benchmarks::{
    fit_censored_distribution, log_spaced_edges, winrate_maintainer_bid, BucketedPriceDistribution,
    FactorLrConfig, PointEstimatorModel, SegmentConfig, SegmentShader, ShadingFactorModel,
    DEFAULT_BUCKETS, DEFAULT_TARGET_WIN_RATE,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::landscape::{BidPolicy, FeedbackRecord, LandscapeSpec, Request, SimRng};
use crate::shading::{shade, ShadeConfig};
use crate::winrate::{train_with, TrainingConfig, Vocabulary, WinRateModel};

pub const POLICY_NAMES: [&str; 8] = [
    "wr",
    "mpp",
    "factor-lr",
    "segment-nl",
    "wr-maintainer",
    "point-est",
    "fixed",
    "oracle",
];

pub const POLICY_FORMAT: &str = "bidshade-policy";
pub const POLICY_VERSION: u32 = 1;

/// Hyperparameters for every policy; each policy reads only its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    pub training: TrainingConfig,
    pub shade: ShadeConfig,
    pub buckets: usize,
    pub factor_lr: FactorLrConfig,
    pub segment: SegmentConfig,
    pub target_win_rate: f64,
    pub asymmetry: f64,
    pub factor: f64,
    pub oracle_grid: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            training: TrainingConfig::default(),
            shade: ShadeConfig::default(),
            buckets: DEFAULT_BUCKETS,
            factor_lr: FactorLrConfig::default(),
            segment: SegmentConfig::default(),
            target_win_rate: DEFAULT_TARGET_WIN_RATE,
            asymmetry: 0.1,
            factor: 0.9,
            oracle_grid: 2000,
        }
    }
}

/// A fitted policy, ready to bid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum TrainedPolicy {
    Wr {
        model: WinRateModel,
        shade: ShadeConfig,
    },
    Mpp {
        distribution: BucketedPriceDistribution,
    },
    FactorLr {
        model: ShadingFactorModel,
    },
    SegmentNl {
        shader: SegmentShader,
    },
    WrMaintainer {
        model: WinRateModel,
        target: f64,
    },
    PointEst {
        model: PointEstimatorModel,
    },
    Fixed {
        factor: f64,
    },
    Oracle {
        landscape: LandscapeSpec,
        grid_n: usize,
    },
}

/// One bid with whatever the policy can say about it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub bid: f64,
    pub expected_win_rate: Option<f64>,
    pub expected_surplus: Option<f64>,
    pub iterations: Option<usize>,
}

impl Decision {
    fn bare(bid: f64) -> Self {
        Decision {
            bid,
            expected_win_rate: None,
            expected_surplus: None,
            iterations: None,
        }
    }
}

/// Everything `train_policy` may need besides the feedback.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainingContext<'a> {
    pub vocabulary: Option<&'a Vocabulary>,
    pub landscape: Option<&'a LandscapeSpec>,
    pub exec: Exec,
}

/// Training diagnostics, filled in by the policies that iterate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub final_loss: Option<f64>,
    pub epochs_run: Option<usize>,
}

pub fn train_policy(
    name: &str,
    records: &[FeedbackRecord],
    params: &PolicyParams,
    ctx: TrainingContext<'_>,
) -> Result<TrainedPolicy> {
    train_policy_diagnosed(name, records, params, ctx).map(|(p, _)| p)
}

pub fn train_policy_diagnosed(
    name: &str,
    records: &[FeedbackRecord],
    params: &PolicyParams,
    ctx: TrainingContext<'_>,
) -> Result<(TrainedPolicy, Diagnostics)> {
    let mut diagnostics = Diagnostics::default();
    let mut note = |fit: &crate::winrate::WinRateFit| {
        diagnostics.final_loss = Some(fit.final_loss);
        diagnostics.epochs_run = Some(fit.epochs_run);
    };
    let policy = match name {
        "wr" => {
            params.shade.validate()?;
            let fit = train_with(records, &params.training, ctx.exec)?;
            note(&fit);
            TrainedPolicy::Wr {
                model: fit.model,
                shade: params.shade,
            }
        }
        "mpp" => {
            if records.is_empty() {
                return Err(Error::DegenerateData("no records to fit".into()));
            }
            let lo = records.iter().map(|r| r.bid).fold(f64::INFINITY, f64::min);
            let hi = records
                .iter()
                .map(|r| r.bid)
                .fold(f64::NEG_INFINITY, f64::max);
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::DegenerateData("bids need positive spread".into()));
            }
            let edges = log_spaced_edges(lo, hi, params.buckets)?;
            TrainedPolicy::Mpp {
                distribution: fit_censored_distribution(records, &edges)?,
            }
        }
        "factor-lr" => TrainedPolicy::FactorLr {
            model: ShadingFactorModel::train(records, &params.factor_lr, ctx.exec)?,
        },
        "segment-nl" => {
            let vocab = ctx.vocabulary.ok_or_else(|| {
                Error::config("vocabulary", "segment-nl needs the feedback vocabulary")
            })?;
            TrainedPolicy::SegmentNl {
                shader: SegmentShader::train(vocab.clone(), params.segment.clone(), records)?,
            }
        }
        "wr-maintainer" => {
            if !(params.target_win_rate > 0.0 && params.target_win_rate < 1.0) {
                return Err(Error::config("target_win_rate", "must be in (0, 1)"));
            }
            let fit = train_with(records, &params.training, ctx.exec)?;
            note(&fit);
            TrainedPolicy::WrMaintainer {
                model: fit.model,
                target: params.target_win_rate,
            }
        }
        "point-est" => TrainedPolicy::PointEst {
            model: PointEstimatorModel::train(records, params.asymmetry)?,
        },
        "fixed" => {
            crate::benchmarks::fixed_factor_bid(params.factor, 1.0)?;
            TrainedPolicy::Fixed {
                factor: params.factor,
            }
        }
        "oracle" => {
            let landscape = ctx.landscape.ok_or_else(|| {
                Error::config("landscape", "oracle needs the ground-truth landscape")
            })?;
            if params.oracle_grid < 1000 {
                return Err(Error::config("oracle_grid", "must be at least 1000"));
            }
            TrainedPolicy::Oracle {
                landscape: landscape.clone(),
                grid_n: params.oracle_grid,
            }
        }
        other => return Err(Error::UnknownPolicy(other.to_string())),
    };
    Ok((policy, diagnostics))
}

fn clamp_bid(bid: f64, value: f64) -> f64 {
    bid.min(value).max(value * 1e-9)
}

impl TrainedPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            TrainedPolicy::Wr { .. } => "wr",
            TrainedPolicy::Mpp { .. } => "mpp",
            TrainedPolicy::FactorLr { .. } => "factor-lr",
            TrainedPolicy::SegmentNl { .. } => "segment-nl",
            TrainedPolicy::WrMaintainer { .. } => "wr-maintainer",
            TrainedPolicy::PointEst { .. } => "point-est",
            TrainedPolicy::Fixed { .. } => "fixed",
            TrainedPolicy::Oracle { .. } => "oracle",
        }
    }

    /// Bid for one request, always in `(0, value]`.
    pub fn decide(&self, request: &Request) -> Result<Decision> {
        let v = request.value;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("value {v} must be positive")));
        }
        let f = &request.features;
        let decision = match self {
            TrainedPolicy::Wr { model, shade: cfg } => {
                let d = shade(model, f, v, cfg)?;
                Decision {
                    bid: clamp_bid(d.bid, v),
                    expected_win_rate: Some(d.expected_win_rate),
                    expected_surplus: Some(d.expected_surplus),
                    iterations: Some(d.iterations),
                }
            }
            TrainedPolicy::Mpp { distribution } => {
                Decision::bare(clamp_bid(distribution.most_probable_price(), v))
            }
            TrainedPolicy::FactorLr { model } => Decision::bare(clamp_bid(model.apply(f, v), v)),
            TrainedPolicy::SegmentNl { shader } => Decision::bare(clamp_bid(shader.apply(f, v), v)),
            TrainedPolicy::WrMaintainer { model, target } => {
                let bid = clamp_bid(winrate_maintainer_bid(model, f, *target, v)?, v);
                let p = model.predict_win_rate(f, bid)?;
                Decision {
                    bid,
                    expected_win_rate: Some(p),
                    expected_surplus: Some((v - bid) * p),
                    iterations: None,
                }
            }
            TrainedPolicy::PointEst { model } => Decision::bare(clamp_bid(model.predict(f), v)),
            TrainedPolicy::Fixed { factor } => Decision::bare(clamp_bid(factor * v, v)),
            TrainedPolicy::Oracle { landscape, grid_n } => {
                let (bid, surplus) = landscape.oracle_optimal_bid(f, v, *grid_n)?;
                Decision {
                    bid,
                    expected_win_rate: Some(landscape.true_cdf(f, bid)),
                    expected_surplus: Some(surplus),
                    iterations: None,
                }
            }
        };
        Ok(decision)
    }
}

impl BidPolicy for TrainedPolicy {
    /// Requests the policy cannot handle yield NaN, which the simulator
    /// counts as rejected.
    fn bid(&self, request: &Request, _rng: &mut SimRng) -> f64 {
        self.decide(request).map(|d| d.bid).unwrap_or(f64::NAN)
    }
}

/// On-disk form of a trained policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub policy: TrainedPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vocabulary>,
}

impl PolicyDocument {
    pub fn new(policy: TrainedPolicy, vocabulary: Option<Vocabulary>) -> Self {
        PolicyDocument {
            format: POLICY_FORMAT.into(),
            version: POLICY_VERSION,
            policy,
            vocabulary,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("policy serialises");
        s.push('\n');
        s
    }

    /// Parse a document, checking format tag and version before the body.
    pub fn from_json(text: &str, location: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::format(location, e.to_string()))?;
        let format = raw.get("format").and_then(|v| v.as_str());
        if format != Some(POLICY_FORMAT) {
            return Err(Error::format(
                location,
                format!("not a {POLICY_FORMAT} document"),
            ));
        }
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::format(location, "missing version"))?;
        if version != POLICY_VERSION as u64 {
            return Err(Error::Version {
                what: "policy",
                found: version.min(u32::MAX as u64) as u32,
                expected: POLICY_VERSION,
            });
        }
        serde_json::from_value(raw).map_err(|e| Error::format(location, e.to_string()))
    }
}
