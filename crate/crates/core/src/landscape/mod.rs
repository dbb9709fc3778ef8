//! Synthetic competitive landscapes: the distribution of the highest
//! competing bid `b̂` given request features, with known ground truth.

mod simulate;

pub use simulate::{
    generate_feedback, generate_feedback_with, request_rng, AttributeConfig, BidPolicy,
    ExplorationPolicy, FeedbackBatch, Request, RequestConfig, SimRng,
};

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shading::grid_maximize;
use crate::winrate::FeatureVector;

/// One logged auction.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackRecord {
    pub features: FeatureVector,
    pub bid: f64,
    pub value: f64,
    pub won: bool,
    /// The sampled `b̂`, present only when the simulator reveals it.
    pub min_bid_to_win: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub price: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LandscapeKind {
    /// `b̂ ~ U[low, high]`.
    Uniform { low: f64, high: f64 },
    /// `ln b̂ ~ N(mu, sigma²)`.
    LogNormal { mu: f64, sigma: f64 },
    /// Point masses at fixed prices on top of a base landscape. The base
    /// takes the remaining weight `1 - Σ spike weights`.
    Spiked {
        base: Box<LandscapeKind>,
        spikes: Vec<Spike>,
    },
}

impl LandscapeKind {
    fn validate(&self) -> Result<()> {
        match self {
            LandscapeKind::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && 0.0 <= *low && low < high) {
                    return Err(Error::InvalidLandscape(format!(
                        "uniform requires 0 <= low < high, got low={low} high={high}"
                    )));
                }
            }
            LandscapeKind::LogNormal { mu, sigma } => {
                if !mu.is_finite() || !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidLandscape(format!(
                        "lognormal requires finite mu and sigma > 0, got mu={mu} sigma={sigma}"
                    )));
                }
            }
            LandscapeKind::Spiked { base, spikes } => {
                base.validate()?;
                let mut total = 0.0;
                for s in spikes {
                    if !(s.weight >= 0.0 && s.weight.is_finite()) {
                        return Err(Error::InvalidLandscape(format!(
                            "spike weight {} must be nonnegative",
                            s.weight
                        )));
                    }
                    if !(s.price >= 0.0 && s.price.is_finite()) {
                        return Err(Error::InvalidLandscape(format!(
                            "spike price {} must be nonnegative",
                            s.price
                        )));
                    }
                    total += s.weight;
                }
                if total > 1.0 + 1e-12 {
                    return Err(Error::InvalidLandscape(format!(
                        "spike weights sum to {total}, leaving no base weight"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `P(b̂ < b)` with the location moved by `shift`.
    fn cdf(&self, shift: f64, b: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        match self {
            LandscapeKind::Uniform { low, high } => uniform_fraction(low + shift, high + shift, b),
            LandscapeKind::LogNormal { mu, sigma } => std_normal_cdf((b.ln() - mu - shift) / sigma),
            LandscapeKind::Spiked { base, spikes } => {
                let (base_weight, spike_mass) = spike_split(spikes, |p| p < b);
                base_weight * base.cdf(shift, b) + spike_mass
            }
        }
    }

    /// `P(b̂ <= b)`.
    fn prob_at_most(&self, shift: f64, b: f64) -> f64 {
        if b < 0.0 {
            return 0.0;
        }
        match self {
            LandscapeKind::Uniform { low, high } => uniform_fraction(low + shift, high + shift, b),
            LandscapeKind::LogNormal { .. } => self.cdf(shift, b),
            LandscapeKind::Spiked { base, spikes } => {
                let (base_weight, spike_mass) = spike_split(spikes, |p| p <= b);
                base_weight * base.prob_at_most(shift, b) + spike_mass
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, shift: f64, rng: &mut R) -> f64 {
        match self {
            LandscapeKind::Uniform { low, high } => {
                let u: f64 = rng.random();
                (low + shift + u * (high - low)).max(0.0)
            }
            LandscapeKind::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + shift + sigma * z).exp()
            }
            LandscapeKind::Spiked { base, spikes } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for s in spikes {
                    acc += s.weight;
                    if u < acc {
                        return s.price;
                    }
                }
                base.sample(shift, rng)
            }
        }
    }
}

/// Fraction of `[lo, hi]` below `b`; a negative `lo` models an atom at zero.
fn uniform_fraction(lo: f64, hi: f64, b: f64) -> f64 {
    ((b - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn spike_split(spikes: &[Spike], counted: impl Fn(f64) -> bool) -> (f64, f64) {
    let total: f64 = spikes.iter().map(|s| s.weight).sum();
    let mass = spikes
        .iter()
        .filter(|s| counted(s.price))
        .map(|s| s.weight)
        .sum();
    ((1.0 - total).max(0.0), mass)
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Ground-truth landscape. Immutable once built.
///
/// Features move the location additively by `Σ shift[i]·xᵢ`: both ends of a
/// uniform interval, or `mu` of a log-normal. Spike prices stay put. A
/// shifted uniform interval reaching below zero puts its lower tail on an
/// atom at `b̂ = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct LandscapeSpec {
    kind: LandscapeKind,
    feature_shift: BTreeMap<u32, f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawSpec {
    #[serde(flatten)]
    kind: LandscapeKind,
    #[serde(default)]
    feature_shift: BTreeMap<String, f64>,
}

impl TryFrom<RawSpec> for LandscapeSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let mut shift = BTreeMap::new();
        for (k, v) in raw.feature_shift {
            let idx: u32 = k.trim().parse().map_err(|_| {
                Error::InvalidLandscape(format!("feature_shift key `{k}` is not a feature index"))
            })?;
            shift.insert(idx, v);
        }
        LandscapeSpec::new(raw.kind, shift)
    }
}

impl From<LandscapeSpec> for RawSpec {
    fn from(spec: LandscapeSpec) -> Self {
        RawSpec {
            kind: spec.kind,
            feature_shift: spec
                .feature_shift
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}

impl LandscapeSpec {
    pub fn new(kind: LandscapeKind, feature_shift: BTreeMap<u32, f64>) -> Result<Self> {
        kind.validate()?;
        if let Some((i, v)) = feature_shift.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidLandscape(format!(
                "feature_shift[{i}] = {v} is not finite"
            )));
        }
        Ok(LandscapeSpec {
            kind,
            feature_shift,
        })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        Self::new(LandscapeKind::Uniform { low, high }, BTreeMap::new())
    }

    pub fn log_normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(LandscapeKind::LogNormal { mu, sigma }, BTreeMap::new())
    }

    pub fn kind(&self) -> &LandscapeKind {
        &self.kind
    }

    pub fn feature_shift(&self) -> &BTreeMap<u32, f64> {
        &self.feature_shift
    }

    fn shift(&self, features: &FeatureVector) -> f64 {
        features
            .entries()
            .iter()
            .filter_map(|(i, x)| self.feature_shift.get(i).map(|s| s * x))
            .sum()
    }

    /// `P(b̂ < b | features)`.
    pub fn true_cdf(&self, features: &FeatureVector, b: f64) -> f64 {
        self.kind.cdf(self.shift(features), b)
    }

    /// `P(b̂ <= b | features)`; differs from [`Self::true_cdf`] only at atoms.
    pub fn prob_at_most(&self, features: &FeatureVector, b: f64) -> f64 {
        self.kind.prob_at_most(self.shift(features), b)
    }

    pub fn sample_highest_bid<R: Rng + ?Sized>(
        &self,
        features: &FeatureVector,
        rng: &mut R,
    ) -> f64 {
        self.kind.sample(self.shift(features), rng)
    }

    /// Grid-search the ground-truth surplus-maximising bid over `(0, value]`.
    /// Returns `(bid, expected surplus)`.
    pub fn oracle_optimal_bid(
        &self,
        features: &FeatureVector,
        value: f64,
        grid_n: usize,
    ) -> Result<(f64, f64)> {
        if !(value > 0.0) {
            return Err(Error::Domain(format!("value {value} must be positive")));
        }
        let shift = self.shift(features);
        grid_maximize(|b| self.kind.cdf(shift, b), value, grid_n)
    }
}
