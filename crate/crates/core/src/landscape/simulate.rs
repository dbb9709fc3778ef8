use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::winrate::{Attribute, EncodeStats, FeatureVector, Vocabulary};

use super::{FeedbackRecord, LandscapeSpec};

pub type SimRng = ChaCha8Rng;

/// Independent random stream for request `index`. Keyed by index rather than
/// drawn sequentially so parallel and sequential runs see the same numbers.
pub fn request_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// An incoming ad opportunity: features and the bidder's private value.
#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub features: FeatureVector,
    pub value: f64,
}

/// Anything that turns a request into a bid.
///
/// `rng` is the request's private stream, already advanced past the
/// landscape draw; deterministic policies ignore it.
pub trait BidPolicy: Sync {
    fn bid(&self, request: &Request, rng: &mut SimRng) -> f64;
}

impl<F> BidPolicy for F
where
    F: Fn(&Request) -> f64 + Sync,
{
    fn bid(&self, request: &Request, _rng: &mut SimRng) -> f64 {
        self(request)
    }
}

/// Logging policy for training data: bids `value × U[low, high)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPolicy {
    pub low: f64,
    pub high: f64,
}

impl Default for ExplorationPolicy {
    fn default() -> Self {
        ExplorationPolicy {
            low: 0.05,
            high: 1.0,
        }
    }
}

impl BidPolicy for ExplorationPolicy {
    fn bid(&self, request: &Request, rng: &mut SimRng) -> f64 {
        let u: f64 = rng.random();
        request.value * (self.low + u * (self.high - self.low))
    }
}

#[derive(Clone, Debug, Default)]
pub struct FeedbackBatch {
    pub records: Vec<FeedbackRecord>,
    /// Requests dropped because the policy returned a nonpositive or
    /// non-finite bid.
    pub rejected: usize,
}

pub fn generate_feedback(
    spec: &LandscapeSpec,
    policy: &dyn BidPolicy,
    requests: &[Request],
    reveal_mbtw: bool,
    seed: u64,
) -> FeedbackBatch {
    generate_feedback_with(spec, policy, requests, reveal_mbtw, seed, Exec::default())
}

/// Run one first-price auction per request. `b̂` is drawn first from the
/// request's stream, so two policies run with the same seed face the same
/// competition. A bid wins only when strictly above `b̂`.
pub fn generate_feedback_with(
    spec: &LandscapeSpec,
    policy: &dyn BidPolicy,
    requests: &[Request],
    reveal_mbtw: bool,
    seed: u64,
    exec: Exec,
) -> FeedbackBatch {
    let outcomes = exec.map_range(requests.len(), |i| {
        let req = &requests[i];
        let mut rng = request_rng(seed, i as u64);
        let highest = spec.sample_highest_bid(&req.features, &mut rng);
        let bid = policy.bid(req, &mut rng);
        if !(bid > 0.0 && bid.is_finite()) {
            return None;
        }
        Some(FeedbackRecord {
            features: req.features.clone(),
            bid,
            value: req.value,
            won: bid > highest,
            min_bid_to_win: reveal_mbtw.then_some(highest),
        })
    });
    let mut batch = FeedbackBatch::default();
    for o in outcomes {
        match o {
            Some(r) => batch.records.push(r),
            None => batch.rejected += 1,
        }
    }
    batch
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeConfig {
    pub name: String,
    pub categories: Vec<String>,
    /// Relative category frequencies; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// Generator for synthetic bid requests: categorical attributes drawn
/// independently, value log-normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestConfig {
    pub attributes: Vec<AttributeConfig>,
    pub value_mu: f64,
    pub value_sigma: f64,
}

impl Default for RequestConfig {
    fn default() -> Self {
        let attr = |name: &str, cats: &[&str]| AttributeConfig {
            name: name.into(),
            categories: cats.iter().map(|c| c.to_string()).collect(),
            weights: None,
        };
        RequestConfig {
            attributes: vec![
                attr("exchange", &["ex0", "ex1", "ex2"]),
                attr("domain", &["d0", "d1", "d2", "d3"]),
                attr("device", &["desktop", "mobile"]),
            ],
            value_mu: 0.0,
            value_sigma: 0.4,
        }
    }
}

// Separates the request streams from the auction streams of the same seed.
const REQUEST_STREAM_SALT: u64 = 0x5eed_0f4e_9e37_79b9;

impl RequestConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.value_mu.is_finite() {
            return Err(Error::config("requests.value_mu", "must be finite"));
        }
        if !(self.value_sigma >= 0.0 && self.value_sigma.is_finite()) {
            return Err(Error::config("requests.value_sigma", "must be nonnegative"));
        }
        for a in &self.attributes {
            if a.categories.is_empty() {
                return Err(Error::config(
                    format!("requests.attributes.{}", a.name),
                    "needs at least one category",
                ));
            }
            if let Some(w) = &a.weights {
                if w.len() != a.categories.len() || WeightedIndex::new(w).is_err() {
                    return Err(Error::config(
                        format!("requests.attributes.{}.weights", a.name),
                        "must be one nonnegative weight per category with a positive sum",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(
            self.attributes
                .iter()
                .map(|a| Attribute {
                    name: a.name.clone(),
                    categories: a.categories.clone(),
                })
                .collect(),
        )
    }

    pub fn generate(&self, n: usize, seed: u64, exec: Exec) -> Result<Vec<Request>> {
        self.validate()?;
        let vocab = self.vocabulary();
        let pickers: Vec<Option<WeightedIndex<f64>>> = self
            .attributes
            .iter()
            .map(|a| {
                a.weights
                    .as_ref()
                    .map(|w| WeightedIndex::new(w).expect("validated"))
            })
            .collect();
        let values = LogNormal::new(self.value_mu, self.value_sigma)
            .map_err(|e| Error::config("requests.value_sigma", e.to_string()))?;
        let salted = seed ^ REQUEST_STREAM_SALT;
        Ok(exec.map_range(n, |i| {
            let mut rng = request_rng(salted, i as u64);
            let mut attrs = BTreeMap::new();
            for (a, picker) in self.attributes.iter().zip(&pickers) {
                let c = match picker {
                    Some(p) => p.sample(&mut rng),
                    None => rng.random_range(0..a.categories.len()),
                };
                attrs.insert(a.name.clone(), a.categories[c].clone());
            }
            let features = vocab.encode(&attrs, &mut EncodeStats::default());
            Request {
                features,
                value: values.sample(&mut rng),
            }
        }))
    }
}
