//! End-to-end experiments: simulate feedback, train policies, replay them on
//! the same evaluation auctions and compare.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{
    compare, potential_surplus, score, Comparison, MetricsReport, DEFAULT_ORACLE_GRID,
};
use crate::exec::Exec;
use crate::landscape::{
    generate_feedback_with, request_rng, ExplorationPolicy, FeedbackBatch, LandscapeSpec, Request,
    RequestConfig,
};
use crate::policy::{train_policy, PolicyParams, TrainedPolicy, TrainingContext, POLICY_NAMES};
use crate::winrate::{FeatureVector, Vocabulary};

const LANDSCAPE_KINDS: [&str; 3] = ["uniform", "lognormal", "spiked"];

#[derive(Clone, Copy)]
enum Stream {
    TrainRequests = 1,
    EvalRequests = 2,
    TrainAuctions = 3,
    EvalAuctions = 4,
}

fn sub_seed(seed: u64, stream: Stream) -> u64 {
    request_rng(seed, stream as u64).next_u64()
}

/// A policy to train and evaluate. `label` names it in reports and defaults
/// to `name`, so one policy can appear with several settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyEntry {
    pub name: String,
    pub label: Option<String>,
    #[serde(flatten)]
    pub params: PolicyParams,
}

impl PolicyEntry {
    pub fn new(name: &str) -> Self {
        PolicyEntry {
            name: name.into(),
            label: None,
            params: PolicyParams::default(),
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }
}

impl<'de> Deserialize<'de> for PolicyEntry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut table = toml::Table::deserialize(d)?;
        let name = match table.remove("name") {
            Some(toml::Value::String(s)) => s,
            _ => return Err(D::Error::custom("policy entry needs a string `name`")),
        };
        let label = match table.remove("label") {
            None => None,
            Some(toml::Value::String(s)) => Some(s),
            Some(_) => return Err(D::Error::custom("`label` must be a string")),
        };
        let params =
            PolicyParams::deserialize(toml::Value::Table(table)).map_err(D::Error::custom)?;
        Ok(PolicyEntry {
            name,
            label,
            params,
        })
    }
}

fn default_n_train() -> usize {
    20_000
}
fn default_n_eval() -> usize {
    100_000
}
fn default_true() -> bool {
    true
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("bidshade-out")
}
fn default_policies() -> Vec<PolicyEntry> {
    vec![PolicyEntry::new("wr"), PolicyEntry::new("mpp")]
}
fn default_grid() -> usize {
    DEFAULT_ORACLE_GRID
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub landscape: LandscapeSpec,
    #[serde(default)]
    pub requests: RequestConfig,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyEntry>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub reveal_mbtw: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Label of the reference policy; the first policy when absent.
    #[serde(default)]
    pub baseline: Option<String>,
    /// Logging policy that produces the training and evaluation feedback.
    #[serde(default)]
    pub exploration: ExplorationPolicy,
    /// Grid size for the oracle optimum behind `pct_of_optimal`.
    #[serde(default = "default_grid")]
    pub oracle_grid: usize,
}

/// Log-normal competition whose location moves with exchange, domain and
/// device.
pub fn default_landscape() -> LandscapeSpec {
    let shift = [(0, 0.3), (2, -0.3), (4, 0.2), (6, -0.2), (8, -0.15)]
        .into_iter()
        .collect();
    let kind = LandscapeSpec::log_normal(-0.6, 0.5)
        .expect("valid")
        .kind()
        .clone();
    LandscapeSpec::new(kind, shift).expect("valid landscape")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            landscape: default_landscape(),
            requests: RequestConfig::default(),
            n_train: default_n_train(),
            n_eval: default_n_eval(),
            policies: default_policies(),
            seed: 0,
            reveal_mbtw: true,
            output_dir: default_output_dir(),
            baseline: None,
            exploration: ExplorationPolicy::default(),
            oracle_grid: DEFAULT_ORACLE_GRID,
        }
    }
}

pub struct Simulation {
    pub vocabulary: Vocabulary,
    pub train_requests: Vec<Request>,
    pub eval_requests: Vec<Request>,
    pub train: FeedbackBatch,
    pub eval: FeedbackBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyOutcome {
    pub metrics: MetricsReport,
    /// Evaluation requests the policy produced no valid bid for.
    pub rejected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub n_train: usize,
    pub n_eval: usize,
    pub potential_surplus: f64,
    pub policies: BTreeMap<String, PolicyOutcome>,
    pub comparison: Comparison,
}

pub struct Evaluation {
    pub report: EvaluationReport,
    pub models: BTreeMap<String, TrainedPolicy>,
    pub vocabulary: Vocabulary,
    pub eval_requests: Vec<Request>,
    /// Replayed auctions per policy label, in request order.
    pub outcomes: BTreeMap<String, FeedbackBatch>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn metrics(&self) -> BTreeMap<String, MetricsReport> {
        self.policies
            .iter()
            .map(|(k, v)| (k.clone(), v.metrics.clone()))
            .collect()
    }
}

impl ExperimentConfig {
    /// Parse TOML. The landscape kind is checked before the rest so a bad
    /// kind is reported against `landscape.kind`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        let landscape = table
            .get("landscape")
            .and_then(|v| v.as_table())
            .ok_or_else(|| Error::config("landscape", "missing [landscape] table"))?;
        match landscape.get("kind").and_then(|k| k.as_str()) {
            Some(k) if LANDSCAPE_KINDS.contains(&k) => {}
            Some(k) => {
                return Err(Error::config(
                    "landscape.kind",
                    format!(
                        "unknown kind `{k}`, expected one of {}",
                        LANDSCAPE_KINDS.join(", ")
                    ),
                ))
            }
            None => return Err(Error::config("landscape.kind", "missing")),
        }
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train < 1 {
            return Err(Error::config("n_train", "must be at least 1"));
        }
        if self.n_eval < 1 {
            return Err(Error::config("n_eval", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies", "at least one policy is required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for p in &self.policies {
            if !POLICY_NAMES.contains(&p.name.as_str()) {
                return Err(Error::UnknownPolicy(p.name.clone()));
            }
            if !labels.insert(p.label()) {
                return Err(Error::config(
                    "policies",
                    format!("duplicate label `{}`", p.label()),
                ));
            }
        }
        if let Some(b) = &self.baseline {
            if !labels.contains(b.as_str()) {
                return Err(Error::config(
                    "baseline",
                    format!("`{b}` is not a configured policy label"),
                ));
            }
        }
        if self.oracle_grid < 1000 {
            return Err(Error::config("oracle_grid", "must be at least 1000"));
        }
        if !(self.exploration.low > 0.0
            && self.exploration.low < self.exploration.high
            && self.exploration.high <= 1.0)
        {
            return Err(Error::config("exploration", "need 0 < low < high <= 1"));
        }
        self.requests.validate()?;
        let dim = self.requests.vocabulary().dim() as u32;
        if let Some(i) = self.landscape.feature_shift().keys().find(|&&i| i >= dim) {
            return Err(Error::config(
                "landscape.feature_shift",
                format!("index {i} is outside the request feature dimension {dim}"),
            ));
        }
        Ok(())
    }

    pub fn baseline_label(&self) -> &str {
        self.baseline
            .as_deref()
            .unwrap_or_else(|| self.policies[0].label())
    }

    pub fn simulate(&self, exec: Exec) -> Result<Simulation> {
        self.validate()?;
        let train_requests = self.requests.generate(
            self.n_train,
            sub_seed(self.seed, Stream::TrainRequests),
            exec,
        )?;
        let eval_requests =
            self.requests
                .generate(self.n_eval, sub_seed(self.seed, Stream::EvalRequests), exec)?;
        let train = generate_feedback_with(
            &self.landscape,
            &self.exploration,
            &train_requests,
            self.reveal_mbtw,
            sub_seed(self.seed, Stream::TrainAuctions),
            exec,
        );
        let eval = generate_feedback_with(
            &self.landscape,
            &self.exploration,
            &eval_requests,
            self.reveal_mbtw,
            sub_seed(self.seed, Stream::EvalAuctions),
            exec,
        );
        Ok(Simulation {
            vocabulary: self.requests.vocabulary(),
            train_requests,
            eval_requests,
            train,
            eval,
        })
    }

    pub fn train_all(
        &self,
        sim: &Simulation,
        exec: Exec,
    ) -> Result<BTreeMap<String, TrainedPolicy>> {
        let ctx = TrainingContext {
            vocabulary: Some(&sim.vocabulary),
            landscape: Some(&self.landscape),
            exec,
        };
        let mut models = BTreeMap::new();
        for p in &self.policies {
            let mut params = p.params.clone();
            params.training.seed ^= self.seed;
            let model = train_policy(&p.name, &sim.train.records, &params, ctx)?;
            models.insert(p.label().to_string(), model);
        }
        Ok(models)
    }

    /// Replay `policy` on the evaluation requests. Every policy meets the
    /// same competing bids because the auction streams are keyed by seed and
    /// request index.
    pub fn replay(
        &self,
        policy: &TrainedPolicy,
        requests: &[Request],
        exec: Exec,
    ) -> FeedbackBatch {
        generate_feedback_with(
            &self.landscape,
            policy,
            requests,
            false,
            sub_seed(self.seed, Stream::EvalAuctions),
            exec,
        )
    }

    pub fn evaluate(&self, exec: Exec) -> Result<Evaluation> {
        let sim = self.simulate(exec)?;
        let models = self.train_all(&sim, exec)?;
        let potential_records: Vec<_> = sim
            .eval_requests
            .iter()
            .map(|r| crate::landscape::FeedbackRecord {
                features: r.features.clone(),
                bid: r.value,
                value: r.value,
                won: false,
                min_bid_to_win: None,
            })
            .collect();
        let potential =
            potential_surplus(&potential_records, &self.landscape, self.oracle_grid, exec)?;

        let mut policies = BTreeMap::new();
        let mut outcomes = BTreeMap::new();
        for (label, model) in &models {
            let batch = self.replay(model, &sim.eval_requests, exec);
            let metrics = score(&batch.records)?;
            let pct = (potential > 0.0).then(|| metrics.surplus().to_f64() / potential);
            policies.insert(
                label.clone(),
                PolicyOutcome {
                    metrics: metrics.with_pct_of_optimal(pct),
                    rejected: batch.rejected,
                },
            );
            outcomes.insert(label.clone(), batch);
        }
        let metrics: BTreeMap<_, _> = policies
            .iter()
            .map(|(k, v)| (k.clone(), v.metrics.clone()))
            .collect();
        let comparison = compare(&metrics, self.baseline_label())?;
        Ok(Evaluation {
            report: EvaluationReport {
                seed: self.seed,
                n_train: self.n_train,
                n_eval: self.n_eval,
                potential_surplus: potential,
                policies,
                comparison,
            },
            models,
            vocabulary: sim.vocabulary,
            eval_requests: sim.eval_requests,
            outcomes,
        })
    }
}

/// Requests without features, for experiments that only vary the value.
pub fn flat_requests(values: &[f64], dim: usize) -> Vec<Request> {
    values
        .iter()
        .map(|&value| Request {
            features: FeatureVector::empty(dim),
            value,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
n_train = 500
n_eval = 300

[landscape]
kind = "lognormal"
mu = -0.5
sigma = 0.5

[[policies]]
name = "fixed"
factor = 0.8

[[policies]]
name = "fixed"
label = "truthful"
factor = 1.0
"#;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.policies.len(), 2);
        assert_eq!(c.policies[0].params.factor, 0.8);
        assert_eq!(c.policies[1].label(), "truthful");
        assert_eq!(c.baseline_label(), "fixed");
        assert!(c.reveal_mbtw);
    }

    #[test]
    fn bad_landscape_kind_names_the_field() {
        let text = MINIMAL.replace("\"lognormal\"", "\"gamma\"");
        match ExperimentConfig::from_toml(&text) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "landscape.kind"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn typos_in_policy_params_are_rejected() {
        let text = MINIMAL.replace("factor = 0.8", "factr = 0.8");
        assert!(matches!(
            ExperimentConfig::from_toml(&text),
            Err(Error::InvalidConfig { .. })
        ));
        let text = MINIMAL.replace("name = \"fixed\"\nfactor = 0.8", "name = \"nope\"");
        assert!(matches!(
            ExperimentConfig::from_toml(&text),
            Err(Error::UnknownPolicy(_))
        ));
    }

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn evaluation_is_deterministic_and_exec_independent() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.policies.push(PolicyEntry::new("wr"));
        let a = c.evaluate(Exec::Sequential).unwrap().report.to_json();
        let b = c.evaluate(Exec::Parallel).unwrap().report.to_json();
        assert_eq!(a, b);
    }
}
