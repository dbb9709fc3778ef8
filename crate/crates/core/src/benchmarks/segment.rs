//! Segment-based parametric shading, tuned online by recursive least squares.
//!
//! Each inventory segment owns its parameters. The shaded bid is
//! `ln((1 + u1·u2·bᵘ) / u2)` when `u2 > 0`, and `b1·bᵘ` otherwise. Segments
//! never share state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::FeedbackRecord;
use crate::winrate::{FeatureVector, Vocabulary};

/// Shaded bids are kept at or above this fraction of the unshaded bid.
const MIN_BID_FRACTION: f64 = 1e-6;
const MIN_U2: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub u1: f64,
    pub u2: f64,
    pub b1: f64,
    /// RLS covariance. The linear branch uses only `[0][0]`; the nonlinear
    /// branch tracks `(u1, u2)`.
    pub covariance: [[f64; 2]; 2],
}

impl SegmentParams {
    pub fn linear(b1: f64) -> Self {
        SegmentParams {
            u1: 0.0,
            u2: 0.0,
            b1,
            covariance: [[1e3, 0.0], [0.0, 1e3]],
        }
    }

    pub fn nonlinear(u1: f64, u2: f64) -> Self {
        SegmentParams {
            u1,
            u2,
            b1: 1.0,
            covariance: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn is_nonlinear(&self) -> bool {
        self.u2 > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Nonlinear,
    Linear,
    /// The nonlinear log argument was nonpositive; the linear factor was used.
    LinearFallback,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Applied {
    pub bid: f64,
    pub branch: Branch,
}

pub fn segment_nonlinear_apply(params: &SegmentParams, unshaded_bid: f64) -> Applied {
    let (raw, branch) = if params.is_nonlinear() {
        let arg = (1.0 + params.u1 * params.u2 * unshaded_bid) / params.u2;
        if arg > 0.0 {
            (arg.ln(), Branch::Nonlinear)
        } else {
            (params.b1 * unshaded_bid, Branch::LinearFallback)
        }
    } else {
        (params.b1 * unshaded_bid, Branch::Linear)
    };
    let floor = MIN_BID_FRACTION * unshaded_bid;
    let bid = if raw.is_nan() {
        floor
    } else {
        raw.clamp(floor, unshaded_bid)
    };
    Applied { bid, branch }
}

/// One recursive-least-squares step towards `observed_mbtw` with forgetting
/// factor `forgetting`. The nonlinear branch linearises around the current
/// `(u1, u2)`.
pub fn segment_rls_update(
    params: &SegmentParams,
    observed_mbtw: f64,
    unshaded_bid: f64,
    forgetting: f64,
) -> SegmentParams {
    let mut next = *params;
    if !(unshaded_bid > 0.0 && observed_mbtw.is_finite()) {
        return next;
    }
    let lambda = forgetting;
    if !params.is_nonlinear() {
        let phi = unshaded_bid;
        let p = params.covariance[0][0];
        let gain = p * phi / (lambda + phi * p * phi);
        next.b1 =
            (params.b1 + gain * (observed_mbtw - params.b1 * phi)).clamp(MIN_BID_FRACTION, 1.0);
        next.covariance[0][0] = (p - gain * phi * p) / lambda;
        return next;
    }

    let (u1, u2, b) = (params.u1, params.u2, unshaded_bid);
    let inner = 1.0 + u1 * u2 * b;
    if !(inner > 0.0) {
        return next;
    }
    let predicted = (inner / u2).ln();
    let jac = [u2 * b / inner, u1 * b / inner - 1.0 / u2];
    let p = params.covariance;
    let pj = [
        p[0][0] * jac[0] + p[0][1] * jac[1],
        p[1][0] * jac[0] + p[1][1] * jac[1],
    ];
    let s = lambda + jac[0] * pj[0] + jac[1] * pj[1];
    let gain = [pj[0] / s, pj[1] / s];
    let err = observed_mbtw - predicted;
    next.u1 = u1 + gain[0] * err;
    next.u2 = (u2 + gain[1] * err).max(MIN_U2);
    let mut cov = [[0.0; 2]; 2];
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = (p[i][j] - gain[i] * pj[j]) / lambda;
        }
    }
    let off = 0.5 * (cov[0][1] + cov[1][0]);
    cov[0][1] = off;
    cov[1][0] = off;
    next.covariance = cov;
    next
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    /// Attributes whose categories form the segment key.
    pub key_attributes: Vec<String>,
    pub forgetting: f64,
    pub nonlinear: bool,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            key_attributes: vec!["exchange".into(), "domain".into()],
            forgetting: 0.99,
            nonlinear: false,
        }
    }
}

impl SegmentConfig {
    fn initial(&self) -> SegmentParams {
        if self.nonlinear {
            SegmentParams::nonlinear(1.0, 1.0)
        } else {
            SegmentParams::linear(1.0)
        }
    }
}

/// Per-segment parameter table. Requests from segments never seen in
/// training use parameters fitted on all traffic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentShader {
    pub config: SegmentConfig,
    pub vocabulary: Vocabulary,
    pub segments: BTreeMap<String, SegmentParams>,
    pub unseen: SegmentParams,
}

impl SegmentShader {
    pub fn new(vocabulary: Vocabulary, config: SegmentConfig) -> Result<Self> {
        if !(config.forgetting > 0.0 && config.forgetting <= 1.0) {
            return Err(Error::config("forgetting", "must be in (0, 1]"));
        }
        for a in &config.key_attributes {
            if !vocabulary.attributes().iter().any(|v| &v.name == a) {
                return Err(Error::config(
                    "key_attributes",
                    format!("unknown attribute `{a}`"),
                ));
            }
        }
        let unseen = config.initial();
        Ok(SegmentShader {
            config,
            vocabulary,
            segments: BTreeMap::new(),
            unseen,
        })
    }

    pub fn segment_key(&self, features: &FeatureVector) -> String {
        self.config
            .key_attributes
            .iter()
            .map(|a| {
                let c = self.vocabulary.active_category(features, a).unwrap_or("?");
                format!("{a}={c}")
            })
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn params(&self, features: &FeatureVector) -> &SegmentParams {
        self.segments
            .get(&self.segment_key(features))
            .unwrap_or(&self.unseen)
    }

    /// Feed one observation to its segment (and the unseen-segment fallback).
    pub fn observe(&mut self, features: &FeatureVector, observed_mbtw: f64, unshaded_bid: f64) {
        let key = self.segment_key(features);
        let initial = self.config.initial();
        let forgetting = self.config.forgetting;
        let entry = self.segments.entry(key).or_insert(initial);
        *entry = segment_rls_update(entry, observed_mbtw, unshaded_bid, forgetting);
        self.unseen = segment_rls_update(&self.unseen, observed_mbtw, unshaded_bid, forgetting);
    }

    /// Replay records in order. Every record needs `min_bid_to_win`.
    pub fn train(
        vocabulary: Vocabulary,
        config: SegmentConfig,
        records: &[FeedbackRecord],
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::DegenerateData("no records to fit".into()));
        }
        let mut shader = SegmentShader::new(vocabulary, config)?;
        for (i, r) in records.iter().enumerate() {
            let mbtw = r.min_bid_to_win.ok_or_else(|| {
                Error::DegenerateData(format!("record {i} has no min_bid_to_win"))
            })?;
            shader.observe(&r.features, mbtw, r.value);
        }
        Ok(shader)
    }

    pub fn apply(&self, features: &FeatureVector, unshaded_bid: f64) -> f64 {
        segment_nonlinear_apply(self.params(features), unshaded_bid).bid
    }
}
