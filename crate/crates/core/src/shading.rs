//! Surplus-maximising bids under the logistic win-rate model.
//!
//! With `α = w0 + Σ wᵢxᵢ`, expected surplus at bid `b` is
//! `f(b) = (V − b) / (1 + e^{−α} b^{−β})`. For `β > 0` the sign of `f′`
//! equals the sign of `h(b) = βV − (β+1)b − e^α b^{β+1}`, which is strictly
//! decreasing, so `f` has a single maximiser `b*` and it satisfies
//!
//! ```text
//! βV / (β + 1 + e^α V^β)  <=  b*  <  βV / (β + 1)
//! ```
//!
//! [`SurplusProblem::maximize`] searches that bracket for the root of `h`,
//! cutting at the point the two end slopes extrapolate to instead of the
//! midpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::landscape::Request;
use crate::winrate::{logistic, FeatureVector, WinRateModel};

/// Ratio cuts are clamped to this band so a cut never lands right on a
/// bracket end.
pub const RATIO_BAND: (f64, f64) = (0.01, 0.99);

pub const DEFAULT_RELATIVE_EPSILON: f64 = 1e-4;
pub const DEFAULT_MAX_STEPS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurplusProblem {
    alpha: f64,
    beta: f64,
    value: f64,
    epsilon: f64,
    max_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadingDecision {
    pub bid: f64,
    pub expected_win_rate: f64,
    pub expected_surplus: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
    /// False when `max_steps` ran out before the bracket shrank below epsilon.
    pub converged: bool,
    /// Steps whose ratio cut fell outside [`RATIO_BAND`] and was clamped.
    pub clamped_steps: usize,
}

impl SurplusProblem {
    pub fn new(alpha: f64, beta: f64, value: f64, epsilon: f64, max_steps: usize) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Domain(format!("alpha {alpha} is not finite")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta {beta} must be positive")));
        }
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Domain(format!("value {value} must be positive")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Domain(format!("epsilon {epsilon} must be positive")));
        }
        if max_steps < 1 {
            return Err(Error::Domain("max_steps must be at least 1".into()));
        }
        Ok(SurplusProblem {
            alpha,
            beta,
            value,
            epsilon,
            max_steps,
        })
    }

    /// Problem with the default step budget and `epsilon = 1e-4·V`.
    pub fn with_defaults(alpha: f64, beta: f64, value: f64) -> Result<Self> {
        Self::new(
            alpha,
            beta,
            value,
            DEFAULT_RELATIVE_EPSILON * value,
            DEFAULT_MAX_STEPS,
        )
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn win_rate(&self, b: f64) -> f64 {
        logistic(self.alpha + self.beta * b.ln())
    }

    /// `f(b) = (V − b)·logistic(α + β log b)`.
    pub fn surplus(&self, b: f64) -> f64 {
        (self.value - b) * self.win_rate(b)
    }

    /// Sign-equivalent of `f′(b)`. The `e^α b^{β+1}` term is evaluated in log
    /// space.
    pub fn h(&self, b: f64) -> f64 {
        let growth = (self.alpha + (self.beta + 1.0) * b.ln()).exp();
        self.beta * self.value - (self.beta + 1.0) * b - growth
    }

    /// `(b_min, b_max)` bracketing the maximiser.
    pub fn bid_bounds(&self) -> (f64, f64) {
        let (beta, v) = (self.beta, self.value);
        let ln_denominator = log_add_exp((beta + 1.0).ln(), self.alpha + beta * v.ln());
        let b_min = (beta.ln() + v.ln() - ln_denominator)
            .exp()
            .max(f64::MIN_POSITIVE);
        let b_max = beta / (beta + 1.0) * v;
        (b_min, b_max)
    }

    pub fn maximize(&self) -> ShadingDecision {
        let (mut lo, mut hi) = self.bid_bounds();
        let (mut h_lo, mut h_hi) = (self.h(lo), self.h(hi));
        let mut bid = lo;
        let mut iterations = 0;
        let mut clamped_steps = 0;
        let mut converged = false;
        // +1 when lo moved last, -1 when hi did.
        let mut last_side = 0i8;

        for step in 1..=self.max_steps {
            iterations = step;
            let mut r = h_lo / (h_lo - h_hi);
            if !(RATIO_BAND.0..=RATIO_BAND.1).contains(&r) {
                r = if r.is_nan() {
                    0.5
                } else {
                    r.clamp(RATIO_BAND.0, RATIO_BAND.1)
                };
                clamped_steps += 1;
            }
            bid = (1.0 - r) * lo + r * hi;
            let h_bid = self.h(bid);
            // A bracket end kept twice in a row has its h halved (Illinois),
            // so the next cut is pulled towards it.
            if h_bid >= 0.0 {
                lo = bid;
                h_lo = h_bid;
                if last_side == 1 {
                    h_hi *= 0.5;
                }
                last_side = 1;
            } else {
                hi = bid;
                h_hi = h_bid;
                if last_side == -1 {
                    h_lo *= 0.5;
                }
                last_side = -1;
            }
            if h_bid == 0.0 || hi - lo < self.epsilon {
                converged = true;
                break;
            }
        }

        let expected_win_rate = self.win_rate(bid);
        ShadingDecision {
            bid,
            expected_win_rate,
            expected_surplus: (self.value - bid) * expected_win_rate,
            iterations,
            bracket: (lo, hi),
            converged,
            clamped_steps,
        }
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShadeConfig {
    /// Search tolerance as a fraction of the value.
    pub relative_epsilon: f64,
    pub max_steps: usize,
    /// Low-price guard: the bid is raised to at least `floor_factor·V`.
    /// Zero disables it.
    pub floor_factor: f64,
}

impl Default for ShadeConfig {
    fn default() -> Self {
        ShadeConfig {
            relative_epsilon: DEFAULT_RELATIVE_EPSILON,
            max_steps: DEFAULT_MAX_STEPS,
            floor_factor: 0.0,
        }
    }
}

impl ShadeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_epsilon > 0.0 && self.relative_epsilon < 1.0) {
            return Err(Error::config("epsilon", "must be in (0, 1)"));
        }
        if self.max_steps < 1 {
            return Err(Error::config("max_steps", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.floor_factor) {
            return Err(Error::config("floor_factor", "must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Surplus-maximising bid for one request under a trained model.
pub fn shade(
    model: &WinRateModel,
    features: &FeatureVector,
    value: f64,
    config: &ShadeConfig,
) -> Result<ShadingDecision> {
    config.validate()?;
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::Domain(format!("value {value} must be positive")));
    }
    let scale = model.currency_scale();
    let scaled_value = value / scale;
    let problem = SurplusProblem::new(
        model.alpha(features)?,
        model.beta(),
        scaled_value,
        config.relative_epsilon * scaled_value,
        config.max_steps,
    )?;
    let mut decision = problem.maximize();
    decision.bid *= scale;
    decision.bracket = (decision.bracket.0 * scale, decision.bracket.1 * scale);
    decision.expected_surplus *= scale;

    let floor = config.floor_factor * value;
    if decision.bid < floor {
        decision.bid = floor;
        decision.expected_win_rate = problem.win_rate(floor / scale);
        decision.expected_surplus = (value - floor) * decision.expected_win_rate;
    }
    Ok(decision)
}

pub fn shade_batch(
    model: &WinRateModel,
    requests: &[Request],
    config: &ShadeConfig,
    exec: Exec,
) -> Result<Vec<ShadingDecision>> {
    exec.map_slice(requests, |r| shade(model, &r.features, r.value, config))
        .into_iter()
        .collect()
}

/// Analytic optimum of `(V − b)·P(b̂ < b)` for `b̂ ~ U[b0, b1]`.
///
/// Interior case: `b* = (V + b0)/2` with surplus `(V − b0)² / (4(b1 − b0))`,
/// valid while `V <= 2·b1 − b0`; beyond that the bid sits at `b1` and earns
/// `V − b1`. When `b0 > 0` the argmax is `(V + b0)/2`, the stationary point
/// of `(V − b)(b − b0)`; the commonly quoted `(V − b0)/2` only coincides at
/// `b0 = 0`. No bid is profitable when `V <= b0`; the result is then
/// `(b0, 0)`.
pub fn uniform_closed_form(value: f64, b0: f64, b1: f64) -> Result<(f64, f64)> {
    if !(b0 >= 0.0 && b0 < b1 && b1.is_finite()) {
        return Err(Error::Domain(format!(
            "uniform bounds need 0 <= b0 < b1, got b0={b0} b1={b1}"
        )));
    }
    if !value.is_finite() {
        return Err(Error::Domain(format!("value {value} is not finite")));
    }
    if value <= b0 {
        return Ok((b0, 0.0));
    }
    if value <= 2.0 * b1 - b0 {
        let gap = value - b0;
        Ok(((value + b0) / 2.0, gap * gap / (4.0 * (b1 - b0))))
    } else {
        Ok((b1, value - b1))
    }
}

/// Exhaustive maximum of `(V − b)·cdf(b)` over `b = V·i/n`, `i = 1..=n`.
/// Ties go to the lowest bid.
pub fn grid_maximize<F>(cdf: F, value: f64, grid_n: usize) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    if grid_n < 1000 {
        return Err(Error::Domain(format!(
            "grid of {grid_n} points is below 1000"
        )));
    }
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::Domain(format!("value {value} must be positive")));
    }
    let n = grid_n as f64;
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for i in 1..=grid_n {
        let b = value * i as f64 / n;
        let s = (value - b) * cdf(b);
        if s > best.1 {
            best = (b, s);
        }
    }
    Ok(best)
}
