//! Linear regression of the market price with an asymmetric squared loss:
//! records the bid lost count `1 + a`, records it won count `1 − a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::FeedbackRecord;
use crate::winrate::FeatureVector;

pub const MIN_PRICE: f64 = 1e-6;
const RIDGE: f64 = 1e-6;
const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimatorModel {
    /// Intercept first, then one weight per feature.
    pub weights: Vec<f64>,
    pub asymmetry: f64,
    /// Set when the normal equations were singular and the ridge fallback ran.
    pub ridge_fallback: bool,
}

/// Cholesky factor of a symmetric matrix, or `None` when a pivot is not
/// clearly positive relative to the diagonal scale.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let scale = a
        .iter()
        .enumerate()
        .map(|(i, r)| r[i].abs())
        .fold(0.0, f64::max);
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > PIVOT_TOLERANCE * scale.max(1e-300)) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

impl PointEstimatorModel {
    /// Weighted least squares on `min_bid_to_win`. `asymmetry` must lie in
    /// `[0, 1)`; zero gives ordinary least squares.
    pub fn train(records: &[FeedbackRecord], asymmetry: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&asymmetry) {
            return Err(Error::config("asymmetry", "must be in [0, 1)"));
        }
        let first = records
            .first()
            .ok_or_else(|| Error::DegenerateData("no records to fit".into()))?;
        let dim = first.features.dim();
        let p = dim + 1;
        let mut xtx = vec![vec![0.0; p]; p];
        let mut xty = vec![0.0; p];
        for (i, r) in records.iter().enumerate() {
            let y = r.min_bid_to_win.ok_or_else(|| {
                Error::DegenerateData(format!("record {i} has no min_bid_to_win"))
            })?;
            if r.features.dim() != dim || !y.is_finite() {
                return Err(Error::Domain(format!(
                    "record {i}: bad target or dimension"
                )));
            }
            let w = if r.won {
                1.0 - asymmetry
            } else {
                1.0 + asymmetry
            };
            let mut row: Vec<(usize, f64)> = vec![(0, 1.0)];
            row.extend(
                r.features
                    .entries()
                    .iter()
                    .map(|&(j, x)| (j as usize + 1, x)),
            );
            for &(a, xa) in &row {
                xty[a] += w * xa * y;
                for &(b, xb) in &row {
                    xtx[a][b] += w * xa * xb;
                }
            }
        }
        let (l, ridge_fallback) = match cholesky(&xtx) {
            Some(l) => (l, false),
            None => {
                let scale = (0..p).map(|i| xtx[i][i]).fold(0.0, f64::max).max(1.0);
                for (i, row) in xtx.iter_mut().enumerate() {
                    row[i] += RIDGE * scale;
                }
                let l = cholesky(&xtx)
                    .ok_or_else(|| Error::DegenerateData("normal equations are singular".into()))?;
                (l, true)
            }
        };
        let weights = cholesky_solve(&l, &xty);
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::ModelRejected(
                "point estimator weights diverged".into(),
            ));
        }
        Ok(PointEstimatorModel {
            weights,
            asymmetry,
            ridge_fallback,
        })
    }

    pub fn predict(&self, features: &FeatureVector) -> f64 {
        (self.weights[0] + features.dot(&self.weights[1..])).max(MIN_PRICE)
    }
}
