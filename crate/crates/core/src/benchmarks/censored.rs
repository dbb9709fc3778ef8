//! Winning-price distribution from censored win/loss feedback.
//!
//! A win at bid `b` says `b̂ < b`; a loss says `b̂ >= b`. The nonparametric
//! maximum-likelihood CDF is fitted at the observed bids and then binned onto
//! a bucket grid, with mass spread uniformly inside each bucket.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::FeedbackRecord;

pub const DEFAULT_BUCKETS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketedPriceDistribution {
    edges: Vec<f64>,
    pmf: Vec<f64>,
    /// Set when the data were one-sided and the flat prior was returned.
    fallback: bool,
}

/// `buckets + 1` log-spaced edges from `lo` to `hi`.
pub fn log_spaced_edges(lo: f64, hi: f64, buckets: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || buckets == 0 {
        return Err(Error::Domain(format!(
            "log-spaced edges need 0 < lo < hi and at least one bucket, got {lo}..{hi} x{buckets}"
        )));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut edges: Vec<f64> = (0..=buckets)
        .map(|i| (a + (b - a) * i as f64 / buckets as f64).exp())
        .collect();
    edges[0] = lo;
    edges[buckets] = hi;
    Ok(edges)
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Domain("need at least two bucket edges".into()));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) || !edges.iter().all(|e| e.is_finite()) {
        return Err(Error::Domain(
            "bucket edges must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

impl BucketedPriceDistribution {
    pub fn new(edges: Vec<f64>, pmf: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        if pmf.len() + 1 != edges.len() {
            return Err(Error::Domain("pmf needs one entry per bucket".into()));
        }
        if pmf.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Domain("pmf must be nonnegative".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("pmf sums to {total}, not 1")));
        }
        Ok(BucketedPriceDistribution {
            edges,
            pmf,
            fallback: false,
        })
    }

    fn flat(edges: Vec<f64>) -> Self {
        let m = edges.len() - 1;
        BucketedPriceDistribution {
            edges,
            pmf: vec![1.0 / m as f64; m],
            fallback: true,
        }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn is_fallback(&self) -> bool {
        self.fallback
    }

    /// Bucket index containing `b` (clamped to the grid) and the fraction of
    /// that bucket lying below `b`.
    fn locate(&self, b: f64) -> (usize, f64) {
        locate(&self.edges, b)
    }

    /// `P(b̂ < b)`, linear inside buckets.
    pub fn cdf(&self, b: f64) -> f64 {
        let (k, frac) = self.locate(b);
        self.pmf[..k].iter().sum::<f64>() + self.pmf[k] * frac
    }

    pub fn bucket_of(&self, b: f64) -> usize {
        self.locate(b).0
    }

    /// Midpoint of the heaviest bucket; ties go to the lowest bucket.
    pub fn most_probable_price(&self) -> f64 {
        let mut best = 0;
        for (k, &p) in self.pmf.iter().enumerate() {
            if p > self.pmf[best] {
                best = k;
            }
        }
        0.5 * (self.edges[best] + self.edges[best + 1])
    }
}

fn locate(edges: &[f64], b: f64) -> (usize, f64) {
    let m = edges.len() - 1;
    if b <= edges[0] {
        return (0, 0.0);
    }
    if b >= edges[m] {
        return (m - 1, 1.0);
    }
    let k = edges.partition_point(|&e| e <= b) - 1;
    (k, (b - edges[k]) / (edges[k + 1] - edges[k]))
}

/// Fit bucket masses by censored maximum likelihood. Bids outside the edge
/// range are clamped onto it. One-sided data (all wins or all losses) carry
/// no information about one tail, so the flat distribution is returned with
/// [`BucketedPriceDistribution::is_fallback`] set.
pub fn fit_censored_distribution(
    records: &[FeedbackRecord],
    edges: &[f64],
) -> Result<BucketedPriceDistribution> {
    check_edges(edges)?;
    if records.is_empty() {
        return Err(Error::DegenerateData("no records to fit".into()));
    }
    let wins = records.iter().filter(|r| r.won).count();
    if wins == 0 || wins == records.len() {
        return Ok(BucketedPriceDistribution::flat(edges.to_vec()));
    }

    let (lo, hi) = (edges[0], edges[edges.len() - 1]);
    let mut obs: Vec<(f64, bool)> = records
        .iter()
        .map(|r| (r.bid.clamp(lo, hi), r.won))
        .collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let steps = isotonic_steps(&obs);

    let m = edges.len() - 1;
    let mut cdf = Vec::with_capacity(m + 1);
    cdf.push(0.0);
    cdf.extend(edges[1..m].iter().map(|&e| interpolate(&steps, lo, hi, e)));
    cdf.push(1.0);
    let pmf: Vec<f64> = cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let total: f64 = pmf.iter().sum();
    BucketedPriceDistribution::new(edges.to_vec(), pmf.into_iter().map(|p| p / total).collect())
}

/// Self-consistent estimate of `P(b̂ < b)` at the distinct observed bids.
///
/// For win/loss data the fixed point of the Turnbull iteration is the
/// isotonic regression of the win indicator on the bid, so it is computed
/// directly with pool-adjacent-violators rather than by iterating.
fn isotonic_steps(sorted: &[(f64, bool)]) -> Vec<(f64, f64)> {
    // (first bid, last bid, wins, count) per pooled block.
    let mut blocks: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i].0;
        let (mut w, mut n) = (0.0, 0.0);
        while i < sorted.len() && sorted[i].0 == x {
            w += f64::from(u8::from(sorted[i].1));
            n += 1.0;
            i += 1;
        }
        blocks.push((x, x, w, n));
        while blocks.len() > 1 {
            let (a, b) = (blocks[blocks.len() - 2], blocks[blocks.len() - 1]);
            if a.2 / a.3 <= b.2 / b.3 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().expect("two blocks") = (a.0, b.1, a.2 + b.2, a.3 + b.3);
        }
    }
    let mut steps = Vec::with_capacity(2 * blocks.len());
    for (first, last, w, n) in blocks {
        steps.push((first, w / n));
        if last > first {
            steps.push((last, w / n));
        }
    }
    steps
}

/// Piecewise-linear CDF through the fitted steps, pinned to 0 at `lo` and 1
/// at `hi`.
fn interpolate(steps: &[(f64, f64)], lo: f64, hi: f64, e: f64) -> f64 {
    let k = steps.partition_point(|s| s.0 <= e);
    let (x0, y0) = if k == 0 { (lo, 0.0) } else { steps[k - 1] };
    let (x1, y1) = if k == steps.len() {
        (hi, 1.0)
    } else {
        steps[k]
    };
    if x1 > x0 {
        y0 + (y1 - y0) * (e - x0) / (x1 - x0)
    } else {
        y0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::winrate::FeatureVector;

    fn rec(bid: f64, won: bool) -> FeedbackRecord {
        FeedbackRecord {
            features: FeatureVector::empty(0),
            bid,
            value: 1.0,
            won,
            min_bid_to_win: None,
        }
    }

    #[test]
    fn edges_are_log_spaced() {
        let e = log_spaced_edges(0.01, 1.0, 2).unwrap();
        assert_eq!(e[0], 0.01);
        assert!((e[1] - 0.1).abs() < 1e-15);
        assert_eq!(e[2], 1.0);
        assert!(log_spaced_edges(0.0, 1.0, 5).is_err());
    }

    #[test]
    fn most_probable_is_bucket_midpoint() {
        let d =
            BucketedPriceDistribution::new(vec![0.2, 0.4, 0.6, 0.8], vec![0.1, 0.8, 0.1]).unwrap();
        assert!((d.most_probable_price() - 0.5).abs() < 1e-15);
        let flat = BucketedPriceDistribution::new(vec![0.2, 0.4, 0.6], vec![0.5, 0.5]).unwrap();
        assert!((flat.most_probable_price() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn one_sided_data_falls_back_to_flat() {
        let recs: Vec<_> = (1..20).map(|i| rec(i as f64 * 0.05, true)).collect();
        let edges = log_spaced_edges(0.01, 1.0, 10).unwrap();
        let d = fit_censored_distribution(&recs, &edges).unwrap();
        assert!(d.is_fallback());
        assert!(d.pmf().iter().all(|&p| (p - 0.1).abs() < 1e-15));
        assert!(fit_censored_distribution(&[], &edges).is_err());
    }

    #[test]
    fn step_landscape_concentrates_mass() {
        // Wins exactly when the bid clears 0.3, bids on a fine grid.
        let recs: Vec<_> = (1..1000)
            .map(|i| {
                let b = i as f64 / 1000.0;
                rec(b, b > 0.3)
            })
            .collect();
        let edges = vec![0.001, 0.2, 0.4, 0.6, 1.0];
        let d = fit_censored_distribution(&recs, &edges).unwrap();
        assert!(d.pmf()[1] > 0.9, "pmf {:?}", d.pmf());
        assert!((d.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_distribution_rejected() {
        assert!(BucketedPriceDistribution::new(vec![0.1, 0.2], vec![0.9]).is_err());
        assert!(BucketedPriceDistribution::new(vec![0.2, 0.1], vec![1.0]).is_err());
        assert!(BucketedPriceDistribution::new(vec![0.1, 0.2, 0.3], vec![1.2, -0.2]).is_err());
    }
}
