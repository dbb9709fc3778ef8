//! Policy metrics over simulated auctions and cross-policy comparison.
//!
//! Money is accumulated as integer nano-units so the identity
//! `surplus + spend = value won` holds exactly, and decile rows add up to the
//! headline row exactly.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::landscape::{FeedbackRecord, LandscapeSpec};

/// `pct_of_optimal` above this is flagged as suspicious.
pub const OPTIMAL_FLAG_THRESHOLD: f64 = 1.02;
pub const DEFAULT_ORACLE_GRID: usize = 1000;
const NANOS: f64 = 1e9;
const DECILES: usize = 10;

/// Fixed-point amount in units of 10⁻⁹.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i128);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_f64(x: f64) -> Money {
        Money((x * NANOS).round() as i128)
    }

    pub fn nanos(self) -> i128 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / NANOS
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:09}", a / 1_000_000_000, a % 1_000_000_000)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Money::from_f64)
    }
}

/// Counts and money totals for a set of auctions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub n_bids: u64,
    pub n_wins: u64,
    pub surplus: Money,
    pub spend: Money,
    pub value_won: Money,
}

impl Totals {
    fn add_record(&mut self, r: &FeedbackRecord) {
        self.n_bids += 1;
        if r.won {
            let v = Money::from_f64(r.value);
            let b = Money::from_f64(r.bid);
            self.n_wins += 1;
            self.spend += b;
            self.surplus += v - b;
            self.value_won += v;
        }
    }

    fn merge(&mut self, o: &Totals) {
        self.n_bids += o.n_bids;
        self.n_wins += o.n_wins;
        self.surplus += o.surplus;
        self.spend += o.spend;
        self.value_won += o.value_won;
    }

    pub fn win_rate(&self) -> f64 {
        if self.n_bids == 0 {
            0.0
        } else {
            self.n_wins as f64 / self.n_bids as f64
        }
    }

    /// Spend per thousand won impressions; zero without wins.
    pub fn ecpm(&self) -> f64 {
        if self.n_wins == 0 {
            0.0
        } else {
            1000.0 * self.spend.to_f64() / self.n_wins as f64
        }
    }

    pub fn avg_spend_per_bid(&self) -> f64 {
        if self.n_bids == 0 {
            0.0
        } else {
            self.spend.to_f64() / self.n_bids as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecileRow {
    pub decile: usize,
    pub value_low: f64,
    pub value_high: f64,
    #[serde(flatten)]
    pub totals: Totals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub totals: Totals,
    pub win_rate: f64,
    pub ecpm: f64,
    pub avg_spend_per_bid: f64,
    /// Standard error of the mean per-bid surplus.
    pub surplus_std_error: f64,
    pub pct_of_optimal: Option<f64>,
    /// Set when `pct_of_optimal` exceeds [`OPTIMAL_FLAG_THRESHOLD`].
    pub optimal_flag: bool,
    /// Breakdown by value decile (ranked by value, then bid, then outcome).
    pub per_value_decile: Vec<DecileRow>,
}

impl MetricsReport {
    pub fn surplus(&self) -> Money {
        self.totals.surplus
    }

    pub fn spend(&self) -> Money {
        self.totals.spend
    }

    pub fn with_pct_of_optimal(mut self, pct: Option<f64>) -> Self {
        self.pct_of_optimal = pct;
        self.optimal_flag = pct.is_some_and(|p| p > OPTIMAL_FLAG_THRESHOLD);
        self
    }
}

fn record_order(a: &FeedbackRecord, b: &FeedbackRecord) -> std::cmp::Ordering {
    a.value
        .total_cmp(&b.value)
        .then(a.bid.total_cmp(&b.bid))
        .then(a.won.cmp(&b.won))
}

pub fn score(records: &[FeedbackRecord]) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::DegenerateData("no auctions to score".into()));
    }
    let mut sorted: Vec<&FeedbackRecord> = records.iter().collect();
    sorted.sort_by(|a, b| record_order(a, b));

    let n = sorted.len();
    let mut per_value_decile = Vec::with_capacity(DECILES);
    let mut totals = Totals::default();
    for d in 0..DECILES {
        let (lo, hi) = (d * n / DECILES, (d + 1) * n / DECILES);
        if lo == hi {
            continue;
        }
        let mut t = Totals::default();
        for r in &sorted[lo..hi] {
            t.add_record(r);
        }
        totals.merge(&t);
        per_value_decile.push(DecileRow {
            decile: d,
            value_low: sorted[lo].value,
            value_high: sorted[hi - 1].value,
            totals: t,
        });
    }

    // Moments of the per-bid surplus, summed in sorted order so the result
    // does not depend on input order.
    let per_bid = |r: &&FeedbackRecord| {
        if r.won {
            (Money::from_f64(r.value) - Money::from_f64(r.bid)).to_f64()
        } else {
            0.0
        }
    };
    let mean = totals.surplus.to_f64() / n as f64;
    let ss: f64 = sorted.iter().map(|r| (per_bid(r) - mean).powi(2)).sum();
    let surplus_std_error = if n > 1 {
        (ss / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };

    Ok(MetricsReport {
        win_rate: totals.win_rate(),
        ecpm: totals.ecpm(),
        avg_spend_per_bid: totals.avg_spend_per_bid(),
        totals,
        surplus_std_error,
        pct_of_optimal: None,
        optimal_flag: false,
        per_value_decile,
    })
}

/// Sum over records of the ground-truth optimal expected surplus.
pub fn potential_surplus(
    records: &[FeedbackRecord],
    spec: &LandscapeSpec,
    grid_n: usize,
    exec: Exec,
) -> Result<f64> {
    let parts: Vec<Result<f64>> = exec.map_slice(records, |r| {
        spec.oracle_optimal_bid(&r.features, r.value, grid_n)
            .map(|(_, s)| s)
    });
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total)
}

/// Realised surplus over the expected surplus the ground-truth oracle would
/// earn on the same requests. `None` when that potential is zero.
pub fn pct_of_optimal(
    records: &[FeedbackRecord],
    spec: &LandscapeSpec,
    grid_n: usize,
    exec: Exec,
) -> Result<Option<f64>> {
    let report = score(records)?;
    let potential = potential_surplus(records, spec, grid_n, exec)?;
    Ok((potential > 0.0).then(|| report.surplus().to_f64() / potential))
}

pub const COMPARED_METRICS: [&str; 8] = [
    "surplus",
    "spend",
    "n_wins",
    "win_rate",
    "ecpm",
    "avg_spend_per_bid",
    "surplus_std_error",
    "pct_of_optimal",
];

fn metric(report: &MetricsReport, name: &str) -> Option<f64> {
    Some(match name {
        "surplus" => report.totals.surplus.to_f64(),
        "spend" => report.totals.spend.to_f64(),
        "n_wins" => report.totals.n_wins as f64,
        "win_rate" => report.win_rate,
        "ecpm" => report.ecpm,
        "avg_spend_per_bid" => report.avg_spend_per_bid,
        "surplus_std_error" => report.surplus_std_error,
        "pct_of_optimal" => return report.pct_of_optimal,
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub value: Option<f64>,
    /// Percent change against the baseline; absent when the baseline is zero
    /// or either side is missing.
    pub delta_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub cells: BTreeMap<String, ComparisonCell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub metrics: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare(reports: &BTreeMap<String, MetricsReport>, baseline: &str) -> Result<Comparison> {
    let base = reports.get(baseline).ok_or_else(|| {
        Error::config(
            "baseline",
            format!("`{baseline}` is not among the evaluated policies"),
        )
    })?;
    let rows = reports
        .iter()
        .map(|(name, report)| {
            let cells = COMPARED_METRICS
                .iter()
                .map(|&m| {
                    let value = metric(report, m);
                    let delta_pct = match (value, metric(base, m)) {
                        (Some(x), Some(b)) if b != 0.0 => Some(100.0 * (x - b) / b.abs()),
                        _ => None,
                    };
                    (m.to_string(), ComparisonCell { value, delta_pct })
                })
                .collect();
            ComparisonRow {
                policy: name.clone(),
                cells,
            }
        })
        .collect();
    Ok(Comparison {
        baseline: baseline.to_string(),
        metrics: COMPARED_METRICS.iter().map(|m| m.to_string()).collect(),
        rows,
    })
}

fn cell_text(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn delta_text(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:+.2}%"))
}

impl Comparison {
    /// Fixed-width table, one row per policy.
    pub fn to_table(&self) -> String {
        let mut header = vec!["policy".to_string()];
        for m in &self.metrics {
            header.push(m.clone());
            header.push("Δ%".to_string());
        }
        let mut lines = vec![header];
        for row in &self.rows {
            let mut line = vec![row.policy.clone()];
            for m in &self.metrics {
                let c = &row.cells[m];
                line.push(cell_text(c.value));
                line.push(delta_text(c.delta_pct));
            }
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|j| {
                lines
                    .iter()
                    .map(|l| l[j].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!("baseline: {}\n", self.baseline);
        for l in &lines {
            let cols: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (s, w))| {
                    if j == 0 {
                        format!("{s:<w$}")
                    } else {
                        format!("{s:>w$}")
                    }
                })
                .collect();
            out.push_str(cols.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,metric,value,delta_pct\n");
        for row in &self.rows {
            for m in &self.metrics {
                let c = &row.cells[m];
                let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    row.policy,
                    m,
                    opt(c.value),
                    opt(c.delta_pct)
                );
            }
        }
        out
    }
}

/// Flat per-policy metrics table, one row per policy and value decile; the
/// `all` rows carry the headline totals.
pub fn reports_to_csv(reports: &BTreeMap<String, MetricsReport>) -> String {
    let mut out = String::from(
        "policy,decile,value_low,value_high,n_bids,n_wins,surplus,spend,value_won,win_rate,ecpm,avg_spend_per_bid,surplus_std_error,pct_of_optimal\n",
    );
    for (name, r) in reports {
        let t = &r.totals;
        let pct = r.pct_of_optimal.map_or_else(String::new, |p| p.to_string());
        let _ = writeln!(
            out,
            "{name},all,,,{},{},{},{},{},{},{},{},{},{pct}",
            t.n_bids,
            t.n_wins,
            t.surplus,
            t.spend,
            t.value_won,
            r.win_rate,
            r.ecpm,
            r.avg_spend_per_bid,
            r.surplus_std_error
        );
        for d in &r.per_value_decile {
            let t = &d.totals;
            let _ = writeln!(
                out,
                "{name},{},{},{},{},{},{},{},{},{},{},{},,",
                d.decile,
                d.value_low,
                d.value_high,
                t.n_bids,
                t.n_wins,
                t.surplus,
                t.spend,
                t.value_won,
                t.win_rate(),
                t.ecpm(),
                t.avg_spend_per_bid()
            );
        }
    }
    out
}
