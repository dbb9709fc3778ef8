//! Acceptance criteria 1-10. Runs as a plain binary so every criterion prints
//! one PASS/FAIL line; exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::panic;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bidshade::exec::Exec;
use bidshade::experiment::{Evaluation, ExperimentConfig, PolicyEntry};
use bidshade::landscape::FeedbackRecord;
use bidshade::policy::POLICY_NAMES;
use bidshade::shading::{
    grid_maximize, uniform_closed_form, SurplusProblem, DEFAULT_MAX_STEPS, DEFAULT_RELATIVE_EPSILON,
};
use bidshade::winrate::{train_with, FeatureVector, LogisticObjective, TrainingConfig};

// Pinned tolerances and sizes.
const RANDOM_PROBLEMS: usize = 1000;
const BRACKET_GRID: usize = 100_000;
const BRACKET_SECONDS: f64 = 60.0;
const ANALYTIC_TOL: f64 = 1e-5;
const TIGHT_RELATIVE_EPSILON: f64 = 1e-9;
const TIGHT_MAX_STEPS: usize = 500;
const MEDIAN_ITERATIONS: f64 = 10.0;
const TERMINATION_EPSILON: f64 = 1e-8;
const UNIFORM_TRIPLES: usize = 100;
const UNIFORM_GRID: usize = 1_000_000;
const RECOVERY_RECORDS: usize = 100_000;
const RECOVERY_TOL: f64 = 0.1;
const CALIBRATION_TOL: f64 = 0.03;
const CALIBRATION_BUCKETS: usize = 10;
const RECOVERY_SECONDS: f64 = 120.0;
const DOMINANCE_SIGMAS: f64 = 3.0;
const EVAL_AUCTIONS: usize = 100_000;
const ORACLE_BAND: f64 = 0.02;
const POLICY_CEILING: f64 = 1.02;
const GRADIENT_POINTS: usize = 20;
const GRADIENT_STEP: f64 = 1e-6;
const GRADIENT_TOL: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// Independent references.

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logistic_surplus(alpha: f64, beta: f64, v: f64, b: f64) -> f64 {
    (v - b) * sigmoid(alpha + beta * b.ln())
}

/// Grid argmax over `b = V·i/n`, lowest index on ties.
fn grid_argmax(v: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (mut best_b, mut best_f) = (f64::NAN, f64::NEG_INFINITY);
    for i in 1..=n {
        let b = v * i as f64 / n as f64;
        let y = f(b);
        if y > best_f {
            best_f = y;
            best_b = b;
        }
    }
    best_b
}

fn random_problems() -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_190_101);
    (0..RANDOM_PROBLEMS)
        .map(|_| {
            let alpha = rng.random_range(-5.0..=5.0);
            let beta = 5.0 * (1.0 - rng.random::<f64>());
            let v = 10.0 * (1.0 - rng.random::<f64>());
            (alpha, beta, v)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut violations = 0;
    let mut strict_misses = 0;
    for (alpha, beta, v) in random_problems() {
        let p = SurplusProblem::with_defaults(alpha, beta, v).unwrap();
        let (lo, hi) = p.bid_bounds();
        let g = grid_argmax(v, BRACKET_GRID, |b| logistic_surplus(alpha, beta, v, b));
        let step = v / BRACKET_GRID as f64;
        if !(lo <= g && g < hi) {
            strict_misses += 1;
        }
        // The grid argmax sits within one spacing of the true maximiser.
        if !(lo - step <= g && g < hi + step) {
            violations += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        violations == 0 && secs < BRACKET_SECONDS,
        format!(
            "{violations} violations over {RANDOM_PROBLEMS} problems ({strict_misses} grid points just outside by < 1 spacing), {secs:.1}s"
        ),
    )
}

fn cardano_beta2() -> f64 {
    // b³ + 3b − 2 = 0
    let s = 2f64.sqrt();
    (1.0 + s).cbrt() + (1.0 - s).cbrt()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let tight = |alpha: f64, beta: f64, v: f64| {
        SurplusProblem::new(alpha, beta, v, TIGHT_RELATIVE_EPSILON * v, TIGHT_MAX_STEPS)
            .unwrap()
            .maximize()
    };
    let e1 = (tight(0.0, 1.0, 1.0).bid - (2f64.sqrt() - 1.0)).abs();
    let e2 = (tight(0.0, 2.0, 1.0).bid - cardano_beta2()).abs();
    let d1 = (SurplusProblem::with_defaults(0.0, 1.0, 1.0)
        .unwrap()
        .maximize()
        .bid
        - (2f64.sqrt() - 1.0))
        .abs();
    let d2 = (SurplusProblem::with_defaults(0.0, 2.0, 1.0)
        .unwrap()
        .maximize()
        .bid
        - cardano_beta2())
    .abs();

    let mut mismatches = 0;
    let mut worst_steps: f64 = 0.0;
    for (alpha, beta, v) in random_problems() {
        let d = tight(alpha, beta, v);
        let (g, _) = grid_maximize(|b| sigmoid(alpha + beta * b.ln()), v, BRACKET_GRID).unwrap();
        let step = v / BRACKET_GRID as f64;
        let gap = (d.bid - g).abs() / step;
        worst_steps = worst_steps.max(gap);
        if gap > 1.0 {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        e1 <= ANALYTIC_TOL && e2 <= ANALYTIC_TOL && mismatches == 0 && secs < BRACKET_SECONDS,
        format!(
            "|Δb| β=1 {e1:.1e}, β=2 {e2:.1e} (default ε: {d1:.1e}, {d2:.1e}); grid mismatches {mismatches}/{RANDOM_PROBLEMS}, worst {worst_steps:.2} steps, {secs:.1}s"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut iterations = Vec::new();
    let (mut clamped, mut total, mut touched, mut unconverged) = (0, 0, 0, 0);
    for (alpha, beta, v) in random_problems() {
        let d = SurplusProblem::new(
            alpha,
            beta,
            v,
            DEFAULT_RELATIVE_EPSILON * v,
            DEFAULT_MAX_STEPS,
        )
        .unwrap()
        .maximize();
        iterations.push(d.iterations);
        clamped += d.clamped_steps;
        total += d.iterations;
        touched += usize::from(d.clamped_steps > 0);
        unconverged += usize::from(!d.converged);
    }
    iterations.sort_unstable();
    let n = iterations.len();
    let median = if n % 2 == 1 {
        iterations[n / 2] as f64
    } else {
        0.5 * (iterations[n / 2 - 1] + iterations[n / 2]) as f64
    };
    let max = iterations[n - 1];
    let mut tight_max = 0;
    let mut tight_unconverged = 0;
    for (alpha, beta, v) in random_problems() {
        let d = SurplusProblem::new(alpha, beta, v, TERMINATION_EPSILON * v, DEFAULT_MAX_STEPS)
            .unwrap()
            .maximize();
        tight_max = tight_max.max(d.iterations);
        tight_unconverged += usize::from(!d.converged);
    }
    outcome(
        median <= MEDIAN_ITERATIONS && unconverged == 0 && tight_unconverged == 0,
        format!(
            "median {median} iterations, max {max}, ratio clamped on {:.1}% of steps ({touched}/{n} problems), {unconverged} hit the step cap; at ε=1e-8·V max {tight_max}, {tight_unconverged} unterminated",
            100.0 * clamped as f64 / total as f64
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    let mut shifted = 0;
    let mut corner = 0;
    for k in 0..UNIFORM_TRIPLES {
        let v = 10.0 * (1.0 - rng.random::<f64>());
        let b0 = if k % 4 == 0 {
            0.0
        } else {
            rng.random_range(0.0..0.8 * v)
        };
        let b1 = b0 + rng.random_range(0.05..2.0) * v;
        shifted += usize::from(b0 > 0.0);
        corner += usize::from(v > 2.0 * b1 - b0);
        let (cf, _) = uniform_closed_form(v, b0, b1).unwrap();
        let g = grid_argmax(v, UNIFORM_GRID, |b| {
            (v - b) * ((b - b0) / (b1 - b0)).clamp(0.0, 1.0)
        });
        if (cf - g).abs() > v / UNIFORM_GRID as f64 {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{failures}/{UNIFORM_TRIPLES} off by more than one grid step ({shifted} with b0 > 0, {corner} at the upper corner)"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (w0, beta, w) = (0.3, 2.0, [0.5, -0.4]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let records: Vec<FeedbackRecord> = (0..RECOVERY_RECORDS)
        .map(|_| {
            let mut entries = Vec::new();
            for (j, _) in w.iter().enumerate() {
                if rng.random::<bool>() {
                    entries.push((j as u32, 1.0));
                }
            }
            let features = FeatureVector::new(entries, w.len()).unwrap();
            let z: f64 = rng.random_range(-1.5..1.5);
            let bid = z.exp();
            let p = sigmoid(w0 + features.dot(&w) + beta * bid.ln());
            FeedbackRecord {
                features,
                bid,
                value: 2.0 * bid,
                won: rng.random::<f64>() < p,
                min_bid_to_win: None,
            }
        })
        .collect();
    let fit = train_with(&records, &TrainingConfig::default(), Exec::default()).unwrap();
    let m = &fit.model;
    let raw_w0 = m.w0() - m.beta() * m.currency_scale().ln();

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].bid.total_cmp(&records[b].bid));
    let mut worst: f64 = 0.0;
    for chunk in order.chunks(records.len() / CALIBRATION_BUCKETS) {
        let predicted: f64 = chunk
            .iter()
            .map(|&i| {
                m.predict_win_rate(&records[i].features, records[i].bid)
                    .unwrap()
            })
            .sum::<f64>()
            / chunk.len() as f64;
        let observed =
            chunk.iter().filter(|&&i| records[i].won).count() as f64 / chunk.len() as f64;
        worst = worst.max((predicted - observed).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = (raw_w0 - w0).abs() <= RECOVERY_TOL
        && (m.beta() - beta).abs() <= RECOVERY_TOL
        && m.beta() > 0.0
        && worst <= CALIBRATION_TOL
        && secs < RECOVERY_SECONDS;
    outcome(
        pass,
        format!(
            "w0 {raw_w0:.4} (true {w0}), beta {:.4} (true {beta}), worst bucket calibration gap {worst:.4}, {} epochs, {secs:.1}s",
            m.beta(),
            fit.epochs_run
        ),
    )
}

fn evaluation() -> &'static (ExperimentConfig, Evaluation) {
    static EVAL: OnceLock<(ExperimentConfig, Evaluation)> = OnceLock::new();
    EVAL.get_or_init(|| {
        let config = ExperimentConfig {
            seed: 2019,
            n_eval: EVAL_AUCTIONS,
            policies: POLICY_NAMES.iter().map(|n| PolicyEntry::new(n)).collect(),
            baseline: Some("mpp".into()),
            ..ExperimentConfig::default()
        };
        let evaluation = config.evaluate(Exec::default()).unwrap();
        (config, evaluation)
    })
}

fn per_auction_surplus(records: &[FeedbackRecord]) -> Vec<f64> {
    records
        .iter()
        .map(|r| if r.won { r.value - r.bid } else { 0.0 })
        .collect()
}

fn criterion_6() -> Outcome {
    let (_, eval) = evaluation();
    let wr = per_auction_surplus(&eval.outcomes["wr"].records);
    let mpp = per_auction_surplus(&eval.outcomes["mpp"].records);
    assert_eq!(wr.len(), EVAL_AUCTIONS);
    assert_eq!(mpp.len(), EVAL_AUCTIONS);
    let n = wr.len() as f64;
    let diffs: Vec<f64> = wr.iter().zip(&mpp).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se_total = (var / n).sqrt() * n;
    let margin = mean * n;
    let total_mpp: f64 = mpp.iter().sum();
    outcome(
        margin > DOMINANCE_SIGMAS * se_total,
        format!(
            "wr − mpp surplus {margin:.2} = {:.1} paired SE ({:+.2}% over mpp)",
            margin / se_total,
            100.0 * margin / total_mpp
        ),
    )
}

fn criterion_7() -> Outcome {
    let (_, eval) = evaluation();
    let mut broken = Vec::new();
    for (label, outcome) in &eval.report.policies {
        let r = &outcome.metrics;
        let t = &r.totals;
        let identity = t.surplus + t.spend == t.value_won;
        let mut sum = (0u64, 0u64, 0i128, 0i128, 0i128);
        for d in &r.per_value_decile {
            sum.0 += d.totals.n_bids;
            sum.1 += d.totals.n_wins;
            sum.2 += d.totals.surplus.nanos();
            sum.3 += d.totals.spend.nanos();
            sum.4 += d.totals.value_won.nanos();
        }
        let deciles = sum
            == (
                t.n_bids,
                t.n_wins,
                t.surplus.nanos(),
                t.spend.nanos(),
                t.value_won.nanos(),
            );
        let rate = r.win_rate == t.n_wins as f64 / t.n_bids as f64;
        if !(identity && deciles && rate) {
            broken.push(label.clone());
        }
    }
    outcome(
        broken.is_empty(),
        format!(
            "{} reports checked, broken: {broken:?}",
            eval.report.policies.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let (_, eval) = evaluation();
    let pct: BTreeMap<&str, f64> = eval
        .report
        .policies
        .iter()
        .map(|(k, v)| (k.as_str(), v.metrics.pct_of_optimal.unwrap_or(f64::NAN)))
        .collect();
    let oracle = pct["oracle"];
    let ceiling_ok = pct.values().all(|&p| p <= POLICY_CEILING);
    let listing: Vec<String> = pct.iter().map(|(k, v)| format!("{k} {v:.3}")).collect();
    outcome(
        (oracle - 1.0).abs() <= ORACLE_BAND && ceiling_ok,
        format!("oracle {oracle:.4}; {}", listing.join(", ")),
    )
}

const DETERMINISM_CONFIG: &str = r#"
seed = 9
n_train = 5000
n_eval = 20000
baseline = "mpp"

[landscape]
kind = "lognormal"
mu = -0.6
sigma = 0.5

[landscape.feature_shift]
0 = 0.3
2 = -0.3
8 = -0.15

[[policies]]
name = "wr"
[[policies]]
name = "mpp"
[[policies]]
name = "factor-lr"
[[policies]]
name = "segment-nl"
[[policies]]
name = "wr-maintainer"
[[policies]]
name = "point-est"
[[policies]]
name = "fixed"
[[policies]]
name = "oracle"
"#;

fn collect_files(dir: &Path, prefix: &str, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = format!("{prefix}{}", entry.file_name().to_string_lossy());
        if entry.file_type().unwrap().is_dir() {
            collect_files(&entry.path(), &format!("{name}/"), out);
        } else {
            out.insert(name, std::fs::read(entry.path()).unwrap());
        }
    }
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("experiment.toml");
    std::fs::write(&config, DETERMINISM_CONFIG).unwrap();
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let output = Command::new(env!("CARGO_BIN_EXE_bidshade"))
            .arg("evaluate")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
        let mut files = BTreeMap::new();
        collect_files(&out, "", &mut files);
        runs.push((output.stdout, files));
    }
    let same_stdout = runs[0].0 == runs[1].0;
    let same_files = runs[0].1 == runs[1].1;
    outcome(
        same_stdout && same_files && !runs[0].1.is_empty(),
        format!(
            "{} files compared, stdout identical: {same_stdout}, files identical: {same_files}",
            runs[0].1.len()
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let dim = 6;
    let records: Vec<FeedbackRecord> = (0..2000)
        .map(|_| {
            let mut entries = Vec::new();
            for j in 0..dim as u32 {
                if rng.random::<f64>() < 0.4 {
                    entries.push((j, rng.random_range(0.5..1.5)));
                }
            }
            let bid: f64 = rng.random_range(0.05..3.0);
            FeedbackRecord {
                features: FeatureVector::new(entries, dim).unwrap(),
                bid,
                value: 3.0,
                won: rng.random::<f64>() < sigmoid(bid.ln()),
                min_bid_to_win: None,
            }
        })
        .collect();
    let objective = LogisticObjective::for_feedback(&records, 0.05).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..GRADIENT_POINTS {
        let theta: Vec<f64> = (0..objective.n_params())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let analytic = objective.gradient(&theta, Exec::Sequential);
        let numeric: Vec<f64> = (0..theta.len())
            .map(|j| {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += GRADIENT_STEP;
                down[j] -= GRADIENT_STEP;
                (objective.loss(&up, Exec::Sequential) - objective.loss(&down, Exec::Sequential))
                    / (2.0 * GRADIENT_STEP)
            })
            .collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&analytic).max(norm(&numeric));
        worst = worst.max(rel);
    }
    outcome(
        worst < GRADIENT_TOL,
        format!("worst relative error {worst:.2e} over {GRADIENT_POINTS} points"),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("optimum bracketing", criterion_1),
        ("maximiser correctness", criterion_2),
        ("convergence speed", criterion_3),
        ("uniform closed form", criterion_4),
        ("parameter recovery", criterion_5),
        ("surplus dominance over mpp", criterion_6),
        ("metric identities", criterion_7),
        ("oracle ceiling", criterion_8),
        ("determinism", criterion_9),
        ("gradient check", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(run);
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match result {
            Ok(o) if o.pass => ("PASS", o.detail),
            Ok(o) => ("FAIL", o.detail),
            Err(e) => (
                "FAIL",
                e.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()),
            ),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {:>2} {name}: {status} ({detail}) [{secs:.1}s]",
            i + 1
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
