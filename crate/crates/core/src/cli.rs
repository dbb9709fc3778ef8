//! Command-line front end. [`run`] returns the process exit code:
//! 0 ok, 2 config or usage, 3 degenerate data, 4 format or version.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::evaluate::reports_to_csv;
use crate::exec::Exec;
use crate::experiment::ExperimentConfig;
use crate::io::{
    parse_feedback, parse_requests, read_text, write_atomic, write_decisions, write_feedback,
    write_requests,
};
use crate::policy::{
    train_policy_diagnosed, PolicyDocument, PolicyParams, TrainedPolicy, TrainingContext,
};

#[derive(Debug, Parser)]
#[command(
    name = "bidshade",
    version,
    about = "Surplus-maximising bid shading for first-price auctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate training and evaluation feedback from a landscape.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit one policy on a feedback file.
    Train {
        /// Feedback file to train on.
        feedback: PathBuf,
        #[arg(long)]
        policy: String,
        /// Where to write the model document.
        #[arg(long)]
        out: PathBuf,
        /// Experiment config supplying hyperparameters and, for `oracle`, the landscape.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Bid on a requests file with a trained model.
    Shade {
        model: PathBuf,
        requests: PathBuf,
        /// Decisions file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Simulate, train every configured policy, replay and compare.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Policy label to compare against.
        #[arg(long)]
        baseline: Option<String>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record the minimum bid to win in generated feedback.
    #[arg(long)]
    reveal_mbtw: bool,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    target_winrate: Option<f64>,
    #[arg(long)]
    factor: Option<f64>,
    /// Search tolerance as a fraction of the value.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate { run } => cmd_simulate(&run),
        Command::Train {
            feedback,
            policy,
            out,
            config,
            seed,
            overrides,
        } => cmd_train(
            &feedback,
            &policy,
            &out,
            config.as_deref(),
            seed,
            &overrides,
        ),
        Command::Shade {
            model,
            requests,
            out,
            epsilon,
            max_steps,
        } => cmd_shade(&model, &requests, out.as_deref(), epsilon, max_steps),
        Command::Evaluate { run, baseline } => cmd_evaluate(&run, baseline),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(&read_text(path)?)
}

fn config_for_run(run: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = load_config(&run.config)?;
    if let Some(s) = run.seed {
        config.seed = s;
    }
    if let Some(o) = &run.out {
        config.output_dir = o.clone();
    }
    if run.reveal_mbtw {
        config.reveal_mbtw = true;
    }
    Ok(config)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_simulate(run: &RunArgs) -> Result<()> {
    let config = config_for_run(run)?;
    let sim = config.simulate(Exec::default())?;
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let dim = sim.vocabulary.dim();
    let vocab = Some(&sim.vocabulary);
    write_atomic(
        &dir.join("train.feedback"),
        write_feedback(dim, vocab, &sim.train.records).as_bytes(),
    )?;
    write_atomic(
        &dir.join("eval.feedback"),
        write_feedback(dim, vocab, &sim.eval.records).as_bytes(),
    )?;
    write_atomic(
        &dir.join("train.requests"),
        write_requests(dim, &sim.train_requests).as_bytes(),
    )?;
    write_atomic(
        &dir.join("eval.requests"),
        write_requests(dim, &sim.eval_requests).as_bytes(),
    )?;
    for (name, batch) in [("train", &sim.train), ("eval", &sim.eval)] {
        let wins = batch.records.iter().filter(|r| r.won).count();
        println!(
            "{name}: {} records, {wins} wins, {} rejected",
            batch.records.len(),
            batch.rejected
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn apply_overrides(params: &mut PolicyParams, o: &Overrides) {
    if let Some(t) = o.target_winrate {
        params.target_win_rate = t;
    }
    if let Some(f) = o.factor {
        params.factor = f;
    }
    if let Some(e) = o.epsilon {
        params.shade.relative_epsilon = e;
    }
    if let Some(m) = o.max_steps {
        params.shade.max_steps = m;
    }
}

fn cmd_train(
    feedback: &Path,
    policy: &str,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    overrides: &Overrides,
) -> Result<()> {
    let config = config.map(load_config).transpose()?;
    let mut params = config
        .as_ref()
        .and_then(|c| c.policies.iter().find(|p| p.name == policy))
        .map(|p| p.params.clone())
        .unwrap_or_default();
    apply_overrides(&mut params, overrides);
    if let Some(s) = seed {
        params.training.seed = s;
    }
    let name = feedback.display().to_string();
    let file = parse_feedback(&read_text(feedback)?, &name)?;
    let ctx = TrainingContext {
        vocabulary: file.vocabulary.as_ref(),
        landscape: config.as_ref().map(|c| &c.landscape),
        exec: Exec::default(),
    };
    let (trained, diagnostics) = train_policy_diagnosed(policy, &file.records, &params, ctx)?;
    let doc = PolicyDocument::new(trained, file.vocabulary.clone());
    write_atomic(out, doc.to_json().as_bytes())?;

    println!("policy: {policy}");
    println!("records: {}", file.records.len());
    if let Some(l) = diagnostics.final_loss {
        println!("final_loss: {l:.6}");
    }
    if let Some(e) = diagnostics.epochs_run {
        println!("epochs: {e}");
    }
    if let TrainedPolicy::Wr { model, .. } | TrainedPolicy::WrMaintainer { model, .. } = &doc.policy
    {
        println!("w0: {:.6}", model.w0());
        println!("beta: {:.6}", model.beta());
        println!("currency_scale: {}", model.currency_scale());
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_shade(
    model: &Path,
    requests: &Path,
    out: Option<&Path>,
    epsilon: Option<f64>,
    max_steps: Option<usize>,
) -> Result<()> {
    let mut doc = PolicyDocument::from_json(&read_text(model)?, &model.display().to_string())?;
    if let TrainedPolicy::Wr { shade, .. } = &mut doc.policy {
        if let Some(e) = epsilon {
            shade.relative_epsilon = e;
        }
        if let Some(m) = max_steps {
            shade.max_steps = m;
        }
        shade.validate()?;
    }
    let requests = parse_requests(&read_text(requests)?, &requests.display().to_string())?;

    let start = Instant::now();
    let decisions: Vec<_> = Exec::default()
        .map_slice(&requests, |r| doc.policy.decide(r))
        .into_iter()
        .collect::<Result<_>>()?;
    let elapsed = start.elapsed().as_secs_f64();

    let text = write_decisions(&decisions);
    match out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }

    let mut iterations: Vec<usize> = decisions.iter().filter_map(|d| d.iterations).collect();
    iterations.sort_unstable();
    eprintln!("decisions: {}", decisions.len());
    if elapsed > 0.0 && !decisions.is_empty() {
        eprintln!(
            "throughput: {:.0} requests/s",
            decisions.len() as f64 / elapsed
        );
    }
    if let Some(max) = iterations.last() {
        eprintln!(
            "iterations: median {} max {}",
            iterations[iterations.len() / 2],
            max
        );
    }
    Ok(())
}

fn cmd_evaluate(run: &RunArgs, baseline: Option<String>) -> Result<()> {
    let mut config = config_for_run(run)?;
    if baseline.is_some() {
        config.baseline = baseline;
    }
    config.validate()?;
    let evaluation = config.evaluate(Exec::default())?;
    let dir = &config.output_dir;
    let models_dir = dir.join("models");
    prepare_dir(&models_dir)?;
    let report = &evaluation.report;
    write_atomic(&dir.join("report.json"), report.to_json().as_bytes())?;
    write_atomic(
        &dir.join("metrics.csv"),
        reports_to_csv(&report.metrics()).as_bytes(),
    )?;
    write_atomic(
        &dir.join("comparison.csv"),
        report.comparison.to_csv().as_bytes(),
    )?;
    let table = report.comparison.to_table();
    write_atomic(&dir.join("comparison.txt"), table.as_bytes())?;
    for (label, model) in &evaluation.models {
        let doc = PolicyDocument::new(model.clone(), Some(evaluation.vocabulary.clone()));
        write_atomic(
            &models_dir.join(format!("{label}.json")),
            doc.to_json().as_bytes(),
        )?;
    }
    print!("{table}");
    Ok(())
}
