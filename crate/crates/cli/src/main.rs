//! `ctf`: generate bundles, run baselines and the tuner, score submissions
//! and serve the referee.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a runtime
//! error. Data goes to standard output, diagnostics to standard error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use ctf_core::baselines::{run_all, write_submission, MethodConfig, ReservoirCache};
use ctf_core::bundle::{check_participant_dir, Bundle};
use ctf_core::io::{read_csv, read_matrix};
use ctf_core::matrix::TimeSeriesMatrix;
use ctf_core::referee::{self, leaderboard, BoardView, Ledger, Referee};
use ctf_core::splits::{make_splits, DatasetConfig, ParametricFamily, SplitSource};
use ctf_core::synth::Preset;
use ctf_core::tuner::{tune, Budget, HyperParamSpace, TuneOptions, TRIALS_FILE};
use ctf_core::ScoreId;

#[derive(Parser)]
#[command(name = "ctf", version, about = "Common task framework for wavefield forecasting")]
struct Cli {
    /// Emit exactly one JSON document on standard output.
    #[arg(long, global = true)]
    json: bool,

    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic referee bundle.
    Gen(GenArgs),
    /// Cut a bundle out of a source trajectory and a parametric family.
    Split(SplitArgs),
    /// Run a baseline on every task and write a submission.
    Baseline(BaselineArgs),
    /// Tune a method's hyperparameters for one task.
    Tune(TuneArgs),
    /// Score a submission against a referee bundle.
    Score(ScoreArgs),
    /// Print the leaderboard built from a score ledger.
    Board(BoardArgs),
    /// Serve the referee over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct BundleArg {
    /// Bundle directory.
    #[arg(long, env = "CTF_DATA_DIR")]
    bundle: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// swell-small, pulse-small or linear-small.
    #[arg(long)]
    preset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a participant copy without test matrices.
    #[arg(long)]
    participant_out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    /// Main trajectory (.ctfw or .csv).
    #[arg(long)]
    source: PathBuf,
    /// Parametric trajectories: three training, interpolation, extrapolation.
    #[arg(long, num_args = 1.., required = true)]
    family: Vec<PathBuf>,
    /// Parameter value of each family trajectory.
    #[arg(long, value_delimiter = ',', required = true)]
    params: Vec<f64>,
    /// Dataset config as JSON.
    #[arg(long, conflicts_with = "dataset")]
    config: Option<PathBuf>,
    /// Shipped dataset layout: global-wavefields, das or crustal.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    participant_out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    /// zeros, average, dmd, hodmd or esn with default hyperparameters.
    #[arg(long, required_unless_present = "config")]
    method: Option<String>,
    /// YAML method config; overrides --method.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    bundle: BundleArg,
    #[arg(long)]
    out: PathBuf,
    /// Reservoir seed for the esn method.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct TuneArgs {
    /// YAML search space.
    #[arg(long)]
    space: PathBuf,
    /// Score whose validation metric is optimized (E1..E12).
    #[arg(long)]
    task: ScoreId,
    #[command(flatten)]
    bundle: BundleArg,
    /// Directory for trials.jsonl and best.yaml.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    max_trials: usize,
    #[arg(long, default_value_t = 600.0)]
    max_seconds: f64,
    #[arg(long, default_value_t = 3)]
    rungs: usize,
    #[arg(long, default_value_t = 0.5)]
    keep_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    bundle: BundleArg,
    #[arg(long)]
    manifest: PathBuf,
    /// Append the result to this ledger.
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Timestamp recorded in the ledger (RFC 3339); defaults to now.
    #[arg(long)]
    submitted_at: Option<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct BoardArgs {
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long)]
    dataset: String,
    /// best or latest submission per method.
    #[arg(long, default_value = "best")]
    view: BoardView,
}

#[derive(Args)]
struct ServeArgs {
    /// Hidden bundle directory; repeat for several datasets.
    #[arg(long, required = true, num_args = 1..)]
    bundle: Vec<PathBuf>,
    /// Directory holding submitted prediction files.
    #[arg(long)]
    inbox: PathBuf,
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
}

type AppResult<T> = Result<T, Box<dyn std::error::Error>>;

/// What a command produced: a JSON document and its human rendering.
struct Output {
    json: Value,
    text: String,
}

impl Output {
    fn json_text(&self) -> String {
        match &self.json {
            Value::String(raw) => raw.clone(),
            other => other.to_string() + "\n",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Split(a) => split(a),
        Command::Baseline(a) => baseline(a),
        Command::Tune(a) => tune_cmd(a),
        Command::Score(a) => score(a),
        Command::Board(a) => board(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(out) => {
            if cli.json {
                print!("{}", out.json_text());
            } else {
                print!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn save_bundle(bundle: &Bundle, out: &Path, participant: Option<&Path>) -> AppResult<Output> {
    bundle.save(out)?;
    if let Some(p) = participant {
        bundle.save_participant(p)?;
        check_participant_dir(p)?;
    }
    let cfg = bundle.config();
    let shapes: BTreeMap<String, Value> = cfg
        .index_table
        .iter()
        .map(|(k, r)| {
            let (rows, cols) = cfg.shape_of(k).unwrap_or((r.len(), cfg.n));
            (k.clone(), json!({ "shape": [rows, cols], "start": r.start, "end": r.end }))
        })
        .collect();
    let mut text = format!("wrote bundle {} to {}\n", cfg.name, out.display());
    if let Some(p) = participant {
        text.push_str(&format!("wrote participant copy to {}\n", p.display()));
    }
    Ok(Output {
        json: json!({
            "dataset": cfg.name,
            "bundle": out,
            "participant": participant,
            "matrices": shapes,
        }),
        text,
    })
}

fn gen(a: GenArgs) -> AppResult<Output> {
    let preset: Preset = a.preset.parse()?;
    let bundle = preset.bundle(a.seed)?;
    save_bundle(&bundle, &a.out, a.participant_out.as_deref())
}

fn load_any(path: &Path) -> AppResult<TimeSeriesMatrix> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    Ok(if is_csv { read_csv(path)? } else { read_matrix(path)? })
}

fn split(a: SplitArgs) -> AppResult<Output> {
    let cfg = match (&a.config, &a.dataset) {
        (Some(path), _) => serde_json::from_str::<DatasetConfig>(&fs::read_to_string(path)?)?,
        (None, Some(name)) => DatasetConfig::shipped(name)
            .ok_or_else(|| format!("unknown dataset {name:?}"))?,
        (None, None) => return Err("one of --config or --dataset is required".into()),
    };
    if a.family.len() != a.params.len() {
        return Err(format!(
            "{} family trajectories but {} parameter values",
            a.family.len(),
            a.params.len()
        )
        .into());
    }
    ctf_core::synth::check_family_params(&a.params)?;
    let source = SplitSource {
        main: load_any(&a.source)?,
        family: Some(ParametricFamily {
            trajectories: a.family.iter().map(|p| load_any(p)).collect::<AppResult<Vec<_>>>()?,
            params: a.params.clone(),
        }),
    };
    let bundle = make_splits(&source, &cfg)?;
    save_bundle(&bundle, &a.out, a.participant_out.as_deref())
}

fn pool(workers: usize) -> AppResult<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?)
}

fn baseline(a: BaselineArgs) -> AppResult<Output> {
    let mut method = match (&a.config, &a.method) {
        (Some(path), _) => MethodConfig::from_yaml(&fs::read_to_string(path)?)?,
        (None, Some(name)) => MethodConfig::from_name(name)?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    if let (MethodConfig::Esn(c), Some(seed)) = (&mut method, a.seed) {
        c.seed = seed;
    }
    let label = match (&a.method, &method) {
        (Some(name), _) if a.config.is_none() => name.clone(),
        (_, m) => m.name().to_string(),
    };
    let bundle = Bundle::load_train_only(&a.bundle.bundle)?;
    let cache = ReservoirCache::default();
    let preds = pool(a.workers)?.install(|| run_all(&method, &bundle.train_view(), &cache));
    let manifest = write_submission(&a.out, bundle.name(), &label, &preds)?;
    let failures: BTreeMap<String, String> = preds
        .iter()
        .filter_map(|(k, p)| p.as_ref().err().map(|e| (k.name(), e.clone())))
        .collect();
    let mut text = format!(
        "wrote {} of 9 predictions for {} to {}\n",
        manifest.predictions.len(),
        label,
        a.out.display()
    );
    for (k, e) in &failures {
        text.push_str(&format!("  {k} failed: {e}\n"));
    }
    Ok(Output {
        json: json!({
            "dataset": bundle.name(),
            "method": label,
            "manifest": a.out.join(referee::MANIFEST_FILE),
            "predictions": manifest.predictions,
            "failures": failures,
        }),
        text,
    })
}

fn tune_cmd(a: TuneArgs) -> AppResult<Output> {
    let space = HyperParamSpace::from_yaml(&fs::read_to_string(&a.space)?)?;
    let bundle = Bundle::load_train_only(&a.bundle.bundle)?;
    let task = bundle.task(a.task)?;
    fs::create_dir_all(&a.out)?;
    let log = a.out.join(TRIALS_FILE);
    let budget = Budget {
        max_trials: a.max_trials,
        max_seconds: a.max_seconds,
        rungs: a.rungs,
        keep_fraction: a.keep_fraction,
    };
    let opts = TuneOptions {
        seed: a.seed,
        workers: a.workers,
        log: Some(&log),
    };
    let result = tune(&space, &task, &bundle.train_view(), &budget, &opts)?;
    let best_path = a.out.join("best.yaml");
    fs::write(&best_path, best_config_text(&result.best_config)?)?;
    let score = result.best.score.unwrap_or(f64::NAN);
    let text = format!(
        "best {} validation score {:.4} from trial {} ({} trainings)\nconfig written to {}\n",
        task.score_id,
        score,
        result.best.trial_id,
        result.trainings,
        best_path.display()
    );
    Ok(Output {
        json: json!({
            "task": task.score_id.name(),
            "best": result.best,
            "best_config": result.best_config,
            "trainings": result.trainings,
            "trials": log,
            "best_config_file": best_path,
        }),
        text,
    })
}

fn best_config_text(m: &MethodConfig) -> AppResult<String> {
    // JSON is valid YAML; keeps the CLI free of a YAML writer.
    Ok(serde_json::to_string_pretty(m)? + "\n")
}

fn score(a: ScoreArgs) -> AppResult<Output> {
    let sub = referee::ingest(&a.manifest, a.submitted_at.clone())?;
    let referee = Referee::open(&a.bundle.bundle)?;
    let report = match &a.ledger {
        Some(path) => {
            let ledger = Ledger::new(path);
            pool(a.workers)?.install(|| referee.score_and_record(&sub, &ledger))?.report
        }
        None => pool(a.workers)?.install(|| ctf_core::metrics::evaluate_submission(referee.bundle(), &sub))?,
    };
    let mut text = format!("{} / {}\n", report.dataset, report.method);
    for (id, v) in report.scores.iter() {
        text.push_str(&format!("{:<4}{v:>9.2}", id.name()));
        if let Some(reason) = report.failures.get(&id) {
            text.push_str(&format!("  ({reason})"));
        }
        text.push('\n');
    }
    text.push_str(&format!("AvgScore{:>9.2}\n", report.composite));
    // Splice the id into the report text to keep its float formatting.
    let body = report.to_json();
    let doc = format!("{{\"submission_id\":{},{}\n", Value::String(sub.id.clone()), &body[1..]);
    Ok(Output { json: Value::String(doc), text })
}

fn board(a: BoardArgs) -> AppResult<Output> {
    let entries = Ledger::new(&a.ledger).read()?;
    let b = leaderboard(&entries, &a.dataset, a.view);
    // Kept as a pre-rendered string so the bytes match the HTTP response.
    Ok(Output {
        json: Value::String(b.to_json()),
        text: b.to_text(),
    })
}

fn serve(a: ServeArgs) -> AppResult<Output> {
    fs::create_dir_all(&a.inbox)?;
    let state = referee::http::AppState::new(&a.inbox, Ledger::new(&a.ledger), &a.bundle)?;
    eprintln!("serving on http://{}", a.addr);
    referee::http::run(&a.addr, state)?;
    Ok(Output { json: json!({ "stopped": true }), text: String::new() })
}

