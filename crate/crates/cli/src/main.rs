use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use interaction_eval::pipeline::{
    run_baseline, run_filter, run_fixture_report, run_pipeline, run_rollout, PipelineError, PredictionSource,
    RunOptions, DEFAULT_CURVE_BIN,
};
use interaction_eval::types::{EvalConfig, MissingAgentPolicy};

const JOBS_ENV: &str = "INTERACTION_EVAL_JOBS";

/// Interaction-mode evaluation of joint trajectory predictions.
#[derive(Debug, Parser)]
#[command(name = "interaction-eval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Screen agent pairs for shared paths and write the critical pairs.
    Filter(StageArgs),
    /// Roll out braking/accelerating futures and write feasible modes per frame.
    Rollout(StageArgs),
    /// Write baseline prediction files for every scene.
    Baseline(BaselineArgs),
    /// Score predictions against the feasible interaction modes.
    Eval(EvalArgs),
    /// Score pre-computed per-frame mode tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Directory of scene JSON files.
    #[arg(long)]
    scenes: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Worker threads. INTERACTION_EVAL_JOBS takes precedence when set.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct StageArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    Cv,
    Oracle,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    model: Model,
    /// Number of oracle samples.
    #[arg(long, default_value_t = 5)]
    k: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Missing {
    Error,
    StaticGroundTruth,
    Skip,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of prediction files named `<scene_id>.json`.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    predictions: Option<PathBuf>,
    /// Evaluate a built-in baseline instead of prediction files.
    #[arg(long, value_enum)]
    baseline: Option<Model>,
    /// Number of oracle samples.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, value_enum, default_value = "error")]
    missing_agent: Missing,
    /// Bin width of the rate curves, s.
    #[arg(long, default_value_t = DEFAULT_CURVE_BIN)]
    curve_bin: f64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Mode table CSV with columns frame,gt_mode,ml_mode,pred_modes,feasible_modes.
    #[arg(long = "mode-table", required = true)]
    mode_tables: Vec<PathBuf>,
    /// Frame period of the tables, s.
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Path-sharing distance threshold, m.
    #[arg(long, default_value_t = 1.5)]
    d_collision: f64,
    /// Largest gap between path-sharing onsets, s.
    #[arg(long, default_value_t = 6.0)]
    dt_ps_max: f64,
    /// Longitudinal acceleration limit, m/s².
    #[arg(long, default_value_t = 1.47)]
    a_lon_max: f64,
    /// Lateral acceleration limit, m/s².
    #[arg(long, default_value_t = 1.18)]
    a_lat_max: f64,
    /// Prediction horizon, s.
    #[arg(long, default_value_t = 6.0)]
    horizon: f64,
    /// Static-class half width, rad.
    #[arg(long, default_value_t = 0.0)]
    theta_hat: f64,
    #[arg(long, default_value_t = 4)]
    interp_factor: usize,
    /// Path sharing must start after this time, s. Defaults to the first co-observed time.
    #[arg(long)]
    t_min: Option<f64>,
}

impl ConfigArgs {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            d_collision: self.d_collision,
            dt_ps_max: self.dt_ps_max,
            a_lon_max: self.a_lon_max,
            a_lat_max: self.a_lat_max,
            horizon: self.horizon,
            theta_hat: self.theta_hat,
            interp_factor: self.interp_factor,
            t_min: self.t_min,
        }
    }
}

fn jobs(flag: Option<usize>) -> Result<Option<usize>, PipelineError> {
    match std::env::var(JOBS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| PipelineError::Config(format!("{JOBS_ENV} must be a positive integer, got {v:?}"))),
        _ => Ok(flag),
    }
}

fn source(model: Model, k: usize) -> PredictionSource {
    match model {
        Model::Cv => PredictionSource::ConstantVelocity,
        Model::Oracle => PredictionSource::Oracle { k },
    }
}

fn run(cli: Cli) -> Result<String, PipelineError> {
    match cli.command {
        Command::Filter(StageArgs { common }) => {
            let screened = run_filter(&common.scenes, &common.out, &common.config.config(), jobs(common.jobs)?)?;
            let pairs: usize = screened.iter().map(|(_, s)| s.len()).sum();
            let critical: usize = screened
                .iter()
                .map(|(_, s)| s.iter().filter(|p| p.critical().is_some()).count())
                .sum();
            Ok(format!("{} scenes, {pairs} pairs screened, {critical} critical", screened.len()))
        }
        Command::Rollout(StageArgs { common }) => {
            let n = run_rollout(&common.scenes, &common.out, &common.config.config(), jobs(common.jobs)?)?;
            Ok(format!("{n} critical pairs rolled out"))
        }
        Command::Baseline(args) => {
            let c = &args.common;
            let n = run_baseline(&c.scenes, &source(args.model, args.k), &c.out, &c.config.config(), jobs(c.jobs)?)?;
            Ok(format!("{n} prediction files written to {}", c.out.display()))
        }
        Command::Eval(args) => {
            let c = args.common;
            let predictions = match (args.predictions, args.baseline) {
                (Some(dir), _) => PredictionSource::Directory(dir),
                (None, Some(model)) => source(model, args.k),
                (None, None) => return Err(PipelineError::Config("--predictions or --baseline is required".into())),
            };
            let mut opts = RunOptions::new(c.scenes, predictions, c.out);
            opts.cfg = c.config.config();
            opts.jobs = jobs(c.jobs)?;
            opts.curve_bin = args.curve_bin;
            opts.missing = match args.missing_agent {
                Missing::Error => MissingAgentPolicy::Error,
                Missing::StaticGroundTruth => MissingAgentPolicy::StaticGroundTruth,
                Missing::Skip => MissingAgentPolicy::Skip,
            };
            let result = run_pipeline(&opts)?;
            Ok(serde_json::to_string_pretty(&result.report).expect("serializable"))
        }
        Command::Report(args) => {
            let report = run_fixture_report(&args.mode_tables, args.dt, &args.out, &args.config.config())?;
            Ok(serde_json::to_string_pretty(&report).expect("serializable"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.summary_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
