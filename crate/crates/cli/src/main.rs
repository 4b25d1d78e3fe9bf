use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neat_core::config::{parse_config_onto, ConfigError, RunConfig, Stage};
use neat_core::datasets;
use neat_core::pipeline::{runs_root, PipelineError, Run, StageStatus};
use neat_core::tabular::{TableError, TaskKind};
use neat_core::utility::{feature_importance, redundancy_utility, FeatureMatrix, UtilityConfig};

#[derive(Parser)]
#[command(name = "neat", version, about = "Unsupervised generative feature transformation")]
struct Cli {
    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore feature crosses and write the record file.
    Collect(RunArgs),
    /// Contrastive pre-training of the graph encoder.
    Pretrain(RunArgs),
    /// Joint fine-tuning of encoder, decoder and evaluator.
    Finetune(RunArgs),
    /// Gradient-ascent search and decoding of the transformed feature set.
    Transform(RunArgs),
    /// Downstream comparison of original and transformed features.
    Eval(RunArgs),
    /// All five stages in order.
    Pipeline(RunArgs),
    /// Score a dataset's original features with an unsupervised utility.
    Score(ScoreArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Builtin dataset (synthetic, wine, pima) or CSV path.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// `c` for classification, `r` for regression.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// full, no_pretrain, random_collector, redundancy_utility or worst_seeds.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Start from laptop-scale defaults instead of the full-scale ones.
    #[arg(long)]
    desk: bool,
    /// Re-run stages even when their artifacts are current.
    #[arg(long)]
    force: bool,
    /// Artifact root (overrides NEAT_RUNS_DIR).
    #[arg(long)]
    runs_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    data: String,
    #[arg(long, default_value = "target")]
    target: String,
    #[arg(long, default_value = "r")]
    task: String,
    #[arg(long, default_value = "mdcg", value_parser = ["mdcg", "redundancy"])]
    utility: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
}

enum Failure {
    Pipeline(PipelineError),
    Usage(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Pipeline(e.into())
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            // An unreadable dataset path is a configuration problem.
            Failure::Pipeline(PipelineError::Table(TableError::Io { .. })) => 2,
            Failure::Pipeline(e) => e.exit_code() as u8,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Pipeline(e) => e.to_string(),
        }
    }
}

fn build_config(a: &RunArgs) -> Result<RunConfig, Failure> {
    let base = if a.desk { RunConfig::desk() } else { RunConfig::default() };
    let text = match &a.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides: Vec<(String, String)> = Vec::new();
    let flags = [
        ("data", a.data.clone()),
        ("target", a.target.clone()),
        ("task", a.task.clone()),
        ("seed", a.seed.map(|v| v.to_string())),
        ("variant", a.variant.clone()),
        ("episodes", a.episodes.map(|v| v.to_string())),
        ("steps", a.steps.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            overrides.push((k.to_string(), v));
        }
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        overrides.push((k.to_string(), v.to_string()));
    }
    Ok(parse_config_onto(base, &text, &overrides)?)
}

fn report(stage: Stage, status: StageStatus) {
    let word = match status {
        StageStatus::Ran => "done",
        StageStatus::UpToDate => "up to date",
        StageStatus::Skipped => "skipped",
    };
    println!("{}: {word}", stage.name());
}

fn run_stages(a: &RunArgs, stages: &[Stage]) -> Result<(), Failure> {
    let cfg = build_config(a)?;
    let root = a.runs_dir.clone().unwrap_or_else(runs_root);
    let run = Run::open(cfg, &root, a.force)?;
    for &s in stages {
        report(s, run.run_stage(s)?);
    }
    println!("run directory: {}", run.dir.display());
    Ok(())
}

fn score(a: &ScoreArgs) -> Result<(), Failure> {
    let task = TaskKind::from_flag(&a.task).ok_or_else(|| Failure::Usage(format!("unknown task `{}`", a.task)))?;
    let table = datasets::resolve(&a.data, &a.target, task).map_err(PipelineError::from)?;
    if a.k == 0 || a.k >= table.n_rows() {
        return Err(Failure::Usage(format!("--k must lie in 1..{}", table.n_rows())));
    }
    let f = FeatureMatrix::from_table(&table);
    let cfg = UtilityConfig {
        k_neighbors: a.k,
        ..UtilityConfig::default()
    };
    if a.utility == "redundancy" {
        println!("redundancy\t{:?}", redundancy_utility(&f));
        return Ok(());
    }
    let imp = feature_importance(&f, &cfg);
    println!("mdcg\t{:?}", imp.iter().sum::<f64>() / imp.len() as f64);
    println!("feature\timportance");
    for (name, v) in table.column_names().iter().zip(&imp) {
        println!("{name}\t{v:?}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    let result = match &cli.command {
        Command::Collect(a) => run_stages(a, &[Stage::Collect]),
        Command::Pretrain(a) => run_stages(a, &[Stage::Pretrain]),
        Command::Finetune(a) => run_stages(a, &[Stage::Finetune]),
        Command::Transform(a) => run_stages(a, &[Stage::Transform]),
        Command::Eval(a) => run_stages(a, &[Stage::Eval]),
        Command::Pipeline(a) => run_stages(a, &Stage::ALL),
        Command::Score(a) => score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
