//! Command-line pipeline for building and validating steering vectors from
//! segmented reasoning traces and paragraph-aligned hidden states.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "steerkit",
    version,
    about = "Build and validate steering vectors from reasoning traces",
    propagate_version = true
)]
struct Cli {
    /// TOML settings file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split raw traces into labeled reasoning paragraphs.
    Segment(SegmentArgs),
    /// Score boundary stability from resampled continuations.
    ScoreStability(ScoreStabilityArgs),
    /// Construct a steering vector from segments and hidden states.
    Build(BuildArgs),
    /// Fit the content subspace from question-only hidden states.
    FitSubspace(FitSubspaceArgs),
    /// Train held-out probes on hidden states.
    Probe(ProbeArgs),
    /// Generate a synthetic dataset and run validation experiments.
    Simulate(SimulateArgs),
    /// Summarize traces as a CSV of text metrics.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
struct SegmentArgs {
    /// Raw traces, one JSON object per line.
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    /// Keyword lexicon TOML; defaults to the built-in cue set.
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Output segments file (JSON lines).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreStabilityArgs {
    /// Segmented traces (JSON lines).
    #[arg(long, value_name = "FILE")]
    segments: PathBuf,
    /// Continuation samples per boundary (JSON lines).
    #[arg(long, value_name = "FILE")]
    continuations: PathBuf,
    /// Keyword lexicon TOML; defaults to the built-in cue set.
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Output stability report (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Difference of means over all boundaries.
    Seal,
    /// Hard-filtered to boundaries with stability >= tau.
    Stable,
    /// Stability-weighted within each problem.
    Soft,
    /// Content subspace projected out of the seal vector.
    Projected,
    /// Stability filtering plus subspace projection.
    Combined,
    /// Difference between prompted and plain pooled states.
    Prompt,
    /// Size-matched random-subset controls.
    Control,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Segmented traces (JSON lines); required for every method but
    /// `prompt`.
    #[arg(long, value_name = "FILE")]
    segments: Option<PathBuf>,
    /// Directory of per-question hidden-state files (`<id>.hsv`).
    #[arg(long, value_name = "DIR")]
    states: PathBuf,
    /// Construction method.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Stability report from `score-stability` (needed by stable, soft,
    /// combined; optional for control).
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Fitted subspace file (needed by projected and combined).
    #[arg(long, value_name = "FILE")]
    subspace: Option<PathBuf>,
    /// Stability threshold for hard filtering.
    #[arg(long)]
    tau: Option<f64>,
    /// Directory of prompted hidden-state files (prompt method).
    #[arg(long, value_name = "DIR")]
    prompted_states: Option<PathBuf>,
    /// Prompt wording to record in the output sidecar (prompt method).
    #[arg(long, value_name = "TEXT")]
    prompt_text: Option<String>,
    /// Boundaries per control vector; defaults to the count surviving the
    /// threshold in --report (control method).
    #[arg(long)]
    count: Option<usize>,
    /// Number of control vectors (control method).
    #[arg(long)]
    n_controls: Option<usize>,
    /// RNG seed (control method).
    #[arg(long)]
    seed: Option<u64>,
    /// Output vector file; for `control`, an output directory.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitSubspaceArgs {
    /// Directory of question-only hidden-state files (`<id>.hsv`).
    #[arg(long, value_name = "DIR")]
    question_states: PathBuf,
    /// Subspace rank.
    #[arg(long)]
    k: Option<usize>,
    /// Output subspace file.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProbeMode {
    /// Boundary-vs-execution classifier with stability-binned sampling.
    Behavior,
    /// Subject classifier on content vs residual components per rank.
    Subject,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Which probe to train.
    #[arg(long, value_enum)]
    mode: ProbeMode,
    /// Segmented traces (behavior mode).
    #[arg(long, value_name = "FILE")]
    segments: Option<PathBuf>,
    /// Directory of per-question hidden-state files (behavior mode).
    #[arg(long, value_name = "DIR")]
    states: Option<PathBuf>,
    /// Stability report (behavior mode).
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Rows drawn per stability bin (behavior mode).
    #[arg(long)]
    per_bin: Option<usize>,
    /// Raw traces carrying subject labels (subject mode).
    #[arg(long, value_name = "FILE")]
    traces: Option<PathBuf>,
    /// Directory of question-only hidden-state files (subject mode).
    #[arg(long, value_name = "DIR")]
    question_states: Option<PathBuf>,
    /// Fitted subspace file (subject mode).
    #[arg(long, value_name = "FILE")]
    subspace: Option<PathBuf>,
    /// Comma-separated ranks to evaluate (subject mode).
    #[arg(long, value_name = "K,K,...", value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Inverse regularization strength.
    #[arg(long)]
    c: Option<f64>,
    /// Optimizer gradient tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Optimizer iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Split folds by row instead of keeping each question intact
    /// (behavior mode).
    #[arg(long)]
    ungrouped: bool,
    /// RNG seed for bin sampling (behavior mode).
    #[arg(long)]
    seed: Option<u64>,
    /// Output probe report (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentArg {
    /// Only write the dataset files.
    None,
    /// Recovered coefficient along the planted direction vs mean trigger
    /// probability.
    Dilution,
    /// Alignment across the threshold grid.
    Sweep,
    /// Hard filtering vs soft weighting vs unfiltered baseline.
    HardSoft,
    /// Soft-weighting coefficient against its closed form.
    SoftCoeff,
    /// Alignment retained after projecting out the content subspace.
    Attenuation,
    /// Dataset plus every experiment report.
    All,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Generator settings TOML; defaults to the calibrated setup.
    #[arg(long, value_name = "FILE")]
    sim_config: Option<PathBuf>,
    /// Seed override for the generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Stability threshold used by the hard-soft experiment.
    #[arg(long)]
    tau: Option<f64>,
    /// Experiment to run after generating.
    #[arg(long, value_enum, default_value = "none")]
    experiment: ExperimentArg,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Raw traces (JSON lines).
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    /// Keyword lexicon TOML; defaults to the built-in cue set.
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Gold answers as JSON lines of {question_id, gold_answer}; overrides
    /// answers embedded in the traces.
    #[arg(long, value_name = "FILE")]
    answers: Option<PathBuf>,
    /// Output CSV file.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("STEERKIT_LOG")).init();
    let cli = Cli::parse();
    let result = config::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Segment(a) => commands::cmd_segment(&cfg, &a),
        Command::ScoreStability(a) => commands::cmd_score_stability(&cfg, &a),
        Command::Build(a) => commands::cmd_build(&cfg, &a),
        Command::FitSubspace(a) => commands::cmd_fit_subspace(&cfg, &a),
        Command::Probe(a) => commands::cmd_probe(&cfg, &a),
        Command::Simulate(a) => commands::cmd_simulate(&cfg, &a),
        Command::Metrics(a) => commands::cmd_metrics(&cfg, &a),
    });
    if let Err(e) = result {
        // Join the cause chain, skipping sources already spelled out by
        // their wrapper's own message.
        let mut parts: Vec<String> = Vec::new();
        for cause in e.chain() {
            let s = cause.to_string();
            if !parts.last().map_or(false, |p| p.ends_with(&s)) {
                parts.push(s);
            }
        }
        eprintln!("error: {}", parts.join(": "));
        let code = e
            .chain()
            .find_map(|c| c.downcast_ref::<steerkit_core::Error>())
            .map(steerkit_core::Error::exit_code)
            .unwrap_or(5);
        std::process::exit(code);
    }
}
