//! `lnl`: run experiments, baselines and neighborhood diagnostics.
//!
//! Exit status: 0 on success, 1 for invalid arguments or settings, 2 when the
//! pipeline fails at runtime (unreadable data, numerical failure, I/O).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lnl_core::graph::{load_dataset, save_dataset};
use lnl_core::harness::{
    diagnostics, run_baseline, run_experiment, ExperimentConfig, ExperimentReport, RunMode, SeSource,
};
use lnl_core::numerics::TrainConfig;
use lnl_core::synth::{generate, SynthSpec};
use lnl_core::{Error, Stage};

#[derive(Parser)]
#[command(name = "lnl", version, about = "MI-guided local and non-local neighborhood node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate the attentive classifier over repeated splits.
    Run(RunArgs),
    /// Train and evaluate an MLP baseline over repeated splits.
    Baseline(BaselineArgs),
    /// Print homophily / noise ratios of the graph and the learned maps.
    Diagnostics(DiagArgs),
    /// Write a random attributed graph in the dataset layout.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelMode {
    Local,
    Nonlocal,
    Bilevel,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMode {
    #[value(name = "mlp_raw", alias = "mlp-raw")]
    MlpRaw,
    #[value(name = "mlp_mean", alias = "mlp-mean")]
    MlpMean,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Raw,
    Mean1hop,
    Auto,
}

#[derive(Args)]
struct Common {
    /// Directory holding edges.tsv, features.tsv and labels.tsv.
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Base seed; run r uses seed + r.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    estimator_lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    se_dim: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    agg_layers: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    nl_sample_limit: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    m3s_stages: Option<usize>,
    #[arg(long)]
    stage_epochs: Option<usize>,
    #[arg(long)]
    m3s_top_t: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = SourceArg::Auto)]
    se_source: SourceArg,
}

impl TrainArgs {
    fn apply(&self, seed: u64) -> TrainConfig {
        let mut c = TrainConfig { seed, ..TrainConfig::default() };
        macro_rules! set {
            ($($arg:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$arg { c.$field = v; })*
            };
        }
        set!(
            lr => learning_rate,
            estimator_lr => estimator_lr,
            momentum => momentum,
            weight_decay => weight_decay,
            dropout => dropout,
            hidden_dim => hidden_dim,
            se_dim => se_dim,
            heads => heads,
            agg_layers => agg_layers,
            nl_sample_limit => nl_sample_limit,
            warmup_epochs => warmup_epochs,
            m3s_stages => m3s_stages,
            stage_epochs => stage_epochs,
            patience => patience,
            max_epochs => max_epochs,
        );
        c.clusters = self.clusters.or(c.clusters);
        c.m3s_top_t = self.m3s_top_t.or(c.m3s_top_t);
        c.batch_size = self.batch_size.or(c.batch_size);
        c
    }

    fn source(&self) -> SeSource {
        match self.se_source {
            SourceArg::Raw => SeSource::Raw,
            SourceArg::Mean1hop => SeSource::Mean1hop,
            SourceArg::Auto => SeSource::Auto,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = ModelMode::Bilevel)]
    mode: ModelMode,
    /// Write the final run's partition, clusters and estimator here.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    mode: BaselineMode,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Only the graph-level ratios (no estimator training).
    #[arg(long)]
    structural_only: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 120)]
    nodes: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 60)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    homophily: f64,
    #[arg(long, default_value_t = 0.7)]
    signal: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn config(common: &Common, mode: RunMode) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(&common.dataset_dir, mode);
    cfg.runs = common.runs;
    cfg.se_source = common.train.source();
    cfg.train = common.train.apply(common.seed);
    cfg.out = common.out.clone();
    cfg
}

fn finish(report: ExperimentReport) -> Result<(), Error> {
    eprintln!(
        "{:?}: mean test accuracy {:.4} (std {:.4}) over {} runs in {:.1}s",
        report.config.mode,
        report.aggregate.mean,
        report.aggregate.std,
        report.runs.len(),
        report.wall_clock_s
    );
    if report.config.out.is_none() {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(a) => {
            let mode = match a.mode {
                ModelMode::Local => RunMode::Local,
                ModelMode::Nonlocal => RunMode::Nonlocal,
                ModelMode::Bilevel => RunMode::Bilevel,
            };
            let mut cfg = config(&a.common, mode);
            cfg.dump_dir = a.dump_dir;
            finish(run_experiment(&cfg)?)
        }
        Command::Baseline(a) => {
            let mode = match a.mode {
                BaselineMode::MlpRaw => RunMode::MlpRaw,
                BaselineMode::MlpMean => RunMode::MlpMean,
            };
            finish(run_baseline(&config(&a.common, mode))?)
        }
        Command::Diagnostics(a) => {
            let mut cfg = ExperimentConfig::new(&a.dataset_dir, RunMode::Bilevel);
            cfg.se_source = a.train.source();
            cfg.train = a.train.apply(a.seed);
            cfg.validate()?;
            let d =
                load_dataset(&a.dataset_dir).map_err(|e| Error::Stage { stage: Stage::Load, source: Box::new(e) })?;
            let diag = diagnostics(&d, &cfg, a.structural_only)?;
            let text = serde_json::to_string_pretty(&diag)?;
            match a.out {
                Some(p) => std::fs::write(&p, text + "\n").map_err(|e| Error::Io { path: p, source: e }),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
        Command::Synth(a) => {
            let spec = SynthSpec {
                nodes: a.nodes,
                classes: a.classes,
                feature_dim: a.feature_dim,
                homophily: a.homophily,
                signal: a.signal,
                ..SynthSpec::default()
            };
            let d = generate(&spec, a.seed)?;
            save_dataset(&a.out, &d)
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
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
