use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use zsl_cli::{CliError, CliResult, RunConfig, StageSel};
use zsl_core::eval::Aggregation;
use zsl_core::losses::{LabelSpace, Mode};
use zsl_core::net::{Activation, Direction};
use zsl_core::store::SyntheticMode;

/// Transductive zero-shot classification of point-cloud embeddings.
#[derive(Parser)]
#[command(name = "zsl", version)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for both data generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic embeddings/semantics pair.
    GenSynthetic(GenArgs),
    /// Train a projection network.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Hubness and pseudo-labelling diagnostics for a checkpoint.
    Diagnose(DiagnoseArgs),
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

#[derive(Args)]
struct GenArgs {
    /// clusters | point-sets
    #[arg(long, value_parser = parse_enum::<SyntheticMode>)]
    synthetic_mode: Option<SyntheticMode>,
    #[arg(long)]
    cluster_spread: Option<f64>,
    #[arg(long)]
    semantic_noise: Option<f64>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    semantics: Option<PathBuf>,
    /// zsl | gzsl
    #[arg(long, value_parser = parse_enum::<Mode>)]
    mode: Option<Mode>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    stage: Option<StageSel>,
    /// Inductive checkpoint to start the transductive stage from.
    #[arg(long)]
    init: Option<PathBuf>,
    /// modelnet | mcgill | scanobjectnn | awa2 | cub
    #[arg(long)]
    preset: Option<String>,
    /// Hold out this many seen classes as a validation task.
    #[arg(long)]
    holdout: Option<usize>,
    /// S2F | F2S
    #[arg(long, value_parser = parse_enum::<Direction>)]
    direction: Option<Direction>,
    /// tanh | relu
    #[arg(long, value_parser = parse_enum::<Activation>)]
    activation: Option<Activation>,
    /// all | unseen-only
    #[arg(long, value_parser = parse_enum::<LabelSpace>)]
    label_space: Option<LabelSpace>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    inductive_epochs: Option<usize>,
    #[arg(long)]
    transductive_epochs: Option<usize>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    alpha3: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// per-class-mean | overall
    #[arg(long, value_parser = parse_enum::<Aggregation>)]
    aggregation: Option<Aggregation>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    k_max: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn apply_data(cfg: &mut RunConfig, d: DataArgs) {
    set_opt(&mut cfg.embeddings, d.embeddings);
    set_opt(&mut cfg.semantics, d.semantics);
    set(&mut cfg.train.mode, d.mode);
}

fn run(cli: Cli) -> CliResult<String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let out = cli.out_dir;
    match cli.command {
        Command::GenSynthetic(a) => {
            set(&mut cfg.synthetic.mode, a.synthetic_mode);
            set(&mut cfg.synthetic.cluster_spread, a.cluster_spread);
            set(&mut cfg.synthetic.semantic_noise, a.semantic_noise);
            cfg.validate()?;
            zsl_cli::gen_synthetic(&cfg, &out)
        }
        Command::Train(a) => {
            apply_data(&mut cfg, a.data);
            set_opt(&mut cfg.preset, a.preset);
            cfg.apply_preset()?;
            set(&mut cfg.stage, a.stage);
            set_opt(&mut cfg.init, a.init);
            set_opt(&mut cfg.holdout, a.holdout);
            let t = &mut cfg.train;
            set(&mut t.direction, a.direction);
            set(&mut t.activation, a.activation);
            set(&mut t.label_space, a.label_space);
            set(&mut t.lr, a.lr);
            set(&mut t.hidden_dim, a.hidden_dim);
            set(&mut t.inductive_epochs, a.inductive_epochs);
            set(&mut t.transductive_epochs, a.transductive_epochs);
            set(&mut t.weights.alpha1, a.alpha1);
            set(&mut t.weights.alpha2, a.alpha2);
            set(&mut t.weights.alpha3, a.alpha3);
            cfg.validate()?;
            if cfg.stage == StageSel::Transductive && cfg.init.is_none() {
                return Err(CliError::config("--stage transductive needs --init"));
            }
            zsl_cli::train(&cfg, &out)
        }
        Command::Eval(a) => {
            apply_data(&mut cfg, a.data);
            set_opt(&mut cfg.checkpoint, a.checkpoint);
            set(&mut cfg.train.aggregation, a.aggregation);
            cfg.validate()?;
            zsl_cli::eval(&cfg, &out)
        }
        Command::Diagnose(a) => {
            apply_data(&mut cfg, a.data);
            set_opt(&mut cfg.checkpoint, a.checkpoint);
            set_opt(&mut cfg.k_max, a.k_max);
            cfg.validate()?;
            zsl_cli::diagnose(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(zsl_cli::EXIT_CONFIG as u8) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
