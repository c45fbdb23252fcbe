//! Experiment runner behind the `zsl` binary: run configuration, the four
//! commands and their on-disk outputs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zsl_core::eval::{eval_rows, evaluate, neighbor_counts, skewness, HistogramEntry};
use zsl_core::losses::{Mode, TripletBatch};
use zsl_core::net::{Checkpoint, Projection, ProjectionNet};
use zsl_core::store::{
    load_embeddings, load_semantics, make_synthetic, save_embeddings, save_semantics, validation_task, write_atomic,
    EmbeddingSet, SemanticTable, Split, SyntheticSpec,
};
use zsl_core::trainer::{train_inductive, train_transductive, unlabeled_pool, TrainConfig, TrainLog};
use zsl_core::ZslError;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl fmt::Display) -> Self {
        CliError { code: EXIT_CONFIG, message: msg.to_string() }
    }

    pub fn input(msg: impl fmt::Display) -> Self {
        CliError { code: EXIT_INPUT, message: msg.to_string() }
    }

    /// Classifies an error raised while running a command.
    fn run(e: ZslError) -> Self {
        let code = match e {
            ZslError::Numeric(_) | ZslError::Diverged { .. } => EXIT_NUMERIC,
            ZslError::Validation(_) => EXIT_CONFIG,
            _ => EXIT_INPUT,
        };
        CliError { code, message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StageSel {
    Inductive,
    Transductive,
    #[default]
    Both,
}

/// Everything a run needs. Loaded from JSON, then overridden by flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synthetic: SyntheticSpec,
    pub train: TrainConfig,
    /// Named hyperparameter preset applied on top of `train`.
    pub preset: Option<String>,
    pub stage: StageSel,
    /// Cross-validation: hold out this many seen classes as pseudo-unseen.
    pub holdout: Option<usize>,
    pub embeddings: Option<PathBuf>,
    pub semantics: Option<PathBuf>,
    /// Checkpoint read by `eval` and `diagnose`.
    pub checkpoint: Option<PathBuf>,
    /// Inductive checkpoint the transductive stage starts from.
    pub init: Option<PathBuf>,
    /// Largest k reported by `diagnose`; defaults to the number of prototypes.
    pub k_max: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.synthetic.seed = seed;
        self.train.seed = seed;
    }

    pub fn apply_preset(&mut self) -> CliResult<()> {
        if let Some(name) = self.preset.clone() {
            self.train.apply_preset(&name).map_err(CliError::config)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.synthetic.validate().map_err(CliError::config)?;
        self.train.validate().map_err(CliError::config)?;
        if self.holdout == Some(0) {
            return Err(CliError::config("holdout must be at least 1"));
        }
        if self.k_max == Some(0) {
            return Err(CliError::config("k_max must be at least 1"));
        }
        Ok(())
    }

    fn input_path(&self, given: &Option<PathBuf>, out_dir: &Path, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| out_dir.join(default))
    }
}

fn load_task(cfg: &RunConfig, out_dir: &Path) -> CliResult<(EmbeddingSet, SemanticTable)> {
    let sem = cfg.input_path(&cfg.semantics, out_dir, "semantics.csv");
    let emb = cfg.input_path(&cfg.embeddings, out_dir, "embeddings.csv");
    let table = load_semantics(&sem).map_err(CliError::input)?;
    let data = load_embeddings(&emb, &table).map_err(CliError::input)?;
    Ok((data, table))
}

fn load_net(path: Option<&PathBuf>, what: &str) -> CliResult<ProjectionNet> {
    let path = path.ok_or_else(|| CliError::input(format!("no {what} checkpoint given")))?;
    Checkpoint::load(path).and_then(|c| c.net()).map_err(CliError::input)
}

fn write(path: PathBuf, bytes: &[u8]) -> CliResult<()> {
    write_atomic(&path, bytes).map_err(CliError::input)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))
}

pub fn gen_synthetic(cfg: &RunConfig, out_dir: &Path) -> CliResult<String> {
    let (data, table) = make_synthetic(&cfg.synthetic).map_err(CliError::config)?;
    ensure_dir(out_dir)?;
    save_embeddings(out_dir.join("embeddings.csv"), &data, &table).map_err(CliError::input)?;
    save_semantics(out_dir.join("semantics.csv"), &table).map_err(CliError::input)?;
    let count = |s| data.indices(&[s]).len();
    Ok(format!(
        "wrote {} instances ({} seen-train, {} seen-test, {} unseen-test) over {} classes ({} seen, {} unseen)",
        data.len(),
        count(Split::SeenTrain),
        count(Split::SeenTest),
        count(Split::UnseenTest),
        table.len(),
        table.num_seen(),
        table.num_unseen()
    ))
}

pub fn train(cfg: &RunConfig, out_dir: &Path) -> CliResult<String> {
    let (mut data, mut table) = load_task(cfg, out_dir)?;
    if let Some(k) = cfg.holdout {
        (data, table) = validation_task(&data, &table, k, cfg.train.seed).map_err(CliError::run)?;
    }
    ensure_dir(out_dir)?;
    let mut log = TrainLog::default();
    let mut lines = Vec::new();
    let mut net = match cfg.stage {
        StageSel::Transductive => load_net(cfg.init.as_ref(), "initial")?,
        StageSel::Inductive | StageSel::Both => {
            let t = train_inductive(&data, &table, &cfg.train, None).map_err(CliError::run)?;
            let ckpt = Checkpoint::new(&t.net, Some(&t.adam));
            write(out_dir.join("inductive.json"), ckpt.to_json().map_err(CliError::run)?.as_bytes())?;
            lines.push(format!("inductive: {} epochs -> {}", t.log.records.len(), out_dir.join("inductive.json").display()));
            log.extend(t.log);
            t.net
        }
    };
    if cfg.stage != StageSel::Inductive {
        let t = train_transductive(&net, &data, &table, &cfg.train, None).map_err(CliError::run)?;
        let ckpt = Checkpoint::new(&t.net, Some(&t.adam));
        write(out_dir.join("transductive.json"), ckpt.to_json().map_err(CliError::run)?.as_bytes())?;
        lines.push(format!(
            "transductive: {} epochs -> {}",
            t.log.records.len(),
            out_dir.join("transductive.json").display()
        ));
        log.extend(t.log);
        net = t.net;
    }
    write(out_dir.join("train_log.csv"), log.to_csv().as_bytes())?;
    let report = evaluate(&data, &table, &net, cfg.train.mode, cfg.train.aggregation).map_err(CliError::run)?;
    lines.push(report.summary_line());
    Ok(lines.join("\n"))
}

pub fn eval(cfg: &RunConfig, out_dir: &Path) -> CliResult<String> {
    let (data, table) = load_task(cfg, out_dir)?;
    let net = load_net(cfg.checkpoint.as_ref(), "evaluation")?;
    let mode = cfg.train.mode;
    let report = evaluate(&data, &table, &net, mode, cfg.train.aggregation).map_err(CliError::run)?;
    ensure_dir(out_dir)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::run(e.into()))?;
    write(out_dir.join(format!("report_{mode}.json")), json.as_bytes())?;
    write(out_dir.join(format!("per_class_{mode}.csv")), report.per_class_csv().as_bytes())?;
    write(out_dir.join(format!("histogram_{mode}.csv")), report.histogram_csv().as_bytes())?;
    Ok(report.summary_line())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewAtK {
    pub k: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscardStats {
    /// Unlabeled instances considered.
    pub pool: usize,
    pub discarded: usize,
    pub fraction: f64,
    /// Per unlabeled batch (in file order) min / mean / max.
    pub batch_min: f64,
    pub batch_mean: f64,
    pub batch_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mode: Mode,
    pub direction: String,
    pub instances: usize,
    pub prototypes: usize,
    pub nk_skewness: Vec<SkewAtK>,
    pub prediction_histogram: Vec<HistogramEntry>,
    pub discarded: DiscardStats,
}

pub fn diagnose(cfg: &RunConfig, out_dir: &Path) -> CliResult<String> {
    let (data, table) = load_task(cfg, out_dir)?;
    let net = load_net(cfg.checkpoint.as_ref(), "diagnosed")?;
    let mode = cfg.train.mode;
    let (rows, space) = eval_rows(&data, &table, mode);
    if rows.is_empty() || space.is_empty() {
        return Err(CliError::input(format!("nothing to diagnose in {mode} mode")));
    }
    let proj = Projection::new(&net, &table, &data.rows(&rows)).map_err(CliError::run)?;
    let d = proj.sq_dists();
    let k_max = cfg.k_max.unwrap_or(space.len()).min(space.len());
    let mut nk = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let counts = neighbor_counts(d.view(), &space, k).map_err(CliError::run)?;
        nk.push(SkewAtK { k, value: skewness(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>()) });
    }
    let top1 = neighbor_counts(d.view(), &space, 1).map_err(CliError::run)?;
    let prediction_histogram = space
        .iter()
        .zip(&top1)
        .map(|(&c, &count)| HistogramEntry { class_id: table.class(c).id.clone(), count })
        .collect();

    let pool = unlabeled_pool(&data, mode);
    let mut discarded = 0;
    let mut fractions = Vec::new();
    for chunk in pool.chunks(cfg.train.unlabeled_batch) {
        let anchors = data.rows(chunk);
        let pd = Projection::new(&net, &table, &anchors).map_err(CliError::run)?.sq_dists();
        let tb = TripletBatch::select(anchors, pd.view(), &table, mode).map_err(CliError::run)?;
        discarded += tb.len() - tb.used();
        fractions.push(tb.discarded_fraction());
    }
    let stats = DiscardStats {
        pool: pool.len(),
        discarded,
        fraction: if pool.is_empty() { 0.0 } else { discarded as f64 / pool.len() as f64 },
        batch_min: fractions.iter().copied().fold(f64::INFINITY, f64::min).min(1.0),
        batch_mean: if fractions.is_empty() { 0.0 } else { fractions.iter().sum::<f64>() / fractions.len() as f64 },
        batch_max: fractions.iter().copied().fold(0.0, f64::max),
    };
    let diag = Diagnostics {
        mode,
        direction: net.direction.to_string(),
        instances: rows.len(),
        prototypes: space.len(),
        nk_skewness: nk,
        prediction_histogram,
        discarded: stats,
    };
    ensure_dir(out_dir)?;
    let json = serde_json::to_string_pretty(&diag).map_err(|e| CliError::run(e.into()))?;
    write(out_dir.join(format!("diagnostics_{mode}.json")), json.as_bytes())?;
    Ok(format!(
        "{mode}: nk-skewness(k=1) {:.4}, discarded {:.4} of {} unlabeled",
        diag.nk_skewness[0].value, diag.discarded.fraction, diag.discarded.pool
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_rejects_unknown_fields() {
        let cfg = RunConfig { preset: Some("cub".into()), holdout: Some(2), ..Default::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"stages": "both"}"#).is_err());
    }

    #[test]
    fn seed_and_preset_apply() {
        let mut cfg = RunConfig { preset: Some("awa2".into()), ..Default::default() };
        cfg.set_seed(9);
        cfg.apply_preset().unwrap();
        assert_eq!((cfg.synthetic.seed, cfg.train.seed), (9, 9));
        assert_eq!(cfg.train.weights.alpha1, 0.12);
        cfg.preset = Some("imagenet".into());
        assert_eq!(cfg.apply_preset().unwrap_err().code, EXIT_CONFIG);
    }

    #[test]
    fn error_codes_follow_error_kind() {
        assert_eq!(CliError::run(ZslError::Numeric("d".into())).code, EXIT_NUMERIC);
        assert_eq!(CliError::run(ZslError::Validation("x".into())).code, EXIT_CONFIG);
        assert_eq!(CliError::run(ZslError::Argument("x".into())).code, EXIT_INPUT);
    }
}
