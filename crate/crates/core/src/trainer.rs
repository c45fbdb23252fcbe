//! Two-stage training: inductive fitting on labeled seen data, then
//! transductive refinement that adds the unsupervised objective on
//! unlabeled test instances.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZslError};
use crate::eval::{evaluate, Aggregation};
use crate::losses::{LabelSpace, LossWeights, Mode};
use crate::net::{
    adam_step, loss_and_grad, transductive_loss_and_grad, Activation, AdamState, Dims, Direction, Objective,
    ProjectionNet,
};
use crate::store::{EmbeddingSet, SemanticTable, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Inductive,
    Transductive,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Inductive => "inductive",
            Stage::Transductive => "transductive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub direction: Direction,
    pub weights: LossWeights,
    pub lr: f64,
    /// Labeled batch size N.
    pub labeled_batch: usize,
    /// Unlabeled batch size N'.
    pub unlabeled_batch: usize,
    pub inductive_epochs: usize,
    pub transductive_epochs: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub seed: u64,
    /// Candidate classes for pseudo-labels in the hubness term.
    pub label_space: LabelSpace,
    /// Early stopping on the validation metric; only used when a validation
    /// task is supplied.
    pub patience: Option<usize>,
    pub aggregation: Aggregation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Zsl,
            direction: Direction::S2F,
            weights: LossWeights::default(),
            lr: 1e-4,
            labeled_batch: 64,
            unlabeled_batch: 128,
            inductive_epochs: 50,
            transductive_epochs: 50,
            hidden_dim: 512,
            activation: Activation::Tanh,
            seed: 0,
            label_space: LabelSpace::All,
            patience: Some(10),
            aggregation: Aggregation::PerClassMean,
        }
    }
}

/// Cross-validated hyperparameter presets, by dataset name.
pub const PRESETS: [(&str, [f64; 3]); 5] = [
    ("modelnet", [0.4, 0.001, 0.001]),
    ("mcgill", [0.4, 0.001, 0.001]),
    ("scanobjectnn", [0.2, 0.2, 0.1]),
    ("awa2", [0.12, 0.001, 0.01]),
    ("cub", [0.1, 0.001, 0.001]),
];

impl TrainConfig {
    /// Applies a named preset: alpha weights and lr = 1e-4.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let (_, [a1, a2, a3]) = PRESETS
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| ZslError::Validation(format!("unknown preset `{name}`")))?;
        self.weights.alpha1 = *a1;
        self.weights.alpha2 = *a2;
        self.weights.alpha3 = *a3;
        self.lr = 1e-4;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(ZslError::Validation(format!("learning rate must be nonnegative, got {}", self.lr)));
        }
        if self.labeled_batch == 0 || self.unlabeled_batch == 0 {
            return Err(ZslError::Validation("batch sizes must be at least 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(ZslError::Validation("hidden_dim must be at least 1".into()));
        }
        if self.patience == Some(0) {
            return Err(ZslError::Validation("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub supervised_loss: f64,
    pub triplet_loss: f64,
    pub hubness_loss: f64,
    pub unbias_loss: f64,
    pub total: f64,
    pub discarded_fraction: f64,
    /// Validation HM (GZSL) or unseen top-1 (ZSL), when a validation task is given.
    pub val_metric: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn stage(&self, stage: Stage) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(move |r| r.stage == stage)
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.records.extend(other.records);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,stage,supervised_loss,triplet_loss,hubness_loss,unbias_loss,total,discarded_fraction,val_metric\n",
        );
        for r in &self.records {
            let val = r.val_metric.map(|v| format!("{v:?}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{}\n",
                r.epoch,
                r.stage.as_str(),
                r.supervised_loss,
                r.triplet_loss,
                r.hubness_loss,
                r.unbias_loss,
                r.total,
                r.discarded_fraction,
                val
            ));
        }
        out
    }
}

/// Network, optimizer state and log returned by a training stage.
#[derive(Clone, Debug)]
pub struct Trained {
    pub net: ProjectionNet,
    pub adam: AdamState,
    pub log: TrainLog,
}

/// Held-out task scored after every epoch for early stopping.
#[derive(Clone, Copy, Debug)]
pub struct Validation<'a> {
    pub data: &'a EmbeddingSet,
    pub table: &'a SemanticTable,
}

/// Endless shuffled stream over a pool of row indices.
struct Cycler {
    pool: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(pool: Vec<usize>, rng: &mut ChaCha8Rng) -> Self {
        let mut c = Cycler { pool, pos: 0 };
        c.pool.shuffle(rng);
        c
    }

    fn batch(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let size = size.min(self.pool.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.pool.len() {
                self.pool.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.pool[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match stage {
        Stage::Inductive => 1,
        Stage::Transductive => 2,
    });
    rng
}

fn labels_of(data: &EmbeddingSet, rows: &[usize]) -> Vec<usize> {
    rows.iter().map(|&i| data.labels()[i].expect("seen-train rows are labeled")).collect()
}

fn check_task(data: &EmbeddingSet, table: &SemanticTable, net: &ProjectionNet) -> Result<()> {
    let want = Dims::for_task(net.direction, table.semantic_dim(), data.feature_dim(), net.dims().hidden);
    if want != net.dims() {
        return Err(ZslError::arg(format!(
            "network dims {:?} do not fit data (feature {}) and semantics (dim {})",
            net.dims(),
            data.feature_dim(),
            table.semantic_dim()
        )));
    }
    Ok(())
}

/// Keeps the best network seen so far and decides when to stop.
struct EarlyStop<'a> {
    validation: Option<Validation<'a>>,
    patience: Option<usize>,
    best: Option<(f64, ProjectionNet, AdamState)>,
    since_best: usize,
}

impl<'a> EarlyStop<'a> {
    fn new(validation: Option<Validation<'a>>, patience: Option<usize>) -> Self {
        EarlyStop { validation, patience, best: None, since_best: 0 }
    }

    /// Scores the current network; returns the metric and whether to stop.
    fn observe(&mut self, net: &ProjectionNet, adam: &AdamState, cfg: &TrainConfig) -> Result<(Option<f64>, bool)> {
        let Some(v) = self.validation else { return Ok((None, false)) };
        let metric = evaluate(v.data, v.table, net, cfg.mode, cfg.aggregation)?.headline();
        match &self.best {
            Some((best, _, _)) if metric <= *best => self.since_best += 1,
            _ => {
                self.best = Some((metric, net.clone(), adam.clone()));
                self.since_best = 0;
            }
        }
        let stop = self.patience.is_some_and(|p| self.since_best >= p);
        Ok((Some(metric), stop))
    }

    fn finish(self, net: ProjectionNet, adam: AdamState) -> (ProjectionNet, AdamState) {
        match (self.patience, self.best) {
            (Some(_), Some((_, n, a))) => (n, a),
            _ => (net, adam),
        }
    }
}

fn diverged(epoch: usize, stage: Stage) -> impl FnOnce(ZslError) -> ZslError {
    move |e| match e {
        e @ ZslError::Numeric(_) => ZslError::Diverged { epoch, stage: stage.as_str(), source: Box::new(e) },
        other => other,
    }
}

/// Fits a freshly initialised network on seen-train instances with the
/// supervised regression loss.
pub fn train_inductive(
    data: &EmbeddingSet,
    table: &SemanticTable,
    cfg: &TrainConfig,
    validation: Option<Validation<'_>>,
) -> Result<Trained> {
    cfg.validate()?;
    let pool = data.indices(&[Split::SeenTrain]);
    if pool.is_empty() {
        return Err(ZslError::arg("no seen-train instances"));
    }
    let dims = Dims::for_task(cfg.direction, table.semantic_dim(), data.feature_dim(), cfg.hidden_dim);
    let mut net = ProjectionNet::init(cfg.direction, dims, cfg.activation, cfg.seed)?;
    let mut adam = AdamState::new(&net, cfg.lr);
    let mut rng = stage_rng(cfg.seed, Stage::Inductive);
    let mut order = pool;
    let mut log = TrainLog::default();
    let mut stopper = EarlyStop::new(validation, cfg.patience);

    for epoch in 1..=cfg.inductive_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.labeled_batch) {
            let feats = data.rows(chunk);
            let labels = labels_of(data, chunk);
            let (loss, grads) = loss_and_grad(
                &net,
                table,
                Objective::Supervised { features: &feats, labels: &labels, lambda: cfg.weights.lambda },
            )
            .map_err(diverged(epoch, Stage::Inductive))?;
            adam_step(&mut net, &grads, &mut adam)?;
            sum += loss;
            steps += 1;
        }
        let mean = sum / steps as f64;
        let (val_metric, stop) = stopper.observe(&net, &adam, cfg)?;
        log.records.push(EpochRecord {
            epoch,
            stage: Stage::Inductive,
            supervised_loss: mean,
            triplet_loss: 0.0,
            hubness_loss: 0.0,
            unbias_loss: 0.0,
            total: mean,
            discarded_fraction: 0.0,
            val_metric,
        });
        if stop {
            break;
        }
    }
    let (net, adam) = stopper.finish(net, adam);
    Ok(Trained { net, adam, log })
}

/// Unlabeled pool of the transductive stage.
pub fn unlabeled_pool(data: &EmbeddingSet, mode: Mode) -> Vec<usize> {
    match mode {
        Mode::Zsl => data.indices(&[Split::UnseenTest]),
        Mode::Gzsl => data.indices(&[Split::SeenTest, Split::UnseenTest]),
    }
}

/// Refines `w_ind` with the supervised loss plus the weighted transductive
/// objective. Anchors are re-selected with the current weights at every step;
/// the optimizer starts fresh.
pub fn train_transductive(
    w_ind: &ProjectionNet,
    data: &EmbeddingSet,
    table: &SemanticTable,
    cfg: &TrainConfig,
    validation: Option<Validation<'_>>,
) -> Result<Trained> {
    cfg.validate()?;
    table.require_task()?;
    if w_ind.direction != cfg.direction {
        return Err(ZslError::arg(format!(
            "inductive network is {} but the config asks for {}",
            w_ind.direction, cfg.direction
        )));
    }
    check_task(data, table, w_ind)?;
    let labeled = data.indices(&[Split::SeenTrain]);
    if labeled.is_empty() {
        return Err(ZslError::arg("no seen-train instances"));
    }
    let unlabeled = unlabeled_pool(data, cfg.mode);
    if unlabeled.is_empty() {
        return Err(ZslError::arg(format!("no unlabeled instances for {} transduction", cfg.mode)));
    }
    let steps = labeled.len().div_ceil(cfg.labeled_batch).max(unlabeled.len().div_ceil(cfg.unlabeled_batch));

    let mut net = w_ind.clone();
    let mut adam = AdamState::new(&net, cfg.lr);
    let mut rng = stage_rng(cfg.seed, Stage::Transductive);
    let mut lab = Cycler::new(labeled, &mut rng);
    let mut unl = Cycler::new(unlabeled, &mut rng);
    let mut log = TrainLog::default();
    let mut stopper = EarlyStop::new(validation, cfg.patience);

    for epoch in 1..=cfg.transductive_epochs {
        let mut acc = [0.0; 6];
        for _ in 0..steps {
            let rows = lab.batch(cfg.labeled_batch, &mut rng);
            let feats = data.rows(&rows);
            let labels = labels_of(data, &rows);
            let anchors: Array2<f64> = data.rows(&unl.batch(cfg.unlabeled_batch, &mut rng));

            let (sup, mut grads) = loss_and_grad(
                &net,
                table,
                Objective::Supervised { features: &feats, labels: &labels, lambda: cfg.weights.lambda },
            )
            .map_err(diverged(epoch, Stage::Transductive))?;
            let (parts, g_t) =
                transductive_loss_and_grad(&net, table, &anchors, &cfg.weights, cfg.mode, cfg.label_space)
                    .map_err(diverged(epoch, Stage::Transductive))?;
            grads.add_scaled(1.0, &g_t);
            adam_step(&mut net, &grads, &mut adam)?;

            for (slot, v) in acc.iter_mut().zip([
                sup,
                parts.triplet,
                parts.hubness,
                parts.unbias,
                sup + parts.total,
                parts.discarded_fraction,
            ]) {
                *slot += v;
            }
        }
        let n = steps as f64;
        let (val_metric, stop) = stopper.observe(&net, &adam, cfg)?;
        log.records.push(EpochRecord {
            epoch,
            stage: Stage::Transductive,
            supervised_loss: acc[0] / n,
            triplet_loss: acc[1] / n,
            hubness_loss: acc[2] / n,
            unbias_loss: acc[3] / n,
            total: acc[4] / n,
            discarded_fraction: acc[5] / n,
            val_metric,
        });
        if stop {
            break;
        }
    }
    let (net, adam) = stopper.finish(net, adam);
    Ok(Trained { net, adam, log })
}

/// Both stages back to back; the transductive stage starts from the
/// inductive result.
pub fn train_both(
    data: &EmbeddingSet,
    table: &SemanticTable,
    cfg: &TrainConfig,
    validation: Option<Validation<'_>>,
) -> Result<(Trained, Trained)> {
    let ind = train_inductive(data, table, cfg, validation)?;
    let tns = train_transductive(&ind.net, data, table, cfg, validation)?;
    Ok((ind, tns))
}
