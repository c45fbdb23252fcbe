//! Objective terms and the anchor / pseudo-label selection rules they use.
//!
//! Every term is a function of the squared-distance matrix `D` (instances x
//! classes) between embedded instances and class prototypes in the common
//! space. The `*_terms` functions return the value together with `dL/dD`;
//! [`crate::net::Projection::backward`] carries that into the network.
//!
//! Argmin selections and histogram counts are piecewise constant and are
//! treated as constants when differentiating. Softmax terms are computed in
//! the log domain with max-subtraction.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZslError};
use crate::net::{Direction, Projection, ProjectionNet};
use crate::store::SemanticTable;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Unlabeled and test instances come from unseen classes only.
    #[default]
    Zsl,
    /// Unlabeled and test instances may come from seen or unseen classes.
    Gzsl,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "zsl" => Ok(Mode::Zsl),
            "gzsl" => Ok(Mode::Gzsl),
            _ => Err(format!("unknown mode `{s}` (expected zsl or gzsl)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Zsl => "zsl",
            Mode::Gzsl => "gzsl",
        })
    }
}

/// Candidate classes for pseudo-labeling in the hubness term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSpace {
    UnseenOnly,
    #[default]
    All,
}

impl LabelSpace {
    pub fn classes(self, table: &SemanticTable) -> Vec<usize> {
        match self {
            LabelSpace::UnseenOnly => table.unseen().to_vec(),
            LabelSpace::All => table.all(),
        }
    }
}

impl std::str::FromStr for LabelSpace {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "unseen-only" => Ok(LabelSpace::UnseenOnly),
            "all" => Ok(LabelSpace::All),
            _ => Err(format!("unknown label space `{s}` (expected unseen-only or all)")),
        }
    }
}

/// Weights of the transductive objective plus the triplet margin and the
/// ridge coefficient of the supervised term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub margin: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha1: 0.4, alpha2: 0.001, alpha3: 0.001, margin: 1.0, lambda: 1e-4 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("margin", self.margin),
            ("lambda", self.lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ZslError::Validation(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Pairwise squared Euclidean distances, `B x K`.
pub fn sq_dist_matrix(features: &Array2<f64>, projected: &Array2<f64>) -> Result<Array2<f64>> {
    if features.ncols() != projected.ncols() {
        return Err(ZslError::arg(format!(
            "dimension mismatch: {} vs {}",
            features.ncols(),
            projected.ncols()
        )));
    }
    let mut out = Array2::zeros((features.nrows(), projected.nrows()));
    for (i, a) in features.rows().into_iter().enumerate() {
        for (k, b) in projected.rows().into_iter().enumerate() {
            out[[i, k]] = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        }
    }
    Ok(out)
}

/// Index in `space` minimising `row`; ties go to the lowest class index.
pub fn argmin_over(row: ArrayView1<'_, f64>, space: &[usize]) -> usize {
    let mut best = space[0];
    for &k in &space[1..] {
        let (v, b) = (row[k], row[best]);
        if v < b || (v == b && k < best) {
            best = k;
        }
    }
    best
}

fn log_sum_exp_neg(row: ArrayView1<'_, f64>, space: &[usize]) -> f64 {
    let max = space.iter().map(|&k| -row[k]).fold(f64::NEG_INFINITY, f64::max);
    max + space.iter().map(|&k| (-row[k] - max).exp()).sum::<f64>().ln()
}

fn softmax_neg(row: ArrayView1<'_, f64>, space: &[usize]) -> Vec<f64> {
    let lse = log_sum_exp_neg(row, space);
    space.iter().map(|&k| (-row[k] - lse).exp()).collect()
}

/// Mean of `D[i, label_i]` and its gradient.
pub fn supervised_terms(dists: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(dists.raw_dim());
    let mut sum = 0.0;
    for (i, &c) in labels.iter().enumerate() {
        sum += dists[[i, c]];
        grad[[i, c]] = 1.0 / n;
    }
    (sum / n, grad)
}

/// Anchors of the unsupervised triplet loss with their selected prototypes.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletBatch {
    pub anchors: Array2<f64>,
    /// Pseudo-labeled positive class. For discarded anchors this is the seen
    /// class that won the argmin.
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub discarded: Vec<bool>,
}

impl TripletBatch {
    /// Assigns positives and negatives from the current distances.
    ///
    /// ZSL: positive = nearest unseen prototype. GZSL: positive = nearest
    /// prototype overall, and the anchor is discarded when that is a seen
    /// class. Negative = nearest seen prototype in both modes.
    pub fn select(anchors: Array2<f64>, dists: ArrayView2<'_, f64>, table: &SemanticTable, mode: Mode) -> Result<Self> {
        if table.num_seen() == 0 || table.num_unseen() == 0 {
            return Err(ZslError::arg("triplet selection needs at least one seen and one unseen class"));
        }
        let all = table.all();
        let mut positive = Vec::with_capacity(anchors.nrows());
        let mut negative = Vec::with_capacity(anchors.nrows());
        let mut discarded = Vec::with_capacity(anchors.nrows());
        for row in dists.rows() {
            let (pos, drop) = match mode {
                Mode::Zsl => (argmin_over(row, table.unseen()), false),
                Mode::Gzsl => {
                    let p = argmin_over(row, &all);
                    (p, table.is_seen(p))
                }
            };
            positive.push(pos);
            negative.push(argmin_over(row, table.seen()));
            discarded.push(drop);
        }
        Ok(TripletBatch { anchors, positive, negative, discarded })
    }

    pub fn len(&self) -> usize {
        self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }

    /// Number of anchors that take part in the loss (N').
    pub fn used(&self) -> usize {
        self.discarded.iter().filter(|&&d| !d).count()
    }

    pub fn discarded_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (self.len() - self.used()) as f64 / self.len() as f64
    }
}

/// Triplet hinge value; `used == 0` signals that every anchor was discarded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripletLoss {
    pub value: f64,
    pub used: usize,
}

impl TripletLoss {
    pub fn is_empty(&self) -> bool {
        self.used == 0
    }
}

pub fn triplet_terms(dists: ArrayView2<'_, f64>, tb: &TripletBatch, margin: f64) -> (TripletLoss, Array2<f64>) {
    let used = tb.used();
    let mut grad = Array2::zeros(dists.raw_dim());
    if used == 0 {
        return (TripletLoss { value: 0.0, used }, grad);
    }
    let scale = 1.0 / used as f64;
    let mut sum = 0.0;
    for i in 0..tb.len() {
        if tb.discarded[i] {
            continue;
        }
        let (p, n) = (tb.positive[i], tb.negative[i]);
        let hinge = dists[[i, p]] + margin - dists[[i, n]];
        if hinge > 0.0 {
            sum += hinge;
            grad[[i, p]] += scale;
            grad[[i, n]] -= scale;
        }
    }
    (TripletLoss { value: sum * scale, used }, grad)
}

/// Mean negative log-softmax (over `space`) of each row's pseudo-label.
pub fn confidence_terms(dists: ArrayView2<'_, f64>, pseudo: &[usize], space: &[usize]) -> (f64, Array2<f64>) {
    let n = pseudo.len() as f64;
    let mut grad = Array2::zeros(dists.raw_dim());
    let mut sum = 0.0;
    for (i, &y) in pseudo.iter().enumerate() {
        let row = dists.row(i);
        sum += row[y] + log_sum_exp_neg(row, space);
        for (&k, p) in space.iter().zip(softmax_neg(row, space)) {
            grad[[i, k]] -= p / n;
        }
        grad[[i, y]] += 1.0 / n;
    }
    (sum / n, grad)
}

/// Mean negative log of the softmax mass (over all classes) on unseen classes.
pub fn unbias_terms(dists: ArrayView2<'_, f64>, table: &SemanticTable) -> (f64, Array2<f64>) {
    let all = table.all();
    let unseen = table.unseen();
    let n = dists.nrows() as f64;
    let mut grad = Array2::zeros(dists.raw_dim());
    let mut sum = 0.0;
    for (i, row) in dists.rows().into_iter().enumerate() {
        sum += log_sum_exp_neg(row, &all) - log_sum_exp_neg(row, unseen);
        for (&k, q) in unseen.iter().zip(softmax_neg(row, unseen)) {
            grad[[i, k]] += q / n;
        }
        for (&k, p) in all.iter().zip(softmax_neg(row, &all)) {
            grad[[i, k]] -= p / n;
        }
    }
    (sum / n, grad)
}

/// Per-class prediction counts over a label space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionHistogram {
    /// Class indices of the label space, ascending.
    pub classes: Vec<usize>,
    pub counts: Vec<usize>,
    pub batch_size: usize,
}

impl PredictionHistogram {
    pub fn count_of(&self, class: usize) -> Option<usize> {
        self.classes.iter().position(|&c| c == class).map(|i| self.counts[i])
    }

    /// Population mean and variance of the count vector, zero counts included.
    pub fn moments(&self) -> (f64, f64) {
        let k = self.counts.len() as f64;
        let mean = self.batch_size as f64 / k;
        let var = self.counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / k;
        (mean, var)
    }
}

pub fn histogram(labels: &[usize], space: &[usize]) -> Result<PredictionHistogram> {
    if space.is_empty() {
        return Err(ZslError::arg("label space is empty"));
    }
    let mut classes = space.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut counts = vec![0; classes.len()];
    for &l in labels {
        let slot = classes
            .binary_search(&l)
            .map_err(|_| ZslError::arg(format!("label {l} is outside the label space")))?;
        counts[slot] += 1;
    }
    Ok(PredictionHistogram { classes, counts, batch_size: labels.len() })
}

/// Batch prediction-skewness: the standardized third moment of the count
/// vector, sampled at each instance's own pseudo-label. Zero when the counts
/// are uniform.
pub fn skewness_loss_raw(h: &PredictionHistogram, labels: &[usize]) -> Result<f64> {
    if labels.len() != h.batch_size || h.counts.iter().sum::<usize>() != labels.len() {
        return Err(ZslError::arg("histogram was not built from these labels"));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let (mean, var) = h.moments();
    if var == 0.0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for &l in labels {
        let c = h.count_of(l).ok_or_else(|| ZslError::arg(format!("label {l} is outside the histogram")))?;
        sum += (c as f64 - mean).powi(3);
    }
    Ok(sum / (labels.len() as f64 * var.powf(1.5)))
}

/// Value of the hubness term for given distances, with its gradient.
/// Pseudo-labels and counts are recomputed from `dists` and held constant.
pub fn hubness_terms(dists: ArrayView2<'_, f64>, space: &[usize]) -> Result<(HubnessParts, Array2<f64>)> {
    if space.is_empty() {
        return Err(ZslError::arg("label space is empty"));
    }
    let pseudo: Vec<usize> = dists.rows().into_iter().map(|r| argmin_over(r, space)).collect();
    let h = histogram(&pseudo, space)?;
    let skew = skewness_loss_raw(&h, &pseudo)?;
    let (pi, mut grad) = confidence_terms(dists, &pseudo, space);
    grad *= skew;
    Ok((HubnessParts { pi, skew, value: pi * skew }, grad))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HubnessParts {
    /// Confidence weight.
    pub pi: f64,
    /// Raw skewness of the batch prediction histogram.
    pub skew: f64,
    pub value: f64,
}

fn check_net_table(net: &ProjectionNet, table: &SemanticTable) -> Result<()> {
    let dims = net.dims();
    let want = match net.direction {
        Direction::S2F => dims.input,
        Direction::F2S => dims.output,
    };
    if table.semantic_dim() != want {
        return Err(ZslError::arg(format!(
            "semantic dimension {} does not match the {} network ({want})",
            table.semantic_dim(),
            net.direction
        )));
    }
    Ok(())
}

fn project(net: &ProjectionNet, table: &SemanticTable, features: &Array2<f64>) -> Result<Array2<f64>> {
    check_net_table(net, table)?;
    Projection::new(net, table, features).map(|p| p.sq_dists())
}

fn single(anchor: ArrayView1<'_, f64>) -> Array2<f64> {
    anchor.to_owned().insert_axis(Axis(0))
}

fn supervised(
    features: &Array2<f64>,
    labels: &[usize],
    table: &SemanticTable,
    net: &ProjectionNet,
    lambda: f64,
    direction: Direction,
) -> Result<f64> {
    if net.direction != direction {
        return Err(ZslError::arg(format!("expected a {direction} network, got {}", net.direction)));
    }
    if labels.is_empty() || labels.len() != features.nrows() {
        return Err(ZslError::arg("batch must be nonempty with one label per row"));
    }
    if let Some(&c) = labels.iter().find(|&&c| c >= table.len() || !table.is_seen(c)) {
        return Err(ZslError::arg(format!("label {c} is not a seen class")));
    }
    let d = project(net, table, features)?;
    Ok(supervised_terms(d.view(), labels).0 + lambda * net.l2_penalty())
}

/// Mean squared residual between features and projected semantics, plus ridge.
pub fn loss_s2f(
    features: &Array2<f64>,
    labels: &[usize],
    table: &SemanticTable,
    net: &ProjectionNet,
    lambda: f64,
) -> Result<f64> {
    supervised(features, labels, table, net, lambda, Direction::S2F)
}

/// Mean squared residual between projected features and semantics, plus ridge.
pub fn loss_f2s(
    features: &Array2<f64>,
    labels: &[usize],
    table: &SemanticTable,
    net: &ProjectionNet,
    lambda: f64,
) -> Result<f64> {
    supervised(features, labels, table, net, lambda, Direction::F2S)
}

pub fn select_positive_zsl(anchor: ArrayView1<'_, f64>, table: &SemanticTable, net: &ProjectionNet) -> Result<usize> {
    if table.num_unseen() == 0 {
        return Err(ZslError::arg("no unseen classes"));
    }
    let d = project(net, table, &single(anchor))?;
    Ok(argmin_over(d.row(0), table.unseen()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Positive {
    Class(usize),
    /// The nearest prototype belongs to a seen class.
    Discard,
}

pub fn select_positive_gzsl(anchor: ArrayView1<'_, f64>, table: &SemanticTable, net: &ProjectionNet) -> Result<Positive> {
    table.require_task()?;
    let d = project(net, table, &single(anchor))?;
    let winner = argmin_over(d.row(0), &table.all());
    Ok(if table.is_seen(winner) { Positive::Discard } else { Positive::Class(winner) })
}

pub fn select_negative(anchor: ArrayView1<'_, f64>, table: &SemanticTable, net: &ProjectionNet) -> Result<usize> {
    if table.num_seen() == 0 {
        return Err(ZslError::arg("no seen classes"));
    }
    let d = project(net, table, &single(anchor))?;
    Ok(argmin_over(d.row(0), table.seen()))
}

/// Builds a triplet batch with the current network.
pub fn select_triplets(anchors: &Array2<f64>, table: &SemanticTable, net: &ProjectionNet, mode: Mode) -> Result<TripletBatch> {
    let d = project(net, table, anchors)?;
    TripletBatch::select(anchors.clone(), d.view(), table, mode)
}

pub fn pseudo_label(
    anchor: ArrayView1<'_, f64>,
    table: &SemanticTable,
    net: &ProjectionNet,
    space: LabelSpace,
) -> Result<usize> {
    Ok(pseudo_labels(&single(anchor), table, net, space)?[0])
}

pub fn pseudo_labels(anchors: &Array2<f64>, table: &SemanticTable, net: &ProjectionNet, space: LabelSpace) -> Result<Vec<usize>> {
    let classes = space.classes(table);
    if classes.is_empty() {
        return Err(ZslError::arg("label space is empty"));
    }
    let d = project(net, table, anchors)?;
    Ok(d.rows().into_iter().map(|r| argmin_over(r, &classes)).collect())
}

pub fn loss_triplet(tb: &TripletBatch, table: &SemanticTable, net: &ProjectionNet, margin: f64) -> Result<TripletLoss> {
    if margin < 0.0 {
        return Err(ZslError::arg("margin must be nonnegative"));
    }
    let d = project(net, table, &tb.anchors)?;
    Ok(triplet_terms(d.view(), tb, margin).0)
}

pub fn confidence_weight(anchors: &Array2<f64>, table: &SemanticTable, net: &ProjectionNet, space: LabelSpace) -> Result<f64> {
    let classes = space.classes(table);
    if classes.is_empty() {
        return Err(ZslError::arg("label space is empty"));
    }
    let d = project(net, table, anchors)?;
    let pseudo: Vec<usize> = d.rows().into_iter().map(|r| argmin_over(r, &classes)).collect();
    Ok(confidence_terms(d.view(), &pseudo, &classes).0)
}

pub fn loss_hubness(anchors: &Array2<f64>, table: &SemanticTable, net: &ProjectionNet, space: LabelSpace) -> Result<f64> {
    let d = project(net, table, anchors)?;
    Ok(hubness_terms(d.view(), &space.classes(table))?.0.value)
}

pub fn loss_unbias(anchors: &Array2<f64>, table: &SemanticTable, net: &ProjectionNet) -> Result<f64> {
    table.require_task()?;
    let d = project(net, table, anchors)?;
    Ok(unbias_terms(d.view(), table).0)
}

/// Components of the weighted transductive objective on one unlabeled batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransductiveLoss {
    pub triplet: f64,
    pub hubness: f64,
    pub unbias: f64,
    /// `alpha1 * triplet + alpha2 * hubness + alpha3 * unbias`.
    pub total: f64,
    pub discarded_fraction: f64,
}

/// Transductive value and `dL/dD` for one unlabeled batch.
pub fn transductive_terms(
    anchors: &Array2<f64>,
    dists: ArrayView2<'_, f64>,
    table: &SemanticTable,
    weights: &LossWeights,
    mode: Mode,
    space: LabelSpace,
) -> Result<(TransductiveLoss, Array2<f64>)> {
    table.require_task()?;
    let tb = TripletBatch::select(anchors.clone(), dists, table, mode)?;
    let (tl, g_t) = triplet_terms(dists, &tb, weights.margin);
    let (hub, g_h) = hubness_terms(dists, &space.classes(table))?;
    let (lu, g_u) = unbias_terms(dists, table);
    let total = weights.alpha1 * tl.value + weights.alpha2 * hub.value + weights.alpha3 * lu;
    let mut grad = g_t * weights.alpha1;
    grad.scaled_add(weights.alpha2, &g_h);
    grad.scaled_add(weights.alpha3, &g_u);
    let parts = TransductiveLoss {
        triplet: tl.value,
        hubness: hub.value,
        unbias: lu,
        total,
        discarded_fraction: tb.discarded_fraction(),
    };
    Ok((parts, grad))
}

pub fn loss_transductive(
    anchors: &Array2<f64>,
    table: &SemanticTable,
    net: &ProjectionNet,
    weights: &LossWeights,
    mode: Mode,
    space: LabelSpace,
) -> Result<TransductiveLoss> {
    weights.validate()?;
    let d = project(net, table, anchors)?;
    Ok(transductive_terms(anchors, d.view(), table, weights, mode, space)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn distances_basic() {
        let a = array![[0.0, 0.0], [1.0, 2.0]];
        let b = array![[3.0, 4.0], [1.0, 2.0]];
        let d = sq_dist_matrix(&a, &b).unwrap();
        assert_eq!(d, array![[25.0, 5.0], [8.0, 0.0]]);
        assert!(sq_dist_matrix(&a, &array![[1.0, 2.0, 3.0]]).is_err());
    }

    #[test]
    fn argmin_ties_prefer_lowest_index() {
        let row = array![3.0, 1.0, 0.5, 0.5, 9.0];
        assert_eq!(argmin_over(row.view(), &[0, 1, 2, 3, 4]), 2);
        assert_eq!(argmin_over(row.view(), &[3, 2]), 2);
        assert_eq!(argmin_over(row.view(), &[0, 4]), 0);
    }

    #[test]
    fn triplet_direct_evaluation() {
        // anchor (0,0), positive proto (1,0), negative proto (0,2), margin 3.5
        let d = array![[1.0, 4.0]];
        let tb = TripletBatch { anchors: array![[0.0, 0.0]], positive: vec![0], negative: vec![1], discarded: vec![false] };
        let (l, g) = triplet_terms(d.view(), &tb, 3.5);
        assert!((l.value - 0.5).abs() < 1e-15);
        assert_eq!(g, array![[1.0, -1.0]]);
        // boundary: d+ == d-, margin 0
        let d = array![[2.0, 2.0]];
        let (l, g) = triplet_terms(d.view(), &tb, 0.0);
        assert_eq!(l.value, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_discarded_triplet_batch_signals_empty() {
        let d = array![[1.0, 4.0]];
        let tb = TripletBatch { anchors: array![[0.0]], positive: vec![0], negative: vec![1], discarded: vec![true] };
        let (l, _) = triplet_terms(d.view(), &tb, 1.0);
        assert!(l.is_empty());
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn histogram_counts() {
        let h = histogram(&[0, 0, 0, 1], &[0, 1, 2]).unwrap();
        assert_eq!(h.counts, vec![3, 1, 0]);
        assert_eq!(h.batch_size, 4);
        assert!(matches!(histogram(&[3], &[0, 1, 2]), Err(ZslError::Argument(_))));
        let labels: Vec<usize> = (0..12).map(|i| i % 4).collect();
        let h = histogram(&labels, &[0, 1, 2, 3]).unwrap();
        assert!(h.counts.iter().all(|&c| c == 3));
    }

    #[test]
    fn skewness_hand_values() {
        let labels = [0, 0, 0, 1];
        let h = histogram(&labels, &[0, 1]).unwrap();
        assert!((skewness_loss_raw(&h, &labels).unwrap() - 0.5).abs() < 1e-15);
        let uniform = [0, 1, 2, 0, 1, 2];
        let h = histogram(&uniform, &[0, 1, 2]).unwrap();
        assert_eq!(skewness_loss_raw(&h, &uniform).unwrap(), 0.0);
        let hub = [1; 9];
        let h = histogram(&hub, &[0, 1, 2]).unwrap();
        // counts (0,9,0): E=3, Var=18, each sample sees (9-3)^3 = 216
        let expected = 216.0 / 18f64.powf(1.5);
        assert!((skewness_loss_raw(&h, &hub).unwrap() - expected).abs() < 1e-12);
        assert!(expected > 0.0);
    }

    #[test]
    fn confidence_of_equal_distances_is_log_k() {
        let d = Array2::from_elem((3, 2), 0.7);
        let (pi, _) = confidence_terms(d.view(), &[0, 0, 0], &[0, 1]);
        assert!((pi - std::f64::consts::LN_2).abs() < 1e-12);
        let d = array![[0.0, 1e4, 2e4]];
        let (pi, _) = confidence_terms(d.view(), &[0], &[0, 1, 2]);
        assert!((0.0..1e-300).contains(&pi));
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let w = LossWeights { alpha2: -0.1, ..Default::default() };
        assert!(w.validate().is_err());
    }
}
