//! Nearest-prototype inference, top-1 accuracy, harmonic mean and hubness
//! diagnostics.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZslError};
use crate::losses::{argmin_over, histogram, Mode};
use crate::net::{Projection, ProjectionNet};
use crate::store::{EmbeddingSet, SemanticTable, Split};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Mean of class-wise accuracies over classes present in the test set.
    #[default]
    PerClassMean,
    /// Correct predictions over all predictions.
    Overall,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "per-class-mean" => Ok(Aggregation::PerClassMean),
            "overall" => Ok(Aggregation::Overall),
            _ => Err(format!("unknown aggregation `{s}` (expected per-class-mean or overall)")),
        }
    }
}

fn dists(features: &Array2<f64>, table: &SemanticTable, net: &ProjectionNet) -> Result<Array2<f64>> {
    Ok(Projection::new(net, table, features)?.sq_dists())
}

/// Nearest prototype among `space` for each row. Squared and unsquared
/// distances share the same argmin.
pub fn predict_batch(features: &Array2<f64>, table: &SemanticTable, net: &ProjectionNet, space: &[usize]) -> Result<Vec<usize>> {
    if space.is_empty() {
        return Err(ZslError::arg("no candidate classes"));
    }
    let d = dists(features, table, net)?;
    Ok(d.rows().into_iter().map(|r| argmin_over(r, space)).collect())
}

pub fn predict_zsl(feature: ArrayView1<'_, f64>, table: &SemanticTable, net: &ProjectionNet) -> Result<usize> {
    if table.num_unseen() == 0 {
        return Err(ZslError::arg("no unseen classes"));
    }
    Ok(predict_batch(&feature.to_owned().insert_axis(Axis(0)), table, net, table.unseen())?[0])
}

pub fn predict_gzsl(feature: ArrayView1<'_, f64>, table: &SemanticTable, net: &ProjectionNet) -> Result<usize> {
    if table.is_empty() {
        return Err(ZslError::arg("semantic table is empty"));
    }
    Ok(predict_batch(&feature.to_owned().insert_axis(Axis(0)), table, net, &table.all())?[0])
}

/// Class-wise and aggregate top-1 accuracy, in percent.
#[derive(Clone, Debug, PartialEq)]
pub struct Accuracy {
    pub overall: f64,
    pub per_class_mean: f64,
    /// class -> (correct, total)
    pub per_class: BTreeMap<usize, (usize, usize)>,
}

impl Accuracy {
    pub fn get(&self, aggregation: Aggregation) -> f64 {
        match aggregation {
            Aggregation::PerClassMean => self.per_class_mean,
            Aggregation::Overall => self.overall,
        }
    }
}

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<Accuracy> {
    if predictions.len() != truth.len() {
        return Err(ZslError::arg("predictions and labels differ in length"));
    }
    if truth.is_empty() {
        return Err(ZslError::arg("no instances to score"));
    }
    let mut per_class: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (&p, &t) in predictions.iter().zip(truth) {
        let e = per_class.entry(t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
            correct += 1;
        }
    }
    let overall = 100.0 * correct as f64 / truth.len() as f64;
    let per_class_mean =
        per_class.values().map(|&(c, n)| 100.0 * c as f64 / n as f64).sum::<f64>() / per_class.len() as f64;
    Ok(Accuracy { overall, per_class_mean, per_class })
}

pub fn top1_accuracy(predictions: &[usize], truth: &[usize], aggregation: Aggregation) -> Result<f64> {
    Ok(accuracy(predictions, truth)?.get(aggregation))
}

/// `2 a b / (a + b)` on percentages; zero when both are zero.
pub fn harmonic_mean(acc_s: f64, acc_u: f64) -> Result<f64> {
    for v in [acc_s, acc_u] {
        if !(0.0..=100.0).contains(&v) {
            return Err(ZslError::arg(format!("accuracy {v} is outside [0, 100]")));
        }
    }
    if acc_s + acc_u == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * acc_s * acc_u / (acc_s + acc_u))
}

/// Standardized third moment of `values` (population moments); zero when
/// the variance is zero.
pub fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return 0.0;
    }
    values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / (n * var.powf(1.5))
}

/// How often each prototype in `space` is among an instance's `k` nearest.
pub fn neighbor_counts(dists: ArrayView2<'_, f64>, space: &[usize], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > space.len() {
        return Err(ZslError::arg(format!("k must be in 1..={}, got {k}", space.len())));
    }
    let mut counts = vec![0; space.len()];
    let mut order: Vec<usize> = (0..space.len()).collect();
    for row in dists.rows() {
        order.sort_by(|&a, &b| row[space[a]].total_cmp(&row[space[b]]).then(space[a].cmp(&space[b])));
        for &slot in &order[..k] {
            counts[slot] += 1;
        }
    }
    Ok(counts)
}

/// Skewness of the k-occurrence distribution of the prototypes in `space`.
pub fn nk_skewness(
    features: &Array2<f64>,
    table: &SemanticTable,
    net: &ProjectionNet,
    space: &[usize],
    k: usize,
) -> Result<f64> {
    let d = dists(features, table, net)?;
    let counts = neighbor_counts(d.view(), space, k)?;
    Ok(skewness(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class_id: String,
    pub name: String,
    pub seen: bool,
    pub instances: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub class_id: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub aggregation: Aggregation,
    /// Seen-class accuracy (GZSL only).
    pub acc_seen: Option<f64>,
    pub acc_unseen: f64,
    /// Harmonic mean of `acc_seen` and `acc_unseen` (GZSL only).
    pub hm: Option<f64>,
    /// Correct over all evaluated instances.
    pub overall_top1: f64,
    pub instances: usize,
    pub per_class: Vec<ClassAccuracy>,
    pub prediction_histogram: Vec<HistogramEntry>,
    /// k=1 occurrence skewness over the candidate prototypes.
    pub nk_skewness: f64,
}

impl EvalReport {
    /// The quantity used for model selection: HM in GZSL, unseen top-1 in ZSL.
    pub fn headline(&self) -> f64 {
        self.hm.unwrap_or(self.acc_unseen)
    }

    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class_id,name,partition,instances,correct,accuracy\n");
        for c in &self.per_class {
            let part = if c.seen { "seen" } else { "unseen" };
            out.push_str(&format!(
                "{},{},{},{},{},{:?}\n",
                c.class_id, c.name, part, c.instances, c.correct, c.accuracy
            ));
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("class_id,count\n");
        for h in &self.prediction_histogram {
            out.push_str(&format!("{},{}\n", h.class_id, h.count));
        }
        out
    }

    pub fn summary_line(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        format!(
            "mode={} acc_s={} acc_u={:.2} hm={} top1={:.2} skew={:.4}",
            self.mode,
            fmt(self.acc_seen),
            self.acc_unseen,
            fmt(self.hm),
            self.overall_top1,
            self.nk_skewness
        )
    }
}

/// Instances and candidate classes evaluated in `mode`.
pub fn eval_rows(data: &EmbeddingSet, table: &SemanticTable, mode: Mode) -> (Vec<usize>, Vec<usize>) {
    match mode {
        Mode::Zsl => (data.indices(&[Split::UnseenTest]), table.unseen().to_vec()),
        Mode::Gzsl => (data.indices(&[Split::SeenTest, Split::UnseenTest]), table.all()),
    }
}

pub fn evaluate(
    data: &EmbeddingSet,
    table: &SemanticTable,
    net: &ProjectionNet,
    mode: Mode,
    aggregation: Aggregation,
) -> Result<EvalReport> {
    let (rows, space) = eval_rows(data, table, mode);
    if rows.is_empty() {
        return Err(ZslError::arg(format!("no test instances to evaluate in {mode} mode")));
    }
    if space.is_empty() {
        return Err(ZslError::arg(format!("no candidate classes in {mode} mode")));
    }
    let truth: Vec<usize> = rows
        .iter()
        .map(|&i| {
            data.labels()[i]
                .ok_or_else(|| ZslError::arg(format!("test instance `{}` has no ground-truth label", data.ids()[i])))
        })
        .collect::<Result<_>>()?;
    let feats = data.rows(&rows);
    let d = dists(&feats, table, net)?;
    let preds: Vec<usize> = d.rows().into_iter().map(|r| argmin_over(r, &space)).collect();

    let all = accuracy(&preds, &truth)?;
    let part = |seen: bool| -> Option<Accuracy> {
        let (p, t): (Vec<usize>, Vec<usize>) =
            preds.iter().zip(&truth).filter(|(_, &t)| table.is_seen(t) == seen).map(|(&p, &t)| (p, t)).unzip();
        accuracy(&p, &t).ok()
    };
    let (acc_seen, acc_unseen, hm) = match mode {
        Mode::Zsl => (None, all.get(aggregation), None),
        Mode::Gzsl => {
            let missing = |what: &str| ZslError::arg(format!("GZSL evaluation needs {what} test instances"));
            let s = part(true).ok_or_else(|| missing("seen"))?.get(aggregation);
            let u = part(false).ok_or_else(|| missing("unseen"))?.get(aggregation);
            (Some(s), u, Some(harmonic_mean(s, u)?))
        }
    };
    let per_class = all
        .per_class
        .iter()
        .map(|(&c, &(correct, n))| ClassAccuracy {
            class_id: table.class(c).id.clone(),
            name: table.class(c).name.clone(),
            seen: table.is_seen(c),
            instances: n,
            correct,
            accuracy: 100.0 * correct as f64 / n as f64,
        })
        .collect();
    let h = histogram(&preds, &space)?;
    let prediction_histogram = h
        .classes
        .iter()
        .zip(&h.counts)
        .map(|(&c, &count)| HistogramEntry { class_id: table.class(c).id.clone(), count })
        .collect();
    let counts = neighbor_counts(d.view(), &space, 1)?;
    Ok(EvalReport {
        mode,
        aggregation,
        acc_seen,
        acc_unseen,
        hm,
        overall_top1: all.overall,
        instances: rows.len(),
        per_class,
        prediction_histogram,
        nk_skewness: skewness(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_mean_reported_rows() {
        assert!((harmonic_mean(83.21, 65.64).unwrap() - 73.39).abs() < 0.01);
        assert!((harmonic_mean(90.31, 30.53).unwrap() - 45.63).abs() < 0.01);
        assert_eq!(harmonic_mean(42.5, 42.5).unwrap(), 42.5);
        assert_eq!(harmonic_mean(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(harmonic_mean(80.0, 0.0).unwrap(), 0.0);
        assert!(harmonic_mean(101.0, 3.0).is_err());
        assert!(harmonic_mean(-1.0, 3.0).is_err());
    }

    #[test]
    fn accuracy_hand_counts() {
        // class 0: 1 of 2 correct; class 1: 1 of 1 correct
        let acc = accuracy(&[0, 1, 1], &[0, 0, 1]).unwrap();
        assert!((acc.per_class_mean - 75.0).abs() < 1e-12);
        assert!((acc.overall - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(top1_accuracy(&[2, 3], &[2, 3], Aggregation::Overall).unwrap(), 100.0);
        assert_eq!(top1_accuracy(&[1, 0], &[0, 1], Aggregation::PerClassMean).unwrap(), 0.0);
        assert!(top1_accuracy(&[], &[], Aggregation::Overall).is_err());
        assert!(top1_accuracy(&[1], &[1, 2], Aggregation::Overall).is_err());
    }

    #[test]
    fn per_class_mean_ignores_imbalance() {
        // class 0 at 50%, class 1 at 100%, with different support
        let a = accuracy(&[0, 9, 1], &[0, 0, 1]).unwrap();
        let b = accuracy(&[0, 0, 9, 9, 1, 1, 1], &[0, 0, 0, 0, 1, 1, 1]).unwrap();
        assert_eq!(a.per_class_mean, b.per_class_mean);
        assert_ne!(a.overall, b.overall);
    }

    #[test]
    fn skewness_cases() {
        assert_eq!(skewness(&[4.0, 4.0, 4.0]), 0.0);
        // single hub among three: (6,0,0), mean 2, var 8, sum 64 - 8 - 8 = 48
        let s = skewness(&[6.0, 0.0, 0.0]);
        assert!((s - 48.0 / (3.0 * 8f64.powf(1.5))).abs() < 1e-12);
        assert!(s > 0.0);
    }

    #[test]
    fn neighbor_counts_top_k() {
        let d = ndarray::array![[0.1, 0.5, 0.3], [0.9, 0.2, 0.2]];
        assert_eq!(neighbor_counts(d.view(), &[0, 1, 2], 1).unwrap(), vec![1, 1, 0]);
        assert_eq!(neighbor_counts(d.view(), &[0, 1, 2], 2).unwrap(), vec![1, 1, 2]);
        assert_eq!(neighbor_counts(d.view(), &[0, 2], 1).unwrap(), vec![1, 1]);
        assert!(neighbor_counts(d.view(), &[0, 1, 2], 0).is_err());
        assert!(neighbor_counts(d.view(), &[0, 1, 2], 4).is_err());
    }
}
