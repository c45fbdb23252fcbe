//! Embedding and semantic tables, their CSV interchange format, the synthetic
//! benchmark generator and class hold-out for cross-validation.
//!
//! Embeddings CSV header: `instance_id,label,split,f0,...,f{m-1}`.
//! Semantics CSV header: `class_id,name,partition,e0,...,e{d-1}`.
//! Floats are written in shortest round-trip form so save/load is exact.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderParams, PointSet};
use crate::error::{Result, ZslError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    SeenTrain,
    SeenTest,
    UnseenTest,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::SeenTrain => "seen-train",
            Split::SeenTest => "seen-test",
            Split::UnseenTest => "unseen-test",
        }
    }

    fn partition(self) -> Partition {
        match self {
            Split::SeenTrain | Split::SeenTest => Partition::Seen,
            Split::UnseenTest => Partition::Unseen,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "seen-train" => Ok(Split::SeenTrain),
            "seen-test" => Ok(Split::SeenTest),
            "unseen-test" => Ok(Split::UnseenTest),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Seen,
    Unseen,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Seen => "seen",
            Partition::Unseen => "unseen",
        }
    }
}

impl FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "seen" => Ok(Partition::Seen),
            "unseen" => Ok(Partition::Unseen),
            other => Err(format!("unknown partition `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassEntry {
    pub id: String,
    pub name: String,
    pub partition: Partition,
}

/// Per-class semantic vectors with a disjoint seen/unseen partition.
///
/// Classes are addressed by their row index in the table; argmin ties
/// anywhere in the crate resolve to the lowest index.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticTable {
    classes: Vec<ClassEntry>,
    vectors: Array2<f64>,
    seen: Vec<usize>,
    unseen: Vec<usize>,
    by_id: HashMap<String, usize>,
}

impl SemanticTable {
    pub fn new(classes: Vec<ClassEntry>, vectors: Array2<f64>) -> Result<Self> {
        if classes.len() != vectors.nrows() {
            return Err(ZslError::Validation(format!(
                "{} classes but {} semantic vectors",
                classes.len(),
                vectors.nrows()
            )));
        }
        if vectors.ncols() == 0 {
            return Err(ZslError::Validation("semantic dimension must be positive".into()));
        }
        if let Some(v) = vectors.iter().find(|v| !v.is_finite()) {
            return Err(ZslError::Validation(format!("non-finite semantic component {v}")));
        }
        let mut by_id = HashMap::with_capacity(classes.len());
        let mut partition_of: HashMap<&str, Partition> = HashMap::new();
        for (i, c) in classes.iter().enumerate() {
            if let Some(prev) = partition_of.get(c.id.as_str()) {
                if *prev != c.partition {
                    return Err(ZslError::Partition(c.id.clone()));
                }
                return Err(ZslError::Validation(format!("duplicate class id `{}`", c.id)));
            }
            partition_of.insert(&c.id, c.partition);
            by_id.insert(c.id.clone(), i);
        }
        let seen = (0..classes.len()).filter(|&i| classes[i].partition == Partition::Seen).collect();
        let unseen = (0..classes.len()).filter(|&i| classes[i].partition == Partition::Unseen).collect();
        Ok(SemanticTable { classes, vectors, seen, unseen, by_id })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn semantic_dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn num_seen(&self) -> usize {
        self.seen.len()
    }

    pub fn num_unseen(&self) -> usize {
        self.unseen.len()
    }

    /// Indices of seen classes, ascending.
    pub fn seen(&self) -> &[usize] {
        &self.seen
    }

    /// Indices of unseen classes, ascending.
    pub fn unseen(&self) -> &[usize] {
        &self.unseen
    }

    /// All class indices, ascending.
    pub fn all(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    pub fn class(&self, idx: usize) -> &ClassEntry {
        &self.classes[idx]
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn is_seen(&self, idx: usize) -> bool {
        self.classes[idx].partition == Partition::Seen
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, idx: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(idx)
    }

    /// Checks the S >= 1 and U >= 1 requirement of a ZSL/GZSL task.
    pub fn require_task(&self) -> Result<()> {
        if self.seen.is_empty() || self.unseen.is_empty() {
            return Err(ZslError::Validation(format!(
                "a zero-shot task needs at least one seen and one unseen class (S={}, U={})",
                self.seen.len(),
                self.unseen.len()
            )));
        }
        Ok(())
    }

    /// Sub-table with the given classes (in the given order) and partitions.
    fn subset(&self, picks: &[(usize, Partition)]) -> Result<SemanticTable> {
        let classes = picks
            .iter()
            .map(|&(i, p)| ClassEntry { partition: p, ..self.classes[i].clone() })
            .collect();
        let rows: Vec<usize> = picks.iter().map(|&(i, _)| i).collect();
        SemanticTable::new(classes, self.vectors.select(Axis(0), &rows))
    }
}

/// Instance features with split tags. Labels are class indices into the
/// companion [`SemanticTable`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    labels: Vec<Option<usize>>,
    splits: Vec<Split>,
    features: Array2<f64>,
}

impl EmbeddingSet {
    /// Builds a set and checks every invariant against `table`.
    pub fn new(
        ids: Vec<String>,
        labels: Vec<Option<usize>>,
        splits: Vec<Split>,
        features: Array2<f64>,
        table: &SemanticTable,
    ) -> Result<Self> {
        let n = features.nrows();
        if ids.len() != n || labels.len() != n || splits.len() != n {
            return Err(ZslError::Validation("column lengths disagree".into()));
        }
        if features.ncols() == 0 {
            return Err(ZslError::Validation("feature dimension must be positive".into()));
        }
        let mut unique = HashSet::with_capacity(n);
        for i in 0..n {
            let line = i as u64 + 2;
            if !unique.insert(ids[i].as_str()) {
                return Err(ZslError::Validation(format!("duplicate instance id `{}`", ids[i])));
            }
            if features.row(i).iter().any(|v| !v.is_finite()) {
                return Err(ZslError::Validation(format!("instance `{}` has a non-finite feature", ids[i])));
            }
            check_label(labels[i], splits[i], table, line, &ids[i])?;
        }
        Ok(EmbeddingSet { ids, labels, splits, features })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Row indices of all instances carrying one of `splits`, ascending.
    pub fn indices(&self, splits: &[Split]) -> Vec<usize> {
        (0..self.len()).filter(|&i| splits.contains(&self.splits[i])).collect()
    }

    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), idx)
    }
}

fn check_label(label: Option<usize>, split: Split, table: &SemanticTable, line: u64, id: &str) -> Result<()> {
    match label {
        None if split == Split::SeenTrain => Err(ZslError::Validation(format!(
            "line {line}: seen-train instance `{id}` has no label"
        ))),
        None => Ok(()),
        Some(c) if c >= table.len() => Err(ZslError::Reference {
            line,
            class_id: c.to_string(),
            msg: "class index out of range".into(),
        }),
        Some(c) => {
            let want = split.partition();
            if table.class(c).partition != want {
                return Err(ZslError::Reference {
                    line,
                    class_id: table.class(c).id.clone(),
                    msg: format!("{split} row references a {} class", table.class(c).partition.as_str()),
                });
            }
            Ok(())
        }
    }
}

fn parse_float(s: &str, path: &Path, line: u64) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| ZslError::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("`{s}` is not a number"),
    })
}

fn check_header(headers: &csv::StringRecord, fixed: [&str; 3], prefix: char, path: &Path) -> Result<usize> {
    let bad = |msg: String| ZslError::Parse { path: path.to_path_buf(), line: 1, msg };
    if headers.len() < 4 {
        return Err(bad(format!("header needs {} plus at least one vector column", fixed.join(","))));
    }
    for (i, want) in fixed.iter().enumerate() {
        if &headers[i] != *want {
            return Err(bad(format!("column {i} must be `{want}`, found `{}`", &headers[i])));
        }
    }
    for (j, h) in headers.iter().skip(3).enumerate() {
        if h != format!("{prefix}{j}") {
            return Err(bad(format!("expected column `{prefix}{j}`, found `{h}`")));
        }
    }
    Ok(headers.len() - 3)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r)
}

fn csv_err(path: &Path, e: csv::Error) -> ZslError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    ZslError::Parse { path: path.to_path_buf(), line, msg: e.to_string() }
}

/// Reads a semantics CSV.
pub fn load_semantics(path: impl AsRef<Path>) -> Result<SemanticTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| ZslError::io(path, e))?;
    read_semantics(file, path)
}

pub fn read_semantics<R: Read>(r: R, path: &Path) -> Result<SemanticTable> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let dim = check_header(&headers, ["class_id", "name", "partition"], 'e', path)?;
    let mut classes = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != dim + 3 {
            return Err(ZslError::Dimension { line, expected: dim, found: rec.len().saturating_sub(3) });
        }
        let partition = rec[2].parse::<Partition>().map_err(|msg| ZslError::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })?;
        if rec[0].is_empty() {
            return Err(ZslError::Parse { path: path.to_path_buf(), line, msg: "empty class_id".into() });
        }
        for s in rec.iter().skip(3) {
            let v = parse_float(s, path, line)?;
            if !v.is_finite() {
                return Err(ZslError::Validation(format!("line {line}: non-finite semantic component")));
            }
            data.push(v);
        }
        classes.push(ClassEntry { id: rec[0].to_string(), name: rec[1].to_string(), partition });
    }
    let vectors = Array2::from_shape_vec((classes.len(), dim), data).expect("row lengths checked");
    SemanticTable::new(classes, vectors)
}

/// Reads an embeddings CSV, resolving labels against `table`.
pub fn load_embeddings(path: impl AsRef<Path>, table: &SemanticTable) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| ZslError::io(path, e))?;
    read_embeddings(file, path, table)
}

pub fn read_embeddings<R: Read>(r: R, path: &Path, table: &SemanticTable) -> Result<EmbeddingSet> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let dim = check_header(&headers, ["instance_id", "label", "split"], 'f', path)?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    let mut data = Vec::new();
    let mut seen_ids = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != dim + 3 {
            return Err(ZslError::Dimension { line, expected: dim, found: rec.len().saturating_sub(3) });
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(ZslError::Parse { path: path.to_path_buf(), line, msg: "empty instance_id".into() });
        }
        if !seen_ids.insert(id.clone()) {
            return Err(ZslError::Validation(format!("line {line}: duplicate instance id `{id}`")));
        }
        let split = rec[2]
            .parse::<Split>()
            .map_err(|msg| ZslError::Parse { path: path.to_path_buf(), line, msg })?;
        let label = match &rec[1] {
            "" => None,
            cid => Some(table.index_of(cid).ok_or_else(|| ZslError::Reference {
                line,
                class_id: cid.to_string(),
                msg: "not present in the semantic table".into(),
            })?),
        };
        check_label(label, split, table, line, &id)?;
        for s in rec.iter().skip(3) {
            let v = parse_float(s, path, line)?;
            if !v.is_finite() {
                return Err(ZslError::Validation(format!("line {line}: non-finite feature component")));
            }
            data.push(v);
        }
        ids.push(id);
        labels.push(label);
        splits.push(split);
    }
    let features = Array2::from_shape_vec((ids.len(), dim), data).expect("row lengths checked");
    EmbeddingSet::new(ids, labels, splits, features, table)
}

fn float_field(v: f64) -> String {
    // Debug formatting is the shortest representation that parses back to
    // the same bits.
    format!("{v:?}")
}

pub fn write_semantics<W: Write>(w: W, table: &SemanticTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["class_id".to_string(), "name".into(), "partition".into()];
    header.extend((0..table.semantic_dim()).map(|j| format!("e{j}")));
    let io = |e: csv::Error| ZslError::Validation(format!("csv write failed: {e}"));
    wtr.write_record(&header).map_err(io)?;
    for (i, c) in table.classes().iter().enumerate() {
        let mut row = vec![c.id.clone(), c.name.clone(), c.partition.as_str().to_string()];
        row.extend(table.vector(i).iter().map(|&v| float_field(v)));
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush().map_err(|e| ZslError::io("<writer>", e))
}

pub fn write_embeddings<W: Write>(w: W, set: &EmbeddingSet, table: &SemanticTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["instance_id".to_string(), "label".into(), "split".into()];
    header.extend((0..set.feature_dim()).map(|j| format!("f{j}")));
    let io = |e: csv::Error| ZslError::Validation(format!("csv write failed: {e}"));
    wtr.write_record(&header).map_err(io)?;
    for i in 0..set.len() {
        let label = set.labels[i].map(|c| table.class(c).id.clone()).unwrap_or_default();
        let mut row = vec![set.ids[i].clone(), label, set.splits[i].as_str().to_string()];
        row.extend(set.features.row(i).iter().map(|&v| float_field(v)));
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush().map_err(|e| ZslError::io("<writer>", e))
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ZslError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| ZslError::io(path, e))?;
    tmp.persist(path).map_err(|e| ZslError::io(path, e.error))?;
    Ok(())
}

pub fn save_semantics(path: impl AsRef<Path>, table: &SemanticTable) -> Result<()> {
    let mut buf = Vec::new();
    write_semantics(&mut buf, table)?;
    write_atomic(path, &buf)
}

pub fn save_embeddings(path: impl AsRef<Path>, set: &EmbeddingSet, table: &SemanticTable) -> Result<()> {
    let mut buf = Vec::new();
    write_embeddings(&mut buf, set, table)?;
    write_atomic(path, &buf)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticMode {
    /// Features are noisy copies of a per-class prototype vector.
    #[default]
    Clusters,
    /// Features are produced by encoding noisy per-class 3D point sets.
    Pointsets,
}

/// Parameters of the synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_seen_classes: usize,
    pub num_unseen_classes: usize,
    pub feature_dim: usize,
    pub semantic_dim: usize,
    pub instances_per_class: usize,
    /// Within-class standard deviation of instance noise.
    pub cluster_spread: f64,
    /// Standard deviation of the per-class deviation from the exact
    /// semantic-to-feature relation.
    pub semantic_noise: f64,
    /// Standard deviation of prototype coordinates (clusters mode) or of
    /// template point coordinates (pointsets mode).
    pub prototype_scale: f64,
    pub points_per_set: usize,
    pub mode: SyntheticMode,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_seen_classes: 10,
            num_unseen_classes: 5,
            feature_dim: 64,
            semantic_dim: 16,
            instances_per_class: 100,
            cluster_spread: 0.9,
            semantic_noise: 0.4,
            prototype_scale: 0.4,
            points_per_set: 32,
            mode: SyntheticMode::Clusters,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_seen_classes", self.num_seen_classes),
            ("num_unseen_classes", self.num_unseen_classes),
            ("feature_dim", self.feature_dim),
            ("semantic_dim", self.semantic_dim),
            ("instances_per_class", self.instances_per_class),
            ("points_per_set", self.points_per_set),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ZslError::Validation(format!("{name} must be at least 1")));
            }
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return Err(ZslError::Validation("cluster_spread must be positive".into()));
        }
        if !(self.semantic_noise >= 0.0 && self.semantic_noise.is_finite()) {
            return Err(ZslError::Validation("semantic_noise must be nonnegative".into()));
        }
        if !(self.prototype_scale > 0.0 && self.prototype_scale.is_finite()) {
            return Err(ZslError::Validation("prototype_scale must be positive".into()));
        }
        Ok(())
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    (0..n).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect::<Vec<f64>>().into()
}

fn normal_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    let data = (0..rows * cols).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape")
}

/// Number of seen-class instances (by index within the class) assigned to seen-train.
fn train_count(per_class: usize) -> usize {
    (per_class * 4 / 5).max(1)
}

/// Generates a labeled benchmark. A pure function of `spec`.
///
/// Seen classes come first in the table, then unseen classes. Per class,
/// the first 80% of instances of a seen class are seen-train, the rest
/// seen-test; every instance of an unseen class is unseen-test.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(EmbeddingSet, SemanticTable)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (s, u) = (spec.num_seen_classes, spec.num_unseen_classes);
    let k = s + u;
    let d = spec.semantic_dim;
    let m = spec.feature_dim;

    let semantics = normal_mat(&mut rng, k, d, 1.0);
    let classes: Vec<ClassEntry> = (0..k)
        .map(|c| {
            let (prefix, partition, local) =
                if c < s { ("s", Partition::Seen, c) } else { ("u", Partition::Unseen, c - s) };
            ClassEntry {
                id: format!("{prefix}{local:02}"),
                name: format!("{}-class-{local}", partition.as_str()),
                partition,
            }
        })
        .collect();
    let table = SemanticTable::new(classes, semantics)?;

    let n = spec.instances_per_class;
    let mut features = Array2::<f64>::zeros((k * n, m));
    match spec.mode {
        SyntheticMode::Clusters => {
            // prototype = A e + noise, with A scaled so prototype coordinates
            // have standard deviation `prototype_scale`.
            let map = normal_mat(&mut rng, d, m, spec.prototype_scale / (d as f64).sqrt());
            let mut protos = table.vectors().dot(&map);
            protos += &normal_mat(&mut rng, k, m, spec.semantic_noise);
            for c in 0..k {
                for j in 0..n {
                    let noise = normal_vec(&mut rng, m, spec.cluster_spread);
                    features.row_mut(c * n + j).assign(&(&protos.row(c) + &noise));
                }
            }
        }
        SyntheticMode::Pointsets => {
            let p = spec.points_per_set;
            let encoder = EncoderParams::init(32, m, spec.seed ^ 0x5e75_e7c0_de00_0001)?;
            // template point j of class c = G_j e_c + noise, G_j a 3 x d map.
            let maps = normal_mat(&mut rng, d, 3 * p, spec.prototype_scale / (d as f64).sqrt());
            let mut templates = table.vectors().dot(&maps);
            templates += &normal_mat(&mut rng, k, 3 * p, spec.semantic_noise);
            for c in 0..k {
                let base = templates.row(c).to_owned().into_shape_with_order((p, 3)).expect("shape");
                for j in 0..n {
                    let mut pts = &base + &normal_mat(&mut rng, p, 3, spec.cluster_spread);
                    let mut order: Vec<usize> = (0..p).collect();
                    order.shuffle(&mut rng);
                    pts = pts.select(Axis(0), &order);
                    let set = PointSet::new(pts)?;
                    features.row_mut(c * n + j).assign(&encoder.encode(&set)?);
                }
            }
        }
    }

    let n_train = train_count(n);
    let mut ids = Vec::with_capacity(k * n);
    let mut labels = Vec::with_capacity(k * n);
    let mut splits = Vec::with_capacity(k * n);
    for c in 0..k {
        for j in 0..n {
            ids.push(format!("i{:06}", c * n + j));
            labels.push(Some(c));
            splits.push(match (c < s, j < n_train) {
                (true, true) => Split::SeenTrain,
                (true, false) => Split::SeenTest,
                (false, _) => Split::UnseenTest,
            });
        }
    }
    let set = EmbeddingSet::new(ids, labels, splits, features, &table)?;
    Ok((set, table))
}

/// Randomly moves `k` seen classes into a validation partition.
///
/// Returns `(reduced, validation)`: `reduced` holds the S-k remaining seen
/// classes; `validation` holds the same seen classes plus the `k` held-out
/// classes re-tagged unseen. Original unseen classes appear in neither.
pub fn hold_out_unseen_validation(
    table: &SemanticTable,
    k: usize,
    seed: u64,
) -> Result<(SemanticTable, SemanticTable)> {
    let s = table.num_seen();
    if k == 0 || k >= s {
        return Err(ZslError::arg(format!("hold-out size must satisfy 0 < k < S (k={k}, S={s})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = table.seen().to_vec();
    seen.shuffle(&mut rng);
    let mut held: Vec<usize> = seen[..k].to_vec();
    let mut kept: Vec<usize> = seen[k..].to_vec();
    held.sort_unstable();
    kept.sort_unstable();
    let reduced = table.subset(&kept.iter().map(|&i| (i, Partition::Seen)).collect::<Vec<_>>())?;
    let picks: Vec<(usize, Partition)> = kept
        .iter()
        .map(|&i| (i, Partition::Seen))
        .chain(held.iter().map(|&i| (i, Partition::Unseen)))
        .collect();
    let validation = table.subset(&picks)?;
    Ok((reduced, validation))
}

/// Builds a cross-validation task from labeled seen data.
///
/// Held-out classes' instances become unseen-test; the remaining seen
/// classes keep their seen-train / seen-test rows; rows of the original
/// unseen classes and unlabeled rows are dropped.
pub fn validation_task(
    data: &EmbeddingSet,
    table: &SemanticTable,
    k: usize,
    seed: u64,
) -> Result<(EmbeddingSet, SemanticTable)> {
    let (_, vtable) = hold_out_unseen_validation(table, k, seed)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    for i in 0..data.len() {
        let Some(c) = data.labels[i] else { continue };
        if !table.is_seen(c) {
            continue;
        }
        let nc = vtable.index_of(&table.class(c).id).expect("seen class survives hold-out");
        let split = if vtable.is_seen(nc) { data.splits[i] } else { Split::UnseenTest };
        rows.push(i);
        labels.push(Some(nc));
        splits.push(split);
    }
    let ids = rows.iter().map(|&i| data.ids[i].clone()).collect();
    let set = EmbeddingSet::new(ids, labels, splits, data.rows(&rows), &vtable)?;
    Ok((set, vtable))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table() -> SemanticTable {
        let classes = vec![
            ClassEntry { id: "a".into(), name: "A".into(), partition: Partition::Seen },
            ClassEntry { id: "b".into(), name: "B".into(), partition: Partition::Seen },
            ClassEntry { id: "z".into(), name: "Z".into(), partition: Partition::Unseen },
        ];
        SemanticTable::new(classes, Array2::from_shape_fn((3, 2), |(i, j)| (i * 2 + j) as f64)).unwrap()
    }

    fn read_emb(text: &str, table: &SemanticTable) -> Result<EmbeddingSet> {
        read_embeddings(text.as_bytes(), Path::new("mem.csv"), table)
    }

    #[test]
    fn loads_four_valid_rows() {
        let t = small_table();
        let text = "instance_id,label,split,f0,f1,f2\n\
                    x1,a,seen-train,1,2,3\n\
                    x2,b,seen-train,0.5,-1,2e-3\n\
                    x3,b,seen-test,0,0,0\n\
                    x4,,unseen-test,1,1,1\n";
        let set = read_emb(text, &t).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.feature_dim(), 3);
        assert_eq!(set.labels()[1], Some(1));
        assert_eq!(set.labels()[3], None);
    }

    #[test]
    fn short_row_is_dimension_error_at_its_line() {
        let t = small_table();
        let text = "instance_id,label,split,f0,f1,f2\nx1,a,seen-train,1,2,3\nx2,a,seen-train,1,2\n";
        match read_emb(text, &t) {
            Err(ZslError::Dimension { line, expected, found }) => {
                assert_eq!((line, expected, found), (3, 3, 2));
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn seen_train_row_with_unseen_class_is_reference_error() {
        let t = small_table();
        let text = "instance_id,label,split,f0\nx1,z,seen-train,1\n";
        assert!(matches!(read_emb(text, &t), Err(ZslError::Reference { line: 2, .. })));
        let text = "instance_id,label,split,f0\nx1,nope,seen-test,1\n";
        assert!(matches!(read_emb(text, &t), Err(ZslError::Reference { .. })));
    }

    #[test]
    fn malformed_and_non_finite_rows() {
        let t = small_table();
        let text = "instance_id,label,split,f0\nx1,a,seen-train,abc\n";
        assert!(matches!(read_emb(text, &t), Err(ZslError::Parse { line: 2, .. })));
        let text = "instance_id,label,split,f0\nx1,a,seen-train,NaN\n";
        assert!(matches!(read_emb(text, &t), Err(ZslError::Validation(_))));
        let text = "instance_id,label,split,f0\nx1,a,train,1\n";
        assert!(matches!(read_emb(text, &t), Err(ZslError::Parse { .. })));
        let text = "instance_id,label,split,f0\nx1,,seen-train,1\n";
        assert!(matches!(read_emb(text, &t), Err(ZslError::Validation(_))));
        let text = "instance_id,label,split,f0\nx1,a,seen-train,1\nx1,a,seen-train,1\n";
        assert!(matches!(read_emb(text, &t), Err(ZslError::Validation(_))));
    }

    #[test]
    fn semantics_partition_and_duplicates() {
        let p = Path::new("sem.csv");
        let ok = "class_id,name,partition,e0,e1\na,A,seen,1,2\nb,B,unseen,3,4\n";
        let t = read_semantics(ok.as_bytes(), p).unwrap();
        assert_eq!((t.num_seen(), t.num_unseen(), t.semantic_dim()), (1, 1, 2));
        let both = "class_id,name,partition,e0\na,A,seen,1\na,A,unseen,2\n";
        assert!(matches!(read_semantics(both.as_bytes(), p), Err(ZslError::Partition(_))));
        let dup = "class_id,name,partition,e0\na,A,seen,1\na,A2,seen,2\n";
        assert!(matches!(read_semantics(dup.as_bytes(), p), Err(ZslError::Validation(_))));
    }

    #[test]
    fn semantics_counts_for_wide_vectors() {
        let mut text = String::from("class_id,name,partition");
        for j in 0..300 {
            text.push_str(&format!(",e{j}"));
        }
        text.push('\n');
        for c in 0..14 {
            let part = if c < 10 { "seen" } else { "unseen" };
            text.push_str(&format!("c{c},name{c},{part}"));
            for j in 0..300 {
                text.push_str(&format!(",{}", (c * 300 + j) as f64 * 1e-3));
            }
            text.push('\n');
        }
        let t = read_semantics(text.as_bytes(), Path::new("w2v.csv")).unwrap();
        assert_eq!((t.num_seen(), t.num_unseen(), t.semantic_dim()), (10, 4, 300));
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let spec = SyntheticSpec {
            num_seen_classes: 5,
            num_unseen_classes: 3,
            instances_per_class: 20,
            seed: 7,
            ..Default::default()
        };
        let (a, ta) = make_synthetic(&spec).unwrap();
        let (b, tb) = make_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        // count oracle over the generated records
        let mut seen = 0;
        let mut unseen = 0;
        for (i, l) in a.labels().iter().enumerate() {
            if ta.is_seen(l.unwrap()) {
                seen += 1;
                assert_ne!(a.splits()[i], Split::UnseenTest);
            } else {
                unseen += 1;
                assert_eq!(a.splits()[i], Split::UnseenTest);
            }
        }
        assert_eq!((seen, unseen), (100, 60));
        assert_eq!(a.indices(&[Split::SeenTrain]).len(), 80);
        assert_eq!(a.indices(&[Split::SeenTest]).len(), 20);
    }

    #[test]
    fn synthetic_zero_spread_limit_collapses_clusters() {
        for mode in [SyntheticMode::Clusters, SyntheticMode::Pointsets] {
            let spec = SyntheticSpec {
                num_seen_classes: 2,
                num_unseen_classes: 1,
                feature_dim: 8,
                semantic_dim: 4,
                instances_per_class: 5,
                points_per_set: 6,
                cluster_spread: 1e-300,
                mode,
                ..Default::default()
            };
            let (set, _) = make_synthetic(&spec).unwrap();
            for c in 0..3 {
                let first = set.features().row(c * 5).to_owned();
                for j in 1..5 {
                    let row = set.features().row(c * 5 + j);
                    for (x, y) in row.iter().zip(first.iter()) {
                        assert!((x - y).abs() < 1e-12, "{mode:?}: {x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_synthetic_spec() {
        let spec = SyntheticSpec { num_seen_classes: 0, ..Default::default() };
        assert!(matches!(make_synthetic(&spec), Err(ZslError::Validation(_))));
        let spec = SyntheticSpec { cluster_spread: 0.0, ..Default::default() };
        assert!(make_synthetic(&spec).is_err());
    }

    fn seen_table(s: usize, u: usize) -> SemanticTable {
        let classes = (0..s + u)
            .map(|i| ClassEntry {
                id: format!("c{i}"),
                name: String::new(),
                partition: if i < s { Partition::Seen } else { Partition::Unseen },
            })
            .collect();
        SemanticTable::new(classes, Array2::from_shape_fn((s + u, 3), |(i, j)| (i + j) as f64)).unwrap()
    }

    #[test]
    fn hold_out_sizes() {
        let t = seen_table(30, 10);
        let (r, v) = hold_out_unseen_validation(&t, 5, 1).unwrap();
        assert_eq!((r.num_seen(), r.num_unseen()), (25, 0));
        assert_eq!((v.num_seen(), v.num_unseen()), (25, 5));
        let t = seen_table(26, 11);
        let (r, v) = hold_out_unseen_validation(&t, 4, 1).unwrap();
        assert_eq!((r.num_seen(), v.num_unseen()), (22, 4));
        assert!(matches!(hold_out_unseen_validation(&t, 0, 1), Err(ZslError::Argument(_))));
        assert!(matches!(hold_out_unseen_validation(&t, 26, 1), Err(ZslError::Argument(_))));
    }

    #[test]
    fn hold_out_partitions_original_seen() {
        let t = seen_table(12, 3);
        for seed in 0..20 {
            let (r, v) = hold_out_unseen_validation(&t, 4, seed).unwrap();
            let kept: HashSet<_> = r.classes().iter().map(|c| c.id.clone()).collect();
            let held: HashSet<_> = v.unseen().iter().map(|&i| v.class(i).id.clone()).collect();
            assert!(kept.is_disjoint(&held));
            let orig: HashSet<_> = t.seen().iter().map(|&i| t.class(i).id.clone()).collect();
            assert_eq!(&kept | &held, orig);
            // vectors follow their ids
            for i in 0..v.len() {
                let o = t.index_of(&v.class(i).id).unwrap();
                assert_eq!(v.vector(i), t.vector(o));
            }
        }
        let a = hold_out_unseen_validation(&t, 4, 9).unwrap();
        let b = hold_out_unseen_validation(&t, 4, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation_task_retags_held_out_rows() {
        let spec = SyntheticSpec { instances_per_class: 10, ..Default::default() };
        let (set, table) = make_synthetic(&spec).unwrap();
        let (vset, vtable) = validation_task(&set, &table, 3, 4).unwrap();
        assert_eq!((vtable.num_seen(), vtable.num_unseen()), (7, 3));
        assert_eq!(vset.len(), 100);
        assert_eq!(vset.indices(&[Split::UnseenTest]).len(), 30);
        for i in 0..vset.len() {
            let c = vset.labels()[i].unwrap();
            assert_eq!(vtable.is_seen(c), vset.splits()[i] != Split::UnseenTest);
        }
    }
}
