//! Downstream evaluation: MLP probes on frozen embeddings, cross-modal
//! retrieval, similarity diagnostics and embedding export.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binder::EncoderSet;
use crate::error::{Error, Result};
use crate::numkit::{dot, Activation, AdamConfig, AdamState, Matrix, Mlp, SeededRng};
use crate::synthgen::{MultiModalDataset, Split};

/// Retrieval depths reported by [`evaluate`].
pub const RETRIEVAL_KS: [usize; 3] = [1, 5, 10];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 200,
            lr: 1e-3,
            batch_size: 256,
        }
    }
}

/// Per-feature standardization fitted on the training rows.
fn standardize(train: &Matrix, test: &Matrix) -> (Matrix, Matrix) {
    let (n, d) = train.shape();
    let mut mean = vec![0.0; d];
    for row in train.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let mut sd = vec![0.0; d];
    for row in train.row_iter() {
        for ((s, v), m) in sd.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2) / n as f64;
        }
    }
    let sd: Vec<f64> = sd.iter().map(|s| s.sqrt().max(1e-8)).collect();
    let apply = |x: &Matrix| {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&mean).zip(&sd) {
                *v = (*v - m) / s;
            }
        }
        out
    };
    (apply(train), apply(test))
}

/// Softmax cross-entropy; returns the mean loss and the gradient on logits.
fn cross_entropy(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let b = logits.rows() as f64;
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / b;
        }
        row[y] -= 1.0 / b;
    }
    (loss / b, grad)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains a one-hidden-layer classifier on `train_x` and returns its accuracy
/// on `test_x`. Inputs are standardized with training statistics.
pub fn probe_accuracy(
    train_x: &Matrix,
    train_y: &[usize],
    test_x: &Matrix,
    test_y: &[usize],
    classes: usize,
    config: &ProbeConfig,
    rng: &mut SeededRng,
) -> Result<f64> {
    if train_x.rows() != train_y.len() || test_x.rows() != test_y.len() {
        return Err(Error::shape("probe features and labels differ in length"));
    }
    if train_x.cols() != test_x.cols() {
        return Err(Error::shape("train and test features differ in width"));
    }
    if test_y.is_empty() {
        return Err(Error::data("empty probe test set"));
    }
    if let Some(&y) = train_y.iter().chain(test_y).find(|&&y| y >= classes) {
        return Err(Error::data(format!("label {y} outside {classes} classes")));
    }
    if train_y.iter().all(|&y| Some(&y) == train_y.first()) {
        return Err(Error::data("probe training set has fewer than two classes"));
    }
    let (train_x, test_x) = standardize(train_x, test_x);
    let mut net = Mlp::random(
        &[train_x.cols(), config.hidden, classes],
        Activation::Relu,
        Activation::Identity,
        false,
        rng,
    )?;
    let mut opt = AdamState::new(
        &net,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..train_y.len()).collect();
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size.max(1)) {
            let x = train_x.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&j| train_y[j]).collect();
            let (logits, cache) = net.forward_cached(&x)?;
            let (loss, grad) = cross_entropy(&logits, &y);
            if !loss.is_finite() {
                return Err(Error::Numeric("probe loss is not finite".into()));
            }
            let grads = net.backward_cached(&cache, &grad)?;
            opt.step(&mut net, &grads)?;
        }
    }
    let logits = net.forward(&test_x)?;
    let hits = logits
        .row_iter()
        .zip(test_y)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(hits as f64 / test_y.len() as f64)
}

fn unit_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    out.normalize_rows();
    out
}

/// Fraction of queries whose true partner (same row index) ranks within the
/// top `k` gallery items by cosine similarity. Ties go to the lower index.
pub fn retrieve_one_to_one(query: &Matrix, gallery: &Matrix, k: usize) -> Result<f64> {
    if query.shape() != gallery.shape() {
        return Err(Error::shape("query and gallery must be paired row by row"));
    }
    let n = gallery.rows();
    if k == 0 || k > n {
        return Err(Error::config(format!("k = {k} with {n} gallery items")));
    }
    let sims = unit_rows(query).matmul_nt(&unit_rows(gallery))?;
    let hits = (0..n)
        .filter(|&j| {
            let row = sims.row(j);
            let target = row[j];
            // rank = items strictly better, plus equal items at lower index
            let rank = row
                .iter()
                .enumerate()
                .filter(|&(l, &s)| s > target || (s == target && l < j))
                .count();
            rank < k
        })
        .count();
    Ok(hits as f64 / n as f64)
}

/// Retrieval where each query is the mean of two modalities' embeddings.
pub fn retrieve_two_to_one(
    query_a: &Matrix,
    query_b: &Matrix,
    gallery: &Matrix,
    k: usize,
) -> Result<f64> {
    query_a.check_same_shape(query_b, "two-to-one query")?;
    let mut q = query_a.clone();
    q.add_assign(query_b)?;
    q.scale(0.5);
    retrieve_one_to_one(&q, gallery, k)
}

/// Mean cosine similarity between paired rows.
pub fn mean_paired_cosine(a: &Matrix, b: &Matrix) -> Result<f64> {
    a.check_same_shape(b, "paired cosine")?;
    if a.rows() == 0 {
        return Err(Error::data("no pairs"));
    }
    let (a, b) = (unit_rows(a), unit_rows(b));
    let total: f64 = a.row_iter().zip(b.row_iter()).map(|(x, y)| dot(x, y)).sum();
    Ok(total / a.rows() as f64)
}

/// Same-modality augmentation agreement and cross-modality positive-pair
/// agreement, averaged over modalities and modality pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub intra: f64,
    pub shared: f64,
}

pub fn similarity_stats(
    encoders: &EncoderSet,
    ds: &MultiModalDataset,
    pairs: &[usize],
    rng: &mut SeededRng,
) -> Result<SimilarityStats> {
    let m = encoders.len();
    let clean = (0..m)
        .map(|i| encoders.embed(i, &ds.rows(i, pairs)))
        .collect::<Result<Vec<_>>>()?;
    let mut intra = 0.0;
    for (i, z) in clean.iter().enumerate() {
        let aug = encoders.embed(i, &ds.augment_rows(i, pairs, rng)?)?;
        intra += mean_paired_cosine(z, &aug)?;
    }
    let mut shared = 0.0;
    let mut count = 0;
    for i in 0..m {
        for l in i + 1..m {
            shared += mean_paired_cosine(&clean[i], &clean[l])?;
            count += 1;
        }
    }
    Ok(SimilarityStats {
        intra: intra / m as f64,
        shared: if count == 0 { f64::NAN } else { shared / count as f64 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEntry {
    /// 0-based query modalities (one or two).
    pub query: Vec<usize>,
    pub gallery: usize,
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub backbone: String,
    pub seed: u64,
    /// Probe accuracy per modality embedding.
    pub modality_accuracy: Vec<f64>,
    /// Probe accuracy on the concatenation of all modality embeddings.
    pub fused_accuracy: f64,
    pub one_to_one: Vec<RetrievalEntry>,
    pub two_to_one: Vec<RetrievalEntry>,
    pub config: serde_json::Value,
}

fn modality_name(i: usize) -> String {
    format!("X_{}", i + 1)
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub const CSV_HEADER: &'static str = "method,backbone,metric,modality,value,seed";

    /// Flat rows without the header. Modality labels are 1-based (`X_1`, ...).
    pub fn csv_rows(&self) -> Vec<String> {
        let row = |metric: &str, modality: &str, value: f64| {
            format!(
                "{},{},{},{},{},{}",
                csv_field(&self.method),
                csv_field(&self.backbone),
                metric,
                modality,
                value,
                self.seed
            )
        };
        let mut rows: Vec<String> = self
            .modality_accuracy
            .iter()
            .enumerate()
            .map(|(i, &a)| row("acc", &modality_name(i), a))
            .collect();
        rows.push(row("acc", "All", self.fused_accuracy));
        for (metric, entries) in [("r1to1", &self.one_to_one), ("r2to1", &self.two_to_one)] {
            for e in entries {
                let q: Vec<String> = e.query.iter().map(|&i| modality_name(i)).collect();
                let label = format!("{}->{}", q.join("+"), modality_name(e.gallery));
                rows.push(row(&format!("{metric}@{}", e.k), &label, e.accuracy));
            }
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in self.csv_rows() {
            out.push_str(&r);
            out.push('\n');
        }
        out
    }
}

/// Quotes a CSV field when it contains a comma or quote.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Evaluation settings for one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub probe: ProbeConfig,
    pub retrieval: bool,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            probe: ProbeConfig::default(),
            retrieval: true,
            seed: 0,
        }
    }
}

/// Embeds one split for every modality.
pub fn embed_split(encoders: &EncoderSet, ds: &MultiModalDataset, split: Split) -> Result<Vec<Matrix>> {
    let idx = ds.indices(split);
    (0..encoders.len())
        .map(|i| encoders.embed(i, &ds.rows(i, &idx)))
        .collect()
}

/// Probes every modality and the concatenation (trained on the training
/// split, scored on the test split), and runs retrieval on the test split.
pub fn evaluate(
    encoders: &EncoderSet,
    ds: &MultiModalDataset,
    method: &str,
    backbone: &str,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let m = encoders.len();
    let train = embed_split(encoders, ds, Split::Train)?;
    let test = embed_split(encoders, ds, Split::Test)?;
    let train_y = ds.labels_of(&ds.indices(Split::Train));
    let test_y = ds.labels_of(&ds.indices(Split::Test));
    let k = ds.components();
    let root = SeededRng::new(config.seed);
    let modality_accuracy = (0..m)
        .map(|i| {
            probe_accuracy(
                &train[i],
                &train_y,
                &test[i],
                &test_y,
                k,
                &config.probe,
                &mut root.fork(i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let fused_accuracy = probe_accuracy(
        &Matrix::hcat(&train.iter().collect::<Vec<_>>())?,
        &train_y,
        &Matrix::hcat(&test.iter().collect::<Vec<_>>())?,
        &test_y,
        k,
        &config.probe,
        &mut root.fork(m as u64),
    )?;
    let mut one_to_one = Vec::new();
    let mut two_to_one = Vec::new();
    if config.retrieval {
        let n = test_y.len();
        let ks: Vec<usize> = RETRIEVAL_KS.iter().copied().filter(|&k| k <= n).collect();
        for g in 0..m {
            for q in (0..m).filter(|&q| q != g) {
                for &k in &ks {
                    one_to_one.push(RetrievalEntry {
                        query: vec![q],
                        gallery: g,
                        k,
                        accuracy: retrieve_one_to_one(&test[q], &test[g], k)?,
                    });
                }
            }
            for a in (0..m).filter(|&a| a != g) {
                for b in (a + 1..m).filter(|&b| b != g) {
                    for &k in &ks {
                        two_to_one.push(RetrievalEntry {
                            query: vec![a, b],
                            gallery: g,
                            k,
                            accuracy: retrieve_two_to_one(&test[a], &test[b], &test[g], k)?,
                        });
                    }
                }
            }
        }
    }
    Ok(EvalReport {
        method: method.to_string(),
        backbone: backbone.to_string(),
        seed: config.seed,
        modality_accuracy,
        fused_accuracy,
        one_to_one,
        two_to_one,
        config: serde_json::to_value(config).map_err(|e| Error::Parse(e.to_string()))?,
    })
}

/// Embeddings read back from an export file.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub pair_ids: Vec<usize>,
    /// 1-based modality numbers as written in the file.
    pub modalities: Vec<usize>,
    pub labels: Vec<usize>,
    pub values: Matrix,
}

/// Writes `pair_id,modality,label,dim_0..dim_{d-1}`, one row per pair and
/// modality, modalities numbered from 1. Values use the shortest decimal
/// form that parses back to the same `f64`.
pub fn export_embeddings(encoders: &EncoderSet, ds: &MultiModalDataset, path: &Path) -> Result<()> {
    let d = encoders.embed_dim();
    let mut out = String::from("pair_id,modality,label");
    for c in 0..d {
        out.push_str(&format!(",dim_{c}"));
    }
    out.push('\n');
    let all: Vec<usize> = (0..ds.len()).collect();
    let emb = if all.is_empty() {
        Vec::new()
    } else {
        (0..encoders.len())
            .map(|i| encoders.embed(i, &ds.rows(i, &all)))
            .collect::<Result<Vec<_>>>()?
    };
    for j in all {
        for (i, z) in emb.iter().enumerate() {
            out.push_str(&format!("{},{},{}", j, i + 1, ds.labels[j]));
            for v in z.row(j) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn import_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty embedding file".into()))?;
    let d = header.split(',').count().saturating_sub(3);
    let (mut pair_ids, mut modalities, mut labels, mut data) = (vec![], vec![], vec![], vec![]);
    for (n, line) in lines.enumerate() {
        let bad = || Error::Parse(format!("line {}: malformed embedding row", n + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 3 {
            return Err(bad());
        }
        pair_ids.push(fields[0].parse().map_err(|_| bad())?);
        modalities.push(fields[1].parse().map_err(|_| bad())?);
        labels.push(fields[2].parse().map_err(|_| bad())?);
        for f in &fields[3..] {
            data.push(f.parse::<f64>().map_err(|_| bad())?);
        }
    }
    let values = Matrix::from_vec(pair_ids.len(), d, data)?;
    Ok(EmbeddingTable {
        pair_ids,
        modalities,
        labels,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_2d(theta: f64, m: &Matrix) -> Matrix {
        let (c, s) = (theta.cos(), theta.sin());
        let r = Matrix::from_rows(&[vec![c, s], vec![-s, c]]).unwrap();
        m.matmul(&r).unwrap()
    }

    #[test]
    fn self_retrieval_is_perfect() {
        let mut rng = SeededRng::new(3);
        let data: Vec<f64> = (0..40).map(|_| rng.normal()).collect();
        let q = Matrix::from_vec(20, 2, data).unwrap();
        assert_eq!(retrieve_one_to_one(&q, &q, 1).unwrap(), 1.0);
        assert_eq!(retrieve_two_to_one(&q, &q, &q, 1).unwrap(), 1.0);
    }

    #[test]
    fn retrieval_errors_and_monotone_k() {
        let mut rng = SeededRng::new(5);
        let a = Matrix::from_vec(30, 4, (0..120).map(|_| rng.normal()).collect()).unwrap();
        let b = Matrix::from_vec(30, 4, (0..120).map(|_| rng.normal()).collect()).unwrap();
        assert!(retrieve_one_to_one(&a, &b, 31).is_err());
        assert!(retrieve_one_to_one(&a, &b, 0).is_err());
        let accs: Vec<f64> = [1, 5, 10, 30]
            .iter()
            .map(|&k| retrieve_one_to_one(&a, &b, k).unwrap())
            .collect();
        assert!(accs.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(accs[3], 1.0);
    }

    #[test]
    fn ties_break_toward_lower_index() {
        // every gallery item identical: only query 0 ranks its partner first
        let q = Matrix::filled(4, 2, 1.0);
        assert_eq!(retrieve_one_to_one(&q, &q, 1).unwrap(), 0.25);
        assert_eq!(retrieve_one_to_one(&q, &q, 2).unwrap(), 0.5);
    }

    #[test]
    fn retrieval_is_rotation_invariant() {
        let mut rng = SeededRng::new(9);
        let a = Matrix::from_vec(25, 2, (0..50).map(|_| rng.normal()).collect()).unwrap();
        let b = Matrix::from_vec(25, 2, (0..50).map(|_| rng.normal()).collect()).unwrap();
        for k in [1, 5] {
            let before = retrieve_one_to_one(&a, &b, k).unwrap();
            let after =
                retrieve_one_to_one(&rotation_2d(0.7, &a), &rotation_2d(0.7, &b), k).unwrap();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn one_hot_embeddings_are_separable() {
        let k = 5;
        let y: Vec<usize> = (0..200).map(|j| j % k).collect();
        let mut x = Matrix::zeros(200, k);
        for (j, &c) in y.iter().enumerate() {
            x.set(j, c, 1.0);
        }
        let cfg = ProbeConfig {
            epochs: 50,
            ..ProbeConfig::default()
        };
        let acc = probe_accuracy(&x, &y, &x, &y, k, &cfg, &mut SeededRng::new(1)).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn single_class_probe_rejected() {
        let x = Matrix::zeros(4, 2);
        let err = probe_accuracy(&x, &[1, 1, 1, 1], &x, &[0, 1, 0, 1], 2, &ProbeConfig::default(), &mut SeededRng::new(0));
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn cross_entropy_gradient_rows_sum_to_zero() {
        let logits = Matrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let (loss, grad) = cross_entropy(&logits, &[2, 0]);
        let expected = {
            let a = -(2.0f64.exp() / (0.3f64.exp() + (-1.0f64).exp() + 2.0f64.exp())).ln();
            (a + 3f64.ln()) / 2.0
        };
        assert!((loss - expected).abs() < 1e-14);
        for r in grad.row_iter() {
            assert!(r.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn report_csv_and_json() {
        let report = EvalReport {
            method: "centrobind".into(),
            backbone: "random".into(),
            seed: 11,
            modality_accuracy: vec![0.25, 0.5],
            fused_accuracy: 0.75,
            one_to_one: vec![RetrievalEntry {
                query: vec![0],
                gallery: 1,
                k: 5,
                accuracy: 0.125,
            }],
            two_to_one: vec![],
            config: serde_json::json!({"x": 1}),
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], EvalReport::CSV_HEADER);
        assert_eq!(lines[1], "centrobind,random,acc,X_1,0.25,11");
        assert_eq!(lines[3], "centrobind,random,acc,All,0.75,11");
        assert_eq!(lines[4], "centrobind,random,r1to1@5,X_1->X_2,0.125,11");
        let back = EvalReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
