//! Training loops: uni-modal backbone pretraining, adaptive-anchor binding
//! and fixed-anchor binding.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anchors::{build_anchors, AnchorStrategy};
use crate::error::{Error, Result};
use crate::losses::{anchored_loss, info_nce, Direction, DEFAULT_TAU};
use crate::numkit::{AdamConfig, AdamState, Matrix, Mlp, MlpGrads, SeededRng};
use crate::synthgen::{MultiModalDataset, Split};

/// One encoder per modality, all mapping into the same embedding space.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSet {
    pub encoders: Vec<Mlp>,
    pub trainable: Vec<bool>,
}

impl EncoderSet {
    pub fn new(encoders: Vec<Mlp>) -> Result<Self> {
        let d = encoders.first().map(Mlp::output_dim).ok_or_else(|| Error::config("no encoders"))?;
        if encoders.iter().any(|e| e.output_dim() != d) {
            return Err(Error::shape("encoders disagree on embedding dimension"));
        }
        let trainable = vec![true; encoders.len()];
        Ok(Self {
            encoders,
            trainable,
        })
    }

    /// Default-architecture encoders with independent random initializations.
    pub fn random(input_dims: &[usize], rng: &SeededRng) -> Result<Self> {
        let encoders = input_dims
            .iter()
            .enumerate()
            .map(|(i, &d)| Mlp::encoder(d, &mut rng.fork(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(encoders)
    }

    pub fn len(&self) -> usize {
        self.encoders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encoders.is_empty()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoders[0].output_dim()
    }

    pub fn freeze(&mut self, modality: usize) {
        self.trainable[modality] = false;
    }

    pub fn embed(&self, modality: usize, x: &Matrix) -> Result<Matrix> {
        self.encoders[modality].forward(x)
    }

    pub fn checksums(&self) -> Vec<String> {
        self.encoders.iter().map(Mlp::checksum).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BindConfig {
    pub tau: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: AdamConfig,
    /// Loss directions for fixed-anchor binding.
    pub direction: Direction,
    pub seed: u64,
}

impl Default for BindConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            batch_size: 256,
            epochs: 100,
            optimizer: AdamConfig::default(),
            direction: Direction::Symmetric,
            seed: 0,
        }
    }
}

impl BindConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::config("temperature must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch size must be at least 2"));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Per-epoch mean loss for every modality (`None` where a modality was not
/// trained), plus timing and final parameter digests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub method: String,
    pub losses: Vec<Vec<Option<f64>>>,
    pub wall_clock_secs: f64,
    pub checksums: Vec<String>,
}

impl TrainTrace {
    fn new(method: &str) -> Self {
        Self {
            method: method.to_string(),
            losses: Vec::new(),
            wall_clock_secs: 0.0,
            checksums: Vec::new(),
        }
    }

    pub fn epochs(&self) -> usize {
        self.losses.len()
    }

    /// Mean over trained modalities, per epoch.
    pub fn mean_losses(&self) -> Vec<f64> {
        self.losses
            .iter()
            .map(|row| {
                let vals: Vec<f64> = row.iter().flatten().copied().collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect()
    }

    /// First epoch (1-based) by which `fraction` of the total loss reduction
    /// from epoch 1 to the final epoch has been achieved.
    pub fn saturation_epoch(&self, fraction: f64) -> Option<usize> {
        let curve = self.mean_losses();
        let (first, last) = (*curve.first()?, *curve.last()?);
        let target = first - fraction * (first - last);
        curve.iter().position(|&l| l <= target).map(|e| e + 1)
    }

    /// `epoch,modality,loss` rows, 1-based epoch and modality numbers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,modality,loss\n");
        for (e, row) in self.losses.iter().enumerate() {
            for (m, l) in row.iter().enumerate() {
                if let Some(l) = l {
                    out.push_str(&format!("{},{},{}\n", e + 1, m + 1, l));
                }
            }
        }
        out
    }
}

struct LossAccumulator {
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl LossAccumulator {
    fn new(m: usize) -> Self {
        Self {
            sums: vec![0.0; m],
            counts: vec![0; m],
        }
    }

    fn add(&mut self, modality: usize, loss: f64) {
        self.sums[modality] += loss;
        self.counts[modality] += 1;
    }

    fn finish(self) -> Vec<Option<f64>> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }
}

/// Shuffled training batches; a trailing partial batch is kept when it has at
/// least two pairs.
fn epoch_batches(train: &[usize], batch_size: usize, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    let mut order = train.to_vec();
    rng.shuffle(&mut order);
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

fn check_dataset(ds: &MultiModalDataset, encoders: &EncoderSet) -> Result<Vec<usize>> {
    if ds.modality_count() != encoders.len() {
        return Err(Error::config(format!(
            "{} encoders for {} modalities",
            encoders.len(),
            ds.modality_count()
        )));
    }
    let train = ds.indices(Split::Train);
    if train.len() < 2 {
        return Err(Error::data("need at least two training pairs"));
    }
    Ok(train)
}

fn step_encoder(
    net: &mut Mlp,
    opt: &mut AdamState,
    x: &Matrix,
    anchors: &Matrix,
    tau: f64,
    direction: Direction,
) -> Result<f64> {
    let (emb, cache) = net.forward_cached(x)?;
    let out = anchored_loss(anchors, &emb, tau, direction)?;
    if !out.loss.is_finite() {
        return Ok(out.loss);
    }
    let grads = net.backward_cached(&cache, &out.grad)?;
    opt.step(net, &grads)?;
    Ok(out.loss)
}

fn diverged(epoch: usize, modality: usize, mut trace: TrainTrace, acc: LossAccumulator) -> Error {
    trace.losses.push(acc.finish());
    Error::Diverged {
        epoch,
        modality,
        trace: Box::new(trace),
    }
}

/// Uni-modal contrastive pretraining: two independent augmentations of each
/// sample form the positive pair. Returns the trained encoder and its
/// per-epoch mean loss.
pub fn pretrain_backbone(
    ds: &MultiModalDataset,
    modality: usize,
    init: &Mlp,
    config: &BindConfig,
) -> Result<(Mlp, Vec<f64>)> {
    config.validate()?;
    let train = ds.indices(Split::Train);
    if train.len() < 2 {
        return Err(Error::data("need at least two training pairs"));
    }
    let mut net = init.clone();
    let mut opt = AdamState::new(&net, config.optimizer);
    let mut rng = SeededRng::new(config.seed).fork(0x5052_4554 + modality as u64);
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (mut total, mut count) = (0.0, 0usize);
        for batch in epoch_batches(&train, config.batch_size, &mut rng) {
            let v1 = ds.augment_rows(modality, &batch, &mut rng)?;
            let v2 = ds.augment_rows(modality, &batch, &mut rng)?;
            let (z1, c1) = net.forward_cached(&v1)?;
            let (z2, c2) = net.forward_cached(&v2)?;
            let a = info_nce(&z1, &z2, config.tau)?;
            let b = info_nce(&z2, &z1, config.tau)?;
            let loss = a.loss + b.loss;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "pretraining loss became {loss} at epoch {}",
                    epoch + 1
                )));
            }
            let mut g1 = a.grad_left;
            g1.add_assign(&b.grad_right)?;
            let mut g2 = a.grad_right;
            g2.add_assign(&b.grad_left)?;
            let mut grads: MlpGrads = net.backward_cached(&c1, &g1)?;
            grads.add_assign(&net.backward_cached(&c2, &g2)?)?;
            opt.step(&mut net, &grads)?;
            total += loss;
            count += 1;
        }
        curve.push(total / count.max(1) as f64);
    }
    Ok((net, curve))
}

/// Adaptive-anchor binding.
///
/// Each batch builds anchors from augmented views of every modality, then
/// updates each trainable encoder in turn against those fixed anchors using
/// the symmetrized anchored loss on un-augmented inputs.
pub fn train_adaptive(
    ds: &MultiModalDataset,
    encoders: &EncoderSet,
    strategy: &AnchorStrategy,
    config: &BindConfig,
) -> Result<(EncoderSet, TrainTrace)> {
    config.validate()?;
    strategy.validate(encoders.len())?;
    let train = check_dataset(ds, encoders)?;
    let start = Instant::now();
    let m = encoders.len();
    let mut set = encoders.clone();
    let mut opts: Vec<AdamState> = set
        .encoders
        .iter()
        .map(|e| AdamState::new(e, config.optimizer))
        .collect();
    let mut rng = SeededRng::new(config.seed).fork(0x4342);
    let mut trace = TrainTrace::new(&strategy.to_string());
    for epoch in 0..config.epochs {
        let mut acc = LossAccumulator::new(m);
        for batch in epoch_batches(&train, config.batch_size, &mut rng) {
            let views = (0..m)
                .map(|i| {
                    let x = ds.augment_rows(i, &batch, &mut rng)?;
                    set.embed(i, &x)
                })
                .collect::<Result<Vec<_>>>()?;
            let anchors = build_anchors(strategy, &views, None, &mut rng)?;
            let skip = match strategy {
                AnchorStrategy::RandomModality {
                    freeze_anchor_encoder: true,
                } => anchors.chosen_modality,
                _ => None,
            };
            for i in 0..m {
                if !set.trainable[i] || skip == Some(i) {
                    continue;
                }
                let x = ds.rows(i, &batch);
                let loss = step_encoder(
                    &mut set.encoders[i],
                    &mut opts[i],
                    &x,
                    &anchors.anchors,
                    config.tau,
                    Direction::Symmetric,
                )?;
                if !loss.is_finite() {
                    return Err(diverged(epoch + 1, i, trace, acc));
                }
                acc.add(i, loss);
            }
        }
        trace.losses.push(acc.finish());
    }
    trace.wall_clock_secs = start.elapsed().as_secs_f64();
    trace.checksums = set.checksums();
    Ok((set, trace))
}

/// Centroid-anchor binding.
pub fn train_centrobind(
    ds: &MultiModalDataset,
    encoders: &EncoderSet,
    config: &BindConfig,
) -> Result<(EncoderSet, TrainTrace)> {
    train_adaptive(ds, encoders, &AnchorStrategy::Centroid, config)
}

/// Fixed-anchor binding: every trainable encoder other than `anchor` is fit to
/// the frozen anchor encoder's embeddings.
pub fn train_fabind(
    ds: &MultiModalDataset,
    encoders: &EncoderSet,
    anchor: usize,
    config: &BindConfig,
) -> Result<(EncoderSet, TrainTrace)> {
    config.validate()?;
    let train = check_dataset(ds, encoders)?;
    if anchor >= encoders.len() {
        return Err(Error::config(format!("anchor modality {anchor} out of range")));
    }
    if encoders.trainable[anchor] {
        return Err(Error::config("the fixed anchor encoder must be frozen"));
    }
    let start = Instant::now();
    let m = encoders.len();
    let mut set = encoders.clone();
    let mut opts: Vec<AdamState> = set
        .encoders
        .iter()
        .map(|e| AdamState::new(e, config.optimizer))
        .collect();
    let mut rng = SeededRng::new(config.seed).fork(0x4642);
    let mut trace = TrainTrace::new(&format!("fabind:{}", anchor + 1));
    for epoch in 0..config.epochs {
        let mut acc = LossAccumulator::new(m);
        for batch in epoch_batches(&train, config.batch_size, &mut rng) {
            let anchor_emb = set.embed(anchor, &ds.rows(anchor, &batch))?;
            for i in 0..m {
                if i == anchor || !set.trainable[i] {
                    continue;
                }
                let x = ds.rows(i, &batch);
                let loss = step_encoder(
                    &mut set.encoders[i],
                    &mut opts[i],
                    &x,
                    &anchor_emb,
                    config.tau,
                    config.direction,
                )?;
                if !loss.is_finite() {
                    return Err(diverged(epoch + 1, i, trace, acc));
                }
                acc.add(i, loss);
            }
        }
        trace.losses.push(acc.finish());
    }
    trace.wall_clock_secs = start.elapsed().as_secs_f64();
    trace.checksums = set.checksums();
    Ok((set, trace))
}
