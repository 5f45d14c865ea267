//! Experiment grids: configuration files, per-cell pipelines, run directories
//! with a completion manifest, and seed-aggregated summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorStrategy;
use crate::binder::{pretrain_backbone, train_adaptive, train_fabind, BindConfig, EncoderSet, TrainTrace};
use crate::error::{Error, Result};
use crate::evalsuite::{csv_field, evaluate, EvalConfig, EvalReport, ProbeConfig};
use crate::losses::Direction;
use crate::numkit::{checkpoint, AdamConfig, SeededRng};
use crate::synthgen::{
    fractions_from_quality, generate_dataset, linear_fractions, DatasetSpec, MultiModalDataset,
};

/// A binding method of the experiment grid.
#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    /// Evaluate the backbones as they are.
    None,
    /// Fixed anchor at the given 0-based modality.
    FaBind(usize),
    Adaptive(AnchorStrategy),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::None => write!(f, "none"),
            Method::FaBind(a) => write!(f, "fabind:{}", a + 1),
            Method::Adaptive(AnchorStrategy::Centroid) => write!(f, "centrobind"),
            Method::Adaptive(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `none | fabind:<i> | centrobind | wavg:<w,..> | random | random-intra | median`,
    /// with fixed-anchor indices counted from 1.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(Method::None);
        }
        if s == "centrobind" {
            return Ok(Method::Adaptive(AnchorStrategy::Centroid));
        }
        if let Some(i) = s.strip_prefix("fabind:") {
            let i: usize = i
                .parse()
                .map_err(|_| Error::config(format!("bad anchor index in '{s}'")))?;
            if i == 0 {
                return Err(Error::config("fixed-anchor indices start at 1"));
            }
            return Ok(Method::FaBind(i - 1));
        }
        Ok(Method::Adaptive(s.parse()?))
    }
}

impl Method {
    pub fn validate(&self, modalities: usize) -> Result<()> {
        match self {
            Method::None => Ok(()),
            Method::FaBind(a) if *a >= modalities => Err(Error::config(format!(
                "fabind:{} refers to a missing modality (M = {modalities})",
                a + 1
            ))),
            Method::FaBind(_) => Ok(()),
            Method::Adaptive(s) => s.validate(modalities),
        }
    }

    /// Directory-safe name.
    pub fn slug(&self) -> String {
        self.to_string().replace([':', ','], "_")
    }

    fn order_key(&self) -> (usize, usize, String) {
        match self {
            Method::None => (0, 0, String::new()),
            Method::FaBind(a) => (1, *a, String::new()),
            Method::Adaptive(AnchorStrategy::Centroid) => (2, 0, String::new()),
            Method::Adaptive(s) => (3, 0, s.to_string()),
        }
    }
}

/// Backbone initialization for a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Pretrained,
    Random,
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Pretrained => "pretrained",
            Backbone::Random => "random",
        })
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pretrained" => Ok(Backbone::Pretrained),
            "random" => Ok(Backbone::Random),
            other => Err(Error::config(format!("unknown backbone '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub modalities: usize,
    #[serde(default = "default_n_total")]
    pub n_total: usize,
    /// Zero-column fractions per modality; defaults to the linear schedule.
    #[serde(default)]
    pub fractions: Option<Vec<f64>>,
    /// Per-modality quality in [0, 1], mapped to fraction `1 − q`.
    #[serde(default)]
    pub quality: Option<Vec<f64>>,
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
    #[serde(default = "default_components")]
    pub components: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_pretrain_epochs")]
    pub pretrain_epochs: usize,
    /// Fixed-anchor loss directions: `symmetric` or `anchor-to-embedding`.
    #[serde(default = "default_direction")]
    pub direction: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_probe_hidden")]
    pub probe_hidden: usize,
    #[serde(default = "default_probe_epochs")]
    pub probe_epochs: usize,
    #[serde(default = "default_lr")]
    pub probe_lr: f64,
    #[serde(default = "default_batch")]
    pub probe_batch_size: usize,
    #[serde(default = "default_true")]
    pub retrieval: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub backbones: Vec<String>,
    pub methods: Vec<String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_n_total() -> usize {
    3000
}
fn default_noise() -> f64 {
    1.0
}
fn default_components() -> usize {
    50
}
fn default_tau() -> f64 {
    crate::losses::DEFAULT_TAU
}
fn default_batch() -> usize {
    256
}
fn default_epochs() -> usize {
    100
}
fn default_lr() -> f64 {
    1e-3
}
fn default_pretrain_epochs() -> usize {
    5
}
fn default_direction() -> String {
    "symmetric".into()
}
fn default_probe_hidden() -> usize {
    128
}
fn default_probe_epochs() -> usize {
    200
}
fn default_true() -> bool {
    true
}
fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_threads() -> usize {
    1
}

pub const DEFAULT_SEEDS: [u64; 5] = [11, 12, 13, 14, 15];

/// The shipped M=4 grid, used when no configuration file is given.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/m4_default.toml");

/// Full experiment description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    /// Parses and validates; syntax and schema errors carry line numbers.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset_spec()?.validate()?;
        self.bind_config(0)?.validate()?;
        if self.run.seeds.is_empty() {
            return Err(Error::config("run.seeds must not be empty"));
        }
        if self.run.threads == 0 {
            return Err(Error::config("run.threads must be at least 1"));
        }
        self.backbones()?;
        for m in self.methods()? {
            m.validate(self.dataset.modalities)?;
        }
        Ok(())
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let d = &self.dataset;
        let mut spec = DatasetSpec::standard(d.modalities, d.n_total);
        spec.noise_scale = d.noise_scale;
        spec.components = d.components;
        spec.fractions = match (&d.fractions, &d.quality) {
            (Some(_), Some(_)) => {
                return Err(Error::config("give either dataset.fractions or dataset.quality"))
            }
            (Some(f), None) => f.clone(),
            (None, Some(q)) => {
                if q.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::config("dataset.quality entries must lie in [0, 1]"));
                }
                fractions_from_quality(q)
            }
            (None, None) => linear_fractions(d.modalities),
        };
        if spec.fractions.len() != d.modalities {
            return Err(Error::config(format!(
                "{} fractions for {} modalities",
                spec.fractions.len(),
                d.modalities
            )));
        }
        Ok(spec)
    }

    pub fn direction(&self) -> Result<Direction> {
        match self.train.direction.as_str() {
            "symmetric" => Ok(Direction::Symmetric),
            "anchor-to-embedding" => Ok(Direction::AnchorToEmbedding),
            other => Err(Error::config(format!("unknown loss direction '{other}'"))),
        }
    }

    pub fn bind_config(&self, seed: u64) -> Result<BindConfig> {
        Ok(BindConfig {
            tau: self.train.tau,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            optimizer: AdamConfig {
                lr: self.train.lr,
                ..AdamConfig::default()
            },
            direction: self.direction()?,
            seed,
        })
    }

    pub fn pretrain_config(&self, seed: u64) -> Result<BindConfig> {
        Ok(BindConfig {
            epochs: self.train.pretrain_epochs,
            ..self.bind_config(seed)?
        })
    }

    pub fn eval_config(&self, seed: u64) -> EvalConfig {
        EvalConfig {
            probe: ProbeConfig {
                hidden: self.eval.probe_hidden,
                epochs: self.eval.probe_epochs,
                lr: self.eval.probe_lr,
                batch_size: self.eval.probe_batch_size,
            },
            retrieval: self.eval.retrieval,
            seed,
        }
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.run.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn backbones(&self) -> Result<Vec<Backbone>> {
        self.run.backbones.iter().map(|b| b.parse()).collect()
    }
}

/// Independent random streams derived from one experiment seed.
pub mod streams {
    pub const DATA: u64 = 0;
    pub const INIT: u64 = 1;
    pub const PRETRAIN: u64 = 2;
    pub const BIND: u64 = 3;
    pub const EVAL: u64 = 4;
}

pub fn derived_seed(seed: u64, stream: u64) -> u64 {
    SeededRng::new(seed).fork(stream).seed()
}

/// Dataset for one seed.
pub fn make_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<MultiModalDataset> {
    generate_dataset(&cfg.dataset_spec()?, derived_seed(seed, streams::DATA))
}

/// Randomly initialized encoders for one seed.
pub fn random_backbones(ds: &MultiModalDataset, seed: u64) -> Result<EncoderSet> {
    let dims = vec![ds.spec.d_x; ds.modality_count()];
    EncoderSet::random(&dims, &SeededRng::new(derived_seed(seed, streams::INIT)))
}

/// Contrastively pretrained copies of the random backbones, with the
/// per-modality pretraining loss curves.
pub fn pretrained_backbones(
    cfg: &ExperimentConfig,
    ds: &MultiModalDataset,
    init: &EncoderSet,
    seed: u64,
) -> Result<(EncoderSet, Vec<Vec<f64>>)> {
    let pcfg = cfg.pretrain_config(derived_seed(seed, streams::PRETRAIN))?;
    let mut set = init.clone();
    let mut curves = Vec::new();
    for i in 0..init.len() {
        let (net, curve) = pretrain_backbone(ds, i, &init.encoders[i], &pcfg)?;
        set.encoders[i] = net;
        curves.push(curve);
    }
    Ok((set, curves))
}

/// Applies one method to a backbone set.
pub fn bind(
    method: &Method,
    ds: &MultiModalDataset,
    backbone: &EncoderSet,
    config: &BindConfig,
) -> Result<(EncoderSet, Option<TrainTrace>)> {
    match method {
        Method::None => Ok((backbone.clone(), None)),
        Method::FaBind(a) => {
            let mut set = backbone.clone();
            set.freeze(*a);
            let (out, trace) = train_fabind(ds, &set, *a, config)?;
            Ok((out, Some(trace)))
        }
        Method::Adaptive(s) => {
            let (out, trace) = train_adaptive(ds, backbone, s, config)?;
            Ok((out, Some(trace)))
        }
    }
}

pub fn save_encoders(set: &EncoderSet, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, e) in set.encoders.iter().enumerate() {
        checkpoint::save(e, &dir.join(format!("encoder_{}.cbm", i + 1)))?;
    }
    Ok(())
}

pub fn load_encoders(dir: &Path, modalities: usize) -> Result<EncoderSet> {
    let encoders = (0..modalities)
        .map(|i| checkpoint::load(&dir.join(format!("encoder_{}.cbm", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    EncoderSet::new(encoders)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub backbone: String,
    pub method: String,
    pub seed: u64,
}

impl CellKey {
    fn dir(&self, run_dir: &Path) -> Result<PathBuf> {
        let method: Method = self.method.parse()?;
        Ok(run_dir
            .join("cells")
            .join(&self.backbone)
            .join(method.slug())
            .join(format!("seed_{}", self.seed)))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub completed: Vec<CellKey>,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("manifest.json");
        if !path.exists() {
            return Ok(Self::default());
        }
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Parse(e.to_string()))
    }

    fn save(&self, run_dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        let tmp = run_dir.join("manifest.json.tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(tmp, run_dir.join("manifest.json"))?;
        Ok(())
    }
}

/// Outcome of one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub key: CellKey,
    pub report: EvalReport,
    pub trace: Option<TrainTrace>,
    /// Loaded from a previous run instead of recomputed.
    pub reused: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub cells: Vec<CellOutcome>,
    pub seconds: f64,
}

impl RunOutcome {
    pub fn cell(&self, backbone: Backbone, method: &str, seed: u64) -> Option<&CellOutcome> {
        let method = method.parse::<Method>().ok()?.to_string();
        self.cells.iter().find(|c| {
            c.key.backbone == backbone.to_string() && c.key.method == method && c.key.seed == seed
        })
    }
}

struct SeedContext {
    seed: u64,
    dataset: MultiModalDataset,
    backbones: BTreeMap<Backbone, EncoderSet>,
}

fn prepare_seed(cfg: &ExperimentConfig, run_dir: &Path, seed: u64, needed: &[Backbone]) -> Result<SeedContext> {
    let data_dir = run_dir.join("data").join(format!("seed_{seed}"));
    let dataset = if data_dir.join("dataset.json").exists() {
        MultiModalDataset::load(&data_dir)?
    } else {
        let ds = make_dataset(cfg, seed)?;
        ds.save(&data_dir)?;
        ds
    };
    let m = dataset.modality_count();
    let mut backbones = BTreeMap::new();
    let bb_dir = run_dir.join("backbones").join(format!("seed_{seed}"));
    let random_dir = bb_dir.join("random");
    let random = if random_dir.join(format!("encoder_{m}.cbm")).exists() {
        load_encoders(&random_dir, m)?
    } else {
        let set = random_backbones(&dataset, seed)?;
        save_encoders(&set, &random_dir)?;
        set
    };
    if needed.contains(&Backbone::Pretrained) {
        let dir = bb_dir.join("pretrained");
        let set = if dir.join(format!("encoder_{m}.cbm")).exists() {
            load_encoders(&dir, m)?
        } else {
            let (set, curves) = pretrained_backbones(cfg, &dataset, &random, seed)?;
            let mut csv = String::from("epoch,modality,loss\n");
            for (i, c) in curves.iter().enumerate() {
                for (e, l) in c.iter().enumerate() {
                    csv.push_str(&format!("{},{},{}\n", e + 1, i + 1, l));
                }
            }
            save_encoders(&set, &dir)?;
            std::fs::write(dir.join("pretrain_loss.csv"), csv)?;
            set
        };
        backbones.insert(Backbone::Pretrained, set);
    }
    if needed.contains(&Backbone::Random) {
        backbones.insert(Backbone::Random, random);
    }
    Ok(SeedContext {
        seed,
        dataset,
        backbones,
    })
}

fn run_cell(cfg: &ExperimentConfig, ctx: &SeedContext, backbone: Backbone, method: &Method, dir: &Path) -> Result<CellOutcome> {
    let start = Instant::now();
    let bind_cfg = cfg.bind_config(derived_seed(ctx.seed, streams::BIND))?;
    let (set, trace) = bind(method, &ctx.dataset, &ctx.backbones[&backbone], &bind_cfg)?;
    let report = evaluate(
        &set,
        &ctx.dataset,
        &method.to_string(),
        &backbone.to_string(),
        &cfg.eval_config(ctx.seed),
    )?;
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)?;
    if let Some(t) = &trace {
        std::fs::write(dir.join("trace.csv"), t.to_csv())?;
        let json = serde_json::to_string_pretty(t).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("trace.json"), json)?;
    }
    save_encoders(&set, &dir.join("encoders"))?;
    std::fs::write(dir.join("report.csv"), report.to_csv())?;
    // report.json last: its presence marks the cell directory as complete
    std::fs::write(dir.join("report.json"), report.to_json()?)?;
    Ok(CellOutcome {
        key: CellKey {
            backbone: backbone.to_string(),
            method: method.to_string(),
            seed: ctx.seed,
        },
        report,
        trace,
        reused: false,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn load_cell(key: &CellKey, dir: &Path) -> Result<CellOutcome> {
    let report = EvalReport::from_json(&std::fs::read_to_string(dir.join("report.json"))?)?;
    let trace_path = dir.join("trace.json");
    let trace = if trace_path.exists() {
        Some(
            serde_json::from_str(&std::fs::read_to_string(trace_path)?)
                .map_err(|e| Error::Parse(e.to_string()))?,
        )
    } else {
        None
    };
    Ok(CellOutcome {
        key: key.clone(),
        report,
        trace,
        reused: true,
        seconds: 0.0,
    })
}

/// Runs every seed × backbone × method cell of `cfg` under `run_dir`.
///
/// Cells already recorded in `manifest.json` are loaded rather than rerun;
/// cell directories left behind by an interrupted run are recomputed.
pub fn run_experiment(cfg: &ExperimentConfig, run_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    std::fs::create_dir_all(run_dir)?;
    let echo = run_dir.join("config.toml");
    if echo.exists() {
        // worker count and output location do not change results
        let scrub = |c: &ExperimentConfig| {
            let mut c = c.clone();
            c.run.threads = 1;
            c.run.out = None;
            c
        };
        let previous = ExperimentConfig::from_toml(&std::fs::read_to_string(&echo)?)?;
        if scrub(&previous) != scrub(cfg) {
            return Err(Error::config(format!(
                "{} holds a run with a different configuration",
                run_dir.display()
            )));
        }
    } else {
        std::fs::write(&echo, cfg.to_toml()?)?;
    }
    let manifest = Mutex::new(Manifest::load(run_dir)?);
    let backbones = cfg.backbones()?;
    let methods = cfg.methods()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut plan = Vec::new();
    for &seed in &cfg.run.seeds {
        for &b in &backbones {
            for m in &methods {
                let key = CellKey {
                    backbone: b.to_string(),
                    method: m.to_string(),
                    seed,
                };
                let dir = key.dir(run_dir)?;
                plan.push((key, b, m.clone(), dir));
            }
        }
    }
    let done = |k: &CellKey, dir: &Path| {
        manifest.lock().unwrap().completed.contains(k) && dir.join("report.json").exists()
    };
    let pending_seeds: Vec<u64> = cfg
        .run
        .seeds
        .iter()
        .copied()
        .filter(|&s| plan.iter().any(|(k, _, _, d)| k.seed == s && !done(k, d)))
        .collect();

    let cells = pool.install(|| -> Result<Vec<CellOutcome>> {
        let contexts = pending_seeds
            .par_iter()
            .map(|&s| {
                let needed: Vec<Backbone> = backbones.clone();
                prepare_seed(cfg, run_dir, s, &needed).map(|c| (s, c))
            })
            .collect::<Result<BTreeMap<u64, SeedContext>>>()?;
        plan.par_iter()
            .map(|(key, b, m, dir)| {
                if done(key, dir) {
                    return load_cell(key, dir);
                }
                let outcome = run_cell(cfg, &contexts[&key.seed], *b, m, dir)?;
                let mut guard = manifest.lock().unwrap();
                guard.completed.push(key.clone());
                guard.completed.sort();
                guard.completed.dedup();
                guard.save(run_dir)?;
                Ok(outcome)
            })
            .collect()
    })?;
    summarize(run_dir)?;
    Ok(RunOutcome {
        run_dir: run_dir.to_path_buf(),
        cells,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Mean and sample standard deviation over seeds for one table entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub backbone: String,
    pub method: String,
    pub modality: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub entries: Vec<SummaryEntry>,
    pub columns: Vec<String>,
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("backbone,method,modality,mean,std,n\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.backbone,
                csv_field(&e.method),
                e.modality,
                e.mean,
                e.std,
                e.n
            ));
        }
        out
    }

    /// Backbone × method rows, one column per modality plus `All`.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["backbone".to_string(), "method".to_string()];
        header.extend(self.columns.iter().cloned());
        rows.push(header);
        let mut seen: Vec<(String, String)> = Vec::new();
        for e in &self.entries {
            let k = (e.backbone.clone(), e.method.clone());
            if !seen.contains(&k) {
                seen.push(k);
            }
        }
        for (b, m) in &seen {
            let mut row = vec![b.clone(), m.clone()];
            for c in &self.columns {
                let cell = self
                    .entries
                    .iter()
                    .find(|e| &e.backbone == b && &e.method == m && &e.modality == c)
                    .map(|e| format!("{:.4} ± {:.4}", e.mean, e.std))
                    .unwrap_or_else(|| "-".into());
                row.push(cell);
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn find_reports(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_reports(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "report.json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Aggregates every `report.json` under `run_dir/cells` and writes
/// `summary.csv` and `summary.txt` into `run_dir`.
pub fn summarize(run_dir: &Path) -> Result<Summary> {
    let mut paths = Vec::new();
    find_reports(&run_dir.join("cells"), &mut paths)?;
    if paths.is_empty() {
        return Err(Error::data(format!("no completed cells under {}", run_dir.display())));
    }
    let reports = paths
        .iter()
        .map(|p| EvalReport::from_json(&std::fs::read_to_string(p)?))
        .collect::<Result<Vec<_>>>()?;
    let modalities = reports.iter().map(|r| r.modality_accuracy.len()).max().unwrap_or(0);
    let mut columns: Vec<String> = (1..=modalities).map(|i| format!("X_{i}")).collect();
    columns.push("All".into());

    let mut groups: BTreeMap<(String, (usize, usize, String), String), Vec<&EvalReport>> = BTreeMap::new();
    for r in &reports {
        let key = r.method.parse::<Method>().map(|m| m.order_key()).unwrap_or((9, 0, r.method.clone()));
        groups
            .entry((r.backbone.clone(), key, r.method.clone()))
            .or_default()
            .push(r);
    }
    let mut entries = Vec::new();
    for ((backbone, _, method), rs) in &groups {
        for (c, col) in columns.iter().enumerate() {
            let vals: Vec<f64> = rs
                .iter()
                .filter_map(|r| {
                    if c == modalities {
                        Some(r.fused_accuracy)
                    } else {
                        r.modality_accuracy.get(c).copied()
                    }
                })
                .collect();
            if vals.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&vals);
            entries.push(SummaryEntry {
                backbone: backbone.clone(),
                method: method.clone(),
                modality: col.clone(),
                mean,
                std,
                n: vals.len(),
            });
        }
    }
    let summary = Summary { entries, columns };
    std::fs::write(run_dir.join("summary.csv"), summary.to_csv())?;
    std::fs::write(run_dir.join("summary.txt"), summary.to_table())?;
    Ok(summary)
}
