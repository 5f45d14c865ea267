//! Synthetic multi-modal data: a Gaussian-mixture latent variable observed
//! through per-modality nonlinear projections with Gaussian noise.
//!
//! Each modality is `x = Θ2 · sigmoid(Θ1 · z) + noise_scale · ε`. Zeroing a
//! fraction of the columns of `Θ1` hides the matching latent coordinates from
//! that modality, which is how modality quality is controlled.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{sigmoid, Matrix, SeededRng};

/// Worst-modality zero-column fraction of the default schedule.
pub const WORST_ZERO_FRACTION: f64 = 0.6;
/// Best-modality zero-column fraction of the default schedule.
pub const BEST_ZERO_FRACTION: f64 = 0.1;
const MAX_CONDITION: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Diagonal of each component covariance.
    pub variances: Vec<Vec<f64>>,
}

impl GmmConfig {
    /// Uniform priors, means drawn from `N(0, spread²·I)`, identity covariances.
    pub fn standard(k: usize, d_z: usize, spread: f64, rng: &mut SeededRng) -> Self {
        Self {
            priors: vec![1.0 / k as f64; k],
            means: (0..k)
                .map(|_| (0..d_z).map(|_| spread * rng.normal()).collect())
                .collect(),
            variances: vec![vec![1.0; d_z]; k],
        }
    }

    pub fn components(&self) -> usize {
        self.priors.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.priors.len();
        if k == 0 {
            return Err(Error::config("mixture needs at least one component"));
        }
        if self.priors.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::config("mixture priors must be finite and nonnegative"));
        }
        let total: f64 = self.priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("mixture priors sum to {total}, not 1")));
        }
        let d = self.latent_dim();
        if d == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::config("need one mean and one covariance per component"));
        }
        if self.means.iter().any(|m| m.len() != d) || self.variances.iter().any(|v| v.len() != d) {
            return Err(Error::config("component dimensions disagree"));
        }
        if self.variances.iter().flatten().any(|v| !(*v > 0.0)) {
            return Err(Error::config("covariance diagonals must be positive"));
        }
        Ok(())
    }
}

/// Draws `n` labelled latents: `y ~ π`, `z | y ~ N(μ_y, Σ_y)`.
pub fn sample_latent(cfg: &GmmConfig, n: usize, rng: &mut SeededRng) -> Result<(Matrix, Vec<usize>)> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::config("need at least one sample"));
    }
    let picker = WeightedIndex::new(&cfg.priors).map_err(|e| Error::config(e.to_string()))?;
    let d = cfg.latent_dim();
    let mut latents = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let y = picker.sample(rng);
        labels.push(y);
        let row = latents.row_mut(j);
        for (c, v) in row.iter_mut().enumerate() {
            *v = cfg.means[y][c] + cfg.variances[y][c].sqrt() * rng.normal();
        }
    }
    Ok((latents, labels))
}

/// Number of zeroed latent columns: nearest integer, ties rounded up.
pub fn zero_column_count(fraction: f64, d_z: usize) -> usize {
    ((fraction * d_z as f64) + 0.5 + 1e-9).floor() as usize
}

/// Linear zero-column schedule from the worst modality (60%) to the best (10%).
pub fn linear_fractions(m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![BEST_ZERO_FRACTION],
        _ => (0..m)
            .map(|i| {
                WORST_ZERO_FRACTION
                    - (WORST_ZERO_FRACTION - BEST_ZERO_FRACTION) * i as f64 / (m - 1) as f64
            })
            .collect(),
    }
}

/// Zero-column fractions implied by per-modality quality weights in `[0, 1]`.
pub fn fractions_from_quality(quality: &[f64]) -> Vec<f64> {
    quality.iter().map(|q| 1.0 - q).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityProjector {
    /// `d_x × d_z`, with the columns in `zero_columns` identically zero.
    pub theta1: Matrix,
    /// `d_x × d_x`
    pub theta2: Matrix,
    pub zero_columns: Vec<usize>,
    pub zero_col_fraction: f64,
}

impl ModalityProjector {
    pub fn random(d_x: usize, d_z: usize, fraction: f64, rng: &mut SeededRng) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::config(format!("zero-column fraction {fraction} outside [0, 1]")));
        }
        let mut theta1 = gaussian_matrix(d_x, d_z, rng);
        let mut cols: Vec<usize> = (0..d_z).collect();
        rng.shuffle(&mut cols);
        let mut zero_columns: Vec<usize> = cols[..zero_column_count(fraction, d_z).min(d_z)].to_vec();
        zero_columns.sort_unstable();
        for r in 0..d_x {
            for &c in &zero_columns {
                theta1.set(r, c, 0.0);
            }
        }
        let theta2 = loop {
            let t = gaussian_matrix(d_x, d_x, rng);
            if condition_number(&t) <= MAX_CONDITION {
                break t;
            }
        };
        Ok(Self {
            theta1,
            theta2,
            zero_columns,
            zero_col_fraction: fraction,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.theta1.cols()
    }

    pub fn observed_dim(&self) -> usize {
        self.theta2.rows()
    }

    /// Noise-free part `Θ2 · sigmoid(Θ1 · z)` for every latent row.
    pub fn mean_map(&self, latents: &Matrix) -> Result<Matrix> {
        if latents.cols() != self.latent_dim() {
            return Err(Error::shape(format!(
                "latents have {} columns, projector expects {}",
                latents.cols(),
                self.latent_dim()
            )));
        }
        let hidden = latents.matmul_nt(&self.theta1)?.map(sigmoid);
        hidden.matmul_nt(&self.theta2)
    }
}

/// Builds one projector per modality. Fractions must lie in `[0, 1]` and be
/// nonincreasing, so modality quality ascends with the index.
pub fn make_projectors(
    d_x: usize,
    d_z: usize,
    fractions: &[f64],
    rng: &mut SeededRng,
) -> Result<Vec<ModalityProjector>> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::config(format!("zero-column fraction {f} outside [0, 1]")));
    }
    if fractions.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::config(
            "zero-column fractions must be nonincreasing across modalities",
        ));
    }
    fractions
        .iter()
        .map(|&f| ModalityProjector::random(d_x, d_z, f, rng))
        .collect()
}

/// `Θ2·sigmoid(Θ1·z) + noise_scale·ε` for every latent row.
pub fn project_modality(
    proj: &ModalityProjector,
    latents: &Matrix,
    noise_scale: f64,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    let mut x = proj.mean_map(latents)?;
    if noise_scale != 0.0 {
        x.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v += noise_scale * rng.normal());
    }
    Ok(x)
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).expect("finite gaussian draws")
}

pub(crate) fn condition_number(m: &Matrix) -> f64 {
    let a = nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    let sv = a.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Parameters for [`generate_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub modalities: usize,
    pub d_x: usize,
    pub d_z: usize,
    pub components: usize,
    /// Standard deviation of the component means around the origin.
    pub mean_spread: f64,
    /// Zero-column fraction per modality.
    pub fractions: Vec<f64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub noise_scale: f64,
}

impl DatasetSpec {
    /// `M` modalities with `d_x = 16`, `d_z = 8`, `K = 50` and the linear
    /// zero-column schedule; splits are 70/15/15 of `n_total`.
    pub fn standard(modalities: usize, n_total: usize) -> Self {
        let n_train = n_total * 70 / 100;
        let n_val = n_total * 15 / 100;
        Self {
            modalities,
            d_x: 16,
            d_z: 8,
            components: 50,
            mean_spread: 3.0,
            fractions: linear_fractions(modalities),
            n_train,
            n_val,
            n_test: n_total - n_train - n_val,
            noise_scale: 1.0,
        }
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities == 0 {
            return Err(Error::config("need at least one modality"));
        }
        if self.fractions.len() != self.modalities {
            return Err(Error::config(format!(
                "{} zero-column fractions for {} modalities",
                self.fractions.len(),
                self.modalities
            )));
        }
        if self.d_x == 0 || self.d_z == 0 || self.components == 0 {
            return Err(Error::config("dimensions and component count must be positive"));
        }
        if self.total() == 0 {
            return Err(Error::config("dataset must contain samples"));
        }
        if !(self.noise_scale >= 0.0) || !(self.mean_spread >= 0.0) {
            return Err(Error::config("noise scale and mean spread must be nonnegative"));
        }
        Ok(())
    }
}

/// Paired multi-modal samples sharing one latent per pair index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiModalDataset {
    pub spec: DatasetSpec,
    pub seed: u64,
    pub gmm: GmmConfig,
    pub projectors: Vec<ModalityProjector>,
    /// One `N × d_x` matrix per modality.
    pub modalities: Vec<Matrix>,
    pub labels: Vec<usize>,
    pub latents: Option<Matrix>,
    pub splits: Vec<Split>,
}

impl MultiModalDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn modality_count(&self) -> usize {
        self.modalities.len()
    }

    pub fn components(&self) -> usize {
        self.spec.components
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.splits[j] == split).collect()
    }

    /// A fresh view of pair `j` in modality `i`: same latent, new noise.
    pub fn augment(&self, modality: usize, pair: usize, rng: &mut SeededRng) -> Result<Vec<f64>> {
        Ok(self.augment_rows(modality, &[pair], rng)?.into_vec())
    }

    /// Fresh views for several pairs of one modality.
    pub fn augment_rows(&self, modality: usize, pairs: &[usize], rng: &mut SeededRng) -> Result<Matrix> {
        let latents = self
            .latents
            .as_ref()
            .ok_or_else(|| Error::Unsupported("augmentation needs retained latents".into()))?;
        let proj = self
            .projectors
            .get(modality)
            .ok_or_else(|| Error::data(format!("no modality {modality}")))?;
        if let Some(&j) = pairs.iter().find(|&&j| j >= self.len()) {
            return Err(Error::data(format!("pair {j} out of range")));
        }
        project_modality(proj, &latents.select_rows(pairs), self.spec.noise_scale, rng)
    }

    /// Rows of one modality restricted to the given pairs.
    pub fn rows(&self, modality: usize, pairs: &[usize]) -> Matrix {
        self.modalities[modality].select_rows(pairs)
    }

    pub fn labels_of(&self, pairs: &[usize]) -> Vec<usize> {
        pairs.iter().map(|&j| self.labels[j]).collect()
    }

    /// Writes `modality_<i>.bin` per modality, `latents.bin`, and a
    /// `dataset.json` sidecar into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, m) in self.modalities.iter().enumerate() {
            std::fs::write(dir.join(format!("modality_{i}.bin")), encode_matrix(m))?;
        }
        if let Some(l) = &self.latents {
            std::fs::write(dir.join("latents.bin"), encode_matrix(l))?;
        }
        let sidecar = Sidecar {
            spec: self.spec.clone(),
            seed: self.seed,
            gmm: self.gmm.clone(),
            projectors: self.projectors.clone(),
            labels: self.labels.clone(),
            splits: self.splits.clone(),
            has_latents: self.latents.is_some(),
        };
        let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("dataset.json"), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("dataset.json"))?;
        let s: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let modalities = (0..s.spec.modalities)
            .map(|i| decode_matrix(&std::fs::read(dir.join(format!("modality_{i}.bin")))?))
            .collect::<Result<Vec<_>>>()?;
        let latents = if s.has_latents {
            Some(decode_matrix(&std::fs::read(dir.join("latents.bin"))?)?)
        } else {
            None
        };
        let n = s.labels.len();
        if modalities.iter().any(|m| m.rows() != n) || s.splits.len() != n {
            return Err(Error::data("dataset files disagree on sample count"));
        }
        Ok(Self {
            spec: s.spec,
            seed: s.seed,
            gmm: s.gmm,
            projectors: s.projectors,
            modalities,
            labels: s.labels,
            latents,
            splits: s.splits,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    spec: DatasetSpec,
    seed: u64,
    gmm: GmmConfig,
    projectors: Vec<ModalityProjector>,
    labels: Vec<usize>,
    splits: Vec<Split>,
    has_latents: bool,
}

const MATRIX_MAGIC: &[u8; 8] = b"CBMAT\0v1";

/// `magic, rows u64 LE, cols u64 LE, row-major f64 LE payload`.
pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + m.as_slice().len() * 8);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 24 || &bytes[..8] != MATRIX_MAGIC {
        return Err(Error::Parse("not a matrix file".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let payload = &bytes[24..];
    if payload.len() != rows * cols * 8 {
        return Err(Error::Parse("matrix payload length mismatch".into()));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Generates a paired, labelled, split dataset. Pair order is the sampling
/// order; the first `n_train` pairs are training, then validation, then test.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<MultiModalDataset> {
    spec.validate()?;
    let root = SeededRng::new(seed);
    let gmm = GmmConfig::standard(spec.components, spec.d_z, spec.mean_spread, &mut root.fork(1));
    let projectors = make_projectors(spec.d_x, spec.d_z, &spec.fractions, &mut root.fork(2))?;
    let (latents, labels) = sample_latent(&gmm, spec.total(), &mut root.fork(3))?;
    let modalities = projectors
        .iter()
        .enumerate()
        .map(|(i, p)| project_modality(p, &latents, spec.noise_scale, &mut root.fork(100 + i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let splits = (0..spec.total())
        .map(|j| {
            if j < spec.n_train {
                Split::Train
            } else if j < spec.n_train + spec.n_val {
                Split::Val
            } else {
                Split::Test
            }
        })
        .collect();
    Ok(MultiModalDataset {
        spec: spec.clone(),
        seed,
        gmm,
        projectors,
        modalities,
        labels,
        latents: Some(latents),
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_mixture_collapses_to_mean() {
        let cfg = GmmConfig {
            priors: vec![1.0],
            means: vec![vec![0.0; 3]],
            variances: vec![vec![1e-12; 3]],
        };
        let (z, y) = sample_latent(&cfg, 100, &mut SeededRng::new(1)).unwrap();
        assert!(z.as_slice().iter().all(|v| v.abs() < 1e-4));
        assert!(y.iter().all(|&l| l == 0));
    }

    #[test]
    fn latent_shape_and_label_range() {
        let mut rng = SeededRng::new(2);
        let cfg = GmmConfig::standard(50, 8, 3.0, &mut rng);
        let (z, y) = sample_latent(&cfg, 1000, &mut rng).unwrap();
        assert_eq!(z.shape(), (1000, 8));
        assert!(y.iter().all(|&l| l < 50));
    }

    #[test]
    fn invalid_priors_rejected() {
        let mut cfg = GmmConfig::standard(3, 2, 1.0, &mut SeededRng::new(0));
        cfg.priors = vec![0.5, 0.6, -0.1];
        assert!(matches!(sample_latent(&cfg, 5, &mut SeededRng::new(0)), Err(Error::Config(_))));
        cfg.priors = vec![0.2, 0.2, 0.2];
        assert!(matches!(sample_latent(&cfg, 5, &mut SeededRng::new(0)), Err(Error::Config(_))));
    }

    #[test]
    fn linear_schedule_zero_columns() {
        let f = linear_fractions(4);
        let counts: Vec<usize> = f.iter().map(|&x| zero_column_count(x, 8)).collect();
        assert_eq!(counts, vec![5, 3, 2, 1]);
        let projs = make_projectors(16, 8, &f, &mut SeededRng::new(4)).unwrap();
        for (p, &c) in projs.iter().zip(&counts) {
            let zero_cols = (0..8)
                .filter(|&col| (0..16).all(|r| p.theta1.get(r, col) == 0.0))
                .count();
            assert_eq!(zero_cols, c);
        }
    }

    #[test]
    fn rounding_ties_go_up() {
        assert_eq!(zero_column_count(0.5, 5), 3);
        assert_eq!(zero_column_count(0.0, 8), 0);
        assert_eq!(zero_column_count(1.0, 8), 8);
    }

    #[test]
    fn projector_fraction_limits() {
        let mut rng = SeededRng::new(8);
        let none = ModalityProjector::random(4, 6, 0.0, &mut rng).unwrap();
        assert!(none.zero_columns.is_empty());
        let all = ModalityProjector::random(4, 6, 1.0, &mut rng).unwrap();
        assert!(all.theta1.as_slice().iter().all(|&v| v == 0.0));
        assert!(ModalityProjector::random(4, 6, 1.5, &mut rng).is_err());
        assert!(make_projectors(4, 6, &[0.1, 0.5], &mut rng).is_err());
        assert!(make_projectors(4, 6, &[-0.1], &mut rng).is_err());
    }

    #[test]
    fn zero_theta1_gives_constant_map() {
        let mut rng = SeededRng::new(5);
        let proj = ModalityProjector::random(3, 2, 1.0, &mut rng).unwrap();
        let z = Matrix::from_rows(&[vec![1.0, -4.0], vec![10.0, 0.3]]).unwrap();
        let x = project_modality(&proj, &z, 0.0, &mut rng).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                let expected: f64 = 0.5 * proj.theta2.row(c).iter().sum::<f64>();
                assert!((x.get(r, c) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_hand_evaluation() {
        let proj = ModalityProjector {
            theta1: Matrix::from_rows(&[vec![2.0, 0.0], vec![-1.0, 0.5]]).unwrap(),
            theta2: Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 3.0]]).unwrap(),
            zero_columns: vec![],
            zero_col_fraction: 0.0,
        };
        let z = Matrix::from_rows(&[vec![0.5, 2.0]]).unwrap();
        let x = project_modality(&proj, &z, 0.0, &mut SeededRng::new(0)).unwrap();
        let h0 = sigmoid(1.0);
        let h1 = sigmoid(0.5);
        assert!((x.get(0, 0) - (h0 + h1)).abs() < 1e-15);
        assert!((x.get(0, 1) - 3.0 * h1).abs() < 1e-15);
    }

    #[test]
    fn theta2_is_well_conditioned() {
        let projs = make_projectors(16, 8, &linear_fractions(4), &mut SeededRng::new(6)).unwrap();
        for p in projs {
            assert!(condition_number(&p.theta2) <= MAX_CONDITION);
        }
    }

    #[test]
    fn noiseless_augmentation_is_identity() {
        let mut spec = DatasetSpec::standard(2, 40);
        spec.noise_scale = 0.0;
        let ds = generate_dataset(&spec, 9).unwrap();
        let view = ds.augment(1, 7, &mut SeededRng::new(1)).unwrap();
        assert_eq!(view.as_slice(), ds.modalities[1].row(7));
    }

    #[test]
    fn augmentation_needs_latents() {
        let mut ds = generate_dataset(&DatasetSpec::standard(2, 20), 1).unwrap();
        ds.latents = None;
        assert!(matches!(ds.augment(0, 0, &mut SeededRng::new(0)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn splits_follow_spec() {
        let ds = generate_dataset(&DatasetSpec::standard(4, 200), 3).unwrap();
        assert_eq!(ds.indices(Split::Train).len(), 140);
        assert_eq!(ds.indices(Split::Val).len(), 30);
        assert_eq!(ds.indices(Split::Test).len(), 30);
        assert!(ds.modalities.iter().all(|m| m.shape() == (200, 16)));
    }

    #[test]
    fn matrix_file_roundtrip() {
        let m = Matrix::from_rows(&[vec![1.5, -0.0], vec![f64::MIN_POSITIVE, 3e300]]).unwrap();
        let back = decode_matrix(&encode_matrix(&m)).unwrap();
        assert_eq!(m, back);
        assert!(decode_matrix(&encode_matrix(&m)[..30]).is_err());
    }
}
