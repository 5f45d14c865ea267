//! Numerical checks of the centroid-anchor lower bound, the reverse Hölder
//! inequality it relies on, and the fixed-anchor information propositions on
//! exhaustively enumerated discrete instances.

use serde::{Deserialize, Serialize};

use crate::anchors::{build_anchors, AnchorStrategy};
use crate::error::{Error, Result};
use crate::losses::info_nce_value;
use crate::numkit::{Matrix, SeededRng};

/// Seed of the randomized lower-bound sweep.
pub const BOUND_SWEEP_SEED: u64 = 1;
/// Seed of the randomized reverse Hölder sweep.
pub const HOLDER_SWEEP_SEED: u64 = 2;
/// Seed of the random joints used by the proposition checks.
pub const JOINT_SWEEP_SEED: u64 = 3;

/// One batch of paired embeddings for the lower-bound check.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInstance {
    pub tau: f64,
    /// Modality whose un-augmented embeddings are contrasted with the anchors.
    pub modality: usize,
    /// `f_l(x_l)` per modality, batch × d, unit rows.
    pub clean: Vec<Matrix>,
    /// `f_l(x'_l)` per modality, batch × d, unit rows.
    pub augmented: Vec<Matrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEvaluation {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// `log C` for each anchor row.
    pub log_c: Vec<f64>,
}

impl BoundInstance {
    pub fn modalities(&self) -> usize {
        self.clean.len()
    }

    pub fn batch(&self) -> usize {
        self.clean.first().map_or(0, Matrix::rows)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::config("temperature must be positive"));
        }
        if self.clean.is_empty() || self.clean.len() != self.augmented.len() {
            return Err(Error::shape("need matching clean and augmented batches"));
        }
        if self.modality >= self.clean.len() {
            return Err(Error::config("target modality out of range"));
        }
        let shape = self.clean[0].shape();
        if self.clean.iter().chain(&self.augmented).any(|m| m.shape() != shape) {
            return Err(Error::shape("all embedding batches must share one shape"));
        }
        Ok(())
    }

    /// Centroid anchors of the augmented embeddings.
    pub fn anchors(&self) -> Result<Matrix> {
        let batch = build_anchors(
            &AnchorStrategy::Centroid,
            &self.augmented,
            None,
            &mut SeededRng::new(0),
        )?;
        Ok(batch.anchors)
    }

    /// Random instance: unit Gaussian directions for the clean views, and
    /// augmented views that perturb them before renormalizing.
    pub fn random(m: usize, b: usize, d: usize, tau: f64, rng: &mut SeededRng) -> Result<Self> {
        if m == 0 || b == 0 || d == 0 {
            return Err(Error::config("instance dimensions must be positive"));
        }
        let draw = |rng: &mut SeededRng| {
            let mut x = Matrix::from_vec(b, d, (0..b * d).map(|_| rng.normal()).collect())
                .expect("finite draws");
            x.normalize_rows();
            x
        };
        let clean: Vec<Matrix> = (0..m).map(|_| draw(rng)).collect();
        let augmented = clean
            .iter()
            .map(|c| {
                let mut noise = draw(rng);
                noise.scale(0.5);
                let mut a = c.clone();
                a.add_assign(&noise).expect("same shape");
                a.normalize_rows();
                a
            })
            .collect();
        let modality = rng.below(m);
        Ok(Self {
            tau,
            modality,
            clean,
            augmented,
        })
    }

    /// Moves every embedding a fraction `t` of the way toward `common` and
    /// renormalizes.
    pub fn homogenized(&self, common: &[f64], t: f64) -> Result<Self> {
        let shift = |m: &Matrix| -> Result<Matrix> {
            if common.len() != m.cols() {
                return Err(Error::shape("common vector has the wrong dimension"));
            }
            let mut out = m.clone();
            for r in 0..out.rows() {
                for (v, c) in out.row_mut(r).iter_mut().zip(common) {
                    *v = (1.0 - t) * *v + t * c;
                }
            }
            out.normalize_rows();
            Ok(out)
        };
        Ok(Self {
            tau: self.tau,
            modality: self.modality,
            clean: self.clean.iter().map(shift).collect::<Result<_>>()?,
            augmented: self.augmented.iter().map(shift).collect::<Result<_>>()?,
        })
    }
}

/// `log((c_min + c_max)² / (4 c_min c_max))` from the logs of the extremes,
/// without exponentiating them.
pub fn log_holder_constant(log_min: f64, log_max: f64) -> f64 {
    let delta = log_max - log_min;
    delta + 2.0 * ((-delta).exp().ln_1p() - std::f64::consts::LN_2)
}

/// Evaluates both sides of the centroid-anchor lower bound
///
/// `B · NCE(A; F_i | τ) ≥ Σ_l NCE(F'_l; F_i | τM/B) − Σ_k log C_k`
///
/// where `C_k` is built from the extremes over `l, j` of
/// `exp(B · f'_{l,k} · f_{i,j} / (τM))`.
pub fn theorem1_slack(instance: &BoundInstance) -> Result<BoundEvaluation> {
    instance.validate()?;
    let (m, b) = (instance.modalities() as f64, instance.batch() as f64);
    let tau = instance.tau;
    let target = &instance.clean[instance.modality];
    let anchors = instance.anchors()?;
    let lhs = b * info_nce_value(&anchors, target, tau)?;
    let scaled_tau = tau * m / b;
    let mut rhs = 0.0;
    for aug in &instance.augmented {
        rhs += info_nce_value(aug, target, scaled_tau)?;
    }
    let scores: Vec<Matrix> = instance
        .augmented
        .iter()
        .map(|aug| aug.matmul_nt(target))
        .collect::<Result<_>>()?;
    let log_c: Vec<f64> = (0..instance.batch())
        .map(|k| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for s in &scores {
                for &v in s.row(k) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            log_holder_constant(lo / scaled_tau, hi / scaled_tau)
        })
        .collect();
    rhs -= log_c.iter().sum::<f64>();
    Ok(BoundEvaluation {
        lhs,
        rhs,
        slack: lhs - rhs,
        log_c,
    })
}

/// Slack along a path that pulls all embeddings toward one common direction.
pub fn tightness_sweep(instance: &BoundInstance, common: &[f64], steps: usize) -> Result<Vec<(f64, f64)>> {
    (0..=steps)
        .map(|s| {
            let t = s as f64 / steps.max(1) as f64;
            Ok((t, theorem1_slack(&instance.homogenized(common, t)?)?.slack))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Relative tolerance for comparing the two sides of an inequality.
pub const INEQUALITY_RTOL: f64 = 1e-12;

/// Checks `Π_i (Σ_j x_ij)^{1/n} ≤ (c_m + c_M)² / (4 c_m c_M) · Σ_j (Π_i x_ij)^{1/n}`
/// for `M` sequences of `n` positive values, with `c_m`, `c_M` the smallest
/// and largest entries.
pub fn reverse_holder_check(x: &[Vec<f64>]) -> Result<HolderCheck> {
    let n = x.first().map_or(0, Vec::len);
    if x.is_empty() || n == 0 || x.iter().any(|s| s.len() != n) {
        return Err(Error::shape("need M ≥ 1 sequences of equal length n ≥ 1"));
    }
    if let Some(v) = x.iter().flatten().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::data(format!("entries must be positive and finite, got {v}")));
    }
    let (lo, hi) = x
        .iter()
        .flatten()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let inv_n = 1.0 / n as f64;
    let lhs: f64 = x.iter().map(|s| s.iter().sum::<f64>().powf(inv_n)).product();
    let c = (lo + hi).powi(2) / (4.0 * lo * hi);
    let rhs = c * (0..n)
        .map(|j| x.iter().map(|s| s[j]).product::<f64>().powf(inv_n))
        .sum::<f64>();
    Ok(HolderCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + INEQUALITY_RTOL),
    })
}

/// Random reverse Hölder instance with `m ∈ 1..=4`, `n ∈ 1..=8`, entries
/// log-uniform in `[0.1, 10]`.
pub fn random_holder_instance(rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let m = 1 + rng.below(4);
    let n = 1 + rng.below(8);
    let span = 10f64.ln();
    (0..m)
        .map(|_| (0..n).map(|_| ((2.0 * rng.uniform() - 1.0) * span).exp()).collect())
        .collect()
}

/// Joint pmf of two finite random variables, row-major over `(x, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    pub nx: usize,
    pub ny: usize,
    pub p: Vec<f64>,
}

pub const PMF_TOL: f64 = 1e-12;

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

impl DiscreteJoint {
    pub fn new(nx: usize, ny: usize, p: Vec<f64>) -> Result<Self> {
        let j = Self { nx, ny, p };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.p.len() != self.nx * self.ny {
            return Err(Error::shape("pmf table does not match the alphabet sizes"));
        }
        if self.p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::data("pmf entries must be finite and nonnegative"));
        }
        let total: f64 = self.p.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::data(format!("pmf sums to {total}")));
        }
        Ok(())
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.ny + y]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.nx).map(|x| (0..self.ny).map(|y| self.get(x, y)).sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.ny).map(|y| (0..self.nx).map(|x| self.get(x, y)).sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let p = (0..self.ny)
            .flat_map(|y| (0..self.nx).map(move |x| (x, y)))
            .map(|(x, y)| self.get(x, y))
            .collect();
        Self {
            nx: self.ny,
            ny: self.nx,
            p,
        }
    }

    /// Joint of `(fx(X), fy(Y))` for deterministic maps into `kx`, `ky` symbols.
    pub fn push_forward(&self, fx: &[usize], kx: usize, fy: &[usize], ky: usize) -> Result<Self> {
        if fx.len() != self.nx || fy.len() != self.ny {
            return Err(Error::shape("map length does not match the alphabet"));
        }
        if fx.iter().any(|&v| v >= kx) || fy.iter().any(|&v| v >= ky) {
            return Err(Error::data("map value outside its codomain"));
        }
        let mut p = vec![0.0; kx * ky];
        for x in 0..self.nx {
            for y in 0..self.ny {
                p[fx[x] * ky + fy[y]] += self.get(x, y);
            }
        }
        Ok(Self { nx: kx, ny: ky, p })
    }

    /// Joint of `(X, X)`.
    pub fn diagonal(marginal: &[f64]) -> Result<Self> {
        let n = marginal.len();
        let mut p = vec![0.0; n * n];
        for (x, &v) in marginal.iter().enumerate() {
            p[x * n + x] = v;
        }
        Self::new(n, n, p)
    }

    /// Random pmf from normalized exponential weights; roughly a quarter of
    /// the cells are zeroed when `sparse` is set (at least one cell survives).
    pub fn random(nx: usize, ny: usize, sparse: bool, rng: &mut SeededRng) -> Result<Self> {
        let mut w: Vec<f64> = (0..nx * ny)
            .map(|_| {
                let keep = !sparse || rng.uniform() >= 0.25;
                if keep {
                    -(1.0 - rng.uniform()).ln()
                } else {
                    0.0
                }
            })
            .collect();
        if w.iter().all(|&v| v == 0.0) {
            w[0] = 1.0;
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Self::new(nx, ny, w)
    }
}

pub fn entropy(pmf: &[f64]) -> f64 {
    -pmf.iter().map(|&p| plogp(p)).sum::<f64>()
}

/// Mutual information in nats, with `0 · log 0 = 0`.
pub fn exact_mi(joint: &DiscreteJoint) -> Result<f64> {
    joint.validate()?;
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let mut mi = 0.0;
    for x in 0..joint.nx {
        for y in 0..joint.ny {
            let p = joint.get(x, y);
            if p > 0.0 {
                mi += p * (p / (px[x] * py[y])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Largest alphabet or codomain the exhaustive checks will enumerate.
pub const MAX_ENUM_SIZE: usize = 4;

/// Every map from `n` symbols into `k` symbols, in lexicographic order.
pub fn all_maps(n: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if n > MAX_ENUM_SIZE || k > MAX_ENUM_SIZE {
        return Err(Error::Unsupported(format!(
            "enumeration limited to alphabets and codomains of at most {MAX_ENUM_SIZE}"
        )));
    }
    if k == 0 {
        return Err(Error::config("codomain must be nonempty"));
    }
    let mut maps = Vec::with_capacity(k.pow(n as u32));
    let mut cur = vec![0usize; n];
    loop {
        maps.push(cur.clone());
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(maps);
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < k {
                break;
            }
            cur[pos] = 0;
        }
    }
}

fn codomain_of(f: &[usize]) -> usize {
    f.iter().max().map_or(1, |&v| v + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    /// `I(X_1; X_i)`.
    pub target_mi: f64,
    /// `max_f I(f_1(X_1); f(X_i))` over all enumerated `f`.
    pub max_mi: f64,
    /// `I(f_1(X_1); X_1) = H(X_1)` within tolerance.
    pub anchor_sufficient: bool,
    /// The codomain can hold every symbol of `X_i`.
    pub codomain_sufficient: bool,
    pub maps_enumerated: usize,
    pub holds: bool,
}

/// Tolerance for the sufficient-anchor equality.
pub const PROP1_TOL: f64 = 1e-10;

/// Sufficient fixed anchor: with `f_1` retaining all of `X_1`, the best
/// encoder of `X_i` recovers exactly `I(X_1; X_i)` against the anchor.
/// `joint` is over `(X_1, X_i)`.
pub fn verify_prop1(joint: &DiscreteJoint, f1: &[usize], codomain: usize) -> Result<Prop1Report> {
    joint.validate()?;
    let maps = all_maps(joint.ny, codomain)?;
    if joint.nx > MAX_ENUM_SIZE {
        return Err(Error::Unsupported("anchor alphabet too large".into()));
    }
    let k1 = codomain_of(f1);
    let px = joint.marginal_x();
    let id: Vec<usize> = (0..joint.nx).collect();
    let anchor_info = exact_mi(&DiscreteJoint::diagonal(&px)?.push_forward(f1, k1, &id, joint.nx)?)?;
    let anchor_sufficient = (anchor_info - entropy(&px)).abs() <= PROP1_TOL;
    let target_mi = exact_mi(joint)?;
    let mut max_mi = f64::NEG_INFINITY;
    for f in &maps {
        max_mi = max_mi.max(exact_mi(&joint.push_forward(f1, k1, f, codomain)?)?);
    }
    let codomain_sufficient = codomain >= joint.ny;
    Ok(Prop1Report {
        target_mi,
        max_mi,
        anchor_sufficient,
        codomain_sufficient,
        maps_enumerated: maps.len(),
        holds: (max_mi - target_mi).abs() <= PROP1_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop2Report {
    /// `I(f_1(X_1); X_1)`.
    pub anchor_mi: f64,
    pub epsilon: f64,
    /// `max_f I(f_1(X_1); f(X_i))`.
    pub max_mi: f64,
    /// `I(f_1(X_1); X_i)`, the data-processing ceiling.
    pub ceiling: f64,
    pub maps_enumerated: usize,
    /// Every enumerated `f` stays strictly below `epsilon`.
    pub holds: bool,
    /// Every enumerated `f` stays at or below the ceiling.
    pub data_processing_holds: bool,
}

/// Insufficient fixed anchor: when `f_1` keeps less than `epsilon` nats about
/// `X_1`, no encoder of `X_i` can share `epsilon` or more with it.
pub fn verify_prop2(
    joint: &DiscreteJoint,
    f1: &[usize],
    codomain: usize,
    epsilon: f64,
) -> Result<Prop2Report> {
    joint.validate()?;
    let maps = all_maps(joint.ny, codomain)?;
    let k1 = codomain_of(f1);
    let px = joint.marginal_x();
    let id: Vec<usize> = (0..joint.nx).collect();
    let anchor_mi = exact_mi(&DiscreteJoint::diagonal(&px)?.push_forward(f1, k1, &id, joint.nx)?)?;
    if !(anchor_mi < epsilon) {
        return Err(Error::config(format!(
            "anchor keeps {anchor_mi} nats, not below epsilon = {epsilon}"
        )));
    }
    let id_y: Vec<usize> = (0..joint.ny).collect();
    let ceiling = exact_mi(&joint.push_forward(f1, k1, &id_y, joint.ny)?)?;
    let mut max_mi = f64::NEG_INFINITY;
    let mut data_processing_holds = true;
    for f in &maps {
        let mi = exact_mi(&joint.push_forward(f1, k1, f, codomain)?)?;
        max_mi = max_mi.max(mi);
        data_processing_holds &= mi <= ceiling + PMF_TOL;
    }
    Ok(Prop2Report {
        anchor_mi,
        epsilon,
        max_mi,
        ceiling,
        maps_enumerated: maps.len(),
        holds: max_mi < epsilon,
        data_processing_holds,
    })
}

/// One row of the theory check table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub instance: usize,
    pub params: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

impl CheckRow {
    pub const CSV_HEADER: &'static str = "check,instance,params,lhs,rhs,slack,pass";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.check, self.instance, self.params, self.lhs, self.rhs, self.slack, self.pass
        )
    }
}

/// Grid of the randomized lower-bound sweep.
pub const BOUND_MODALITIES: [usize; 3] = [2, 3, 4];
pub const BOUND_BATCHES: [usize; 3] = [2, 4, 8];
pub const BOUND_TAUS: [f64; 3] = [0.1, 0.3, 1.0];
pub const BOUND_DIM: usize = 16;
pub const BOUND_TOL: f64 = 1e-9;

/// `count` instances cycling through the (M, batch, τ) grid.
pub fn bound_sweep(count: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = SeededRng::new(seed);
    let mut rows = Vec::with_capacity(count);
    for n in 0..count {
        let cell = n % 27;
        let m = BOUND_MODALITIES[cell / 9];
        let b = BOUND_BATCHES[(cell / 3) % 3];
        let tau = BOUND_TAUS[cell % 3];
        let inst = BoundInstance::random(m, b, BOUND_DIM, tau, &mut rng)?;
        let e = theorem1_slack(&inst)?;
        rows.push(CheckRow {
            check: "bound".into(),
            instance: n,
            params: format!("M={m} B={b} tau={tau} i={}", inst.modality + 1),
            lhs: e.lhs,
            rhs: e.rhs,
            slack: e.slack,
            pass: e.slack >= -BOUND_TOL,
        });
    }
    Ok(rows)
}

pub fn holder_sweep(count: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = SeededRng::new(seed);
    (0..count)
        .map(|n| {
            let x = random_holder_instance(&mut rng);
            let c = reverse_holder_check(&x)?;
            Ok(CheckRow {
                check: "reverse_holder".into(),
                instance: n,
                params: format!("M={} n={}", x.len(), x[0].len()),
                lhs: c.lhs,
                rhs: c.rhs,
                slack: c.rhs - c.lhs,
                pass: c.holds,
            })
        })
        .collect()
}

/// Anchors used by the proposition sweep for an `n`-symbol `X_1`: the
/// identity map, and, when `X_1` has a zero-probability symbol, a map that
/// merges it into another symbol.
fn sufficient_anchors(joint: &DiscreteJoint) -> Vec<Vec<usize>> {
    let n = joint.nx;
    let mut out = vec![(0..n).collect::<Vec<_>>()];
    let px = joint.marginal_x();
    if let Some(z) = px.iter().position(|&p| p == 0.0) {
        let other = if z == 0 { 1 } else { 0 };
        if n > 1 {
            let mut f: Vec<usize> = (0..n).collect();
            f[z] = f[other];
            // relabel onto 0..n-1
            let mut labels: Vec<usize> = f.clone();
            labels.sort_unstable();
            labels.dedup();
            out.push(f.iter().map(|v| labels.binary_search(v).unwrap()).collect());
        }
    }
    out
}

/// Every non-injective anchor obtained by merging two symbols of `X_1`, plus
/// the constant anchor.
fn insufficient_anchors(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; n]];
    for a in 0..n {
        for b in a + 1..n {
            let f: Vec<usize> = (0..n).map(|x| if x == b { a } else { x }).collect();
            let mut labels = f.clone();
            labels.sort_unstable();
            labels.dedup();
            out.push(f.iter().map(|v| labels.binary_search(v).unwrap()).collect());
        }
    }
    out
}

/// Runs both propositions over random joints with alphabets `2..=4` (dense
/// and sparse), every codomain size that can represent `X_i` for the first,
/// and every codomain size up to 4 for the second.
pub fn proposition_sweep(joints_per_shape: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = SeededRng::new(seed);
    let mut rows = Vec::new();
    let mut n = 0;
    for nx in 2..=MAX_ENUM_SIZE {
        for ny in 2..=MAX_ENUM_SIZE {
            for rep in 0..joints_per_shape {
                let joint = DiscreteJoint::random(nx, ny, rep % 2 == 1, &mut rng)?;
                for f1 in sufficient_anchors(&joint) {
                    for codomain in ny..=MAX_ENUM_SIZE {
                        let r = verify_prop1(&joint, &f1, codomain)?;
                        rows.push(CheckRow {
                            check: "prop1".into(),
                            instance: n,
                            params: format!("nx={nx} ny={ny} codomain={codomain} f1={f1:?}")
                                .replace(',', ""),
                            lhs: r.max_mi,
                            rhs: r.target_mi,
                            slack: r.max_mi - r.target_mi,
                            pass: r.holds && r.anchor_sufficient,
                        });
                        n += 1;
                    }
                }
                for f1 in insufficient_anchors(nx) {
                    let k1 = codomain_of(&f1);
                    let id: Vec<usize> = (0..nx).collect();
                    let anchor_mi = exact_mi(
                        &DiscreteJoint::diagonal(&joint.marginal_x())?.push_forward(&f1, k1, &id, nx)?,
                    )?;
                    let eps = anchor_mi + 1e-6;
                    for codomain in 1..=MAX_ENUM_SIZE {
                        let r = verify_prop2(&joint, &f1, codomain, eps)?;
                        rows.push(CheckRow {
                            check: "prop2".into(),
                            instance: n,
                            params: format!("nx={nx} ny={ny} codomain={codomain} f1={f1:?}")
                                .replace(',', ""),
                            lhs: r.max_mi,
                            rhs: eps,
                            slack: eps - r.max_mi,
                            pass: r.holds && r.data_processing_holds,
                        });
                        n += 1;
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// The full check table: bound sweep, reverse Hölder sweep and proposition
/// sweep with their fixed seeds.
pub fn all_checks() -> Result<Vec<CheckRow>> {
    let mut rows = bound_sweep(100, BOUND_SWEEP_SEED)?;
    rows.extend(holder_sweep(1000, HOLDER_SWEEP_SEED)?);
    rows.extend(proposition_sweep(4, JOINT_SWEEP_SEED)?);
    Ok(rows)
}

pub fn checks_to_csv(rows: &[CheckRow]) -> String {
    let mut out = format!("{}\n", CheckRow::CSV_HEADER);
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}
