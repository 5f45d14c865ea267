//! Per-pair anchor construction from current modality embeddings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AnchorStrategy {
    /// Mean of the available modality embeddings.
    Centroid,
    /// Weight-renormalized mean over the available modalities.
    WeightedAverage(Vec<f64>),
    /// One modality per batch serves as the anchor. With
    /// `freeze_anchor_encoder` that modality's encoder sits out the update.
    RandomModality { freeze_anchor_encoder: bool },
    /// Coordinate-wise median; even counts take the midpoint of the two
    /// central values.
    CoordinateWiseMedian,
}

impl AnchorStrategy {
    pub fn validate(&self, modalities: usize) -> Result<()> {
        if let AnchorStrategy::WeightedAverage(w) = self {
            if w.len() != modalities {
                return Err(Error::config(format!(
                    "{} anchor weights for {modalities} modalities",
                    w.len()
                )));
            }
            if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::config("anchor weights must be finite and nonnegative"));
            }
            if w.iter().all(|&v| v == 0.0) {
                return Err(Error::config("anchor weights are all zero"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for AnchorStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnchorStrategy::Centroid => write!(f, "centroid"),
            AnchorStrategy::WeightedAverage(w) => {
                let parts: Vec<String> = w.iter().map(|v| v.to_string()).collect();
                write!(f, "wavg:{}", parts.join(","))
            }
            AnchorStrategy::RandomModality {
                freeze_anchor_encoder: true,
            } => write!(f, "random"),
            AnchorStrategy::RandomModality {
                freeze_anchor_encoder: false,
            } => write!(f, "random-intra"),
            AnchorStrategy::CoordinateWiseMedian => write!(f, "median"),
        }
    }
}

impl FromStr for AnchorStrategy {
    type Err = Error;

    /// Parses `centroid | wavg:w1,w2,.. | random | random-intra | median`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "centroid" => Ok(AnchorStrategy::Centroid),
            "random" => Ok(AnchorStrategy::RandomModality {
                freeze_anchor_encoder: true,
            }),
            "random-intra" => Ok(AnchorStrategy::RandomModality {
                freeze_anchor_encoder: false,
            }),
            "median" => Ok(AnchorStrategy::CoordinateWiseMedian),
            other => {
                let weights = other
                    .strip_prefix("wavg:")
                    .ok_or_else(|| Error::config(format!("unknown anchor strategy '{other}'")))?;
                let w = weights
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::config(format!("bad anchor weight '{t}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(AnchorStrategy::WeightedAverage(w))
            }
        }
    }
}

/// Anchors for one batch together with the modalities that formed each.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorBatch {
    pub anchors: Matrix,
    pub members: Vec<Vec<usize>>,
    pub strategy: AnchorStrategy,
    /// Modality drawn by [`AnchorStrategy::RandomModality`].
    pub chosen_modality: Option<usize>,
}

/// Which modalities are present for each pair (`mask[j][i]`).
pub type Availability = [Vec<bool>];

/// Builds one anchor per pair from `embeddings[i]` (batch × d per modality).
///
/// Anchors are raw aggregates and are not renormalized to unit length.
pub fn build_anchors(
    strategy: &AnchorStrategy,
    embeddings: &[Matrix],
    mask: Option<&Availability>,
    rng: &mut SeededRng,
) -> Result<AnchorBatch> {
    let m = embeddings.len();
    if m == 0 {
        return Err(Error::data("no modality embeddings supplied"));
    }
    let (b, d) = embeddings[0].shape();
    if embeddings.iter().any(|e| e.shape() != (b, d)) {
        return Err(Error::shape("modality embedding batches differ in shape"));
    }
    strategy.validate(m)?;
    let members: Vec<Vec<usize>> = match mask {
        Some(mask) => {
            if mask.len() != b || mask.iter().any(|row| row.len() != m) {
                return Err(Error::shape("availability mask does not match the batch"));
            }
            mask.iter()
                .map(|row| (0..m).filter(|&i| row[i]).collect())
                .collect()
        }
        None => vec![(0..m).collect(); b],
    };
    if let Some(j) = members.iter().position(Vec::is_empty) {
        return Err(Error::data(format!("pair {j} has no available modality")));
    }

    let mut anchors = Matrix::zeros(b, d);
    let mut chosen_modality = None;
    let mut used = members.clone();
    match strategy {
        AnchorStrategy::Centroid => {
            for (j, set) in members.iter().enumerate() {
                let row = anchors.row_mut(j);
                for &i in set {
                    for (a, v) in row.iter_mut().zip(embeddings[i].row(j)) {
                        *a += v;
                    }
                }
                let n = set.len() as f64;
                row.iter_mut().for_each(|a| *a /= n);
            }
        }
        AnchorStrategy::WeightedAverage(w) => {
            for (j, set) in members.iter().enumerate() {
                let total: f64 = set.iter().map(|&i| w[i]).sum();
                if total <= 0.0 {
                    return Err(Error::data(format!(
                        "pair {j}: available modalities carry zero total weight"
                    )));
                }
                let row = anchors.row_mut(j);
                for &i in set {
                    for (a, v) in row.iter_mut().zip(embeddings[i].row(j)) {
                        *a += w[i] * v;
                    }
                }
                row.iter_mut().for_each(|a| *a /= total);
            }
        }
        AnchorStrategy::RandomModality { .. } => {
            let candidates: Vec<usize> = (0..m)
                .filter(|i| members.iter().all(|set| set.contains(i)))
                .collect();
            if candidates.is_empty() {
                return Err(Error::data("no modality is available for every pair in the batch"));
            }
            let r = candidates[rng.below(candidates.len())];
            chosen_modality = Some(r);
            for j in 0..b {
                anchors.row_mut(j).copy_from_slice(embeddings[r].row(j));
            }
            used = vec![vec![r]; b];
        }
        AnchorStrategy::CoordinateWiseMedian => {
            let mut buf = Vec::with_capacity(m);
            for (j, set) in members.iter().enumerate() {
                for c in 0..d {
                    buf.clear();
                    buf.extend(set.iter().map(|&i| embeddings[i].get(j, c)));
                    anchors.set(j, c, median(&mut buf));
                }
            }
        }
    }
    Ok(AnchorBatch {
        anchors,
        members: used,
        strategy: strategy.clone(),
        chosen_modality,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
