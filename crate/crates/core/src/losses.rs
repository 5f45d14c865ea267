//! InfoNCE losses over embedding batches with analytic gradients.
//!
//! All batch losses pair row `k` of one side with row `k` of the other and
//! treat every other row as a negative.

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Temperature used when nothing else is configured.
pub const DEFAULT_TAU: f64 = 0.3;

/// Loss value together with gradients for both inputs.
#[derive(Clone, Debug)]
pub struct NceOutput {
    pub loss: f64,
    pub grad_left: Matrix,
    pub grad_right: Matrix,
}

/// Loss value with the gradient for the trainable side only.
#[derive(Clone, Debug)]
pub struct BindLoss {
    pub loss: f64,
    pub grad: Matrix,
}

/// Which InfoNCE directions a binding loss sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    /// Anchor rows contrast against embedding columns only.
    AnchorToEmbedding,
    /// Both directions, summed.
    Symmetric,
}

fn check_pair(left: &Matrix, right: &Matrix, tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    if left.shape() != right.shape() {
        return Err(Error::shape(format!(
            "paired batches differ: {:?} vs {:?}",
            left.shape(),
            right.shape()
        )));
    }
    if left.rows() == 0 {
        return Err(Error::data("empty batch"));
    }
    Ok(())
}

/// `−(1/B)·Σ_k log softmax_j(left_k·right_j / τ)[k]`.
pub fn info_nce(left: &Matrix, right: &Matrix, tau: f64) -> Result<NceOutput> {
    check_pair(left, right, tau)?;
    let b = left.rows();
    let mut scores = left.matmul_nt(right)?;
    scores.scale(1.0 / tau);
    let mut loss = 0.0;
    // scores → ∂loss/∂scores = (softmax − I) / B, row by row
    for k in 0..b {
        let row = scores.row_mut(k);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|s| (s - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[k];
        for s in row.iter_mut() {
            *s = (*s - lse).exp() / b as f64;
        }
        row[k] -= 1.0 / b as f64;
    }
    let mut grad_left = scores.matmul(right)?;
    grad_left.scale(1.0 / tau);
    let mut grad_right = scores.matmul_tn(left)?;
    grad_right.scale(1.0 / tau);
    Ok(NceOutput {
        loss: loss / b as f64,
        grad_left,
        grad_right,
    })
}

/// Loss value only, without building gradients.
pub fn info_nce_value(left: &Matrix, right: &Matrix, tau: f64) -> Result<f64> {
    check_pair(left, right, tau)?;
    let scores = left.matmul_nt(right)?;
    let mut loss = 0.0;
    for k in 0..left.rows() {
        let row = scores.row(k);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / tau;
        let sum: f64 = row.iter().map(|s| (s / tau - max).exp()).sum();
        loss += max + sum.ln() - row[k] / tau;
    }
    Ok(loss / left.rows() as f64)
}

/// Anchored loss against constant anchors; gradient flows to `embeddings`.
///
/// The anchor-to-embedding term contrasts anchor `k` over all embeddings;
/// the reverse term contrasts embedding `k` over all anchors.
pub fn anchored_loss(
    anchors: &Matrix,
    embeddings: &Matrix,
    tau: f64,
    direction: Direction,
) -> Result<BindLoss> {
    let fwd = info_nce(anchors, embeddings, tau)?;
    let mut loss = fwd.loss;
    let mut grad = fwd.grad_right;
    if direction == Direction::Symmetric {
        let back = info_nce(embeddings, anchors, tau)?;
        loss += back.loss;
        grad.add_assign(&back.grad_left)?;
    }
    Ok(BindLoss { loss, grad })
}

/// Symmetrized centroid-anchor objective for one modality.
pub fn centrobind_loss(anchors: &Matrix, embeddings: &Matrix, tau: f64) -> Result<BindLoss> {
    anchored_loss(anchors, embeddings, tau, Direction::Symmetric)
}

/// Fixed-anchor objective: the anchor modality's embeddings come from a frozen
/// encoder and receive no gradient.
pub fn fabind_loss(
    anchor_embeddings: &Matrix,
    other_embeddings: &Matrix,
    tau: f64,
    direction: Direction,
) -> Result<BindLoss> {
    anchored_loss(anchor_embeddings, other_embeddings, tau, direction)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn singleton_batch_has_zero_loss() {
        let a = m(&[&[0.6, 0.8]]);
        let out = info_nce(&a, &a, 0.3).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(centrobind_loss(&a, &a, 0.3).unwrap().loss, 0.0);
    }

    #[test]
    fn orthonormal_pair_value() {
        let e = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((info_nce(&e, &e, 1.0).unwrap().loss - expected).abs() < 1e-15);
        assert!((expected - 0.31326).abs() < 1e-5);
        let cb = centrobind_loss(&e, &e, 1.0).unwrap().loss;
        assert!((cb - 2.0 * expected).abs() < 1e-15);
    }

    #[test]
    fn huge_temperature_approaches_log_batch() {
        let e = m(&[
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[-1.0, 0.0],
            &[0.6, 0.8],
        ]);
        let other = m(&[
            &[0.0, 1.0],
            &[0.8, 0.6],
            &[1.0, 0.0],
            &[0.0, -1.0],
        ]);
        let loss = info_nce(&e, &other, 1e9).unwrap().loss;
        assert!((loss - 4f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn invalid_inputs() {
        let e = m(&[&[1.0, 0.0]]);
        assert!(matches!(info_nce(&e, &e, 0.0), Err(Error::Config(_))));
        assert!(matches!(info_nce(&e, &e, -1.0), Err(Error::Config(_))));
        let two = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(centrobind_loss(&e, &two, 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn value_only_path_matches() {
        let a = m(&[&[0.3, 0.1], &[-0.2, 0.9], &[0.5, -0.5]]);
        let b = m(&[&[0.1, 0.7], &[0.4, 0.4], &[-0.9, 0.2]]);
        let full = info_nce(&a, &b, 0.3).unwrap().loss;
        assert!((info_nce_value(&a, &b, 0.3).unwrap() - full).abs() < 1e-13);
    }
}
