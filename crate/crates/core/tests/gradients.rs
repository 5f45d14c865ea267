mod common;

use centrobind::losses::{fabind_loss, info_nce_value, Direction};
use centrobind::numkit::{Matrix, SeededRng};
use common::{gradient_suite, unit_rows, GRAD_RTOL, GRAD_SEED, GRAD_STEP};

#[test]
fn composites_match_central_differences() {
    let errors = gradient_suite(GRAD_SEED);
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    assert!(worst < GRAD_RTOL, "worst relative error {worst:e}");
}

#[test]
fn other_seeds_also_agree() {
    for seed in [100, 101] {
        let worst = gradient_suite(seed).into_iter().fold(0.0, f64::max);
        assert!(worst < GRAD_RTOL, "seed {seed}: {worst:e}");
    }
}

/// Loss as a function of the anchor side with the embeddings held fixed.
fn fabind_value(anchor: &Matrix, other: &Matrix, tau: f64) -> f64 {
    fabind_loss(anchor, other, tau, Direction::Symmetric).unwrap().loss
}

#[test]
fn fabind_gradient_matches_differences_on_trainable_side() {
    let mut rng = SeededRng::new(3);
    let anchor = unit_rows(6, 4, &mut rng);
    let mut other = unit_rows(6, 4, &mut rng);
    let tau = 0.3;
    let g = fabind_loss(&anchor, &other, tau, Direction::Symmetric).unwrap().grad;
    for r in 0..6 {
        for c in 0..4 {
            let v = other.get(r, c);
            other.set(r, c, v + GRAD_STEP);
            let plus = fabind_value(&anchor, &other, tau);
            other.set(r, c, v - GRAD_STEP);
            let minus = fabind_value(&anchor, &other, tau);
            other.set(r, c, v);
            let fd = (plus - minus) / (2.0 * GRAD_STEP);
            assert!((fd - g.get(r, c)).abs() < 1e-7, "({r},{c}): {fd} vs {}", g.get(r, c));
        }
    }
}

#[test]
fn loss_is_bounded_by_log_batch_and_temperature() {
    let mut rng = SeededRng::new(4);
    for _ in 0..20 {
        let a = unit_rows(32, 8, &mut rng);
        let b = unit_rows(32, 8, &mut rng);
        let l = fabind_value(&a, &b, 0.1);
        // each direction is at most ln B + 2/τ for unit rows
        assert!((0.0..=2.0 * (32f64.ln() + 2.0 / 0.1)).contains(&l));
        let one_way = info_nce_value(&a, &b, 1e9).unwrap();
        assert!((one_way - 32f64.ln()).abs() < 1e-6);
    }
}
