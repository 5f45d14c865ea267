use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpGrads};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state for one [`Mlp`].
///
/// Moments are stored per tensor in layer order: weight, then bias.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        let sizes: Vec<usize> = net
            .layers()
            .iter()
            .flat_map(|l| [l.weight.as_slice().len(), l.bias.len()])
            .collect();
        Self {
            config,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// Applies one bias-corrected update. Non-finite gradients are rejected
    /// before any parameter is touched.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(Error::shape("gradient/parameter layer counts differ"));
        }
        for (i, (l, g)) in net.layers().iter().zip(&grads.layers).enumerate() {
            if l.weight.shape() != g.weight.shape() || l.bias.len() != g.bias.len() {
                return Err(Error::shape(format!("layer {i}: gradient shape mismatch")));
            }
            if let Some(v) = g.weight.as_slice().iter().chain(&g.bias).find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient {v} in layer {i} at optimizer step {}",
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let tensors = net.layers_mut().iter_mut().zip(&grads.layers).flat_map(|(l, g)| {
            [
                (l.weight.as_mut_slice(), g.weight.as_slice()),
                (l.bias.as_mut_slice(), g.bias.as_slice()),
            ]
        });
        for ((params, grad), (m, v)) in tensors.zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Activation, Layer, Matrix};

    fn scalar_net(w: f64) -> Mlp {
        Mlp::new(
            vec![Layer {
                weight: Matrix::from_vec(1, 1, vec![w]).unwrap(),
                bias: vec![0.0],
                activation: Activation::Identity,
            }],
            false,
        )
        .unwrap()
    }

    fn scalar_grad(g: f64) -> MlpGrads {
        MlpGrads {
            layers: vec![crate::numkit::LayerGrad {
                weight: {
                    let mut w = Matrix::zeros(1, 1);
                    w.set(0, 0, g);
                    w
                },
                bias: vec![0.0],
            }],
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar_net(0.0);
        let mut opt = AdamState::new(
            &net,
            AdamConfig {
                lr: 0.1,
                ..AdamConfig::default()
            },
        );
        opt.step(&mut net, &scalar_grad(1.0)).unwrap();
        // m̂ = 1, v̂ = 1 ⇒ Δ = −lr · 1 / (1 + eps)
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((net.layers()[0].weight.get(0, 0) - expected).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut net = scalar_net(0.5);
        let mut opt = AdamState::new(&net, AdamConfig::default());
        opt.step(&mut net, &scalar_grad(2.0)).unwrap();
        let before = net.clone();
        let m_before = opt.first_moments()[0][0];
        let v_before = opt.second_moments()[0][0];
        let p_before = before.layers()[0].weight.get(0, 0);
        opt.step(&mut net, &scalar_grad(0.0)).unwrap();
        // m ≠ 0 so params still drift; a fresh optimizer with zero grads must not move
        assert!((opt.first_moments()[0][0] - 0.9 * m_before).abs() < 1e-15);
        assert!((opt.second_moments()[0][0] - 0.999 * v_before).abs() < 1e-15);
        assert!(net.layers()[0].weight.get(0, 0) < p_before);

        let mut fresh = scalar_net(0.5);
        let mut opt = AdamState::new(&fresh, AdamConfig::default());
        opt.step(&mut fresh, &scalar_grad(0.0)).unwrap();
        assert_eq!(fresh, scalar_net(0.5));
    }

    #[test]
    fn constant_gradient_gives_bounded_monotone_drift() {
        let lr = 0.01;
        let mut net = scalar_net(0.0);
        let mut opt = AdamState::new(
            &net,
            AdamConfig {
                lr,
                ..AdamConfig::default()
            },
        );
        let mut prev = 0.0;
        for _ in 0..500 {
            opt.step(&mut net, &scalar_grad(0.37)).unwrap();
            let w = net.layers()[0].weight.get(0, 0);
            let delta = prev - w;
            assert!(delta > 0.0);
            assert!(delta <= lr * (1.0 + 1e-6));
            prev = w;
        }
    }

    #[test]
    fn nan_gradient_rejected_without_mutation() {
        let mut net = scalar_net(1.0);
        let mut opt = AdamState::new(&net, AdamConfig::default());
        let err = opt.step(&mut net, &scalar_grad(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(net, scalar_net(1.0));
        assert_eq!(opt.step_count(), 0);
    }
}
