use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix, NORM_EPS};
use super::rng::SeededRng;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One affine layer `y = act(x · W + b)`; `weight` is `in × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Multilayer perceptron encoder.
///
/// When `normalize_output` is set, each output row is projected onto the unit
/// sphere, and [`Mlp::backward`] includes the Jacobian of that projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    normalize_output: bool,
}

/// Gradients with the same layout as [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrad>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Intermediate values retained by [`Mlp::forward_cached`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
    norms: Vec<f64>,
}

/// Hidden width of the default synthetic encoder.
pub const ENCODER_HIDDEN: usize = 64;
/// Embedding dimension of the default synthetic encoder.
pub const EMBED_DIM: usize = 16;

impl Mlp {
    pub fn new(layers: Vec<Layer>, normalize_output: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::shape(format!(
                    "layer {i}: bias has {} entries for {} outputs",
                    l.bias.len(),
                    l.output_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            normalize_output,
        })
    }

    /// Random initialization: He-scaled Gaussian weights ahead of ReLU,
    /// `1/fan_in` variance otherwise, zero biases.
    pub fn random(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        normalize_output: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("need at least input and output dims"));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let activation = if i + 1 == n { output } else { hidden };
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let gain = if activation == Activation::Relu { 2.0 } else { 1.0 };
                let std = (gain / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        z * std
                    })
                    .collect();
                Layer {
                    weight: Matrix::from_vec(fan_in, fan_out, data).expect("finite init"),
                    bias: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        Self::new(layers, normalize_output)
    }

    /// `input_dim → 64 → 64 → 16`, ReLU hidden layers, unit-norm output.
    pub fn encoder(input_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::random(
            &[input_dim, ENCODER_HIDDEN, ENCODER_HIDDEN, EMBED_DIM],
            Activation::Relu,
            Activation::Identity,
            true,
            rng,
        )
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn normalize_output(&self) -> bool {
        self.normalize_output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let mut x = self.layers[0].affine(inputs);
        let act = self.layers[0].activation;
        x.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        for layer in &self.layers[1..] {
            let mut y = layer.affine(&x);
            let act = layer.activation;
            y.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            x = y;
        }
        if self.normalize_output {
            x.normalize_rows();
        }
        Ok(x)
    }

    pub fn forward_cached(&self, inputs: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(inputs)?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        for layer in &self.layers {
            let z = layer.affine(&x);
            let act = layer.activation;
            let y = z.map(|v| act.apply(v));
            layer_inputs.push(std::mem::replace(&mut x, y.clone()));
            pre.push(z);
            post.push(y);
        }
        let mut norms = Vec::new();
        if self.normalize_output {
            norms = x.row_norms();
            x.normalize_rows();
        }
        Ok((
            x,
            ForwardCache {
                inputs: layer_inputs,
                pre,
                post,
                norms,
            },
        ))
    }

    /// Gradients of a scalar loss w.r.t. every weight and bias, given
    /// `grad_out = ∂loss/∂output`.
    pub fn backward(&self, inputs: &Matrix, grad_out: &Matrix) -> Result<MlpGrads> {
        let (_, cache) = self.forward_cached(inputs)?;
        self.backward_cached(&cache, grad_out)
    }

    pub fn backward_cached(&self, cache: &ForwardCache, grad_out: &Matrix) -> Result<MlpGrads> {
        let out = cache.post.last().expect("non-empty network");
        if grad_out.shape() != out.shape() {
            return Err(Error::shape(format!(
                "grad_out {:?} does not match output {:?}",
                grad_out.shape(),
                out.shape()
            )));
        }
        let mut g = grad_out.clone();
        if self.normalize_output {
            // y = v / max(‖v‖, eps);  ∂y/∂v = (I − y yᵀ) / ‖v‖ above the clamp
            for r in 0..g.rows() {
                let v = out.row(r);
                let n = cache.norms[r];
                let row = g.row_mut(r);
                if n >= NORM_EPS {
                    let proj: f64 = v.iter().zip(row.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                    for (gi, vi) in row.iter_mut().zip(v) {
                        *gi = (*gi - vi / n * proj) / n;
                    }
                } else {
                    row.iter_mut().for_each(|gi| *gi /= NORM_EPS);
                }
            }
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            let pre = cache.pre[idx].as_slice();
            let post = cache.post[idx].as_slice();
            for ((gi, &x), &y) in g.as_mut_slice().iter_mut().zip(pre).zip(post) {
                *gi *= act.derivative(x, y);
            }
            let weight = cache.inputs[idx].matmul_tn(&g)?;
            let mut bias = vec![0.0; layer.output_dim()];
            for row in g.row_iter() {
                for (b, v) in bias.iter_mut().zip(row) {
                    *b += v;
                }
            }
            let next = if idx > 0 {
                Some(g.matmul_nt(&layer.weight)?)
            } else {
                None
            };
            grads.push(LayerGrad { weight, bias });
            if let Some(n) = next {
                g = n;
            }
        }
        grads.reverse();
        Ok(MlpGrads { layers: grads })
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Hex digest of the exact parameter bits.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for l in &self.layers {
            for v in l.weight.as_slice().iter().chain(&l.bias) {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl Layer {
    fn affine(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.output_dim());
        for r in 0..out.rows() {
            out.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(1.0, x, false, &self.weight, false, 1.0, &mut out);
        out
    }
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.input_dim(), l.output_dim()),
                    bias: vec![0.0; l.output_dim()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("gradient layer counts differ"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_assign(&b.weight)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.as_slice().iter().chain(&l.bias).all(|&v| v == 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(w: Vec<Vec<f64>>, b: Vec<f64>, act: Activation) -> Layer {
        Layer {
            weight: Matrix::from_rows(&w).unwrap(),
            bias: b,
            activation: act,
        }
    }

    #[test]
    fn identity_network_passes_input_through() {
        let net = Mlp::new(
            vec![layer(
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![0.0, 0.0],
                Activation::Identity,
            )],
            false,
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -1.7]]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn two_layer_hand_evaluation() {
        // h = sigmoid(0.5·1 + 0.1) = sigmoid(0.6);  y = 2h − 1
        let net = Mlp::new(
            vec![
                layer(vec![vec![0.5], vec![-0.3]], vec![0.1], Activation::Sigmoid),
                layer(vec![vec![2.0]], vec![-1.0], Activation::Identity),
            ],
            false,
        )
        .unwrap();
        let y = net
            .forward(&Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap())
            .unwrap();
        let h = 1.0 / (1.0 + (-0.6f64).exp());
        assert!((y.get(0, 0) - (2.0 * h - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn normalized_outputs_are_unit_length() {
        let mut rng = SeededRng::new(3);
        let net = Mlp::encoder(16, &mut rng).unwrap();
        let x = Matrix::from_vec(
            8,
            16,
            (0..128).map(|i| (i as f64 * 0.91).cos()).collect(),
        )
        .unwrap();
        for n in net.forward(&x).unwrap().row_norms() {
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_chain_rule_by_hand() {
        // y = w·x + b, loss gradient g ⇒ dW = x·g, db = g
        let net = Mlp::new(
            vec![layer(vec![vec![1.5]], vec![0.2], Activation::Identity)],
            false,
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![0.7]]).unwrap();
        let g = Matrix::from_rows(&[vec![-2.0]]).unwrap();
        let grads = net.backward(&x, &g).unwrap();
        assert!((grads.layers[0].weight.get(0, 0) - 0.7 * -2.0).abs() < 1e-15);
        assert!((grads.layers[0].bias[0] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = SeededRng::new(9);
        let net = Mlp::encoder(4, &mut rng).unwrap();
        let x = Matrix::filled(3, 4, 0.5);
        let grads = net.backward(&x, &Matrix::zeros(3, EMBED_DIM)).unwrap();
        assert!(grads.is_zero());
    }

    #[test]
    fn shape_errors() {
        let mut rng = SeededRng::new(1);
        let net = Mlp::encoder(4, &mut rng).unwrap();
        assert!(matches!(
            net.forward(&Matrix::zeros(2, 5)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            net.backward(&Matrix::zeros(2, 4), &Matrix::zeros(2, 3)),
            Err(Error::Shape(_))
        ));
        let bad = Mlp::new(
            vec![
                layer(vec![vec![1.0, 1.0]], vec![0.0, 0.0], Activation::Relu),
                layer(vec![vec![1.0]], vec![0.0], Activation::Identity),
            ],
            false,
        );
        assert!(matches!(bad, Err(Error::Shape(_))));
    }
}
