#![allow(dead_code)]

use centrobind::losses::{centrobind_loss, info_nce};
use centrobind::numkit::{sigmoid, Activation, Matrix, Mlp, MlpGrads, SeededRng};

pub const GRAD_COMPOSITES: usize = 50;
pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_RTOL: f64 = 1e-4;
pub const GRAD_SEED: u64 = 7;

pub fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

pub fn unit_rows(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let mut m = random_matrix(rows, cols, rng);
    m.normalize_rows();
    m
}

/// One network fed into InfoNCE, either against a second trainable network
/// or against fixed anchors with the symmetric anchored loss.
struct Composite {
    left: Mlp,
    right: Option<Mlp>,
    x: Matrix,
    y: Matrix,
    anchors: Matrix,
    tau: f64,
}

impl Composite {
    /// Redraws until the composite is differentiable with margin: no ReLU
    /// pre-activation near its kink and no output row near zero before
    /// normalization.
    fn random(case: usize, rng: &mut SeededRng) -> Composite {
        loop {
            let c = Self::draw(case, rng);
            if c.is_smooth() {
                return c;
            }
        }
    }

    fn is_smooth(&self) -> bool {
        let mut nets = vec![(&self.left, &self.x)];
        if let Some(r) = &self.right {
            nets.push((r, &self.y));
        }
        nets.into_iter().all(|(net, x)| smooth_at(net, x))
    }

    fn draw(case: usize, rng: &mut SeededRng) -> Composite {
        let hidden = if case % 2 == 0 { Activation::Relu } else { Activation::Sigmoid };
        let b = 2 + rng.below(5);
        let out = 2 + rng.below(4);
        let net = |rng: &mut SeededRng| {
            let mut dims = vec![2 + rng.below(5)];
            for _ in 0..rng.below(3) {
                dims.push(3 + rng.below(6));
            }
            dims.push(out);
            let normalize = rng.below(3) != 0;
            Mlp::random(&dims, hidden, Activation::Identity, normalize, rng).unwrap()
        };
        let left = net(rng);
        let right = if case % 3 == 2 { None } else { Some(net(rng)) };
        let x = random_matrix(b, left.input_dim(), rng);
        let y = random_matrix(b, right.as_ref().map_or(1, Mlp::input_dim), rng);
        let anchors = unit_rows(b, out, rng);
        let tau = [0.1, 0.3, 1.0][rng.below(3)];
        Composite {
            left,
            right,
            x,
            y,
            anchors,
            tau,
        }
    }

    fn loss(&self) -> f64 {
        let zl = self.left.forward(&self.x).unwrap();
        match &self.right {
            Some(r) => info_nce(&zl, &r.forward(&self.y).unwrap(), self.tau).unwrap().loss,
            None => centrobind_loss(&self.anchors, &zl, self.tau).unwrap().loss,
        }
    }

    fn analytic(&self) -> Vec<f64> {
        let (zl, cl) = self.left.forward_cached(&self.x).unwrap();
        let mut out = Vec::new();
        match &self.right {
            Some(r) => {
                let (zr, cr) = r.forward_cached(&self.y).unwrap();
                let nce = info_nce(&zl, &zr, self.tau).unwrap();
                flatten(&self.left.backward_cached(&cl, &nce.grad_left).unwrap(), &mut out);
                flatten(&r.backward_cached(&cr, &nce.grad_right).unwrap(), &mut out);
            }
            None => {
                let l = centrobind_loss(&self.anchors, &zl, self.tau).unwrap();
                flatten(&self.left.backward_cached(&cl, &l.grad).unwrap(), &mut out);
            }
        }
        out
    }

    fn numeric(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        let nets = if self.right.is_some() { 2 } else { 1 };
        for n in 0..nets {
            let layers = self.net(n).layers().len();
            for l in 0..layers {
                let (rows, cols) = self.net(n).layers()[l].weight.shape();
                for r in 0..rows {
                    for c in 0..cols {
                        out.push(self.central(|s, d| {
                            let w = &mut s.net_mut(n).layers_mut()[l].weight;
                            w.set(r, c, w.get(r, c) + d);
                        }));
                    }
                }
                for k in 0..cols {
                    out.push(self.central(|s, d| s.net_mut(n).layers_mut()[l].bias[k] += d));
                }
            }
        }
        out
    }

    fn central(&mut self, nudge: impl Fn(&mut Self, f64)) -> f64 {
        nudge(self, GRAD_STEP);
        let plus = self.loss();
        nudge(self, -2.0 * GRAD_STEP);
        let minus = self.loss();
        nudge(self, GRAD_STEP);
        (plus - minus) / (2.0 * GRAD_STEP)
    }

    fn net(&self, n: usize) -> &Mlp {
        if n == 0 {
            &self.left
        } else {
            self.right.as_ref().unwrap()
        }
    }

    fn net_mut(&mut self, n: usize) -> &mut Mlp {
        if n == 0 {
            &mut self.left
        } else {
            self.right.as_mut().unwrap()
        }
    }
}

const KINK_MARGIN: f64 = 1e-3;
const MIN_OUTPUT_NORM: f64 = 0.1;

fn smooth_at(net: &Mlp, x: &Matrix) -> bool {
    let mut h = x.clone();
    for layer in net.layers() {
        let mut pre = h.matmul(&layer.weight).unwrap();
        for r in 0..pre.rows() {
            for (v, b) in pre.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        if layer.activation == Activation::Relu && pre.as_slice().iter().any(|v| v.abs() < KINK_MARGIN) {
            return false;
        }
        h = net_activation(layer.activation, &pre);
    }
    !net.normalize_output() || h.row_norms().iter().all(|&n| n > MIN_OUTPUT_NORM)
}

fn net_activation(a: Activation, pre: &Matrix) -> Matrix {
    match a {
        Activation::Relu => pre.map(|v| v.max(0.0)),
        Activation::Sigmoid => pre.map(sigmoid),
        Activation::Identity => pre.clone(),
    }
}

fn flatten(g: &MlpGrads, out: &mut Vec<f64>) {
    for l in &g.layers {
        out.extend_from_slice(l.weight.as_slice());
        out.extend_from_slice(&l.bias);
    }
}

/// Relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` for
/// each of the seeded composites.
pub fn gradient_suite(seed: u64) -> Vec<f64> {
    let root = SeededRng::new(seed);
    (0..GRAD_COMPOSITES)
        .map(|case| {
            let mut rng = root.fork(case as u64);
            let mut comp = Composite::random(case, &mut rng);
            let a = comp.analytic();
            let n = comp.numeric();
            assert_eq!(a.len(), n.len());
            let diff = a.iter().zip(&n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(n.iter().map(|x| x * x).sum::<f64>().sqrt());
            if scale == 0.0 {
                0.0
            } else {
                diff / scale
            }
        })
        .collect()
}
