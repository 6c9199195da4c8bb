//! Minimal dense networks with hand-written backprop and plain SGD.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("valid std");
        Linear {
            inputs,
            outputs,
            w: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
            b: vec![0.0; outputs],
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.b
            .iter()
            .enumerate()
            .map(|(o, b)| {
                let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
                b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients into `grad`; returns dL/dx.
    pub(crate) fn backward(&self, x: &[f64], grad_out: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.inputs];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let row = o * self.inputs;
            for i in 0..self.inputs {
                grad.w[row + i] += g * x[i];
                grad_in[i] += g * self.w[row + i];
            }
        }
        grad_in
    }

    pub(crate) fn sgd(&mut self, grad: &Linear, lr: f64) {
        for (w, g) in self.w.iter_mut().zip(&grad.w) {
            *w -= lr * g;
        }
        for (b, g) in self.b.iter_mut().zip(&grad.b) {
            *b -= lr * g;
        }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Linear::zeros(self.inputs, self.outputs)
    }
}

/// Stack of linear layers with ReLU after every layer except (optionally)
/// the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub relu_output: bool,
}

/// Post-activation values of every layer, input first.
#[derive(Debug, Clone)]
pub struct Trace {
    pub acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds the input")
    }
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], relu_output: bool, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        Mlp {
            layers: sizes.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
            relu_output,
        }
    }

    pub fn zeros(sizes: &[usize], relu_output: bool) -> Self {
        Mlp {
            layers: sizes.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
            relu_output,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    fn relu_after(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.relu_output
    }

    pub fn forward(&self, x: &[f64]) -> Trace {
        let mut acts = vec![x.to_vec()];
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(acts.last().unwrap());
            if self.relu_after(i) {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(y);
        }
        Trace { acts }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).acts.pop().unwrap()
    }

    /// Backprop of `grad_out` (dL/d output) through a recorded trace.
    /// Returns per-layer gradients and dL/d input.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64]) -> (Vec<Linear>, Vec<f64>) {
        let mut grads: Vec<Linear> = self.layers.iter().map(Linear::zeros_like).collect();
        let mut g = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            if self.relu_after(i) {
                for (gv, a) in g.iter_mut().zip(&trace.acts[i + 1]) {
                    if *a <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            g = self.layers[i].backward(&trace.acts[i], &g, &mut grads[i]);
        }
        (grads, g)
    }

    pub fn sgd(&mut self, grads: &[Linear], lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.sgd(g, lr);
        }
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }
}

/// Flattens gradients in the same order as [`Mlp::params`].
pub fn flatten(grads: &[Linear]) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
        .collect()
}

pub fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
