//! Dense layers over a flat parameter vector, with hand-written backprop.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub segments: Vec<Segment>,
    pub len: usize,
}

impl ParamLayout {
    fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.len;
        let seg = Segment { name, shape, offset };
        self.len += seg.len();
        self.segments.push(seg);
        offset
    }

    pub fn get(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub(crate) fn linear(&mut self, name: &str, n_in: usize, n_out: usize) -> Linear {
        let weight = self.push(format!("{name}.weight"), vec![n_out, n_in]);
        let bias = self.push(format!("{name}.bias"), vec![n_out]);
        Linear { weight, bias, n_in, n_out }
    }

    pub(crate) fn mlp(&mut self, name: &str, n_in: usize, widths: &[usize], activation: Activation) -> Mlp {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = n_in;
        for (k, &w) in widths.iter().enumerate() {
            layers.push(self.linear(&format!("{name}.{k}"), prev, w));
            prev = w;
        }
        Mlp { layers, activation }
    }

    pub(crate) fn scalar_block(&mut self, name: &str, n: usize) -> usize {
        self.push(name.to_string(), vec![n])
    }
}

/// `y = W x + b` with `W` stored row-major as `[n_out, n_in]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        let w = &theta[self.weight..self.weight + self.n_in * self.n_out];
        let b = &theta[self.bias..self.bias + self.n_out];
        w.chunks_exact(self.n_in).zip(b).map(|(row, &bias)| bias + dot(row, x)).collect()
    }

    /// Accumulates `dL/dW`, `dL/db` into `grad` and returns `dL/dx`.
    pub fn backward(&self, theta: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], want_dx: bool) -> Vec<f64> {
        let n_w = self.n_in * self.n_out;
        {
            let gw = &mut grad[self.weight..self.weight + n_w];
            for (row, &g) in gw.chunks_exact_mut(self.n_in).zip(dy) {
                if g != 0.0 {
                    for (r, &xi) in row.iter_mut().zip(x) {
                        *r += g * xi;
                    }
                }
            }
        }
        for (gb, &g) in grad[self.bias..self.bias + self.n_out].iter_mut().zip(dy) {
            *gb += g;
        }
        if !want_dx {
            return Vec::new();
        }
        let w = &theta[self.weight..self.weight + n_w];
        let mut dx = vec![0.0; self.n_in];
        for (row, &g) in w.chunks_exact(self.n_in).zip(dy) {
            if g != 0.0 {
                for (d, &wi) in dx.iter_mut().zip(row) {
                    *d += g * wi;
                }
            }
        }
        dx
    }

    pub fn init<R: Rng + ?Sized>(&self, theta: &mut [f64], gain: f64, rng: &mut R) {
        let w = orthogonal(self.n_out, self.n_in, gain, rng);
        theta[self.weight..self.weight + w.len()].copy_from_slice(&w);
        theta[self.bias..self.bias + self.n_out].fill(0.0);
    }
}

/// Stack of linear layers, each followed by the activation.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn out_dim(&self, n_in: usize) -> usize {
        self.layers.last().map_or(n_in, |l| l.n_out)
    }

    /// Returns every activation, input first, so backprop can reuse them.
    pub fn forward(&self, theta: &[f64], x: Vec<f64>) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for layer in &self.layers {
            let mut y = layer.forward(theta, acts.last().expect("input present"));
            for v in &mut y {
                *v = self.activation.apply(*v);
            }
            acts.push(y);
        }
        acts
    }

    /// Backprop from `dout` (gradient w.r.t. the last activation).
    pub fn backward(&self, theta: &[f64], acts: &[Vec<f64>], dout: &[f64], grad: &mut [f64], want_dx: bool) -> Vec<f64> {
        let mut d = dout.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            for (g, &y) in d.iter_mut().zip(&acts[k + 1]) {
                *g *= self.activation.slope(y);
            }
            d = layer.backward(theta, &acts[k], &d, grad, want_dx || k > 0);
        }
        d
    }

    pub fn init<R: Rng + ?Sized>(&self, theta: &mut [f64], gain: f64, rng: &mut R) {
        for layer in &self.layers {
            layer.init(theta, gain, rng);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `rows × cols` matrix (row-major) with orthonormal rows or columns,
/// whichever is the smaller set, scaled by `gain`.
pub(crate) fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (m, n) = (rows.max(cols), rows.min(cols));
    // n column vectors of length m, orthonormalised by modified Gram-Schmidt.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    while q.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for u in &q {
            let p = dot(&v, u);
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= p * ui;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            w[r * cols + c] = gain * if rows >= cols { q[c][r] } else { q[r][c] };
        }
    }
    w
}
