//! Dense ReLU networks with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_in × fan_out`, so a batch forward is `x · w + b`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Gaussian weights with standard deviation `gain / sqrt(fan_in)`,
    /// zero bias.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, gain: f64, rng: &mut R) -> Self {
        let std = gain / (fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(rng));
        Dense { w, b: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }
}

/// ReLU after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs saved by [`Mlp::forward_cached`].
pub struct Cache {
    inputs: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Grads { layers: net.layers.iter().map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.len()))).collect() }
    }

    pub fn sq_norm(&self) -> f64 {
        self.layers.iter().map(|(w, b)| w.iter().chain(b).map(|x| x * x).sum::<f64>()).sum()
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            *w *= k;
            *b *= k;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|(w, b)| w.iter().chain(b).all(|x| x.is_finite()))
    }
}

impl Mlp {
    /// `dims = [input, hidden..., output]`. Hidden layers use gain √2; the
    /// output layer uses `output_gain`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], output_gain: f64, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least input and output sizes");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { output_gain } else { std::f64::consts::SQRT_2 };
                Dense::new(dims[i], dims[i + 1], gain, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].fan_in()];
        d.extend(self.layers.iter().map(Dense::fan_out));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.w) + &layer.b;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, Cache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let next = h.dot(&layer.w) + &layer.b;
            inputs.push(h);
            h = next;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        (h, Cache { inputs })
    }

    /// Parameter gradients given `d loss / d output`.
    pub fn backward(&self, cache: &Cache, grad_out: Array2<f64>) -> Grads {
        let mut g = grad_out;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let a = &cache.inputs[i];
            let gw = a.t().dot(&g);
            let gb = g.sum_axis(Axis(0));
            out.push((gw, gb));
            if i > 0 {
                let mut back = g.dot(&layer.w.t());
                Zip::from(&mut back).and(a).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                });
                g = back;
            }
        }
        out.reverse();
        Grads { layers: out }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(&l.b).all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Grads::zeros_like(net), v: Grads::zeros_like(net) }
    }

    /// One descent step on `net` along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let step = self.lr;
        let eps = self.eps;
        let zipped = net.layers.iter_mut().zip(&grads.layers).zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()));
        for ((layer, (gw, gb)), ((mw, mb), (vw, vb))) in zipped {
            Zip::from(&mut layer.w).and(gw).and(mw).and(vw).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
            Zip::from(&mut layer.b).and(gb).and(mb).and(vb).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}
