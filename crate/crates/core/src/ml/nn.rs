use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense layer, weights row-major `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Fully connected network: tanh hidden layers, linear scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(n_in: usize, widths: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(widths);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|s| {
                let (i, o) = (s[0], s[1]);
                let a = (6.0 / (i + o) as f64).sqrt();
                Layer {
                    n_in: i,
                    n_out: o,
                    w: (0..i * o).map(|_| rng.random_range(-a..a)).collect(),
                    b: vec![0.0; o],
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(&l.w);
            p.extend_from_slice(&l.b);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut o = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[o..o + nw]);
            o += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[o..o + nb]);
            o += nb;
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = l.b.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                *zo += row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
            }
            if k < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        a[0]
    }

    /// Half mean squared error over the batch and its gradient with respect
    /// to [`Mlp::params`].
    pub fn loss_and_grad(&self, x: &[&[f64]], y: &[f64]) -> (f64, Vec<f64>) {
        let m = x.len() as f64;
        let nl = self.layers.len();
        let mut grad_w: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.w.len()]).collect();
        let mut grad_b: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect();
        let mut loss = 0.0;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(nl + 1);
        for (xi, &yi) in x.iter().zip(y) {
            acts.clear();
            acts.push(xi.to_vec());
            for (k, l) in self.layers.iter().enumerate() {
                let a = &acts[k];
                let mut z = l.b.clone();
                for (o, zo) in z.iter_mut().enumerate() {
                    let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                    *zo += row.iter().zip(a).map(|(w, v)| w * v).sum::<f64>();
                }
                if k + 1 < nl {
                    z.iter_mut().for_each(|v| *v = v.tanh());
                }
                acts.push(z);
            }
            let r = acts[nl][0] - yi;
            loss += 0.5 * r * r;
            let mut delta = vec![r / m];
            for k in (0..nl).rev() {
                let l = &self.layers[k];
                let a = &acts[k];
                for o in 0..l.n_out {
                    grad_b[k][o] += delta[o];
                    let gw = &mut grad_w[k][o * l.n_in..(o + 1) * l.n_in];
                    for (g, v) in gw.iter_mut().zip(a) {
                        *g += delta[o] * v;
                    }
                }
                if k > 0 {
                    let mut prev = vec![0.0; l.n_in];
                    for o in 0..l.n_out {
                        let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += delta[o] * w;
                        }
                    }
                    for (p, h) in prev.iter_mut().zip(a) {
                        *p *= 1.0 - h * h;
                    }
                    delta = prev;
                }
            }
        }
        let mut g = Vec::with_capacity(self.n_params());
        for k in 0..nl {
            g.extend_from_slice(&grad_w[k]);
            g.extend_from_slice(&grad_b[k]);
        }
        (loss / m, g)
    }

    /// Mini-batch Adam. Returns the full-data loss after every epoch.
    pub fn train(&mut self, x: &[Vec<f64>], y: &[f64], s: AdamSettings) -> Result<Vec<f64>> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let mut p = self.params();
        let mut m1 = vec![0.0; p.len()];
        let mut m2 = vec![0.0; p.len()];
        let mut order: Vec<usize> = (0..x.len()).collect();
        let mut t = 0i32;
        let mut history = Vec::with_capacity(s.epochs);
        let bs = s.batch_size.clamp(1, x.len());
        for epoch in 0..s.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(bs) {
                let xb: Vec<&[f64]> = chunk.iter().map(|&i| x[i].as_slice()).collect();
                let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
                let (_, g) = self.loss_and_grad(&xb, &yb);
                t += 1;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for j in 0..p.len() {
                    let gj = g[j] + s.weight_decay * p[j];
                    m1[j] = b1 * m1[j] + (1.0 - b1) * gj;
                    m2[j] = b2 * m2[j] + (1.0 - b2) * gj * gj;
                    p[j] -= s.learning_rate * (m1[j] / c1) / ((m2[j] / c2).sqrt() + eps);
                }
                self.set_params(&p);
            }
            let loss = 0.5 * x.iter().zip(y).map(|(xi, yi)| (self.predict_row(xi) - yi).powi(2)).sum::<f64>()
                / x.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "network training diverged at epoch {epoch} (loss {loss}); lower the learning rate"
                )));
            }
            history.push(loss);
        }
        Ok(history)
    }
}
