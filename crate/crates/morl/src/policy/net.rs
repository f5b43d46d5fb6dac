//! Differentiable function approximators over a flat parameter vector.
//!
//! Both heads (action logits and vector values) are instances of [`Net`].
//! Three primitives cover everything the trainers need: `forward`,
//! reverse-mode `accumulate_grad` (given d loss / d output), and
//! forward-mode `tangent` (directional derivative of the output along a
//! parameter direction), which the trust-region solver uses for
//! Fisher-vector products.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Observation;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Net {
    Tabular(TabularNet),
    Mlp(MlpNet),
}

impl Net {
    pub fn n_params(&self) -> usize {
        match self {
            Net::Tabular(t) => t.weights.len(),
            Net::Mlp(m) => m.weights.len(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Net::Tabular(t) => &t.weights,
            Net::Mlp(m) => &m.weights,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Net::Tabular(t) => &mut t.weights,
            Net::Mlp(m) => &mut m.weights,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Net::Tabular(t) => t.n_outputs,
            Net::Mlp(m) => *m.dims.last().unwrap(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Net::Tabular(_) => "tabular-softmax",
            Net::Mlp(_) => "mlp",
        }
    }

    /// Layer sizes (tabular nets report `[n_states, n_outputs]`).
    pub fn architecture(&self) -> Vec<usize> {
        match self {
            Net::Tabular(t) => vec![t.n_states, t.n_outputs],
            Net::Mlp(m) => m.dims.clone(),
        }
    }

    pub fn forward(&self, obs: &Observation) -> Vec<f64> {
        match self {
            Net::Tabular(t) => t.row(obs.state).to_vec(),
            Net::Mlp(m) => m.forward(&obs.values),
        }
    }

    /// Accumulates d loss / d params into `grad`, given d loss / d output.
    pub fn accumulate_grad(&self, obs: &Observation, dl_dout: &[f64], grad: &mut [f64]) {
        match self {
            Net::Tabular(t) => {
                let base = obs.state * t.n_outputs;
                for (k, d) in dl_dout.iter().enumerate() {
                    grad[base + k] += d;
                }
            }
            Net::Mlp(m) => m.accumulate_grad(&obs.values, dl_dout, grad),
        }
    }

    /// Directional derivative of the output along the parameter direction `v`.
    pub fn tangent(&self, obs: &Observation, v: &[f64]) -> Vec<f64> {
        match self {
            Net::Tabular(t) => {
                let base = obs.state * t.n_outputs;
                v[base..base + t.n_outputs].to_vec()
            }
            Net::Mlp(m) => m.tangent(&obs.values, v),
        }
    }
}

/// One logit (or value) row per discrete state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TabularNet {
    pub n_states: usize,
    pub n_outputs: usize,
    pub weights: Vec<f64>,
}

impl TabularNet {
    pub fn zeros(n_states: usize, n_outputs: usize) -> Self {
        Self {
            n_states,
            n_outputs,
            weights: vec![0.0; n_states * n_outputs],
        }
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.weights[state * self.n_outputs..(state + 1) * self.n_outputs]
    }
}

/// Fully connected net with tanh hidden layers and a linear output layer.
///
/// `dims` is `[input, hidden..., output]`; weights are stored layer by layer
/// as the weight matrix (row-major, `out x in`) followed by the bias.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpNet {
    pub dims: Vec<usize>,
    pub weights: Vec<f64>,
}

impl MlpNet {
    pub fn new(dims: Vec<usize>, seed: u64) -> Self {
        assert!(dims.len() >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_out * fan_in {
                weights.push((rng.gen::<f64>() * 2.0 - 1.0) * scale);
            }
            weights.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self { dims, weights }
    }

    fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        // (w_offset, b_offset, in, out) per layer
        let mut offsets = Vec::new();
        let mut pos = 0;
        for l in 0..self.dims.len() - 1 {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            offsets.push((pos, pos + fan_out * fan_in, fan_in, fan_out));
            pos += fan_out * fan_in + fan_out;
        }
        offsets
    }

    /// Activations of every layer, input first, output last.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let offsets = self.layer_offsets();
        let n_layers = offsets.len();
        let mut acts = vec![input.to_vec()];
        for (l, &(w0, b0, fan_in, fan_out)) in offsets.iter().enumerate() {
            let x = acts.last().unwrap().clone();
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut acc = self.weights[b0 + o];
                let row = &self.weights[w0 + o * fan_in..w0 + (o + 1) * fan_in];
                for (wi, xi) in row.iter().zip(&x) {
                    acc += wi * xi;
                }
                z[o] = if l + 1 < n_layers { acc.tanh() } else { acc };
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.activations(input).pop().unwrap()
    }

    pub fn accumulate_grad(&self, input: &[f64], dl_dout: &[f64], grad: &mut [f64]) {
        let offsets = self.layer_offsets();
        let acts = self.activations(input);
        let n_layers = offsets.len();
        let mut delta = dl_dout.to_vec(); // d loss / d z of the current layer
        for l in (0..n_layers).rev() {
            let (w0, b0, fan_in, fan_out) = offsets[l];
            let x = &acts[l];
            for o in 0..fan_out {
                grad[b0 + o] += delta[o];
                let row = &mut grad[w0 + o * fan_in..w0 + (o + 1) * fan_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += delta[o] * xi;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let row = &self.weights[w0 + o * fan_in..w0 + (o + 1) * fan_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += delta[o] * wi;
                }
            }
            // acts[l] is the tanh output of layer l-1
            for (p, a) in prev.iter_mut().zip(x) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }

    pub fn tangent(&self, input: &[f64], v: &[f64]) -> Vec<f64> {
        let offsets = self.layer_offsets();
        let acts = self.activations(input);
        let n_layers = offsets.len();
        let mut t = vec![0.0; input.len()]; // tangent of the current activation
        for (l, &(w0, b0, fan_in, fan_out)) in offsets.iter().enumerate() {
            let x = &acts[l];
            let mut tz = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut acc = v[b0 + o];
                let wrow = &self.weights[w0 + o * fan_in..w0 + (o + 1) * fan_in];
                let vrow = &v[w0 + o * fan_in..w0 + (o + 1) * fan_in];
                for k in 0..fan_in {
                    acc += vrow[k] * x[k] + wrow[k] * t[k];
                }
                tz[o] = acc;
            }
            if l + 1 < n_layers {
                let a = &acts[l + 1];
                for (tzo, ao) in tz.iter_mut().zip(a) {
                    *tzo *= 1.0 - ao * ao;
                }
            }
            t = tz;
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_grad_matches_finite_differences() {
        let mut net = MlpNet::new(vec![3, 5, 4, 2], 7);
        let x = vec![0.3, -0.7, 1.1];
        let dl = vec![1.0, -2.0];
        let mut grad = vec![0.0; net.weights.len()];
        net.accumulate_grad(&x, &dl, &mut grad);
        let eps = 1e-6;
        for k in (0..net.weights.len()).step_by(7) {
            let orig = net.weights[k];
            net.weights[k] = orig + eps;
            let up: f64 = net.forward(&x).iter().zip(&dl).map(|(y, d)| y * d).sum();
            net.weights[k] = orig - eps;
            let dn: f64 = net.forward(&x).iter().zip(&dl).map(|(y, d)| y * d).sum();
            net.weights[k] = orig;
            let fd = (up - dn) / (2.0 * eps);
            assert!(
                (fd - grad[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {k}: fd={fd} analytic={}",
                grad[k]
            );
        }
    }

    #[test]
    fn mlp_tangent_matches_finite_differences() {
        let net = MlpNet::new(vec![2, 4, 3], 11);
        let x = vec![0.5, -0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..net.weights.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let t = net.tangent(&x, &v);
        let eps = 1e-6;
        let mut plus = net.clone();
        let mut minus = net.clone();
        for ((p, m), vi) in plus
            .weights
            .iter_mut()
            .zip(minus.weights.iter_mut())
            .zip(&v)
        {
            *p += eps * vi;
            *m -= eps * vi;
        }
        let yp = plus.forward(&x);
        let ym = minus.forward(&x);
        for (k, tk) in t.iter().enumerate() {
            let fd = (yp[k] - ym[k]) / (2.0 * eps);
            assert!((fd - tk).abs() < 1e-6, "output {k}: fd={fd} tangent={tk}");
        }
    }

    #[test]
    fn tabular_net_reads_and_writes_rows() {
        let mut net = Net::Tabular(TabularNet::zeros(3, 2));
        net.params_mut()[2] = 1.5; // state 1, output 0
        let o = Observation {
            values: vec![],
            state: 1,
        };
        assert_eq!(net.forward(&o), vec![1.5, 0.0]);
        let mut grad = vec![0.0; 6];
        net.accumulate_grad(&o, &[2.0, 3.0], &mut grad);
        assert_eq!(grad, vec![0.0, 0.0, 2.0, 3.0, 0.0, 0.0]);
        assert_eq!(net.tangent(&o, &[0.0, 0.0, 0.5, 0.25, 0.0, 0.0]), vec![0.5, 0.25]);
    }
}
