//! Dense feed-forward Q-network: forward pass, backprop, SGD arithmetic.
//!
//! Hidden layers are rectified-linear, the output layer is linear, one output
//! per action in the full (unmasked) agnostic action space. Parameter shapes
//! are a pure function of the task, so every edge of a task trains a network
//! that aggregates elementwise with the central one.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `[out][in]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }
}

/// All weights and biases of one policy network.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub layers: Vec<DenseLayer>,
}

impl PolicyParams {
    /// Seeded scaled-uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (in_dim, out_dim) = (w[0], w[1]);
            let limit = 1.0 / (in_dim as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            let biases = vec![0.0; out_dim];
            layers.push(DenseLayer {
                in_dim,
                out_dim,
                weights,
                biases,
            });
        }
        PolicyParams { layers }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1]))
            .collect();
        PolicyParams { layers }
    }

    pub fn zeros_like(&self) -> Self {
        PolicyParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Forward pass; hidden activations are rectified-linear, output is linear.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut current = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            current = affine(layer, &current);
            if i != last {
                for v in &mut current {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        current
    }

    /// Forward pass keeping every layer's activation for backprop.
    fn forward_cached(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = affine(layer, acts.last().unwrap());
            if i != last {
                for v in &mut out {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(out);
        }
        acts
    }

    /// `self += a * other`, elementwise; shapes must match.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert!(self.same_shape(other), "parameter shape mismatch");
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            for (w, s) in dst.weights.iter_mut().zip(&src.weights) {
                *w += a * s;
            }
            for (b, s) in dst.biases.iter_mut().zip(&src.biases) {
                *b += a * s;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                worst = worst.max((x - y).abs());
            }
            for (x, y) in a.biases.iter().zip(&b.biases) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for l in &self.layers {
            sum += l.weights.iter().map(|w| w * w).sum::<f64>();
            sum += l.biases.iter().map(|b| b * b).sum::<f64>();
        }
        sum.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    // Flat parameter view, ordered layer by layer, weights then biases.

    pub fn flat_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.biases.len() {
                return l.biases[idx];
            }
            idx -= l.biases.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                l.weights[idx] = value;
                return;
            }
            idx -= l.weights.len();
            if idx < l.biases.len() {
                l.biases[idx] = value;
                return;
            }
            idx -= l.biases.len();
        }
        panic!("flat index out of range");
    }

    /// FNV-1a over the parameter bit patterns; stable drift fingerprint.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for l in &self.layers {
            l.weights.iter().for_each(|&w| eat(w));
            l.biases.iter().for_each(|&b| eat(b));
        }
        h
    }

    /// Text snapshot: `dims` header line, then one value per line in flat order.
    pub fn write_snapshot<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let dims: Vec<String> = self.dims().iter().map(|d| d.to_string()).collect();
        writeln!(w, "dims {}", dims.join(" "))?;
        for i in 0..self.flat_len() {
            writeln!(w, "{:?}", self.get_flat(i))?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Contract("empty snapshot".into()))??;
        let dims: Vec<usize> = header
            .strip_prefix("dims ")
            .ok_or_else(|| Error::Contract("snapshot missing dims header".into()))?
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::Contract(format!("bad dim: {e}")))
            })
            .collect::<Result<_>>()?;
        let mut params = PolicyParams::zeros(&dims);
        for i in 0..params.flat_len() {
            let line = lines
                .next()
                .ok_or_else(|| Error::Contract("snapshot truncated".into()))??;
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|e| Error::Contract(format!("bad value: {e}")))?;
            params.set_flat(i, v);
        }
        Ok(params)
    }
}

fn affine(layer: &DenseLayer, input: &[f64]) -> Vec<f64> {
    debug_assert_eq!(input.len(), layer.in_dim);
    let mut out = layer.biases.clone();
    for (o, slot) in out.iter_mut().enumerate() {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let mut acc = 0.0;
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        *slot += acc;
    }
    out
}

/// Shape-checked forward pass: one Q-value per action.
pub fn net_forward(params: &PolicyParams, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != params.input_dim() {
        return Err(Error::Contract(format!(
            "input has {} entries, network expects {}",
            input.len(),
            params.input_dim()
        )));
    }
    Ok(params.forward(input))
}

/// One training example: network input, the action whose Q-value is regressed,
/// and its fixed target.
#[derive(Debug, Clone)]
pub struct LossItem {
    pub input: Vec<f64>,
    pub action_index: usize,
    pub target: f64,
}

/// Mean squared error over the selected outputs and its gradient.
///
/// `loss = mean_i (Q(input_i)[action_i] - target_i)^2`
pub fn loss_and_gradient(params: &PolicyParams, items: &[LossItem]) -> (f64, PolicyParams) {
    assert!(!items.is_empty(), "loss over empty batch");
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    let scale = 1.0 / items.len() as f64;
    let last = params.layers.len() - 1;

    for item in items {
        let acts = params.forward_cached(&item.input);
        let out = acts.last().unwrap();
        let diff = out[item.action_index] - item.target;
        loss += diff * diff * scale;

        // Output gradient: nonzero only at the regressed action.
        let mut delta = vec![0.0; out.len()];
        delta[item.action_index] = 2.0 * diff * scale;

        for (l, layer) in params.layers.iter().enumerate().rev() {
            let below = &acts[l];
            let grad_layer = &mut grad.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad_layer.biases[o] += d;
                let row = &mut grad_layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, x) in row.iter_mut().zip(below) {
                    *g += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // ReLU mask of the layer below (hidden layers only).
            if l - 1 != last {
                for (p, &a) in prev.iter_mut().zip(&acts[l]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_network_outputs_zero() {
        let params = PolicyParams::zeros(&[4, 8, 3]);
        let q = net_forward(&params, &[1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(q, vec![0.0; 3]);
    }

    #[test]
    fn identity_layer_selects_weight_column() {
        // Single linear layer, one-hot input -> the matching weight column plus bias.
        let mut params = PolicyParams::zeros(&[3, 2]);
        params.layers[0].weights = vec![
            1.0, 2.0, 3.0, // output 0
            4.0, 5.0, 6.0, // output 1
        ];
        params.layers[0].biases = vec![0.5, -0.5];
        let q = net_forward(&params, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(q, vec![2.5, 4.5]);
    }

    #[test]
    fn shape_mismatch_is_a_contract_violation() {
        let params = PolicyParams::zeros(&[4, 2]);
        assert!(net_forward(&params, &[1.0, 2.0]).is_err());
    }

    /// Smallest |pre-activation| over the hidden layers, computed by an
    /// independent manual forward pass. Finite differences are only reliable
    /// away from the rectifier kinks.
    fn kink_margin(params: &PolicyParams, input: &[f64]) -> f64 {
        let mut margin = f64::INFINITY;
        let mut current = input.to_vec();
        let last = params.layers.len() - 1;
        for (l, layer) in params.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_dim];
            for (o, slot) in out.iter_mut().enumerate() {
                let mut acc = layer.biases[o];
                for (i, x) in current.iter().enumerate() {
                    acc += layer.weights[o * layer.in_dim + i] * x;
                }
                *slot = acc;
            }
            if l != last {
                for v in &mut out {
                    margin = margin.min(v.abs());
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            current = out;
        }
        margin
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        // Central finite differences on 20 random small networks.
        let eps = 1e-5;
        for seed in 0..20u64 {
            let mut r = rng::stream(seed, rng::domain::EDGE_INIT, 77);
            let n_hidden = 1 + (seed % 3) as usize;
            let mut dims = vec![5];
            dims.extend(std::iter::repeat_n(8, n_hidden));
            dims.push(4);
            let params = PolicyParams::init(&dims, &mut r);
            let items: Vec<LossItem> = (0..6)
                .map(|_| {
                    // Keep every pre-activation clear of the rectifier kink so
                    // the difference quotient stays on one linear piece.
                    loop {
                        let input: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
                        if kink_margin(&params, &input) > 1e-3 {
                            break LossItem {
                                input,
                                action_index: r.random_range(0..4),
                                target: r.random_range(-2.0..2.0),
                            };
                        }
                    }
                })
                .collect();
            let (_, grad) = loss_and_gradient(&params, &items);
            let mut worst = 0.0f64;
            for i in 0..params.flat_len() {
                let v = params.get_flat(i);
                let mut plus = params.clone();
                plus.set_flat(i, v + eps);
                let mut minus = params.clone();
                minus.set_flat(i, v - eps);
                let (lp, _) = loss_and_gradient(&plus, &items);
                let (lm, _) = loss_and_gradient(&minus, &items);
                let numeric = (lp - lm) / (2.0 * eps);
                let analytic = grad.get_flat(i);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-4, "seed {seed}: worst relative error {worst}");
        }
    }

    #[test]
    fn snapshot_round_trips() {
        let mut r = rng::stream(3, rng::domain::EDGE_INIT, 0);
        let params = PolicyParams::init(&[4, 6, 3], &mut r);
        let mut buf = Vec::new();
        params.write_snapshot(&mut buf).unwrap();
        let back = PolicyParams::read_snapshot(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn axpy_is_elementwise() {
        let mut a = PolicyParams::zeros(&[2, 2]);
        let mut b = PolicyParams::zeros(&[2, 2]);
        b.layers[0].weights = vec![1.0, 2.0, 3.0, 4.0];
        b.layers[0].biases = vec![5.0, 6.0];
        a.axpy(-0.5, &b);
        assert_eq!(a.layers[0].weights, vec![-0.5, -1.0, -1.5, -2.0]);
        assert_eq!(a.layers[0].biases, vec![-2.5, -3.0]);
    }

    #[test]
    fn init_shapes_match_request_and_are_seed_stable() {
        let mut r1 = rng::stream(1, rng::domain::CENTRAL_INIT, 0);
        let mut r2 = rng::stream(1, rng::domain::CENTRAL_INIT, 0);
        let a = PolicyParams::init(&[16, 64, 64, 16], &mut r1);
        let b = PolicyParams::init(&[16, 64, 64, 16], &mut r2);
        assert_eq!(a, b);
        assert_eq!(a.dims(), vec![16, 64, 64, 16]);
        assert!(a.is_finite());
    }
}
