//! Feed-forward ReLU policy network with hand-written backpropagation.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use sha2::{Digest, Sha256};

use crate::error::{FormatError, LearnError};
use crate::model::{FeatureSchema, StateVector};

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().enumerate() {
            *y = self.bias[o] + dot(self.row(o), x);
        }
    }
}

/// Dot product with four independent accumulators; the summation order is
/// fixed, so results are reproducible.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Neural policy: normalized features in, one logit per action out.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    pub seed: u64,
    features: Vec<String>,
    divisors: Vec<f64>,
    layers: Vec<DenseLayer>,
}

/// Per-feature input divisors `max(|min|, |max|, 1)`.
pub fn normalization_divisors(schema: &FeatureSchema) -> Vec<f64> {
    schema
        .bounds()
        .iter()
        .map(|&(lo, hi)| lo.abs().max(hi.abs()).max(1) as f64)
        .collect()
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[k]` the (post-ReLU) output of layer k;
    /// the last entry holds the logits.
    pub acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("trace has an output")
    }
}

impl MlpPolicy {
    /// Layer sizes are `[d, hidden..., actions]`. Weights are drawn
    /// uniformly from `+-sqrt(6 / (fan_in + fan_out))`, biases start at zero.
    pub fn init(schema: &FeatureSchema, hidden: &[usize], num_actions: usize, seed: u64) -> Self {
        let mut sizes = vec![schema.arity()];
        sizes.extend_from_slice(hidden);
        sizes.push(num_actions);
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = DenseLayer::zeros(fan_in, fan_out);
                for v in &mut layer.weights {
                    *v = (2.0 * rng.random::<f64>() - 1.0) * limit;
                }
                layer
            })
            .collect();
        Self {
            seed,
            features: schema.names().to_vec(),
            divisors: normalization_divisors(schema),
            layers,
        }
    }

    pub fn from_layers(
        seed: u64,
        features: Vec<String>,
        divisors: Vec<f64>,
        layers: Vec<DenseLayer>,
    ) -> Result<Self, LearnError> {
        if features.len() != divisors.len() {
            return Err(LearnError::Dimension(format!(
                "{} features but {} divisors",
                features.len(),
                divisors.len()
            )));
        }
        if let Some(d) = divisors.iter().find(|d| !(**d > 0.0)) {
            return Err(LearnError::Dimension(format!("non-positive divisor {d}")));
        }
        let mut width = features.len();
        for (k, layer) in layers.iter().enumerate() {
            if layer.inputs != width
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.bias.len() != layer.outputs
            {
                return Err(LearnError::Dimension(format!("layer {k} does not chain")));
            }
            width = layer.outputs;
        }
        if layers.is_empty() {
            return Err(LearnError::Dimension("network has no layers".into()));
        }
        Ok(Self { seed, features, divisors, layers })
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn divisors(&self) -> &[f64] {
        &self.divisors
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.features.len()
    }

    pub fn num_actions(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    /// `[d, hidden..., actions]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn matches_schema(&self, schema: &FeatureSchema) -> bool {
        self.features == schema.names()
    }

    pub fn normalize(&self, s: &[i64]) -> Vec<f64> {
        s.iter().zip(&self.divisors).map(|(&v, d)| v as f64 / d).collect()
    }

    pub fn forward(&self, input: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs];
            layer.forward_into(&acts[k], &mut out);
            if k < last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        Trace { acts }
    }

    pub fn logits(&self, s: &StateVector) -> Vec<f64> {
        self.forward(&self.normalize(s.values())).acts.pop().expect("output layer")
    }

    /// Index of the largest logit; the lowest index wins ties.
    pub fn select_action(&self, s: &StateVector) -> usize {
        argmax(&self.logits(s))
    }

    /// Backpropagates `d_out` (gradient w.r.t. the logits) through `trace`.
    /// Returns the gradient w.r.t. the input and, when `grads` is given,
    /// accumulates `scale` times the parameter gradients into it.
    pub fn backward(
        &self,
        trace: &Trace,
        d_out: &[f64],
        mut grads: Option<(&mut [DenseLayer], f64)>,
    ) -> Vec<f64> {
        let mut delta = d_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &trace.acts[k];
            let mut d_input = vec![0.0; layer.inputs];
            if let Some((g, scale)) = grads.as_mut() {
                let gl = &mut g[k];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gl.bias[o] += *scale * d;
                    axpy(*scale * d, input, &mut gl.weights[o * layer.inputs..(o + 1) * layer.inputs]);
                }
            }
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, layer.row(o), &mut d_input);
                }
            }
            if k > 0 {
                // ReLU derivative, taken as 0 at the kink.
                for (di, &a) in d_input.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *di = 0.0;
                    }
                }
            }
            delta = d_input;
        }
        delta
    }

    /// Softmax cross-entropy loss for one normalized input.
    pub fn loss(&self, input: &[f64], label: usize) -> f64 {
        let trace = self.forward(input);
        cross_entropy(trace.logits(), label).0
    }

    /// Loss and parameter gradient for one normalized input, flattened in
    /// [`MlpPolicy::parameters`] order.
    pub fn loss_gradient(&self, input: &[f64], label: usize) -> (f64, Vec<f64>) {
        let trace = self.forward(input);
        let (loss, d_out) = cross_entropy(trace.logits(), label);
        let mut grads = self.zero_like();
        self.backward(&trace, &d_out, Some((&mut grads, 1.0)));
        (loss, flatten(&grads))
    }

    pub(crate) fn zero_like(&self) -> Vec<DenseLayer> {
        self.layers.iter().map(|l| DenseLayer::zeros(l.inputs, l.outputs)).collect()
    }

    /// All weights and biases, layer by layer (weights row-major, then bias).
    pub fn parameters(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = it.next().expect("parameter vector too short");
            }
        }
    }

    /// Hash of all parameter bit patterns.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.parameters() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Text form: `MLP <seed> <sizes...>`, a `FEATURES name:divisor ...`
    /// line, then per layer one line per weight row followed by the bias.
    pub fn to_text(&self) -> String {
        let mut out = format!("MLP {}", self.seed);
        for s in self.layer_sizes() {
            out.push_str(&format!(" {s}"));
        }
        out.push_str("\nFEATURES");
        for (n, d) in self.features.iter().zip(&self.divisors) {
            out.push_str(&format!(" {n}:{}", fmt_real(*d)));
        }
        out.push('\n');
        for l in &self.layers {
            for o in 0..l.outputs {
                push_values(&mut out, l.row(o));
            }
            push_values(&mut out, &l.bias);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FormatError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, message: String| FormatError::Parse { line: line + 1, message };
        let (ln, header) = lines.next().ok_or_else(|| perr(0, "no header".into()))?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.first() != Some(&"MLP") || tokens.len() < 4 {
            return Err(perr(ln, "expected `MLP <seed> <sizes...>`".into()));
        }
        let seed: u64 = tokens[1].parse().map_err(|_| perr(ln, "invalid seed".into()))?;
        let sizes = tokens[2..]
            .iter()
            .map(|t| t.parse::<usize>().map_err(|_| perr(ln, format!("invalid size {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let (ln, feat_line) = lines.next().ok_or_else(|| perr(ln + 1, "missing FEATURES line".into()))?;
        let tokens: Vec<&str> = feat_line.split_whitespace().collect();
        if tokens.first() != Some(&"FEATURES") || tokens.len() != sizes[0] + 1 {
            return Err(perr(ln, format!("expected FEATURES line with {} entries", sizes[0])));
        }
        let mut features = Vec::new();
        let mut divisors = Vec::new();
        for t in &tokens[1..] {
            let (name, div) = t.rsplit_once(':').ok_or_else(|| perr(ln, format!("bad feature {t:?}")))?;
            features.push(name.to_string());
            divisors.push(div.parse::<f64>().map_err(|_| perr(ln, format!("bad divisor {div:?}")))?);
        }
        let mut layers = Vec::new();
        for w in sizes.windows(2) {
            let mut layer = DenseLayer::zeros(w[0], w[1]);
            for o in 0..=w[1] {
                let (ln, line) = lines.next().ok_or_else(|| perr(ln, "truncated weights".into()))?;
                let values = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| perr(ln, format!("bad value {t:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let target = if o < w[1] {
                    &mut layer.weights[o * w[0]..(o + 1) * w[0]]
                } else {
                    &mut layer.bias[..]
                };
                if values.len() != target.len() {
                    return Err(perr(ln, format!("expected {} values, found {}", target.len(), values.len())));
                }
                target.copy_from_slice(&values);
            }
            layers.push(layer);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing data".into()));
        }
        Self::from_layers(seed, features, divisors, layers).map_err(|e| FormatError::Invalid(e.to_string()))
    }
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_values(out: &mut String, values: &[f64]) {
    let line: Vec<String> = values.iter().map(|v| fmt_real(*v)).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

pub(crate) fn flatten(layers: &[DenseLayer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Loss `-log softmax(z)[label]` and its gradient `softmax(z) - onehot`.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = -(logits[label] - max - sum.ln());
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}
