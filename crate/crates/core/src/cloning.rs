//! Behavioral cloning: turn an expert table policy into a supervised
//! dataset and fit neural policies to it with mini-batch SGD.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

use crate::checker::TablePolicy;
use crate::error::LearnError;
use crate::model::{ExplicitMdp, FeatureSchema, StateVector};
use crate::nn::{argmax, cross_entropy, DenseLayer, MlpPolicy};

/// One (state, expert action) pair per MDP state, in state-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertDataset {
    pub schema: FeatureSchema,
    pub num_actions: usize,
    pub samples: Vec<(StateVector, usize)>,
}

impl ExpertDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV with one column per feature followed by `action`.
    pub fn to_csv(&self) -> String {
        let mut out = self.schema.names().join(",");
        out.push_str(",action\n");
        for (s, a) in &self.samples {
            for v in s.values() {
                out.push_str(&v.to_string());
                out.push(',');
            }
            out.push_str(&a.to_string());
            out.push('\n');
        }
        out
    }
}

pub fn extract_expert_dataset(m: &ExplicitMdp, expert: &TablePolicy) -> Result<ExpertDataset, LearnError> {
    let samples = (0..m.num_states())
        .map(|s| {
            let a = expert.get(s).ok_or(LearnError::PartialPolicy(s))?;
            if a >= m.actions().len() {
                return Err(LearnError::Dimension(format!("action {a} at state {s} out of range")));
            }
            Ok((m.state(s).clone(), a))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExpertDataset { schema: m.schema().clone(), num_actions: m.actions().len(), samples })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Stop as soon as every dataset sample is classified correctly.
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 3000, learning_rate: 0.05, batch_size: 32, hidden: vec![64, 64], seed: 0, early_stop: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnError::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(LearnError::Config("batch size must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(LearnError::Config("hidden layers must be nonempty".into()));
        }
        Ok(())
    }
}

pub fn init_policy(schema: &FeatureSchema, num_actions: usize, cfg: &TrainConfig) -> MlpPolicy {
    MlpPolicy::init(schema, &cfg.hidden, num_actions, cfg.seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch that ran.
    pub epoch_losses: Vec<f64>,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    pub epochs_run: usize,
}

/// Reusable activation and gradient buffers for one network shape.
struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    grads: Vec<DenseLayer>,
}

impl Scratch {
    fn new(policy: &MlpPolicy) -> Self {
        let sizes = policy.layer_sizes();
        Self {
            acts: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            deltas: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            grads: policy.layers().iter().map(|l| DenseLayer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    fn forward(&mut self, policy: &MlpPolicy, input: &[f64]) {
        self.acts[0].copy_from_slice(input);
        let layers = policy.layers();
        let last = layers.len() - 1;
        for (k, layer) in layers.iter().enumerate() {
            let (lo, hi) = self.acts.split_at_mut(k + 1);
            let (x, out) = (&lo[k], &mut hi[0]);
            for (o, y) in out.iter_mut().enumerate() {
                let row = layer.row(o);
                let mut acc = [0.0f64; 4];
                let (cr, cx) = (row.chunks_exact(4), x.chunks_exact(4));
                let tail: f64 = cr.remainder().iter().zip(cx.remainder()).map(|(a, b)| a * b).sum();
                for (r, v) in cr.zip(cx) {
                    acc[0] += r[0] * v[0];
                    acc[1] += r[1] * v[1];
                    acc[2] += r[2] * v[2];
                    acc[3] += r[3] * v[3];
                }
                let z = layer.bias[o] + ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail);
                *y = if k < last { z.max(0.0) } else { z };
            }
        }
    }

    /// Accumulates parameter gradients for the output gradient stored in
    /// the last delta buffer.
    fn backward(&mut self, policy: &MlpPolicy) {
        let layers = policy.layers();
        for k in (0..layers.len()).rev() {
            let layer = &layers[k];
            let (lo, hi) = self.deltas.split_at_mut(k + 1);
            let (d_in, delta) = (&mut lo[k], &hi[0]);
            let input = &self.acts[k];
            let g = &mut self.grads[k];
            if k > 0 {
                d_in.iter_mut().for_each(|v| *v = 0.0);
            }
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let gw = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, x) in gw.iter_mut().zip(input) {
                    *w += d * x;
                }
                if k > 0 {
                    for (di, w) in d_in.iter_mut().zip(layer.row(o)) {
                        *di += d * w;
                    }
                }
            }
            if k > 0 {
                for (di, &a) in d_in.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *di = 0.0;
                    }
                }
            }
        }
    }
}

fn normalized_inputs(policy: &MlpPolicy, data: &ExpertDataset) -> Vec<f64> {
    data.samples.iter().flat_map(|(s, _)| policy.normalize(s.values())).collect()
}

fn check_dims(policy: &MlpPolicy, data: &ExpertDataset) -> Result<(), LearnError> {
    if !policy.matches_schema(&data.schema) {
        return Err(LearnError::Dimension(format!(
            "policy features {:?} differ from dataset features {:?}",
            policy.features(),
            data.schema.names()
        )));
    }
    if policy.num_actions() != data.num_actions {
        return Err(LearnError::Dimension(format!(
            "policy has {} outputs, dataset has {} actions",
            policy.num_actions(),
            data.num_actions
        )));
    }
    Ok(())
}

fn accuracy_on(policy: &MlpPolicy, scratch: &mut Scratch, inputs: &[f64], data: &ExpertDataset) -> f64 {
    let d = policy.input_dim();
    let correct = data
        .samples
        .iter()
        .enumerate()
        .filter(|(i, (_, a))| {
            scratch.forward(policy, &inputs[i * d..(i + 1) * d]);
            argmax(scratch.acts.last().unwrap()) == *a
        })
        .count();
    correct as f64 / data.len().max(1) as f64
}

/// Fraction of samples where the policy picks the expert action.
pub fn dataset_accuracy(policy: &MlpPolicy, data: &ExpertDataset) -> Result<f64, LearnError> {
    check_dims(policy, data)?;
    let inputs = normalized_inputs(policy, data);
    Ok(accuracy_on(policy, &mut Scratch::new(policy), &inputs, data))
}

/// Mini-batch SGD on mean softmax cross-entropy.
///
/// Each epoch visits the samples in an order shuffled by a generator
/// seeded from `cfg.seed`, so runs are reproducible.
pub fn train(
    mut policy: MlpPolicy,
    data: &ExpertDataset,
    cfg: &TrainConfig,
) -> Result<(MlpPolicy, TrainReport), LearnError> {
    cfg.validate()?;
    check_dims(&policy, data)?;
    let d = policy.input_dim();
    let inputs = normalized_inputs(&policy, data);
    let mut scratch = Scratch::new(&policy);
    let initial_accuracy = accuracy_on(&policy, &mut scratch, &inputs, data);
    let mut report = TrainReport {
        epoch_losses: Vec::new(),
        initial_accuracy,
        final_accuracy: initial_accuracy,
        epochs_run: 0,
    };
    if data.is_empty() || (cfg.early_stop && initial_accuracy == 1.0) {
        return Ok((policy, report));
    }

    let mut rng = Xoshiro256StarStar::seed_from_u64(cfg.seed);
    // Separate the shuffling stream from the one used for initialization.
    rng.long_jump();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for g in &mut scratch.grads {
                g.weights.iter_mut().for_each(|v| *v = 0.0);
                g.bias.iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in batch {
                scratch.forward(&policy, &inputs[i * d..(i + 1) * d]);
                let (loss, grad) = cross_entropy(scratch.acts.last().unwrap(), data.samples[i].1);
                epoch_loss += loss;
                scratch.deltas.last_mut().unwrap().copy_from_slice(&grad);
                scratch.backward(&policy);
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (layer, g) in policy.layers_mut().iter_mut().zip(&scratch.grads) {
                for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                    *w -= step * gw;
                }
                for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                    *b -= step * gb;
                }
            }
        }
        report.epoch_losses.push(epoch_loss / data.len() as f64);
        report.epochs_run += 1;
        if cfg.early_stop {
            report.final_accuracy = accuracy_on(&policy, &mut scratch, &inputs, data);
            if report.final_accuracy == 1.0 {
                break;
            }
        }
    }
    if !cfg.early_stop {
        report.final_accuracy = accuracy_on(&policy, &mut scratch, &inputs, data);
    }
    Ok((policy, report))
}

/// Initializes with `cfg.seed` and trains.
pub fn train_from_seed(data: &ExpertDataset, cfg: &TrainConfig) -> Result<(MlpPolicy, TrainReport), LearnError> {
    train(init_policy(&data.schema, data.num_actions, cfg), data, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Choice;

    fn toy_mdp() -> ExplicitMdp {
        let schema = FeatureSchema::new([("pos", 0, 2)]).unwrap();
        let states = (0..3).map(|i| StateVector::new(vec![i])).collect();
        let choices = (0..3)
            .map(|s| (0..2).map(|a| Choice { action: a, successors: vec![(s, 1.0)] }).collect())
            .collect();
        ExplicitMdp::new(schema, states, vec!["a".into(), "b".into()], choices).unwrap()
    }

    #[test]
    fn dataset_follows_state_order() {
        let m = toy_mdp();
        let expert = TablePolicy::new(vec![0, 1, 0]);
        let data = extract_expert_dataset(&m, &expert).unwrap();
        let expected: Vec<_> = (0..3).map(|i| (StateVector::new(vec![i]), [0, 1, 0][i as usize])).collect();
        assert_eq!(data.samples, expected);
        assert_eq!(data.to_csv(), extract_expert_dataset(&m, &expert).unwrap().to_csv());
        assert_eq!(data.to_csv(), "pos,action\n0,0\n1,1\n2,0\n");
    }

    #[test]
    fn partial_policy_is_rejected() {
        let m = toy_mdp();
        assert!(matches!(
            extract_expert_dataset(&m, &TablePolicy::new(vec![0, 1])),
            Err(LearnError::PartialPolicy(2))
        ));
    }

    /// Eight points in the plane, labelled by the side of the line
    /// x0 + x1 = 0.5 (on normalized inputs) they fall on.
    fn separable() -> ExpertDataset {
        let schema = FeatureSchema::new([("u", -4, 4), ("v", -4, 4)]).unwrap();
        let points = [(-4, -3), (-2, -1), (-3, 1), (0, -2), (4, 3), (2, 1), (3, -1), (1, 4)];
        let samples = points
            .iter()
            .map(|&(u, v)| (StateVector::new(vec![u, v]), usize::from(u + v > 1)))
            .collect();
        ExpertDataset { schema, num_actions: 2, samples }
    }

    #[test]
    fn toy_dataset_is_linearly_separable() {
        // Separating hyperplane u + v = 1 in raw coordinates; no point lies on it.
        for (s, a) in &separable().samples {
            let margin = s.get(0) + s.get(1) - 1;
            assert_ne!(margin, 0);
            assert_eq!(*a == 1, margin > 0);
        }
    }

    #[test]
    fn fits_separable_data() {
        let data = separable();
        let cfg = TrainConfig { epochs: 500, learning_rate: 0.05, batch_size: 4, hidden: vec![8, 8], seed: 3, early_stop: true };
        let (_, report) = train_from_seed(&data, &cfg).unwrap();
        assert_eq!(report.final_accuracy, 1.0);
        assert!(report.epochs_run <= 500);
    }

    #[test]
    fn loss_settles_under_small_learning_rate() {
        let data = separable();
        let cfg = TrainConfig { epochs: 200, learning_rate: 0.01, batch_size: 8, hidden: vec![8, 8], seed: 5, early_stop: false };
        let (_, report) = train_from_seed(&data, &cfg).unwrap();
        for w in report.epoch_losses[10..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss went up: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let data = separable();
        let cfg = TrainConfig { epochs: 0, early_stop: false, hidden: vec![4, 4], ..TrainConfig::default() };
        let init = init_policy(&data.schema, 2, &cfg);
        let (trained, report) = train(init.clone(), &data, &cfg).unwrap();
        assert_eq!(trained, init);
        assert_eq!(report.final_accuracy, report.initial_accuracy);
        assert!(report.epoch_losses.is_empty());
    }

    #[test]
    fn training_is_reproducible() {
        let data = separable();
        let cfg = TrainConfig { epochs: 30, hidden: vec![6, 6], seed: 9, ..TrainConfig::default() };
        let (a, _) = train_from_seed(&data, &cfg).unwrap();
        let (b, _) = train_from_seed(&data, &cfg).unwrap();
        assert_eq!(a.checksum(), b.checksum());
    }

    #[test]
    fn dimension_mismatch() {
        let data = separable();
        let other = FeatureSchema::new([("pos", 0, 2)]).unwrap();
        let cfg = TrainConfig { hidden: vec![4], ..TrainConfig::default() };
        let p = init_policy(&other, 2, &cfg);
        assert!(matches!(train(p, &data, &cfg), Err(LearnError::Dimension(_))));
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(matches!(train_from_seed(&data, &bad), Err(LearnError::Config(_))));
    }
}
