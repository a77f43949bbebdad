//! Saliency maps and global feature-importance rankings.

use crate::cloning::ExpertDataset;
use crate::error::AttributionError;
use crate::model::StateVector;
use crate::nn::{argmax, MlpPolicy};

/// Per-feature `|d logit_a / d input|` for the selected action `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyVector(pub Vec<f64>);

/// Rank of each feature, 1 = most important.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureRanking(pub Vec<usize>);

impl FeatureRanking {
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        // Stable sort keeps lower feature indices first among equal scores.
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
        let mut ranks = vec![0; scores.len()];
        for (pos, &f) in order.iter().enumerate() {
            ranks[f] = pos + 1;
        }
        FeatureRanking(ranks)
    }

    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.0.len()];
        self.0.iter().all(|&r| r >= 1 && r <= seen.len() && !std::mem::replace(&mut seen[r - 1], true))
    }
}

/// Saliency of the action the policy selects at `s`, taken with respect
/// to the normalized inputs.
pub fn saliency(policy: &MlpPolicy, s: &StateVector) -> SaliencyVector {
    let input = policy.normalize(s.values());
    saliency_for_input(policy, &input)
}

fn saliency_for_input(policy: &MlpPolicy, input: &[f64]) -> SaliencyVector {
    let trace = policy.forward(input);
    let action = argmax(trace.logits());
    let mut d_out = vec![0.0; policy.num_actions()];
    d_out[action] = 1.0;
    let grad = policy.backward(&trace, &d_out, None);
    SaliencyVector(grad.into_iter().map(f64::abs).collect())
}

/// Mean saliency of each feature over the dataset states.
pub fn mean_saliency(policy: &MlpPolicy, data: &ExpertDataset) -> Result<Vec<f64>, AttributionError> {
    if data.is_empty() {
        return Err(AttributionError::EmptyDataset);
    }
    if !policy.matches_schema(&data.schema) {
        return Err(AttributionError::Schema);
    }
    let mut totals = vec![0.0; policy.input_dim()];
    for (s, _) in &data.samples {
        let sal = saliency(policy, s);
        for (t, v) in totals.iter_mut().zip(sal.0) {
            *t += v;
        }
    }
    let n = data.len() as f64;
    Ok(totals.into_iter().map(|t| t / n).collect())
}

/// Ranks features by descending mean saliency; ties favor the lower index.
pub fn global_ranking(policy: &MlpPolicy, data: &ExpertDataset) -> Result<FeatureRanking, AttributionError> {
    Ok(FeatureRanking::from_scores(&mean_saliency(policy, data)?))
}

pub fn rankings_equal(a: &FeatureRanking, b: &FeatureRanking) -> Result<bool, AttributionError> {
    if a.0.len() != b.0.len() {
        return Err(AttributionError::Arity(a.0.len(), b.0.len()));
    }
    Ok(a == b)
}

/// Partitions rankings into groups of equal rankings, in order of first
/// occurrence. Each group lists the input positions of its members.
pub fn group_by_ranking(rankings: &[FeatureRanking]) -> Result<Vec<Vec<usize>>, AttributionError> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, r) in rankings.iter().enumerate() {
        let mut placed = false;
        for g in &mut groups {
            if rankings_equal(&rankings[g[0]], r)? {
                g.push(i);
                placed = true;
                break;
            }
        }
        if !placed {
            groups.push(vec![i]);
        }
    }
    Ok(groups)
}
