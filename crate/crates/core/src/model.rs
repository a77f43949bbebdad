//! Explicit-state probabilistic systems: feature schemas, state vectors,
//! MDPs and DTMCs.
//!
//! States are keyed by their feature vector. Index 0 is always the initial
//! state and indices are dense, so a model is fully described by its state
//! list plus one sparse distribution per (state, action).

use std::collections::HashMap;
use std::fmt;

use crate::error::ModelError;

/// Tolerance on the sum of every probability distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Ordered feature names with inclusive integer bounds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureSchema {
    names: Vec<String>,
    bounds: Vec<(i64, i64)>,
}

impl FeatureSchema {
    pub fn new<S: Into<String>>(
        features: impl IntoIterator<Item = (S, i64, i64)>,
    ) -> Result<Self, ModelError> {
        let mut names = Vec::new();
        let mut bounds = Vec::new();
        for (name, min, max) in features {
            let name = name.into();
            if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == ':') {
                return Err(ModelError::Schema(format!("invalid feature name {name:?}")));
            }
            if names.contains(&name) {
                return Err(ModelError::Schema(format!("duplicate feature name {name:?}")));
            }
            if min > max {
                return Err(ModelError::Schema(format!(
                    "feature {name}: min {min} exceeds max {max}"
                )));
            }
            names.push(name);
            bounds.push((min, max));
        }
        if names.is_empty() {
            return Err(ModelError::Schema("schema has no features".into()));
        }
        Ok(Self { names, bounds })
    }

    pub fn arity(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn bounds(&self) -> &[(i64, i64)] {
        &self.bounds
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Two schemas are compatible when they name the same features in the
    /// same order. Bounds may differ (e.g. a taxi model with more jobs).
    pub fn compatible_with(&self, other: &FeatureSchema) -> bool {
        self.names == other.names
    }

    pub fn check(&self, state: &StateVector) -> Result<(), ModelError> {
        if state.len() != self.arity() {
            return Err(ModelError::State(format!(
                "state has {} features, schema has {}",
                state.len(),
                self.arity()
            )));
        }
        for (i, (&v, &(lo, hi))) in state.values().iter().zip(&self.bounds).enumerate() {
            if v < lo || v > hi {
                return Err(ModelError::State(format!(
                    "feature {} = {v} outside [{lo}, {hi}]",
                    self.names[i]
                )));
            }
        }
        Ok(())
    }
}

/// A state as an ordered tuple of integer features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateVector(Box<[i64]>);

impl StateVector {
    pub fn new(values: impl Into<Box<[i64]>>) -> Self {
        Self(values.into())
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, feature: usize) -> i64 {
        self.0[feature]
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Sparse distribution over state indices.
pub type Distribution = Vec<(usize, f64)>;

/// One enabled action at a state and its successor distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub action: usize,
    pub successors: Distribution,
}

/// Dense index over a list of unique state vectors.
#[derive(Debug, Clone)]
pub(crate) struct StateIndex {
    states: Vec<StateVector>,
    lookup: HashMap<StateVector, usize>,
}

impl StateIndex {
    pub(crate) fn new(states: Vec<StateVector>) -> Result<Self, ModelError> {
        let mut lookup = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if lookup.insert(s.clone(), i).is_some() {
                return Err(ModelError::State(format!("duplicate state {s} at index {i}")));
            }
        }
        Ok(Self { states, lookup })
    }
}

/// Markov decision process with explicit states and sparse transitions.
///
/// `choices[s]` holds the enabled actions at `s`, sorted by action index.
/// Full models enable every action everywhere; models induced by a
/// permissive policy enable a subset.
#[derive(Debug, Clone)]
pub struct ExplicitMdp {
    schema: FeatureSchema,
    index: StateIndex,
    actions: Vec<String>,
    choices: Vec<Vec<Choice>>,
    rewards: Option<HashMap<(usize, usize), f64>>,
}

impl ExplicitMdp {
    /// Assembles a model. Only structural shape is checked here; use
    /// [`validate_mdp`] for the probabilistic invariants.
    pub fn new(
        schema: FeatureSchema,
        states: Vec<StateVector>,
        actions: Vec<String>,
        mut choices: Vec<Vec<Choice>>,
    ) -> Result<Self, ModelError> {
        if states.is_empty() {
            return Err(ModelError::State("model has no states".into()));
        }
        if choices.len() != states.len() {
            return Err(ModelError::State(format!(
                "{} states but {} choice rows",
                states.len(),
                choices.len()
            )));
        }
        for s in &states {
            schema.check(s)?;
        }
        for row in &mut choices {
            row.sort_by_key(|c| c.action);
        }
        Ok(Self {
            schema,
            index: StateIndex::new(states)?,
            actions,
            choices,
            rewards: None,
        })
    }

    pub fn with_rewards(mut self, rewards: HashMap<(usize, usize), f64>) -> Self {
        self.rewards = Some(rewards);
        self
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn states(&self) -> &[StateVector] {
        &self.index.states
    }

    pub fn state(&self, i: usize) -> &StateVector {
        &self.index.states[i]
    }

    pub fn num_states(&self) -> usize {
        self.index.states.len()
    }

    pub fn initial(&self) -> usize {
        0
    }

    pub fn index_of(&self, s: &StateVector) -> Option<usize> {
        self.index.lookup.get(s).copied()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn choices(&self, state: usize) -> &[Choice] {
        &self.choices[state]
    }

    pub fn distribution(&self, state: usize, action: usize) -> Option<&Distribution> {
        self.choices[state]
            .iter()
            .find(|c| c.action == action)
            .map(|c| &c.successors)
    }

    pub fn rewards(&self) -> Option<&HashMap<(usize, usize), f64>> {
        self.rewards.as_ref()
    }

    pub fn num_transitions(&self) -> usize {
        self.choices
            .iter()
            .flat_map(|row| row.iter())
            .map(|c| c.successors.len())
            .sum()
    }

    /// Number of (state, action) pairs with more than one successor.
    pub fn num_branching_choices(&self) -> usize {
        self.choices
            .iter()
            .flat_map(|row| row.iter())
            .filter(|c| c.successors.len() > 1)
            .count()
    }
}

/// Discrete-time Markov chain: one distribution per state.
#[derive(Debug, Clone)]
pub struct ExplicitDtmc {
    schema: FeatureSchema,
    index: StateIndex,
    initial: usize,
    rows: Vec<Distribution>,
}

impl ExplicitDtmc {
    pub fn new(
        schema: FeatureSchema,
        states: Vec<StateVector>,
        initial: usize,
        rows: Vec<Distribution>,
    ) -> Result<Self, ModelError> {
        if states.is_empty() {
            return Err(ModelError::State("model has no states".into()));
        }
        if rows.len() != states.len() {
            return Err(ModelError::State(format!(
                "{} states but {} transition rows",
                states.len(),
                rows.len()
            )));
        }
        if initial >= states.len() {
            return Err(ModelError::State(format!("initial index {initial} out of range")));
        }
        for s in &states {
            schema.check(s)?;
        }
        Ok(Self {
            schema,
            index: StateIndex::new(states)?,
            initial,
            rows,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn states(&self) -> &[StateVector] {
        &self.index.states
    }

    pub fn state(&self, i: usize) -> &StateVector {
        &self.index.states[i]
    }

    pub fn num_states(&self) -> usize {
        self.index.states.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn index_of(&self, s: &StateVector) -> Option<usize> {
        self.index.lookup.get(s).copied()
    }

    pub fn row(&self, state: usize) -> &Distribution {
        &self.rows[state]
    }

    pub fn rows(&self) -> &[Distribution] {
        &self.rows
    }

    pub fn num_transitions(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// A single invariant violation found by [`validate_mdp`] or [`validate_dtmc`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BadSum { state: usize, action: Option<usize>, sum: f64 },
    BadProbability { state: usize, action: Option<usize>, successor: usize, probability: f64 },
    BadSuccessor { state: usize, action: Option<usize>, successor: usize },
    BadAction { state: usize, action: usize },
    DuplicateAction { state: usize, action: usize },
    /// Every action must be available at every state.
    MissingAction { state: usize, action: usize },
    NoChoices { state: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = |state: &usize, action: &Option<usize>| match action {
            Some(a) => format!("state {state}, action {a}"),
            None => format!("state {state}"),
        };
        match self {
            Violation::BadSum { state, action, sum } => {
                write!(f, "{}: probabilities sum to {sum}", at(state, action))
            }
            Violation::BadProbability { state, action, successor, probability } => write!(
                f,
                "{}: probability {probability} to successor {successor} outside (0, 1]",
                at(state, action)
            ),
            Violation::BadSuccessor { state, action, successor } => {
                write!(f, "{}: successor index {successor} out of range", at(state, action))
            }
            Violation::BadAction { state, action } => {
                write!(f, "state {state}: action index {action} out of range")
            }
            Violation::DuplicateAction { state, action } => {
                write!(f, "state {state}: action {action} listed twice")
            }
            Violation::MissingAction { state, action } => write!(
                f,
                "state {state}: action {action} unavailable (all actions must be available at all states)"
            ),
            Violation::NoChoices { state } => write!(f, "state {state}: no enabled action"),
        }
    }
}

/// Result of a validation pass; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_distribution(
    report: &mut ValidationReport,
    state: usize,
    action: Option<usize>,
    dist: &Distribution,
    num_states: usize,
) {
    let mut sum = 0.0;
    for &(succ, p) in dist {
        if succ >= num_states {
            report.violations.push(Violation::BadSuccessor { state, action, successor: succ });
        }
        if !(p > 0.0 && p <= 1.0) {
            report.violations.push(Violation::BadProbability {
                state,
                action,
                successor: succ,
                probability: p,
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        report.violations.push(Violation::BadSum { state, action, sum });
    }
}

/// Checks every MDP invariant, including that all actions are available
/// at all states.
pub fn validate_mdp(m: &ExplicitMdp) -> ValidationReport {
    validate_mdp_with(m, true)
}

/// Like [`validate_mdp`], but with the all-actions-available check
/// optional. Models induced by permissive policies enable only a subset
/// of actions and are validated with `require_all_actions = false`.
pub fn validate_mdp_with(m: &ExplicitMdp, require_all_actions: bool) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = m.num_states();
    let num_actions = m.actions.len();
    for (s, row) in m.choices.iter().enumerate() {
        if row.is_empty() {
            report.violations.push(Violation::NoChoices { state: s });
        }
        let mut seen = vec![false; num_actions];
        for c in row {
            if c.action >= num_actions {
                report.violations.push(Violation::BadAction { state: s, action: c.action });
            } else if seen[c.action] {
                report
                    .violations
                    .push(Violation::DuplicateAction { state: s, action: c.action });
            } else {
                seen[c.action] = true;
            }
            check_distribution(&mut report, s, Some(c.action), &c.successors, n);
        }
        if require_all_actions {
            for (a, present) in seen.iter().enumerate() {
                if !present {
                    report.violations.push(Violation::MissingAction { state: s, action: a });
                }
            }
        }
    }
    report
}

pub fn validate_dtmc(d: &ExplicitDtmc) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = d.num_states();
    for (s, row) in d.rows.iter().enumerate() {
        check_distribution(&mut report, s, None, row, n);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new([("a", 0, 3)]).unwrap()
    }

    fn states(n: i64) -> Vec<StateVector> {
        (0..n).map(|i| StateVector::new(vec![i])).collect()
    }

    fn point(action: usize, to: usize) -> Choice {
        Choice { action, successors: vec![(to, 1.0)] }
    }

    #[test]
    fn valid_mdp_has_empty_report() {
        let m = ExplicitMdp::new(
            schema(),
            states(2),
            vec!["go".into(), "stay".into()],
            vec![
                vec![point(0, 1), point(1, 0)],
                vec![point(0, 1), point(1, 1)],
            ],
        )
        .unwrap();
        let report = validate_mdp(&m);
        assert!(report.is_valid(), "{:?}", report);
        assert_eq!(report, validate_mdp(&m));
    }

    #[test]
    fn short_distribution_is_reported_with_its_sum() {
        let m = ExplicitMdp::new(
            schema(),
            states(3),
            vec!["go".into()],
            vec![
                vec![Choice { action: 0, successors: vec![(1, 0.5), (2, 0.4)] }],
                vec![point(0, 1)],
                vec![point(0, 2)],
            ],
        )
        .unwrap();
        let report = validate_mdp(&m);
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::BadSum { state: 0, action: Some(0), sum } => {
                assert!((sum - 0.9).abs() < 1e-12)
            }
            v => panic!("unexpected violation {v:?}"),
        }
    }

    #[test]
    fn missing_action_cites_availability() {
        let m = ExplicitMdp::new(
            schema(),
            states(1),
            vec!["north".into(), "drop".into()],
            vec![vec![point(0, 0)]],
        )
        .unwrap();
        let report = validate_mdp(&m);
        assert_eq!(report.violations, vec![Violation::MissingAction { state: 0, action: 1 }]);
        assert!(report.violations[0].to_string().contains("all actions must be available"));
        assert!(validate_mdp_with(&m, false).is_valid());
    }

    #[test]
    fn out_of_range_successor_and_probability() {
        let m = ExplicitMdp::new(
            schema(),
            states(1),
            vec!["a".into()],
            vec![vec![Choice { action: 0, successors: vec![(4, 1.5)] }]],
        )
        .unwrap();
        let report = validate_mdp(&m);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::BadSuccessor { .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::BadProbability { .. })));
    }

    #[test]
    fn schema_rejects_bad_definitions() {
        assert!(FeatureSchema::new([("a", 0, 1), ("a", 0, 1)]).is_err());
        assert!(FeatureSchema::new([("", 0, 1)]).is_err());
        assert!(FeatureSchema::new([("a", 2, 1)]).is_err());
    }

    #[test]
    fn states_must_be_unique_and_in_bounds() {
        let dup = ExplicitDtmc::new(schema(), vec![StateVector::new(vec![0]); 2], 0, vec![vec![(0, 1.0)]; 2]);
        assert!(dup.is_err());
        let oob = ExplicitDtmc::new(schema(), vec![StateVector::new(vec![9])], 0, vec![vec![(0, 1.0)]]);
        assert!(oob.is_err());
    }
}
