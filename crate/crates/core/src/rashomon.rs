//! Behavioral equivalence of policies via induced DTMCs, Rashomon sets,
//! ensembles, and permissive policies.
//!
//! A policy resolves the nondeterminism of an MDP. Exploring only the
//! states it actually visits from the initial state yields its induced
//! DTMC; two policies are behaviorally equivalent when their induced DTMCs
//! coincide state by state, keyed by feature vector. Exploration stops at
//! target states, whose future cannot change an unbounded reachability
//! value.

use std::collections::HashMap;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::attribution::{group_by_ranking, FeatureRanking};
use crate::checker::{max_reach_mdp_mask, min_reach_mdp_mask, reach_prob_dtmc_mask, TablePolicy, DEFAULT_TOLERANCE};
use crate::error::{BuildError, RashomonError};
use crate::explicit::mdp_fingerprint;
use crate::model::{Choice, Distribution, ExplicitDtmc, ExplicitMdp, StateVector};
use crate::nn::MlpPolicy;
use crate::prop::{parse_predicate, BoundPredicate, Predicate};
use crate::taxi::{build_taxi, TaxiParams, DEFAULT_STATE_CAP};

/// Anything that picks one action per state.
///
/// `state_index` is the index of `state` in the MDP being resolved; table
/// policies use it, feature-based policies use the vector.
pub trait Policy: Sync {
    fn choose(&self, state_index: usize, state: &StateVector) -> usize;
}

impl Policy for TablePolicy {
    fn choose(&self, state_index: usize, _state: &StateVector) -> usize {
        self.action(state_index)
    }
}

impl Policy for MlpPolicy {
    fn choose(&self, _state_index: usize, state: &StateVector) -> usize {
        self.select_action(state)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn choose(&self, state_index: usize, state: &StateVector) -> usize {
        (**self).choose(state_index, state)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub policy_id: String,
    pub property: String,
    pub mdp_fingerprint: String,
}

/// The reachable chain a policy induces on an MDP.
#[derive(Debug, Clone)]
pub struct InducedDtmc {
    pub dtmc: ExplicitDtmc,
    /// MDP index of every DTMC state.
    pub source: Vec<usize>,
    /// Whether each DTMC state satisfies the target (and was cut off).
    pub target: Vec<bool>,
    pub provenance: Provenance,
}

impl InducedDtmc {
    pub fn num_states(&self) -> usize {
        self.dtmc.num_states()
    }

    /// `Pr(F target)` from the initial state.
    pub fn reach_value(&self, tol: f64) -> Result<f64, RashomonError> {
        Ok(reach_prob_dtmc_mask(&self.dtmc, &self.target, tol)?.initial_value)
    }
}

/// A bound target over one MDP, shared by every policy checked against it.
pub struct Verifier<'m> {
    mdp: &'m ExplicitMdp,
    target: BoundPredicate,
    mask: Vec<bool>,
    property: String,
    fingerprint: String,
    cap: usize,
}

impl<'m> Verifier<'m> {
    pub fn new(mdp: &'m ExplicitMdp, target: &Predicate) -> Result<Self, RashomonError> {
        let bound = target.bind(mdp.schema()).map_err(BuildError::from)?;
        let mask = mdp.states().iter().map(|s| bound.holds(s)).collect();
        Ok(Self {
            mdp,
            target: bound,
            mask,
            property: format!("P=? [ F {target} ]"),
            fingerprint: mdp_fingerprint(mdp),
            cap: DEFAULT_STATE_CAP,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn mdp(&self) -> &ExplicitMdp {
        self.mdp
    }

    pub fn target_mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_target(&self, s: &StateVector) -> bool {
        self.target.holds(s)
    }

    /// Depth-first construction of the induced DTMC from the initial state.
    pub fn induced_dtmc(&self, policy_id: &str, policy: &dyn Policy) -> Result<InducedDtmc, RashomonError> {
        let m = self.mdp;
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut source = vec![m.initial()];
        let mut rows: Vec<Distribution> = vec![Vec::new()];
        local.insert(m.initial(), 0);
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let s = source[i];
            if self.mask[s] {
                rows[i] = vec![(i, 1.0)];
                continue;
            }
            let action = policy.choose(s, m.state(s));
            let dist = m.distribution(s, action).ok_or_else(|| {
                RashomonError::Invalid(format!("policy {policy_id} chose unavailable action {action} at state {s}"))
            })?;
            let mut row = Vec::with_capacity(dist.len());
            let mut fresh = Vec::new();
            for &(t, p) in dist {
                let j = match local.get(&t) {
                    Some(&j) => j,
                    None => {
                        if source.len() >= self.cap {
                            return Err(BuildError::StateCap(self.cap).into());
                        }
                        let j = source.len();
                        local.insert(t, j);
                        source.push(t);
                        rows.push(Vec::new());
                        fresh.push(j);
                        j
                    }
                };
                row.push((j, p));
            }
            rows[i] = row;
            // Reversed so the first successor is expanded first.
            stack.extend(fresh.into_iter().rev());
        }
        let states = source.iter().map(|&s| m.state(s).clone()).collect();
        let target = source.iter().map(|&s| self.mask[s]).collect();
        let dtmc = ExplicitDtmc::new(m.schema().clone(), states, 0, rows).map_err(BuildError::from)?;
        Ok(InducedDtmc {
            dtmc,
            source,
            target,
            provenance: Provenance {
                policy_id: policy_id.to_string(),
                property: self.property.clone(),
                mdp_fingerprint: self.fingerprint.clone(),
            },
        })
    }

    /// Induced MDP of a permissive policy: every allowed action is kept.
    pub fn induced_mdp(&self, tau: &PermissivePolicy<'_>) -> Result<InducedMdp, RashomonError> {
        let m = self.mdp;
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut source = vec![m.initial()];
        let mut rows: Vec<Vec<Choice>> = vec![Vec::new()];
        local.insert(m.initial(), 0);
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let s = source[i];
            let allowed = tau.action_set(s, m.state(s));
            if self.mask[s] {
                rows[i] = vec![Choice { action: allowed[0], successors: vec![(i, 1.0)] }];
                continue;
            }
            let mut fresh = Vec::new();
            let mut row = Vec::with_capacity(allowed.len());
            for &action in &allowed {
                let dist = m.distribution(s, action).ok_or_else(|| {
                    RashomonError::Invalid(format!("permissive policy allows unavailable action {action} at state {s}"))
                })?;
                let mut succ = Vec::with_capacity(dist.len());
                for &(t, p) in dist {
                    let j = match local.get(&t) {
                        Some(&j) => j,
                        None => {
                            if source.len() >= self.cap {
                                return Err(BuildError::StateCap(self.cap).into());
                            }
                            let j = source.len();
                            local.insert(t, j);
                            source.push(t);
                            rows.push(Vec::new());
                            fresh.push(j);
                            j
                        }
                    };
                    succ.push((j, p));
                }
                row.push(Choice { action, successors: succ });
            }
            rows[i] = row;
            stack.extend(fresh.into_iter().rev());
        }
        let states = source.iter().map(|&s| m.state(s).clone()).collect();
        let target = source.iter().map(|&s| self.mask[s]).collect();
        let mdp = ExplicitMdp::new(m.schema().clone(), states, m.actions().to_vec(), rows).map_err(BuildError::from)?;
        Ok(InducedMdp { mdp, source, target })
    }
}

/// Convenience wrapper around [`Verifier::induced_dtmc`].
pub fn build_induced_dtmc(m: &ExplicitMdp, policy: &dyn Policy, target: &Predicate) -> Result<InducedDtmc, RashomonError> {
    Verifier::new(m, target)?.induced_dtmc("", policy)
}

fn canonical_row(d: &ExplicitDtmc, s: usize) -> Vec<(&StateVector, u64)> {
    let mut row: Vec<_> = d.row(s).iter().map(|&(t, p)| (d.state(t), p.to_bits())).collect();
    row.sort();
    row
}

/// Same reachable states (by feature vector) with bit-identical successor
/// distributions.
pub fn dtmc_equivalent(a: &ExplicitDtmc, b: &ExplicitDtmc) -> Result<bool, RashomonError> {
    if !a.schema().compatible_with(b.schema()) {
        return Err(RashomonError::SchemaMismatch);
    }
    if a.num_states() != b.num_states() || a.state(a.initial()) != b.state(b.initial()) {
        return Ok(false);
    }
    for s in 0..a.num_states() {
        let Some(t) = b.index_of(a.state(s)) else {
            return Ok(false);
        };
        if canonical_row(a, s) != canonical_row(b, t) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone)]
pub struct EquivalenceClass {
    /// Positions in the input policy list.
    pub members: Vec<usize>,
    pub representative: InducedDtmc,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct EquivalenceClasses {
    pub classes: Vec<EquivalenceClass>,
}

impl EquivalenceClasses {
    /// Class position of every input policy.
    pub fn class_of(&self) -> Vec<usize> {
        let n: usize = self.classes.iter().map(|c| c.members.len()).sum();
        let mut out = vec![0; n];
        for (k, c) in self.classes.iter().enumerate() {
            for &m in &c.members {
                out[m] = k;
            }
        }
        out
    }
}

/// Groups policies by induced DTMC. Classes come largest first; equal
/// sizes keep order of first appearance.
pub fn partition_classes(
    verifier: &Verifier<'_>,
    policies: &[(String, &dyn Policy)],
) -> Result<EquivalenceClasses, RashomonError> {
    let induced: Vec<InducedDtmc> = policies
        .par_iter()
        .map(|(id, p)| verifier.induced_dtmc(id, *p))
        .collect::<Result<_, _>>()?;
    let mut classes: Vec<(Vec<usize>, InducedDtmc)> = Vec::new();
    for (i, dtmc) in induced.into_iter().enumerate() {
        let mut found = None;
        for (k, (_, rep)) in classes.iter().enumerate() {
            if dtmc_equivalent(&rep.dtmc, &dtmc.dtmc)? {
                found = Some(k);
                break;
            }
        }
        match found {
            Some(k) => classes[k].0.push(i),
            None => classes.push((vec![i], dtmc)),
        }
    }
    classes.sort_by_key(|(members, _)| std::cmp::Reverse(members.len()));
    let classes = classes
        .into_iter()
        .map(|(members, representative)| {
            let value = representative.reach_value(DEFAULT_TOLERANCE)?;
            Ok(EquivalenceClass { members, representative, value })
        })
        .collect::<Result<_, RashomonError>>()?;
    Ok(EquivalenceClasses { classes })
}

/// Keeps the lowest id of every distinct ranking, so the result has
/// pairwise-distinct rankings. Returned ids are ascending.
pub fn build_rashomon_set(members: &[(u64, FeatureRanking)]) -> Result<Vec<u64>, RashomonError> {
    if members.is_empty() {
        return Err(RashomonError::Empty);
    }
    let rankings: Vec<FeatureRanking> = members.iter().map(|(_, r)| r.clone()).collect();
    let mut set: Vec<u64> = group_by_ranking(&rankings)?
        .into_iter()
        .map(|g| g.iter().map(|&i| members[i].0).min().expect("groups are nonempty"))
        .collect();
    set.sort_unstable();
    Ok(set)
}

/// Plurality vote of member policies, evaluated per queried state.
pub struct MajorityEnsemble<'a> {
    members: Vec<&'a dyn Policy>,
    num_actions: usize,
}

pub fn majority_ensemble<'a>(members: Vec<&'a dyn Policy>, num_actions: usize) -> Result<MajorityEnsemble<'a>, RashomonError> {
    if members.is_empty() {
        return Err(RashomonError::Empty);
    }
    Ok(MajorityEnsemble { members, num_actions })
}

impl Policy for MajorityEnsemble<'_> {
    fn choose(&self, state_index: usize, state: &StateVector) -> usize {
        let mut votes = vec![0usize; self.num_actions];
        for m in &self.members {
            votes[m.choose(state_index, state)] += 1;
        }
        // First maximum: lowest action index among tied actions.
        let mut best = 0;
        for (a, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = a;
            }
        }
        best
    }
}

/// Allows every action chosen by at least one member.
pub struct PermissivePolicy<'a> {
    pub member_ids: Vec<String>,
    members: Vec<&'a dyn Policy>,
}

pub fn union_permissive<'a>(members: Vec<(String, &'a dyn Policy)>) -> Result<PermissivePolicy<'a>, RashomonError> {
    if members.is_empty() {
        return Err(RashomonError::Empty);
    }
    let (member_ids, members) = members.into_iter().unzip();
    Ok(PermissivePolicy { member_ids, members })
}

impl PermissivePolicy<'_> {
    /// Sorted, deduplicated allowed actions.
    pub fn action_set(&self, state_index: usize, state: &StateVector) -> Vec<usize> {
        let mut set: Vec<usize> = self.members.iter().map(|m| m.choose(state_index, state)).collect();
        set.sort_unstable();
        set.dedup();
        set
    }
}

#[derive(Debug, Clone)]
pub struct InducedMdp {
    pub mdp: ExplicitMdp,
    pub source: Vec<usize>,
    pub target: Vec<bool>,
}

impl InducedMdp {
    /// The chain itself when every state enables exactly one action.
    pub fn as_dtmc(&self) -> Option<ExplicitDtmc> {
        let m = &self.mdp;
        let rows = (0..m.num_states())
            .map(|s| match m.choices(s) {
                [only] => Some(only.successors.clone()),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        ExplicitDtmc::new(m.schema().clone(), m.states().to_vec(), 0, rows).ok()
    }

    pub fn max_value(&self, tol: f64) -> Result<f64, RashomonError> {
        Ok(max_reach_mdp_mask(&self.mdp, &self.target, tol)?.0.initial_value)
    }

    pub fn min_value(&self, tol: f64) -> Result<f64, RashomonError> {
        Ok(min_reach_mdp_mask(&self.mdp, &self.target, tol)?.0.initial_value)
    }
}

pub fn build_induced_mdp(m: &ExplicitMdp, tau: &PermissivePolicy<'_>, target: &Predicate) -> Result<InducedMdp, RashomonError> {
    Verifier::new(m, target)?.induced_mdp(tau)
}

/// Success predicate `jobs_done=J & done=1`.
pub fn success_predicate(num_jobs: i64) -> Predicate {
    parse_predicate(&format!("jobs_done={num_jobs} & done=1")).expect("static predicate parses")
}

/// Evaluation of fixed policies on taxi worlds with more jobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReport {
    pub jobs: Vec<i64>,
    pub member_ids: Vec<String>,
    /// `member_values[k][j]`: member k at `jobs[j]`.
    pub member_values: Vec<Vec<f64>>,
    pub member_mean: Vec<f64>,
    pub ensemble: Vec<f64>,
    pub permissive_max: Vec<f64>,
    pub permissive_min: Vec<f64>,
    pub optimal: Vec<f64>,
    pub full_states: Vec<usize>,
    pub full_transitions: Vec<usize>,
    pub permissive_states: Vec<usize>,
    pub permissive_transitions: Vec<usize>,
    /// Whether member induced DTMCs differ at this job count.
    pub members_diverge: Vec<bool>,
}

pub fn shift_eval(
    base: &TaxiParams,
    jobs: RangeInclusive<i64>,
    members: &[(String, &MlpPolicy)],
) -> Result<ShiftReport, RashomonError> {
    if jobs.is_empty() {
        return Err(RashomonError::Invalid("job range is empty".into()));
    }
    if members.is_empty() {
        return Err(RashomonError::Empty);
    }
    let mut report = ShiftReport {
        jobs: jobs.clone().collect(),
        member_ids: members.iter().map(|(id, _)| id.clone()).collect(),
        member_values: vec![Vec::new(); members.len()],
        member_mean: Vec::new(),
        ensemble: Vec::new(),
        permissive_max: Vec::new(),
        permissive_min: Vec::new(),
        optimal: Vec::new(),
        full_states: Vec::new(),
        full_transitions: Vec::new(),
        permissive_states: Vec::new(),
        permissive_transitions: Vec::new(),
        members_diverge: Vec::new(),
    };
    let dyn_members: Vec<(String, &dyn Policy)> =
        members.iter().map(|(id, p)| (id.clone(), *p as &dyn Policy)).collect();
    for j in jobs {
        let params = TaxiParams { num_jobs: j, ..base.clone() };
        let m = build_taxi(&params)?;
        let target = success_predicate(j);
        let verifier = Verifier::new(&m, &target)?.with_cap(params.state_cap);

        let induced: Vec<InducedDtmc> = dyn_members
            .par_iter()
            .map(|(id, p)| verifier.induced_dtmc(id, *p))
            .collect::<Result<_, _>>()?;
        let mut diverge = false;
        for (k, d) in induced.iter().enumerate() {
            report.member_values[k].push(d.reach_value(DEFAULT_TOLERANCE)?);
            if !dtmc_equivalent(&induced[0].dtmc, &d.dtmc)? {
                diverge = true;
            }
        }
        report.members_diverge.push(diverge);
        let col = report.member_values.iter().map(|v| *v.last().unwrap()).sum::<f64>() / members.len() as f64;
        report.member_mean.push(col);

        let ensemble = majority_ensemble(dyn_members.iter().map(|(_, p)| *p).collect(), m.actions().len())?;
        report.ensemble.push(verifier.induced_dtmc("ensemble", &ensemble)?.reach_value(DEFAULT_TOLERANCE)?);

        let tau = union_permissive(dyn_members.clone())?;
        let induced_mdp = verifier.induced_mdp(&tau)?;
        report.permissive_max.push(induced_mdp.max_value(DEFAULT_TOLERANCE)?);
        report.permissive_min.push(induced_mdp.min_value(DEFAULT_TOLERANCE)?);
        report.permissive_states.push(induced_mdp.mdp.num_states());
        report.permissive_transitions.push(induced_mdp.mdp.num_transitions());

        let (opt, _) = max_reach_mdp_mask(&m, verifier.target_mask(), DEFAULT_TOLERANCE)?;
        report.optimal.push(opt.initial_value);
        report.full_states.push(m.num_states());
        report.full_transitions.push(m.num_transitions());
    }
    Ok(report)
}
