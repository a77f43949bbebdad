//! Unbounded reachability (`F target`) for DTMCs and MDPs.
//!
//! All solvers follow the same shape: fix 1 on target states, fix 0 on
//! states found by graph analysis to have probability zero, then iterate
//! Gauss-Seidel sweeps in ascending state order over the rest until the
//! largest per-sweep change drops below the tolerance.

use std::collections::VecDeque;

use crate::error::{CheckError, PropertyError};
use crate::model::{ExplicitDtmc, ExplicitMdp, StateVector};
use crate::prop::{BoundPredicate, Predicate, PropertyQuery, QueryMode};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityResult {
    pub values: Vec<f64>,
    pub initial_value: f64,
    pub iterations: usize,
    /// Largest change in the final sweep.
    pub residual: f64,
}

/// Memoryless deterministic policy over the states of one MDP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TablePolicy {
    actions: Vec<usize>,
}

impl TablePolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    /// Checks totality and action validity against `m`.
    pub fn for_mdp(m: &ExplicitMdp, actions: Vec<usize>) -> Result<Self, String> {
        if actions.len() != m.num_states() {
            return Err(format!(
                "policy covers {} states, model has {}",
                actions.len(),
                m.num_states()
            ));
        }
        for (s, &a) in actions.iter().enumerate() {
            if m.distribution(s, a).is_none() {
                return Err(format!("action {a} not enabled at state {s}"));
            }
        }
        Ok(Self { actions })
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn get(&self, state: usize) -> Option<usize> {
        self.actions.get(state).copied()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.actions
    }
}

fn check_tol(tol: f64) -> Result<(), CheckError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(CheckError::Tolerance(tol))
    }
}

fn target_mask(states: &[StateVector], target: &BoundPredicate) -> Vec<bool> {
    states.iter().map(|s| target.holds(s)).collect()
}

/// Marks states with a path into `target` over the given edge lists.
fn backward_reachable(num_states: usize, predecessors: &[Vec<usize>], target: &[bool]) -> Vec<bool> {
    let mut seen = target.to_vec();
    let mut queue: VecDeque<usize> = (0..num_states).filter(|&s| target[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &predecessors[t] {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
    }
    seen
}

fn dtmc_predecessors(d: &ExplicitDtmc) -> Vec<Vec<usize>> {
    let mut preds = vec![Vec::new(); d.num_states()];
    for s in 0..d.num_states() {
        for &(t, _) in d.row(s) {
            preds[t].push(s);
        }
    }
    preds
}

fn mdp_predecessors(m: &ExplicitMdp) -> Vec<Vec<usize>> {
    let mut preds = vec![Vec::new(); m.num_states()];
    for s in 0..m.num_states() {
        for c in m.choices(s) {
            for &(t, _) in &c.successors {
                if preds[t].last() != Some(&s) {
                    preds[t].push(s);
                }
            }
        }
    }
    preds
}

/// `Pr(F target)` for every state of `d`.
pub fn reach_prob_dtmc(
    d: &ExplicitDtmc,
    target: &Predicate,
    tol: f64,
) -> Result<ReachabilityResult, CheckError> {
    let bound = target.bind(d.schema())?;
    reach_prob_dtmc_mask(d, &target_mask(d.states(), &bound), tol)
}

pub fn reach_prob_dtmc_mask(
    d: &ExplicitDtmc,
    target: &[bool],
    tol: f64,
) -> Result<ReachabilityResult, CheckError> {
    check_tol(tol)?;
    let n = d.num_states();
    let can_reach = backward_reachable(n, &dtmc_predecessors(d), target);
    let mut x: Vec<f64> = (0..n).map(|s| if target[s] { 1.0 } else { 0.0 }).collect();
    let maybe: Vec<usize> = (0..n).filter(|&s| can_reach[s] && !target[s]).collect();

    let mut sweeps = 0;
    let mut delta = 0.0;
    if !maybe.is_empty() {
        loop {
            if sweeps == MAX_SWEEPS {
                return Err(CheckError::Convergence { sweeps, residual: delta });
            }
            sweeps += 1;
            delta = 0.0f64;
            for &s in &maybe {
                let mut diag = 0.0;
                let mut acc = 0.0;
                for &(t, p) in d.row(s) {
                    if t == s {
                        diag += p;
                    } else {
                        acc += p * x[t];
                    }
                }
                // diag < 1 because s can reach the target.
                let new = acc / (1.0 - diag);
                delta = delta.max((new - x[s]).abs());
                x[s] = new;
            }
            if delta < tol {
                break;
            }
        }
    }
    for v in &mut x {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(ReachabilityResult { initial_value: x[d.initial()], values: x, iterations: sweeps, residual: delta })
}

/// Residual `max |x - P x|` over states that are neither target nor prob-0.
pub fn dtmc_fixed_point_residual(d: &ExplicitDtmc, target: &[bool], x: &[f64]) -> f64 {
    (0..d.num_states())
        .filter(|&s| !target[s] && x[s] > 0.0)
        .map(|s| {
            let px: f64 = d.row(s).iter().map(|&(t, p)| p * x[t]).sum();
            (x[s] - px).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Objective {
    Max,
    Min,
}

/// Maximal reachability probability and a policy attaining it.
pub fn max_reach_mdp(
    m: &ExplicitMdp,
    target: &Predicate,
    tol: f64,
) -> Result<(ReachabilityResult, TablePolicy), CheckError> {
    let bound = target.bind(m.schema())?;
    optimize(m, &target_mask(m.states(), &bound), tol, Objective::Max)
}

/// Minimal reachability probability and a policy attaining it.
pub fn min_reach_mdp(
    m: &ExplicitMdp,
    target: &Predicate,
    tol: f64,
) -> Result<(ReachabilityResult, TablePolicy), CheckError> {
    let bound = target.bind(m.schema())?;
    optimize(m, &target_mask(m.states(), &bound), tol, Objective::Min)
}

pub fn max_reach_mdp_mask(
    m: &ExplicitMdp,
    target: &[bool],
    tol: f64,
) -> Result<(ReachabilityResult, TablePolicy), CheckError> {
    optimize(m, target, tol, Objective::Max)
}

pub fn min_reach_mdp_mask(
    m: &ExplicitMdp,
    target: &[bool],
    tol: f64,
) -> Result<(ReachabilityResult, TablePolicy), CheckError> {
    optimize(m, target, tol, Objective::Min)
}

/// States from which some policy avoids `target` forever.
fn prob0_exists(m: &ExplicitMdp, target: &[bool]) -> Vec<bool> {
    let n = m.num_states();
    let mut avoid: Vec<bool> = target.iter().map(|t| !t).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if avoid[s]
                && !m
                    .choices(s)
                    .iter()
                    .any(|c| c.successors.iter().all(|&(t, _)| avoid[t]))
            {
                avoid[s] = false;
                changed = true;
            }
        }
        if !changed {
            return avoid;
        }
    }
}

fn q_value(successors: &[(usize, f64)], s: usize, x: &[f64]) -> (f64, f64) {
    let mut diag = 0.0;
    let mut acc = 0.0;
    for &(t, p) in successors {
        if t == s {
            diag += p;
        } else {
            acc += p * x[t];
        }
    }
    (acc, diag)
}

fn optimize(
    m: &ExplicitMdp,
    target: &[bool],
    tol: f64,
    objective: Objective,
) -> Result<(ReachabilityResult, TablePolicy), CheckError> {
    check_tol(tol)?;
    let n = m.num_states();
    if let Some(s) = (0..n).find(|&s| m.choices(s).is_empty()) {
        return Err(CheckError::NoChoices(s));
    }
    let preds = mdp_predecessors(m);
    let zero: Vec<bool> = match objective {
        Objective::Max => backward_reachable(n, &preds, target).iter().map(|r| !r).collect(),
        Objective::Min => prob0_exists(m, target),
    };
    let mut x: Vec<f64> = (0..n).map(|s| if target[s] { 1.0 } else { 0.0 }).collect();
    let maybe: Vec<usize> = (0..n).filter(|&s| !target[s] && !zero[s]).collect();

    let mut sweeps = 0;
    let mut delta = 0.0;
    if !maybe.is_empty() {
        loop {
            if sweeps == MAX_SWEEPS {
                return Err(CheckError::Convergence { sweeps, residual: delta });
            }
            sweeps += 1;
            delta = 0.0f64;
            for &s in &maybe {
                let mut best: Option<f64> = None;
                for c in m.choices(s) {
                    let (acc, diag) = q_value(&c.successors, s, &x);
                    // A pure self-loop leaves the value undetermined; it can
                    // only matter for min, where such states are already fixed at 0.
                    if diag >= 1.0 {
                        continue;
                    }
                    let v = acc / (1.0 - diag);
                    best = Some(match (best, objective) {
                        (None, _) => v,
                        (Some(b), Objective::Max) => b.max(v),
                        (Some(b), Objective::Min) => b.min(v),
                    });
                }
                let new = best.unwrap_or(0.0);
                delta = delta.max((new - x[s]).abs());
                x[s] = new;
            }
            if delta < tol {
                break;
            }
        }
    }
    for v in &mut x {
        *v = v.clamp(0.0, 1.0);
    }
    let eps = 10.0 * tol;
    let policy = match objective {
        Objective::Max => extract_max_policy(m, target, &zero, &preds, &x, eps),
        Objective::Min => extract_min_policy(m, target, &zero, &x, eps),
    };
    let result =
        ReachabilityResult { initial_value: x[m.initial()], values: x, iterations: sweeps, residual: delta };
    Ok((result, policy))
}

fn q_full(successors: &[(usize, f64)], x: &[f64]) -> f64 {
    successors.iter().map(|&(t, p)| p * x[t]).sum()
}

/// Greedy policy for maximal reachability.
///
/// Value-optimal actions may include self-loops that never reach the
/// target, so states are assigned in backward breadth-first layers from
/// the target: a state takes the lowest-indexed optimal action that has a
/// successor in an earlier layer.
fn extract_max_policy(
    m: &ExplicitMdp,
    target: &[bool],
    zero: &[bool],
    preds: &[Vec<usize>],
    x: &[f64],
    eps: f64,
) -> TablePolicy {
    let n = m.num_states();
    let first_action = |s: usize| m.choices(s)[0].action;
    let mut actions: Vec<Option<usize>> = (0..n)
        .map(|s| if target[s] || zero[s] { Some(first_action(s)) } else { None })
        .collect();
    let mut reached: Vec<bool> = target.to_vec();
    let mut frontier: Vec<usize> = (0..n).filter(|&s| target[s]).collect();
    while !frontier.is_empty() {
        let mut candidates: Vec<usize> = frontier
            .iter()
            .flat_map(|&t| preds[t].iter().copied())
            .filter(|&s| actions[s].is_none())
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let mut next = Vec::new();
        for s in candidates {
            let chosen = m.choices(s).iter().find(|c| {
                q_full(&c.successors, x) >= x[s] - eps
                    && c.successors.iter().any(|&(t, _)| reached[t])
            });
            if let Some(c) = chosen {
                actions[s] = Some(c.action);
                next.push(s);
            }
        }
        for &s in &next {
            reached[s] = true;
        }
        frontier = next;
    }
    // Only reachable through numerically tied values; fall back to greedy.
    let actions = actions
        .into_iter()
        .enumerate()
        .map(|(s, a)| a.unwrap_or_else(|| greedy(m, s, x, eps, Objective::Max)))
        .collect();
    TablePolicy::new(actions)
}

fn greedy(m: &ExplicitMdp, s: usize, x: &[f64], eps: f64, objective: Objective) -> usize {
    let qs: Vec<(usize, f64)> = m.choices(s).iter().map(|c| (c.action, q_full(&c.successors, x))).collect();
    let best = match objective {
        Objective::Max => qs.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max),
        Objective::Min => qs.iter().map(|q| q.1).fold(f64::INFINITY, f64::min),
    };
    qs.iter()
        .find(|&&(_, q)| (q - best).abs() <= eps)
        .map(|&(a, _)| a)
        .unwrap_or(qs[0].0)
}

/// Greedy policy for minimal reachability. Prob-0 states keep to actions
/// whose successors all stay prob-0.
fn extract_min_policy(m: &ExplicitMdp, target: &[bool], zero: &[bool], x: &[f64], eps: f64) -> TablePolicy {
    let actions = (0..m.num_states())
        .map(|s| {
            if target[s] {
                m.choices(s)[0].action
            } else if zero[s] {
                m.choices(s)
                    .iter()
                    .find(|c| c.successors.iter().all(|&(t, _)| zero[t]))
                    .map(|c| c.action)
                    .expect("prob-0 state keeps an avoiding action")
            } else {
                greedy(m, s, x, eps, Objective::Min)
            }
        })
        .collect();
    TablePolicy::new(actions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Satisfied,
    Violated,
}

/// Compares `value` against a threshold property after rounding it to 12
/// decimal places.
pub fn check_threshold(q: &PropertyQuery, value: f64) -> Result<Verdict, PropertyError> {
    match q.mode {
        QueryMode::Query => Err(PropertyError::QueryMode),
        QueryMode::Threshold { cmp, bound } => {
            let rounded = (value * 1e12).round() / 1e12;
            Ok(if cmp.holds(rounded, bound) { Verdict::Satisfied } else { Verdict::Violated })
        }
    }
}
