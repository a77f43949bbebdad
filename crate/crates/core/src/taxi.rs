//! Fuel-constrained taxi world as an explicit MDP.
//!
//! The taxi moves on a grid, picks up a passenger at one of four depots and
//! drops them at another. After each completed job a new passenger appears
//! with a uniformly random (pickup, destination) depot pair. The episode
//! ends when the requested number of jobs is done or the tank runs dry.

use std::collections::{HashMap, VecDeque};

use crate::error::BuildError;
use crate::model::{Choice, ExplicitMdp, FeatureSchema, StateVector};

pub const ACTIONS: [&str; 6] = ["north", "east", "south", "west", "pick_up", "drop"];

pub const NORTH: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const WEST: usize = 3;
pub const PICK_UP: usize = 4;
pub const DROP: usize = 5;

pub const FEATURES: [&str; 10] = [
    "x",
    "y",
    "passenger_loc_x",
    "passenger_loc_y",
    "passenger_dest_x",
    "passenger_dest_y",
    "fuel",
    "on_board",
    "jobs_done",
    "done",
];

const X: usize = 0;
const Y: usize = 1;
const LOC_X: usize = 2;
const LOC_Y: usize = 3;
const DEST_X: usize = 4;
const DEST_Y: usize = 5;
const FUEL: usize = 6;
const ON_BOARD: usize = 7;
const JOBS: usize = 8;
const DONE: usize = 9;

pub const DEFAULT_STATE_CAP: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxiParams {
    pub width: i64,
    pub height: i64,
    pub fuel_capacity: i64,
    pub num_jobs: i64,
    pub depots: [(i64, i64); 4],
    /// (pickup depot, destination depot) of the first job.
    pub first_passenger: (usize, usize),
    pub taxi_start: (i64, i64),
    /// Refill the tank when a new passenger appears.
    pub refuel_per_job: bool,
    pub state_cap: usize,
}

impl Default for TaxiParams {
    fn default() -> Self {
        Self {
            width: 4,
            height: 4,
            fuel_capacity: 14,
            num_jobs: 5,
            depots: [(0, 0), (3, 0), (0, 3), (3, 3)],
            first_passenger: (1, 2),
            taxi_start: (0, 0),
            refuel_per_job: true,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

impl TaxiParams {
    /// Corner depots for a `width` x `height` grid.
    pub fn corner_depots(width: i64, height: i64) -> [(i64, i64); 4] {
        [(0, 0), (width - 1, 0), (0, height - 1), (width - 1, height - 1)]
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        let err = |m: String| Err(BuildError::Params(m));
        if self.width < 1 || self.height < 1 {
            return err(format!("grid {}x{} is empty", self.width, self.height));
        }
        if self.fuel_capacity < 1 {
            return err(format!("fuel_capacity {} < 1", self.fuel_capacity));
        }
        if self.num_jobs < 1 {
            return err(format!("num_jobs {} < 1", self.num_jobs));
        }
        let inside = |(x, y): (i64, i64)| (0..self.width).contains(&x) && (0..self.height).contains(&y);
        for (i, &d) in self.depots.iter().enumerate() {
            if !inside(d) {
                return err(format!("depot {i} at {d:?} outside the grid"));
            }
            if self.depots[..i].contains(&d) {
                return err(format!("depot {i} at {d:?} duplicates another depot"));
            }
        }
        let (loc, dest) = self.first_passenger;
        if loc >= 4 || dest >= 4 {
            return err(format!("first passenger depots {loc}->{dest} out of range"));
        }
        if loc == dest {
            return err("first passenger pickup equals destination".into());
        }
        if !inside(self.taxi_start) {
            return err(format!("taxi start {:?} outside the grid", self.taxi_start));
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        let (w, h) = (self.width - 1, self.height - 1);
        let bounds = [
            (0, w),
            (0, h),
            (0, w),
            (0, h),
            (0, w),
            (0, h),
            (0, self.fuel_capacity),
            (0, 1),
            (0, self.num_jobs),
            (0, 1),
        ];
        FeatureSchema::new(FEATURES.iter().zip(bounds).map(|(n, (lo, hi))| (*n, lo, hi)))
            .expect("taxi schema is well formed")
    }

    pub fn initial_state(&self) -> StateVector {
        let (loc, dest) = self.first_passenger;
        let (lx, ly) = self.depots[loc];
        let (dx, dy) = self.depots[dest];
        let (x, y) = self.taxi_start;
        StateVector::new(vec![x, y, lx, ly, dx, dy, self.fuel_capacity, 0, 0, 0])
    }

    /// The 12 ordered depot pairs with distinct pickup and destination.
    fn job_pairs(&self) -> impl Iterator<Item = ((i64, i64), (i64, i64))> + '_ {
        (0..4).flat_map(move |l| {
            (0..4).filter(move |&d| d != l).map(move |d| (self.depots[l], self.depots[d]))
        })
    }
}

pub fn action_index(name: &str) -> Result<usize, BuildError> {
    ACTIONS
        .iter()
        .position(|a| *a == name)
        .ok_or_else(|| BuildError::UnknownAction(name.to_string()))
}

/// Successor distribution of `s` under the action named `action`.
pub fn successor_distribution(
    s: &StateVector,
    action: &str,
    p: &TaxiParams,
) -> Result<Vec<(StateVector, f64)>, BuildError> {
    Ok(successors(s.values(), action_index(action)?, p))
}

pub(crate) fn successors(s: &[i64], action: usize, p: &TaxiParams) -> Vec<(StateVector, f64)> {
    let stay = || vec![(StateVector::new(s.to_vec()), 1.0)];
    if s[DONE] == 1 {
        return stay();
    }
    let mut next = s.to_vec();
    match action {
        NORTH | EAST | SOUTH | WEST => {
            let (dx, dy) = match action {
                NORTH => (0, 1),
                EAST => (1, 0),
                SOUTH => (0, -1),
                _ => (-1, 0),
            };
            let (nx, ny) = (s[X] + dx, s[Y] + dy);
            // Bumping into the boundary keeps the position but still burns fuel.
            if (0..p.width).contains(&nx) && (0..p.height).contains(&ny) {
                next[X] = nx;
                next[Y] = ny;
            }
            next[FUEL] = (s[FUEL] - 1).max(0);
            let can_still_drop =
                next[ON_BOARD] == 1 && next[X] == next[DEST_X] && next[Y] == next[DEST_Y];
            if next[FUEL] == 0 && !(can_still_drop && s[FUEL] > 0) {
                next[DONE] = 1;
            }
            vec![(StateVector::new(next), 1.0)]
        }
        PICK_UP => {
            if s[ON_BOARD] == 0 && s[X] == s[LOC_X] && s[Y] == s[LOC_Y] {
                next[ON_BOARD] = 1;
                vec![(StateVector::new(next), 1.0)]
            } else {
                stay()
            }
        }
        DROP => {
            if s[ON_BOARD] == 1 && s[X] == s[DEST_X] && s[Y] == s[DEST_Y] {
                next[ON_BOARD] = 0;
                next[JOBS] = s[JOBS] + 1;
                if next[JOBS] >= p.num_jobs {
                    next[DONE] = 1;
                    return vec![(StateVector::new(next), 1.0)];
                }
                if p.refuel_per_job {
                    next[FUEL] = p.fuel_capacity;
                }
                let prob = 1.0 / 12.0;
                p.job_pairs()
                    .map(|((lx, ly), (dx, dy))| {
                        let mut spawn = next.clone();
                        spawn[LOC_X] = lx;
                        spawn[LOC_Y] = ly;
                        spawn[DEST_X] = dx;
                        spawn[DEST_Y] = dy;
                        (StateVector::new(spawn), prob)
                    })
                    .collect()
            } else {
                stay()
            }
        }
        _ => unreachable!("action index {action} out of range"),
    }
}

/// Explores every state reachable from the initial state under all actions.
pub fn build_taxi(p: &TaxiParams) -> Result<ExplicitMdp, BuildError> {
    p.validate()?;
    let mut index: HashMap<StateVector, usize> = HashMap::new();
    let mut states = Vec::new();
    let mut choices: Vec<Vec<Choice>> = Vec::new();
    let mut queue = VecDeque::new();

    let init = p.initial_state();
    index.insert(init.clone(), 0);
    states.push(init);
    queue.push_back(0usize);

    while let Some(s) = queue.pop_front() {
        let current = states[s].clone();
        let mut row = Vec::with_capacity(ACTIONS.len());
        for action in 0..ACTIONS.len() {
            let mut dist = Vec::new();
            for (succ, prob) in successors(current.values(), action, p) {
                let t = match index.get(&succ) {
                    Some(&t) => t,
                    None => {
                        if states.len() >= p.state_cap {
                            return Err(BuildError::StateCap(p.state_cap));
                        }
                        let t = states.len();
                        index.insert(succ.clone(), t);
                        states.push(succ);
                        queue.push_back(t);
                        t
                    }
                };
                dist.push((t, prob));
            }
            row.push(Choice { action, successors: dist });
        }
        choices.push(row);
    }

    Ok(ExplicitMdp::new(
        p.schema(),
        states,
        ACTIONS.iter().map(|a| a.to_string()).collect(),
        choices,
    )?)
}

/// Property text for completing every job of `num_jobs`.
pub fn success_property(num_jobs: i64) -> String {
    format!("P=? [ F jobs_done={num_jobs} & done=1 ]")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_mdp;

    fn state(vals: [i64; 10]) -> StateVector {
        StateVector::new(vals.to_vec())
    }

    #[test]
    fn deterministic_move() {
        let p = TaxiParams::default();
        let s = state([1, 1, 3, 0, 0, 3, 5, 0, 0, 0]);
        let next = successor_distribution(&s, "north", &p).unwrap();
        assert_eq!(next, vec![(state([1, 2, 3, 0, 0, 3, 4, 0, 0, 0]), 1.0)]);
    }

    #[test]
    fn last_unit_of_fuel_ends_the_episode() {
        let p = TaxiParams::default();
        let s = state([1, 1, 3, 0, 0, 3, 1, 0, 0, 0]);
        for a in ["north", "east", "south", "west"] {
            let next = successor_distribution(&s, a, &p).unwrap();
            assert_eq!(next.len(), 1);
            assert_eq!(next[0].0.get(FUEL), 0);
            assert_eq!(next[0].0.get(DONE), 1);
        }
    }

    #[test]
    fn wall_bump_costs_fuel() {
        let p = TaxiParams::default();
        let s = state([0, 0, 3, 0, 0, 3, 5, 0, 0, 0]);
        let next = successor_distribution(&s, "west", &p).unwrap();
        assert_eq!(next, vec![(state([0, 0, 3, 0, 0, 3, 4, 0, 0, 0]), 1.0)]);
    }

    #[test]
    fn failed_pickup_and_drop_are_free_self_loops() {
        let p = TaxiParams::default();
        let s = state([1, 1, 3, 0, 0, 3, 5, 0, 0, 0]);
        for a in ["pick_up", "drop"] {
            assert_eq!(successor_distribution(&s, a, &p).unwrap(), vec![(s.clone(), 1.0)]);
        }
        let picked = successor_distribution(&state([3, 0, 3, 0, 0, 3, 5, 0, 0, 0]), "pick_up", &p).unwrap();
        assert_eq!(picked[0].0.get(ON_BOARD), 1);
    }

    #[test]
    fn non_final_drop_spawns_twelve_jobs() {
        let p = TaxiParams::default();
        let s = state([0, 3, 3, 0, 0, 3, 5, 1, 3, 0]);
        let next = successor_distribution(&s, "drop", &p).unwrap();
        // 4 pickup depots x 3 other destinations.
        assert_eq!(next.len(), 12);
        let mut pairs = std::collections::HashSet::new();
        for (t, prob) in &next {
            assert_eq!(*prob, 1.0 / 12.0);
            assert_eq!(t.get(JOBS), 4);
            assert_eq!(t.get(ON_BOARD), 0);
            assert_eq!(t.get(FUEL), p.fuel_capacity);
            assert_ne!((t.get(LOC_X), t.get(LOC_Y)), (t.get(DEST_X), t.get(DEST_Y)));
            pairs.insert(t.values()[LOC_X..=DEST_Y].to_vec());
        }
        assert_eq!(pairs.len(), 12);
        let total: f64 = next.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn final_drop_is_absorbing_success() {
        let p = TaxiParams::default();
        let s = state([0, 3, 3, 0, 0, 3, 5, 1, 4, 0]);
        let next = successor_distribution(&s, "drop", &p).unwrap();
        assert_eq!(next, vec![(state([0, 3, 3, 0, 0, 3, 5, 0, 5, 1]), 1.0)]);
        for a in ACTIONS {
            assert_eq!(successor_distribution(&next[0].0, a, &p).unwrap(), vec![(next[0].0.clone(), 1.0)]);
        }
    }

    #[test]
    fn unknown_action() {
        let p = TaxiParams::default();
        assert_eq!(
            successor_distribution(&p.initial_state(), "hover", &p),
            Err(BuildError::UnknownAction("hover".into()))
        );
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = TaxiParams::default();
        p.depots[1] = p.depots[0];
        assert!(build_taxi(&p).is_err());
        let p = TaxiParams { first_passenger: (2, 2), ..TaxiParams::default() };
        assert!(build_taxi(&p).is_err());
        let p = TaxiParams { taxi_start: (9, 0), ..TaxiParams::default() };
        assert!(build_taxi(&p).is_err());
        let p = TaxiParams { state_cap: 100, ..TaxiParams::default() };
        assert_eq!(build_taxi(&p).unwrap_err(), BuildError::StateCap(100));
    }

    #[test]
    fn default_model_is_valid() {
        let m = build_taxi(&TaxiParams::default()).unwrap();
        assert!(validate_mdp(&m).is_valid());
        assert_eq!(m.state(0), &TaxiParams::default().initial_state());
    }
}
