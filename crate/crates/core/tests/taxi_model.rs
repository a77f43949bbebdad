use rashomon_core::checker::max_reach_mdp;
use rashomon_core::error::BuildError;
use rashomon_core::explicit::{mdp_fingerprint, mdp_to_string, read_explicit_str, ExplicitModel};
use rashomon_core::model::validate_mdp;
use rashomon_core::rashomon::success_predicate;
use rashomon_core::taxi::{build_taxi, TaxiParams, ACTIONS};

const FUEL: usize = 6;
const ON_BOARD: usize = 7;
const JOBS: usize = 8;
const DONE: usize = 9;

fn small(num_jobs: i64, fuel: i64) -> TaxiParams {
    TaxiParams {
        width: 3,
        height: 3,
        depots: TaxiParams::corner_depots(3, 3),
        fuel_capacity: fuel,
        num_jobs,
        ..TaxiParams::default()
    }
}

#[test]
fn transition_invariants_on_the_default_model() {
    let p = TaxiParams::default();
    let m = build_taxi(&p).unwrap();
    assert!(validate_mdp(&m).is_valid());
    let drop = ACTIONS.iter().position(|a| *a == "drop").unwrap();
    let mut spawning_drops = 0;
    for s in 0..m.num_states() {
        let sv = m.state(s).values();
        assert_eq!(m.choices(s).len(), ACTIONS.len());
        for c in m.choices(s) {
            if c.successors.len() > 1 {
                assert_eq!(c.action, drop);
                assert_eq!(c.successors.len(), 12);
                spawning_drops += 1;
            }
            for &(t, _) in &c.successors {
                let tv = m.state(t).values();
                if sv[DONE] == 1 {
                    assert_eq!(t, s, "done states are absorbing");
                }
                let job_spawned = tv[JOBS] == sv[JOBS] + 1 && tv[DONE] == 0;
                if job_spawned {
                    assert_eq!(tv[FUEL], p.fuel_capacity);
                } else {
                    assert!(tv[FUEL] <= sv[FUEL], "fuel never grows outside a job spawn");
                }
                assert!(tv[JOBS] == sv[JOBS] || tv[JOBS] == sv[JOBS] + 1);
                assert!(tv[JOBS] <= p.num_jobs);
                if tv[JOBS] == sv[JOBS] + 1 {
                    assert_eq!((sv[ON_BOARD], tv[ON_BOARD]), (1, 0));
                }
            }
        }
    }
    assert_eq!(spawning_drops, m.num_branching_choices());
    assert!(spawning_drops > 0);
}

#[test]
fn single_job_has_no_branching() {
    for fuel in [4, 6, 10] {
        let m = build_taxi(&small(1, fuel)).unwrap();
        assert_eq!(m.num_branching_choices(), 0);
    }
}

#[test]
fn exact_fuel_for_the_shortest_route_suffices() {
    // Start (0,0) -> pickup (2,0) -> destination (0,2): six moves.
    let target = success_predicate(1);
    let exact = build_taxi(&small(1, 6)).unwrap();
    let (r, _) = max_reach_mdp(&exact, &target, 1e-12).unwrap();
    assert_eq!(r.initial_value, 1.0);
    let short = build_taxi(&small(1, 5)).unwrap();
    let (r, _) = max_reach_mdp(&short, &target, 1e-12).unwrap();
    assert_eq!(r.initial_value, 0.0);
}

#[test]
fn more_fuel_never_shrinks_the_state_space() {
    let mut last = 0;
    for fuel in [2, 4, 8, 16] {
        let n = build_taxi(&small(2, fuel)).unwrap().num_states();
        assert!(n >= last, "fuel {fuel}: {n} < {last}");
        last = n;
    }
}

#[test]
fn state_cap_is_enforced() {
    let p = TaxiParams { state_cap: 100, ..TaxiParams::default() };
    assert_eq!(build_taxi(&p).unwrap_err(), BuildError::StateCap(100));
}

#[test]
fn explicit_roundtrip_preserves_the_model() {
    for p in [small(2, 8), TaxiParams::default()] {
        let m = build_taxi(&p).unwrap();
        let text = mdp_to_string(&m);
        let ExplicitModel::Mdp(back) = read_explicit_str(&text).unwrap() else {
            panic!("expected an MDP");
        };
        assert_eq!(mdp_fingerprint(&back), mdp_fingerprint(&m));
        assert_eq!(back, m);
        assert_eq!(mdp_to_string(&back), text);
    }
}
