use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use rashomon_core::checker::{max_reach_mdp_mask, min_reach_mdp_mask, reach_prob_dtmc_mask, TablePolicy};
use rashomon_core::model::{Choice, ExplicitDtmc, ExplicitMdp, FeatureSchema, StateVector};

const TOL: f64 = 1e-12;

fn random_mdp(seed: u64, n: usize, k: usize) -> ExplicitMdp {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let choices = (0..n)
        .map(|_| {
            (0..k)
                .map(|a| {
                    let fanout = rng.random_range(1..=n.min(3));
                    let succ: Vec<usize> = rand::seq::index::sample(&mut rng, n, fanout).into_vec();
                    let w: Vec<f64> = succ.iter().map(|_| rng.random_range(0.1..1.0)).collect();
                    let total: f64 = w.iter().sum();
                    Choice { action: a, successors: succ.into_iter().zip(w).map(|(t, x)| (t, x / total)).collect() }
                })
                .collect()
        })
        .collect();
    let schema = FeatureSchema::new([("id", 0, n as i64)]).unwrap();
    let states = (0..n).map(|s| StateVector::new(vec![s as i64])).collect();
    ExplicitMdp::new(schema, states, (0..k).map(|a| format!("a{a}")).collect(), choices).unwrap()
}

fn chain_under(m: &ExplicitMdp, pol: &TablePolicy) -> ExplicitDtmc {
    let rows = (0..m.num_states()).map(|s| m.distribution(s, pol.action(s)).unwrap().to_vec()).collect();
    ExplicitDtmc::new(m.schema().clone(), m.states().to_vec(), 0, rows).unwrap()
}

fn expected(m: &ExplicitMdp, s: usize, a: usize, x: &[f64]) -> f64 {
    m.distribution(s, a).unwrap().iter().map(|&(t, p)| p * x[t]).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn values_are_ordered_probabilities(seed in any::<u64>(), n in 1usize..10, k in 1usize..4, bits in any::<u16>()) {
        let m = random_mdp(seed, n, k);
        let target: Vec<bool> = (0..n).map(|s| bits >> s & 1 == 1).collect();
        let (mx, _) = max_reach_mdp_mask(&m, &target, TOL).unwrap();
        let (mn, _) = min_reach_mdp_mask(&m, &target, TOL).unwrap();
        for s in 0..n {
            prop_assert!((0.0..=1.0).contains(&mx.values[s]));
            prop_assert!(mn.values[s] <= mx.values[s] + 1e-12);
            if target[s] {
                prop_assert_eq!(mx.values[s], 1.0);
                prop_assert_eq!(mn.values[s], 1.0);
            }
        }
    }

    #[test]
    fn enlarging_the_target_never_lowers_values(seed in any::<u64>(), n in 2usize..10, k in 1usize..4, bits in any::<u16>(), extra in 0usize..10) {
        let m = random_mdp(seed, n, k);
        let small: Vec<bool> = (0..n).map(|s| bits >> s & 1 == 1).collect();
        let mut large = small.clone();
        large[extra % n] = true;
        let (a, _) = max_reach_mdp_mask(&m, &small, TOL).unwrap();
        let (b, _) = max_reach_mdp_mask(&m, &large, TOL).unwrap();
        let (c, _) = min_reach_mdp_mask(&m, &small, TOL).unwrap();
        let (d, _) = min_reach_mdp_mask(&m, &large, TOL).unwrap();
        for s in 0..n {
            prop_assert!(b.values[s] + 1e-10 >= a.values[s]);
            prop_assert!(d.values[s] + 1e-10 >= c.values[s]);
        }
    }

    #[test]
    fn returned_policies_are_greedy_and_attain_the_value(seed in any::<u64>(), n in 1usize..10, k in 1usize..4, bits in any::<u16>()) {
        let m = random_mdp(seed, n, k);
        let target: Vec<bool> = (0..n).map(|s| bits >> s & 1 == 1).collect();
        for maximize in [true, false] {
            let (r, pol) = if maximize {
                max_reach_mdp_mask(&m, &target, TOL).unwrap()
            } else {
                min_reach_mdp_mask(&m, &target, TOL).unwrap()
            };
            for s in (0..n).filter(|&s| !target[s]) {
                let chosen = expected(&m, s, pol.action(s), &r.values);
                let best = (0..k).map(|a| expected(&m, s, a, &r.values));
                let best = if maximize { best.fold(f64::MIN, f64::max) } else { best.fold(f64::MAX, f64::min) };
                prop_assert!((chosen - best).abs() <= 1e-9);
            }
            let induced = reach_prob_dtmc_mask(&chain_under(&m, &pol), &target, TOL).unwrap();
            for s in 0..n {
                prop_assert!((induced.values[s] - r.values[s]).abs() <= 1e-8);
            }
        }
    }
}
