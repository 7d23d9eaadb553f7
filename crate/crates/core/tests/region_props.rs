mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use rrw_core::bounds::eval_theorem1;
use rrw_core::region::*;
use rrw_core::sampling::rng_for;

fn random_system(seed: u64, dim: usize) -> RateConstraintSystem {
    let mut rng = rng_for(seed, 20);
    let k = rng.random_range(1..=6);
    let mut rows: Vec<LinearRateInequality> = (0..k)
        .map(|_| {
            let mut c: Vec<i64> = (0..dim).map(|_| rng.random_range(0..=2)).collect();
            if c.iter().all(|v| *v == 0) {
                c[rng.random_range(0..dim)] = 1;
            }
            LinearRateInequality::new(c, rng.random_range(0.0..2.0)).unwrap()
        })
        .collect();
    // Keep the polytope bounded.
    rows.push(LinearRateInequality::new(vec![1; dim], 3.0).unwrap());
    RateConstraintSystem::new(dim, rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dropping_a_row_never_shrinks_support(seed in any::<u64>(), three in any::<bool>()) {
        let dim = if three { 3 } else { 2 };
        let sys = random_system(seed, dim);
        let ws = if three { weights_3d(30.0) } else { weights_2d(37) };
        let full = supports(&sys, &ws);
        for i in 0..sys.rows().len() - 1 {
            let fewer = supports(&sys.without_row(i), &ws);
            for (a, b) in fewer.iter().zip(&full) {
                prop_assert!(*a >= b - 1e-9);
            }
        }
    }

    #[test]
    fn support_function_is_sublinear(seed in any::<u64>()) {
        prop_assert_eq!(region_convexity(seed, 1e-7), Ok(()));
    }

    #[test]
    fn frontier_points_lie_in_their_polytope(seed in any::<u64>()) {
        let sys = random_system(seed, 2);
        let r = union_frontier([&sys], &weights_2d(37)).unwrap();
        prop_assert_eq!(r.check_invariants(1e-9), Ok(()));
        for p in &r.boundary_points {
            prop_assert!(polytope_contains(&sys, p).unwrap());
        }
    }

    #[test]
    fn union_frontier_dominates_each_member(seed in any::<u64>()) {
        let mut rng = rng_for(seed, 21);
        let ch = small_channel(&mut rng);
        let systems: Vec<RateConstraintSystem> =
            (0..3).map(|_| eval_theorem1(&small_chain(&mut rng, ch.input_size()), &ch).unwrap()).collect();
        let ws = weights_2d(37);
        let all = union_frontier(systems.iter(), &ws).unwrap();
        prop_assert_eq!(all.check_invariants(1e-9), Ok(()));
        for s in &systems {
            let one = union_frontier([s], &ws).unwrap();
            let rep = region_dominates(&all, &one, 1e-9).unwrap();
            prop_assert!(rep.b_exceeds.is_empty());
        }
    }
}
