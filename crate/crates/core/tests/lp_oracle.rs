mod common;

use assort_knap::linprog::{solve_lp, LinearProgram, LpStatus};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplex_matches_vertex_enumeration(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=4) {
        let lp = common::random_lp(&mut ChaCha8Rng::seed_from_u64(seed), n, m);
        let sol = solve_lp(&lp, 1e-9, 1e-9).unwrap();
        match common::vertex_enumeration(&lp) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some(best) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective_value - best).abs() <= 1e-8, "{} vs {}", sol.objective_value, best);
                prop_assert!(lp.max_violation(&sol.x) <= 1e-9);
            }
        }
    }

    #[test]
    fn duals_bound_the_optimum(seed in any::<u64>(), n in 1usize..=6, m in 1usize..=5) {
        let lp = common::random_lp(&mut ChaCha8Rng::seed_from_u64(seed), n, m);
        let sol = solve_lp(&lp, 1e-9, 1e-9).unwrap();
        if sol.is_optimal() {
            prop_assert!(sol.duals.iter().all(|&y| y >= -1e-12));
            let bound = lp.dual_bound(&sol.duals);
            prop_assert!(sol.objective_value <= bound + 1e-8);
            prop_assert!((bound - sol.objective_value).abs() <= 1e-7);
        }
    }

    #[test]
    fn scaling_the_objective_keeps_the_argmax(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=4, f in 0.1f64..10.0) {
        let lp = common::random_lp(&mut ChaCha8Rng::seed_from_u64(seed), n, m);
        let scaled = LinearProgram { objective: lp.objective.iter().map(|c| c * f).collect(), ..lp.clone() };
        let a = solve_lp(&lp, 1e-9, 1e-9).unwrap();
        let b = solve_lp(&scaled, 1e-9, 1e-9).unwrap();
        prop_assert_eq!(a.status, b.status);
        if a.is_optimal() {
            prop_assert!((a.objective_value * f - b.objective_value).abs() <= 1e-7 * (1.0 + f));
        }
    }
}

#[test]
fn unbounded_direction_is_reported() {
    let lp = LinearProgram {
        objective: vec![1.0, 1.0],
        constraint_matrix: vec![vec![1.0, -1.0]],
        constraint_rhs: vec![1.0],
        lower_bounds: vec![0.0, 0.0],
        upper_bounds: vec![f64::INFINITY, f64::INFINITY],
    };
    assert_eq!(solve_lp(&lp, 1e-9, 1e-9).unwrap().status, LpStatus::Unbounded);
}
