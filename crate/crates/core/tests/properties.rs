use modalshift::alns::{self, AlnsParams};
use modalshift::ingest::{parse_pool_str, synthetic_pool};
use modalshift::instgen::{self, GenSpec};
use modalshift::oracle::{finite_argmin, random_pareto_set};
use modalshift::policy::closed_form_tax;
use modalshift::{evaluate_objective, realized_budget, validate_solution, Instance, Policy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn policy() -> impl Strategy<Value = Policy> {
    (0.0..=1.0f64, 0.0..5.0f64).prop_map(|(s, t)| Policy::new(s, t).unwrap())
}

proptest! {
    #[test]
    fn budget_plus_cost_is_policy_free(d in 0.0..1e4f64, f in 0.0..1e4f64, p in policy(), phi in 0.01..5.0f64) {
        let total = evaluate_objective(d, f, p, phi) + realized_budget(d, f, p, phi);
        prop_assert!((total - (phi * d + f)).abs() <= 1e-9 * (phi * d + f).max(1.0));
    }

    #[test]
    fn closed_form_meets_the_budget(f_full in 0.0..1e3f64, d_full in 1e-3..1e3f64, phi in 0.01..5.0f64, frac in 0.0..=1.0f64) {
        let b = frac * f_full;
        let t = closed_form_tax(f_full, d_full, phi, b).unwrap();
        prop_assert!(t >= -1e-12);
        let got = realized_budget(d_full, f_full, Policy::new(1.0, t.max(0.0)).unwrap(), phi);
        prop_assert!((got - b).abs() <= 1e-9 * f_full.max(1.0));
    }

    #[test]
    fn closed_form_rejects_budgets_above_flow(f_full in 0.0..1e3f64, d_full in 1e-3..1e3f64, extra in 1e-3..10.0f64) {
        prop_assert!(closed_form_tax(f_full, d_full, 1.0, f_full + extra).is_err());
    }

    #[test]
    fn follower_picks_a_cheapest_alternative(k in 1usize..9, seed in any::<u64>(), p in policy()) {
        let fll = random_pareto_set(k, &mut ChaCha8Rng::seed_from_u64(seed));
        let pick = finite_argmin(&fll, p, 1.0);
        for &(d, f) in fll.alternatives() {
            prop_assert!(pick.cost <= evaluate_objective(d, f, p, 1.0) + 1e-12);
        }
    }

    #[test]
    fn pool_text_round_trip(n in 2usize..25, seed in any::<u64>()) {
        let pool = synthetic_pool(n, 30.0, seed);
        let text = pool.to_text();
        let back = parse_pool_str(&text).unwrap();
        prop_assert_eq!(back.to_text(), text);
        prop_assert_eq!(back.dist_matrix(), pool.dist_matrix());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_instances_round_trip(seed in any::<u64>(), n in 1usize..12) {
        let inst = instgen::generate(&GenSpec { n_requests: n, seed, ..Default::default() }).unwrap();
        let json = inst.to_json();
        let back = Instance::from_json(&json).unwrap();
        prop_assert_eq!(back.to_json(), json);
    }

    #[test]
    fn alns_returns_feasible_solutions(seed in any::<u64>(), n in 1usize..8, p in policy()) {
        let inst = instgen::generate(&GenSpec { n_requests: n, seed, ..Default::default() }).unwrap();
        let params = AlnsParams { max_iterations: 200, seed, check_invariants: true, ..Default::default() };
        let run = alns::solve(&inst, p, &params, None).unwrap();
        prop_assert!(validate_solution(&inst, &run.best_solution).unwrap().is_feasible());
        let cost = evaluate_objective(run.best_solution.d, run.best_solution.f, p, inst.phi());
        prop_assert!((cost - run.best_cost).abs() <= 1e-9 * cost.max(1.0));
    }

    #[test]
    fn scatteredness_scales_leg_times(seed in any::<u64>(), k in 0.0..=2.0f64) {
        let inst = instgen::generate(&GenSpec { n_requests: 3, seed, ..Default::default() }).unwrap();
        let scaled = instgen::apply_scatteredness(&inst, 1.0).unwrap();
        prop_assert_eq!(scaled.to_json(), inst.to_json());
        let scaled = instgen::apply_scatteredness(&inst, k).unwrap();
        let factor = k / 2.0 + 0.5;
        for (a, b) in inst.legs().iter().zip(scaled.legs()) {
            prop_assert!((b.travel_time - factor * a.travel_time).abs() <= 1e-9 * a.travel_time.max(1.0));
        }
    }
}
