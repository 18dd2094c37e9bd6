use asil_alloc::{
    brute_force_optimum, build_model, evolve, generate, solve, validate_solution, BuildOptions, GaParams,
    GenConfig, Limits, Priority, Scenario,
};
use proptest::prelude::*;

fn scenario() -> impl Strategy<Value = Scenario> {
    prop_oneof![
        Just(Scenario::DOnC),
        Just(Scenario::COnB),
        Just(Scenario::NoDecomp),
        Just(Scenario::Mixed),
    ]
}

fn config() -> impl Strategy<Value = GenConfig> {
    (scenario(), 0.0..=1.0f64, any::<bool>(), any::<bool>()).prop_map(|(scenario, p, decompose_all, binding_memory)| {
        GenConfig {
            scenario,
            edge_probability: p,
            decompose_all,
            binding_memory,
            ..Default::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solver_matches_oracle(n in 1usize..=4, m in 1usize..=3, seed in any::<u64>(), cfg in config(), latency in any::<bool>()) {
        let inst = generate(n, m, seed, &cfg).unwrap();
        let priority = if latency { Priority::LatencyFirst } else { Priority::CostFirst };
        let want = brute_force_optimum(&inst, priority).unwrap();
        let opts = BuildOptions { priority, ..Default::default() };
        let got = match build_model(&inst, &opts) {
            Ok(model) => solve(&model, &Limits::default()).unwrap().solution,
            Err(asil_alloc::Error::Infeasible { .. }) => None,
            Err(e) => panic!("{e}"),
        };
        if let Some(sol) = &got {
            let violations = validate_solution(&inst, sol);
            prop_assert!(violations.is_empty(), "{:?}", violations);
        }
        let key = |s: &asil_alloc::AllocationSolution| (s.cost_total, s.makespan_per_app["A1"]);
        prop_assert_eq!(want.as_ref().map(key), got.as_ref().map(key));
    }

    #[test]
    fn generator_is_deterministic(n in 1usize..=8, m in 1usize..=4, seed in any::<u64>(), cfg in config()) {
        let a = generate(n, m, seed, &cfg).unwrap().to_json_pretty();
        let b = generate(n, m, seed, &cfg).unwrap().to_json_pretty();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ga_never_beats_solver(n in 2usize..=5, seed in any::<u64>(), sc in scenario()) {
        let inst = generate(n, 4, seed, &GenConfig::scenario(sc)).unwrap();
        let Ok(model) = build_model(&inst, &BuildOptions::default()) else { return Ok(()) };
        let report = solve(&model, &Limits::default()).unwrap();
        let Some(sol) = report.solution else { return Ok(()) };
        let params = GaParams { generations: 30, population: 30, seed, ..Default::default() };
        let ga = evolve(&inst, &params).unwrap();
        prop_assert!(ga.best_fitness >= sol.cost_total);
        prop_assert!(ga.history.windows(2).all(|w| w[1].best <= w[0].best));
    }
}
