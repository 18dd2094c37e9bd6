//! Fixtures shared by the criterion benchmarks.

use asil_alloc::{build_model, generate, BuildOptions, GenConfig, MilpModel, Priority, ProblemInstance, Scenario};

pub fn case_study_model(priority: Priority) -> MilpModel {
    let options = BuildOptions {
        priority,
        ..Default::default()
    };
    build_model(&asil_alloc::case_study(), &options).expect("bundled instance builds")
}

pub fn generated(n_tasks: usize, scenario: Scenario, seed: u64) -> ProblemInstance {
    generate(n_tasks, 4, seed, &GenConfig::scenario(scenario)).expect("valid generator input")
}

pub fn generated_model(n_tasks: usize, scenario: Scenario, seed: u64) -> MilpModel {
    build_model(&generated(n_tasks, scenario, seed), &BuildOptions::default()).expect("generated instances build")
}
