//! ASIL-decomposition-aware allocation of software tasks to ECUs.
//!
//! An instance ([`ProblemInstance`]) lists ECUs, tasks with per-ECU and
//! per-ASIL execution times, costs and memory, and the task dependency
//! graph. [`build_model`] compiles it into a mixed-integer model covering
//! decomposition, mapping, memory, ASIL compatibility, reliability targets
//! and scheduling; [`solve`] finds the lexicographic optimum over
//! development cost and application makespan.
//!
//! ```
//! use asil_alloc::{build_model, case_study, solve, BuildOptions, Limits};
//!
//! let model = build_model(&case_study(), &BuildOptions::default()).unwrap();
//! let report = solve(&model, &Limits::default()).unwrap();
//! assert_eq!(report.solution.unwrap().cost_total, 98.0);
//! ```

pub mod decomposition;
pub mod error;
pub mod ga;
pub mod generate;
pub mod indexed;
pub mod milp;
pub mod model;
pub mod oracle;
pub mod reliability;
pub mod solver;
pub mod sweep;

#[cfg(test)]
pub(crate) mod testutil;

pub use decomposition::{enumerate_schemes, filter_compatible, DecompositionScheme};
pub use error::{Error, Result};
pub use ga::{evolve, fitness, GaChromosome, GaParams, GaResult};
pub use generate::{generate, GenConfig, Scenario};
pub use milp::{
    build_model, export_lp, export_stages, validate_solution, write_lp, BuildOptions, Family,
    LpStage, MilpModel, ObjectiveKind, Priority, Violation,
};
pub use model::{
    compute_decomposition_set, validate_instance, AllocationSolution, Asil, DependencyEdge,
    Diagnostic, Ecu, Megabytes, Placement, ProblemInstance, Task,
};
pub use oracle::{brute_force_optimum, brute_force_with, OracleOptions};
pub use reliability::{check_pmhf, pof, pof_decomposed, PmhfTargetTable};
pub use solver::{resolve_schedule, solve, Limits, SolveReport, Status};

const CASE_STUDY_JSON: &str = include_str!("../examples/case_study.json");

/// The six-task, four-ECU example system shipped with the crate.
pub fn case_study() -> ProblemInstance {
    ProblemInstance::from_json_str(CASE_STUDY_JSON).expect("bundled instance parses")
}

/// Text of the bundled example instance.
pub fn case_study_json() -> &'static str {
    CASE_STUDY_JSON
}
