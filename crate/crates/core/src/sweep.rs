//! Solve-time sweeps over generated instances.

use std::ops::RangeInclusive;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generate::{generate, GenConfig, Scenario};
use crate::milp::{build_model, BuildOptions, Priority};
use crate::solver::{solve, Limits, Status};

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub tasks: RangeInclusive<usize>,
    pub scenarios: Vec<Scenario>,
    pub n_ecus: usize,
    pub seeds: u64,
    /// Each instance is solved this many times and the fastest run kept.
    pub repeats: usize,
    pub priority: Priority,
    pub limits: Limits,
    pub base: GenConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            tasks: 3..=6,
            scenarios: vec![Scenario::DOnC, Scenario::COnB, Scenario::NoDecomp],
            n_ecus: 4,
            seeds: 20,
            repeats: 1,
            priority: Priority::CostFirst,
            limits: Limits::default(),
            base: GenConfig::default(),
        }
    }
}

/// One solve of one generated instance.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSample {
    pub n_tasks: usize,
    pub scenario: Scenario,
    pub seed: u64,
    pub solve_ms: f64,
    pub nodes: u64,
    pub status: Status,
}

/// Medians over the seeds of one `(n_tasks, scenario)` point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n_tasks: usize,
    pub scenario: Scenario,
    pub solve_ms: f64,
    pub nodes: f64,
    pub seeds: u64,
    pub timeouts: usize,
}

pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepSample>> {
    if config.tasks.is_empty() || *config.tasks.start() == 0 {
        return Err(Error::InvalidParameter("task range is empty".into()));
    }
    if config.scenarios.is_empty() || config.seeds == 0 || config.repeats == 0 {
        return Err(Error::InvalidParameter("need a scenario, a seed and a repeat".into()));
    }
    let opts = BuildOptions {
        priority: config.priority,
        ..Default::default()
    };
    let mut out = Vec::new();
    let mut models = Vec::new();
    for &scenario in &config.scenarios {
        let gen = GenConfig {
            scenario,
            ..config.base.clone()
        };
        for n in config.tasks.clone() {
            for seed in 0..config.seeds {
                let instance = generate(n, config.n_ecus, seed, &gen)?;
                out.push(SweepSample {
                    n_tasks: n,
                    scenario,
                    seed,
                    solve_ms: 0.0,
                    nodes: 0,
                    status: Status::Infeasible,
                });
                match build_model(&instance, &opts) {
                    Ok(m) => models.push((out.len() - 1, m)),
                    Err(Error::Infeasible { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    // Repeats sweep over all instances in turn so that a slow spell of the
    // machine spreads over every point instead of hitting one.
    let mut fastest = vec![Duration::MAX; out.len()];
    for _ in 0..config.repeats {
        for (slot, model) in &models {
            let report = solve(model, &config.limits)?;
            fastest[*slot] = fastest[*slot].min(report.wall_time);
            out[*slot].nodes = report.nodes;
            out[*slot].status = report.status;
        }
    }
    for (slot, _) in &models {
        out[*slot].solve_ms = fastest[*slot].as_secs_f64() * 1e3;
    }
    Ok(out)
}

pub fn summarize(samples: &[SweepSample]) -> Vec<SweepRow> {
    let mut keys: Vec<(Scenario, usize)> = Vec::new();
    for s in samples {
        if !keys.contains(&(s.scenario, s.n_tasks)) {
            keys.push((s.scenario, s.n_tasks));
        }
    }
    keys.into_iter()
        .map(|(scenario, n)| {
            let mine: Vec<&SweepSample> = samples
                .iter()
                .filter(|s| s.scenario == scenario && s.n_tasks == n)
                .collect();
            SweepRow {
                n_tasks: n,
                scenario,
                solve_ms: median(mine.iter().map(|s| s.solve_ms).collect()),
                nodes: median(mine.iter().map(|s| s.nodes as f64).collect()),
                seeds: mine.len() as u64,
                timeouts: mine.iter().filter(|s| s.status == Status::Timeout).count(),
            }
        })
        .collect()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}
