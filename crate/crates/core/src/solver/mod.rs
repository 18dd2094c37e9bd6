//! Exact branch-and-bound for [`MilpModel`]s.
//!
//! Each task's integer variables are enumerated into the placements that
//! satisfy the task's own rows; a depth-first search picks one placement per
//! task in dependency order, pruning with cost and makespan bounds and the
//! cross-task rows. Start times at a full mapping come from longest paths
//! over difference constraints. Objectives are optimized lexicographically.

mod compile;
mod schedule;
mod search;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::decomposition::DecompositionScheme;
use crate::error::{Error, Result};
use crate::milp::{MilpModel, ObjectiveKind};
use crate::model::{AllocationSolution, Asil, OrderingVar, Placement};

pub use schedule::resolve_schedule;

/// Values closer than this to an integer are taken as that integer.
const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Limits {
    pub time: Option<Duration>,
    /// Search nodes over all stages.
    pub nodes: Option<u64>,
}

impl Limits {
    pub fn with_time(time: Duration) -> Limits {
        Limits {
            time: Some(time),
            nodes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Optimal,
    Infeasible,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageObjective {
    pub kind: ObjectiveKind,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: Status,
    pub solution: Option<AllocationSolution>,
    /// Objective values of the completed stages, in priority order.
    pub objectives: Vec<StageObjective>,
    pub nodes: u64,
    #[serde(serialize_with = "secs")]
    pub wall_time: Duration,
    /// Full variable assignment behind `solution`.
    #[serde(skip)]
    pub values: Option<Vec<f64>>,
}

fn secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl SolveReport {
    pub fn objective(&self, kind: ObjectiveKind) -> Option<f64> {
        self.objectives.iter().find(|o| o.kind == kind).map(|o| o.value)
    }
}

/// Tolerance added to a stage optimum when it bounds the next stage.
pub fn lex_epsilon(kind: ObjectiveKind, optimum: f64) -> f64 {
    match kind {
        ObjectiveKind::Cost => 1e-9 * optimum.abs().max(1.0),
        ObjectiveKind::Makespan => 1e-6 * optimum.abs().max(1e-3),
    }
}

/// Solve `model` to lexicographic optimality within `limits`.
pub fn solve(model: &MilpModel, limits: &Limits) -> Result<SolveReport> {
    let start = Instant::now();
    let deadline = limits.time.map(|t| start + t);
    let mut report = SolveReport {
        status: Status::Infeasible,
        solution: None,
        objectives: Vec::new(),
        nodes: 0,
        wall_time: Duration::ZERO,
        values: None,
    };

    let mut stage_model = model.clone();
    for stage in 0..model.objectives.len() {
        let kind = stage_model.objectives[0].kind;
        let compiled = match compile::compile(&stage_model) {
            Ok(c) => c,
            Err(Error::Infeasible { .. }) if stage == 0 => {
                report.wall_time = start.elapsed();
                return Ok(report);
            }
            Err(e) => return Err(e),
        };
        let remaining = limits.nodes.map(|n| n.saturating_sub(report.nodes));
        let result = search::run(&compiled, &stage_model, deadline, remaining);
        report.nodes += result.nodes;
        match result.best {
            Some((value, values)) => {
                let problems = stage_model.violated(&values, 1e-6);
                if !problems.is_empty() {
                    return Err(Error::Domain(format!(
                        "solver produced an infeasible assignment: {}",
                        problems.join("; ")
                    )));
                }
                report.values = Some(values);
                if result.timed_out {
                    report.status = Status::Timeout;
                    break;
                }
                report.status = Status::Optimal;
                report.objectives.push(StageObjective { kind, value });
                if stage + 1 < model.objectives.len() {
                    stage_model = stage_model.with_lex_bound(value + lex_epsilon(kind, value));
                }
            }
            None => {
                // A later stage always contains the earlier optimum, so an
                // empty later stage means the limits were hit.
                report.status = if result.timed_out || stage > 0 {
                    Status::Timeout
                } else {
                    Status::Infeasible
                };
                break;
            }
        }
    }
    if let Some(values) = &report.values {
        report.solution = Some(extract_solution(model, values));
    }
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Read an [`AllocationSolution`] off a full assignment of `model`.
pub fn extract_solution(model: &MilpModel, values: &[f64]) -> AllocationSolution {
    let inst = &model.instance;
    let idx = &model.index;
    let on = |v: crate::milp::VarId| values[v.0] > 0.5;
    let mut placements = Vec::new();
    let mut schemes = BTreeMap::new();
    let mut cost_total = 0.0;
    for i in 0..inst.n_tasks() {
        let mut alpha = [0u8; 4];
        for k in 0..inst.n_ecus() {
            for h in 0..4 {
                let Some(v) = idx.x[i][k][h] else { continue };
                if !on(v) {
                    continue;
                }
                alpha[h] += 1;
                cost_total += inst.cost[i][k][h];
                placements.push(Placement {
                    task: inst.task_ids[i].clone(),
                    ecu: inst.ecu_ids[k].clone(),
                    asil: Asil::from_value(h as u8 + 1).expect("levels 1..=4"),
                    start_ms: snap(values[idx.tau[i][k].0]),
                });
            }
        }
        if let Some(al) = idx.alpha[i] {
            for h in 0..4 {
                alpha[h] = values[al[h].0].round() as u8;
            }
        }
        schemes.insert(inst.task_ids[i].clone(), DecompositionScheme::new(alpha));
    }
    let mut ordering = Vec::new();
    for i in 0..inst.n_tasks() {
        for j in 0..inst.n_tasks() {
            let Some(v) = idx.theta[i][j] else { continue };
            let shared = (0..inst.n_ecus()).any(|k| {
                let hosts = |t: usize| idx.x[t][k].iter().flatten().any(|&v| on(v));
                hosts(i) && hosts(j)
            });
            if shared {
                ordering.push(OrderingVar {
                    first: inst.task_ids[i].clone(),
                    second: inst.task_ids[j].clone(),
                    value: on(v) as u8,
                });
            }
        }
    }
    let mut makespan_per_app = BTreeMap::new();
    makespan_per_app.insert(inst.app_ids[idx.focus_app].clone(), snap(values[idx.phi.0]));
    AllocationSolution {
        placements,
        schemes,
        cost_total: snap(cost_total),
        makespan_per_app,
        ordering,
    }
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= INT_TOL {
        r
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{build_model, BuildOptions, Priority};
    use crate::testutil::single_task_instance;

    #[test]
    fn trivial_model_one_node() {
        let model = build_model(&single_task_instance(), &BuildOptions::default()).unwrap();
        let report = solve(&model, &Limits::default()).unwrap();
        assert_eq!(report.status, Status::Optimal);
        assert_eq!(report.objective(ObjectiveKind::Cost), Some(5.0));
        let sol = report.solution.unwrap();
        assert_eq!(sol.cost_total, 5.0);
        assert_eq!(sol.placements.len(), 1);
    }

    #[test]
    fn case_study_cost_first() {
        let model = build_model(&crate::case_study(), &BuildOptions::default()).unwrap();
        let report = solve(&model, &Limits::default()).unwrap();
        assert_eq!(report.status, Status::Optimal);
        assert_eq!(report.objective(ObjectiveKind::Cost), Some(98.0));
        let sol = report.solution.unwrap();
        assert!(crate::milp::validate_solution(&crate::case_study(), &sol).is_empty());
    }

    #[test]
    fn deterministic() {
        let opts = BuildOptions {
            priority: Priority::LatencyFirst,
            ..Default::default()
        };
        let model = build_model(&crate::testutil::two_independent_one_ecu(), &opts).unwrap();
        let a = solve(&model, &Limits::default()).unwrap();
        let b = solve(&model, &Limits::default()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.objective(ObjectiveKind::Makespan), Some(4.0));
    }

    #[test]
    fn node_limit_reports_timeout() {
        let model = build_model(&crate::case_study(), &BuildOptions::default()).unwrap();
        let report = solve(
            &model,
            &Limits {
                time: None,
                nodes: Some(3),
            },
        )
        .unwrap();
        assert_eq!(report.status, Status::Timeout);
    }

    fn chain(cross: bool) -> crate::model::ProblemInstance {
        let mut inst = crate::testutil::two_independent_one_ecu();
        inst.edges.push(crate::model::DependencyEdge {
            from: "T1".into(),
            to: "T2".into(),
            wcrt_ms: 4.0,
        });
        for t in &mut inst.tasks {
            t.wcet_ms.get_mut("E1").unwrap().b = 9.0;
        }
        if cross {
            let mut e2 = inst.ecus[0].clone();
            e2.id = "E2".into();
            inst.ecus.push(e2);
            let t2 = &mut inst.tasks[1];
            let w = t2.wcet_ms.remove("E1").unwrap();
            let c = t2.dev_cost.remove("E1").unwrap();
            t2.wcet_ms.insert("E2".into(), w);
            t2.dev_cost.insert("E2".into(), c);
        }
        inst
    }

    #[test]
    fn chain_start_times() {
        for (cross, start) in [(false, 9.0), (true, 13.0)] {
            let inst = chain(cross);
            let opts = BuildOptions {
                priority: Priority::LatencyFirst,
                ..Default::default()
            };
            let model = build_model(&inst, &opts).unwrap();
            let report = solve(&model, &Limits::default()).unwrap();
            let sol = report.solution.as_ref().unwrap();
            let t2 = sol.placements_of("T2").next().unwrap();
            assert_eq!(t2.start_ms, start);
            assert_eq!(sol.makespan_per_app["app"], start + 9.0);

            let values = report.values.unwrap();
            let again = resolve_schedule(&model, &values).unwrap().unwrap();
            let tau = model.index.tau[1][if cross { 1 } else { 0 }];
            assert_eq!(again[tau.0], start);
        }
    }
}
