//! Direct re-check of a concrete allocation.
//!
//! Everything here is evaluated on the numbers of the solution itself:
//! products of failure probabilities instead of their logarithms, interval
//! overlap instead of big-M rows. It shares no code with the model builder.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::model::{compute_decomposition_set, AllocationSolution, Asil, Placement, ProblemInstance};
use crate::reliability::{check_pmhf, PmhfTargetTable};

use super::Family;

const TIME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub family: Family,
    pub entity: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", self.family, self.entity, self.message)
    }
}

/// Re-check `solution` against `instance`; reliability targets apply to the
/// decomposition set only.
pub fn validate_solution(instance: &ProblemInstance, solution: &AllocationSolution) -> Vec<Violation> {
    validate_solution_with(instance, solution, false)
}

/// As [`validate_solution`], optionally enforcing reliability on every task
/// with a target.
pub fn validate_solution_with(
    instance: &ProblemInstance,
    solution: &AllocationSolution,
    strict_reliability: bool,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |family: Family, entity: &str, message: String| {
        out.push(Violation {
            family,
            entity: entity.to_string(),
            message,
        })
    };

    let ecus: HashMap<&str, &crate::model::Ecu> =
        instance.ecus.iter().map(|e| (e.id.as_str(), e)).collect();
    let tasks: HashMap<&str, &crate::model::Task> =
        instance.tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let dset = compute_decomposition_set(instance);

    // Placements that reference known entities, with their WCET.
    let mut known: Vec<(&Placement, f64)> = Vec::new();
    for p in &solution.placements {
        let (Some(task), Some(_)) = (tasks.get(p.task.as_str()), ecus.get(p.ecu.as_str())) else {
            push(
                Family::Localization,
                &p.task,
                format!("placement references unknown task or ECU `{}`", p.ecu),
            );
            continue;
        };
        if !(p.start_ms.is_finite() && p.start_ms >= -TIME_TOL) {
            push(Family::StartTime, &p.task, format!("start time {} on {}", p.start_ms, p.ecu));
        }
        if p.asil == Asil::QM {
            push(Family::ReplicaAsilCompat, &p.task, "replica at QM".into());
            continue;
        }
        if !task.is_localized(&p.ecu) {
            push(Family::Localization, &p.task, format!("not allowed on {}", p.ecu));
            continue;
        }
        match task.wcet_ms.get(&p.ecu) {
            Some(w) => known.push((p, w.at(p.asil.value()))),
            None => push(Family::Localization, &p.task, format!("no WCET on {}", p.ecu)),
        }
    }

    let targets = PmhfTargetTable::default();
    for task in &instance.tasks {
        let mine: Vec<&Placement> = solution.placements.iter().filter(|p| p.task == task.id).collect();
        let decomposed = dset.contains(&task.id);
        if decomposed {
            let Some(scheme) = solution.schemes.get(&task.id) else {
                push(Family::SchemeSum, &task.id, "no decomposition scheme reported".into());
                continue;
            };
            if scheme.weighted_sum() != task.asil.value() as u32 {
                push(
                    Family::SchemeSum,
                    &task.id,
                    format!("scheme {scheme} does not sum to ASIL {}", task.asil),
                );
            }
            for h in 1..=4u8 {
                let placed = mine.iter().filter(|p| p.asil.value() == h).count();
                if placed != scheme.count(h) as usize {
                    push(
                        Family::SchemeMapping,
                        &task.id,
                        format!(
                            "{placed} replicas at ASIL {} but scheme {scheme} needs {}",
                            Asil::from_value(h).unwrap(),
                            scheme.count(h)
                        ),
                    );
                }
            }
            let mut seen = std::collections::HashSet::new();
            for p in &mine {
                if !seen.insert(p.ecu.as_str()) {
                    push(
                        Family::DistinctEcu,
                        &task.id,
                        format!("two replicas on {}", p.ecu),
                    );
                }
            }
        } else if mine.len() != 1 || mine[0].asil != task.asil {
            push(
                Family::SingleMapping,
                &task.id,
                format!("expected one placement at ASIL {}, found {}", task.asil, mine.len()),
            );
        }
        for p in &mine {
            if let Some(ecu) = ecus.get(p.ecu.as_str()) {
                if p.asil > ecu.asil {
                    let family = if decomposed {
                        Family::ReplicaAsilCompat
                    } else {
                        Family::AsilCompat
                    };
                    push(
                        family,
                        &task.id,
                        format!("ASIL {} replica on ASIL {} ECU {}", p.asil, ecu.asil, ecu.id),
                    );
                }
            }
        }
        let applies = (decomposed || strict_reliability) && targets.target(task.asil).is_some();
        if applies && !mine.is_empty() {
            let rates: Vec<f64> = mine
                .iter()
                .filter_map(|p| ecus.get(p.ecu.as_str()))
                .map(|e| e.failure_rate_per_hour)
                .collect();
            match check_pmhf(task.asil, &rates, instance.lifetime_hours) {
                Ok(check) if check.passed() => {}
                Ok(check) => push(Family::Reliability, &task.id, format!("{check:?}")),
                Err(e) => push(Family::Reliability, &task.id, e.to_string()),
            }
        }
    }

    let mut used: BTreeMap<&str, u64> = BTreeMap::new();
    for (p, _) in &known {
        let task = tasks[p.task.as_str()];
        *used.entry(p.ecu.as_str()).or_default() += task.memory.at(p.asil.value()).0;
    }
    for (ecu, mb) in used {
        let cap = ecus[ecu].memory.0;
        if mb > cap {
            push(Family::Memory, ecu, format!("{mb} MB hosted, capacity {cap} MB"));
        }
    }

    for edge in &instance.edges {
        let before: Vec<_> = known.iter().filter(|(p, _)| p.task == edge.from).collect();
        let after: Vec<_> = known.iter().filter(|(p, _)| p.task == edge.to).collect();
        for (pi, wi) in &before {
            for (pj, _) in &after {
                let remote = pi.ecu != pj.ecu;
                let ready = pi.start_ms + wi + if remote { edge.wcrt_ms } else { 0.0 };
                if pj.start_ms + TIME_TOL < ready {
                    let family = if remote {
                        Family::PrecedenceCrossEcu
                    } else {
                        Family::PrecedenceSameEcu
                    };
                    push(
                        family,
                        &edge.to,
                        format!(
                            "starts at {} on {} before {} is ready at {ready}",
                            pj.start_ms, pj.ecu, edge.from
                        ),
                    );
                }
            }
        }
    }

    // Per-ECU interval overlap, and the order relation it induces.
    let task_pos: HashMap<&str, usize> = instance
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.as_str(), i))
        .collect();
    let n = instance.tasks.len();
    let mut before_rel = vec![vec![false; n]; n];
    for e in &instance.edges {
        if let (Some(&a), Some(&b)) = (task_pos.get(e.from.as_str()), task_pos.get(e.to.as_str())) {
            before_rel[a][b] = true;
        }
    }
    for ecu in &instance.ecus {
        let mut on: Vec<&(&Placement, f64)> = known.iter().filter(|(p, _)| p.ecu == ecu.id).collect();
        on.sort_by(|a, b| a.0.start_ms.total_cmp(&b.0.start_ms));
        for (a_idx, (pa, wa)) in on.iter().map(|x| (x.0, x.1)).enumerate() {
            for (pb, _) in on.iter().skip(a_idx + 1).map(|x| (x.0, x.1)) {
                if pa.task == pb.task {
                    continue;
                }
                if pb.start_ms + TIME_TOL < pa.start_ms + wa {
                    push(
                        Family::NonOverlap,
                        &ecu.id,
                        format!(
                            "{} [{}, {}) overlaps {} starting at {}",
                            pa.task,
                            pa.start_ms,
                            pa.start_ms + wa,
                            pb.task,
                            pb.start_ms
                        ),
                    );
                } else {
                    before_rel[task_pos[pa.task.as_str()]][task_pos[pb.task.as_str()]] = true;
                }
            }
        }
    }
    if let Some(task) = find_cycle(&before_rel) {
        push(
            Family::OrderConsistency,
            &instance.tasks[task].id,
            "task pairs are ordered differently on different ECUs".into(),
        );
    }

    for (app, &reported) in &solution.makespan_per_app {
        let finish = known
            .iter()
            .filter(|(p, _)| tasks[p.task.as_str()].application == *app)
            .map(|(p, w)| p.start_ms + w)
            .fold(0.0, f64::max);
        if reported + TIME_TOL < finish {
            push(
                Family::Makespan,
                app,
                format!("reported makespan {reported} below last finish {finish}"),
            );
        }
    }
    out
}

fn find_cycle(rel: &[Vec<bool>]) -> Option<usize> {
    let n = rel.len();
    let mut indeg = vec![0usize; n];
    for row in rel {
        for (j, &r) in row.iter().enumerate() {
            if r {
                indeg[j] += 1;
            }
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for j in 0..n {
            if rel[v][j] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    stack.push(j);
                }
            }
        }
    }
    (seen < n).then(|| (0..n).find(|&i| indeg[i] > 0).unwrap())
}
