use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::indexed::IndexedInstance;
use crate::model::{Asil, ProblemInstance};
use crate::reliability::{log_pof_coefficient, pof, PmhfTargetTable};

use super::{
    Family, LinearConstraint, LinearExpr, MilpModel, MilpVariable, ModelIndex, Objective,
    ObjectiveKind, Priority, Sense, VarId, VarKind,
};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildOptions {
    /// Application whose makespan is minimized; the first one when `None`.
    pub focus_app: Option<String>,
    pub priority: Priority,
    /// Enforce the reliability target on every task with a target, not only
    /// on decomposed ones.
    pub strict_reliability: bool,
}

/// Compile an instance into a [`MilpModel`].
pub fn build_model(instance: &ProblemInstance, options: &BuildOptions) -> Result<MilpModel> {
    let indexed = Arc::new(IndexedInstance::new(instance)?);
    build_indexed(indexed, options)
}

pub(crate) fn build_indexed(shared: Arc<IndexedInstance>, options: &BuildOptions) -> Result<MilpModel> {
    let inst: &IndexedInstance = &shared;
    let focus_app = match &options.focus_app {
        Some(id) => inst
            .app_index(id)
            .ok_or_else(|| Error::UnknownApplication(id.clone()))?,
        None if inst.app_ids.is_empty() => {
            return Err(Error::UnknownApplication("<none declared>".into()))
        }
        None => 0,
    };
    check_provably_infeasible(inst, options.strict_reliability)?;

    let mut b = Builder::new(inst);
    let n = inst.n_tasks();
    let m = inst.n_ecus();

    // Mapping variables: one per localized (task, ECU, level) where the level
    // is reachable for the task.
    let mut x = vec![vec![[None; 4]; m]; n];
    for i in 0..n {
        for k in 0..m {
            if !inst.loc[i][k] {
                continue;
            }
            for h in task_levels(inst, i) {
                let name = format!("x_{}_{}_{}", b.task_name[i], b.ecu_name[k], h);
                x[i][k][h as usize - 1] = Some(b.var(name, VarKind::Binary, 0.0, 1.0));
            }
        }
    }
    let mut alpha = vec![None; n];
    for i in 0..n {
        if inst.decomposed[i] {
            let ids = [1u8, 2, 3, 4].map(|h| {
                let name = format!("alpha_{}_{}", b.task_name[i], h);
                b.var(name, VarKind::Integer, 0.0, 4.0)
            });
            alpha[i] = Some(ids);
        }
    }
    let tau: Vec<Vec<VarId>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|k| {
                    let name = format!("tau_{}_{}", b.task_name[i], b.ecu_name[k]);
                    b.var(name, VarKind::Continuous, 0.0, f64::INFINITY)
                })
                .collect()
        })
        .collect();
    let mut theta = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let name = format!("theta_{}_{}", b.task_name[i], b.task_name[j]);
                theta[i][j] = Some(b.var(name, VarKind::Binary, 0.0, 1.0));
            }
        }
    }
    let phi_name = format!("phi_{}", sanitize(&inst.app_ids[focus_app]));
    let phi = b.var(phi_name, VarKind::Continuous, 0.0, f64::INFINITY);

    let big_m = big_m(inst);
    let xs = |i: usize, k: usize| -> Vec<(u8, VarId)> {
        (1..=4u8)
            .filter_map(|h| x[i][k][h as usize - 1].map(|v| (h, v)))
            .collect()
    };
    // Mapping variables that are not fixed to zero by level compatibility.
    let live = |i: usize, k: usize| -> Vec<(u8, VarId)> {
        xs(i, k)
            .into_iter()
            .filter(|&(h, _)| h <= inst.ecu_level[k])
            .collect()
    };

    for i in 0..n {
        let level = inst.task_level[i];
        if let Some(al) = alpha[i] {
            b.push(
                al.iter().enumerate().map(|(h, &v)| (v, h as f64 + 1.0)).collect(),
                Sense::Eq,
                level as f64,
                Family::SchemeSum,
            );
            for h in 1..=4u8 {
                let mut terms: Vec<(VarId, f64)> = (0..m)
                    .filter_map(|k| x[i][k][h as usize - 1].map(|v| (v, 1.0)))
                    .collect();
                terms.push((al[h as usize - 1], -1.0));
                b.push(terms, Sense::Eq, 0.0, Family::SchemeMapping);
            }
            for k in 0..m {
                let terms: Vec<_> = xs(i, k).into_iter().map(|(_, v)| (v, 1.0)).collect();
                if terms.len() > 1 {
                    b.push(terms, Sense::Le, 1.0, Family::DistinctEcu);
                }
            }
        } else {
            let terms: Vec<_> = (0..m)
                .filter_map(|k| x[i][k][level as usize - 1].map(|v| (v, 1.0)))
                .collect();
            b.push(terms, Sense::Eq, 1.0, Family::SingleMapping);
        }
        for k in 0..m {
            for (h, v) in xs(i, k) {
                if h > inst.ecu_level[k] {
                    let family = if inst.decomposed[i] {
                        Family::ReplicaAsilCompat
                    } else {
                        Family::AsilCompat
                    };
                    b.push(vec![(v, h as f64)], Sense::Le, inst.ecu_level[k] as f64, family);
                }
            }
        }
    }

    for k in 0..m {
        let terms: Vec<_> = (0..n)
            .flat_map(|i| {
                xs(i, k)
                    .into_iter()
                    .map(move |(h, v)| (v, inst.memory[i][h as usize - 1] as f64))
            })
            .collect();
        if !terms.is_empty() {
            b.push(terms, Sense::Le, inst.ecu_memory[k] as f64, Family::Memory);
        }
    }

    // Precedence, linearized per pair of replica placements:
    // tau_j,m >= tau_i,k + wcet + [k != m] wcrt - M (2 - x_i,k,h1 - x_j,m,h2).
    for i in 0..n {
        for j in 0..n {
            let Some(wcrt) = inst.wcrt[i][j] else { continue };
            for k in 0..m {
                for (h1, xi) in live(i, k) {
                    for mm in 0..m {
                        for (_, xj) in live(j, mm) {
                            let delay = inst.wcet[i][k][h1 as usize - 1]
                                + if k != mm { wcrt } else { 0.0 };
                            let family = if k == mm {
                                Family::PrecedenceSameEcu
                            } else {
                                Family::PrecedenceCrossEcu
                            };
                            b.push(
                                vec![
                                    (tau[j][mm], 1.0),
                                    (tau[i][k], -1.0),
                                    (xi, -big_m),
                                    (xj, -big_m),
                                ],
                                Sense::Ge,
                                delay - 2.0 * big_m,
                                family,
                            );
                        }
                    }
                }
            }
        }
    }

    // Big-M disjunction for pairs without a direct dependency.
    for i in 0..n {
        for j in 0..n {
            if i == j || inst.wcrt[i][j].is_some() {
                continue;
            }
            let th = theta[i][j].expect("theta exists for i != j");
            for k in 0..m {
                let mut terms = vec![(tau[i][k], 1.0), (tau[j][k], -1.0)];
                terms.extend(
                    live(j, k)
                        .into_iter()
                        .map(|(h, v)| (v, -inst.wcet[j][k][h as usize - 1])),
                );
                let mut lower = terms.clone();
                lower.push((th, big_m));
                b.push(lower, Sense::Ge, 0.0, Family::OrderLower);
                let mut upper = terms;
                upper.push((th, big_m));
                b.push(upper, Sense::Le, big_m, Family::OrderUpper);
            }
        }
    }

    for i in 0..n {
        for j in (i + 1)..n {
            let (tij, tji) = (theta[i][j].unwrap(), theta[j][i].unwrap());
            for k in 0..m {
                for (_, xi) in live(i, k) {
                    for (_, xj) in live(j, k) {
                        b.push(
                            vec![(xi, 1.0), (xj, 1.0), (tij, 1.0), (tji, 1.0)],
                            Sense::Le,
                            3.0,
                            Family::OrderExclusive,
                        );
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if inst.wcrt[i][j].is_some() {
                b.push(vec![(theta[i][j].unwrap(), 1.0)], Sense::Eq, 1.0, Family::OrderFixed);
            }
        }
    }

    for i in 0..n {
        if inst.app_of[i] != focus_app {
            continue;
        }
        for k in 0..m {
            let mut terms = vec![(phi, 1.0), (tau[i][k], -1.0)];
            terms.extend(
                live(i, k)
                    .into_iter()
                    .map(|(h, v)| (v, -inst.wcet[i][k][h as usize - 1])),
            );
            b.push(terms, Sense::Ge, 0.0, Family::Makespan);
        }
    }

    let targets = PmhfTargetTable::default();
    for i in 0..n {
        if !inst.reliability_applies(i, options.strict_reliability) {
            continue;
        }
        let asil = Asil::from_value(inst.task_level[i]).expect("validated level");
        let rhs = targets
            .log_budget(asil, inst.lifetime)
            .expect("reliability_applies implies a target");
        let mut terms = Vec::new();
        for k in 0..m {
            let coef = log_pof_coefficient(inst.ecu_rate[k], inst.lifetime)?;
            terms.extend(xs(i, k).into_iter().map(|(_, v)| (v, coef)));
        }
        b.push(terms, Sense::Le, rhs, Family::Reliability);
    }

    let cost_expr = LinearExpr {
        terms: (0..n)
            .flat_map(|i| (0..m).map(move |k| (i, k)))
            .flat_map(|(i, k)| {
                xs(i, k)
                    .into_iter()
                    .map(move |(h, v)| (v, inst.cost[i][k][h as usize - 1]))
            })
            .collect(),
    };
    let makespan_expr = LinearExpr {
        terms: vec![(phi, 1.0)],
    };
    let objectives = options
        .priority
        .order()
        .into_iter()
        .map(|kind| Objective {
            kind,
            expr: match kind {
                ObjectiveKind::Cost => cost_expr.clone(),
                ObjectiveKind::Makespan => makespan_expr.clone(),
            },
        })
        .collect();

    Ok(MilpModel {
        variables: b.variables,
        constraints: b.constraints,
        objectives,
        big_m,
        priority: options.priority,
        strict_reliability: options.strict_reliability,
        index: ModelIndex {
            x,
            alpha,
            tau,
            theta,
            phi,
            focus_app,
        },
        instance: Arc::clone(&shared),
    })
}

/// Levels task `i` may be mapped at.
fn task_levels(inst: &IndexedInstance, i: usize) -> Vec<u8> {
    if inst.decomposed[i] {
        vec![1, 2, 3, 4]
    } else {
        vec![inst.task_level[i]]
    }
}

/// Sum over tasks of the largest WCET, plus all WCRTs, plus one.
pub(crate) fn big_m(inst: &IndexedInstance) -> f64 {
    let wcet: f64 = (0..inst.n_tasks())
        .map(|i| {
            inst.wcet[i]
                .iter()
                .flat_map(|levels| levels.iter().copied())
                .fold(0.0, f64::max)
        })
        .sum();
    let wcrt: f64 = inst.source.edges.iter().map(|e| e.wcrt_ms).sum();
    wcet + wcrt + 1.0
}

/// Reject instances where some task cannot be placed at all.
fn check_provably_infeasible(inst: &IndexedInstance, strict: bool) -> Result<()> {
    let targets = PmhfTargetTable::default();
    for i in 0..inst.n_tasks() {
        let task = &inst.task_ids[i];
        let schemes = inst.candidate_schemes(i);
        let levels = inst.localized_levels(i);
        let compatible = schemes.iter().any(|s| {
            if inst.decomposed[i] {
                true
            } else {
                levels.iter().any(|&l| l >= s.max_level())
            }
        });
        if !compatible {
            let reason = if levels.is_empty() {
                "no ECU satisfies its localization".to_string()
            } else {
                format!(
                    "no ASIL-compatible ECU or decomposition for ASIL {}",
                    Asil::from_value(inst.task_level[i]).unwrap()
                )
            };
            return Err(Error::Infeasible {
                task: task.clone(),
                reason,
            });
        }
        if !inst.reliability_applies(i, strict) {
            continue;
        }
        let asil = Asil::from_value(inst.task_level[i]).unwrap();
        let budget = targets.budget(asil, inst.lifetime).unwrap();
        // Lowest achievable failure probability per scheme: its replicas on the
        // most reliable localized ECUs, ignoring levels.
        let mut pofs: Vec<f64> = (0..inst.n_ecus())
            .filter(|&k| inst.loc[i][k])
            .map(|k| pof(inst.ecu_rate[k], inst.lifetime))
            .collect::<Result<_>>()?;
        pofs.sort_by(|a, b| a.total_cmp(b));
        let reachable = schemes.iter().any(|s| {
            let r = s.replica_count();
            r <= pofs.len() && pofs[..r].iter().product::<f64>() <= budget
        });
        if !reachable {
            return Err(Error::Infeasible {
                task: task.clone(),
                reason: "reliability target unreachable with the available ECUs".into(),
            });
        }
    }
    Ok(())
}

struct Builder {
    variables: Vec<MilpVariable>,
    constraints: Vec<LinearConstraint>,
    task_name: Vec<String>,
    ecu_name: Vec<String>,
}

impl Builder {
    fn new(inst: &IndexedInstance) -> Self {
        let mut task_name: Vec<String> = inst.task_ids.iter().map(|s| sanitize(s)).collect();
        let mut ecu_name: Vec<String> = inst.ecu_ids.iter().map(|s| sanitize(s)).collect();
        // Sanitizing may merge distinct ids; fall back to positions then.
        let unique = |names: &[String]| names.iter().collect::<HashSet<_>>().len() == names.len();
        if !unique(&task_name) {
            task_name = (0..task_name.len()).map(|i| format!("t{i}")).collect();
        }
        if !unique(&ecu_name) {
            ecu_name = (0..ecu_name.len()).map(|k| format!("e{k}")).collect();
        }
        Builder {
            variables: Vec::new(),
            constraints: Vec::new(),
            task_name,
            ecu_name,
        }
    }

    fn var(&mut self, name: String, kind: VarKind, lo: f64, hi: f64) -> VarId {
        self.variables.push(MilpVariable { name, kind, lo, hi });
        VarId(self.variables.len() - 1)
    }

    fn push(&mut self, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64, tag: Family) {
        debug_assert!(terms.iter().all(|(_, c)| c.is_finite()) && rhs.is_finite());
        self.constraints.push(LinearConstraint {
            terms,
            sense,
            rhs,
            tag,
        });
    }
}

/// Restrict a name to characters every LP reader accepts.
pub(crate) fn sanitize(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_study;
    use crate::milp::Family;
    use crate::testutil::{single_task_instance, two_independent_one_ecu};

    #[test]
    fn case_study_dimensions() {
        let model = build_model(&case_study(), &BuildOptions::default()).unwrap();
        let x_count = model
            .index
            .x
            .iter()
            .flatten()
            .flatten()
            .filter(|v| v.is_some())
            .count();
        assert_eq!(x_count, 6 * 4 * 4);
        // Levels above the ECU's ASIL are pinned to zero by a compat row.
        assert_eq!(model.count_tag(Family::ReplicaAsilCompat), 6 * (2 * 1 + 2 * 2));
        assert_eq!(model.index.alpha.iter().filter(|a| a.is_some()).count(), 6);
        assert_eq!(model.count_tag(Family::SchemeSum), 6);
        assert_eq!(model.count_tag(Family::SingleMapping), 0);
        assert_eq!(model.count_tag(Family::Reliability), 6);
        assert_eq!(model.objectives[0].kind, ObjectiveKind::Cost);
    }

    #[test]
    fn every_variable_is_referenced() {
        let model = build_model(&case_study(), &BuildOptions::default()).unwrap();
        let mut used = vec![false; model.variables.len()];
        for c in &model.constraints {
            for (v, _) in &c.terms {
                used[v.0] = true;
            }
        }
        for o in &model.objectives {
            for (v, _) in &o.expr.terms {
                used[v.0] = true;
            }
        }
        let unused: Vec<_> = used
            .iter()
            .enumerate()
            .filter(|(_, u)| !**u)
            .map(|(v, _)| model.variables[v].name.clone())
            .collect();
        assert!(unused.is_empty(), "{unused:?}");
    }

    #[test]
    fn variable_bounds() {
        let model = build_model(&case_study(), &BuildOptions::default()).unwrap();
        for v in &model.variables {
            match v.kind {
                VarKind::Binary => assert_eq!((v.lo, v.hi), (0.0, 1.0)),
                VarKind::Continuous => assert_eq!(v.lo, 0.0),
                VarKind::Integer => assert!(v.lo == 0.0 && v.hi == 4.0),
            }
        }
    }

    #[test]
    fn degenerate_single_task() {
        let model = build_model(&single_task_instance(), &BuildOptions::default()).unwrap();
        assert_eq!(model.index.x.iter().flatten().flatten().flatten().count(), 1);
        let mut tags: Vec<Family> = model.constraints.iter().map(|c| c.tag).collect();
        tags.sort();
        tags.dedup();
        assert_eq!(tags, vec![Family::SingleMapping, Family::Memory, Family::Makespan]);
    }

    #[test]
    fn co_located_pair_gets_exclusive_ordering() {
        let model = build_model(&two_independent_one_ecu(), &BuildOptions::default()).unwrap();
        assert!(model.index.theta[0][1].is_some() && model.index.theta[1][0].is_some());
        let excl: Vec<_> = model
            .constraints
            .iter()
            .filter(|c| c.tag == Family::OrderExclusive)
            .collect();
        assert_eq!(excl.len(), 1);
        assert_eq!(excl[0].rhs, 3.0);
        assert_eq!(excl[0].terms.len(), 4);
        assert_eq!(model.count_tag(Family::OrderLower), 2);
        assert_eq!(model.count_tag(Family::OrderUpper), 2);
    }

    #[test]
    fn families_present_in_case_study() {
        let model = build_model(&case_study(), &BuildOptions::default()).unwrap();
        for f in [
            Family::SchemeSum,
            Family::SchemeMapping,
            Family::DistinctEcu,
            Family::Memory,
            Family::ReplicaAsilCompat,
            Family::PrecedenceSameEcu,
            Family::PrecedenceCrossEcu,
            Family::OrderLower,
            Family::OrderUpper,
            Family::OrderExclusive,
            Family::OrderFixed,
            Family::Makespan,
            Family::Reliability,
        ] {
            assert!(model.count_tag(f) > 0, "{f} missing");
        }
    }

    #[test]
    fn big_m_is_sum_of_worst_cases() {
        let inst = IndexedInstance::new(&case_study()).unwrap();
        let wcet_max: f64 = [14.0, 16.0, 19.0, 20.0, 22.0, 14.0].iter().sum();
        let wcrt: f64 = case_study().edges.iter().map(|e| e.wcrt_ms).sum();
        assert_eq!(big_m(&inst), wcet_max + wcrt + 1.0);
    }

    #[test]
    fn unknown_focus_app() {
        let opts = BuildOptions {
            focus_app: Some("nope".into()),
            ..Default::default()
        };
        assert!(matches!(
            build_model(&case_study(), &opts),
            Err(Error::UnknownApplication(_))
        ));
    }

    #[test]
    fn infeasible_task_is_named() {
        let mut inst = case_study();
        for e in &mut inst.ecus {
            e.asil = Asil::A;
        }
        inst.ecus.truncate(1);
        for t in &mut inst.tasks {
            t.localization = None;
            t.wcet_ms.retain(|k, _| k == "E1");
            t.dev_cost.retain(|k, _| k == "E1");
        }
        match build_model(&inst, &BuildOptions::default()) {
            Err(Error::Infeasible { task, .. }) => assert_eq!(task, "T1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reliability_unreachable_is_infeasible() {
        let mut inst = case_study();
        for e in &mut inst.ecus {
            e.failure_rate_per_hour = 1e-3;
        }
        assert!(matches!(
            build_model(&inst, &BuildOptions::default()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn sanitize_names() {
        assert_eq!(sanitize("T-1.a"), "T_1_a");
        assert_eq!(sanitize(""), "_");
    }
}
