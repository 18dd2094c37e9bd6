//! Splits a [`MilpModel`] into the pieces the search works on.
//!
//! Integer variables belong to one task (mapping and scheme counts) or to
//! one unordered task pair (ordering). Constraints are sorted by the kinds
//! of variables they touch:
//!
//! * integer variables of one task: enumerated away into per-task options;
//! * integer variables of several tasks: tracked during the search;
//! * ordering variables without continuous ones: restrict the pair's
//!   admissible orderings;
//! * anything with continuous variables: a difference constraint once the
//!   integers are fixed.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::milp::{MilpModel, Sense, VarId, VarKind};

/// Largest number of placements tried for a task without scheme counts.
const MAX_PLACEMENTS: usize = 4;

#[derive(Debug, Clone)]
pub(crate) struct TaskOption {
    /// Nonzero integer values of the task's variables.
    pub values: Vec<(VarId, f64)>,
    /// Contribution to a linear objective.
    pub cost: f64,
    /// Contribution to each cross-task row.
    pub global: Vec<(usize, f64)>,
    /// `(ecu, wcet)` per hosted replica.
    pub replicas: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct GlobalRow {
    pub sense: Sense,
    pub rhs: f64,
    /// `rest_min[d]`: least total contribution of the tasks at search depth
    /// `d..`; `rest_max` likewise.
    pub rest_min: Vec<f64>,
    pub rest_max: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ObjectiveForm {
    /// Linear in the integer variables; option costs carry it.
    Linear,
    /// A single continuous variable, as a graph node.
    Continuous(usize),
}

/// A row with continuous terms, normalized to
/// `d[pos] - d[neg] + ints + thetas (sense) rhs` with unit coefficients.
#[derive(Debug, Clone)]
pub(crate) struct SchedRow {
    pub pos: Option<usize>,
    pub neg: Option<usize>,
    pub ints: Vec<(VarId, f64)>,
    pub thetas: Vec<(VarId, f64)>,
    pub pair: Option<usize>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Ordering-only row over one pair.
#[derive(Debug, Clone)]
pub(crate) struct LogicRow {
    pub terms: Vec<(VarId, f64)>,
    pub pair: usize,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct PairVars {
    pub first: usize,
    pub second: usize,
    /// `theta[first][second]`, `theta[second][first]`.
    pub vars: [VarId; 2],
}

#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub n_vars: usize,
    /// Search order over tasks; every task comes after its predecessors.
    pub order: Vec<usize>,
    pub options: Vec<Vec<TaskOption>>,
    pub globals: Vec<GlobalRow>,
    pub objective: ObjectiveForm,
    /// Continuous variable of each graph node; node 0 is the zero source.
    pub node_var: Vec<Option<VarId>>,
    pub node_lo: Vec<f64>,
    pub node_hi: Vec<f64>,
    pub sched: Vec<SchedRow>,
    pub logic: Vec<LogicRow>,
    pub pairs: Vec<PairVars>,
    pub tau_node: Vec<Vec<usize>>,
    /// Node of the focus makespan variable.
    pub phi_node: usize,
}

#[derive(Clone, Copy)]
enum Role {
    Task(usize),
    Pair(usize),
    Node(usize),
}

pub(crate) fn compile(model: &MilpModel) -> Result<Compiled> {
    let inst = &model.instance;
    let idx = &model.index;
    let n = inst.n_tasks();
    let nv = model.variables.len();

    let mut role: Vec<Option<Role>> = vec![None; nv];
    for i in 0..n {
        for per_ecu in &idx.x[i] {
            for v in per_ecu.iter().flatten() {
                role[v.0] = Some(Role::Task(i));
            }
        }
        if let Some(al) = idx.alpha[i] {
            for v in al {
                role[v.0] = Some(Role::Task(i));
            }
        }
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if let (Some(a), Some(b)) = (idx.theta[i][j], idx.theta[j][i]) {
                role[a.0] = Some(Role::Pair(pairs.len()));
                role[b.0] = Some(Role::Pair(pairs.len()));
                pairs.push(PairVars {
                    first: i,
                    second: j,
                    vars: [a, b],
                });
            }
        }
    }
    let mut node_var = vec![None];
    let mut node_lo = vec![0.0];
    let mut node_hi = vec![0.0];
    for (v, var) in model.variables.iter().enumerate() {
        match (var.kind, role[v]) {
            (VarKind::Continuous, _) => {
                if !var.lo.is_finite() {
                    return Err(Error::Domain(format!(
                        "continuous variable {} needs a finite lower bound",
                        var.name
                    )));
                }
                role[v] = Some(Role::Node(node_var.len()));
                node_var.push(Some(VarId(v)));
                node_lo.push(var.lo);
                node_hi.push(var.hi);
            }
            (_, None) => {
                return Err(Error::Domain(format!(
                    "integer variable {} is not a task or ordering variable",
                    var.name
                )))
            }
            _ => {}
        }
    }
    let node_of = |v: VarId| match role[v.0] {
        Some(Role::Node(k)) => k,
        _ => unreachable!("continuous variables are nodes"),
    };
    let tau_node: Vec<Vec<usize>> = idx
        .tau
        .iter()
        .map(|row| row.iter().map(|&v| node_of(v)).collect())
        .collect();
    let phi_node = node_of(idx.phi);

    let mut local: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut global_rows: Vec<usize> = Vec::new();
    let mut sched = Vec::new();
    let mut logic = Vec::new();
    for (c, con) in model.constraints.iter().enumerate() {
        let mut tasks = Vec::new();
        let mut pair: Option<usize> = None;
        let mut cont = Vec::new();
        let mut ints = Vec::new();
        let mut thetas = Vec::new();
        for &(v, coef) in &con.terms {
            if coef == 0.0 {
                continue;
            }
            match role[v.0].expect("every variable has a role") {
                Role::Task(i) => {
                    if !tasks.contains(&i) {
                        tasks.push(i);
                    }
                    ints.push((v, coef));
                }
                Role::Pair(p) => {
                    if pair.is_some_and(|q| q != p) {
                        return Err(Error::Domain(format!(
                            "constraint #{c} couples ordering variables of several pairs"
                        )));
                    }
                    pair = Some(p);
                    thetas.push((v, coef));
                }
                Role::Node(k) => cont.push((k, coef)),
            }
        }
        if !cont.is_empty() {
            let (pos, neg, scale) = difference_form(&cont).ok_or_else(|| {
                Error::Domain(format!("constraint #{c} is not a difference constraint"))
            })?;
            let (sense, rhs) = if scale < 0.0 {
                (flip(con.sense), con.rhs / scale)
            } else {
                (con.sense, con.rhs / scale)
            };
            sched.push(SchedRow {
                pos,
                neg,
                ints: ints.into_iter().map(|(v, a)| (v, a / scale)).collect(),
                thetas: thetas.into_iter().map(|(v, a)| (v, a / scale)).collect(),
                pair,
                sense,
                rhs,
            });
        } else if let Some(p) = pair {
            let mut terms = ints;
            terms.extend(thetas);
            logic.push(LogicRow {
                terms,
                pair: p,
                sense: con.sense,
                rhs: con.rhs,
            });
        } else if tasks.len() == 1 {
            local[tasks[0]].push(c);
        } else if tasks.is_empty() {
            if !holds(0.0, con.sense, con.rhs, 1e-9) {
                return Err(Error::Infeasible {
                    task: String::new(),
                    reason: format!("constant constraint #{c} [{}] is violated", con.tag),
                });
            }
        } else {
            global_rows.push(c);
        }
    }

    let objective_expr = &model.objectives[0].expr;
    let mut obj_coef = vec![0.0; nv];
    let objective = if objective_expr
        .terms
        .iter()
        .all(|&(v, _)| matches!(role[v.0], Some(Role::Task(_))))
    {
        for &(v, coef) in &objective_expr.terms {
            obj_coef[v.0] += coef;
        }
        ObjectiveForm::Linear
    } else {
        match objective_expr.terms.as_slice() {
            [(v, coef)] if *coef > 0.0 => ObjectiveForm::Continuous(node_of(*v)),
            _ => {
                return Err(Error::Domain(
                    "objective must be linear in mapping variables or a single continuous variable"
                        .into(),
                ))
            }
        }
    };

    let mut var_global: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for (g, &c) in global_rows.iter().enumerate() {
        for &(v, coef) in &model.constraints[c].terms {
            var_global.entry(v.0).or_default().push((g, coef));
        }
    }

    let mut options = Vec::with_capacity(n);
    for i in 0..n {
        let mut opts = enumerate_options(model, i, &local[i])?;
        for opt in &mut opts {
            let mut contrib: HashMap<usize, f64> = HashMap::new();
            for &(v, val) in &opt.values {
                opt.cost += obj_coef[v.0] * val;
                if let Some(list) = var_global.get(&v.0) {
                    for &(g, coef) in list {
                        *contrib.entry(g).or_default() += coef * val;
                    }
                }
            }
            let mut global: Vec<(usize, f64)> = contrib.into_iter().collect();
            global.sort_by_key(|&(g, _)| g);
            opt.global = global;
        }
        if opts.is_empty() {
            return Err(Error::Infeasible {
                task: inst.task_ids[i].clone(),
                reason: "no placement satisfies its own constraints".into(),
            });
        }
        options.push(opts);
    }

    let order = inst.topo.clone();
    let globals = global_rows
        .iter()
        .enumerate()
        .map(|(g, &c)| {
            let con = &model.constraints[c];
            let mut rest_min = vec![0.0; n + 1];
            let mut rest_max = vec![0.0; n + 1];
            for d in (0..n).rev() {
                let contributions = options[order[d]].iter().map(|o| {
                    o.global
                        .iter()
                        .find(|&&(h, _)| h == g)
                        .map_or(0.0, |&(_, x)| x)
                });
                let (lo, hi) = contributions.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                });
                rest_min[d] = rest_min[d + 1] + lo;
                rest_max[d] = rest_max[d + 1] + hi;
            }
            GlobalRow {
                sense: con.sense,
                rhs: con.rhs,
                rest_min,
                rest_max,
            }
        })
        .collect();

    Ok(Compiled {
        n_vars: nv,
        order,
        options,
        globals,
        objective,
        node_var,
        node_lo,
        node_hi,
        sched,
        logic,
        pairs,
        tau_node,
        phi_node,
    })
}

fn difference_form(cont: &[(usize, f64)]) -> Option<(Option<usize>, Option<usize>, f64)> {
    match cont {
        [(a, ca)] => Some(if *ca > 0.0 {
            (Some(*a), None, *ca)
        } else {
            (None, Some(*a), -*ca)
        }),
        [(a, ca), (b, cb)] if a != b && (ca + cb).abs() <= 1e-12 * ca.abs() => {
            if *ca > 0.0 {
                Some((Some(*a), Some(*b), *ca))
            } else {
                Some((Some(*b), Some(*a), *cb))
            }
        }
        _ => None,
    }
}

fn flip(sense: Sense) -> Sense {
    match sense {
        Sense::Le => Sense::Ge,
        Sense::Ge => Sense::Le,
        Sense::Eq => Sense::Eq,
    }
}

pub(crate) fn holds(lhs: f64, sense: Sense, rhs: f64, tol: f64) -> bool {
    match sense {
        Sense::Le => lhs <= rhs + tol,
        Sense::Ge => lhs >= rhs - tol,
        Sense::Eq => (lhs - rhs).abs() <= tol,
    }
}

/// Every assignment of task `i`'s integer variables that satisfies the rows
/// touching only that task.
fn enumerate_options(model: &MilpModel, i: usize, rows: &[usize]) -> Result<Vec<TaskOption>> {
    let inst = &model.instance;
    let idx = &model.index;
    let m = inst.n_ecus();
    let mut by_level: [Vec<(usize, VarId)>; 4] = Default::default();
    for k in 0..m {
        for h in 0..4 {
            if let Some(v) = idx.x[i][k][h] {
                by_level[h].push((k, v));
            }
        }
    }
    let mut value = vec![0.0; model.variables.len()];
    let check = |value: &[f64], subset: &[usize]| {
        subset.iter().all(|&c| {
            let con = &model.constraints[c];
            holds(con.lhs(value), con.sense, con.rhs, 1e-9)
        })
    };
    let replica = |v: VarId| -> (usize, u8) {
        for k in 0..m {
            for h in 0..4 {
                if idx.x[i][k][h] == Some(v) {
                    return (k, h as u8 + 1);
                }
            }
        }
        unreachable!("option values are mapping variables of the task")
    };
    let make = |chosen: &[VarId], alpha: Option<([VarId; 4], [u8; 4])>| {
        let mut values: Vec<(VarId, f64)> = chosen.iter().map(|&v| (v, 1.0)).collect();
        if let Some((vars, counts)) = alpha {
            for h in 0..4 {
                if counts[h] > 0 {
                    values.push((vars[h], counts[h] as f64));
                }
            }
        }
        let replicas = chosen
            .iter()
            .map(|&v| {
                let (k, h) = replica(v);
                (k, inst.wcet[i][k][h as usize - 1])
            })
            .collect();
        TaskOption {
            values,
            cost: 0.0,
            global: Vec::new(),
            replicas,
        }
    };

    let mut out = Vec::new();
    if let Some(alpha) = idx.alpha[i] {
        let alpha_only: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&c| {
                model.constraints[c]
                    .terms
                    .iter()
                    .all(|(v, _)| alpha.contains(v))
            })
            .collect();
        let hi = alpha.map(|v| model.var(v).hi.min(4.0) as u8);
        for a1 in 0..=hi[0] {
            for a2 in 0..=hi[1] {
                for a3 in 0..=hi[2] {
                    for a4 in 0..=hi[3] {
                        let counts = [a1, a2, a3, a4];
                        for h in 0..4 {
                            value[alpha[h].0] = counts[h] as f64;
                        }
                        if !check(&value, &alpha_only) {
                            continue;
                        }
                        let per_level: Vec<Vec<Vec<VarId>>> = (0..4)
                            .map(|h| {
                                combinations(by_level[h].len(), counts[h] as usize)
                                    .into_iter()
                                    .map(|c| c.into_iter().map(|p| by_level[h][p].1).collect())
                                    .collect()
                            })
                            .collect();
                        if per_level.iter().any(|l| l.is_empty()) {
                            continue;
                        }
                        for_each_product(&per_level, &mut |pick: &[&Vec<VarId>]| {
                            let chosen: Vec<VarId> = pick.iter().flat_map(|l| l.iter().copied()).collect();
                            for &v in &chosen {
                                value[v.0] = 1.0;
                            }
                            if check(&value, rows) {
                                out.push(make(&chosen, Some((alpha, counts))));
                            }
                            for &v in &chosen {
                                value[v.0] = 0.0;
                            }
                        });
                        for h in 0..4 {
                            value[alpha[h].0] = 0.0;
                        }
                    }
                }
            }
        }
    } else {
        let all: Vec<VarId> = by_level.iter().flatten().map(|&(_, v)| v).collect();
        for size in 0..=MAX_PLACEMENTS.min(all.len()) {
            for comb in combinations(all.len(), size) {
                let chosen: Vec<VarId> = comb.iter().map(|&p| all[p]).collect();
                for &v in &chosen {
                    value[v.0] = 1.0;
                }
                if check(&value, rows) {
                    out.push(make(&chosen, None));
                }
                for &v in &chosen {
                    value[v.0] = 0.0;
                }
            }
        }
    }
    Ok(out)
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(pos) = (0..k).rev().find(|&p| cur[p] < n - k + p) else {
            return out;
        };
        cur[pos] += 1;
        for q in pos + 1..k {
            cur[q] = cur[q - 1] + 1;
        }
    }
}

fn for_each_product<'a, T>(lists: &'a [Vec<T>], f: &mut dyn FnMut(&[&'a T])) {
    fn rec<'a, T>(lists: &'a [Vec<T>], acc: &mut Vec<&'a T>, f: &mut dyn FnMut(&[&'a T])) {
        match lists.split_first() {
            None => f(acc),
            Some((head, tail)) => {
                for item in head {
                    acc.push(item);
                    rec(tail, acc, f);
                    acc.pop();
                }
            }
        }
    }
    rec(lists, &mut Vec::new(), f);
}
