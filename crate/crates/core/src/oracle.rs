//! Exhaustive reference optimum for small instances.
//!
//! Works on the instance itself: decomposition schemes, injective replica
//! placements, product-form reliability, memory sums, and list scheduling
//! along every global task order consistent with the dependencies. Nothing
//! here touches the mixed-integer model.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::decomposition::{enumerate_schemes, DecompositionScheme};
use crate::error::{Error, Result};
use crate::milp::Priority;
use crate::model::{
    compute_decomposition_set, validate_instance, AllocationSolution, Asil, Placement,
    ProblemInstance, Severity,
};
use crate::reliability::{check_pmhf, PmhfTargetTable};

/// Largest search space enumerated without an explicit override.
pub const DEFAULT_MAX_SPACE: f64 = 1e7;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    /// Refuse instances whose estimated space exceeds this.
    pub max_space: f64,
    /// Application whose makespan is minimized; the first one when `None`.
    pub focus_app: Option<String>,
    pub strict_reliability: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            max_space: DEFAULT_MAX_SPACE,
            focus_app: None,
            strict_reliability: false,
        }
    }
}

/// Lexicographic optimum by enumeration, or `None` if the instance has no
/// feasible allocation.
pub fn brute_force_optimum(
    instance: &ProblemInstance,
    priority: Priority,
) -> Result<Option<AllocationSolution>> {
    brute_force_with(instance, priority, &OracleOptions::default())
}

/// Number of (placement choice, global order) combinations the oracle
/// would enumerate.
pub fn search_space(instance: &ProblemInstance, strict_reliability: bool) -> Result<f64> {
    let prep = Prepared::new(instance, strict_reliability)?;
    Ok(prep.space())
}

pub fn brute_force_with(
    instance: &ProblemInstance,
    priority: Priority,
    options: &OracleOptions,
) -> Result<Option<AllocationSolution>> {
    let prep = Prepared::new(instance, options.strict_reliability)?;
    let estimate = prep.space();
    if !(estimate <= options.max_space) {
        return Err(Error::SearchSpaceTooLarge {
            estimate,
            limit: options.max_space,
        });
    }
    let focus = match &options.focus_app {
        Some(app) if instance.applications.contains(app) => app.clone(),
        Some(app) => return Err(Error::UnknownApplication(app.clone())),
        None => match instance.applications.first() {
            Some(app) => app.clone(),
            None => return Err(Error::UnknownApplication("<none declared>".into())),
        },
    };
    if prep.options.iter().any(|o| o.is_empty()) {
        return Ok(None);
    }

    let n = instance.tasks.len();
    let m = instance.ecus.len();
    let in_focus: Vec<bool> = instance.tasks.iter().map(|t| t.application == focus).collect();
    let min_cost: Vec<f64> = prep
        .options
        .iter()
        .map(|opts| opts.iter().map(|o| o.cost).fold(f64::INFINITY, f64::min))
        .collect();

    let mut walk = Walk {
        prep: &prep,
        instance,
        cost_first: priority == Priority::CostFirst,
        in_focus,
        min_cost,
        order: Vec::new(),
        rest_cost: Vec::new(),
        chosen: vec![usize::MAX; n],
        finish: vec![Vec::new(); n],
        starts: vec![Vec::new(); n],
        ecu_free: vec![0.0; m],
        memory: vec![0; m],
        best: None,
    };
    for order in prep.linear_extensions() {
        walk.rest_cost = vec![0.0; n + 1];
        for d in (0..n).rev() {
            walk.rest_cost[d] = walk.rest_cost[d + 1] + walk.min_cost[order[d]];
        }
        walk.order = order;
        walk.dfs(0, 0.0, 0.0);
    }
    Ok(walk.best.map(|b| b.solution))
}

#[derive(Debug, Clone)]
struct Choice {
    scheme: DecompositionScheme,
    /// `(ecu, level)` per replica.
    replicas: Vec<(usize, u8)>,
    cost: f64,
}

struct Prepared {
    options: Vec<Vec<Choice>>,
    preds: Vec<Vec<(usize, f64)>>,
}

impl Prepared {
    fn new(instance: &ProblemInstance, strict: bool) -> Result<Prepared> {
        let errors: Vec<_> = validate_instance(instance)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect();
        if !errors.is_empty() {
            return Err(Error::InvalidInstance(errors));
        }
        let dset = compute_decomposition_set(instance);
        let targets = PmhfTargetTable::default();
        let mut options = Vec::new();
        for task in &instance.tasks {
            let decomposed = dset.contains(&task.id);
            let schemes = if decomposed {
                enumerate_schemes(task.asil)?
            } else {
                vec![DecompositionScheme::trivial(task.asil)]
            };
            let hosts: Vec<usize> = (0..instance.ecus.len())
                .filter(|&k| task.is_localized(&instance.ecus[k].id))
                .collect();
            let checked = (decomposed || strict) && targets.target(task.asil).is_some();
            let mut seen = BTreeSet::new();
            let mut opts = Vec::new();
            for scheme in schemes {
                let levels = scheme.levels();
                let mut ecus = Vec::new();
                injective(&levels, &hosts, &mut ecus, &mut |ecus| {
                    let mut replicas: Vec<(usize, u8)> =
                        ecus.iter().copied().zip(levels.iter().copied()).collect();
                    replicas.sort_unstable();
                    if !seen.insert(replicas.clone()) {
                        return;
                    }
                    if replicas.iter().any(|&(k, h)| h > instance.ecus[k].asil.value()) {
                        return;
                    }
                    if checked {
                        let rates: Vec<f64> = replicas
                            .iter()
                            .map(|&(k, _)| instance.ecus[k].failure_rate_per_hour)
                            .collect();
                        match check_pmhf(task.asil, &rates, instance.lifetime_hours) {
                            Ok(c) if c.passed() => {}
                            _ => return,
                        }
                    }
                    let cost = replicas
                        .iter()
                        .map(|&(k, h)| task.dev_cost[&instance.ecus[k].id].at(h))
                        .sum();
                    opts.push(Choice {
                        scheme,
                        replicas,
                        cost,
                    });
                });
            }
            options.push(opts);
        }
        let pos: HashMap<&str, usize> = instance
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.as_str(), i))
            .collect();
        let mut preds = vec![Vec::new(); instance.tasks.len()];
        for e in &instance.edges {
            preds[pos[e.to.as_str()]].push((pos[e.from.as_str()], e.wcrt_ms));
        }
        Ok(Prepared { options, preds })
    }

    fn space(&self) -> f64 {
        let mappings: f64 = self.options.iter().map(|o| o.len().max(1) as f64).product();
        mappings * self.count_extensions()
    }

    fn count_extensions(&self) -> f64 {
        let n = self.preds.len();
        if n > 24 {
            return f64::INFINITY;
        }
        let need: Vec<u32> = self
            .preds
            .iter()
            .map(|ps| ps.iter().fold(0u32, |acc, &(p, _)| acc | 1 << p))
            .collect();
        let mut ways = vec![0.0f64; 1 << n];
        ways[0] = 1.0;
        for set in 0..(1u32 << n) {
            let w = ways[set as usize];
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                if set & (1 << i) == 0 && need[i] & !set == 0 {
                    ways[(set | 1 << i) as usize] += w;
                }
            }
        }
        ways[(1usize << n) - 1]
    }

    /// Every total order of the tasks in which each task follows its
    /// predecessors.
    fn linear_extensions(&self) -> Vec<Vec<usize>> {
        fn rec(preds: &[Vec<(usize, f64)>], placed: &mut Vec<bool>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == preds.len() {
                out.push(cur.clone());
                return;
            }
            for i in 0..preds.len() {
                if !placed[i] && preds[i].iter().all(|&(p, _)| placed[p]) {
                    placed[i] = true;
                    cur.push(i);
                    rec(preds, placed, cur, out);
                    cur.pop();
                    placed[i] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&self.preds, &mut vec![false; self.preds.len()], &mut Vec::new(), &mut out);
        out
    }
}

/// Call `f` with every assignment of distinct hosts to `levels`.
fn injective(levels: &[u8], hosts: &[usize], cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if cur.len() == levels.len() {
        f(cur);
        return;
    }
    for &k in hosts {
        if !cur.contains(&k) {
            cur.push(k);
            injective(levels, hosts, cur, f);
            cur.pop();
        }
    }
}

struct Best {
    key: (f64, f64),
    solution: AllocationSolution,
}

struct Walk<'a> {
    prep: &'a Prepared,
    instance: &'a ProblemInstance,
    cost_first: bool,
    in_focus: Vec<bool>,
    min_cost: Vec<f64>,
    order: Vec<usize>,
    rest_cost: Vec<f64>,
    chosen: Vec<usize>,
    /// `(ecu, finish)` per replica of placed tasks.
    finish: Vec<Vec<(usize, f64)>>,
    starts: Vec<Vec<f64>>,
    ecu_free: Vec<f64>,
    memory: Vec<u64>,
    best: Option<Best>,
}

impl Walk<'_> {
    fn key(&self, cost: f64, makespan: f64) -> (f64, f64) {
        if self.cost_first {
            (cost, makespan)
        } else {
            (makespan, cost)
        }
    }

    /// Whether `lower` cannot lead to a strictly better optimum.
    fn dominated(&self, lower: (f64, f64)) -> bool {
        match &self.best {
            None => false,
            Some(b) => lower.0 > b.key.0 || (lower.0 == b.key.0 && lower.1 >= b.key.1),
        }
    }

    fn dfs(&mut self, depth: usize, cost: f64, makespan: f64) {
        if self.dominated(self.key(cost + self.rest_cost[depth], makespan)) {
            return;
        }
        if depth == self.order.len() {
            self.record(cost, makespan);
            return;
        }
        let i = self.order[depth];
        let task = &self.instance.tasks[i];
        for o in 0..self.prep.options[i].len() {
            let choice = &self.prep.options[i][o];
            let mem = task.memory.to_array();
            let fits = choice.replicas.iter().all(|&(k, h)| {
                self.memory[k] + mem[h as usize - 1].0 <= self.instance.ecus[k].memory.0
            });
            if !fits {
                continue;
            }
            let saved_free = self.ecu_free.clone();
            let mut fin = Vec::with_capacity(choice.replicas.len());
            let mut st = Vec::with_capacity(choice.replicas.len());
            let mut span = makespan;
            for &(k, h) in &choice.replicas {
                let ecu = &self.instance.ecus[k].id;
                let mut start = saved_free[k];
                for &(p, wcrt) in &self.prep.preds[i] {
                    for &(kp, fp) in &self.finish[p] {
                        start = start.max(fp + if kp == k { 0.0 } else { wcrt });
                    }
                }
                let end = start + task.wcet_ms[ecu].at(h);
                self.ecu_free[k] = end;
                self.memory[k] += mem[h as usize - 1].0;
                if self.in_focus[i] {
                    span = span.max(end);
                }
                fin.push((k, end));
                st.push(start);
            }
            self.chosen[i] = o;
            self.finish[i] = fin;
            self.starts[i] = st;
            self.dfs(depth + 1, cost + choice.cost, span);
            let choice = &self.prep.options[i][o];
            for &(k, h) in &choice.replicas {
                self.memory[k] -= mem[h as usize - 1].0;
            }
            self.ecu_free = saved_free;
            self.finish[i].clear();
        }
        self.chosen[i] = usize::MAX;
    }

    fn record(&mut self, cost: f64, makespan: f64) {
        let key = self.key(cost, makespan);
        let inst = self.instance;
        let mut placements = Vec::new();
        let mut schemes = BTreeMap::new();
        for (i, task) in inst.tasks.iter().enumerate() {
            let choice = &self.prep.options[i][self.chosen[i]];
            schemes.insert(task.id.clone(), choice.scheme);
            for (r, &(k, h)) in choice.replicas.iter().enumerate() {
                placements.push(Placement {
                    task: task.id.clone(),
                    ecu: inst.ecus[k].id.clone(),
                    asil: Asil::from_value(h).expect("levels 1..=4"),
                    start_ms: self.starts[i][r],
                });
            }
        }
        let focus = inst
            .tasks
            .iter()
            .zip(&self.in_focus)
            .find(|(_, &f)| f)
            .map(|(t, _)| t.application.clone())
            .or_else(|| inst.applications.first().cloned())
            .unwrap_or_default();
        let mut makespan_per_app = BTreeMap::new();
        makespan_per_app.insert(focus, makespan);
        self.best = Some(Best {
            key,
            solution: AllocationSolution {
                placements,
                schemes,
                cost_total: cost,
                makespan_per_app,
                ordering: Vec::new(),
            },
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DependencyEdge;
    use crate::testutil::{single_task_instance, two_independent_one_ecu};

    #[test]
    fn cheaper_ecu_wins() {
        let mut inst = single_task_instance();
        let mut e2 = inst.ecus[0].clone();
        e2.id = "E2".into();
        e2.asil = Asil::B;
        inst.ecus[0].asil = Asil::B;
        inst.ecus.push(e2);
        let mut t = inst.tasks[0].clone();
        t.dev_cost.get_mut("E1").unwrap().b = 7.0;
        t.wcet_ms.insert("E2".into(), t.wcet_ms["E1"].clone());
        let mut c2 = t.dev_cost["E1"].clone();
        c2.b = 5.0;
        t.dev_cost.insert("E2".into(), c2);
        inst.tasks[0] = t;
        let sol = brute_force_optimum(&inst, Priority::CostFirst).unwrap().unwrap();
        assert_eq!(sol.cost_total, 5.0);
        assert_eq!(sol.placements[0].ecu, "E2");
    }

    #[test]
    fn sequential_on_one_ecu() {
        let sol = brute_force_optimum(&two_independent_one_ecu(), Priority::LatencyFirst)
            .unwrap()
            .unwrap();
        assert_eq!(sol.makespan_per_app["app"], 4.0);
        assert_eq!(sol.cost_total, 10.0);
    }

    #[test]
    fn chain_counts_once() {
        let mut inst = two_independent_one_ecu();
        inst.edges.push(DependencyEdge {
            from: "T1".into(),
            to: "T2".into(),
            wcrt_ms: 3.0,
        });
        let prep = Prepared::new(&inst, false).unwrap();
        assert_eq!(prep.count_extensions(), 1.0);
        assert_eq!(prep.space(), 1.0);
    }

    #[test]
    fn case_study_is_refused_by_default() {
        let err = brute_force_optimum(&crate::case_study(), Priority::CostFirst).unwrap_err();
        assert!(matches!(err, Error::SearchSpaceTooLarge { .. }));
    }

    #[test]
    fn case_study_cost_optimum() {
        let opts = OracleOptions {
            max_space: f64::INFINITY,
            ..Default::default()
        };
        let sol = brute_force_with(&crate::case_study(), Priority::CostFirst, &opts)
            .unwrap()
            .unwrap();
        assert_eq!(sol.cost_total, 98.0);
        assert!(crate::validate_solution(&crate::case_study(), &sol).is_empty());
    }

    #[test]
    fn memory_makes_infeasible() {
        let mut inst = single_task_instance();
        inst.ecus[0].memory = crate::model::Megabytes(5);
        assert!(brute_force_optimum(&inst, Priority::CostFirst).unwrap().is_none());
    }
}
