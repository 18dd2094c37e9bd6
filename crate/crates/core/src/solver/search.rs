//! Depth-first search over per-task options.

use std::time::Instant;

use crate::milp::{MilpModel, Sense};

use super::compile::{Compiled, ObjectiveForm, TaskOption};
use super::schedule::{Leaf, LeafLimits, LeafOutcome};

const EPS: f64 = 1e-9;

pub(crate) struct StageResult {
    /// Best assignment found and its objective value.
    pub best: Option<(f64, Vec<f64>)>,
    pub nodes: u64,
    pub timed_out: bool,
}

pub(crate) fn run(
    c: &Compiled,
    model: &MilpModel,
    deadline: Option<Instant>,
    node_limit: Option<u64>,
) -> StageResult {
    let n = c.order.len();
    let inst = &model.instance;
    let makespan = matches!(c.objective, ObjectiveForm::Continuous(node) if node == c.phi_node);
    // Static upper bound on the makespan variable from its own bounds and
    // rows mentioning nothing else.
    let mut phi_cap = c.node_hi[c.phi_node];
    for row in &c.sched {
        if row.ints.is_empty() && row.thetas.is_empty() {
            match (row.pos, row.neg, row.sense) {
                (Some(p), None, Sense::Le | Sense::Eq) if p == c.phi_node => phi_cap = phi_cap.min(row.rhs),
                (None, Some(q), Sense::Ge | Sense::Eq) if q == c.phi_node => phi_cap = phi_cap.min(-row.rhs),
                _ => {}
            }
        }
    }

    let option_order: Vec<Vec<usize>> = (0..inst.n_tasks())
        .map(|i| {
            let opts = &c.options[i];
            let mut ids: Vec<usize> = (0..opts.len()).collect();
            if makespan {
                let load = |o: &TaskOption| o.replicas.iter().map(|r| r.1).sum::<f64>();
                ids.sort_by(|&a, &b| {
                    load(&opts[a])
                        .total_cmp(&load(&opts[b]))
                        .then(opts[a].cost.total_cmp(&opts[b].cost))
                        .then(a.cmp(&b))
                });
            } else {
                ids.sort_by(|&a, &b| opts[a].cost.total_cmp(&opts[b].cost).then(a.cmp(&b)));
            }
            ids
        })
        .collect();
    let rest_cost: Vec<f64> = {
        let mut v = vec![0.0; n + 1];
        for d in (0..n).rev() {
            let best = c.options[c.order[d]]
                .iter()
                .map(|o| o.cost)
                .fold(f64::INFINITY, f64::min);
            v[d] = v[d + 1] + best;
        }
        v
    };
    let min_wcet: Vec<f64> = (0..inst.n_tasks())
        .map(|i| {
            c.options[i]
                .iter()
                .flat_map(|o| o.replicas.iter().map(|r| r.1))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    let mut s = Search {
        c,
        model,
        option_order,
        rest_cost,
        min_wcet,
        makespan,
        phi_cap,
        chosen: vec![usize::MAX; inst.n_tasks()],
        global_lhs: vec![0.0; c.globals.len()],
        best: None,
        limits: LeafLimits {
            deadline,
            node_limit,
        },
        nodes: 0,
        timed_out: false,
    };
    s.dfs(0, 0.0);
    StageResult {
        best: s.best,
        nodes: s.nodes,
        timed_out: s.timed_out,
    }
}

struct Search<'a> {
    c: &'a Compiled,
    model: &'a MilpModel,
    option_order: Vec<Vec<usize>>,
    rest_cost: Vec<f64>,
    min_wcet: Vec<f64>,
    makespan: bool,
    phi_cap: f64,
    chosen: Vec<usize>,
    global_lhs: Vec<f64>,
    best: Option<(f64, Vec<f64>)>,
    limits: LeafLimits,
    nodes: u64,
    timed_out: bool,
}

impl Search<'_> {
    fn incumbent(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.0)
    }

    fn out_of_budget(&mut self) -> bool {
        if let Some(limit) = self.limits.node_limit {
            if self.nodes >= limit {
                self.timed_out = true;
            }
        }
        if self.nodes % 256 == 0 {
            if let Some(deadline) = self.limits.deadline {
                if Instant::now() >= deadline {
                    self.timed_out = true;
                }
            }
        }
        self.timed_out
    }

    fn globals_ok(&self, depth: usize) -> bool {
        self.c.globals.iter().enumerate().all(|(g, row)| {
            let lhs = self.global_lhs[g];
            let lo = lhs + row.rest_min[depth];
            let hi = lhs + row.rest_max[depth];
            match row.sense {
                Sense::Le => lo <= row.rhs + EPS,
                Sense::Ge => hi >= row.rhs - EPS,
                Sense::Eq => lo <= row.rhs + EPS && hi >= row.rhs - EPS,
            }
        })
    }

    fn dfs(&mut self, depth: usize, cost: f64) {
        self.nodes += 1;
        if self.out_of_budget() {
            return;
        }
        let linear = self.c.objective == ObjectiveForm::Linear;
        if linear && cost + self.rest_cost[depth] >= self.incumbent() - EPS {
            return;
        }
        if !self.globals_ok(depth) {
            return;
        }
        let lower = self.makespan_bound(depth);
        if lower > self.phi_cap + EPS || (self.makespan && lower >= self.incumbent() - EPS) {
            return;
        }
        if depth == self.c.order.len() {
            self.leaf(cost);
            return;
        }
        let task = self.c.order[depth];
        for pos in 0..self.option_order[task].len() {
            let o = self.option_order[task][pos];
            let opt = &self.c.options[task][o];
            for &(g, x) in &opt.global {
                self.global_lhs[g] += x;
            }
            self.chosen[task] = o;
            let next = cost + opt.cost;
            self.dfs(depth + 1, next);
            let opt = &self.c.options[task][o];
            for &(g, x) in &opt.global {
                self.global_lhs[g] -= x;
            }
            self.chosen[task] = usize::MAX;
            if self.timed_out {
                return;
            }
        }
    }

    /// Lower bound on the makespan given the options fixed so far: earliest
    /// finishes along dependencies, and the summed execution time of focus
    /// tasks sharing an ECU.
    fn makespan_bound(&self, depth: usize) -> f64 {
        let inst = &self.model.instance;
        let focus = self.model.index.focus_app;
        let n = inst.n_tasks();
        let m = inst.n_ecus();
        let mut finish: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut load = vec![0.0; m];
        let mut bound: f64 = 0.0;
        for (d, &j) in self.c.order.iter().enumerate() {
            if d < depth {
                let opt = &self.c.options[j][self.chosen[j]];
                let mut out = Vec::with_capacity(opt.replicas.len());
                for &(k, w) in &opt.replicas {
                    let mut start: f64 = 0.0;
                    for &i in &inst.preds[j] {
                        let wcrt = inst.wcrt[i][j].unwrap_or(0.0);
                        for &(ki, fi) in &finish[i] {
                            start = start.max(fi + if ki != k { wcrt } else { 0.0 });
                        }
                    }
                    out.push((k, start + w));
                    if inst.app_of[j] == focus {
                        load[k] += w;
                    }
                }
                finish[j] = out;
            } else {
                let ready = inst.preds[j]
                    .iter()
                    .flat_map(|&i| finish[i].iter().map(|f| f.1))
                    .fold(0.0, f64::max);
                // Unplaced tasks keep no ECU; marked with an impossible index.
                finish[j] = vec![(usize::MAX, ready + self.min_wcet[j])];
            }
            if inst.app_of[j] == focus {
                for f in &finish[j] {
                    bound = bound.max(f.1);
                }
            }
        }
        load.into_iter().fold(bound, f64::max)
    }

    fn leaf(&mut self, cost: f64) {
        let mut values = vec![0.0; self.c.n_vars];
        for (task, &o) in self.chosen.iter().enumerate() {
            for &(v, x) in &self.c.options[task][o].values {
                values[v.0] = x;
            }
        }
        let Some(leaf) = Leaf::new(self.c, self.model, &values) else {
            return;
        };
        let (objective, bound) = if self.makespan {
            (Some(self.c.phi_node), self.incumbent())
        } else {
            match self.c.objective {
                ObjectiveForm::Continuous(node) => (Some(node), self.incumbent()),
                ObjectiveForm::Linear => (None, f64::INFINITY),
            }
        };
        match leaf.solve(objective, bound, &self.limits, &mut self.nodes) {
            LeafOutcome::Found {
                d,
                order,
                value,
                timed_out,
            } => {
                self.timed_out |= timed_out;
                for (node, var) in self.c.node_var.iter().enumerate() {
                    if let Some(v) = var {
                        values[v.0] = d[node];
                    }
                }
                for (p, pv) in self.c.pairs.iter().enumerate() {
                    values[pv.vars[0].0] = order[p][0];
                    values[pv.vars[1].0] = order[p][1];
                }
                let objective = if objective.is_some() { value } else { cost };
                log::debug!("incumbent {objective} after {} nodes", self.nodes);
                self.best = Some((objective, values));
            }
            LeafOutcome::TimedOut => self.timed_out = true,
            LeafOutcome::None => {}
        }
    }
}
