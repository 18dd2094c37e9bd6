//! Start times for a fixed mapping.
//!
//! With every mapping variable fixed, the scheduling rows are difference
//! constraints whose right-hand sides depend only on the ordering variables
//! of one task pair. Earliest start times are longest paths from a zero
//! source; a positive cycle means the orderings contradict each other.
//! Orderings are decided lazily: a pair is branched on only when the
//! current longest paths violate the ordering a global task order suggests.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::milp::{MilpModel, Sense};

use super::compile::{compile, holds, Compiled, SchedRow};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct Edge {
    from: usize,
    to: usize,
    w: f64,
}

#[derive(Debug, Clone)]
struct Combo {
    values: [f64; 2],
    edges: Vec<Edge>,
}

#[derive(Debug, Clone)]
struct Pair {
    compiled: usize,
    first: usize,
    second: usize,
    combos: Vec<Combo>,
}

/// Scheduling subproblem of one full mapping.
pub(crate) struct Leaf {
    n_nodes: usize,
    base: Vec<Edge>,
    pairs: Vec<Pair>,
    /// Pairs without any effect on start times and the combination used
    /// for them in reported values.
    free: Vec<(usize, [f64; 2])>,
    /// Upper bound on any longest path of a consistent system.
    cap: f64,
    lo: Vec<f64>,
    /// `(ecu, node)` of each hosted replica per task.
    hosted: Vec<Vec<(usize, usize)>>,
    succs: Vec<Vec<usize>>,
}

pub(crate) enum LeafOutcome {
    /// Start times (per node) and ordering values (per compiled pair).
    Found {
        d: Vec<f64>,
        order: Vec<[f64; 2]>,
        value: f64,
        timed_out: bool,
    },
    None,
    TimedOut,
}

pub(crate) struct LeafLimits {
    pub deadline: Option<Instant>,
    pub node_limit: Option<u64>,
}

impl Leaf {
    /// `values` holds the fixed integer mapping; returns `None` when some
    /// row or pair is contradictory before any search.
    pub(crate) fn new(c: &Compiled, model: &MilpModel, values: &[f64]) -> Option<Leaf> {
        let inst = &model.instance;
        let n_nodes = c.node_var.len();
        let mut base = Vec::new();
        for node in 1..n_nodes {
            base.push(Edge {
                from: 0,
                to: node,
                w: c.node_lo[node],
            });
            if c.node_hi[node].is_finite() {
                base.push(Edge {
                    from: node,
                    to: 0,
                    w: -c.node_hi[node],
                });
            }
        }

        let mut per_pair: Vec<Vec<&SchedRow>> = vec![Vec::new(); c.pairs.len()];
        for row in &c.sched {
            match row.pair {
                Some(p) => per_pair[p].push(row),
                None => {
                    let konst: f64 = row.ints.iter().map(|&(v, a)| a * values[v.0]).sum();
                    if !row_edges(row, row.rhs - konst, &mut base) {
                        return None;
                    }
                }
            }
        }
        let mut logic_of: Vec<Vec<usize>> = vec![Vec::new(); c.pairs.len()];
        for (r, row) in c.logic.iter().enumerate() {
            logic_of[row.pair].push(r);
        }

        let mut pairs = Vec::new();
        let mut free = Vec::new();
        let mut vals = values.to_vec();
        for (p, pv) in c.pairs.iter().enumerate() {
            let mut combos = Vec::new();
            for combo in [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]] {
                vals[pv.vars[0].0] = combo[0];
                vals[pv.vars[1].0] = combo[1];
                let allowed = logic_of[p].iter().all(|&r| {
                    let row = &c.logic[r];
                    let lhs: f64 = row.terms.iter().map(|&(v, a)| a * vals[v.0]).sum();
                    holds(lhs, row.sense, row.rhs, EPS)
                });
                if !allowed {
                    continue;
                }
                let mut edges = Vec::new();
                let ok = per_pair[p].iter().all(|row| {
                    let konst: f64 = row
                        .ints
                        .iter()
                        .chain(&row.thetas)
                        .map(|&(v, a)| a * vals[v.0])
                        .sum();
                    row_edges(row, row.rhs - konst, &mut edges)
                });
                if ok {
                    combos.push(Combo {
                        values: combo,
                        edges,
                    });
                }
            }
            vals[pv.vars[0].0] = 0.0;
            vals[pv.vars[1].0] = 0.0;
            if combos.is_empty() {
                return None;
            }
            pairs.push(Pair {
                compiled: p,
                first: pv.first,
                second: pv.second,
                combos,
            });
        }

        // Longest simple paths never exceed the sum of positive weights, so
        // edges lighter than minus that sum can never bind.
        let positive = |edges: &[Edge]| edges.iter().map(|e| e.w.max(0.0)).sum::<f64>();
        let cap = positive(&base)
            + pairs
                .iter()
                .map(|p| p.combos.iter().map(|c| positive(&c.edges)).fold(0.0, f64::max))
                .sum::<f64>()
            + 1.0;
        base.retain(|e| e.w > -cap);
        let mut kept = Vec::new();
        for mut pair in pairs {
            for combo in &mut pair.combos {
                combo.edges.retain(|e| e.w > -cap);
            }
            if pair.combos.iter().all(|c| c.edges.is_empty()) {
                free.push((pair.compiled, pair.combos[0].values));
            } else {
                kept.push(pair);
            }
        }

        let n = inst.n_tasks();
        let hosted = (0..n)
            .map(|i| {
                (0..inst.n_ecus())
                    .filter(|&k| {
                        model.index.x[i][k]
                            .iter()
                            .flatten()
                            .any(|v| values[v.0] > 0.5)
                    })
                    .map(|k| (k, c.tau_node[i][k]))
                    .collect()
            })
            .collect();
        Some(Leaf {
            n_nodes,
            base,
            pairs: kept,
            free,
            cap,
            lo: c.node_lo.clone(),
            hosted,
            succs: inst.succs.clone(),
        })
    }

    /// Find a consistent ordering, minimizing node `objective` when given.
    /// Only results strictly below `bound` are returned.
    pub(crate) fn solve(
        &self,
        objective: Option<usize>,
        bound: f64,
        limits: &LeafLimits,
        nodes: &mut u64,
    ) -> LeafOutcome {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_nodes];
        for e in &self.base {
            adj[e.from].push((e.to, e.w));
        }
        let mut d = self.lo.clone();
        if !relax(&adj, &mut d, 0..self.n_nodes, self.cap) {
            return LeafOutcome::None;
        }
        let mut search = LeafSearch {
            leaf: self,
            adj,
            chosen: vec![None; self.pairs.len()],
            objective,
            bound,
            best: None,
            limits,
            nodes,
            timed_out: false,
        };
        search.dfs(d);
        let timed_out = search.timed_out;
        match search.best {
            Some((value, d, chosen)) => {
                let mut order = vec![[0.0; 2]; self.pairs.len() + self.free.len()];
                for (p, pair) in self.pairs.iter().enumerate() {
                    order[pair.compiled] = pair.combos[chosen[p]].values;
                }
                for &(p, v) in &self.free {
                    order[p] = v;
                }
                LeafOutcome::Found {
                    d,
                    order,
                    value,
                    timed_out,
                }
            }
            None if timed_out => LeafOutcome::TimedOut,
            None => LeafOutcome::None,
        }
    }
}

/// Edges for `row` once its constant part is folded into `rhs`; false if
/// the row has no continuous part and fails.
fn row_edges(row: &SchedRow, rhs: f64, out: &mut Vec<Edge>) -> bool {
    let pos = row.pos.unwrap_or(0);
    let neg = row.neg.unwrap_or(0);
    if pos == neg {
        return holds(0.0, row.sense, rhs, EPS);
    }
    // d[pos] - d[neg] >= rhs: neg -> pos with weight rhs.
    if matches!(row.sense, Sense::Ge | Sense::Eq) {
        out.push(Edge {
            from: neg,
            to: pos,
            w: rhs,
        });
    }
    if matches!(row.sense, Sense::Le | Sense::Eq) {
        out.push(Edge {
            from: pos,
            to: neg,
            w: -rhs,
        });
    }
    true
}

/// Raise `d` to the least fixpoint reachable from `seeds`. False on a
/// positive cycle, detected as a value above `cap` or a raised source.
fn relax(
    adj: &[Vec<(usize, f64)>],
    d: &mut [f64],
    seeds: impl IntoIterator<Item = usize>,
    cap: f64,
) -> bool {
    let mut queued = vec![false; d.len()];
    let mut queue = std::collections::VecDeque::new();
    for s in seeds {
        if !queued[s] {
            queued[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        queued[u] = false;
        for &(v, w) in &adj[u] {
            let cand = d[u] + w;
            if cand > d[v] + EPS {
                if v == 0 || cand > cap {
                    return false;
                }
                d[v] = cand;
                if !queued[v] {
                    queued[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    true
}

struct LeafSearch<'a> {
    leaf: &'a Leaf,
    adj: Vec<Vec<(usize, f64)>>,
    chosen: Vec<Option<usize>>,
    objective: Option<usize>,
    bound: f64,
    best: Option<(f64, Vec<f64>, Vec<usize>)>,
    limits: &'a LeafLimits,
    nodes: &'a mut u64,
    timed_out: bool,
}

impl LeafSearch<'_> {
    fn value(&self, d: &[f64]) -> f64 {
        self.objective.map_or(0.0, |n| d[n])
    }

    fn done(&self) -> bool {
        self.timed_out || (self.objective.is_none() && self.best.is_some())
    }

    fn out_of_budget(&mut self) -> bool {
        if let Some(limit) = self.limits.node_limit {
            if *self.nodes >= limit {
                self.timed_out = true;
            }
        }
        if *self.nodes % 256 == 0 {
            if let Some(deadline) = self.limits.deadline {
                if Instant::now() >= deadline {
                    self.timed_out = true;
                }
            }
        }
        self.timed_out
    }

    fn push(&mut self, edges: &[Edge]) {
        for e in edges {
            self.adj[e.from].push((e.to, e.w));
        }
    }

    fn pop(&mut self, edges: &[Edge]) {
        for e in edges.iter().rev() {
            self.adj[e.from].pop();
        }
    }

    fn dfs(&mut self, d: Vec<f64>) {
        *self.nodes += 1;
        if self.out_of_budget() {
            return;
        }
        let lower = self.value(&d);
        if self.objective.is_some() && lower >= self.bound - EPS {
            return;
        }

        let suggested = self.suggest(&d);
        let mut completed = d.clone();
        let edges: Vec<Edge> = suggested
            .iter()
            .enumerate()
            .filter(|(p, _)| self.chosen[*p].is_none())
            .flat_map(|(p, &c)| self.leaf.pairs[p].combos[c].edges.iter().copied())
            .collect();
        self.push(&edges);
        let ok = relax(&self.adj, &mut completed, edges.iter().map(|e| e.from), self.leaf.cap);
        self.pop(&edges);
        if ok {
            let value = self.value(&completed);
            if value < self.bound - EPS || (self.objective.is_none() && self.best.is_none()) {
                let mut chosen: Vec<usize> = suggested.clone();
                for (p, c) in self.chosen.iter().enumerate() {
                    if let Some(c) = c {
                        chosen[p] = *c;
                    }
                }
                self.bound = value;
                self.best = Some((value, completed, chosen));
            }
            if self.done() || value <= lower + EPS {
                return;
            }
        }

        // Branch on the undecided pair whose suggested ordering is violated
        // the most by the current start times.
        let mut pick: Option<(usize, f64)> = None;
        for (p, pair) in self.leaf.pairs.iter().enumerate() {
            if self.chosen[p].is_some() {
                continue;
            }
            let worst = pair.combos[suggested[p]]
                .edges
                .iter()
                .map(|e| d[e.from] + e.w - d[e.to])
                .fold(0.0, f64::max);
            if worst > EPS && pick.map_or(true, |(_, w)| worst > w) {
                pick = Some((p, worst));
            }
        }
        let Some((p, _)) = pick else {
            return;
        };
        let n_combos = self.leaf.pairs[p].combos.len();
        let order = std::iter::once(suggested[p]).chain((0..n_combos).filter(|&c| c != suggested[p]));
        for c in order {
            let edges = self.leaf.pairs[p].combos[c].edges.clone();
            self.push(&edges);
            let mut next = d.clone();
            if relax(&self.adj, &mut next, edges.iter().map(|e| e.from), self.leaf.cap) {
                self.chosen[p] = Some(c);
                self.dfs(next);
                self.chosen[p] = None;
            }
            self.pop(&edges);
            if self.done() {
                return;
            }
        }
    }

    /// Ordering combination per pair following one global task order: the
    /// dependencies plus, on each ECU, hosted tasks by current start time.
    fn suggest(&self, d: &[f64]) -> Vec<usize> {
        let leaf = self.leaf;
        let n = leaf.hosted.len();
        let key: Vec<f64> = leaf
            .hosted
            .iter()
            .map(|nodes| nodes.iter().map(|&(_, v)| d[v]).fold(f64::INFINITY, f64::min))
            .collect();
        let mut rel: Vec<Vec<usize>> = leaf.succs.clone();
        let mut per_ecu: std::collections::BTreeMap<usize, Vec<(f64, usize)>> = Default::default();
        for (i, nodes) in leaf.hosted.iter().enumerate() {
            for &(k, v) in nodes {
                per_ecu.entry(k).or_default().push((d[v], i));
            }
        }
        for list in per_ecu.values_mut() {
            list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for w in list.windows(2) {
                rel[w[0].1].push(w[1].1);
            }
        }
        let mut indeg = vec![0usize; n];
        for list in &rel {
            for &j in list {
                indeg[j] += 1;
            }
        }
        let ord = |i: usize| (Reverse(OrdF(key[i])), Reverse(i));
        let mut heap: BinaryHeap<_> = (0..n).filter(|&i| indeg[i] == 0).map(ord).collect();
        let mut placed = vec![false; n];
        let mut pos = vec![0usize; n];
        for slot in 0..n {
            let i = match heap.pop() {
                Some((_, Reverse(i))) => i,
                // A cycle: release the earliest remaining task.
                None => (0..n)
                    .filter(|&i| !placed[i])
                    .min_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)))
                    .expect("tasks remain"),
            };
            if placed[i] {
                continue;
            }
            placed[i] = true;
            pos[i] = slot;
            for &j in &rel[i] {
                indeg[j] = indeg[j].saturating_sub(1);
                if indeg[j] == 0 && !placed[j] {
                    heap.push(ord(j));
                }
            }
        }
        leaf.pairs
            .iter()
            .map(|pair| {
                let want = if pos[pair.first] < pos[pair.second] {
                    [1.0, 0.0]
                } else {
                    [0.0, 1.0]
                };
                pair.combos
                    .iter()
                    .position(|c| c.values == want)
                    .unwrap_or(0)
            })
            .collect()
    }
}

#[derive(PartialEq, PartialOrd)]
struct OrdF(f64);

impl Eq for OrdF {}

impl Ord for OrdF {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Earliest start times for a full assignment of the integer variables
/// (mapping and ordering) in `values`. Returns the completed assignment, or
/// `None` when the fixed orderings are contradictory.
pub fn resolve_schedule(model: &MilpModel, values: &[f64]) -> crate::Result<Option<Vec<f64>>> {
    let c = compile(model)?;
    Ok(resolve_with(&c, values))
}

pub(crate) fn resolve_with(c: &Compiled, values: &[f64]) -> Option<Vec<f64>> {
    let mut edges = Vec::new();
    for node in 1..c.node_var.len() {
        edges.push(Edge {
            from: 0,
            to: node,
            w: c.node_lo[node],
        });
        if c.node_hi[node].is_finite() {
            edges.push(Edge {
                from: node,
                to: 0,
                w: -c.node_hi[node],
            });
        }
    }
    for row in &c.logic {
        let lhs: f64 = row.terms.iter().map(|&(v, a)| a * values[v.0]).sum();
        if !holds(lhs, row.sense, row.rhs, EPS) {
            return None;
        }
    }
    for row in &c.sched {
        let konst: f64 = row
            .ints
            .iter()
            .chain(&row.thetas)
            .map(|&(v, a)| a * values[v.0])
            .sum();
        if !row_edges(row, row.rhs - konst, &mut edges) {
            return None;
        }
    }
    let cap = edges.iter().map(|e| e.w.max(0.0)).sum::<f64>() + 1.0;
    let mut adj = vec![Vec::new(); c.node_var.len()];
    for e in &edges {
        adj[e.from].push((e.to, e.w));
    }
    let mut d = c.node_lo.clone();
    if !relax(&adj, &mut d, 0..c.node_var.len(), cap) {
        return None;
    }
    let mut out = values.to_vec();
    for (node, var) in c.node_var.iter().enumerate() {
        if let Some(v) = var {
            out[v.0] = d[node];
        }
    }
    Some(out)
}
