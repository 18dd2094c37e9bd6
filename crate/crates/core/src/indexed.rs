use std::collections::HashMap;

use crate::decomposition::{enumerate_schemes, is_compatible_levels, DecompositionScheme};
use crate::error::{Error, Result};
use crate::model::{compute_decomposition_set, validate_instance, ProblemInstance, Severity};
use crate::reliability::PmhfTargetTable;

/// Index-based view of a validated [`ProblemInstance`].
///
/// Tasks, ECUs and applications are addressed by position. Levels are the
/// numeric ASIL values `1..=4`; per-level arrays are indexed by `h - 1`.
#[derive(Debug, Clone)]
pub struct IndexedInstance {
    pub source: ProblemInstance,
    pub task_ids: Vec<String>,
    pub ecu_ids: Vec<String>,
    pub app_ids: Vec<String>,
    pub task_level: Vec<u8>,
    pub ecu_level: Vec<u8>,
    pub ecu_memory: Vec<u64>,
    pub ecu_rate: Vec<f64>,
    /// `loc[i][k]`: task `i` may run on ECU `k`.
    pub loc: Vec<Vec<bool>>,
    /// `wcet[i][k][h - 1]`, zero where `loc[i][k]` is false.
    pub wcet: Vec<Vec<[f64; 4]>>,
    pub cost: Vec<Vec<[f64; 4]>>,
    pub memory: Vec<[u64; 4]>,
    /// `wcrt[i][j]` is `Some` iff `i` must precede `j`.
    pub wcrt: Vec<Vec<Option<f64>>>,
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
    pub app_of: Vec<usize>,
    /// A topological order of the tasks; ties broken by task index.
    pub topo: Vec<usize>,
    /// Membership in the decomposition set.
    pub decomposed: Vec<bool>,
    pub lifetime: f64,
}

impl IndexedInstance {
    /// Index a valid instance. Fails with every error-level diagnostic if the
    /// instance is invalid; warnings are ignored.
    pub fn new(instance: &ProblemInstance) -> Result<IndexedInstance> {
        let errors: Vec<_> = validate_instance(instance)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect();
        if !errors.is_empty() {
            return Err(Error::InvalidInstance(errors));
        }

        let n = instance.tasks.len();
        let m = instance.ecus.len();
        let task_ids: Vec<String> = instance.tasks.iter().map(|t| t.id.clone()).collect();
        let ecu_ids: Vec<String> = instance.ecus.iter().map(|e| e.id.clone()).collect();
        let app_ids = instance.applications.clone();
        let task_pos: HashMap<&str, usize> =
            task_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let app_pos: HashMap<&str, usize> =
            app_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

        let mut loc = vec![vec![false; m]; n];
        let mut wcet = vec![vec![[0.0; 4]; m]; n];
        let mut cost = vec![vec![[0.0; 4]; m]; n];
        for (i, task) in instance.tasks.iter().enumerate() {
            for (k, ecu) in instance.ecus.iter().enumerate() {
                if task.is_localized(&ecu.id) {
                    loc[i][k] = true;
                    wcet[i][k] = task.wcet_ms[&ecu.id].to_array();
                    cost[i][k] = task.dev_cost[&ecu.id].to_array();
                }
            }
        }

        let mut wcrt = vec![vec![None; n]; n];
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for e in &instance.edges {
            let (a, b) = (task_pos[e.from.as_str()], task_pos[e.to.as_str()]);
            wcrt[a][b] = Some(e.wcrt_ms);
            preds[b].push(a);
            succs[a].push(b);
        }
        for list in preds.iter_mut().chain(succs.iter_mut()) {
            list.sort_unstable();
        }

        let mut indeg: Vec<usize> = preds.iter().map(|p| p.len()).collect();
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            topo.push(v);
            for &w in &succs[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }

        let dset = compute_decomposition_set(instance);
        Ok(IndexedInstance {
            source: instance.clone(),
            task_level: instance.tasks.iter().map(|t| t.asil.value()).collect(),
            ecu_level: instance.ecus.iter().map(|e| e.asil.value()).collect(),
            ecu_memory: instance.ecus.iter().map(|e| e.memory.0).collect(),
            ecu_rate: instance.ecus.iter().map(|e| e.failure_rate_per_hour).collect(),
            memory: instance
                .tasks
                .iter()
                .map(|t| t.memory.to_array().map(|mb| mb.0))
                .collect(),
            app_of: instance
                .tasks
                .iter()
                .map(|t| app_pos[t.application.as_str()])
                .collect(),
            decomposed: task_ids.iter().map(|id| dset.contains(id)).collect(),
            task_ids,
            ecu_ids,
            app_ids,
            loc,
            wcet,
            cost,
            wcrt,
            preds,
            succs,
            topo,
            lifetime: instance.lifetime_hours,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.task_ids.len()
    }

    pub fn n_ecus(&self) -> usize {
        self.ecu_ids.len()
    }

    pub fn app_index(&self, id: &str) -> Option<usize> {
        self.app_ids.iter().position(|a| a == id)
    }

    /// Levels of the ECUs task `i` may run on.
    pub fn localized_levels(&self, i: usize) -> Vec<u8> {
        (0..self.n_ecus())
            .filter(|&k| self.loc[i][k])
            .map(|k| self.ecu_level[k])
            .collect()
    }

    /// Schemes a task may use: all platform-compatible decompositions for
    /// tasks in the decomposition set, the single original level otherwise.
    pub fn candidate_schemes(&self, i: usize) -> Vec<DecompositionScheme> {
        let level = self.task_level[i];
        let asil = crate::model::Asil::from_value(level).expect("validated level");
        if self.decomposed[i] {
            let levels = self.localized_levels(i);
            enumerate_schemes(asil)
                .expect("validated level is nonzero")
                .into_iter()
                .filter(|s| is_compatible_levels(s, &levels))
                .collect()
        } else {
            vec![DecompositionScheme::trivial(asil)]
        }
    }

    /// Whether the reliability target is enforced for task `i`. Only the
    /// decomposition set is checked unless `strict` extends it to every task.
    pub fn reliability_applies(&self, i: usize, strict: bool) -> bool {
        let asil = crate::model::Asil::from_value(self.task_level[i]).expect("validated level");
        (self.decomposed[i] || strict) && PmhfTargetTable::default().target(asil).is_some()
    }
}
