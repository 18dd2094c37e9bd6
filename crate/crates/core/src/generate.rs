//! Random instances for scaling experiments.
//!
//! Dependencies are forward edges of a random topological order, each kept
//! with probability `edge_probability`. All draws come from one ChaCha
//! stream seeded by the caller, so a seed fixes the instance byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Asil, DependencyEdge, Ecu, LevelTable, Megabytes, ProblemInstance, Task};

/// Failure rates assigned to ECUs in turn.
pub const FAILURE_RATES: [f64; 4] = [1e-6, 2e-6, 3e-6, 8e-7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// ASIL D tasks on ASIL C ECUs: every task must be decomposed.
    #[default]
    DOnC,
    /// ASIL C tasks on ASIL B ECUs.
    COnB,
    /// ASIL C and B tasks on ASIL C ECUs; nothing is decomposed.
    NoDecomp,
    /// Task levels drawn uniformly from A to D, ECU levels from B to D.
    Mixed,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::DOnC, Scenario::COnB, Scenario::NoDecomp, Scenario::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::DOnC => "d-on-c",
            Scenario::COnB => "c-on-b",
            Scenario::NoDecomp => "no-decomp",
            Scenario::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub scenario: Scenario,
    pub edge_probability: f64,
    /// Share of ASIL C tasks in the no-decomposition scenario.
    pub c_fraction: f64,
    /// Size ECU memories so that they constrain the mapping.
    pub binding_memory: bool,
    pub decompose_all: bool,
    pub lifetime_hours: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            scenario: Scenario::DOnC,
            edge_probability: 0.9,
            c_fraction: 0.5,
            binding_memory: false,
            decompose_all: false,
            lifetime_hours: 5000.0,
        }
    }
}

impl GenConfig {
    pub fn scenario(scenario: Scenario) -> Self {
        GenConfig {
            scenario,
            ..Default::default()
        }
    }
}

const APP: &str = "A1";

pub fn generate(n_tasks: usize, n_ecus: usize, seed: u64, config: &GenConfig) -> Result<ProblemInstance> {
    if n_tasks == 0 || n_ecus == 0 {
        return Err(Error::InvalidParameter("need at least one task and one ECU".into()));
    }
    if !(0.0..=1.0).contains(&config.edge_probability) || !(0.0..=1.0).contains(&config.c_fraction) {
        return Err(Error::InvalidParameter("probabilities must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let ecu_level = |rng: &mut ChaCha8Rng| match config.scenario {
        Scenario::DOnC | Scenario::NoDecomp => Asil::C,
        Scenario::COnB => Asil::B,
        Scenario::Mixed => Asil::from_value(rng.gen_range(2..=4)).expect("2..=4"),
    };
    let mut ecus: Vec<Ecu> = (0..n_ecus)
        .map(|k| Ecu {
            id: format!("E{}", k + 1),
            asil: ecu_level(&mut rng),
            memory: Megabytes(0),
            failure_rate_per_hour: FAILURE_RATES[k % FAILURE_RATES.len()],
        })
        .collect();

    let mut tasks = Vec::with_capacity(n_tasks);
    for i in 0..n_tasks {
        let asil = match config.scenario {
            Scenario::DOnC => Asil::D,
            Scenario::COnB => Asil::C,
            Scenario::NoDecomp if rng.gen_bool(config.c_fraction) => Asil::C,
            Scenario::NoDecomp => Asil::B,
            Scenario::Mixed => Asil::from_value(rng.gen_range(1..=4)).expect("1..=4"),
        };
        let base_mem: u64 = rng.gen_range(1..=10);
        let memory = LevelTable::from_array([0, 1, 2, 3].map(|s| Megabytes(base_mem + 2 * s)));
        let mut wcet_ms = BTreeMap::new();
        let mut dev_cost = BTreeMap::new();
        for ecu in &ecus {
            let a: u32 = rng.gen_range(1..=20);
            wcet_ms.insert(
                ecu.id.clone(),
                LevelTable::from_array([0, 1, 2, 3].map(|s| (a + 2 * s) as f64)),
            );
            let ca: u32 = rng.gen_range(1..=10);
            let cb = ca + rng.gen_range(1..=5);
            let cc = cb + rng.gen_range(1..=5);
            let cd = (cc + 1).max(2 * cb + 1) + rng.gen_range(0..=5);
            dev_cost.insert(
                ecu.id.clone(),
                LevelTable::from_array([ca, cb, cc, cd].map(f64::from)),
            );
        }
        tasks.push(Task {
            id: format!("T{}", i + 1),
            asil,
            application: APP.into(),
            memory,
            wcet_ms,
            dev_cost,
            localization: None,
        });
    }

    let mut topo: Vec<usize> = (0..n_tasks).collect();
    topo.shuffle(&mut rng);
    let mut edges = Vec::new();
    for a in 0..n_tasks {
        for b in a + 1..n_tasks {
            if rng.gen_bool(config.edge_probability) {
                edges.push(DependencyEdge {
                    from: tasks[topo[a]].id.clone(),
                    to: tasks[topo[b]].id.clone(),
                    wcrt_ms: f64::from(rng.gen_range(1u32..=15)),
                });
            }
        }
    }

    // Every replica of every task fits anywhere unless memory should bind,
    // in which case an ECU holds about twice its fair share.
    let total: u64 = tasks.iter().map(|t| t.memory.d.0 * 4).sum();
    let capacity = if config.binding_memory {
        (2 * total / 4 / n_ecus as u64).max(tasks.iter().map(|t| t.memory.d.0).max().unwrap_or(1))
    } else {
        total
    };
    for ecu in &mut ecus {
        ecu.memory = Megabytes(capacity);
    }

    Ok(ProblemInstance {
        ecus,
        tasks,
        edges,
        applications: vec![APP.into()],
        lifetime_hours: config.lifetime_hours,
        decompose_all: config.decompose_all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_instance;

    #[test]
    fn valid_and_deterministic() {
        for scenario in Scenario::ALL {
            let cfg = GenConfig::scenario(scenario);
            let a = generate(6, 4, 7, &cfg).unwrap();
            assert!(validate_instance(&a).is_empty(), "{scenario}: {:?}", validate_instance(&a));
            let b = generate(6, 4, 7, &cfg).unwrap();
            assert_eq!(a.to_json_pretty(), b.to_json_pretty());
        }
    }

    #[test]
    fn single_task_has_no_edges() {
        let inst = generate(1, 4, 3, &GenConfig::default()).unwrap();
        assert!(inst.edges.is_empty());
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(generate(0, 4, 1, &GenConfig::default()).is_err());
        assert!(generate(3, 0, 1, &GenConfig::default()).is_err());
    }

    #[test]
    fn edge_density_near_p() {
        let cfg = GenConfig::default();
        let mut total = 0.0;
        for seed in 0..1000 {
            total += generate(6, 4, seed, &cfg).unwrap().edges.len() as f64 / 15.0;
        }
        let mean = total / 1000.0;
        assert!((mean - 0.9).abs() <= 0.02, "{mean}");
    }

    #[test]
    fn cost_hierarchy() {
        for seed in 0..200 {
            let inst = generate(5, 3, seed, &GenConfig::scenario(Scenario::Mixed)).unwrap();
            for t in &inst.tasks {
                for c in t.dev_cost.values() {
                    assert!(c.d > c.c && c.c > c.b && c.b > c.a && c.d > 2.0 * c.b);
                }
                for w in t.wcet_ms.values() {
                    assert!(w.a >= 1.0 && w.a <= 20.0 && w.d == w.a + 6.0);
                }
            }
            for e in &inst.edges {
                assert!((1.0..=15.0).contains(&e.wcrt_ms));
            }
        }
    }
}
