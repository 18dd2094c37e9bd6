//! Penalty-based genetic algorithm for decomposition and mapping.
//!
//! Each task carries a decomposition scheme and one `(ECU, level)` gene per
//! replica. Fitness is the development cost plus a penalty per task missing
//! its reliability target and per overfull ECU. Scheduling is not modelled.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decomposition::{enumerate_schemes, is_compatible_levels, DecompositionScheme};
use crate::error::{Error, Result};
use crate::model::{compute_decomposition_set, AllocationSolution, Asil, Placement, ProblemInstance};
use crate::reliability::{check_pmhf, PmhfTargetTable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover: f64,
    pub mutation: f64,
    /// Penalty per violation; ten times the summed worst-case task cost when
    /// `None`.
    pub penalty_weight: Option<f64>,
    pub elitism: usize,
    pub seed: u64,
    pub enforce_memory: bool,
    pub enforce_localization: bool,
    pub strict_reliability: bool,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 100,
            generations: 200,
            tournament: 3,
            crossover: 0.9,
            mutation: 0.1,
            penalty_weight: None,
            elitism: 1,
            seed: 0,
            enforce_memory: true,
            enforce_localization: true,
            strict_reliability: false,
        }
    }
}

impl GaParams {
    fn check(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.population == 0 || self.tournament == 0 {
            return Err(Error::InvalidParameter("population and tournament must be positive".into()));
        }
        if !prob(self.crossover) || !prob(self.mutation) {
            return Err(Error::InvalidParameter("probabilities must lie in [0, 1]".into()));
        }
        if self.elitism > self.population {
            return Err(Error::InvalidParameter("elitism exceeds population".into()));
        }
        if let Some(w) = self.penalty_weight {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter("penalty weight must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskGenes {
    pub scheme: DecompositionScheme,
    /// `(ecu index, level)` per replica.
    pub genes: Vec<(usize, u8)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GaChromosome {
    pub tasks: Vec<TaskGenes>,
}

impl GaChromosome {
    /// Encode the mapping of a solution; `None` if it names unknown entities.
    pub fn from_solution(instance: &ProblemInstance, solution: &AllocationSolution) -> Option<Self> {
        let mut tasks = Vec::new();
        for task in &instance.tasks {
            let mut genes = Vec::new();
            for p in solution.placements_of(&task.id) {
                let k = instance.ecus.iter().position(|e| e.id == p.ecu)?;
                genes.push((k, p.asil.value()));
            }
            let scheme = solution
                .schemes
                .get(&task.id)
                .copied()
                .unwrap_or_else(|| DecompositionScheme::trivial(task.asil));
            tasks.push(TaskGenes { scheme, genes });
        }
        Some(GaChromosome { tasks })
    }

    /// Placements with zero start times.
    pub fn placements(&self, instance: &ProblemInstance) -> Vec<Placement> {
        let mut out = Vec::new();
        for (task, tg) in instance.tasks.iter().zip(&self.tasks) {
            for &(k, h) in &tg.genes {
                out.push(Placement {
                    task: task.id.clone(),
                    ecu: instance.ecus[k].id.clone(),
                    asil: Asil::from_value(h).expect("levels 1..=4"),
                    start_ms: 0.0,
                });
            }
        }
        out
    }

    pub fn cost(&self, instance: &ProblemInstance) -> f64 {
        instance
            .tasks
            .iter()
            .zip(&self.tasks)
            .flat_map(|(task, tg)| {
                tg.genes
                    .iter()
                    .map(move |&(k, h)| task.dev_cost[&instance.ecus[k].id].at(h))
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaResult {
    pub best: GaChromosome,
    pub best_fitness: f64,
    pub penalty_weight: f64,
    pub history: Vec<GenerationStats>,
}

/// Ten times the sum over tasks of the most expensive possible replica set.
pub fn default_penalty_weight(instance: &ProblemInstance) -> f64 {
    let total: f64 = instance
        .tasks
        .iter()
        .map(|t| {
            let top = t
                .dev_cost
                .values()
                .map(|c| c.d.max(c.c).max(c.b).max(c.a))
                .fold(0.0, f64::max);
            top * t.asil.value() as f64
        })
        .sum();
    10.0 * total
}

/// Cost plus `penalty_weight` per task failing its reliability target and,
/// if `enforce_memory`, per ECU over capacity.
pub fn fitness(
    chromosome: &GaChromosome,
    instance: &ProblemInstance,
    penalty_weight: f64,
    params: &GaParams,
) -> f64 {
    let dset = compute_decomposition_set(instance);
    let targets = PmhfTargetTable::default();
    let mut violations = 0usize;
    for (task, tg) in instance.tasks.iter().zip(&chromosome.tasks) {
        let checked = (dset.contains(&task.id) || params.strict_reliability)
            && targets.target(task.asil).is_some();
        if !checked {
            continue;
        }
        let rates: Vec<f64> = tg
            .genes
            .iter()
            .map(|&(k, _)| instance.ecus[k].failure_rate_per_hour)
            .collect();
        match check_pmhf(task.asil, &rates, instance.lifetime_hours) {
            Ok(c) if c.passed() => {}
            _ => violations += 1,
        }
    }
    if params.enforce_memory {
        let mut used = vec![0u64; instance.ecus.len()];
        for (task, tg) in instance.tasks.iter().zip(&chromosome.tasks) {
            for &(k, h) in &tg.genes {
                used[k] += task.memory.at(h).0;
            }
        }
        violations += used
            .iter()
            .zip(&instance.ecus)
            .filter(|(u, e)| **u > e.memory.0)
            .count();
    }
    chromosome.cost(instance) + penalty_weight * violations as f64
}

/// Per-task gene pools derived from the instance.
struct Library {
    schemes: Vec<Vec<DecompositionScheme>>,
    /// ECUs each task may use.
    hosts: Vec<Vec<usize>>,
    ecu_level: Vec<u8>,
}

impl Library {
    fn new(instance: &ProblemInstance, params: &GaParams) -> Result<Library> {
        let dset = compute_decomposition_set(instance);
        let ecu_level: Vec<u8> = instance.ecus.iter().map(|e| e.asil.value()).collect();
        let mut schemes = Vec::new();
        let mut hosts = Vec::new();
        for task in &instance.tasks {
            let h: Vec<usize> = (0..instance.ecus.len())
                .filter(|&k| {
                    let id = &instance.ecus[k].id;
                    task.dev_cost.contains_key(id)
                        && task.wcet_ms.contains_key(id)
                        && (!params.enforce_localization || task.is_localized(id))
                })
                .collect();
            let levels: Vec<u8> = h.iter().map(|&k| ecu_level[k]).collect();
            let pool: Vec<DecompositionScheme> = if dset.contains(&task.id) {
                enumerate_schemes(task.asil)?
            } else {
                vec![DecompositionScheme::trivial(task.asil)]
            }
            .into_iter()
            .filter(|s| is_compatible_levels(s, &levels))
            .collect();
            if pool.is_empty() {
                return Err(Error::Infeasible {
                    task: task.id.clone(),
                    reason: "no scheme fits the allowed ECUs".into(),
                });
            }
            schemes.push(pool);
            hosts.push(h);
        }
        Ok(Library {
            schemes,
            hosts,
            ecu_level,
        })
    }

    fn random_task(&self, i: usize, rng: &mut ChaCha8Rng) -> TaskGenes {
        let scheme = *self.schemes[i].choose(rng).expect("nonempty pool");
        let mut levels = scheme.levels();
        levels.sort_unstable_by(|a, b| b.cmp(a));
        let mut genes: Vec<(usize, u8)> = Vec::with_capacity(levels.len());
        for h in levels {
            let free: Vec<usize> = self.hosts[i]
                .iter()
                .copied()
                .filter(|&k| self.ecu_level[k] >= h && genes.iter().all(|g| g.0 != k))
                .collect();
            let k = *free.choose(rng).expect("compatible schemes always fit");
            genes.push((k, h));
        }
        TaskGenes { scheme, genes }
    }

    fn random(&self, rng: &mut ChaCha8Rng) -> GaChromosome {
        GaChromosome {
            tasks: (0..self.schemes.len()).map(|i| self.random_task(i, rng)).collect(),
        }
    }

    /// Move one replica to another compatible ECU; a clash is repaired with
    /// the cheapest unused compatible ECU, or the scheme is drawn anew.
    fn move_gene(&self, instance: &ProblemInstance, i: usize, tg: &mut TaskGenes, rng: &mut ChaCha8Rng) {
        let r = rng.gen_range(0..tg.genes.len());
        let h = tg.genes[r].1;
        let options: Vec<usize> = self.hosts[i]
            .iter()
            .copied()
            .filter(|&k| self.ecu_level[k] >= h)
            .collect();
        tg.genes[r].0 = *options.choose(rng).expect("current ECU qualifies");
        let clash = (0..tg.genes.len()).any(|s| s != r && tg.genes[s].0 == tg.genes[r].0);
        if !clash {
            return;
        }
        let task = &instance.tasks[i];
        let cheapest = options
            .iter()
            .copied()
            .filter(|&k| tg.genes.iter().all(|g| g.0 != k))
            .min_by(|&a, &b| {
                let cost = |k: usize| task.dev_cost[&instance.ecus[k].id].at(h);
                cost(a).total_cmp(&cost(b)).then(a.cmp(&b))
            });
        match cheapest {
            Some(k) => tg.genes[r].0 = k,
            None => *tg = self.random_task(i, rng),
        }
    }
}

pub fn evolve(instance: &ProblemInstance, params: &GaParams) -> Result<GaResult> {
    evolve_from(instance, params, Vec::new())
}

/// As [`evolve`], with `seeds` placed at the front of the first generation.
pub fn evolve_from(
    instance: &ProblemInstance,
    params: &GaParams,
    seeds: Vec<GaChromosome>,
) -> Result<GaResult> {
    params.check()?;
    let lib = Library::new(instance, params)?;
    let weight = params
        .penalty_weight
        .unwrap_or_else(|| default_penalty_weight(instance));
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let eval = |c: &GaChromosome| fitness(c, instance, weight, params);

    let mut pop: Vec<GaChromosome> = seeds.into_iter().take(params.population).collect();
    while pop.len() < params.population {
        pop.push(lib.random(&mut rng));
    }
    let mut fit: Vec<f64> = pop.iter().map(eval).collect();
    let mut history = Vec::with_capacity(params.generations + 1);
    let (mut best, mut best_fit) = {
        let i = argmin(&fit);
        (pop[i].clone(), fit[i])
    };
    history.push(stats(0, best_fit, &fit));

    let n_tasks = instance.tasks.len();
    for generation in 1..=params.generations {
        let mut ranked: Vec<usize> = (0..pop.len()).collect();
        ranked.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
        let mut next: Vec<GaChromosome> = ranked[..params.elitism].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < params.population {
            let a = tournament(&fit, params.tournament, &mut rng);
            let b = tournament(&fit, params.tournament, &mut rng);
            let (mut c1, mut c2) = (pop[a].clone(), pop[b].clone());
            if n_tasks >= 2 && rng.gen_bool(params.crossover) {
                let cut = rng.gen_range(1..n_tasks);
                for i in cut..n_tasks {
                    std::mem::swap(&mut c1.tasks[i], &mut c2.tasks[i]);
                }
            }
            for child in [&mut c1, &mut c2] {
                for i in 0..n_tasks {
                    if rng.gen_bool(params.mutation) {
                        if rng.gen_bool(0.5) {
                            child.tasks[i] = lib.random_task(i, &mut rng);
                        } else {
                            lib.move_gene(instance, i, &mut child.tasks[i], &mut rng);
                        }
                    }
                }
            }
            next.push(c1);
            if next.len() < params.population {
                next.push(c2);
            }
        }
        pop = next;
        fit = pop.iter().map(eval).collect();
        let i = argmin(&fit);
        if fit[i] < best_fit {
            best = pop[i].clone();
            best_fit = fit[i];
        }
        history.push(stats(generation, best_fit, &fit));
    }
    Ok(GaResult {
        best,
        best_fitness: best_fit,
        penalty_weight: weight,
        history,
    })
}

fn argmin(fit: &[f64]) -> usize {
    (0..fit.len())
        .min_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)))
        .expect("population is nonempty")
}

fn tournament(fit: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    (0..size)
        .map(|_| rng.gen_range(0..fit.len()))
        .min_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)))
        .expect("tournament size is positive")
}

fn stats(generation: usize, best: f64, fit: &[f64]) -> GenerationStats {
    GenerationStats {
        generation,
        best,
        mean: fit.iter().sum::<f64>() / fit.len() as f64,
    }
}
