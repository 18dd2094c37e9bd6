use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use asil_alloc::solver::lex_epsilon;
use asil_alloc::sweep::{run_sweep, summarize, SweepConfig};
use asil_alloc::{
    build_model, evolve, export_stages, generate, validate_solution, AllocationSolution, BuildOptions,
    Error, GaParams, GenConfig, Limits, ObjectiveKind, Priority, ProblemInstance, Scenario,
    SolveReport, Status,
};

const EXIT_TIMEOUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "asil-alloc", version, about = "ASIL-decomposition-aware task allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance to lexicographic optimality.
    Solve(SolveArgs),
    /// Write the stage-1 and stage-2 models as LP files.
    ExportLp(ExportArgs),
    /// Write a random instance.
    Generate(GenerateArgs),
    /// Median solve times over generated instances, as CSV.
    Bench(BenchArgs),
    /// Run the genetic algorithm and write its history as CSV.
    Ga(GaArgs),
    /// Run the exact solver and the genetic algorithm and report the gap.
    Compare(CompareArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// `cost` or `latency`.
    #[arg(long, default_value = "cost")]
    priority: Priority,
    /// Application whose makespan is minimized (default: the first).
    #[arg(long)]
    focus_app: Option<String>,
    /// Check reliability targets on every task, not only decomposed ones.
    #[arg(long)]
    strict_reliability: bool,
}

impl ModelArgs {
    fn options(&self) -> BuildOptions {
        BuildOptions {
            focus_app: self.focus_app.clone(),
            priority: self.priority,
            strict_reliability: self.strict_reliability,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Wall-clock limit in seconds.
    #[arg(long, env = "ASIL_ALLOC_TIME_LIMIT")]
    time_limit: Option<f64>,
    /// Recorded in the output; the solver itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solution file (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    instance: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Solve stage 1 and write its optimum into the stage-2 bound.
    #[arg(long)]
    with_bound: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "d-on-c")]
    scenario: Scenario,
    #[arg(long, default_value_t = 0.9)]
    edge_probability: f64,
    /// Share of ASIL C tasks in the no-decomp scenario.
    #[arg(long, default_value_t = 0.5)]
    c_fraction: f64,
    #[arg(long)]
    binding_memory: bool,
    #[arg(long)]
    decompose_all: bool,
}

impl GenArgs {
    fn config(&self) -> GenConfig {
        GenConfig {
            scenario: self.scenario,
            edge_probability: self.edge_probability,
            c_fraction: self.c_fraction,
            binding_memory: self.binding_memory,
            decompose_all: self.decompose_all,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    tasks: usize,
    #[arg(long, default_value_t = 4)]
    ecus: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    gen: GenArgs,
    /// Instance file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Inclusive task-count range such as `3..6`.
    #[arg(long, default_value = "3..6")]
    tasks_range: String,
    /// Repeat to sweep several scenarios; all three when absent.
    #[arg(long)]
    scenario: Vec<Scenario>,
    #[arg(long, default_value_t = 4)]
    ecus: usize,
    /// Instances per point.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Solves per instance; the fastest is kept.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value = "cost")]
    priority: Priority,
    /// Per-instance wall-clock limit in seconds.
    #[arg(long, env = "ASIL_ALLOC_TIME_LIMIT")]
    time_limit: Option<f64>,
    /// Write one row per solved instance instead of medians.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GaFlags {
    #[arg(long, default_value_t = 100)]
    population: usize,
    #[arg(long, default_value_t = 200)]
    generations: usize,
    #[arg(long, default_value_t = 3)]
    tournament: usize,
    #[arg(long, default_value_t = 0.9)]
    crossover: f64,
    #[arg(long, default_value_t = 0.1)]
    mutation: f64,
    /// Penalty per violation (default: ten times the summed worst task cost).
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long, default_value_t = 1)]
    elitism: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ignore ECU memory capacities.
    #[arg(long)]
    no_memory: bool,
    /// Ignore localization lists.
    #[arg(long)]
    no_localization: bool,
}

impl GaFlags {
    fn params(&self) -> GaParams {
        GaParams {
            population: self.population,
            generations: self.generations,
            tournament: self.tournament,
            crossover: self.crossover,
            mutation: self.mutation,
            penalty_weight: self.penalty,
            elitism: self.elitism,
            seed: self.seed,
            enforce_memory: !self.no_memory,
            enforce_localization: !self.no_localization,
            strict_reliability: false,
        }
    }
}

#[derive(Args)]
struct GaArgs {
    instance: PathBuf,
    #[command(flatten)]
    ga: GaFlags,
    /// History CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    instance: PathBuf,
    #[command(flatten)]
    ga: GaFlags,
    #[arg(long, env = "ASIL_ALLOC_TIME_LIMIT")]
    time_limit: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors share the exit code of other input errors; 2 means timeout.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::ExportLp(a) => cmd_export(a).map(|_| 0),
        Command::Generate(a) => cmd_generate(a).map(|_| 0),
        Command::Bench(a) => cmd_bench(a).map(|_| 0),
        Command::Ga(a) => cmd_ga(a).map(|_| 0),
        Command::Compare(a) => cmd_compare(a).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> Result<ProblemInstance> {
    ProblemInstance::from_path(path).with_context(|| format!("cannot load {}", path.display()))
}

fn limits(seconds: Option<f64>) -> Result<Limits> {
    match seconds {
        None => Ok(Limits::default()),
        Some(s) if s.is_finite() && s > 0.0 => Ok(Limits::with_time(Duration::from_secs_f64(s))),
        Some(s) => bail!("time limit must be positive, got {s}"),
    }
}

fn cmd_solve(a: SolveArgs) -> Result<u8> {
    let instance = load(&a.instance)?;
    let limits = limits(a.time_limit)?;
    let model = match build_model(&instance, &a.model.options()) {
        Ok(m) => m,
        Err(Error::Infeasible { task, reason }) => {
            println!("status=infeasible");
            eprintln!("infeasible: task {task}: {reason}");
            return Ok(EXIT_INFEASIBLE);
        }
        Err(e) => return Err(e.into()),
    };
    let report = asil_alloc::solve(&model, &limits)?;
    println!("status={}", status_name(report.status));
    if let Some(sol) = &report.solution {
        println!("{}", summary_line(sol, a.model.priority));
        print!("{}", schedule_table(sol, &instance));
        let problems = validate_solution(&instance, sol);
        for v in &problems {
            eprintln!("warning: {v}");
        }
    }
    if let Some(out) = &a.out {
        let text = solution_json(&report, &a, &instance)?;
        fs::write(out, text).with_context(|| format!("cannot write {}", out.display()))?;
    }
    Ok(match report.status {
        Status::Optimal => 0,
        Status::Timeout => EXIT_TIMEOUT,
        Status::Infeasible => {
            eprintln!("infeasible: no allocation satisfies every constraint");
            EXIT_INFEASIBLE
        }
    })
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::Timeout => "timeout",
        Status::Infeasible => "infeasible",
    }
}

fn summary_line(sol: &AllocationSolution, priority: Priority) -> String {
    let latency = sol.makespan_per_app.values().next().copied().unwrap_or(0.0);
    match priority {
        Priority::CostFirst => format!("cost={} latency={latency}", sol.cost_total),
        Priority::LatencyFirst => format!("latency={latency} cost={}", sol.cost_total),
    }
}

fn schedule_table(sol: &AllocationSolution, instance: &ProblemInstance) -> String {
    let mut rows: Vec<[String; 5]> = Vec::new();
    let mut placements: Vec<_> = sol.placements.iter().collect();
    let ecu_pos = |id: &str| instance.ecus.iter().position(|e| e.id == id).unwrap_or(usize::MAX);
    placements.sort_by(|a, b| {
        ecu_pos(&a.ecu)
            .cmp(&ecu_pos(&b.ecu))
            .then(a.start_ms.total_cmp(&b.start_ms))
            .then(a.task.cmp(&b.task))
    });
    for p in placements {
        let wcet = instance
            .task(&p.task)
            .and_then(|t| t.wcet_ms.get(&p.ecu))
            .map_or(0.0, |w| w.at(p.asil.value()));
        rows.push([
            p.ecu.clone(),
            p.task.clone(),
            p.asil.to_string(),
            format!("{}", p.start_ms),
            format!("{}", p.start_ms + wcet),
        ]);
    }
    let header = ["ECU", "task", "ASIL", "start", "end"].map(String::from);
    let mut width = header.clone().map(|h| h.len());
    for r in &rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for r in std::iter::once(&header).chain(&rows) {
        let line: Vec<String> = r
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, w))| if i >= 3 { format!("{c:>w$}") } else { format!("{c:<w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn solution_json(report: &SolveReport, a: &SolveArgs, instance: &ProblemInstance) -> Result<String> {
    let mut root = match &report.solution {
        Some(sol) => serde_json::to_value(sol)?,
        None => serde_json::json!({}),
    };
    let map = root.as_object_mut().expect("solution serializes to an object");
    map.insert("status".into(), serde_json::to_value(report.status)?);
    map.insert("priority".into(), serde_json::to_value(a.model.priority)?);
    map.insert("seed".into(), a.seed.into());
    map.insert(
        "stats".into(),
        serde_json::json!({
            "objectives": report.objectives,
            "nodes": report.nodes,
            "wall_time_s": report.wall_time.as_secs_f64(),
            "tasks": instance.tasks.len(),
            "ecus": instance.ecus.len(),
        }),
    );
    Ok(serde_json::to_string_pretty(&root)? + "\n")
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let instance = load(&a.instance)?;
    let model = build_model(&instance, &a.model.options())?;
    let bound = if a.with_bound {
        let first = model.objectives[0].kind;
        let report = asil_alloc::solve(&model, &Limits::default())?;
        match report.objective(first) {
            Some(v) => Some(v + lex_epsilon(first, v)),
            None => bail!("stage 1 has no optimum ({})", status_name(report.status)),
        }
    } else {
        None
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let stem = a
        .instance
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    let paths = export_stages(&model, &a.out_dir, stem, bound)?;
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let instance = generate(a.tasks, a.ecus, a.seed, &a.gen.config())?;
    match &a.out {
        Some(path) => instance.write_to(path)?,
        None => print!("{}", instance.to_json_pretty()),
    }
    Ok(())
}

fn parse_range(text: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let (lo, hi) = text
        .split_once("..")
        .with_context(|| format!("task range `{text}` is not of the form A..B"))?;
    let hi = hi.trim_start_matches('=');
    let lo: usize = lo.trim().parse().with_context(|| format!("bad range start `{lo}`"))?;
    let hi: usize = hi.trim().parse().with_context(|| format!("bad range end `{hi}`"))?;
    if lo == 0 || lo > hi {
        bail!("task range `{text}` is empty");
    }
    Ok(lo..=hi)
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let scenarios = if a.scenario.is_empty() {
        vec![Scenario::DOnC, Scenario::COnB, Scenario::NoDecomp]
    } else {
        a.scenario.clone()
    };
    let config = SweepConfig {
        tasks: parse_range(&a.tasks_range)?,
        scenarios,
        n_ecus: a.ecus,
        seeds: a.seeds,
        repeats: a.repeats,
        priority: a.priority,
        limits: limits(a.time_limit)?,
        base: GenConfig::default(),
    };
    let samples = run_sweep(&config)?;
    let mut writer = csv::Writer::from_writer(output(a.out.as_deref())?);
    if a.raw {
        writer.write_record(["n_tasks", "scenario", "seed", "solve_ms", "nodes", "status"])?;
        for s in &samples {
            writer.write_record([
                s.n_tasks.to_string(),
                s.scenario.to_string(),
                s.seed.to_string(),
                format!("{:.4}", s.solve_ms),
                s.nodes.to_string(),
                status_name(s.status).to_string(),
            ])?;
        }
    } else {
        writer.write_record(["n_tasks", "scenario", "solve_ms", "nodes", "seeds", "timeouts"])?;
        for r in summarize(&samples) {
            writer.write_record([
                r.n_tasks.to_string(),
                r.scenario.to_string(),
                format!("{:.4}", r.solve_ms),
                r.nodes.to_string(),
                r.seeds.to_string(),
                r.timeouts.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    })
}

fn cmd_ga(a: GaArgs) -> Result<()> {
    let instance = load(&a.instance)?;
    let result = evolve(&instance, &a.ga.params())?;
    eprintln!(
        "fitness={} cost={}",
        result.best_fitness,
        result.best.cost(&instance)
    );
    let mut writer = csv::Writer::from_writer(output(a.out.as_deref())?);
    writer.write_record(["generation", "best", "mean"])?;
    for g in &result.history {
        writer.write_record([g.generation.to_string(), g.best.to_string(), format!("{:.6}", g.mean)])?;
    }
    writer.flush()?;
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let instance = load(&a.instance)?;
    let model = build_model(&instance, &BuildOptions::default())?;
    let report = asil_alloc::solve(&model, &limits(a.time_limit)?)?;
    let Some(ilp) = report.objective(ObjectiveKind::Cost) else {
        bail!("exact solver found no optimum ({})", status_name(report.status));
    };
    let ga = evolve(&instance, &a.ga.params())?;
    let gap = (ga.best_fitness - ilp) / ilp;
    println!("ilp={ilp} ga={} gap={gap:.6}", ga.best_fitness);
    Ok(())
}
