//! Solver-neutral mixed-integer model of the allocation problem.
//!
//! [`build_model`] compiles an instance into variables, tagged linear
//! constraints and an ordered pair of objectives. The model can be written
//! to LP text ([`export_lp`]) or handed to the embedded solver.

mod build;
mod lp;
mod validate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::indexed::IndexedInstance;

pub use build::{build_model, BuildOptions};
pub use lp::{export_lp, export_stages, write_lp, LpStage};
pub use validate::{validate_solution, validate_solution_with, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpVariable {
    pub name: String,
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

/// Constraint family a constraint (or a violation) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    /// An undecomposed task is mapped to exactly one ECU.
    SingleMapping,
    /// Weighted replica counts sum to the original ASIL.
    SchemeSum,
    /// Replicas placed per level match the chosen scheme.
    SchemeMapping,
    /// Replicas of one task sit on pairwise distinct ECUs.
    DistinctEcu,
    /// Tasks only run where their peripherals are.
    Localization,
    /// Hosted memory fits each ECU.
    Memory,
    /// An undecomposed task runs on an ECU supporting its ASIL.
    AsilCompat,
    /// A replica runs on an ECU supporting the replica's level.
    ReplicaAsilCompat,
    /// Dependent tasks on the same ECU run in sequence.
    PrecedenceSameEcu,
    /// Dependent tasks on different ECUs are separated by the message WCRT.
    PrecedenceCrossEcu,
    /// Co-located independent tasks do not overlap.
    NonOverlap,
    /// Lower branch of the big-M ordering disjunction.
    OrderLower,
    /// Upper branch of the big-M ordering disjunction.
    OrderUpper,
    /// Co-located tasks are ordered one way only.
    OrderExclusive,
    /// Dependencies fix the ordering variable.
    OrderFixed,
    /// Ordering of task pairs is consistent across ECUs.
    OrderConsistency,
    /// The application makespan bounds every finish time.
    Makespan,
    /// Random hardware failure target of a task.
    Reliability,
    /// Start times are nonnegative.
    StartTime,
    /// Bound on the higher-priority objective in a lexicographic stage.
    LexBound,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::SingleMapping => "single-mapping",
            Family::SchemeSum => "scheme-sum",
            Family::SchemeMapping => "scheme-mapping",
            Family::DistinctEcu => "distinct-ecu",
            Family::Localization => "localization",
            Family::Memory => "memory",
            Family::AsilCompat => "asil-compat",
            Family::ReplicaAsilCompat => "replica-asil-compat",
            Family::PrecedenceSameEcu => "precedence-same-ecu",
            Family::PrecedenceCrossEcu => "precedence-cross-ecu",
            Family::NonOverlap => "non-overlap",
            Family::OrderLower => "order-lower",
            Family::OrderUpper => "order-upper",
            Family::OrderExclusive => "order-exclusive",
            Family::OrderFixed => "order-fixed",
            Family::OrderConsistency => "order-consistency",
            Family::Makespan => "makespan",
            Family::Reliability => "reliability",
            Family::StartTime => "start-time",
            Family::LexBound => "lex-bound",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: Family,
}

impl LinearConstraint {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Whether `values` satisfies the constraint up to `tol`.
    pub fn holds(&self, values: &[f64], tol: f64) -> bool {
        let lhs = self.lhs(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearExpr {
    pub terms: Vec<(VarId, f64)>,
}

impl LinearExpr {
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// Total development cost.
    Cost,
    /// Makespan of the focus application.
    Makespan,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::Cost => "cost",
            ObjectiveKind::Makespan => "latency",
        })
    }
}

/// A minimization objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub expr: LinearExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Priority {
    #[default]
    CostFirst,
    LatencyFirst,
}

impl Priority {
    pub fn order(self) -> [ObjectiveKind; 2] {
        match self {
            Priority::CostFirst => [ObjectiveKind::Cost, ObjectiveKind::Makespan],
            Priority::LatencyFirst => [ObjectiveKind::Makespan, ObjectiveKind::Cost],
        }
    }
}

impl std::str::FromStr for Priority {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "cost" | "cost-first" => Ok(Priority::CostFirst),
            "latency" | "latency-first" => Ok(Priority::LatencyFirst),
            other => Err(crate::Error::InvalidParameter(format!(
                "priority must be `cost` or `latency`, got `{other}`"
            ))),
        }
    }
}

/// Where each structural variable lives in the variable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelIndex {
    /// `x[i][k][h - 1]`: mapping of task `i` at level `h` on ECU `k`.
    pub x: Vec<Vec<[Option<VarId>; 4]>>,
    /// `alpha[i][h - 1]` for tasks in the decomposition set.
    pub alpha: Vec<Option<[VarId; 4]>>,
    /// `tau[i][k]`: start time of task `i` on ECU `k`.
    pub tau: Vec<Vec<VarId>>,
    /// `theta[i][j]` for `i != j`.
    pub theta: Vec<Vec<Option<VarId>>>,
    pub phi: VarId,
    pub focus_app: usize,
}

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub variables: Vec<MilpVariable>,
    pub constraints: Vec<LinearConstraint>,
    /// Minimization objectives in priority order.
    pub objectives: Vec<Objective>,
    pub big_m: f64,
    pub priority: Priority,
    pub strict_reliability: bool,
    pub index: ModelIndex,
    pub instance: Arc<IndexedInstance>,
}

impl MilpModel {
    pub fn var(&self, id: VarId) -> &MilpVariable {
        &self.variables[id.0]
    }

    pub fn count_tag(&self, tag: Family) -> usize {
        self.constraints.iter().filter(|c| c.tag == tag).count()
    }

    pub fn objective(&self, kind: ObjectiveKind) -> &Objective {
        self.objectives
            .iter()
            .find(|o| o.kind == kind)
            .expect("both objectives are always present")
    }

    /// Copy of the model for lexicographic stage 2: the higher-priority
    /// objective is bounded by `bound` and only the second objective remains.
    pub fn with_lex_bound(&self, bound: f64) -> MilpModel {
        let mut model = self.clone();
        let first = model.objectives.remove(0);
        model.constraints.push(LinearConstraint {
            terms: first.expr.terms,
            sense: Sense::Le,
            rhs: bound,
            tag: Family::LexBound,
        });
        model
    }

    /// Every constraint or bound violated by a full assignment.
    pub fn violated(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (v, var) in self.variables.iter().enumerate() {
            let x = values[v];
            if x < var.lo - tol || x > var.hi + tol {
                out.push(format!("{} = {x} outside [{}, {}]", var.name, var.lo, var.hi));
            }
            if var.kind != VarKind::Continuous && (x - x.round()).abs() > tol {
                out.push(format!("{} = {x} not integral", var.name));
            }
        }
        for (c, con) in self.constraints.iter().enumerate() {
            if !con.holds(values, tol) {
                out.push(format!(
                    "constraint #{c} [{}]: lhs {} {} {}",
                    con.tag,
                    con.lhs(values),
                    con.sense,
                    con.rhs
                ));
            }
        }
        out
    }

    pub fn stats(&self) -> ModelStats {
        let mut stats = ModelStats::default();
        for v in &self.variables {
            match v.kind {
                VarKind::Binary => stats.binaries += 1,
                VarKind::Integer => stats.integers += 1,
                VarKind::Continuous => stats.continuous += 1,
            }
        }
        stats.constraints = self.constraints.len();
        stats
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ModelStats {
    pub binaries: usize,
    pub integers: usize,
    pub continuous: usize,
    pub constraints: usize,
}
