//! Domain model: ECUs, tasks, dependency edges and problem instances.
//!
//! Instances are plain data and serialize to the JSON instance format. They
//! may contain inconsistent data until checked with [`validate_instance`];
//! algorithms work on the index-based [`crate::IndexedInstance`] which can
//! only be built from a valid instance.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::decomposition::DecompositionScheme;
use crate::error::{Error, Result};

/// Default system lifetime in hours used for probability-of-failure figures.
pub const DEFAULT_LIFETIME_HOURS: f64 = 5000.0;

/// Automotive Safety Integrity Level.
///
/// The numeric value (`QM`=0, `A`=1 .. `D`=4) is what decomposition
/// arithmetic works on; the derived order coincides with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Asil {
    QM,
    A,
    B,
    C,
    D,
}

impl Asil {
    pub const SAFETY_LEVELS: [Asil; 4] = [Asil::A, Asil::B, Asil::C, Asil::D];

    pub fn value(self) -> u8 {
        match self {
            Asil::QM => 0,
            Asil::A => 1,
            Asil::B => 2,
            Asil::C => 3,
            Asil::D => 4,
        }
    }

    pub fn from_value(value: u8) -> Option<Asil> {
        match value {
            0 => Some(Asil::QM),
            1 => Some(Asil::A),
            2 => Some(Asil::B),
            3 => Some(Asil::C),
            4 => Some(Asil::D),
            _ => None,
        }
    }
}

impl fmt::Display for Asil {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Asil::QM => "QM",
            Asil::A => "A",
            Asil::B => "B",
            Asil::C => "C",
            Asil::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for Asil {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "QM" => Ok(Asil::QM),
            "A" => Ok(Asil::A),
            "B" => Ok(Asil::B),
            "C" => Ok(Asil::C),
            "D" => Ok(Asil::D),
            other => Err(Error::Domain(format!("unknown ASIL `{other}`"))),
        }
    }
}

/// Memory amount in megabytes.
///
/// Deserializes from a bare number (MB) or a string with an `MB`/`GB`
/// suffix, where 1 GB = 1024 MB. Always serializes as a number of MB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Megabytes(pub u64);

impl Megabytes {
    pub fn parse(text: &str) -> Result<Megabytes> {
        let t = text.trim();
        let upper = t.to_ascii_uppercase();
        let (number, scale) = if let Some(n) = upper.strip_suffix("GB") {
            (n.trim(), 1024.0)
        } else if let Some(n) = upper.strip_suffix("MB") {
            (n.trim(), 1.0)
        } else {
            (upper.as_str(), 1.0)
        };
        let value: f64 = number
            .parse()
            .map_err(|_| Error::Domain(format!("malformed memory amount `{t}`")))?;
        Self::from_f64(value * scale).ok_or_else(|| {
            Error::Domain(format!("memory amount `{t}` is not a whole number of MB"))
        })
    }

    fn from_f64(mb: f64) -> Option<Megabytes> {
        if mb.is_finite() && mb >= 0.0 && (mb - mb.round()).abs() < 1e-9 {
            Some(Megabytes(mb.round() as u64))
        } else {
            None
        }
    }
}

impl fmt::Display for Megabytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} MB", self.0)
    }
}

impl Serialize for Megabytes {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u64(self.0)
    }
}

impl<'de> Deserialize<'de> for Megabytes {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct MbVisitor;

        impl<'de> Visitor<'de> for MbVisitor {
            type Value = Megabytes;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number of MB or a string like \"8 GB\" / \"500 MB\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Megabytes, E> {
                Ok(Megabytes(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Megabytes, E> {
                u64::try_from(v)
                    .map(Megabytes)
                    .map_err(|_| E::custom("memory must be nonnegative"))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Megabytes, E> {
                Megabytes::from_f64(v).ok_or_else(|| E::custom("memory must be a whole number of MB"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Megabytes, E> {
                Megabytes::parse(v).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(MbVisitor)
    }
}

/// One value per safety level A..D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTable<T> {
    #[serde(rename = "A")]
    pub a: T,
    #[serde(rename = "B")]
    pub b: T,
    #[serde(rename = "C")]
    pub c: T,
    #[serde(rename = "D")]
    pub d: T,
}

impl<T: Copy> LevelTable<T> {
    pub fn from_array(values: [T; 4]) -> Self {
        LevelTable {
            a: values[0],
            b: values[1],
            c: values[2],
            d: values[3],
        }
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// Value at numeric level `h` in `1..=4`.
    pub fn at(&self, h: u8) -> T {
        match h {
            1 => self.a,
            2 => self.b,
            3 => self.c,
            4 => self.d,
            _ => panic!("safety level {h} out of range 1..=4"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecu {
    pub id: String,
    pub asil: Asil,
    #[serde(rename = "memory")]
    pub memory: Megabytes,
    pub failure_rate_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub asil: Asil,
    pub application: String,
    /// Memory footprint at each ASIL the task (or a replica of it) may run at.
    pub memory: LevelTable<Megabytes>,
    /// WCET in ms keyed by ECU id.
    pub wcet_ms: BTreeMap<String, LevelTable<f64>>,
    /// Development cost keyed by ECU id.
    pub dev_cost: BTreeMap<String, LevelTable<f64>>,
    /// ECUs the task may run on. When absent, every ECU with both WCET and
    /// cost entries is allowed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<Vec<String>>,
}

impl Task {
    pub fn is_localized(&self, ecu_id: &str) -> bool {
        match &self.localization {
            Some(list) => list.iter().any(|e| e == ecu_id),
            None => self.wcet_ms.contains_key(ecu_id) && self.dev_cost.contains_key(ecu_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub from: String,
    pub to: String,
    pub wcrt_ms: f64,
}

fn default_lifetime() -> f64 {
    DEFAULT_LIFETIME_HOURS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub ecus: Vec<Ecu>,
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub edges: Vec<DependencyEdge>,
    pub applications: Vec<String>,
    #[serde(default = "default_lifetime")]
    pub lifetime_hours: f64,
    #[serde(default)]
    pub decompose_all: bool,
}

impl ProblemInstance {
    pub fn from_json_str(text: &str) -> Result<ProblemInstance> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<ProblemInstance> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("instance serializes");
        out.push('\n');
        out
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_pretty()).map_err(|e| Error::io(path, e))
    }

    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn ecu(&self, id: &str) -> Option<&Ecu> {
        self.ecus.iter().find(|e| e.id == id)
    }
}

/// Placement of one (sub)task replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub task: String,
    pub ecu: String,
    pub asil: Asil,
    pub start_ms: f64,
}

/// Value of an ordering support variable for the ordered pair `(first, second)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingVar {
    pub first: String,
    pub second: String,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSolution {
    pub placements: Vec<Placement>,
    pub schemes: BTreeMap<String, DecompositionScheme>,
    pub cost_total: f64,
    pub makespan_per_app: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ordering: Vec<OrderingVar>,
}

impl AllocationSolution {
    pub fn placements_of<'a>(&'a self, task: &'a str) -> impl Iterator<Item = &'a Placement> + 'a {
        self.placements.iter().filter(move |p| p.task == task)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticKind {
    DuplicateId,
    SelfDependency,
    NotADag,
    UnknownTask,
    UnknownEcu,
    UnknownApplication,
    MissingParameter,
    InvalidAsil,
    NonPositive,
    Negative,
    WcetNotMonotone,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub severity: Severity,
    pub entity: String,
    pub message: String,
}

impl Diagnostic {
    fn error(kind: DiagnosticKind, entity: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            severity: Severity::Error,
            entity: entity.into(),
            message: message.into(),
        }
    }

    fn warning(kind: DiagnosticKind, entity: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            severity: Severity::Warning,
            entity: entity.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}: {}", self.entity, self.message)
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn nonnegative(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// Check every structural invariant of an instance.
///
/// Returns one diagnostic per violation; an empty list means the instance is
/// valid. WCET monotonicity violations are reported as warnings.
pub fn validate_instance(instance: &ProblemInstance) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let mut out = Vec::new();

    let mut seen = HashSet::new();
    for ecu in &instance.ecus {
        if !seen.insert(ecu.id.as_str()) {
            out.push(Diagnostic::error(DuplicateId, &ecu.id, "duplicate ECU id"));
        }
        if ecu.asil == Asil::QM {
            out.push(Diagnostic::error(InvalidAsil, &ecu.id, "ECU ASIL must be A..D"));
        }
        if ecu.memory.0 == 0 {
            out.push(Diagnostic::error(NonPositive, &ecu.id, "memory must be > 0"));
        }
        if !positive(ecu.failure_rate_per_hour) {
            out.push(Diagnostic::error(NonPositive, &ecu.id, "failure rate must be > 0"));
        }
    }
    let ecu_ids: HashSet<&str> = instance.ecus.iter().map(|e| e.id.as_str()).collect();

    let mut seen_apps = HashSet::new();
    for app in &instance.applications {
        if !seen_apps.insert(app.as_str()) {
            out.push(Diagnostic::error(DuplicateId, app, "duplicate application id"));
        }
    }

    let mut seen_tasks = HashSet::new();
    for task in &instance.tasks {
        let tid = &task.id;
        if !seen_tasks.insert(tid.as_str()) {
            out.push(Diagnostic::error(DuplicateId, tid, "duplicate task id"));
        }
        if task.asil == Asil::QM {
            out.push(Diagnostic::error(InvalidAsil, tid, "task ASIL must be A..D"));
        }
        if !seen_apps.contains(task.application.as_str()) {
            out.push(Diagnostic::error(
                UnknownApplication,
                tid,
                format!("unknown application `{}`", task.application),
            ));
        }
        for key in task.wcet_ms.keys().chain(task.dev_cost.keys()) {
            if !ecu_ids.contains(key.as_str()) {
                out.push(Diagnostic::error(UnknownEcu, tid, format!("unknown ECU `{key}`")));
            }
        }
        if let Some(list) = &task.localization {
            for key in list {
                if !ecu_ids.contains(key.as_str()) {
                    out.push(Diagnostic::error(
                        UnknownEcu,
                        tid,
                        format!("localization names unknown ECU `{key}`"),
                    ));
                }
            }
        }
        for ecu in &instance.ecus {
            if !task.is_localized(&ecu.id) {
                continue;
            }
            match (task.wcet_ms.get(&ecu.id), task.dev_cost.get(&ecu.id)) {
                (Some(wcet), Some(cost)) => {
                    let w = wcet.to_array();
                    if w.iter().any(|&x| !positive(x)) {
                        out.push(Diagnostic::error(
                            NonPositive,
                            tid,
                            format!("WCET on {} must be > 0", ecu.id),
                        ));
                    } else if w.windows(2).any(|p| p[1] < p[0]) {
                        out.push(Diagnostic::warning(
                            WcetNotMonotone,
                            tid,
                            format!("WCET on {} decreases with a higher ASIL", ecu.id),
                        ));
                    }
                    if cost.to_array().iter().any(|&x| !nonnegative(x)) {
                        out.push(Diagnostic::error(
                            Negative,
                            tid,
                            format!("cost on {} must be >= 0", ecu.id),
                        ));
                    }
                }
                _ => out.push(Diagnostic::error(
                    MissingParameter,
                    tid,
                    format!("missing WCET or cost for localized ECU {}", ecu.id),
                )),
            }
        }
    }

    for edge in &instance.edges {
        let name = format!("{}->{}", edge.from, edge.to);
        if edge.from == edge.to {
            out.push(Diagnostic::error(SelfDependency, &name, "self-dependency"));
        }
        for end in [&edge.from, &edge.to] {
            if !seen_tasks.contains(end.as_str()) {
                out.push(Diagnostic::error(UnknownTask, &name, format!("unknown task `{end}`")));
            }
        }
        if !nonnegative(edge.wcrt_ms) {
            out.push(Diagnostic::error(Negative, &name, "WCRT must be >= 0"));
        }
    }
    let mut pairs = HashSet::new();
    for edge in &instance.edges {
        if !pairs.insert((edge.from.as_str(), edge.to.as_str())) {
            out.push(Diagnostic::error(
                DuplicateId,
                format!("{}->{}", edge.from, edge.to),
                "duplicate dependency edge",
            ));
        }
    }
    if let Some(task) = find_cycle(instance) {
        out.push(Diagnostic::error(NotADag, task, "not a DAG: dependency cycle"));
    }

    if !positive(instance.lifetime_hours) {
        out.push(Diagnostic::error(NonPositive, "lifetime_hours", "lifetime must be > 0"));
    }
    out
}

/// Returns a task on a dependency cycle (self-loops excluded), if any.
fn find_cycle(instance: &ProblemInstance) -> Option<String> {
    let index: HashMap<&str, usize> = instance
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.as_str(), i))
        .collect();
    let n = instance.tasks.len();
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for e in &instance.edges {
        if e.from == e.to {
            continue;
        }
        if let (Some(&a), Some(&b)) = (index.get(e.from.as_str()), index.get(e.to.as_str())) {
            succ[a].push(b);
            indeg[b] += 1;
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut done = 0;
    while let Some(v) = queue.pop() {
        done += 1;
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push(w);
            }
        }
    }
    if done == n {
        None
    } else {
        (0..n).find(|&i| indeg[i] > 0).map(|i| instance.tasks[i].id.clone())
    }
}

/// Tasks whose ASIL exceeds every ECU's ASIL, or all tasks when
/// `decompose_all` is set.
pub fn compute_decomposition_set(instance: &ProblemInstance) -> BTreeSet<String> {
    let max_ecu = instance.ecus.iter().map(|e| e.asil).max().unwrap_or(Asil::QM);
    instance
        .tasks
        .iter()
        .filter(|t| instance.decompose_all || t.asil > max_ecu)
        .map(|t| t.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_study;

    fn tiny() -> ProblemInstance {
        let mut wcet = BTreeMap::new();
        wcet.insert("E1".to_string(), LevelTable::from_array([1.0, 2.0, 3.0, 4.0]));
        let mut cost = BTreeMap::new();
        cost.insert("E1".to_string(), LevelTable::from_array([1.0, 2.0, 3.0, 4.0]));
        let task = |id: &str, asil| Task {
            id: id.into(),
            asil,
            application: "app".into(),
            memory: LevelTable::from_array([Megabytes(1); 4]),
            wcet_ms: wcet.clone(),
            dev_cost: cost.clone(),
            localization: None,
        };
        ProblemInstance {
            ecus: vec![Ecu {
                id: "E1".into(),
                asil: Asil::D,
                memory: Megabytes(100),
                failure_rate_per_hour: 1e-6,
            }],
            tasks: vec![task("T1", Asil::B), task("T2", Asil::B)],
            edges: vec![],
            applications: vec!["app".into()],
            lifetime_hours: 5000.0,
            decompose_all: false,
        }
    }

    #[test]
    fn asil_value_round_trip() {
        for v in 0..=4 {
            assert_eq!(Asil::from_value(v).unwrap().value(), v);
        }
        assert!(Asil::from_value(5).is_none());
        assert!(Asil::QM < Asil::A && Asil::C < Asil::D);
    }

    #[test]
    fn memory_units() {
        assert_eq!(Megabytes::parse("8 GB").unwrap(), Megabytes(8192));
        assert_eq!(Megabytes::parse("2.5GB").unwrap(), Megabytes(2560));
        assert_eq!(Megabytes::parse("500 MB").unwrap(), Megabytes(500));
        assert_eq!(Megabytes::parse("42").unwrap(), Megabytes(42));
        assert!(Megabytes::parse("0.3 MB").is_err());
        assert!(Megabytes::parse("lots").is_err());
        let m: Megabytes = serde_json::from_str("\"1.5 GB\"").unwrap();
        assert_eq!(m, Megabytes(1536));
        let m: Megabytes = serde_json::from_str("512").unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), "512");
    }

    #[test]
    fn case_study_is_valid() {
        assert!(validate_instance(&case_study()).is_empty());
    }

    #[test]
    fn self_loop_reported() {
        let mut inst = tiny();
        inst.edges.push(DependencyEdge {
            from: "T1".into(),
            to: "T1".into(),
            wcrt_ms: 1.0,
        });
        let diags = validate_instance(&inst);
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::SelfDependency
            && d.message.contains("self-dependency")));
    }

    #[test]
    fn cycle_reported() {
        let mut inst = tiny();
        for (a, b) in [("T1", "T2"), ("T2", "T1")] {
            inst.edges.push(DependencyEdge {
                from: a.into(),
                to: b.into(),
                wcrt_ms: 1.0,
            });
        }
        let diags = validate_instance(&inst);
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::NotADag && d.message.contains("not a DAG")));
    }

    #[test]
    fn unknown_references_reported() {
        let mut inst = tiny();
        inst.edges.push(DependencyEdge {
            from: "T1".into(),
            to: "T9".into(),
            wcrt_ms: 1.0,
        });
        inst.tasks[0].application = "nope".into();
        inst.tasks[1].localization = Some(vec!["E7".into()]);
        let kinds: Vec<_> = validate_instance(&inst).into_iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagnosticKind::UnknownTask));
        assert!(kinds.contains(&DiagnosticKind::UnknownApplication));
        assert!(kinds.contains(&DiagnosticKind::UnknownEcu));
    }

    #[test]
    fn non_monotone_wcet_is_a_warning() {
        let mut inst = tiny();
        inst.tasks[0]
            .wcet_ms
            .insert("E1".into(), LevelTable::from_array([4.0, 3.0, 5.0, 6.0]));
        let diags = validate_instance(&inst);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert_eq!(diags[0].kind, DiagnosticKind::WcetNotMonotone);
    }

    #[test]
    fn bad_ecu_parameters() {
        let mut inst = tiny();
        inst.ecus[0].failure_rate_per_hour = 0.0;
        inst.ecus[0].memory = Megabytes(0);
        inst.ecus[0].asil = Asil::QM;
        let diags = validate_instance(&inst);
        assert_eq!(diags.iter().filter(|d| d.entity == "E1").count(), 3);
    }

    #[test]
    fn decomposition_set_case_study_is_everything() {
        let cs = case_study();
        assert_eq!(compute_decomposition_set(&cs).len(), 6);
    }

    #[test]
    fn decomposition_set_empty_when_platform_suffices() {
        let inst = tiny();
        assert!(compute_decomposition_set(&inst).is_empty());
    }

    #[test]
    fn decompose_all_flag() {
        let mut inst = tiny();
        inst.tasks[0].asil = Asil::A;
        inst.decompose_all = true;
        let set = compute_decomposition_set(&inst);
        assert!(set.contains("T1") && set.contains("T2"));
    }

    #[test]
    fn decomposition_set_is_monotone_in_platform() {
        let mut inst = tiny();
        inst.ecus[0].asil = Asil::A;
        let before = compute_decomposition_set(&inst);
        inst.ecus.push(Ecu {
            id: "E2".into(),
            asil: Asil::C,
            memory: Megabytes(10),
            failure_rate_per_hour: 1e-6,
        });
        let after = compute_decomposition_set(&inst);
        assert!(after.is_subset(&before));
    }
}
