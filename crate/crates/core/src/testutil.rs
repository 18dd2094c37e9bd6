use std::collections::BTreeMap;

use crate::model::{Asil, Ecu, LevelTable, Megabytes, ProblemInstance, Task};

fn task(id: &str, asil: Asil, ecus: &[&str], wcet: [f64; 4], cost: [f64; 4]) -> Task {
    let per_ecu = |v: [f64; 4]| -> BTreeMap<String, LevelTable<f64>> {
        ecus.iter()
            .map(|e| (e.to_string(), LevelTable::from_array(v)))
            .collect()
    };
    Task {
        id: id.into(),
        asil,
        application: "app".into(),
        memory: LevelTable::from_array([Megabytes(10); 4]),
        wcet_ms: per_ecu(wcet),
        dev_cost: per_ecu(cost),
        localization: None,
    }
}

fn ecu(id: &str, asil: Asil) -> Ecu {
    Ecu {
        id: id.into(),
        asil,
        memory: Megabytes(1024),
        failure_rate_per_hour: 1e-6,
    }
}

/// One ASIL B task on one ASIL D ECU, cost 5 at level B.
pub(crate) fn single_task_instance() -> ProblemInstance {
    ProblemInstance {
        ecus: vec![ecu("E1", Asil::D)],
        tasks: vec![task("T1", Asil::B, &["E1"], [1.0, 2.0, 3.0, 4.0], [3.0, 5.0, 8.0, 12.0])],
        edges: vec![],
        applications: vec!["app".into()],
        lifetime_hours: 5000.0,
        decompose_all: false,
    }
}

/// Two independent ASIL B tasks sharing the only ECU; WCET 2 at level B.
pub(crate) fn two_independent_one_ecu() -> ProblemInstance {
    let mut inst = single_task_instance();
    inst.tasks.push(task("T2", Asil::B, &["E1"], [1.0, 2.0, 3.0, 4.0], [3.0, 5.0, 8.0, 12.0]));
    inst
}
