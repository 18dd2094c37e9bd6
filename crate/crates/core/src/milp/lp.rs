//! LP text format writer.
//!
//! Writes the CPLEX-style LP format read by most MILP solvers. Constraint
//! names carry the constraint family, and a comment line opens every run of
//! constraints from the same family.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{Family, MilpModel, Sense, VarId, VarKind};

/// Right-hand side written into the stage-2 template when the stage-1
/// optimum is not known yet.
pub const LEX_PLACEHOLDER: f64 = 1e30;

const TERMS_PER_LINE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LpStage {
    /// Minimize the higher-priority objective.
    First,
    /// Minimize the second objective with the first bounded by `bound`, or
    /// by [`LEX_PLACEHOLDER`] when `None`.
    Second { bound: Option<f64> },
}

/// Render one lexicographic stage of `model` as LP text.
pub fn write_lp(model: &MilpModel, stage: LpStage) -> String {
    let (staged, header) = match stage {
        LpStage::First => (
            None,
            format!(
                "stage 1 of {}: minimize {}",
                model.objectives.len(),
                model.objectives[0].kind
            ),
        ),
        LpStage::Second { bound } => {
            let b = bound.unwrap_or(LEX_PLACEHOLDER);
            let mut header = format!(
                "stage 2 of 2: minimize {} subject to {} <= {}",
                model.objectives[1].kind, model.objectives[0].kind, b
            );
            if bound.is_none() {
                header.push_str("\n\\ template: replace the lex_bound right-hand side with the stage-1 optimum");
            }
            (Some(model.with_lex_bound(b)), header)
        }
    };
    let model = staged.as_ref().unwrap_or(model);

    let mut out = String::new();
    let _ = writeln!(out, "\\ asil-alloc model");
    let _ = writeln!(out, "\\ {header}");
    let _ = writeln!(out, "Minimize");
    let objective = &model.objectives[0];
    out.push_str(" obj:");
    write_terms(&mut out, model, &objective.expr.terms);
    out.push('\n');

    let _ = writeln!(out, "Subject To");
    let mut last: Option<Family> = None;
    for (idx, con) in model.constraints.iter().enumerate() {
        if last != Some(con.tag) {
            let _ = writeln!(out, "\\ [{}]", con.tag);
            last = Some(con.tag);
        }
        let name = format!("{}_{}", con.tag.label().replace('-', "_"), idx);
        let _ = write!(out, " {name}:");
        write_terms(&mut out, model, &con.terms);
        let sense = match con.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        let _ = writeln!(out, " {sense} {}", fmt_num(con.rhs));
    }

    let _ = writeln!(out, "Bounds");
    for var in &model.variables {
        match var.kind {
            VarKind::Binary => {}
            VarKind::Integer => {
                let _ = writeln!(out, " {} <= {} <= {}", fmt_num(var.lo), var.name, fmt_num(var.hi));
            }
            VarKind::Continuous => {
                if var.hi.is_finite() {
                    let _ = writeln!(out, " {} <= {} <= {}", fmt_num(var.lo), var.name, fmt_num(var.hi));
                } else {
                    let _ = writeln!(out, " {} >= {}", var.name, fmt_num(var.lo));
                }
            }
        }
    }
    let generals: Vec<&str> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Integer)
        .map(|v| v.name.as_str())
        .collect();
    if !generals.is_empty() {
        let _ = writeln!(out, "Generals");
        write_names(&mut out, &generals);
    }
    let binaries: Vec<&str> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        let _ = writeln!(out, "Binaries");
        write_names(&mut out, &binaries);
    }
    let _ = writeln!(out, "End");
    out
}

fn write_terms(out: &mut String, model: &MilpModel, terms: &[(VarId, f64)]) {
    let mut written = 0;
    for &(v, c) in terms {
        if c == 0.0 {
            continue;
        }
        if written > 0 && written % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        let mag = c.abs();
        let name = &model.var(v).name;
        if written == 0 && sign == '+' {
            out.push(' ');
        } else {
            let _ = write!(out, " {sign} ");
        }
        if mag == 1.0 {
            out.push_str(name);
        } else {
            let _ = write!(out, "{} {name}", fmt_num(mag));
        }
        written += 1;
    }
    if written == 0 {
        // An empty row still needs a term to be syntactically valid.
        let first = terms.first().map(|&(v, _)| model.var(v).name.clone());
        let _ = write!(out, " 0 {}", first.unwrap_or_else(|| model.var(model.index.phi).name.clone()));
    }
}

fn write_names(out: &mut String, names: &[&str]) {
    for chunk in names.chunks(TERMS_PER_LINE) {
        let _ = writeln!(out, " {}", chunk.join(" "));
    }
}

fn fmt_num(x: f64) -> String {
    if x.abs() >= 1e15 {
        format!("{x:e}")
    } else if x == x.trunc() {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Write stage 1 of `model` to `path`.
pub fn export_lp(model: &MilpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_lp(model, LpStage::First)).map_err(|e| Error::io(path, e))
}

/// Write both lexicographic stages as `<stem>.stage1.lp` and
/// `<stem>.stage2.lp` in `dir`.
pub fn export_stages(
    model: &MilpModel,
    dir: impl AsRef<Path>,
    stem: &str,
    bound: Option<f64>,
) -> Result<[PathBuf; 2]> {
    let dir = dir.as_ref();
    let first = dir.join(format!("{stem}.stage1.lp"));
    let second = dir.join(format!("{stem}.stage2.lp"));
    std::fs::write(&first, write_lp(model, LpStage::First)).map_err(|e| Error::io(&first, e))?;
    std::fs::write(&second, write_lp(model, LpStage::Second { bound }))
        .map_err(|e| Error::io(&second, e))?;
    Ok([first, second])
}
