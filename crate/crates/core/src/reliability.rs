//! Random hardware failure analysis.
//!
//! Replicas of a decomposed task form a parallel system: the task fails only
//! if every hosting ECU fails, so the probability of failure is the product
//! of the per-ECU terms `1 - exp(-lambda * t)`. Taking logarithms turns the
//! target check into a linear constraint over the binary mapping variables;
//! [`log_pof_coefficient`] is the single source of those coefficients.

use crate::error::{Error, Result};
use crate::model::Asil;

/// Per-hour failure-rate targets by ASIL. ASIL A has none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmhfTargetTable {
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for PmhfTargetTable {
    fn default() -> Self {
        PmhfTargetTable {
            b: 1e-7,
            c: 1e-7,
            d: 1e-8,
        }
    }
}

impl PmhfTargetTable {
    pub fn target(&self, asil: Asil) -> Option<f64> {
        match asil {
            Asil::QM | Asil::A => None,
            Asil::B => Some(self.b),
            Asil::C => Some(self.c),
            Asil::D => Some(self.d),
        }
    }

    /// Probability-of-failure budget over `t` hours for `asil`.
    pub fn budget(&self, asil: Asil, t: f64) -> Option<f64> {
        self.target(asil).map(|rate| -(-rate * t).exp_m1())
    }

    /// Right-hand side of the log-linear target constraint.
    pub fn log_budget(&self, asil: Asil, t: f64) -> Option<f64> {
        self.target(asil).map(|rate| log_pof_coefficient_unchecked(rate, t))
    }
}

fn check_domain(failure_rate: f64, t: f64) -> Result<()> {
    if !(failure_rate.is_finite() && failure_rate > 0.0) {
        return Err(Error::Domain(format!("failure rate must be > 0, got {failure_rate}")));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("lifetime must be > 0, got {t}")));
    }
    Ok(())
}

/// `1 - exp(-lambda * t)`.
pub fn pof(failure_rate: f64, t: f64) -> Result<f64> {
    check_domain(failure_rate, t)?;
    Ok(-(-failure_rate * t).exp_m1())
}

/// Probability that every hosting ECU fails within `t` hours.
pub fn pof_decomposed(ecu_failure_rates: &[f64], t: f64) -> Result<f64> {
    if ecu_failure_rates.is_empty() {
        return Err(Error::Domain("no hosting ECU given".into()));
    }
    ecu_failure_rates
        .iter()
        .try_fold(1.0, |acc, &rate| Ok(acc * pof(rate, t)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PmhfCheck {
    Pass { pof: f64, budget: f64 },
    Fail { pof: f64, budget: f64 },
    /// The ASIL has no target; passes vacuously.
    NoTarget,
}

impl PmhfCheck {
    pub fn passed(&self) -> bool {
        !matches!(self, PmhfCheck::Fail { .. })
    }

    pub fn note(&self) -> Option<&'static str> {
        match self {
            PmhfCheck::NoTarget => Some("no target defined"),
            _ => None,
        }
    }
}

/// Product-form check of the hosting set against the target of `task_asil`.
pub fn check_pmhf(task_asil: Asil, hosting_failure_rates: &[f64], t: f64) -> Result<PmhfCheck> {
    check_pmhf_with(&PmhfTargetTable::default(), task_asil, hosting_failure_rates, t)
}

pub fn check_pmhf_with(
    targets: &PmhfTargetTable,
    task_asil: Asil,
    hosting_failure_rates: &[f64],
    t: f64,
) -> Result<PmhfCheck> {
    let Some(budget) = targets.budget(task_asil, t) else {
        return Ok(PmhfCheck::NoTarget);
    };
    let pof = pof_decomposed(hosting_failure_rates, t)?;
    Ok(if pof <= budget {
        PmhfCheck::Pass { pof, budget }
    } else {
        PmhfCheck::Fail { pof, budget }
    })
}

/// `ln(1 - exp(-lambda * t))`, the coefficient of a mapping variable in the
/// log-linear target constraint. Always negative.
pub fn log_pof_coefficient(failure_rate: f64, t: f64) -> Result<f64> {
    check_domain(failure_rate, t)?;
    Ok(log_pof_coefficient_unchecked(failure_rate, t))
}

fn log_pof_coefficient_unchecked(failure_rate: f64, t: f64) -> f64 {
    (-(-failure_rate * t).exp_m1()).ln()
}

/// Log-linear form of [`check_pmhf`]: sum of coefficients of the hosting ECUs
/// against the log budget. Exact for 0/1 mapping variables.
pub fn check_pmhf_linear(task_asil: Asil, hosting_failure_rates: &[f64], t: f64) -> Result<bool> {
    let targets = PmhfTargetTable::default();
    let Some(rhs) = targets.log_budget(task_asil, t) else {
        return Ok(true);
    };
    if hosting_failure_rates.is_empty() {
        return Err(Error::Domain("no hosting ECU given".into()));
    }
    let mut lhs = 0.0;
    for &rate in hosting_failure_rates {
        lhs += log_pof_coefficient(rate, t)?;
    }
    Ok(lhs <= rhs)
}
