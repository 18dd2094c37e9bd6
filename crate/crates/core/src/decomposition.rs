//! ASIL decomposition schemes.
//!
//! A scheme is a vector `alpha` of replica counts per level A..D whose
//! weighted sum (A=1 .. D=4) equals the original requirement. "D + QM" is
//! represented by the trivial scheme: the QM part carries no requirement.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Asil, Ecu};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecompositionScheme {
    /// `alpha[h - 1]` replicas at level `h`.
    pub alpha: [u8; 4],
}

impl DecompositionScheme {
    pub fn new(alpha: [u8; 4]) -> Self {
        DecompositionScheme { alpha }
    }

    /// The scheme that keeps a single replica at `level`.
    pub fn trivial(level: Asil) -> Self {
        let mut alpha = [0; 4];
        if level.value() > 0 {
            alpha[level.value() as usize - 1] = 1;
        }
        DecompositionScheme { alpha }
    }

    pub fn count(&self, h: u8) -> u8 {
        self.alpha[h as usize - 1]
    }

    pub fn weighted_sum(&self) -> u32 {
        self.alpha
            .iter()
            .enumerate()
            .map(|(i, &a)| a as u32 * (i as u32 + 1))
            .sum()
    }

    pub fn replica_count(&self) -> usize {
        self.alpha.iter().map(|&a| a as usize).sum()
    }

    pub fn is_trivial(&self) -> bool {
        self.replica_count() == 1
    }

    pub fn max_level(&self) -> u8 {
        (1..=4u8).rev().find(|&h| self.count(h) > 0).unwrap_or(0)
    }

    /// Replica levels, highest first.
    pub fn levels(&self) -> Vec<u8> {
        (1..=4u8)
            .rev()
            .flat_map(|h| std::iter::repeat(h).take(self.count(h) as usize))
            .collect()
    }
}

impl fmt::Display for DecompositionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = (1..=4u8)
            .rev()
            .filter(|&h| self.count(h) > 0)
            .map(|h| {
                let name = Asil::from_value(h).expect("level in range");
                match self.count(h) {
                    1 => format!("{name}"),
                    n => format!("{n}x{name}"),
                }
            })
            .collect();
        f.write_str(&parts.join(" + "))
    }
}

/// All schemes whose weighted sum equals `original`, ordered by
/// `(alpha_D, alpha_C, alpha_B, alpha_A)` descending.
pub fn enumerate_schemes(original: Asil) -> Result<Vec<DecompositionScheme>> {
    let target = original.value() as u32;
    if target == 0 {
        return Err(Error::NothingToDecompose);
    }
    let mut out = Vec::new();
    // alpha_h <= target / h, so the nested bounds are exact.
    for d in 0..=target / 4 {
        for c in 0..=(target - 4 * d) / 3 {
            for b in 0..=(target - 4 * d - 3 * c) / 2 {
                let a = target - 4 * d - 3 * c - 2 * b;
                out.push(DecompositionScheme::new([a as u8, b as u8, c as u8, d as u8]));
            }
        }
    }
    out.sort_by(|x, y| {
        let kx = [x.alpha[3], x.alpha[2], x.alpha[1], x.alpha[0]];
        let ky = [y.alpha[3], y.alpha[2], y.alpha[1], y.alpha[0]];
        ky.cmp(&kx)
    });
    Ok(out)
}

/// Whether the replicas of `scheme` can be put on pairwise distinct ECUs
/// that each support the replica's level.
pub fn is_compatible(scheme: &DecompositionScheme, ecus: &[Ecu]) -> bool {
    let levels: Vec<u8> = ecus.iter().map(|e| e.asil.value()).collect();
    is_compatible_levels(scheme, &levels)
}

pub(crate) fn is_compatible_levels(scheme: &DecompositionScheme, ecu_levels: &[u8]) -> bool {
    if scheme.replica_count() > ecu_levels.len() {
        return false;
    }
    // Hall condition for nested level sets: replicas at >= h need as many
    // ECUs supporting >= h.
    (1..=4u8).all(|h| {
        let needed: usize = (h..=4).map(|l| scheme.count(l) as usize).sum();
        let available = ecu_levels.iter().filter(|&&l| l >= h).count();
        needed <= available
    })
}

/// Keep only schemes that can be hosted on `ecus` under the distinct-ECU rule.
pub fn filter_compatible(schemes: &[DecompositionScheme], ecus: &[Ecu]) -> Vec<DecompositionScheme> {
    schemes.iter().filter(|s| is_compatible(s, ecus)).copied().collect()
}
