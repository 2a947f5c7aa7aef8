//! Closed-form dimension bound evaluators.
//!
//! `evaluate_lower_bound` turns the counting argument into an explicit
//! feasibility test: a (1+eps)-embedding of the n-star into l1^d yields
//! floor((n-1)/14) half-unrelated probability measures on 2d+1 atoms with
//! supports of size at most s = ceil(224*eps*(2*eps + 1/(n-1))*(2d+1)), and
//! there are at most C(2d+1, s) * 3^s such measures. The reported `d_lower`
//! is the smallest d for which that count is not exceeded; every smaller
//! dimension is impossible.
//!
//! `volume_lower_bound` is the packing bound for large distortions: at most
//! (2D)^d disjoint l1 balls of radius 1/D fit in a ball of radius 2.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which feasibility test decided the reported bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundBranch {
    /// Supports of size at most one: the family fits only if it has at most
    /// 2d+1 members.
    SingleAtomCase,
    /// Support-count times per-support packing: C(2d+1, s) * 3^s.
    CountingCase,
    /// Ball packing at distortion D.
    Volume,
}

/// Evaluated lower bound with the intermediate quantities that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: u64,
    pub eps: f64,
    pub d_lower: u64,
    pub branch: BoundBranch,
    /// floor((n-1)/14): the certified family size.
    pub family_floor: u64,
    /// Support bound s at d_lower (clamped to the ground-set size).
    pub support_bound: u64,
    /// ln(C(2d+1, s) * 3^s) at d_lower; 0 in the single-atom branch.
    pub log_count: f64,
    /// Evaluators use the derived constants verbatim.
    pub constants: String,
}

const CONSTANTS_NOTE: &str = "as-stated constants, not optimized";

/// Support bound s(d) = ceil(224*eps*(2*eps + 1/(n-1)) * (2d+1)), clamped to
/// the ground-set size 2d+1 (a measure cannot have a larger support).
fn support_bound(n: u64, eps: f64, d: u64) -> u64 {
    let ground = 2 * d + 1;
    let raw = 224.0 * eps * (2.0 * eps + 1.0 / (n as f64 - 1.0)) * ground as f64;
    (raw.ceil() as u64).min(ground)
}

fn ln_choose(a: u64, b: u64) -> f64 {
    if b > a {
        return f64::NEG_INFINITY;
    }
    let b = b.min(a - b);
    (0..b)
        .map(|j| ((a - j) as f64).ln() - ((j + 1) as f64).ln())
        .sum()
}

fn big_choose(a: u64, b: u64) -> BigUint {
    if b > a {
        return BigUint::from(0u32);
    }
    let b = b.min(a - b);
    let mut num = BigUint::from(1u32);
    let mut den = BigUint::from(1u32);
    for j in 0..b {
        num *= a - j;
        den *= j + 1;
    }
    num / den
}

/// Exact comparison C(a, s) * 3^s >= m, used when the log-space test is too
/// close to call.
fn exact_feasible(a: u64, s: u64, m: u64) -> bool {
    let count = big_choose(a, s) * BigUint::from(3u32).pow(s as u32);
    count >= BigUint::from(m)
}

fn counting_feasible(a: u64, s: u64, m: u64) -> bool {
    let log_count = ln_choose(a, s) + s as f64 * 3.0f64.ln();
    let log_m = (m as f64).ln();
    if (log_count - log_m).abs() <= 1e-6 * log_m.abs().max(1.0) {
        exact_feasible(a, s, m)
    } else {
        log_count >= log_m
    }
}

/// Smallest dimension in the single-atom branch: floor((n-1)/14) point
/// masses need floor((n-1)/14) distinct atoms among 2d+1.
pub fn single_atom_d_lower(family_floor: u64) -> u64 {
    if family_floor <= 3 {
        1
    } else {
        (family_floor - 1).div_ceil(2)
    }
}

/// Evaluates the counting lower bound: the smallest d whose measure count
/// can accommodate the certified family.
pub fn evaluate_lower_bound(n: u64, eps: f64) -> Result<BoundReport> {
    if !(eps > 0.0 && eps < 1.0 / 16.0) {
        return Err(Error::OutOfRange(format!("eps must lie in (0, 1/16); got {eps}")));
    }
    if (n as f64) < 1.0 / (eps * eps) {
        return Err(Error::OutOfRange(format!(
            "the counting bound needs n >= 1/eps^2; got n={n}, 1/eps^2={}",
            1.0 / (eps * eps)
        )));
    }
    let family_floor = (n - 1) / 14;
    for d in 1..=100_000_000u64 {
        let ground = 2 * d + 1;
        let s = support_bound(n, eps, d);
        if s <= 1 {
            if family_floor <= ground {
                return Ok(BoundReport {
                    n,
                    eps,
                    d_lower: d,
                    branch: BoundBranch::SingleAtomCase,
                    family_floor,
                    support_bound: s,
                    log_count: 0.0,
                    constants: CONSTANTS_NOTE.into(),
                });
            }
        } else if counting_feasible(ground, s, family_floor.max(1)) {
            return Ok(BoundReport {
                n,
                eps,
                d_lower: d,
                branch: BoundBranch::CountingCase,
                family_floor,
                support_bound: s,
                log_count: ln_choose(ground, s) + s as f64 * 3.0f64.ln(),
                constants: CONSTANTS_NOTE.into(),
            });
        }
    }
    Err(Error::ResourceLimit("lower-bound scan exceeded 10^8 dimensions".into()))
}

/// Ball-packing bound: the smallest d with (2D)^d >= n-1, at least 1.
pub fn volume_lower_bound(n: u64, distortion: f64) -> Result<u64> {
    if n < 2 {
        return Err(Error::OutOfRange("volume bound needs n >= 2".into()));
    }
    if !(distortion > 1.0) {
        return Err(Error::OutOfRange("volume bound needs D > 1".into()));
    }
    let target = (n - 1) as f64 * (1.0 - 1e-12);
    let base = 2.0 * distortion;
    let mut acc = 1.0f64;
    let mut d = 0u64;
    while acc < target {
        acc *= base;
        d += 1;
        if d > 10_000 {
            return Err(Error::ResourceLimit("volume bound scan exceeded 10^4 dimensions".into()));
        }
    }
    Ok(d.max(1))
}

/// Report for the volume bound, shaped like the counting report for the CLI.
pub fn volume_bound_report(n: u64, distortion: f64) -> Result<BoundReport> {
    let d = volume_lower_bound(n, distortion)?;
    Ok(BoundReport {
        n,
        eps: distortion - 1.0,
        d_lower: d,
        branch: BoundBranch::Volume,
        family_floor: n - 1,
        support_bound: 0,
        log_count: (n as f64 - 1.0).ln(),
        constants: CONSTANTS_NOTE.into(),
    })
}
