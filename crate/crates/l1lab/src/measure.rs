//! Finite measures on {1,...,k}, total-variation geometry, and the
//! eps-unrelatedness predicate.
//!
//! Atoms are indexed 0..k. Measures store only their positive weights
//! (sorted index/weight pairs); weights below [`WEIGHT_CLAMP`] are clamped to
//! exact zero at construction so support sizes are deterministic. Total
//! variation is always computed in the min-mass form
//!
//! ```text
//! ||mu - nu||_TV = (mu([k]) + nu([k])) / 2 - min(mu,nu)([k])
//! ```
//!
//! which is the identity every pipeline inequality manipulates; the familiar
//! half-sum-of-absolute-differences form appears only in tests, as an oracle
//! for equal-mass pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights strictly below this are treated as exact zeros at construction.
pub const WEIGHT_CLAMP: f64 = 1e-15;

/// Total-mass tolerance for probability measures.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Slack granted on the passing side of unrelatedness checks.
pub const UNRELATED_TOLERANCE: f64 = 1e-9;

/// A nonnegative measure on {0, ..., k-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasure {
    k: usize,
    entries: Vec<(u32, f64)>,
    mass: f64,
}

impl FiniteMeasure {
    /// Builds a measure from dense weights. Negative weights are rejected;
    /// weights below [`WEIGHT_CLAMP`] are dropped.
    pub fn from_dense(weights: &[f64]) -> Result<Self> {
        let entries = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| (i as u32, w))
            .collect::<Vec<_>>();
        Self::from_entries(weights.len(), entries)
    }

    /// Builds a measure from (atom, weight) pairs on ground set size `k`.
    pub fn from_entries(k: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut kept = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            if (i as usize) >= k {
                return Err(Error::invalid_argument(format!("atom {i} outside ground set of size {k}")));
            }
            if !w.is_finite() || w < 0.0 {
                if w < 0.0 && w > -WEIGHT_CLAMP {
                    continue; // rounding noise from upstream arithmetic
                }
                return Err(Error::invalid_argument(format!("weight {w} at atom {i} is not a nonnegative real")));
            }
            if w >= WEIGHT_CLAMP {
                kept.push((i, w));
            }
        }
        kept.sort_unstable_by_key(|&(i, _)| i);
        if kept.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid_argument("duplicate atom in measure entries"));
        }
        let mass = kept.iter().map(|&(_, w)| w).sum();
        Ok(FiniteMeasure { k, entries: kept, mass })
    }

    pub fn zero(k: usize) -> Self {
        FiniteMeasure { k, entries: Vec::new(), mass: 0.0 }
    }

    pub fn point_mass(k: usize, atom: u32) -> Result<Self> {
        Self::from_entries(k, vec![(atom, 1.0)])
    }

    pub fn ground_set_size(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn weight(&self, atom: u32) -> f64 {
        match self.entries.binary_search_by_key(&atom, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Cached total mass; equals the recomputed sum by construction.
    pub fn total_mass(&self) -> f64 {
        self.mass
    }

    /// Number of atoms with strictly positive weight.
    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for &(i, w) in &self.entries {
            out[i as usize] = w;
        }
        out
    }

    pub fn is_probability(&self) -> bool {
        (self.mass - 1.0).abs() <= PROBABILITY_TOLERANCE
    }

    fn check_same_ground_set(&self, other: &FiniteMeasure) -> Result<()> {
        if self.k != other.k {
            return Err(Error::GroundSetMismatch { left: self.k, right: other.k });
        }
        Ok(())
    }

    /// min(mu,nu)([k]): the total shared mass.
    pub fn min_mass_with(&self, other: &FiniteMeasure) -> Result<f64> {
        self.check_same_ground_set(other)?;
        let mut total = 0.0;
        let (mut a, mut b) = (0, 0);
        while a < self.entries.len() && b < other.entries.len() {
            let (ia, wa) = self.entries[a];
            let (ib, wb) = other.entries[b];
            if ia == ib {
                total += wa.min(wb);
                a += 1;
                b += 1;
            } else if ia < ib {
                a += 1;
            } else {
                b += 1;
            }
        }
        Ok(total)
    }
}

/// Total variation distance in the min-mass form of the definition.
pub fn tv_distance(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<f64> {
    let shared = mu.min_mass_with(nu)?;
    Ok(0.5 * (mu.total_mass() + nu.total_mass()) - shared)
}

/// Coordinatewise minimum; dominated by both arguments.
pub fn min_measure(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<FiniteMeasure> {
    mu.check_same_ground_set(nu)?;
    let mut entries = Vec::new();
    let (mut a, mut b) = (0, 0);
    while a < mu.entries.len() && b < nu.entries.len() {
        let (ia, wa) = mu.entries[a];
        let (ib, wb) = nu.entries[b];
        if ia == ib {
            entries.push((ia, wa.min(wb)));
            a += 1;
            b += 1;
        } else if ia < ib {
            a += 1;
        } else {
            b += 1;
        }
    }
    FiniteMeasure::from_entries(mu.k, entries)
}

/// Keeps the weights on atoms in `keep` and zeroes the rest.
pub fn restrict(mu: &FiniteMeasure, keep: &[u32]) -> Result<FiniteMeasure> {
    for &i in keep {
        if (i as usize) >= mu.k {
            return Err(Error::invalid_argument(format!(
                "restriction atom {i} outside ground set of size {}",
                mu.k
            )));
        }
    }
    let mut set: Vec<u32> = keep.to_vec();
    set.sort_unstable();
    set.dedup();
    let entries = mu
        .entries
        .iter()
        .filter(|&&(i, _)| set.binary_search(&i).is_ok())
        .copied()
        .collect();
    FiniteMeasure::from_entries(mu.k, entries)
}

/// Coordinatewise domination; equivalent to mu(T) <= nu(T) for all subsets T.
pub fn is_dominated(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<bool> {
    mu.check_same_ground_set(nu)?;
    Ok(mu.entries.iter().all(|&(i, w)| w <= nu.weight(i)))
}

/// Scales to total mass 1.
pub fn normalize(mu: &FiniteMeasure) -> Result<ProbabilityMeasure> {
    if mu.mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let inv = 1.0 / mu.mass;
    let entries = mu.entries.iter().map(|&(i, w)| (i, w * inv)).collect();
    let scaled = FiniteMeasure::from_entries(mu.k, entries)?;
    ProbabilityMeasure::new(scaled)
}

/// A finite measure with total mass 1 (within [`PROBABILITY_TOLERANCE`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMeasure(FiniteMeasure);

impl ProbabilityMeasure {
    pub fn new(inner: FiniteMeasure) -> Result<Self> {
        if !inner.is_probability() {
            return Err(Error::InvalidFamily(format!(
                "total mass {} is not 1 within {PROBABILITY_TOLERANCE}",
                inner.total_mass()
            )));
        }
        Ok(ProbabilityMeasure(inner))
    }

    pub fn as_measure(&self) -> &FiniteMeasure {
        &self.0
    }

    pub fn into_measure(self) -> FiniteMeasure {
        self.0
    }
}

/// Witness for a failed unrelatedness check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnrelatedViolation {
    pub left: usize,
    pub right: usize,
    pub tv: f64,
    pub threshold: f64,
    /// tv - threshold; negative beyond tolerance means the pair fails.
    pub slack: f64,
}

/// An ordered collection of measures on a shared ground set. Duplicates are
/// allowed; all pair-indexed notions run over ordered distinct pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFamily {
    k: usize,
    members: Vec<FiniteMeasure>,
}

impl MeasureFamily {
    pub fn new(k: usize, members: Vec<FiniteMeasure>) -> Result<Self> {
        for (idx, m) in members.iter().enumerate() {
            if m.ground_set_size() != k {
                return Err(Error::GroundSetMismatch { left: k, right: members[idx].ground_set_size() });
            }
        }
        Ok(MeasureFamily { k, members })
    }

    pub fn ground_set_size(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, i: usize) -> &FiniteMeasure {
        &self.members[i]
    }

    pub fn members(&self) -> &[FiniteMeasure] {
        &self.members
    }

    /// Full symmetric matrix of min(mu_i, mu_j)([k]), accumulated atom by
    /// atom so the cost scales with stored entries, not with k.
    pub fn pairwise_min_masses(&self) -> Vec<f64> {
        let n = self.members.len();
        let mut out = vec![0.0f64; n * n];
        for (_, incident) in self.column_runs() {
            for a in 0..incident.len() {
                for b in (a + 1)..incident.len() {
                    let (pa, wa) = incident[a];
                    let (pb, wb) = incident[b];
                    let m = wa.min(wb);
                    out[pa as usize * n + pb as usize] += m;
                    out[pb as usize * n + pa as usize] += m;
                }
            }
        }
        out
    }

    /// Groups all stored entries by atom: (atom, [(member, weight), ...]),
    /// sorted by atom and member index. Atoms with no mass do not appear.
    pub(crate) fn column_runs(&self) -> Vec<(u32, Vec<(u32, f64)>)> {
        let mut triples: Vec<(u32, u32, f64)> = Vec::new();
        for (idx, m) in self.members.iter().enumerate() {
            for &(atom, w) in m.entries() {
                triples.push((atom, idx as u32, w));
            }
        }
        triples.sort_unstable_by_key(|&(atom, member, _)| (atom, member));
        let mut runs = Vec::new();
        let mut start = 0;
        while start < triples.len() {
            let atom = triples[start].0;
            let mut end = start;
            let mut incident = Vec::new();
            while end < triples.len() && triples[end].0 == atom {
                incident.push((triples[end].1, triples[end].2));
                end += 1;
            }
            runs.push((atom, incident));
            start = end;
        }
        runs
    }

    /// Minimum over ordered distinct pairs of tv - (masses/2 - eps).
    /// Positive infinity for families with fewer than two members.
    pub fn min_unrelated_slack(&self, eps: f64) -> f64 {
        let n = self.members.len();
        if n < 2 {
            return f64::INFINITY;
        }
        let shared = self.pairwise_min_masses();
        let mut slack = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let mi = self.members[i].total_mass();
                let mj = self.members[j].total_mass();
                let tv = 0.5 * (mi + mj) - shared[i * n + j];
                let threshold = 0.5 * (mi + mj) - eps;
                slack = slack.min(tv - threshold);
            }
        }
        slack
    }

    /// First ordered pair violating eps-unrelatedness, if any.
    pub fn unrelated_violation(&self, eps: f64) -> Option<UnrelatedViolation> {
        let n = self.members.len();
        if n < 2 {
            return None;
        }
        let shared = self.pairwise_min_masses();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mi = self.members[i].total_mass();
                let mj = self.members[j].total_mass();
                let tv = 0.5 * (mi + mj) - shared[i * n + j];
                let threshold = 0.5 * (mi + mj) - eps;
                if tv < threshold - UNRELATED_TOLERANCE {
                    return Some(UnrelatedViolation {
                        left: i,
                        right: j,
                        tv,
                        threshold,
                        slack: tv - threshold,
                    });
                }
            }
        }
        None
    }

    /// Every distinct ordered pair satisfies tv >= (masses)/2 - eps, within
    /// tolerance. Singletons pass vacuously.
    pub fn is_unrelated(&self, eps: f64) -> bool {
        self.unrelated_violation(eps).is_none()
    }

    /// Delta_S: the sum of min(mu,nu) over ordered distinct pairs (each
    /// unordered pair counted twice).
    pub fn delta_family(&self) -> Result<FiniteMeasure> {
        if self.members.len() < 2 {
            return Err(Error::InvalidFamily("delta_family needs at least two members".into()));
        }
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for (atom, incident) in self.column_runs() {
            let mut total = 0.0;
            for a in 0..incident.len() {
                for b in (a + 1)..incident.len() {
                    total += incident[a].1.min(incident[b].1);
                }
            }
            if total > 0.0 {
                entries.push((atom, 2.0 * total));
            }
        }
        FiniteMeasure::from_entries(self.k, entries)
    }

    /// For eps-unrelated probability families, Delta_S([k]) is at most
    /// eps * |S| * (|S|-1). Errors if a member is not a probability measure.
    pub fn check_delta_bound(&self, eps: f64) -> Result<bool> {
        for (idx, m) in self.members.iter().enumerate() {
            if !m.is_probability() {
                return Err(Error::InvalidFamily(format!(
                    "member {idx} has mass {}, not a probability measure",
                    m.total_mass()
                )));
            }
        }
        let delta = self.delta_family()?;
        let s = self.members.len() as f64;
        Ok(delta.total_mass() <= eps * s * (s - 1.0) + UNRELATED_TOLERANCE)
    }
}

/// JSON document for a measure family; rows are dense weight vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFamilyDoc {
    pub k: usize,
    pub measures: Vec<Vec<f64>>,
}

impl From<&MeasureFamily> for MeasureFamilyDoc {
    fn from(f: &MeasureFamily) -> Self {
        MeasureFamilyDoc {
            k: f.k,
            measures: f.members.iter().map(|m| m.to_dense()).collect(),
        }
    }
}

impl TryFrom<MeasureFamilyDoc> for MeasureFamily {
    type Error = Error;

    fn try_from(doc: MeasureFamilyDoc) -> Result<Self> {
        let members = doc
            .measures
            .iter()
            .map(|row| {
                if row.len() != doc.k {
                    Err(Error::Parse(format!(
                        "measure row has {} weights, expected {}",
                        row.len(),
                        doc.k
                    )))
                } else {
                    FiniteMeasure::from_dense(row)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        MeasureFamily::new(doc.k, members)
    }
}
