//! The constructive lower-bound pipeline.
//!
//! An accepted (1+eps)-embedding of the n-star into l1^d is converted into a
//! family of probability measures on 2d+1 atoms whose pairwise total
//! variation is near-maximal. Four stages then prune and truncate the family
//! until it is 1/2-unrelated with small per-member supports:
//!
//! * stage I -> II: a Markov argument picks a set `A` of cheap atoms, and a
//!   greedy half-sum selection (`sparse_select`) keeps, per atom, the few
//!   measures carrying most of that atom's column mass;
//! * stage II -> III: members below mass 1/8 and members with oversized
//!   supports are dropped, costing at most a factor 14 in cardinality;
//! * stage III -> IV: each survivor is truncated to its heaviest atoms and
//!   renormalized.
//!
//! Every inequality used along the way is recorded in a
//! [`PipelineCertificate`] with both sides evaluated; [`verify_certificate`]
//! recomputes each one from the stored families and index sets.

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, Norm};
use crate::error::{Error, Result};
use crate::measure::{FiniteMeasure, MeasureFamily, MeasureFamilyDoc};

/// Absolute slack granted on the passing side of every certificate
/// inequality.
pub const CHECK_TOLERANCE: f64 = 1e-9;

/// Largest eps accepted by `run_pipeline`.
pub const PIPELINE_MAX_EPS: f64 = 1.0 / 16.0;

/// Largest eps accepted by the truncation stage.
pub const STAGE_MAX_EPS: f64 = 1.0 / 8.0;

pub mod check_names {
    pub const ENTRY_FAMILY_SIZE: &str = "entry_family_size";
    pub const ENTRY_PROBABILITY: &str = "entry_probability";
    pub const ENTRY_UNRELATED_2EPS: &str = "entry_unrelated_2eps";
    pub const STAGE1_UNRELATED_EPS: &str = "stage1_unrelated_eps";
    pub const STAGE1_MARKOV_MASS: &str = "stage1_markov_mass";
    pub const STAGE1_COLUMN_PRECONDITION: &str = "stage1_column_precondition";
    pub const STAGE1_HALF_SUM: &str = "stage1_half_sum";
    pub const STAGE2_MASS_LE_ONE: &str = "stage2_mass_le_one";
    pub const STAGE2_MASS_SUM: &str = "stage2_mass_sum";
    pub const STAGE2_SUPPORT_SUM: &str = "stage2_support_sum";
    pub const STAGE2_UNRELATED_EPS: &str = "stage2_unrelated_eps";
    pub const STAGE3_SPRIME_SIZE: &str = "stage3_sprime_size";
    pub const STAGE3_SIZE_HALF: &str = "stage3_size_half";
    pub const STAGE3_SIZE_FOURTEENTH: &str = "stage3_size_fourteenth";
    pub const STAGE3_MASS_FLOOR: &str = "stage3_mass_floor";
    pub const STAGE3_SUPPORT_BOUND: &str = "stage3_support_bound";
    pub const STAGE4_Z_MASS: &str = "stage4_z_mass";
    pub const STAGE4_SUPPORT_BOUND: &str = "stage4_support_bound";
    pub const STAGE4_PROBABILITY: &str = "stage4_probability";
    pub const STAGE4_UNRELATED_HALF: &str = "stage4_unrelated_half";
    pub const STAGE4_SIZE_FLOOR: &str = "stage4_size_floor";
}

/// Direction of a recorded inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

/// One recorded inequality with both sides evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub cmp: Cmp,
    pub pass: bool,
}

impl CheckRecord {
    fn new(name: &str, lhs: f64, rhs: f64, cmp: Cmp) -> Self {
        let pass = evaluate_cmp(lhs, rhs, cmp);
        CheckRecord { name: name.to_string(), lhs, rhs, cmp, pass }
    }
}

fn evaluate_cmp(lhs: f64, rhs: f64, cmp: Cmp) -> bool {
    match cmp {
        Cmp::Le => lhs <= rhs + CHECK_TOLERANCE,
        Cmp::Ge => lhs >= rhs - CHECK_TOLERANCE,
        Cmp::Eq => (lhs - rhs).abs() <= CHECK_TOLERANCE,
    }
}

fn first_failure(checks: &[CheckRecord]) -> Option<&CheckRecord> {
    checks.iter().find(|c| !c.pass)
}

fn fail_on_violation(checks: &[CheckRecord]) -> Result<()> {
    if let Some(c) = first_failure(checks) {
        return Err(Error::CertificateViolation { check: c.name.clone(), lhs: c.lhs, rhs: c.rhs });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Greedy half-sum selection
// ---------------------------------------------------------------------------

/// Result of [`sparse_select`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSelection {
    /// Indices (into the input) of the ceil(delta * (|S|-1)) largest
    /// elements; ties broken by lowest index.
    pub selected: Vec<usize>,
    /// Whether delta * (|S|-1) * sum(S) >= sum of pairwise minima held. When
    /// it does, the selected elements are guaranteed to carry at least half
    /// the total.
    pub precondition_held: bool,
}

/// Picks the ceil(delta * (|S|-1)) largest elements of a multiset of
/// nonnegative reals. When the pairwise-minima precondition holds, the
/// selection is guaranteed to carry at least half the total sum.
pub fn sparse_select(values: &[f64], delta: f64) -> Result<SparseSelection> {
    let n = values.len();
    if n < 2 {
        return Err(Error::invalid_argument("sparse_select needs at least two elements"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid_argument("sparse_select needs delta in (0,1)"));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid_argument("sparse_select values must be nonnegative reals"));
    }
    let count = select_count(delta, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let selected: Vec<usize> = order[..count].to_vec();

    let total: f64 = values.iter().sum();
    let pair_min_sum = ordered_pair_min_sum(values);
    let precondition_held = delta * (n as f64 - 1.0) * total >= pair_min_sum;

    if precondition_held {
        let picked: f64 = selected.iter().map(|&i| values[i]).sum();
        if picked < 0.5 * total - 1e-12 * total.max(1.0) {
            return Err(Error::Postcondition {
                op: "sparse_select",
                detail: format!("half-sum guarantee failed: {picked} < {}", 0.5 * total),
            });
        }
    }
    Ok(SparseSelection { selected, precondition_held })
}

fn select_count(delta: f64, n: usize) -> usize {
    let raw = (delta * (n as f64 - 1.0)).ceil() as usize;
    raw.clamp(1, n)
}

/// Sum of min(x,y) over ordered pairs x != y. For values sorted in
/// decreasing order this is sum over i of 2*i*w_i (0-based).
fn ordered_pair_min_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted
        .iter()
        .enumerate()
        .map(|(i, w)| 2.0 * i as f64 * w)
        .sum()
}

// ---------------------------------------------------------------------------
// Lemma 2.1 style entry: embedding -> measure family
// ---------------------------------------------------------------------------

/// Converts an accepted (1+eps)-embedding of the n-star into n-1 probability
/// measures on 2d+1 atoms.
///
/// After translating the center to the origin and rescaling to Lipschitz
/// constant 1, leaf v maps to the measure holding the positive parts of f(v)
/// on atoms 0..d, the negative parts on atoms d..2d, and the leftover mass
/// 1 - |f(v)|_1 on the final atom. The family is 2*eps-unrelated: any two
/// leaves sit at ratio at least 2/(1+eps) in the image, and total variation
/// between their measures dominates half their l1 distance.
pub fn embedding_to_measures(e: &Embedding, eps: f64) -> Result<MeasureFamily> {
    if e.norm() != Norm::L1 {
        return Err(Error::InvalidSource("measure extraction expects an l1 embedding".into()));
    }
    if !e.source().is_star() {
        return Err(Error::InvalidSource("measure extraction expects a star source".into()));
    }
    if eps < 0.0 {
        return Err(Error::OutOfRange("eps must be nonnegative".into()));
    }
    let measured = e.distortion()?;
    if !(measured <= (1.0 + eps) * (1.0 + CHECK_TOLERANCE)) {
        return Err(Error::NotAnEmbedding { eps, measured });
    }
    let normalized = e.normalize_to_one_lipschitz()?;
    let d = e.dim();
    let k = 2 * d + 1;
    let n = e.point_count();
    let mut members = Vec::with_capacity(n - 1);
    for v in 1..n {
        let point = normalized.point(v);
        let mut positives: Vec<(u32, f64)> = Vec::with_capacity(point.nnz());
        let mut negatives: Vec<(u32, f64)> = Vec::new();
        for &(i, w) in point.entries() {
            if w > 0.0 {
                positives.push((i, w));
            } else {
                negatives.push((d as u32 + i, -w));
            }
        }
        let norm1 = point.l1_norm();
        let leftover = 1.0 - norm1;
        if leftover < -CHECK_TOLERANCE {
            return Err(Error::Postcondition {
                op: "embedding_to_measures",
                detail: format!("leaf {v} has l1 norm {norm1} > 1 after normalization"),
            });
        }
        let mut entries = positives;
        entries.append(&mut negatives);
        if leftover > 0.0 {
            entries.push((2 * d as u32, leftover));
        }
        members.push(FiniteMeasure::from_entries(k, entries)?);
    }
    let family = MeasureFamily::new(k, members)?;
    if let Some(v) = family.unrelated_violation(2.0 * eps) {
        return Err(Error::Postcondition {
            op: "embedding_to_measures",
            detail: format!(
                "family is not {}-unrelated: pair ({}, {}) has tv {} < {}",
                2.0 * eps,
                v.left,
                v.right,
                v.tv,
                v.threshold
            ),
        });
    }
    Ok(family)
}

// ---------------------------------------------------------------------------
// Stage I -> II
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StageOneResult {
    pub family: MeasureFamily,
    /// Atoms with cheap columns; atoms carrying no mass at all are included
    /// by convention.
    pub coordinate_set_a: Vec<u32>,
    /// Per atom in `A` with positive column mass: the selected witnesses
    /// (member indices). Zero-weight witnesses are inert and not recorded.
    pub witness_sets_w: Vec<(u32, Vec<u32>)>,
    /// Per member: the atoms it keeps.
    pub restriction_sets_y: Vec<Vec<u32>>,
    pub checks: Vec<CheckRecord>,
}

/// Stage I -> II of the sparsification.
///
/// `A` collects the atoms whose column of pairwise minima is at most
/// 2*eps*(|S|-1) times the column mass; Markov's inequality over the
/// column-mass distribution guarantees `A` carries at least half the total
/// mass. Per atom in `A`, the top ceil(2*eps*(|S|-1)) members by weight are
/// kept (at least one), which by the half-sum selection carry at least half
/// the column. Restricting each member to the atoms that kept it yields S2.
pub fn stage_one_to_two(s1: &MeasureFamily, eps: f64) -> Result<StageOneResult> {
    let out = compute_stage_one(s1, eps)?;
    fail_on_violation(&out.checks)?;
    Ok(out)
}

fn compute_stage_one(s1: &MeasureFamily, eps: f64) -> Result<StageOneResult> {
    let n1 = s1.len();
    if n1 < 2 {
        return Err(Error::invalid_argument("stage I->II needs at least two measures"));
    }
    if eps < 0.0 {
        return Err(Error::OutOfRange("eps must be nonnegative".into()));
    }
    for (idx, m) in s1.members().iter().enumerate() {
        if !m.is_probability() {
            return Err(Error::InvalidFamily(format!(
                "stage I->II expects probability measures; member {idx} has mass {}",
                m.total_mass()
            )));
        }
    }
    let k = s1.ground_set_size();
    let threshold = 2.0 * eps * (n1 as f64 - 1.0);
    let count = select_count_stage(eps, n1);

    let runs = s1.column_runs();
    let mut checks = Vec::new();
    checks.push(CheckRecord::new(
        check_names::STAGE1_UNRELATED_EPS,
        s1.min_unrelated_slack(eps),
        0.0,
        Cmp::Ge,
    ));

    let mut coordinate_set_a: Vec<u32> = Vec::new();
    let mut witness_sets_w: Vec<(u32, Vec<u32>)> = Vec::new();
    let mut restriction_sets_y: Vec<Vec<u32>> = vec![Vec::new(); n1];
    let mut s2_entries: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n1];
    let mut mass_on_a = 0.0f64;
    let mut min_precondition = f64::INFINITY;
    let mut min_half_sum = f64::INFINITY;

    let mut next_atom = 0u32;
    for (atom, incident) in &runs {
        // Atoms between runs carry no mass and join A by convention.
        while next_atom < *atom {
            coordinate_set_a.push(next_atom);
            next_atom += 1;
        }
        next_atom = atom + 1;

        let col_mass: f64 = incident.iter().map(|&(_, w)| w).sum();
        let delta_col = column_pair_min_sum(incident);
        if delta_col <= threshold * col_mass {
            coordinate_set_a.push(*atom);
            mass_on_a += col_mass;
            min_precondition = min_precondition.min(threshold * col_mass - delta_col);

            let mut order: Vec<usize> = (0..incident.len()).collect();
            order.sort_by(|&a, &b| {
                incident[b].1.total_cmp(&incident[a].1).then(incident[a].0.cmp(&incident[b].0))
            });
            let take = count.min(incident.len());
            let mut witnesses: Vec<u32> = Vec::with_capacity(take);
            let mut picked = 0.0;
            for &pos in &order[..take] {
                let (member, w) = incident[pos];
                witnesses.push(member);
                picked += w;
                restriction_sets_y[member as usize].push(*atom);
                s2_entries[member as usize].push((*atom, w));
            }
            witnesses.sort_unstable();
            min_half_sum = min_half_sum.min(picked - 0.5 * col_mass);
            witness_sets_w.push((*atom, witnesses));
        }
    }
    while (next_atom as usize) < k {
        coordinate_set_a.push(next_atom);
        next_atom += 1;
    }

    checks.push(CheckRecord::new(
        check_names::STAGE1_MARKOV_MASS,
        mass_on_a,
        n1 as f64 / 2.0,
        Cmp::Ge,
    ));
    checks.push(CheckRecord::new(
        check_names::STAGE1_COLUMN_PRECONDITION,
        min_precondition,
        0.0,
        Cmp::Ge,
    ));
    checks.push(CheckRecord::new(check_names::STAGE1_HALF_SUM, min_half_sum, 0.0, Cmp::Ge));

    let members = s2_entries
        .into_iter()
        .map(|entries| FiniteMeasure::from_entries(k, entries))
        .collect::<Result<Vec<_>>>()?;
    let family = MeasureFamily::new(k, members)?;
    for y in restriction_sets_y.iter_mut() {
        y.sort_unstable();
    }

    let max_mass = family.members().iter().map(|m| m.total_mass()).fold(0.0, f64::max);
    let mass_sum: f64 = family.members().iter().map(|m| m.total_mass()).sum();
    let support_sum: usize = family.members().iter().map(|m| m.support_size()).sum();
    checks.push(CheckRecord::new(check_names::STAGE2_MASS_LE_ONE, max_mass, 1.0, Cmp::Le));
    checks.push(CheckRecord::new(
        check_names::STAGE2_MASS_SUM,
        mass_sum,
        n1 as f64 / 4.0,
        Cmp::Ge,
    ));
    checks.push(CheckRecord::new(
        check_names::STAGE2_SUPPORT_SUM,
        support_sum as f64,
        (2.0 * eps * n1 as f64 + 1.0) * k as f64,
        Cmp::Le,
    ));
    checks.push(CheckRecord::new(
        check_names::STAGE2_UNRELATED_EPS,
        family.min_unrelated_slack(eps),
        0.0,
        Cmp::Ge,
    ));

    Ok(StageOneResult { family, coordinate_set_a, witness_sets_w, restriction_sets_y, checks })
}

/// Witness count per column: ceil(2*eps*(|S|-1)), at least 1 so the heaviest
/// member always survives (this covers eps = 0), at most |S|.
fn select_count_stage(eps: f64, n1: usize) -> usize {
    let raw = (2.0 * eps * (n1 as f64 - 1.0)).ceil() as usize;
    raw.clamp(1, n1)
}

/// Sum of min over ordered distinct pairs of one column's weights.
fn column_pair_min_sum(incident: &[(u32, f64)]) -> f64 {
    let mut ws: Vec<f64> = incident.iter().map(|&(_, w)| w).collect();
    ws.sort_by(|a, b| b.total_cmp(a));
    ws.iter().enumerate().map(|(i, w)| 2.0 * i as f64 * w).sum()
}

// ---------------------------------------------------------------------------
// Stage II -> III
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StageTwoResult {
    pub family: MeasureFamily,
    /// Indices into S2 of the members that survived both filters.
    pub survivors: Vec<usize>,
    pub checks: Vec<CheckRecord>,
}

/// Stage II -> III: keep members with mass at least 1/8, then among those
/// keep the members whose support is at most twice the average; at least a
/// 1/14 fraction of the family survives.
pub fn stage_two_to_three(s2: &MeasureFamily, eps: f64, n: usize) -> Result<StageTwoResult> {
    let out = compute_stage_two(s2, eps, n)?;
    fail_on_violation(&out.checks)?;
    Ok(out)
}

fn compute_stage_two(s2: &MeasureFamily, eps: f64, n: usize) -> Result<StageTwoResult> {
    if s2.len() != n {
        return Err(Error::invalid_argument(format!(
            "stage II->III expects |S2| = n; got {} vs {n}",
            s2.len()
        )));
    }
    let k = s2.ground_set_size();
    let mut checks = Vec::new();

    let sprime: Vec<usize> = mass_filter(s2);
    checks.push(CheckRecord::new(
        check_names::STAGE3_SPRIME_SIZE,
        sprime.len() as f64,
        n as f64 / 7.0,
        Cmp::Ge,
    ));
    if sprime.is_empty() {
        fail_on_violation(&checks)?;
        unreachable!("empty S' always fails the size check for n >= 2");
    }

    let support_sum: usize = s2.members().iter().map(|m| m.support_size()).sum();
    let tau = 2.0 * support_sum as f64 / sprime.len() as f64;
    let survivors: Vec<usize> = sprime
        .iter()
        .copied()
        .filter(|&i| s2.member(i).support_size() as f64 <= tau)
        .collect();

    checks.push(CheckRecord::new(
        check_names::STAGE3_SIZE_HALF,
        survivors.len() as f64,
        sprime.len() as f64 / 2.0,
        Cmp::Ge,
    ));
    checks.push(CheckRecord::new(
        check_names::STAGE3_SIZE_FOURTEENTH,
        survivors.len() as f64,
        n as f64 / 14.0,
        Cmp::Ge,
    ));

    let members: Vec<FiniteMeasure> =
        survivors.iter().map(|&i| s2.member(i).clone()).collect();
    let family = MeasureFamily::new(k, members)?;

    let min_mass = family
        .members()
        .iter()
        .map(|m| m.total_mass())
        .fold(f64::INFINITY, f64::min);
    let max_supp = family.members().iter().map(|m| m.support_size()).max().unwrap_or(0);
    checks.push(CheckRecord::new(check_names::STAGE3_MASS_FLOOR, min_mass, 0.125, Cmp::Ge));
    checks.push(CheckRecord::new(
        check_names::STAGE3_SUPPORT_BOUND,
        max_supp as f64,
        stage_three_support_bound(eps, n, k),
        Cmp::Le,
    ));

    Ok(StageTwoResult { family, survivors, checks })
}

fn mass_filter(s2: &MeasureFamily) -> Vec<usize> {
    (0..s2.len()).filter(|&i| s2.member(i).total_mass() >= 0.125).collect()
}

fn stage_three_support_bound(eps: f64, n: usize, k: usize) -> f64 {
    14.0 * k as f64 * (2.0 * eps + 1.0 / n as f64)
}

// ---------------------------------------------------------------------------
// Stage III -> IV
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StageThreeResult {
    pub family: MeasureFamily,
    /// Per member of S3: the truncation set (heaviest atoms, ties by index).
    pub truncation_sets_z: Vec<Vec<u32>>,
    pub checks: Vec<CheckRecord>,
}

/// Stage III -> IV: truncate each member to its heaviest atoms and
/// renormalize. The truncation keeps mass at least 2*eps, so shared mass
/// between distinct renormalized members stays below 1/2.
pub fn stage_three_to_four(
    s3: &MeasureFamily,
    eps: f64,
    n: usize,
    k: usize,
) -> Result<StageThreeResult> {
    let out = compute_stage_three(s3, eps, n, k)?;
    fail_on_violation(&out.checks)?;
    Ok(out)
}

fn compute_stage_three(
    s3: &MeasureFamily,
    eps: f64,
    n: usize,
    k: usize,
) -> Result<StageThreeResult> {
    if eps < 0.0 || eps > STAGE_MAX_EPS + 1e-12 {
        return Err(Error::OutOfRange(format!("stage III->IV needs eps in [0, 1/8]; got {eps}")));
    }
    if s3.ground_set_size() != k {
        return Err(Error::invalid_argument("ground-set size does not match k"));
    }
    let z_count = truncation_size(eps, n, k);
    let mut checks = Vec::new();

    let mut truncation_sets_z = Vec::with_capacity(s3.len());
    let mut members = Vec::with_capacity(s3.len());
    let mut min_z_mass = f64::INFINITY;
    for m in s3.members() {
        let mut order: Vec<usize> = (0..m.entries().len()).collect();
        order.sort_by(|&a, &b| {
            m.entries()[b]
                .1
                .total_cmp(&m.entries()[a].1)
                .then(m.entries()[a].0.cmp(&m.entries()[b].0))
        });
        let take = z_count.min(order.len());
        let mut z: Vec<u32> = order[..take].iter().map(|&p| m.entries()[p].0).collect();
        z.sort_unstable();
        let kept: Vec<(u32, f64)> =
            z.iter().map(|&atom| (atom, m.weight(atom))).collect();
        let z_mass: f64 = kept.iter().map(|&(_, w)| w).sum();
        min_z_mass = min_z_mass.min(z_mass);
        if z_mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let scaled: Vec<(u32, f64)> = kept.iter().map(|&(a, w)| (a, w / z_mass)).collect();
        members.push(FiniteMeasure::from_entries(k, scaled)?);
        truncation_sets_z.push(z);
    }
    let family = MeasureFamily::new(k, members)?;

    checks.push(CheckRecord::new(check_names::STAGE4_Z_MASS, min_z_mass, 2.0 * eps, Cmp::Ge));
    let max_supp = family.members().iter().map(|m| m.support_size()).max().unwrap_or(0);
    checks.push(CheckRecord::new(
        check_names::STAGE4_SUPPORT_BOUND,
        max_supp as f64,
        z_count as f64,
        Cmp::Le,
    ));
    let max_mass_dev = family
        .members()
        .iter()
        .map(|m| (m.total_mass() - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(CheckRecord::new(check_names::STAGE4_PROBABILITY, max_mass_dev, 0.0, Cmp::Le));
    checks.push(CheckRecord::new(
        check_names::STAGE4_UNRELATED_HALF,
        family.min_unrelated_slack(0.5),
        0.0,
        Cmp::Ge,
    ));

    Ok(StageThreeResult { family, truncation_sets_z, checks })
}

/// ceil(224*eps*(2*eps + 1/n)*k), clamped to [1, k]. The lower clamp keeps
/// the heaviest atom when eps = 0, where the formula would return an empty
/// truncation.
pub fn truncation_size(eps: f64, n: usize, k: usize) -> usize {
    let raw = (224.0 * eps * (2.0 * eps + 1.0 / n as f64) * k as f64).ceil() as usize;
    raw.clamp(1, k)
}

// ---------------------------------------------------------------------------
// Whole pipeline and its certificate
// ---------------------------------------------------------------------------

/// Full transcript of a pipeline run: the four stage families, every index
/// set used by the transformation, and every inequality checked.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineCertificate {
    pub eps: f64,
    /// Point count of the source star (so |S1| = n_star - 1).
    pub n_star: usize,
    /// Ground-set size, 2d+1 for a dimension-d embedding.
    pub k: usize,
    /// S1..S4 in order.
    pub stage_families: Vec<MeasureFamily>,
    pub coordinate_set_a: Vec<u32>,
    pub witness_sets_w: Vec<(u32, Vec<u32>)>,
    pub restriction_sets_y: Vec<Vec<u32>>,
    pub truncation_sets_z: Vec<Vec<u32>>,
    pub checks: Vec<CheckRecord>,
}

impl PipelineCertificate {
    pub fn final_family(&self) -> &MeasureFamily {
        &self.stage_families[3]
    }

    pub fn passes(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Runs the full chain on an accepted (1+eps)-embedding of a star.
pub fn run_pipeline(e: &Embedding, eps: f64) -> Result<PipelineCertificate> {
    if !(0.0..=PIPELINE_MAX_EPS + 1e-12).contains(&eps) {
        return Err(Error::OutOfRange(format!("pipeline needs eps in [0, 1/16]; got {eps}")));
    }
    let n_star = e.point_count();
    let s1 = embedding_to_measures(e, eps)?;
    let n1 = s1.len();
    let k = s1.ground_set_size();

    let mut checks = Vec::new();
    checks.push(CheckRecord::new(
        check_names::ENTRY_FAMILY_SIZE,
        n1 as f64,
        (n_star - 1) as f64,
        Cmp::Eq,
    ));
    let max_mass_dev = s1
        .members()
        .iter()
        .map(|m| (m.total_mass() - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(CheckRecord::new(check_names::ENTRY_PROBABILITY, max_mass_dev, 0.0, Cmp::Le));
    checks.push(CheckRecord::new(
        check_names::ENTRY_UNRELATED_2EPS,
        s1.min_unrelated_slack(2.0 * eps),
        0.0,
        Cmp::Ge,
    ));
    fail_on_violation(&checks)?;

    let st1 = stage_one_to_two(&s1, eps)?;
    let st2 = stage_two_to_three(&st1.family, eps, n1)?;
    let st3 = stage_three_to_four(&st2.family, eps, n1, k)?;

    checks.extend(st1.checks.iter().cloned());
    checks.extend(st2.checks.iter().cloned());
    checks.extend(st3.checks.iter().cloned());
    let size_floor = CheckRecord::new(
        check_names::STAGE4_SIZE_FLOOR,
        st3.family.len() as f64,
        ((n_star - 1) / 14) as f64,
        Cmp::Ge,
    );
    checks.push(size_floor);
    fail_on_violation(&checks)?;

    Ok(PipelineCertificate {
        eps,
        n_star,
        k,
        stage_families: vec![s1, st1.family, st2.family, st3.family],
        coordinate_set_a: st1.coordinate_set_a,
        witness_sets_w: st1.witness_sets_w,
        restriction_sets_y: st1.restriction_sets_y,
        truncation_sets_z: st3.truncation_sets_z,
        checks,
    })
}

/// Outcome of re-checking a certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Recomputes every recorded inequality from the stored families and index
/// sets, and re-derives the restricted/renormalized families to confirm the
/// transcript is self-consistent. Failures are reported, not thrown.
pub fn verify_certificate(cert: &PipelineCertificate) -> VerificationReport {
    let mut failures = Vec::new();
    if cert.stage_families.len() != 4 {
        failures.push(format!(
            "structure: expected 4 stage families, found {}",
            cert.stage_families.len()
        ));
        return VerificationReport { pass: false, failures };
    }
    let [s1, s2, s3, s4]: &[MeasureFamily; 4] =
        match cert.stage_families.as_slice().try_into() {
            Ok(arr) => arr,
            Err(_) => unreachable!("length checked above"),
        };
    let eps = cert.eps;
    let n1 = s1.len();
    let k = cert.k;

    for (name, fam) in [("s1", s1), ("s2", s2), ("s3", s3), ("s4", s4)] {
        if fam.ground_set_size() != k {
            failures.push(format!("structure: family {name} has ground set {} != k={k}", fam.ground_set_size()));
        }
    }
    if s2.len() != n1 {
        failures.push(format!("structure: |S2|={} differs from |S1|={n1}", s2.len()));
    }
    if cert.restriction_sets_y.len() != n1 {
        failures.push("structure: one restriction set per S1 member expected".into());
    }
    if cert.truncation_sets_z.len() != s3.len() {
        failures.push("structure: one truncation set per S3 member expected".into());
    }
    if !failures.is_empty() {
        return VerificationReport { pass: false, failures };
    }

    // Witness sets must live on atoms in A, and the restriction sets must be
    // exactly their inversion.
    {
        let a_sorted = cert.coordinate_set_a.clone();
        let mut y_expected: Vec<Vec<u32>> = vec![Vec::new(); n1];
        for (atom, members) in &cert.witness_sets_w {
            if a_sorted.binary_search(atom).is_err() {
                failures.push(format!("structure: witness atom {atom} not in A"));
            }
            for &m in members {
                if (m as usize) < n1 {
                    y_expected[m as usize].push(*atom);
                } else {
                    failures.push(format!("structure: witness member {m} out of range"));
                }
            }
        }
        for y in y_expected.iter_mut() {
            y.sort_unstable();
        }
        if y_expected != cert.restriction_sets_y {
            failures.push("structure: restriction sets are not the inversion of the witness sets".into());
        }
    }

    // S2 must be the restriction of S1, S4 the renormalized truncation of S3.
    for i in 0..n1 {
        match crate::measure::restrict(s1.member(i), &cert.restriction_sets_y[i]) {
            Ok(expected) => {
                if !measures_close(&expected, s2.member(i), 1e-12) {
                    failures.push(format!("structure: S2 member {i} is not restrict(S1[{i}], Y[{i}])"));
                }
            }
            Err(e) => failures.push(format!("structure: restriction of S1 member {i} failed: {e}")),
        }
    }
    for j in 0..s3.len() {
        match crate::measure::restrict(s3.member(j), &cert.truncation_sets_z[j]) {
            Ok(kept) => {
                let mass = kept.total_mass();
                if mass <= 0.0 {
                    failures.push(format!("structure: truncation of S3 member {j} has zero mass"));
                    continue;
                }
                let scaled: Vec<(u32, f64)> =
                    kept.entries().iter().map(|&(a, w)| (a, w / mass)).collect();
                match FiniteMeasure::from_entries(k, scaled) {
                    Ok(expected) => {
                        if !measures_close(&expected, s4.member(j), 1e-12) {
                            failures.push(format!(
                                "structure: S4 member {j} is not the renormalized truncation of S3[{j}]"
                            ));
                        }
                    }
                    Err(e) => failures.push(format!("structure: renormalization of S3 member {j} failed: {e}")),
                }
            }
            Err(e) => failures.push(format!("structure: truncation of S3 member {j} failed: {e}")),
        }
    }

    // Recompute every recorded inequality.
    for check in &cert.checks {
        match recompute_check(cert, s1, s2, s3, s4, check) {
            Ok((lhs, rhs)) => {
                let scale = 1.0f64.max(lhs.abs()).max(rhs.abs());
                if (lhs - check.lhs).abs() > CHECK_TOLERANCE * scale
                    || (rhs - check.rhs).abs() > CHECK_TOLERANCE * scale
                {
                    failures.push(format!(
                        "check {}: stored ({}, {}) differs from recomputed ({lhs}, {rhs})",
                        check.name, check.lhs, check.rhs
                    ));
                    continue;
                }
                if !evaluate_cmp(lhs, rhs, check.cmp) {
                    failures.push(format!(
                        "check {}: inequality fails on recomputation (lhs={lhs}, rhs={rhs})",
                        check.name
                    ));
                } else if !check.pass {
                    failures.push(format!("check {}: recorded as failing", check.name));
                }
            }
            Err(msg) => failures.push(format!("check {}: {msg}", check.name)),
        }
    }

    VerificationReport { pass: failures.is_empty(), failures }
}

fn measures_close(a: &FiniteMeasure, b: &FiniteMeasure, tol: f64) -> bool {
    if a.entries().len() != b.entries().len() {
        return false;
    }
    a.entries()
        .iter()
        .zip(b.entries())
        .all(|(&(ia, wa), &(ib, wb))| ia == ib && (wa - wb).abs() <= tol * wa.abs().max(1.0))
}

fn recompute_check(
    cert: &PipelineCertificate,
    s1: &MeasureFamily,
    s2: &MeasureFamily,
    s3: &MeasureFamily,
    s4: &MeasureFamily,
    check: &CheckRecord,
) -> std::result::Result<(f64, f64), String> {
    use check_names::*;
    let eps = cert.eps;
    let n1 = s1.len();
    let k = cert.k;
    let name = check.name.as_str();
    let out = match name {
        ENTRY_FAMILY_SIZE => (n1 as f64, (cert.n_star - 1) as f64),
        ENTRY_PROBABILITY => (max_mass_deviation(s1), 0.0),
        ENTRY_UNRELATED_2EPS => (s1.min_unrelated_slack(2.0 * eps), 0.0),
        STAGE1_UNRELATED_EPS => (s1.min_unrelated_slack(eps), 0.0),
        STAGE1_MARKOV_MASS => {
            let a = &cert.coordinate_set_a;
            let mass: f64 = s1
                .members()
                .iter()
                .map(|m| {
                    m.entries()
                        .iter()
                        .filter(|&&(atom, _)| a.binary_search(&atom).is_ok())
                        .map(|&(_, w)| w)
                        .sum::<f64>()
                })
                .sum();
            (mass, n1 as f64 / 2.0)
        }
        STAGE1_COLUMN_PRECONDITION => {
            let threshold = 2.0 * eps * (n1 as f64 - 1.0);
            let a = &cert.coordinate_set_a;
            let mut min_val = f64::INFINITY;
            for (atom, incident) in s1.column_runs() {
                if a.binary_search(&atom).is_ok() {
                    let col_mass: f64 = incident.iter().map(|&(_, w)| w).sum();
                    min_val = min_val.min(threshold * col_mass - column_pair_min_sum(&incident));
                }
            }
            (min_val, 0.0)
        }
        STAGE1_HALF_SUM => {
            let mut min_val = f64::INFINITY;
            let runs = s1.column_runs();
            let col_mass_of = |atom: u32| -> f64 {
                runs.binary_search_by_key(&atom, |&(a, _)| a)
                    .map(|pos| runs[pos].1.iter().map(|&(_, w)| w).sum())
                    .unwrap_or(0.0)
            };
            for (atom, members) in &cert.witness_sets_w {
                let picked: f64 = members.iter().map(|&m| s1.member(m as usize).weight(*atom)).sum();
                min_val = min_val.min(picked - 0.5 * col_mass_of(*atom));
            }
            (min_val, 0.0)
        }
        STAGE2_MASS_LE_ONE => {
            (s2.members().iter().map(|m| m.total_mass()).fold(0.0, f64::max), 1.0)
        }
        STAGE2_MASS_SUM => {
            (s2.members().iter().map(|m| m.total_mass()).sum(), n1 as f64 / 4.0)
        }
        STAGE2_SUPPORT_SUM => (
            s2.members().iter().map(|m| m.support_size()).sum::<usize>() as f64,
            (2.0 * eps * n1 as f64 + 1.0) * k as f64,
        ),
        STAGE2_UNRELATED_EPS => (s2.min_unrelated_slack(eps), 0.0),
        STAGE3_SPRIME_SIZE => (mass_filter(s2).len() as f64, n1 as f64 / 7.0),
        STAGE3_SIZE_HALF => (s3.len() as f64, mass_filter(s2).len() as f64 / 2.0),
        STAGE3_SIZE_FOURTEENTH => (s3.len() as f64, n1 as f64 / 14.0),
        STAGE3_MASS_FLOOR => (
            s3.members().iter().map(|m| m.total_mass()).fold(f64::INFINITY, f64::min),
            0.125,
        ),
        STAGE3_SUPPORT_BOUND => (
            s3.members().iter().map(|m| m.support_size()).max().unwrap_or(0) as f64,
            stage_three_support_bound(eps, n1, k),
        ),
        STAGE4_Z_MASS => {
            let mut min_val = f64::INFINITY;
            for (j, z) in cert.truncation_sets_z.iter().enumerate() {
                let mass: f64 = z.iter().map(|&atom| s3.member(j).weight(atom)).sum();
                min_val = min_val.min(mass);
            }
            (min_val, 2.0 * eps)
        }
        STAGE4_SUPPORT_BOUND => (
            s4.members().iter().map(|m| m.support_size()).max().unwrap_or(0) as f64,
            truncation_size(eps, n1, k) as f64,
        ),
        STAGE4_PROBABILITY => (max_mass_deviation(s4), 0.0),
        STAGE4_UNRELATED_HALF => (s4.min_unrelated_slack(0.5), 0.0),
        STAGE4_SIZE_FLOOR => (s4.len() as f64, ((cert.n_star - 1) / 14) as f64),
        other => return Err(format!("unknown check name `{other}`")),
    };
    Ok(out)
}

fn max_mass_deviation(fam: &MeasureFamily) -> f64 {
    fam.members()
        .iter()
        .map(|m| (m.total_mass() - 1.0).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// JSON document for a pipeline certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub eps: f64,
    pub n_star: usize,
    pub k: usize,
    /// S1..S4 in order, dense weight rows.
    pub stage_families: Vec<MeasureFamilyDoc>,
    pub coordinate_set_a: Vec<u32>,
    pub witness_sets_w: Vec<(u32, Vec<u32>)>,
    pub restriction_sets_y: Vec<Vec<u32>>,
    pub truncation_sets_z: Vec<Vec<u32>>,
    pub checks: Vec<CheckRecord>,
}

impl From<&PipelineCertificate> for CertificateDoc {
    fn from(c: &PipelineCertificate) -> Self {
        CertificateDoc {
            eps: c.eps,
            n_star: c.n_star,
            k: c.k,
            stage_families: c.stage_families.iter().map(MeasureFamilyDoc::from).collect(),
            coordinate_set_a: c.coordinate_set_a.clone(),
            witness_sets_w: c.witness_sets_w.clone(),
            restriction_sets_y: c.restriction_sets_y.clone(),
            truncation_sets_z: c.truncation_sets_z.clone(),
            checks: c.checks.clone(),
        }
    }
}

impl TryFrom<CertificateDoc> for PipelineCertificate {
    type Error = Error;

    fn try_from(doc: CertificateDoc) -> Result<Self> {
        let stage_families = doc
            .stage_families
            .into_iter()
            .map(MeasureFamily::try_from)
            .collect::<Result<Vec<_>>>()?;
        Ok(PipelineCertificate {
            eps: doc.eps,
            n_star: doc.n_star,
            k: doc.k,
            stage_families,
            coordinate_set_a: doc.coordinate_set_a,
            witness_sets_w: doc.witness_sets_w,
            restriction_sets_y: doc.restriction_sets_y,
            truncation_sets_z: doc.truncation_sets_z,
            checks: doc.checks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::SparseVec;
    use crate::metric::star_metric;

    fn m(weights: &[f64]) -> FiniteMeasure {
        FiniteMeasure::from_dense(weights).unwrap()
    }

    #[test]
    fn sparse_select_worked_example() {
        // S = {4,3,2,1}, delta = 2/3: precondition 2/3 * 3 * 10 = 20 >= 20.
        let sel = sparse_select(&[4.0, 3.0, 2.0, 1.0], 2.0 / 3.0).unwrap();
        assert!(sel.precondition_held);
        assert_eq!(sel.selected, vec![0, 1]);
        let sum: f64 = sel.selected.iter().map(|&i| [4.0, 3.0, 2.0, 1.0][i]).sum();
        assert!(sum >= 5.0);
    }

    #[test]
    fn sparse_select_boundary_pair() {
        // S = {1,1}, delta = 0.9: 0.9 * 1 * 2 = 1.8 < 2, precondition fails.
        let sel = sparse_select(&[1.0, 1.0], 0.9).unwrap();
        assert!(!sel.precondition_held);
        assert_eq!(sel.selected, vec![0]);
    }

    #[test]
    fn sparse_select_concentrated_mass() {
        let sel = sparse_select(&[5.0, 0.0, 0.0], 0.5).unwrap();
        assert!(sel.precondition_held);
        assert_eq!(sel.selected, vec![0]);
    }

    #[test]
    fn sparse_select_rejects_bad_input() {
        assert!(sparse_select(&[1.0], 0.5).is_err());
        assert!(sparse_select(&[1.0, 2.0], 0.0).is_err());
        assert!(sparse_select(&[1.0, 2.0], 1.0).is_err());
        assert!(sparse_select(&[1.0, -2.0], 0.5).is_err());
    }

    fn tiny_star_embedding() -> Embedding {
        // Center at 0, leaves at +1 and -1 on the line: isometric.
        let star = star_metric(3).unwrap();
        Embedding::new(
            star,
            1,
            Norm::L1,
            vec![
                SparseVec::zero(),
                SparseVec::from_dense(&[1.0]),
                SparseVec::from_dense(&[-1.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn measures_from_tiny_star() {
        let fam = embedding_to_measures(&tiny_star_embedding(), 0.0).unwrap();
        assert_eq!(fam.len(), 2);
        assert_eq!(fam.ground_set_size(), 3);
        assert_eq!(fam.member(0).to_dense(), vec![1.0, 0.0, 0.0]);
        assert_eq!(fam.member(1).to_dense(), vec![0.0, 1.0, 0.0]);
        assert!(fam.is_unrelated(0.0));
    }

    #[test]
    fn measures_reject_excess_distortion() {
        // Leaves at +1 and -1/3: leaf pair at image distance 4/3 against
        // source distance 2, distortion 3/2.
        let star = star_metric(3).unwrap();
        let e = Embedding::new(
            star,
            1,
            Norm::L1,
            vec![
                SparseVec::zero(),
                SparseVec::from_dense(&[1.0]),
                SparseVec::from_dense(&[-1.0 / 3.0]),
            ],
        )
        .unwrap();
        assert!(matches!(
            embedding_to_measures(&e, 0.05),
            Err(Error::NotAnEmbedding { .. })
        ));
    }

    #[test]
    fn measures_reject_non_star_source() {
        let tree = crate::metric::kary_tree_metric(2, 1).unwrap();
        let e = Embedding::new(
            tree,
            1,
            Norm::L1,
            vec![
                SparseVec::zero(),
                SparseVec::from_dense(&[1.0]),
                SparseVec::from_dense(&[-1.0]),
            ],
        )
        .unwrap();
        assert!(matches!(embedding_to_measures(&e, 0.0), Err(Error::InvalidSource(_))));
    }

    fn disjoint_family(n: usize, k: usize) -> MeasureFamily {
        let members = (0..n)
            .map(|i| FiniteMeasure::point_mass(k, i as u32).unwrap())
            .collect();
        MeasureFamily::new(k, members).unwrap()
    }

    #[test]
    fn stage_one_disjoint_family_is_fixed() {
        let fam = disjoint_family(4, 6);
        let out = stage_one_to_two(&fam, 0.05).unwrap();
        // Nothing to prune: every atom is cheap and each owner survives.
        assert_eq!(out.coordinate_set_a.len(), 6);
        assert_eq!(out.family, fam);
        for (atom, w) in &out.witness_sets_w {
            assert_eq!(w.len(), 1);
            assert_eq!(w[0], *atom);
        }
        assert!(out.checks.iter().all(|c| c.pass));
    }

    #[test]
    fn stage_one_duplicate_pair_large_eps() {
        let fam = MeasureFamily::new(
            2,
            vec![
                FiniteMeasure::point_mass(2, 0).unwrap(),
                FiniteMeasure::point_mass(2, 0).unwrap(),
            ],
        )
        .unwrap();
        // TV = 0 >= 1 - eps only for eps >= 1; the degenerate family still
        // satisfies every stage-II condition.
        let out = stage_one_to_two(&fam, 1.0).unwrap();
        assert_eq!(out.family.len(), 2);
        assert!(out.checks.iter().all(|c| c.pass));
    }

    #[test]
    fn stage_one_rejects_unrelated_violation() {
        let fam = MeasureFamily::new(2, vec![m(&[0.5, 0.5]), m(&[0.5, 0.5])]).unwrap();
        assert!(matches!(
            stage_one_to_two(&fam, 0.1),
            Err(Error::CertificateViolation { .. })
        ));
    }

    #[test]
    fn stage_two_singleton_supports_pass_through() {
        let fam = disjoint_family(5, 5);
        let out = stage_two_to_three(&fam, 0.05, 5).unwrap();
        assert_eq!(out.family, fam);
        assert_eq!(out.survivors, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn stage_two_uniform_quarter_masses() {
        // Every member has mass 1/4 >= 1/8 and equal supports: S' = S2 and
        // the support filter keeps everyone.
        let members: Vec<FiniteMeasure> = (0..4)
            .map(|i| {
                FiniteMeasure::from_entries(8, vec![(2 * i as u32, 0.125), (2 * i as u32 + 1, 0.125)])
                    .unwrap()
            })
            .collect();
        let fam = MeasureFamily::new(8, members).unwrap();
        let out = stage_two_to_three(&fam, 0.05, 4).unwrap();
        assert_eq!(out.family.len(), 4);
    }

    #[test]
    fn stage_three_singleton_supports() {
        let fam = disjoint_family(4, 4);
        let out = stage_three_to_four(&fam, 0.05, 4, 4).unwrap();
        assert_eq!(out.family.len(), 4);
        for (j, z) in out.truncation_sets_z.iter().enumerate() {
            assert_eq!(z, &vec![j as u32]);
        }
        assert!(out.family.is_unrelated(0.5));
    }

    #[test]
    fn stage_three_rejects_large_eps() {
        let fam = disjoint_family(3, 3);
        assert!(matches!(
            stage_three_to_four(&fam, 0.2, 3, 3),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn truncation_keeps_sixteen_eps_fraction() {
        // mu uniform on exactly ceil(14k(2e+1/n)) atoms with mass 1/8: the
        // kept fraction z/supp is at least 16*eps, so mass(Z) >= 2*eps.
        let eps = 0.0625;
        let n = 32;
        let k = 40;
        let supp = (14.0 * k as f64 * (2.0 * eps + 1.0 / n as f64)).floor() as usize;
        let w = 0.125 / supp as f64;
        let entries: Vec<(u32, f64)> = (0..supp as u32).map(|i| (i, w)).collect();
        let fam =
            MeasureFamily::new(k, vec![FiniteMeasure::from_entries(k, entries).unwrap()]).unwrap();
        let out = stage_three_to_four(&fam, eps, n, k).unwrap();
        let z_mass_check = out
            .checks
            .iter()
            .find(|c| c.name == check_names::STAGE4_Z_MASS)
            .unwrap();
        assert!(z_mass_check.pass, "z mass {} below {}", z_mass_check.lhs, z_mass_check.rhs);
    }

    #[test]
    fn pipeline_on_tiny_star() {
        for eps in [0.0, 0.05] {
            let cert = run_pipeline(&tiny_star_embedding(), eps).unwrap();
            assert!(cert.passes());
            assert_eq!(cert.n_star, 3);
            assert_eq!(cert.k, 3);
            assert_eq!(cert.final_family().len(), 2);
            let report = verify_certificate(&cert);
            assert!(report.pass, "verification failed: {:?}", report.failures);
        }
    }

    #[test]
    fn pipeline_rejects_corrupted_embedding() {
        let star = star_metric(4).unwrap();
        // One leaf collapsed toward the center: distortion 3.
        let e = Embedding::new(
            star,
            2,
            Norm::L1,
            vec![
                SparseVec::zero(),
                SparseVec::from_dense(&[1.0, 0.0]),
                SparseVec::from_dense(&[-1.0, 0.0]),
                SparseVec::from_dense(&[0.0, 1.0 / 3.0]),
            ],
        )
        .unwrap();
        assert!(matches!(run_pipeline(&e, 0.05), Err(Error::NotAnEmbedding { .. })));
    }

    #[test]
    fn pipeline_rejects_eps_out_of_range() {
        assert!(matches!(
            run_pipeline(&tiny_star_embedding(), 0.2),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn verify_detects_perturbed_weight() {
        let mut cert = run_pipeline(&tiny_star_embedding(), 0.05).unwrap();
        // Perturb one S4 weight by 0.5.
        let k = cert.k;
        let tampered = {
            let fam = &cert.stage_families[3];
            let mut rows: Vec<Vec<f64>> = fam.members().iter().map(|m| m.to_dense()).collect();
            rows[0][0] += 0.5;
            MeasureFamily::new(
                k,
                rows.iter().map(|r| FiniteMeasure::from_dense(r).unwrap()).collect(),
            )
            .unwrap()
        };
        cert.stage_families[3] = tampered;
        let report = verify_certificate(&cert);
        assert!(!report.pass);
        assert!(
            report.failures.iter().any(|f| f.contains(check_names::STAGE4_PROBABILITY)
                || f.contains("structure: S4")),
            "failures: {:?}",
            report.failures
        );
    }

    #[test]
    fn verify_empty_checks_is_vacuous() {
        let mut cert = run_pipeline(&tiny_star_embedding(), 0.05).unwrap();
        cert.checks.clear();
        let report = verify_certificate(&cert);
        assert!(report.pass);
    }

    #[test]
    fn certificate_doc_round_trip() {
        let cert = run_pipeline(&tiny_star_embedding(), 0.05).unwrap();
        let doc = CertificateDoc::from(&cert);
        let json = serde_json::to_string(&doc).unwrap();
        let back: CertificateDoc = serde_json::from_str(&json).unwrap();
        let cert2 = PipelineCertificate::try_from(back).unwrap();
        assert_eq!(cert, cert2);
        assert!(verify_certificate(&cert2).pass);
    }
}
