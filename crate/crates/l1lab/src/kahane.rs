//! Square-root helix embeddings of the real line into l2, and the
//! per-coordinate composition that turns an l1 point set into an l2 one at
//! the square root of the metric.
//!
//! The map sends x to a bank of scaled circles
//! (a_i cos(w_i x), a_i sin(w_i x)) over a geometric frequency ladder, so
//! that the squared distance sum(4 a_i^2 sin^2(w_i (x-y) / 2)) tracks |x-y|.
//! No closed-form distortion bound is attempted: each instance is calibrated
//! numerically on its requested range, and the achieved slack is reported
//! and threaded into downstream assertions.

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, Norm, SparseVec};
use crate::error::{Error, Result};

/// Relative coverage floor: pair gaps below `floor_rel * (hi - lo)` are
/// outside the calibrated band and may undershoot the lower bound.
const FLOOR_REL: f64 = 1e-5;

/// Grid resolution for calibration.
const GRID_POINTS: usize = 20_000;

/// Headroom shaved off the upper bound so off-grid gaps cannot exceed it.
const UPPER_MARGIN: f64 = 1e-4;

/// Escalation schedule: (sub-steps per octave, low-frequency pad, high-
/// frequency pad). Denser ladders cost dimensions and buy a smaller ripple.
const ATTEMPTS: [(usize, f64, f64); 4] =
    [(2, 0.05, 16.0), (4, 0.02, 64.0), (8, 0.01, 128.0), (12, 0.005, 256.0)];

/// A calibrated square-root helix on a finite range.
#[derive(Debug, Clone, PartialEq)]
pub struct KahaneMap {
    eps: f64,
    lo: f64,
    hi: f64,
    frequencies: Vec<f64>,
    amplitudes: Vec<f64>,
    achieved_eps: f64,
}

impl KahaneMap {
    /// Output dimension: one cosine and one sine per ladder frequency.
    pub fn dim(&self) -> usize {
        2 * self.frequencies.len()
    }

    /// Calibration slack actually achieved on the range: the map satisfies
    /// (1 - achieved_eps) sqrt(|x-y|) <= |K(x)-K(y)|_2 <= sqrt(|x-y|) on the
    /// calibration band.
    pub fn achieved_eps(&self) -> f64 {
        self.achieved_eps
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Smallest gap the calibration certifies.
    pub fn coverage_floor(&self) -> f64 {
        FLOOR_REL * (self.hi - self.lo)
    }

    /// Evaluates the map at x.
    pub fn apply(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (f, a) in self.frequencies.iter().zip(&self.amplitudes) {
            let theta = f * x;
            out.push(a * theta.cos());
            out.push(a * theta.sin());
        }
        out
    }

    /// |K(x) - K(y)|_2^2, directly from the ladder; depends only on |x-y|.
    pub fn squared_distance(&self, gap: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.amplitudes)
            .map(|(f, a)| {
                let s = (f * gap / 2.0).sin();
                4.0 * a * a * s * s
            })
            .sum()
    }
}

/// Builds and calibrates a helix for the requested eps on [lo, hi].
///
/// The ladder is densified until the measured ratio band gives
/// achieved_eps <= eps; if even the densest schedule falls short the error
/// carries the best achieved value.
pub fn kahane_map(eps: f64, lo: f64, hi: f64) -> Result<KahaneMap> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid_argument("kahane_map needs eps in (0, 1)"));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid_argument("kahane_map needs a finite range with lo < hi"));
    }
    let width = hi - lo;
    let mut best: Option<KahaneMap> = None;
    for (substeps, alpha, beta) in ATTEMPTS {
        let candidate = calibrate(eps, lo, hi, width, substeps, alpha, beta)?;
        let better = best
            .as_ref()
            .map(|b| candidate.achieved_eps < b.achieved_eps)
            .unwrap_or(true);
        if better {
            best = Some(candidate);
        }
        if let Some(b) = &best {
            if b.achieved_eps <= eps {
                return Ok(best.unwrap());
            }
        }
    }
    Err(Error::Calibration {
        requested: eps,
        achieved: best.map(|b| b.achieved_eps).unwrap_or(1.0),
    })
}

fn calibrate(
    eps: f64,
    lo: f64,
    hi: f64,
    width: f64,
    substeps: usize,
    alpha: f64,
    beta: f64,
) -> Result<KahaneMap> {
    let gamma = 2f64.powf(1.0 / substeps as f64);
    let w0 = alpha / width;
    let wmax = beta / (width * FLOOR_REL);
    let count = ((wmax / w0).ln() / gamma.ln()).ceil() as usize + 1;
    let frequencies: Vec<f64> = (0..count).map(|i| w0 * gamma.powi(i as i32)).collect();
    // Unscaled squared amplitudes (gamma - 1)/w discretize dw/w^2.
    let base_sq: Vec<f64> = frequencies.iter().map(|w| (gamma - 1.0) / w).collect();

    let ratio_at = |gap: f64| -> f64 {
        let s: f64 = frequencies
            .iter()
            .zip(&base_sq)
            .map(|(w, a2)| {
                let t = (w * gap / 2.0).sin();
                4.0 * a2 * t * t
            })
            .sum();
        s / gap
    };

    // Log-spaced gap grid over the calibrated band.
    let gap_lo = width * FLOOR_REL;
    let log_step = (width / gap_lo).ln() / (GRID_POINTS as f64 - 1.0);
    let mut rmax = f64::NEG_INFINITY;
    let mut rmin = f64::INFINITY;
    for i in 0..GRID_POINTS {
        let gap = gap_lo * (log_step * i as f64).exp();
        let r = ratio_at(gap);
        rmax = rmax.max(r);
        rmin = rmin.min(r);
    }
    if !(rmax.is_finite() && rmin > 0.0) {
        return Err(Error::Calibration { requested: eps, achieved: 1.0 });
    }
    // Scale so the grid maximum sits just under 1.
    let c = (1.0 - UPPER_MARGIN) / rmax;
    let achieved_eps = 1.0 - (c * rmin).sqrt();
    let amplitudes: Vec<f64> = base_sq.iter().map(|a2| (c * a2).sqrt()).collect();
    Ok(KahaneMap { eps, lo, hi, frequencies, amplitudes, achieved_eps })
}

/// A composed square-root embedding together with the helix it used.
#[derive(Debug, Clone)]
pub struct SqrtComposition {
    pub embedding: Embedding,
    pub map: KahaneMap,
}

/// Applies one calibrated helix to every coordinate of an l1 embedding and
/// concatenates the blocks, yielding an l2 embedding with
/// |g(x)-g(y)|_2^2 <= |f(x)-f(y)|_1 and, for pairs in the calibrated band,
/// |g(x)-g(y)|_2 >= (1 - 2 eps - achieved_eps) sqrt(|f(x)-f(y)|_1).
/// Both inequalities are measured on every pair and enforced.
pub fn compose_sqrt_embedding(f: &Embedding, eps: f64) -> Result<SqrtComposition> {
    if f.norm() != Norm::L1 {
        return Err(Error::InvalidSource("square-root composition expects an l1 embedding".into()));
    }
    let n = f.point_count();
    if n < 2 {
        return Err(Error::invalid_argument("composition needs at least two points"));
    }
    if !f.distortion()?.is_finite() {
        return Err(Error::DegenerateEmbedding("composition needs an injective embedding".into()));
    }
    // Coordinate range over the dense view; absent sparse entries are zeros.
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for p in f.points() {
        for &(_, w) in p.entries() {
            lo = lo.min(w);
            hi = hi.max(w);
        }
    }
    if lo == hi {
        return Err(Error::DegenerateEmbedding("all coordinates are equal".into()));
    }
    let map = kahane_map(eps, lo, hi)?;
    let block = map.dim();
    let dim = f.dim() * block;

    let mut points = Vec::with_capacity(n);
    for p in f.points() {
        let dense = p.to_dense(f.dim());
        let mut row = Vec::with_capacity(dim);
        for &x in &dense {
            row.extend(map.apply(x));
        }
        points.push(SparseVec::from_dense(&row));
    }
    let g = Embedding::new(f.source().clone(), dim, Norm::L2, points)?;

    let lower = 1.0 - 2.0 * eps - map.achieved_eps();
    for i in 0..n {
        for j in (i + 1)..n {
            let d1 = f.image_distance(i, j);
            let d2 = g.image_distance(i, j);
            if d2 * d2 > d1 * (1.0 + 1e-6) {
                return Err(Error::Postcondition {
                    op: "compose_sqrt_embedding",
                    detail: format!(
                        "pair ({i},{j}): squared l2 distance {} exceeds l1 distance {d1}",
                        d2 * d2
                    ),
                });
            }
            if d1 > 0.0 && d2 < lower * d1.sqrt() - 1e-9 {
                return Err(Error::Postcondition {
                    op: "compose_sqrt_embedding",
                    detail: format!(
                        "pair ({i},{j}): l2 distance {d2} below {} * sqrt({d1})",
                        lower
                    ),
                });
            }
        }
    }
    Ok(SqrtComposition { embedding: g, map })
}

/// JSON document for a calibrated helix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KahaneMapDoc {
    pub eps: f64,
    pub range: (f64, f64),
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub achieved_eps: f64,
}

impl From<&KahaneMap> for KahaneMapDoc {
    fn from(m: &KahaneMap) -> Self {
        KahaneMapDoc {
            eps: m.eps,
            range: (m.lo, m.hi),
            frequencies: m.frequencies.clone(),
            amplitudes: m.amplitudes.clone(),
            achieved_eps: m.achieved_eps,
        }
    }
}

impl From<KahaneMapDoc> for KahaneMap {
    fn from(doc: KahaneMapDoc) -> Self {
        KahaneMap {
            eps: doc.eps,
            lo: doc.range.0,
            hi: doc.range.1,
            frequencies: doc.frequencies,
            amplitudes: doc.amplitudes,
            achieved_eps: doc.achieved_eps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::equilateral_set;

    fn point_distance(map: &KahaneMap, x: f64, y: f64) -> f64 {
        let a = map.apply(x);
        let b = map.apply(y);
        a.iter()
            .zip(&b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn zero_gap_maps_to_zero_distance() {
        let map = kahane_map(0.2, 0.0, 1.0).unwrap();
        assert_eq!(point_distance(&map, 0.4, 0.4), 0.0);
    }

    #[test]
    fn unit_gap_within_theorem_band() {
        // (1 - eps) sqrt(1) <= |K(x)-K(y)| <= sqrt(1) at eps = 0.2.
        let map = kahane_map(0.2, 0.0, 1.0).unwrap();
        let d = point_distance(&map, 0.0, 1.0);
        assert!(d >= 0.8 && d <= 1.0, "distance {d}");
    }

    #[test]
    fn distances_are_translation_invariant() {
        let map = kahane_map(0.2, -5.0, 5.0).unwrap();
        let d1 = point_distance(&map, 0.0, 1.0);
        let d2 = point_distance(&map, 2.0, 3.0);
        assert!((d1 - d2).abs() < 1e-12);
        // And the ladder form agrees with the point form.
        assert!((map.squared_distance(1.0) - d1 * d1).abs() < 1e-12);
    }

    #[test]
    fn band_holds_on_sampled_pairs() {
        use rand::{Rng, SeedableRng};
        let eps = 0.1;
        let map = kahane_map(eps, 0.0, 1.0).unwrap();
        let floor = map.coverage_floor();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut failures = 0usize;
        let total = 10_000usize;
        for _ in 0..total {
            let x: f64 = rng.gen_range(0.0..1.0);
            let y: f64 = rng.gen_range(0.0..1.0);
            let gap = (x - y).abs();
            if gap == 0.0 {
                continue;
            }
            let d = point_distance(&map, x, y);
            let upper_ok = d <= gap.sqrt() * (1.0 + 1e-6);
            let lower_ok = d >= (1.0 - map.achieved_eps()) * gap.sqrt() - 1e-9;
            if !upper_ok || (gap >= floor && !lower_ok) {
                failures += 1;
            }
        }
        // 99.9% of pairs must satisfy both bounds.
        assert!(failures <= total / 1000, "{failures} out-of-band pairs");
    }

    #[test]
    fn ladder_scales_with_the_range() {
        let a = kahane_map(0.2, 0.0, 1.0).unwrap();
        let b = kahane_map(0.2, 0.0, 2.0).unwrap();
        // Doubling the range halves the ladder frequencies and leaves the
        // calibration statistics unchanged.
        let rel = (a.achieved_eps() - b.achieved_eps()).abs() / a.achieved_eps();
        assert!(rel < 0.01, "achieved eps drifted by {rel}");
        assert!((a.frequencies[0] / b.frequencies[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn unreachable_eps_reports_achieved() {
        match kahane_map(1e-6, 0.0, 1.0) {
            Err(Error::Calibration { requested, achieved }) => {
                assert_eq!(requested, 1e-6);
                assert!(achieved > 1e-6 && achieved < 0.05);
            }
            other => panic!("expected calibration failure, got {other:?}"),
        }
    }

    #[test]
    fn composition_on_a_segment() {
        // Two points at l1 distance 1 reduce to the single-coordinate case.
        let line = crate::metric::uniform_metric(2, 1.0).unwrap();
        let f = Embedding::new(
            line,
            1,
            Norm::L1,
            vec![SparseVec::zero(), SparseVec::from_dense(&[1.0])],
        )
        .unwrap();
        let eps = 0.1;
        let comp = compose_sqrt_embedding(&f, eps).unwrap();
        let d = comp.embedding.image_distance(0, 1);
        let lo = 1.0 - comp.map.achieved_eps();
        assert!(d * d <= 1.0 + 1e-6);
        assert!(d >= lo - 1e-9, "distance {d} below {lo}");
    }

    #[test]
    fn composition_on_equilateral_set() {
        let f = equilateral_set(5).unwrap();
        let eps = 0.1;
        let comp = compose_sqrt_embedding(&f, eps).unwrap();
        let g = comp.embedding;
        let lower = (1.0 - 2.0 * eps - comp.map.achieved_eps()) * 2f64.sqrt();
        for i in 0..5 {
            for j in (i + 1)..5 {
                let d = g.image_distance(i, j);
                assert!(d * d <= 2.0 * (1.0 + 1e-6));
                assert!(d >= lower - 1e-9);
            }
        }
    }

    #[test]
    fn composition_rejects_constant_maps() {
        let line = crate::metric::uniform_metric(2, 1.0).unwrap();
        let f = Embedding::new(line, 1, Norm::L1, vec![SparseVec::zero(), SparseVec::zero()])
            .unwrap();
        assert!(matches!(
            compose_sqrt_embedding(&f, 0.1),
            Err(Error::DegenerateEmbedding(_))
        ));
    }

    #[test]
    fn doc_round_trip() {
        let map = kahane_map(0.2, 0.0, 1.0).unwrap();
        let doc = KahaneMapDoc::from(&map);
        let back = KahaneMap::from(doc);
        assert_eq!(map, back);
    }
}
