//! Point sets in normed space and exact Lipschitz/distortion computation.
//!
//! Points are stored sparsely (sorted index/value pairs). The constructions
//! this workbench cares about produce either small dense vectors (trees,
//! helix compositions) or very high-dimensional sparse ones (random star
//! embeddings), and the sparse form serves both. For nonnegative point sets
//! under l1 the pairwise distances are accumulated atom-by-atom, which keeps
//! the cost proportional to the number of stored entries rather than the
//! ambient dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{star_metric, FiniteMetricSpace};

/// Norm tag for embedded point sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
}

/// A sparse vector: entries sorted by coordinate index, zeros omitted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn zero() -> Self {
        SparseVec { entries: Vec::new() }
    }

    /// Builds from (index, value) pairs; sorts and drops exact zeros.
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> Self {
        entries.retain(|&(_, w)| w != 0.0);
        entries.sort_unstable_by_key(|&(i, _)| i);
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0), "duplicate index");
        SparseVec { entries }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w != 0.0)
            .map(|(i, &w)| (i as u32, w))
            .collect();
        SparseVec { entries }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, w) in &self.entries {
            out[i as usize] = w;
        }
        out
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn get(&self, index: u32) -> f64 {
        match self.entries.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|&(i, _)| i)
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w.abs()).sum()
    }

    pub fn is_nonneg(&self) -> bool {
        self.entries.iter().all(|&(_, w)| w >= 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|&(_, w)| w.is_finite())
    }

    pub fn scale(&self, factor: f64) -> Self {
        SparseVec {
            entries: self.entries.iter().map(|&(i, w)| (i, w * factor)).collect(),
        }
    }

    /// self + other, by sorted merge.
    pub fn add(&self, other: &SparseVec) -> Self {
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut a, mut b) = (0, 0);
        while a < self.entries.len() || b < other.entries.len() {
            match (self.entries.get(a), other.entries.get(b)) {
                (Some(&(ia, wa)), Some(&(ib, wb))) => {
                    if ia == ib {
                        let w = wa + wb;
                        if w != 0.0 {
                            out.push((ia, w));
                        }
                        a += 1;
                        b += 1;
                    } else if ia < ib {
                        out.push((ia, wa));
                        a += 1;
                    } else {
                        out.push((ib, wb));
                        b += 1;
                    }
                }
                (Some(&(ia, wa)), None) => {
                    out.push((ia, wa));
                    a += 1;
                }
                (None, Some(&(ib, wb))) => {
                    out.push((ib, wb));
                    b += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        SparseVec { entries: out }
    }

    /// self - other, by sorted merge.
    pub fn sub(&self, other: &SparseVec) -> Self {
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut a, mut b) = (0, 0);
        while a < self.entries.len() || b < other.entries.len() {
            match (self.entries.get(a), other.entries.get(b)) {
                (Some(&(ia, wa)), Some(&(ib, wb))) => {
                    if ia == ib {
                        let w = wa - wb;
                        if w != 0.0 {
                            out.push((ia, w));
                        }
                        a += 1;
                        b += 1;
                    } else if ia < ib {
                        out.push((ia, wa));
                        a += 1;
                    } else {
                        out.push((ib, -wb));
                        b += 1;
                    }
                }
                (Some(&(ia, wa)), None) => {
                    out.push((ia, wa));
                    a += 1;
                }
                (None, Some(&(ib, wb))) => {
                    out.push((ib, -wb));
                    b += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        SparseVec { entries: out }
    }

    pub fn l1_distance(&self, other: &SparseVec) -> f64 {
        let mut total = 0.0;
        merge_fold(self, other, |wa, wb| total += (wa - wb).abs());
        total
    }

    pub fn l2_distance(&self, other: &SparseVec) -> f64 {
        let mut total = 0.0;
        merge_fold(self, other, |wa, wb| {
            let d = wa - wb;
            total += d * d;
        });
        total.sqrt()
    }

    pub fn distance(&self, other: &SparseVec, norm: Norm) -> f64 {
        match norm {
            Norm::L1 => self.l1_distance(other),
            Norm::L2 => self.l2_distance(other),
        }
    }
}

/// Walks the union of two sorted entry lists, feeding aligned values to `f`.
fn merge_fold(a: &SparseVec, b: &SparseVec, mut f: impl FnMut(f64, f64)) {
    let (mut x, mut y) = (0, 0);
    while x < a.entries.len() || y < b.entries.len() {
        match (a.entries.get(x), b.entries.get(y)) {
            (Some(&(ia, wa)), Some(&(ib, wb))) => {
                if ia == ib {
                    f(wa, wb);
                    x += 1;
                    y += 1;
                } else if ia < ib {
                    f(wa, 0.0);
                    x += 1;
                } else {
                    f(0.0, wb);
                    y += 1;
                }
            }
            (Some(&(_, wa)), None) => {
                f(wa, 0.0);
                x += 1;
            }
            (None, Some(&(_, wb))) => {
                f(0.0, wb);
                y += 1;
            }
            (None, None) => unreachable!(),
        }
    }
}

/// A map from a finite metric space into R^d under a tagged norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    source: FiniteMetricSpace,
    dim: usize,
    norm: Norm,
    points: Vec<SparseVec>,
}

/// Exact Lipschitz data for an embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionReport {
    pub lipschitz: f64,
    pub inverse_lipschitz: f64,
    pub distortion: f64,
    /// Pair attaining the Lipschitz constant.
    pub max_ratio_pair: (usize, usize),
    /// Pair attaining the inverse Lipschitz constant.
    pub min_ratio_pair: (usize, usize),
}

impl Embedding {
    pub fn new(
        source: FiniteMetricSpace,
        dim: usize,
        norm: Norm,
        points: Vec<SparseVec>,
    ) -> Result<Self> {
        if points.len() != source.point_count() {
            return Err(Error::invalid_argument(format!(
                "{} points for a {}-point source",
                points.len(),
                source.point_count()
            )));
        }
        for (idx, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::invalid_argument(format!("point {idx} has a non-finite entry")));
            }
            if let Some(max) = p.max_index() {
                if max as usize >= dim {
                    return Err(Error::invalid_argument(format!(
                        "point {idx} has coordinate index {max} >= dim {dim}"
                    )));
                }
            }
        }
        Ok(Embedding { source, dim, norm, points })
    }

    pub fn source(&self) -> &FiniteMetricSpace {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, i: usize) -> &SparseVec {
        &self.points[i]
    }

    pub fn points(&self) -> &[SparseVec] {
        &self.points
    }

    pub fn image_distance(&self, i: usize, j: usize) -> f64 {
        self.points[i].distance(&self.points[j], self.norm)
    }

    /// Full n*n image-distance table.
    ///
    /// For nonnegative l1 point sets, |a-b| = a + b - 2*min(a,b) per
    /// coordinate, so distances reduce to per-atom min accumulation over the
    /// shared support; that path costs O(nnz log nnz + sum of per-atom
    /// incidence squared) instead of O(n^2 * dim).
    pub fn image_distance_matrix(&self) -> Vec<f64> {
        let n = self.points.len();
        if self.norm == Norm::L1 && n <= 4096 && self.points.iter().all(|p| p.is_nonneg()) {
            return self.l1_matrix_nonneg();
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.image_distance(i, j);
                out[i * n + j] = d;
                out[j * n + i] = d;
            }
        }
        out
    }

    fn l1_matrix_nonneg(&self) -> Vec<f64> {
        let n = self.points.len();
        let masses: Vec<f64> = self.points.iter().map(|p| p.l1_norm()).collect();
        let mut triples: Vec<(u32, u32, f64)> = Vec::new();
        for (p, point) in self.points.iter().enumerate() {
            for &(atom, w) in point.entries() {
                triples.push((atom, p as u32, w));
            }
        }
        triples.sort_unstable_by_key(|&(atom, p, _)| (atom, p));
        let mut min_shared = vec![0.0f64; n * n];
        let mut start = 0;
        while start < triples.len() {
            let atom = triples[start].0;
            let mut end = start;
            while end < triples.len() && triples[end].0 == atom {
                end += 1;
            }
            for a in start..end {
                for b in (a + 1)..end {
                    let (pa, wa) = (triples[a].1 as usize, triples[a].2);
                    let (pb, wb) = (triples[b].1 as usize, triples[b].2);
                    min_shared[pa * n + pb] += wa.min(wb);
                }
            }
            start = end;
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = masses[i] + masses[j] - 2.0 * min_shared[i * n + j];
                // Guard against cancellation noise on near-identical points.
                let d = d.max(0.0);
                out[i * n + j] = d;
                out[j * n + i] = d;
            }
        }
        out
    }

    /// max over pairs of image distance / source distance.
    pub fn lipschitz_constant(&self) -> Result<f64> {
        Ok(self.distortion_report()?.lipschitz)
    }

    pub fn distortion(&self) -> Result<f64> {
        Ok(self.distortion_report()?.distortion)
    }

    pub fn distortion_report(&self) -> Result<DistortionReport> {
        let n = self.points.len();
        if n < 2 {
            return Err(Error::invalid_argument("distortion needs at least two points"));
        }
        let image = self.image_distance_matrix();
        let mut lip = f64::NEG_INFINITY;
        let mut inv = f64::NEG_INFINITY;
        let mut max_pair = (0, 1);
        let mut min_pair = (0, 1);
        for i in 0..n {
            for j in (i + 1)..n {
                let ds = self.source.distance(i, j);
                let di = image[i * n + j];
                let ratio = di / ds;
                if ratio > lip {
                    lip = ratio;
                    max_pair = (i, j);
                }
                let inv_ratio = if di == 0.0 { f64::INFINITY } else { ds / di };
                if inv_ratio > inv {
                    inv = inv_ratio;
                    min_pair = (i, j);
                }
            }
        }
        let distortion = if inv.is_infinite() { f64::INFINITY } else { lip * inv };
        Ok(DistortionReport {
            lipschitz: lip,
            inverse_lipschitz: inv,
            distortion,
            max_ratio_pair: max_pair,
            min_ratio_pair: min_pair,
        })
    }

    /// Translates the base point (index 0) to the origin and rescales so the
    /// Lipschitz constant is 1. Distortion is unchanged.
    pub fn normalize_to_one_lipschitz(&self) -> Result<Embedding> {
        let report = self.distortion_report()?;
        if report.distortion.is_infinite() {
            return Err(Error::DegenerateEmbedding(
                "two distinct points share an image".into(),
            ));
        }
        if report.lipschitz == 0.0 {
            return Err(Error::DegenerateEmbedding("all points coincide".into()));
        }
        let base = self.points[0].clone();
        let scale = 1.0 / report.lipschitz;
        let points = self
            .points
            .iter()
            .map(|p| p.sub(&base).scale(scale))
            .collect();
        Embedding::new(self.source.clone(), self.dim, self.norm, points)
    }
}

/// JSON document for an embedding; `points` are dense rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingDoc {
    pub n: usize,
    pub dim: usize,
    pub norm: Norm,
    pub points: Vec<Vec<f64>>,
}

impl From<&Embedding> for EmbeddingDoc {
    fn from(e: &Embedding) -> Self {
        EmbeddingDoc {
            n: e.point_count(),
            dim: e.dim,
            norm: e.norm,
            points: e.points.iter().map(|p| p.to_dense(e.dim)).collect(),
        }
    }
}

impl EmbeddingDoc {
    /// Reconstructs an embedding whose source is the `n`-star; this is the
    /// convention for files consumed by `pipeline run`.
    pub fn into_star_embedding(self) -> Result<Embedding> {
        let source = star_metric(self.n)?;
        self.into_embedding(source)
    }

    pub fn into_embedding(self, source: FiniteMetricSpace) -> Result<Embedding> {
        if self.points.len() != self.n {
            return Err(Error::Parse(format!(
                "embedding document has {} rows but n={}",
                self.points.len(),
                self.n
            )));
        }
        let points = self
            .points
            .iter()
            .map(|row| {
                if row.len() != self.dim {
                    Err(Error::Parse(format!(
                        "point row has {} coordinates, expected {}",
                        row.len(),
                        self.dim
                    )))
                } else {
                    Ok(SparseVec::from_dense(row))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Embedding::new(source, self.dim, self.norm, points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::uniform_metric;
    use proptest::prelude::*;

    fn path_metric(n: usize) -> FiniteMetricSpace {
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = (i as f64 - j as f64).abs();
            }
        }
        FiniteMetricSpace::from_table(n, dist, None).unwrap()
    }

    fn dense_embedding(
        source: FiniteMetricSpace,
        dim: usize,
        norm: Norm,
        rows: &[&[f64]],
    ) -> Embedding {
        let points = rows.iter().map(|r| SparseVec::from_dense(r)).collect();
        Embedding::new(source, dim, norm, points).unwrap()
    }

    #[test]
    fn identity_line_is_one_lipschitz() {
        let e = dense_embedding(path_metric(3), 1, Norm::L1, &[&[0.0], &[1.0], &[2.0]]);
        assert_eq!(e.lipschitz_constant().unwrap(), 1.0);
    }

    #[test]
    fn constant_map_has_zero_lipschitz() {
        let e = dense_embedding(path_metric(3), 1, Norm::L1, &[&[5.0], &[5.0], &[5.0]]);
        assert_eq!(e.lipschitz_constant().unwrap(), 0.0);
        assert!(e.distortion().unwrap().is_infinite());
    }

    #[test]
    fn star3_signed_line() {
        let star = star_metric(3).unwrap();
        let e = dense_embedding(star, 1, Norm::L1, &[&[0.0], &[1.0], &[-1.0]]);
        assert_eq!(e.lipschitz_constant().unwrap(), 1.0);
        assert_eq!(e.distortion().unwrap(), 1.0);
    }

    #[test]
    fn scaling_is_distortion_free() {
        let e = dense_embedding(path_metric(2), 1, Norm::L1, &[&[0.0], &[2.0]]);
        let r = e.distortion_report().unwrap();
        assert_eq!(r.lipschitz, 2.0);
        assert_eq!(r.inverse_lipschitz, 0.5);
        assert_eq!(r.distortion, 1.0);
    }

    #[test]
    fn non_injective_is_infinite() {
        let e = dense_embedding(path_metric(3), 2, Norm::L1, &[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]]);
        assert!(e.distortion().unwrap().is_infinite());
        assert!(e.normalize_to_one_lipschitz().is_err());
    }

    #[test]
    fn normalize_fixed_point() {
        let star = star_metric(3).unwrap();
        let e = dense_embedding(star, 1, Norm::L1, &[&[0.0], &[1.0], &[-1.0]]);
        let n = e.normalize_to_one_lipschitz().unwrap();
        assert_eq!(n, e);
    }

    #[test]
    fn normalize_undoes_uniform_scaling() {
        let star = star_metric(4).unwrap();
        let e = dense_embedding(
            star.clone(),
            2,
            Norm::L1,
            &[&[0.0, 0.0], &[3.0, 0.0], &[0.0, 3.0], &[-3.0, 0.0]],
        );
        let n = e.normalize_to_one_lipschitz().unwrap();
        assert!((n.lipschitz_constant().unwrap() - 1.0).abs() < 1e-12);
        let before = e.distortion().unwrap();
        let after = n.distortion().unwrap();
        assert!((before - after).abs() <= 1e-9 * before);
    }

    #[test]
    fn sparse_dense_distance_agreement() {
        let a = SparseVec::from_dense(&[0.0, 1.5, 0.0, -2.0]);
        let b = SparseVec::from_dense(&[1.0, 0.0, 0.0, 4.0]);
        assert_eq!(a.l1_distance(&b), 1.0 + 1.5 + 6.0);
        let expect = (1.0f64 + 1.5 * 1.5 + 36.0).sqrt();
        assert!((a.l2_distance(&b) - expect).abs() < 1e-15);
    }

    #[test]
    fn incidence_and_merge_paths_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(2..10);
            let dim = rng.gen_range(1..30);
            let points: Vec<SparseVec> = (0..n)
                .map(|_| {
                    let entries = (0..dim)
                        .filter(|_| rng.gen_bool(0.4))
                        .map(|i| (i as u32, rng.gen_range(0.0..2.0)))
                        .collect();
                    SparseVec::from_entries(entries)
                })
                .collect();
            let e = Embedding::new(uniform_metric(n, 1.0).unwrap(), dim, Norm::L1, points).unwrap();
            let fast = e.image_distance_matrix();
            for i in 0..n {
                for j in 0..n {
                    let slow = e.image_distance(i, j);
                    assert!(
                        (fast[i * n + j] - slow).abs() < 1e-12,
                        "mismatch at ({i},{j}): {} vs {slow}",
                        fast[i * n + j]
                    );
                }
            }
        }
    }

    /// Cross-check of the distortion report against a literal double loop on
    /// all stars with n <= 8.
    #[test]
    fn star_distortion_cross_check() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 2..=8usize {
            let star = star_metric(n).unwrap();
            let dim = 3;
            let points: Vec<SparseVec> = (0..n)
                .map(|_| {
                    SparseVec::from_dense(&[
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ])
                })
                .collect();
            let e = Embedding::new(star.clone(), dim, Norm::L1, points).unwrap();
            let report = e.distortion_report().unwrap();
            let mut max_ratio: f64 = f64::NEG_INFINITY;
            let mut max_inv: f64 = f64::NEG_INFINITY;
            for i in 0..n {
                for j in (i + 1)..n {
                    let ratio = e.image_distance(i, j) / star.distance(i, j);
                    let inv = star.distance(i, j) / e.image_distance(i, j);
                    max_ratio = max_ratio.max(ratio);
                    max_inv = max_inv.max(inv);
                }
            }
            assert!((report.distortion - max_ratio * max_inv).abs() <= 1e-9 * report.distortion);
        }
    }

    proptest! {
        /// Distortion is at least 1 and invariant under translation and
        /// positive scaling, including the argmax pairs.
        #[test]
        fn distortion_invariances(
            coords in proptest::collection::vec(-10.0f64..10.0, 10),
            shift in -5.0f64..5.0,
            scale in 0.1f64..10.0,
        ) {
            let rows: Vec<Vec<f64>> = coords.chunks(2).map(|c| c.to_vec()).collect();
            let star = star_metric(5).unwrap();
            let points: Vec<SparseVec> = rows.iter().map(|r| SparseVec::from_dense(r)).collect();
            let e = Embedding::new(star.clone(), 2, Norm::L1, points).unwrap();
            let r = e.distortion_report().unwrap();
            prop_assume!(r.distortion.is_finite());
            prop_assert!(r.distortion >= 1.0 - 1e-12);

            let moved: Vec<SparseVec> = rows
                .iter()
                .map(|row| {
                    SparseVec::from_dense(&row.iter().map(|x| (x + shift) * scale).collect::<Vec<_>>())
                })
                .collect();
            let e2 = Embedding::new(star, 2, Norm::L1, moved).unwrap();
            let r2 = e2.distortion_report().unwrap();
            prop_assert!((r.distortion - r2.distortion).abs() <= 1e-9 * r.distortion);
            prop_assert_eq!(r.max_ratio_pair, r2.max_ratio_pair);
            prop_assert_eq!(r.min_ratio_pair, r2.min_ratio_pair);
        }
    }

    #[test]
    fn doc_round_trip_preserves_distances() {
        let star = star_metric(4).unwrap();
        let e = dense_embedding(
            star,
            2,
            Norm::L1,
            &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]],
        );
        let doc = EmbeddingDoc::from(&e);
        let back = doc.into_star_embedding().unwrap();
        assert_eq!(e, back);
    }
}
