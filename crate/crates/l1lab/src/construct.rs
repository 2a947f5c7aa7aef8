//! Upper-bound constructions: random sparse-support star embeddings, the
//! standard-basis equilateral set, unit-edge tree embeddings, and the
//! tree-to-star reduction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{Embedding, Norm, SparseVec};
use crate::error::{Error, Result};
use crate::metric::{
    kary_depth, kary_tree_metric, kary_tree_size, star_metric, uniform_metric, FiniteMetricSpace,
};

/// Parameters for the sparse-support star construction at a target eps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StarParams {
    /// Support size per leaf.
    pub support_size: usize,
    /// Ambient dimension.
    pub dim: usize,
}

/// Default (m, d) for a (1+eps)-embedding of the n-star: m = ceil(8 ln n /
/// eps) atoms per leaf inside d = 4 * ceil(m / eps) coordinates. The mean
/// pairwise support overlap then costs eps/2 of the leaf-leaf distance and
/// concentration covers the rest.
pub fn star_embedding_params(n: usize, eps: f64) -> Result<StarParams> {
    if n < 2 {
        return Err(Error::invalid_argument("star parameters need n >= 2"));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid_argument("star parameters need eps in (0, 1]"));
    }
    let m = (8.0 * (n as f64).ln() / eps).ceil() as usize;
    let m = m.max(1);
    let dim = 4 * ((m as f64 / eps).ceil() as usize);
    Ok(StarParams { support_size: m, dim })
}

/// Star embedding with the default parameters for the target eps.
pub fn default_star_embedding(n: usize, eps: f64, seed: u64) -> Result<Embedding> {
    let params = star_embedding_params(n, eps)?;
    sparse_star_embedding(n, params.dim, params.support_size, seed)
}

/// Random sparse-support star embedding at a caller-chosen dimension.
///
/// The support size is picked so the expected pairwise overlap stays at
/// 2 ln n atoms: m = round(sqrt(2 d ln n)). Historically this construction
/// was drafted with dense sign vectors, but sign codes concentrate leaf-leaf
/// distances at the center-leaf distance instead of twice it; sparse
/// indicator supports realize the 2:1 ratio directly.
pub fn random_sign_star_embedding(n: usize, d: usize, seed: u64) -> Result<Embedding> {
    if n < 2 || d < 1 {
        return Err(Error::invalid_argument("star embedding needs n >= 2 and d >= 1"));
    }
    let m = ((2.0 * d as f64 * (n as f64).ln()).sqrt().round() as usize).clamp(1, d);
    sparse_star_embedding(n, d, m, seed)
}

/// Center at the origin; leaf i is (1/m) times the indicator of a uniform
/// random m-subset of the d coordinates. Center-leaf distances are 1; the
/// leaf-leaf distance is 2(1 - |S_i intersect S_j| / m).
pub fn sparse_star_embedding(n: usize, d: usize, m: usize, seed: u64) -> Result<Embedding> {
    if n < 2 || d < 1 {
        return Err(Error::invalid_argument("star embedding needs n >= 2 and d >= 1"));
    }
    if m < 1 || m > d {
        return Err(Error::invalid_argument(format!("support size {m} outside [1, {d}]")));
    }
    let star = star_metric(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = 1.0 / m as f64;
    let mut points = Vec::with_capacity(n);
    points.push(SparseVec::zero());
    for _ in 1..n {
        let support = sample_subset(&mut rng, d, m);
        let entries = support.into_iter().map(|atom| (atom, weight)).collect();
        points.push(SparseVec::from_entries(entries));
    }
    Embedding::new(star, d, Norm::L1, points)
}

/// Floyd's algorithm: a uniform m-subset of 0..d in O(m) expected time,
/// returned sorted.
fn sample_subset(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Vec<u32> {
    let mut chosen: Vec<u32> = Vec::with_capacity(m);
    for j in (d - m)..d {
        let t = rng.gen_range(0..=j as u64) as u32;
        if chosen.contains(&t) {
            chosen.push(j as u32);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// The standard basis e_1..e_n in l1^n, as an embedding of the distance-2
/// uniform metric. All pairwise distances are exactly 2.
pub fn equilateral_set(n: usize) -> Result<Embedding> {
    let source = uniform_metric(n, 2.0)?;
    let points = (0..n)
        .map(|i| SparseVec::from_entries(vec![(i as u32, 1.0)]))
        .collect();
    Embedding::new(source, n, Norm::L1, points)
}

/// Unit-edge embedding of the complete k-ary tree: node v maps to the
/// indicator of the edges on its root path, so l1 distances equal tree
/// distances exactly. With eps > 0 every point is displaced by a seeded
/// noise vector of l1 norm at most eps/6, which keeps the distortion within
/// 1+eps (adjacent nodes are at distance 1, so each pair moves by a factor
/// of at most (1 + eps/3)/(1 - eps/3)).
pub fn tree_embedding(k: usize, h: usize, d: usize, eps: f64, seed: u64) -> Result<Embedding> {
    let tree = kary_tree_metric(k, h)?;
    let n = tree.point_count();
    let edges = n - 1;
    if d < edges {
        return Err(Error::invalid_argument(format!(
            "tree embedding needs d >= {edges} (one coordinate per edge); got {d}"
        )));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid_argument("tree embedding needs eps in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for v in 0..n {
        let mut entries: Vec<(u32, f64)> = Vec::new();
        let mut u = v;
        while u > 0 {
            entries.push((u as u32 - 1, 1.0));
            u = (u - 1) / k;
        }
        let mut point = SparseVec::from_entries(entries);
        if eps > 0.0 {
            point = point.add(&noise_vector(&mut rng, d, eps / 6.0));
        }
        points.push(point);
    }
    Embedding::new(tree, d, Norm::L1, points)
}

/// A random vector with l1 norm exactly `budget`, spread over up to 8
/// coordinates.
fn noise_vector(rng: &mut ChaCha8Rng, d: usize, budget: f64) -> SparseVec {
    let t = d.min(8);
    let mut picks: Vec<(u32, f64)> = Vec::with_capacity(t);
    let support = sample_subset(rng, d, t);
    let mut total = 0.0;
    for atom in support {
        let v: f64 = rng.gen_range(-1.0..1.0);
        total += v.abs();
        picks.push((atom, v));
    }
    if total == 0.0 {
        return SparseVec::zero();
    }
    let scale = budget / total;
    SparseVec::from_entries(picks.into_iter().map(|(a, v)| (a, v * scale)).collect())
}

/// Tree-to-star reduction: from a (1+eps)-embedding of the complete k-ary
/// height-h tree, builds an embedding of the (1 + k^ceil(h/2))-star with
/// distortion at most 1+4eps.
///
/// Each node w at height ceil(h/2) contributes the leaf image
/// (f(x_w) - f(w)) / (h - ceil(h/2)), where x_w is the first-child-descent
/// leaf below w; the center maps to the origin. The output inherits
/// 1-Lipschitzness from the (normalized) input, and both postconditions are
/// measured and enforced.
pub fn tree_to_star_embedding(f: &Embedding, k: usize, h: usize, eps: f64) -> Result<Embedding> {
    if k < 2 || h < 2 {
        return Err(Error::invalid_argument("tree-to-star reduction needs k >= 2 and h >= 2"));
    }
    if !(0.0..=0.125 + 1e-12).contains(&eps) {
        return Err(Error::OutOfRange(format!("tree-to-star reduction needs eps in [0, 1/8]; got {eps}")));
    }
    if f.norm() != Norm::L1 {
        return Err(Error::InvalidSource("tree-to-star reduction expects an l1 embedding".into()));
    }
    let expected = kary_tree_metric(k, h)?;
    if !metrics_close(f.source(), &expected) {
        return Err(Error::InvalidSource(format!(
            "source is not the complete {k}-ary tree of height {h}"
        )));
    }
    let measured = f.distortion()?;
    if !(measured <= (1.0 + eps) * (1.0 + 1e-9)) {
        return Err(Error::NotAnEmbedding { eps, measured });
    }
    let lip = f.lipschitz_constant()?;
    if lip == 0.0 {
        return Err(Error::DegenerateEmbedding("all tree points coincide".into()));
    }

    let half = h.div_ceil(2);
    let denom = (h - half) as f64;
    // First node at depth `half` in the heap layout.
    let first = (kary_tree_size(k, half - 1))
        .ok_or_else(|| Error::ResourceLimit("tree too large".into()))?;
    let count = k.pow(half as u32);
    let scale = 1.0 / (lip * denom);

    let star = star_metric(1 + count)?;
    let mut points = Vec::with_capacity(1 + count);
    points.push(SparseVec::zero());
    for v in first..(first + count) {
        debug_assert_eq!(kary_depth(k, v), half);
        let mut leaf = v;
        while kary_depth(k, leaf) < h {
            leaf = k * leaf + 1;
        }
        let diff = f.point(leaf).sub(f.point(v)).scale(scale);
        points.push(diff);
    }
    let g = Embedding::new(star, f.dim(), Norm::L1, points)?;

    let g_lip = g.lipschitz_constant()?;
    if g_lip > 1.0 + 1e-9 {
        return Err(Error::Postcondition {
            op: "tree_to_star_embedding",
            detail: format!("output Lipschitz constant {g_lip} exceeds 1"),
        });
    }
    let g_dist = g.distortion()?;
    let bound = if eps == 0.0 { 1.0 + 1e-9 } else { (1.0 + 4.0 * eps) * (1.0 + 1e-6) };
    if !(g_dist <= bound) {
        return Err(Error::Postcondition {
            op: "tree_to_star_embedding",
            detail: format!("output distortion {g_dist} exceeds 1 + 4*eps = {}", 1.0 + 4.0 * eps),
        });
    }
    Ok(g)
}

fn metrics_close(a: &FiniteMetricSpace, b: &FiniteMetricSpace) -> bool {
    if a.point_count() != b.point_count() {
        return false;
    }
    let n = a.point_count();
    for i in 0..n {
        for j in 0..n {
            if (a.distance(i, j) - b.distance(i, j)).abs() > 1e-9 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_params_scale() {
        let p = star_embedding_params(64, 0.25).unwrap();
        assert_eq!(p.support_size, (8.0 * 64f64.ln() / 0.25).ceil() as usize);
        assert_eq!(p.dim, 4 * ((p.support_size as f64 / 0.25).ceil() as usize));
    }

    #[test]
    fn sparse_star_center_leaf_distances() {
        for seed in 0..5u64 {
            let e = sparse_star_embedding(8, 50, 7, seed).unwrap();
            for leaf in 1..8 {
                assert!((e.image_distance(0, leaf) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparse_star_single_leaf_is_isometric() {
        let e = sparse_star_embedding(2, 10, 3, 42).unwrap();
        assert!((e.distortion().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_star_is_deterministic() {
        let a = sparse_star_embedding(6, 40, 5, 7).unwrap();
        let b = sparse_star_embedding(6, 40, 5, 7).unwrap();
        let c = sparse_star_embedding(6, 40, 5, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn subset_sampling_is_uniform_sized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = sample_subset(&mut rng, 20, 6);
            assert_eq!(s.len(), 6);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&a| a < 20));
        }
    }

    #[test]
    fn equilateral_examples() {
        let e2 = equilateral_set(2).unwrap();
        assert_eq!(e2.image_distance(0, 1), 2.0);
        let e5 = equilateral_set(5).unwrap();
        for i in 0..5 {
            for j in (i + 1)..5 {
                assert_eq!(e5.image_distance(i, j), 2.0);
            }
        }
        assert!((e5.distortion().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tree_embedding_is_isometric_at_zero_eps() {
        let e = tree_embedding(2, 3, 14, 0.0, 1).unwrap();
        let tree = e.source();
        for i in 0..tree.point_count() {
            for j in 0..tree.point_count() {
                if i != j {
                    assert!((e.image_distance(i, j) - tree.distance(i, j)).abs() < 1e-12);
                }
            }
        }
        assert!((e.distortion().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tree_embedding_perturbed_stays_within_eps() {
        for (eps, seed) in [(0.05, 3u64), (0.125, 9)] {
            let e = tree_embedding(2, 4, 30, eps, seed).unwrap();
            assert!(e.distortion().unwrap() <= 1.0 + eps + 1e-12);
        }
    }

    #[test]
    fn tree_embedding_needs_enough_dimensions() {
        assert!(tree_embedding(2, 3, 10, 0.0, 1).is_err());
    }

    #[test]
    fn tree_to_star_isometric_input() {
        // k=2, h=2: two height-1 nodes, so the target is the 3-star.
        let f = tree_embedding(2, 2, 6, 0.0, 1).unwrap();
        let g = tree_to_star_embedding(&f, 2, 2, 0.0).unwrap();
        assert_eq!(g.point_count(), 3);
        assert!(g.distortion().unwrap() <= 1.0 + 1e-9);
    }

    #[test]
    fn tree_to_star_sizes() {
        // k=3, h=3: ceil(3/2) = 2, 9 height-2 nodes, 10-point star.
        let f = tree_embedding(3, 3, 39, 0.0, 5).unwrap();
        let g = tree_to_star_embedding(&f, 3, 3, 0.0).unwrap();
        assert_eq!(g.point_count(), 10);

        // k=2, h=4: ceil(4/2) = 2, 4 height-2 nodes, 5-point star.
        let f = tree_embedding(2, 4, 30, 0.0, 5).unwrap();
        let g = tree_to_star_embedding(&f, 2, 4, 0.0).unwrap();
        assert_eq!(g.point_count(), 5);
    }

    #[test]
    fn tree_to_star_perturbed_bound() {
        for (eps, seed) in [(0.02, 11u64), (0.05, 12), (0.125, 13)] {
            let f = tree_embedding(2, 4, 30, eps, seed).unwrap();
            let measured = f.distortion().unwrap();
            assert!(measured <= 1.0 + eps + 1e-12);
            let g = tree_to_star_embedding(&f, 2, 4, eps).unwrap();
            assert!(g.lipschitz_constant().unwrap() <= 1.0 + 1e-9);
            assert!(g.distortion().unwrap() <= (1.0 + 4.0 * eps) * (1.0 + 1e-6));
        }
    }

    #[test]
    fn tree_to_star_rejects_wrong_source() {
        let f = tree_embedding(2, 3, 14, 0.0, 1).unwrap();
        assert!(matches!(
            tree_to_star_embedding(&f, 3, 3, 0.0),
            Err(Error::InvalidSource(_))
        ));
    }

    #[test]
    fn tree_to_star_rejects_excess_distortion() {
        let f = tree_embedding(2, 4, 30, 0.125, 3).unwrap();
        // Claim a tighter eps than the input satisfies.
        assert!(matches!(
            tree_to_star_embedding(&f, 2, 4, 0.001),
            Err(Error::NotAnEmbedding { .. })
        ));
    }
}
