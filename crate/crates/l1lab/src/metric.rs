//! Finite metric spaces backed by exact pairwise distance tables.
//!
//! Generators cover the two tree families the workbench studies: the `n`-star
//! (one center, `n-1` leaves, unit edges) and the complete `k`-ary tree of
//! height `h`, both with unit edge weights. Distances are stored as doubles;
//! the generators only ever emit exact small integers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on point counts; the tables are O(n^2).
pub const DEFAULT_MAX_POINTS: usize = 100_000;

/// Absolute tolerance used by the validator when checking metric axioms.
pub const METRIC_TOLERANCE: f64 = 1e-9;

/// A finite metric space: `n` points and a symmetric distance table.
///
/// Point indices are the canonical identity; labels are display-only.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricSpace {
    n: usize,
    /// Full row-major n*n table. Kept dense for O(1) lookups.
    dist: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl FiniteMetricSpace {
    /// Builds a space from a full row-major `n*n` table.
    pub fn from_table(n: usize, dist: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_argument("metric space needs at least one point"));
        }
        if dist.len() != n * n {
            return Err(Error::invalid_argument(format!(
                "distance table has {} entries, expected {}",
                dist.len(),
                n * n
            )));
        }
        if let Some(ls) = &labels {
            if ls.len() != n {
                return Err(Error::invalid_argument("label count does not match point count"));
            }
        }
        Ok(FiniteMetricSpace { n, dist, labels })
    }

    pub fn point_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Checks the metric axioms: zero diagonal, symmetry, positivity off the
    /// diagonal, and the triangle inequality over all triples (O(n^3)).
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.distance(i, i).abs() > METRIC_TOLERANCE {
                return Err(Error::InvalidSource(format!("dist({i},{i}) != 0")));
            }
            for j in 0..n {
                let d = self.distance(i, j);
                if !d.is_finite() {
                    return Err(Error::InvalidSource(format!("dist({i},{j}) is not finite")));
                }
                if (d - self.distance(j, i)).abs() > METRIC_TOLERANCE {
                    return Err(Error::InvalidSource(format!("dist({i},{j}) is not symmetric")));
                }
                if i != j && d <= METRIC_TOLERANCE {
                    return Err(Error::InvalidSource(format!("dist({i},{j}) is not positive")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    if self.distance(i, j) > self.distance(i, l) + self.distance(l, j) + METRIC_TOLERANCE {
                        return Err(Error::InvalidSource(format!(
                            "triangle inequality fails on ({i},{j},{l})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// True when the space is the unit-edge star with center 0.
    pub fn is_star(&self) -> bool {
        let n = self.n;
        if n < 2 {
            return false;
        }
        for i in 1..n {
            if (self.distance(0, i) - 1.0).abs() > METRIC_TOLERANCE {
                return false;
            }
            for j in 1..n {
                let want = if i == j { 0.0 } else { 2.0 };
                if (self.distance(i, j) - want).abs() > METRIC_TOLERANCE {
                    return false;
                }
            }
        }
        true
    }
}

/// The unit-edge star on `n` points. Point 0 is the center; leaves sit at
/// distance 1 from it and 2 from each other.
pub fn star_metric(n: usize) -> Result<FiniteMetricSpace> {
    if n < 2 {
        return Err(Error::invalid_argument("star_metric requires n >= 2"));
    }
    if n > DEFAULT_MAX_POINTS {
        return Err(Error::ResourceLimit(format!(
            "star with {n} points exceeds the {DEFAULT_MAX_POINTS}-point limit"
        )));
    }
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dist[i * n + j] = if i == j {
                0.0
            } else if i == 0 || j == 0 {
                1.0
            } else {
                2.0
            };
        }
    }
    FiniteMetricSpace::from_table(n, dist, None)
}

/// Number of nodes in the complete `k`-ary tree of height `h`.
pub fn kary_tree_size(k: usize, h: usize) -> Option<usize> {
    // (k^{h+1} - 1) / (k - 1), computed in u128 to survive large requests.
    let mut pow: u128 = 1;
    for _ in 0..=h {
        pow = pow.checked_mul(k as u128)?;
    }
    let count = (pow - 1) / (k as u128 - 1);
    usize::try_from(count).ok()
}

/// Complete `k`-ary tree of height `h` with unit edges; the root has height
/// zero. Nodes are indexed in breadth-first order (heap layout), so node `v`
/// has children `k*v + 1 .. k*v + k`.
pub fn kary_tree_metric(k: usize, h: usize) -> Result<FiniteMetricSpace> {
    kary_tree_metric_with_limit(k, h, DEFAULT_MAX_POINTS)
}

pub fn kary_tree_metric_with_limit(k: usize, h: usize, limit: usize) -> Result<FiniteMetricSpace> {
    if k < 2 || h < 1 {
        return Err(Error::invalid_argument("kary_tree_metric requires k >= 2 and h >= 1"));
    }
    let n = match kary_tree_size(k, h) {
        Some(n) if n <= limit => n,
        _ => {
            return Err(Error::ResourceLimit(format!(
                "complete {k}-ary tree of height {h} exceeds the {limit}-point limit"
            )))
        }
    };
    let depth: Vec<usize> = (0..n).map(|v| kary_depth(k, v)).collect();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            // Lift the deeper node until the two meet at their LCA.
            let (mut a, mut b) = (i, j);
            let mut d = 0usize;
            while depth[a] > depth[b] {
                a = (a - 1) / k;
                d += 1;
            }
            while depth[b] > depth[a] {
                b = (b - 1) / k;
                d += 1;
            }
            while a != b {
                a = (a - 1) / k;
                b = (b - 1) / k;
                d += 2;
            }
            dist[i * n + j] = d as f64;
            dist[j * n + i] = d as f64;
        }
    }
    FiniteMetricSpace::from_table(n, dist, None)
}

/// Depth of node `v` in the heap layout of a complete `k`-ary tree.
pub(crate) fn kary_depth(k: usize, v: usize) -> usize {
    let mut v = v;
    let mut d = 0;
    while v > 0 {
        v = (v - 1) / k;
        d += 1;
    }
    d
}

/// The uniform metric: every pair of distinct points at distance `d`.
pub fn uniform_metric(n: usize, d: f64) -> Result<FiniteMetricSpace> {
    if n < 2 {
        return Err(Error::invalid_argument("uniform_metric requires n >= 2"));
    }
    if !(d > 0.0) {
        return Err(Error::invalid_argument("uniform_metric requires d > 0"));
    }
    let mut dist = vec![d; n * n];
    for i in 0..n {
        dist[i * n + i] = 0.0;
    }
    FiniteMetricSpace::from_table(n, dist, None)
}

/// JSON document for a metric space: `dist` is the row-major strict lower
/// triangle (rows i = 1..n, columns j < i).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSpaceDoc {
    pub n: usize,
    pub dist: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl From<&FiniteMetricSpace> for MetricSpaceDoc {
    fn from(m: &FiniteMetricSpace) -> Self {
        let mut tri = Vec::with_capacity(m.n * (m.n - 1) / 2);
        for i in 1..m.n {
            for j in 0..i {
                tri.push(m.distance(i, j));
            }
        }
        MetricSpaceDoc { n: m.n, dist: tri, labels: m.labels.clone() }
    }
}

impl TryFrom<MetricSpaceDoc> for FiniteMetricSpace {
    type Error = Error;

    fn try_from(doc: MetricSpaceDoc) -> Result<Self> {
        let n = doc.n;
        if doc.dist.len() != n * (n - 1) / 2 {
            return Err(Error::Parse(format!(
                "lower triangle has {} entries, expected {}",
                doc.dist.len(),
                n * (n - 1) / 2
            )));
        }
        let mut table = vec![0.0; n * n];
        let mut it = doc.dist.iter();
        for i in 1..n {
            for j in 0..i {
                let d = *it.next().expect("length checked");
                table[i * n + j] = d;
                table[j * n + i] = d;
            }
        }
        FiniteMetricSpace::from_table(n, table, doc.labels)
    }
}
