//! Frontier sweeps: for each (n, eps, trial) find the smallest dimension at
//! which the random star construction achieves distortion 1+eps, run the
//! lower-bound pipeline on that embedding, and record the row.

use std::io::Write;

use rayon::prelude::*;

use crate::bounds;
use crate::construct::random_sign_star_embedding;
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, verify_certificate};

/// Hard cap on the dimension schedule.
pub const MAX_SWEEP_DIM: usize = 1 << 23;

/// One output row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub eps: f64,
    pub trial: usize,
    pub seed: u64,
    pub d_achieved: usize,
    pub d_lower: u64,
    pub cert_pass: bool,
}

pub const SWEEP_CSV_HEADER: &str = "n,eps,trial,seed,d_achieved,d_lower,cert_pass";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n, self.eps, self.trial, self.seed, self.d_achieved, self.d_lower, self.cert_pass
        )
    }
}

/// Doubling-then-bisection over the construction's dimension: returns the
/// smallest scheduled d (within 1/64 relative resolution) at which the
/// seeded embedding achieves distortion <= 1+eps, plus the embedding itself.
pub fn smallest_achieving_dimension(
    n: usize,
    eps: f64,
    seed: u64,
) -> Result<(usize, Embedding)> {
    let achieves = |d: usize| -> Result<Option<Embedding>> {
        let e = random_sign_star_embedding(n, d, seed)?;
        if e.distortion()? <= 1.0 + eps + 1e-12 {
            Ok(Some(e))
        } else {
            Ok(None)
        }
    };
    let mut d = 8usize;
    let mut found = loop {
        if let Some(e) = achieves(d)? {
            break e;
        }
        d *= 2;
        if d > MAX_SWEEP_DIM {
            return Err(Error::ResourceLimit(format!(
                "no dimension up to {MAX_SWEEP_DIM} achieved distortion <= {}",
                1.0 + eps
            )));
        }
    };
    let mut hi = d;
    let mut lo = d / 2; // failed (or below the schedule start)
    while hi - lo > (hi / 64).max(1) {
        let mid = lo + (hi - lo) / 2;
        match achieves(mid)? {
            Some(e) => {
                hi = mid;
                found = e;
            }
            None => lo = mid,
        }
    }
    Ok((hi, found))
}

/// The strongest applicable evaluated lower bound: the counting bound when
/// its preconditions hold, and the ball-packing bound at D = 1+eps always.
pub fn best_lower_bound(n: usize, eps: f64) -> u64 {
    let volume = bounds::volume_lower_bound(n as u64, 1.0 + eps).unwrap_or(1);
    let counting = bounds::evaluate_lower_bound(n as u64, eps)
        .map(|r| r.d_lower)
        .unwrap_or(0);
    volume.max(counting)
}

/// Splitmix-style mixing for reproducible per-trial seeds.
pub fn derive_seed(master: u64, n: usize, eps_index: usize, trial: usize) -> u64 {
    let mut state = master
        ^ splitmix(n as u64)
        ^ splitmix(0x9e37_79b9_7f4a_7c15 ^ eps_index as u64)
        ^ splitmix(0x2545_f491_4f6c_dd1d ^ trial as u64);
    state = splitmix(state);
    state
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn run_cell(n: usize, eps: f64, eps_index: usize, trial: usize, master_seed: u64) -> Result<SweepRow> {
    let seed = derive_seed(master_seed, n, eps_index, trial);
    let (d_achieved, embedding) = smallest_achieving_dimension(n, eps, seed)?;
    let cert_pass = match run_pipeline(&embedding, eps) {
        Ok(cert) => cert.passes() && verify_certificate(&cert).pass,
        Err(_) => false,
    };
    Ok(SweepRow {
        n,
        eps,
        trial,
        seed,
        d_achieved,
        d_lower: best_lower_bound(n, eps),
        cert_pass,
    })
}

/// Runs a full sweep; rows come back in (n, eps, trial) order regardless of
/// completion order.
pub fn run_sweep(
    ns: &[usize],
    epss: &[f64],
    trials: usize,
    master_seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut cells = Vec::new();
    for &n in ns {
        for (eps_index, &eps) in epss.iter().enumerate() {
            for trial in 0..trials {
                cells.push((n, eps, eps_index, trial));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(n, eps, eps_index, trial)| run_cell(n, eps, eps_index, trial, master_seed))
        .collect()
}

/// Streams a sweep to a CSV writer cell by cell, flushing after every
/// (n, eps) cell so interrupted runs keep their finished rows.
pub fn run_sweep_to_writer<W: Write>(
    ns: &[usize],
    epss: &[f64],
    trials: usize,
    master_seed: u64,
    out: &mut W,
) -> Result<Vec<SweepRow>> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    let mut all = Vec::new();
    for &n in ns {
        for (eps_index, &eps) in epss.iter().enumerate() {
            let rows: Result<Vec<SweepRow>> = (0..trials)
                .into_par_iter()
                .map(|trial| run_cell(n, eps, eps_index, trial, master_seed))
                .collect();
            let rows = rows?;
            for row in &rows {
                writeln!(out, "{}", row.to_csv())?;
            }
            out.flush()?;
            all.extend(rows);
        }
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a = derive_seed(0, 16, 0, 0);
        let b = derive_seed(0, 16, 0, 0);
        let c = derive_seed(0, 16, 0, 1);
        let d = derive_seed(0, 16, 1, 0);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn bisection_finds_achieving_dimension() {
        let (d, e) = smallest_achieving_dimension(8, 0.5, 3).unwrap();
        assert!(e.distortion().unwrap() <= 1.5 + 1e-12);
        assert!(d >= 1);
        // The resolution guarantee: 63/64 of the found dimension fails or
        // is below the schedule start.
        let below = (d as f64 * 63.0 / 64.0).floor() as usize;
        if below >= 8 && below < d {
            let worse = random_sign_star_embedding(8, below, 3).unwrap();
            // Not asserted: randomness is only roughly monotone in d. The
            // found dimension itself must achieve the target, checked above.
            let _ = worse;
        }
    }

    #[test]
    fn tiny_sweep_rows_are_ordered_and_pass() {
        let rows = run_sweep(&[8, 12], &[0.0625], 2, 7).unwrap();
        assert_eq!(rows.len(), 4);
        let mut expected = Vec::new();
        for &n in &[8usize, 12] {
            for trial in 0..2 {
                expected.push((n, trial));
            }
        }
        for (row, (n, trial)) in rows.iter().zip(expected) {
            assert_eq!((row.n, row.trial), (n, trial));
            assert!(row.cert_pass, "certificate failed at n={n}, trial={trial}");
            assert!(row.d_achieved as u64 >= row.d_lower);
        }
    }

    #[test]
    fn csv_writer_emits_header_and_rows() {
        let mut buf = Vec::new();
        let rows = run_sweep_to_writer(&[8], &[0.5], 1, 1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines[0], SWEEP_CSV_HEADER);
        assert_eq!(lines.len(), 1 + rows.len());
    }
}
