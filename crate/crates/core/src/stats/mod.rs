//! Estimators and convergence diagnostics over orbit ensembles.
//!
//! Probabilities are ensemble frequencies under the run's reference measure.
//! Sums skip the burn-in indices `0..floor(n^gamma)`.

mod diagnostics;
mod ensemble;
mod gof;

pub use diagnostics::{
    correlation_decay_diagnostic, covariance_curve, dprime_diagnostic, joint_laplace, laplace_convergence, run_blocks,
    ulc_diagnostic, DecayCurve, DprimeDiagnostic, LaplaceCell, LaplaceTable, UlcDiagnostic,
};
pub use ensemble::{run_ensemble, simulate_exceedances, EnsembleRun, ReferenceMeasure, RunSettings, SystemSpec};
pub use gof::{
    chi_square_geometric, interarrival_test, kolmogorov_sf, ks_p_value, ks_statistic, AtomWindow, Ecdf,
    KaplanMeier, SizeHistogram, TestReport, Verdict, DEFAULT_ALPHA, MIN_INTERARRIVAL_ATOMS, MIN_KS_SAMPLE,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointprocess::{detect_clusters, mark_of, Exceedance, MarkType};
use crate::seeds;

pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const MIN_ESCAPES: u64 = 100;
pub const MIN_CLUSTERS: usize = 100;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Mean and standard error of i.i.d. per-orbit values.
    pub fn mean_of(values: &[f64]) -> Estimate {
        let n = values.len() as f64;
        if values.is_empty() {
            return Estimate {
                value: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = pairwise_sum(values) / n;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = if values.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
        Estimate {
            value: mean,
            stderr: (var / n).sqrt(),
        }
    }
}

/// Sum in a fixed pairwise order, independent of how the values were produced.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Escape and exceedance counts of one orbit over `[start, len - q)`.
fn escape_counts(ex: &[Exceedance], q: usize, start: usize, len: usize) -> (u64, u64) {
    let stop = len.saturating_sub(q);
    let mut esc = 0;
    let mut exc = 0;
    for (k, e) in ex.iter().enumerate() {
        if e.index < start || e.index >= stop {
            continue;
        }
        exc += 1;
        match ex.get(k + 1) {
            Some(next) if next.index - e.index <= q => {}
            _ => esc += 1,
        }
    }
    (esc, exc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta: f64,
    /// Orbit-level bootstrap standard error.
    pub stderr: f64,
    pub escapes: u64,
    pub exceedances: u64,
}

impl ThetaEstimate {
    /// `theta +- z stderr`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.theta - z * self.stderr, self.theta + z * self.stderr)
    }
}

/// `theta` as escapes over exceedances in `[start, len - q)`, pooled over orbits.
pub fn estimate_theta_from(
    orbits: &[Vec<Exceedance>],
    q: usize,
    start: usize,
    len: usize,
    seed: u64,
) -> Result<ThetaEstimate> {
    let per: Vec<(u64, u64)> = orbits.iter().map(|o| escape_counts(o, q, start, len)).collect();
    let esc: u64 = per.iter().map(|p| p.0).sum();
    let exc: u64 = per.iter().map(|p| p.1).sum();
    if exc == 0 {
        return Err(Error::NoExceedances("theta is undefined without exceedances"));
    }
    if esc < MIN_ESCAPES {
        return Err(Error::InsufficientData(format!(
            "theta needs at least {MIN_ESCAPES} escapes, got {esc}"
        )));
    }
    let mut rng = seeds::rng(seeds::derive_labelled(seed, "bootstrap", 0));
    let m = per.len();
    let ratios: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let (mut a, mut b) = (0u64, 0u64);
            for _ in 0..m {
                let p = per[rng.random_range(0..m)];
                a += p.0;
                b += p.1;
            }
            if b == 0 {
                f64::NAN
            } else {
                a as f64 / b as f64
            }
        })
        .filter(|r| r.is_finite())
        .collect();
    let theta = esc as f64 / exc as f64;
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (ratios.len() as f64 - 1.0);
    Ok(ThetaEstimate {
        theta,
        stderr: var.sqrt(),
        escapes: esc,
        exceedances: exc,
    })
}

/// `theta_hat` of a run, over the post-burn-in indices.
pub fn estimate_theta(run: &EnsembleRun) -> Result<ThetaEstimate> {
    estimate_theta_from(run.orbits(), run.q, run.burn_in, run.len(), run.seed)
}

/// Normalised cluster marks pooled over an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicitySample {
    pub mark_type: MarkType,
    /// `a_n` times the finite marks (raw counts for REPP).
    pub ecdf: Ecdf,
    pub infinite: usize,
    pub clusters: usize,
    pub sizes: SizeHistogram,
}

/// Marks of the clusters whose escape lies in `[burn_in, H n - q)`.
pub fn empirical_multiplicity(run: &EnsembleRun) -> Result<MultiplicitySample> {
    let stop = run.len().saturating_sub(run.q);
    let scale = if run.mark_type == MarkType::Repp { 1.0 } else { run.a_n };
    let mut marks = Vec::new();
    let mut sizes = Vec::new();
    let mut infinite = 0;
    for o in run.orbits() {
        for c in detect_clusters(o, run.q, run.len())? {
            if c.escape_index < run.burn_in || c.escape_index >= stop {
                continue;
            }
            let m = mark_of(&c.excesses, run.mark_type);
            if m.is_finite() {
                marks.push(scale * m);
            } else {
                infinite += 1;
            }
            sizes.push(c.size());
        }
    }
    let clusters = sizes.len();
    if clusters < MIN_CLUSTERS {
        return Err(Error::InsufficientData(format!(
            "multiplicity needs at least {MIN_CLUSTERS} clusters, got {clusters}"
        )));
    }
    Ok(MultiplicitySample {
        mark_type: run.mark_type,
        ecdf: Ecdf::new(marks),
        infinite,
        clusters,
        sizes: SizeHistogram::from_sizes(sizes),
    })
}

/// Atom windows `[burn_in, H n - q) / v_n` of every orbit.
pub fn run_atom_windows(run: &EnsembleRun) -> Result<Vec<AtomWindow>> {
    let v = run.v_n();
    let stop = run.len().saturating_sub(run.q);
    run.orbits()
        .iter()
        .map(|o| {
            let times = detect_clusters(o, run.q, run.len())?
                .iter()
                .filter(|c| c.escape_index >= run.burn_in && c.escape_index < stop)
                .map(|c| c.escape_index as f64 / v)
                .collect();
            Ok(AtomWindow {
                start: run.burn_in as f64 / v,
                end: stop as f64 / v,
                times,
            })
        })
        .collect()
}
