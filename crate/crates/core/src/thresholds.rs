//! Threshold levels `u_n` with `n mu(X_0 > u_n) = tau`, and exceedance frequencies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{marginal_density, DensityApprox, FixedBeta, IntervalMeasure, LazyPoint, RandomLySystem};
use crate::error::{Error, Result};
use crate::observables::{circle_dist, ObservableSpec};
use crate::seeds;

/// Ulam grid used for marginal densities.
pub const DEFAULT_GRID_CELLS: usize = 4096;

/// A level together with the ball it cuts out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub tau: f64,
    pub n: u64,
    pub u_n: f64,
    pub radius: f64,
    /// `|n mu(B(zeta, radius)) - tau|`.
    pub residual: f64,
}

/// Solves `mu(B(zeta, r)) = tau / n` for `r` by bisection and returns `u_n = g(r)`.
pub fn threshold_from_tau<M: IntervalMeasure + ?Sized>(
    tau: f64,
    n: u64,
    measure: &M,
    obs: &ObservableSpec,
) -> Result<Threshold> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let target = tau / n as f64;
    let total = measure.ball(obs.zeta, 0.5);
    if target > total {
        return Err(Error::invalid(
            "tau",
            format!("tau / n = {target} exceeds the total mass {total}"),
        ));
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if measure.ball(obs.zeta, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let res = |r: f64| (n as f64 * measure.ball(obs.zeta, r) - tau).abs();
    let radius = if res(lo) < res(hi) { lo } else { hi };
    let residual = res(radius);
    // the ball measure itself is only known to a few ulps of the total mass
    if residual > 1e-8 * tau + 8.0 * n as f64 * f64::EPSILON * total {
        return Err(Error::Numerical(format!(
            "ball measure could not be matched to tau: residual {residual}"
        )));
    }
    Ok(Threshold {
        tau,
        n,
        u_n: obs.g(radius),
        radius,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    ClosedForm,
    RootFound,
    MarginalMc,
}

/// Levels `u_n` for a fixed `tau` over a grid of `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub tau: f64,
    pub levels: BTreeMap<u64, f64>,
    pub source: ThresholdSource,
}

impl ThresholdSchedule {
    pub fn root_found<M: IntervalMeasure + ?Sized>(
        tau: f64,
        ns: &[u64],
        measure: &M,
        obs: &ObservableSpec,
    ) -> Result<Self> {
        let mut levels = BTreeMap::new();
        for &n in ns {
            levels.insert(n, threshold_from_tau(tau, n, measure, obs)?.u_n);
        }
        Ok(ThresholdSchedule {
            tau,
            levels,
            source: ThresholdSource::RootFound,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Nominal,
    /// Too few samples, or too few expected hits, for a reliable check.
    Widened,
}

/// Threshold under the marginal measure of a random system.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalThreshold {
    pub threshold: Threshold,
    pub density: DensityApprox,
    /// `n` times the fraction of sampled fibre points in the ball.
    pub mc_tau: f64,
    pub mc_stderr: f64,
    pub mc_samples: usize,
    pub confidence: Confidence,
}

/// The `(1 - tau/n)`-quantile of `phi` under the marginal `int mu_omega dQ`.
///
/// The marginal density is the averaged transfer operator applied to the
/// constant density. `mc_samples` points, each pushed from Lebesgue through
/// an independent random prefix, estimate the ball mass as a cross-check.
pub fn marginal_threshold(
    tau: f64,
    n: u64,
    system: &RandomLySystem,
    obs: &ObservableSpec,
    mc_samples: usize,
    seed: u64,
) -> Result<MarginalThreshold> {
    let density = marginal_density(system, DEFAULT_GRID_CELLS)?;
    let threshold = threshold_from_tau(tau, n, &density, obs)?;
    let betas = system
        .alphabet
        .iter()
        .map(|&b| FixedBeta::new(b))
        .collect::<Result<Vec<_>>>()?;
    let mut hits = 0usize;
    for s in 0..mc_samples {
        let mut rng = seeds::rng(seeds::derive_labelled(seed, "marginal", s as u64));
        let word = system.sample_word(&mut rng, system.burn_in);
        let mut p = LazyPoint::uniform(&mut rng);
        for &l in &word {
            p.step(betas[l], &mut rng);
        }
        if circle_dist(p.value(), obs.zeta) < threshold.radius {
            hits += 1;
        }
    }
    let m = mc_samples.max(1) as f64;
    let p_hat = hits as f64 / m;
    let expected = m * tau / n as f64;
    let confidence = if mc_samples < 10_000 || expected < 10.0 {
        Confidence::Widened
    } else {
        Confidence::Nominal
    };
    Ok(MarginalThreshold {
        threshold,
        density,
        mc_tau: n as f64 * p_hat,
        mc_stderr: n as f64 * (p_hat * (1.0 - p_hat) / m).sqrt(),
        mc_samples,
        confidence,
    })
}

/// Exponent `gamma` of the burn-in `floor(n^gamma)`; needs `gamma xi > 1` and `gamma < 1`.
pub fn burn_in_exponent(xi: Option<f64>) -> f64 {
    match xi {
        None => 0.6,
        Some(xi) => {
            let g = (1.1 / xi).max(0.6);
            if g < 1.0 {
                g
            } else {
                0.5 * (1.0 + 1.0 / xi)
            }
        }
    }
}

/// `floor(n^gamma)`.
pub fn burn_in_length(n: u64, xi: Option<f64>) -> usize {
    (n as f64).powf(burn_in_exponent(xi)).floor() as usize
}

/// Exceedance frequencies of an ensemble over the indices `0..H n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySummary {
    pub n: u64,
    pub h: u64,
    pub ensemble: usize,
    /// `sum_{i < n} Fbar_i`.
    pub f_star_1n: f64,
    /// `sum_{i < H n} Fbar_i`.
    pub f_star_hn: f64,
    pub fbar_max: f64,
    /// `n / F*_{1,n}`.
    pub v_n: f64,
    /// Standard error of `F*_{1,n}` from orbit-level variability.
    pub f_star_1n_stderr: f64,
}

/// Minimum ensemble accepted by [`frequency_summary`].
pub const MIN_FREQUENCY_ENSEMBLE: usize = 1000;

/// Summarises per-index exceedance counts `counts[i] = #{orbits with X_i > u_n}`.
///
/// `per_orbit_first_n` holds, for each orbit, its exceedance count among the
/// first `n` indices; it feeds the standard error of `F*_{1,n}`.
pub fn frequency_summary(
    counts: &[u64],
    per_orbit_first_n: &[u64],
    n: u64,
    h: u64,
) -> Result<FrequencySummary> {
    let ensemble = per_orbit_first_n.len();
    if ensemble < MIN_FREQUENCY_ENSEMBLE {
        return Err(Error::InsufficientData(format!(
            "frequency estimates need at least {MIN_FREQUENCY_ENSEMBLE} orbits, got {ensemble}"
        )));
    }
    if h == 0 || counts.len() as u64 != n * h {
        return Err(Error::invalid(
            "counts",
            format!("expected H n = {} entries, got {}", n * h, counts.len()),
        ));
    }
    let e = ensemble as f64;
    let first: u64 = counts[..n as usize].iter().sum();
    let all: u64 = counts.iter().sum();
    if first == 0 {
        return Err(Error::NoExceedances("v_n = n / F*_{1,n} is undefined"));
    }
    let max = *counts.iter().max().expect("non-empty");
    let mean = first as f64 / e;
    let var = per_orbit_first_n
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / (e - 1.0);
    Ok(FrequencySummary {
        n,
        h,
        ensemble,
        f_star_1n: mean,
        f_star_hn: all as f64 / e,
        fbar_max: max as f64 / e,
        v_n: n as f64 / mean,
        f_star_1n_stderr: (var / e).sqrt(),
    })
}
