//! Monte Carlo versions of the dependence conditions, joint Laplace
//! transforms and correlation decay.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{EnsembleRun, ReferenceMeasure, Stepper, SystemSpec};
use super::Estimate;
use crate::error::{Error, Result};
use crate::pointprocess::{detect_clusters, evaluate_mrepp, BlockPartition, Exceedance, MarkType};
use crate::seeds;
use crate::theory::{compound_poisson_laplace, CompoundPoissonModel};

/// Blocks built from the run's own exceedance frequencies, starting after burn-in.
pub fn run_blocks(run: &EnsembleRun, k_n: usize, t_n_star: usize) -> Result<BlockPartition> {
    BlockPartition::from_counts(&run.counts(), run.ensemble(), k_n, t_n_star, run.burn_in)
}

fn check_blocks(run: &EnsembleRun, blocks: &BlockPartition) -> Result<()> {
    if blocks.end != run.len() || blocks.start != run.burn_in {
        return Err(Error::invalid("blocks", "partition was not built for this run"));
    }
    Ok(())
}

fn range_of(ex: &[Exceedance], a: usize, b: usize) -> std::ops::Range<usize> {
    ex.partition_point(|e| e.index < a)..ex.partition_point(|e| e.index < b)
}

fn is_escape(ex: &[Exceedance], k: usize, q: usize, len: usize) -> bool {
    let i = ex[k].index;
    if i + q >= len {
        return false;
    }
    match ex.get(k + 1) {
        Some(next) => next.index - i > q,
        None => true,
    }
}

/// Escapes followed by a later exceedance in the same range `[a, b)`.
fn escape_pairs(ex: &[Exceedance], q: usize, len: usize, a: usize, b: usize) -> u64 {
    let r = range_of(ex, a, b);
    let count = r.len();
    r.clone()
        .enumerate()
        .filter(|&(_, k)| is_escape(ex, k, q, len))
        .map(|(pos, _)| (count - pos - 1) as u64)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DprimeDiagnostic {
    pub n: u64,
    pub q: usize,
    /// Sum over the `k_n` blocks.
    pub blocks: Estimate,
    /// The term over `[L_{k_n}, H n)`.
    pub tail: Estimate,
    pub total: Estimate,
}

/// Estimates `sum_i sum_{j in J_i} sum_{r > j, r in J_i} P(Q^(0)_{q,n,j} and X_r > u_n)`
/// and the matching sum over the tail `[L_{k_n}, H n)`.
pub fn dprime_diagnostic(run: &EnsembleRun, blocks: &BlockPartition) -> Result<DprimeDiagnostic> {
    check_blocks(run, blocks)?;
    let (q, len) = (run.q, run.len());
    let per: Vec<(f64, f64)> = run
        .orbits()
        .par_iter()
        .map(|o| {
            let b: u64 = (1..=blocks.k_n)
                .map(|i| {
                    let r = blocks.block(i);
                    escape_pairs(o, q, len, r.start, r.end)
                })
                .sum();
            let t = escape_pairs(o, q, len, blocks.tail_start, blocks.end);
            (b as f64, t as f64)
        })
        .collect();
    let b: Vec<f64> = per.iter().map(|p| p.0).collect();
    let t: Vec<f64> = per.iter().map(|p| p.1).collect();
    let s: Vec<f64> = per.iter().map(|p| p.0 + p.1).collect();
    Ok(DprimeDiagnostic {
        n: run.n,
        q,
        blocks: Estimate::mean_of(&b),
        tail: Estimate::mean_of(&t),
        total: Estimate::mean_of(&s),
    })
}

/// Exceedance index, number of later exceedances in its cluster, and the
/// mark of the cluster from that exceedance on.
fn suffix_marks(run: &EnsembleRun, ex: &[Exceedance]) -> Vec<(usize, usize, f64)> {
    let scale = if run.mark_type == MarkType::Repp { 1.0 } else { run.a_n };
    let mut out = Vec::with_capacity(ex.len());
    for c in detect_clusters(ex, run.q, run.len()).expect("run exceedances are valid") {
        let mut acc = 0.0f64;
        let mut tail = Vec::with_capacity(c.indices.len());
        for (k, (&i, &x)) in c.indices.iter().zip(&c.excesses).enumerate().rev() {
            acc = match run.mark_type {
                MarkType::Aot => acc + x,
                MarkType::Pot => acc.max(x),
                MarkType::Repp => acc + 1.0,
            };
            tail.push((i, c.kappa - k, scale * acc));
        }
        tail.reverse();
        out.extend(tail);
    }
    out
}

/// `int_0^inf e^{-y x} P(m > x / a_n) dx` for a single mark `a_n m`.
#[inline]
fn laplace_weight(y: f64, scaled_mark: f64) -> f64 {
    -(-y * scaled_mark).exp_m1() / y
}

/// `int e^{-y x} delta_{n,s,l}(x / a_n) dx` for one orbit, with the index
/// ranges of the three sums taken as printed.
fn delta_integral(marks: &[(usize, usize, f64)], q: usize, s: usize, l: usize, y: f64) -> f64 {
    if q == 0 || l == 0 {
        return 0.0;
    }
    let end = s + l;
    let big = l / q;
    let lo = marks.partition_point(|m| m.0 < s);
    let hi = marks.partition_point(|m| m.0 < end);
    let mut total = 0.0;
    for &(j, kappa, m) in &marks[lo..hi] {
        let w = laplace_weight(y, m);
        if kappa >= 1 && kappa <= big && j + kappa * q >= end {
            total += w;
        }
        if kappa > big {
            total += w;
        }
        if j + q >= end {
            total += w;
        }
    }
    // the B terms reach back q indices, which may precede s
    let lo_b = marks.partition_point(|m| m.0 + q < end);
    for &(_, _, m) in &marks[lo_b.min(lo)..lo] {
        total += laplace_weight(y, m);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlcDiagnostic {
    pub n: u64,
    pub q: usize,
    pub y: Vec<f64>,
    /// `sum_i int e^{-yx} delta_{n, L_{i-1}, l_i}(x/a_n) dx` per `y`.
    pub blocks: Vec<Estimate>,
    /// `int e^{-x} delta_{n, L_{k_n}, H n - L_{k_n}}(x/a_n) dx`.
    pub tail: Estimate,
    /// `sum_i int e^{-yx} delta_{n, L_{i-1}, l_i - t_i}(x/a_n) dx` per `y`.
    pub gaps: Vec<Estimate>,
}

/// Monte Carlo estimates of the three integrals of the unlikely-long-clusters condition.
pub fn ulc_diagnostic(run: &EnsembleRun, blocks: &BlockPartition, y_grid: &[f64]) -> Result<UlcDiagnostic> {
    check_blocks(run, blocks)?;
    if y_grid.iter().any(|y| !(*y > 0.0)) {
        return Err(Error::invalid("y", "Laplace arguments must be positive"));
    }
    let q = run.q;
    let ny = y_grid.len();
    let per: Vec<Vec<f64>> = run
        .orbits()
        .par_iter()
        .map(|o| {
            let mut row = vec![0.0; 2 * ny + 1];
            if q == 0 || o.is_empty() {
                return row;
            }
            let marks = suffix_marks(run, o);
            for (yi, &y) in y_grid.iter().enumerate() {
                for i in 1..=blocks.k_n {
                    let s = blocks.cumulative[i - 1];
                    let l = blocks.ell[i - 1];
                    row[yi] += delta_integral(&marks, q, s, l, y);
                    row[ny + yi] += delta_integral(&marks, q, s, l - blocks.t[i - 1], y);
                }
            }
            row[2 * ny] = delta_integral(&marks, q, blocks.tail_start, blocks.end - blocks.tail_start, 1.0);
            row
        })
        .collect();
    let col = |c: usize| Estimate::mean_of(&per.iter().map(|r| r[c]).collect::<Vec<_>>());
    Ok(UlcDiagnostic {
        n: run.n,
        q,
        y: y_grid.to_vec(),
        blocks: (0..ny).map(col).collect(),
        tail: col(2 * ny),
        gaps: (ny..2 * ny).map(col).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceCell {
    pub y: f64,
    pub interval: (f64, f64),
    pub empirical: f64,
    /// Standard error of `empirical`, including the error of the estimated `v_n`.
    pub stderr: f64,
    /// Standard error with `v_n` treated as exact.
    pub stderr_fixed_vn: f64,
    pub theory: f64,
    /// `|empirical - theory| / stderr`; zero when both coincide.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceTable {
    pub n: u64,
    pub ensemble: usize,
    pub cells: Vec<LaplaceCell>,
}

impl LaplaceTable {
    /// Cells with `|empirical - theory| <= k stderr`.
    pub fn within(&self, k: f64) -> usize {
        self.cells.iter().filter(|c| c.z <= k).count()
    }
}

pub const MIN_LAPLACE_ENSEMBLE: usize = 1000;

/// Relative step of the finite difference in `v_n`.
const VN_STEP: f64 = 0.02;

fn check_window(run: &EnsembleRun, intervals: &[(f64, f64)]) -> Result<()> {
    let (w0, w1) = run.window();
    for &(a, b) in intervals {
        if a < w0 || b > w1 {
            return Err(Error::invalid(
                "intervals",
                format!("[{a}, {b}) leaves the observation window [{w0}, {w1})"),
            ));
        }
    }
    Ok(())
}

/// Per-orbit normalised masses `a_n A_n(I)` of each interval, with time
/// rescaled by `v_n * factor` instead of `v_n`.
fn interval_masses(run: &EnsembleRun, intervals: &[(f64, f64)], factor: f64) -> Result<Vec<Vec<f64>>> {
    let scale = if run.mark_type == MarkType::Repp { 1.0 } else { run.a_n };
    let scaled: Vec<(f64, f64)> = intervals.iter().map(|&(a, b)| (a * factor, b * factor)).collect();
    (0..run.ensemble())
        .into_par_iter()
        .map(|k| Ok(evaluate_mrepp(&run.measure(k), &scaled)?.iter().map(|m| scale * m).collect()))
        .collect()
}

/// Ensemble mean of `exp(-y a_n A_n(I))` for each `y` in `y_grid` and each
/// interval, against `compound_poisson_laplace`.
///
/// `v_n` is itself estimated from the ensemble. The standard error combines
/// the per-orbit spread with the induced error of `v_n` through the
/// influence function `f_k - psi - (d psi / d v) v (c_k - F*) / F*`, where
/// `c_k` counts the exceedances of orbit `k` before `n` and the derivative is
/// a backward difference of the empirical transform.
pub fn laplace_convergence(
    run: &EnsembleRun,
    model: &CompoundPoissonModel,
    intervals: &[(f64, f64)],
    y_grid: &[f64],
) -> Result<LaplaceTable> {
    if run.ensemble() < MIN_LAPLACE_ENSEMBLE {
        return Err(Error::InsufficientData(format!(
            "Laplace comparison needs at least {MIN_LAPLACE_ENSEMBLE} orbits"
        )));
    }
    check_window(run, intervals)?;
    let masses = interval_masses(run, intervals, 1.0)?;
    // atoms at j / (v (1 - h)) fall in I iff j / v falls in (1 - h) I
    let shifted = interval_masses(run, intervals, 1.0 - VN_STEP)?;
    let f_star = run.frequencies.f_star_1n;
    let v = run.v_n();
    let rel_count: Vec<f64> = run
        .orbits()
        .iter()
        .map(|o| (o.partition_point(|e| (e.index as u64) < run.n) as f64 - f_star) / f_star)
        .collect();
    let mut cells = Vec::with_capacity(y_grid.len() * intervals.len());
    for &y in y_grid {
        for (li, &iv) in intervals.iter().enumerate() {
            let vals: Vec<f64> = masses.iter().map(|m| (-y * m[li]).exp()).collect();
            let e = Estimate::mean_of(&vals);
            let lower = Estimate::mean_of(&shifted.iter().map(|m| (-y * m[li]).exp()).collect::<Vec<_>>());
            let dpsi_dv = (e.value - lower.value) / (VN_STEP * v);
            let influence: Vec<f64> = vals
                .iter()
                .zip(&rel_count)
                .map(|(f, r)| f - dpsi_dv * v * r)
                .collect();
            let stderr = Estimate::mean_of(&influence).stderr;
            let theory = compound_poisson_laplace(model, &[iv], &[y])?;
            let diff = (e.value - theory).abs();
            let z = if diff == 0.0 { 0.0 } else { diff / stderr };
            cells.push(LaplaceCell {
                y,
                interval: iv,
                empirical: e.value,
                stderr,
                stderr_fixed_vn: e.stderr,
                theory,
                z,
            });
        }
    }
    Ok(LaplaceTable {
        n: run.n,
        ensemble: run.ensemble(),
        cells,
    })
}

/// Ensemble mean of `exp(-sum_l y_l a_n A_n(I_l))`.
pub fn joint_laplace(run: &EnsembleRun, intervals: &[(f64, f64)], y: &[f64]) -> Result<Estimate> {
    if intervals.len() != y.len() {
        return Err(Error::invalid("y", "one Laplace argument per interval"));
    }
    check_window(run, intervals)?;
    let masses = interval_masses(run, intervals, 1.0)?;
    let vals: Vec<f64> = masses
        .iter()
        .map(|m| (-m.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()).exp())
        .collect();
    Ok(Estimate::mean_of(&vals))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub i0: usize,
    pub t: Vec<usize>,
    /// `Cov(1_A(x_{i0}), 1_A(x_{i0 + t}))` over the ensemble.
    pub cov: Vec<Estimate>,
    /// `exp` of the least-squares slope of `log |cov|` over lags `t >= 1`
    /// whose covariance is at least three standard errors from zero.
    pub ratio: Option<f64>,
}

/// Lag covariances of indicator paths, `paths[k][i] = 1_A(x_i)` for realisation `k`.
pub fn covariance_curve(paths: &[Vec<bool>], i0: usize, t_grid: &[usize]) -> Result<DecayCurve> {
    if paths.len() < 2 {
        return Err(Error::InsufficientData("covariances need at least two paths".into()));
    }
    let need = i0 + t_grid.iter().max().copied().unwrap_or(0);
    if paths.iter().any(|p| p.len() <= need) {
        return Err(Error::invalid("paths", format!("every path needs index {need}")));
    }
    let e = paths.len() as f64;
    let mut cov = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let a: Vec<f64> = paths.iter().map(|p| p[i0] as u8 as f64).collect();
        let b: Vec<f64> = paths.iter().map(|p| p[i0 + t] as u8 as f64).collect();
        let ma = super::pairwise_sum(&a) / e;
        let mb = super::pairwise_sum(&b) / e;
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).collect();
        let est = Estimate::mean_of(&prod);
        cov.push(Estimate {
            value: est.value * e / (e - 1.0),
            stderr: est.stderr,
        });
    }
    let pts: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(&cov)
        .filter(|(t, c)| **t >= 1 && c.value.abs() > 3.0 * c.stderr)
        .map(|(t, c)| (*t as f64, c.value.abs().ln()))
        .collect();
    let ratio = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some((sxy / sxx).exp())
    } else {
        None
    };
    Ok(DecayCurve {
        i0,
        t: t_grid.to_vec(),
        cov,
        ratio,
    })
}

pub const MIN_DECAY_ENSEMBLE: usize = 10_000;

/// Covariances of `1_A` along orbits of `system`, with `A = [a, b)`.
pub fn correlation_decay_diagnostic(
    system: &SystemSpec,
    reference: ReferenceMeasure,
    set: (f64, f64),
    i0: usize,
    t_grid: &[usize],
    ensemble: usize,
    seed: u64,
) -> Result<DecayCurve> {
    if ensemble < MIN_DECAY_ENSEMBLE {
        return Err(Error::InsufficientData(format!(
            "correlation decay needs at least {MIN_DECAY_ENSEMBLE} orbits"
        )));
    }
    let (a, b) = set;
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::invalid("set", "A must be an interval [a, b) inside [0, 1]"));
    }
    let len = i0 + t_grid.iter().max().copied().unwrap_or(0) + 1;
    let stepper = Stepper::new(system, reference, len)?;
    let paths: Vec<Vec<bool>> = (0..ensemble)
        .into_par_iter()
        .map(|k| {
            let mut p = Vec::with_capacity(len);
            stepper.visit(seeds::derive(seed, k as u64), len, |_, x| p.push(a <= x && x < b));
            p
        })
        .collect();
    covariance_curve(&paths, i0, t_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn escape_pairs_count() {
        let ex: Vec<Exceedance> = [2, 3, 10, 20, 21]
            .iter()
            .map(|&index| Exceedance { index, excess: 1.0 })
            .collect();
        // q = 1: escapes at 3, 10, 21; later exceedances in [0, 30): 3, 2, 0
        assert_eq!(escape_pairs(&ex, 1, 30, 0, 30), 5);
        // q = 0: every exceedance escapes; 4 + 3 + 2 + 1
        assert_eq!(escape_pairs(&ex, 0, 30, 0, 30), 10);
        assert_eq!(escape_pairs(&ex, 1, 30, 10, 30), 2);
        assert_eq!(escape_pairs(&[], 1, 30, 0, 30), 0);
    }

    #[test]
    fn delta_vanishes_for_q_zero() {
        let marks = vec![(5, 0, 1.0), (6, 0, 2.0)];
        assert_eq!(delta_integral(&marks, 0, 0, 10, 1.0), 0.0);
    }

    #[test]
    fn delta_boundary_terms_only_without_long_clusters() {
        // singleton clusters away from the block end contribute nothing
        let marks = vec![(2, 0, 1.0), (5, 0, 1.0)];
        assert_eq!(delta_integral(&marks, 2, 0, 10, 1.0), 0.0);
        // a singleton among the last q indices is a B term
        let marks = vec![(9, 0, 1.0)];
        assert_abs_diff_eq!(delta_integral(&marks, 2, 0, 10, 1.0), 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn delta_long_cluster_terms() {
        // block [0, 4), q = 1, floor(l/q) = 4; exceedance at 2 with kappa 2 counts once in
        // the first sum (2 >= 4 - 2) and index 3 (kappa 1) counts in the first and third
        let marks = vec![(2, 2, 1.0), (3, 1, 1.0), (4, 0, 1.0)];
        let w = 1.0 - (-1.0f64).exp();
        assert_abs_diff_eq!(delta_integral(&marks, 1, 0, 4, 1.0), 3.0 * w, epsilon = 1e-15);
        // kappa above floor(l/q) lands in the second sum
        let marks = vec![(0, 5, 2.0)];
        let w2 = (1.0 - (-2.0f64).exp()) / 1.0;
        assert_abs_diff_eq!(delta_integral(&marks, 1, 0, 3, 1.0), w2, epsilon = 1e-15);
    }

    #[test]
    fn iid_covariances_vanish() {
        let mut rng = seeds::rng(21);
        let paths: Vec<Vec<bool>> = (0..20_000)
            .map(|_| (0..8).map(|_| rng.random::<f64>() < 0.3).collect())
            .collect();
        let c = covariance_curve(&paths, 2, &[0, 1, 2, 3, 5]).unwrap();
        assert_abs_diff_eq!(c.cov[0].value, 0.21, epsilon = 0.01);
        for e in &c.cov[1..] {
            assert!(e.value.abs() < 3.5 * e.stderr, "{e:?}");
        }
    }
}
