//! Goodness-of-fit tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Significance level used for verdicts unless stated otherwise.
pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Reject,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub null_distribution: String,
    pub statistic: f64,
    pub p_value: f64,
    /// Observations entering the statistic.
    pub n: usize,
    pub ensemble: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: f64,
    pub verdict: Verdict,
}

impl TestReport {
    fn decided(test: &str, null: String, statistic: f64, p_value: f64, n: usize) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestReport {
            test: test.into(),
            null_distribution: null,
            statistic,
            p_value,
            n,
            ensemble: None,
            seed: None,
            alpha: DEFAULT_ALPHA,
            verdict: if p_value > DEFAULT_ALPHA {
                Verdict::Pass
            } else {
                Verdict::Reject
            },
        }
    }

    /// Records the ensemble the data came from.
    pub fn with_run(mut self, ensemble: usize, seed: u64) -> Self {
        self.ensemble = Some(ensemble);
        self.seed = Some(seed);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        if self.verdict != Verdict::Inconclusive {
            self.verdict = if self.p_value > alpha {
                Verdict::Pass
            } else {
                Verdict::Reject
            };
        }
        self
    }
}

/// Empirical distribution function of a finite sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    /// Non-finite values are dropped.
    pub fn new(mut sample: Vec<f64>) -> Self {
        sample.retain(|x| x.is_finite());
        sample.sort_by(f64::total_cmp);
        Ecdf { sorted: sample }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sample(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    /// Pools several samples.
    pub fn merge(parts: &[Ecdf]) -> Ecdf {
        let mut all: Vec<f64> = parts.iter().flat_map(|p| p.sorted.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        Ecdf { sorted: all }
    }
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * c).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=20)
            .map(|k| {
                let k = k as f64;
                let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value of a one-sample KS distance with Stephens' correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

pub const MIN_KS_SAMPLE: usize = 30;

/// Kolmogorov-Smirnov distance between `ecdf` and a continuous `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(ecdf: &Ecdf, cdf: F, null: &str) -> Result<TestReport> {
    let n = ecdf.len();
    if n < MIN_KS_SAMPLE {
        return Err(Error::InsufficientData(format!(
            "KS needs at least {MIN_KS_SAMPLE} observations, got {n}"
        )));
    }
    let s = &ecdf.sorted;
    let nf = n as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && s[j] == s[i] {
            j += 1;
        }
        let f = cdf(s[i]);
        d = d.max(j as f64 / nf - f).max(f - i as f64 / nf);
        i = j;
    }
    Ok(TestReport::decided("ks", null.into(), d, ks_p_value(d, n), n))
}

/// Cluster sizes: `counts[k - 1]` clusters of size `k`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SizeHistogram {
    pub counts: Vec<u64>,
}

impl SizeHistogram {
    pub fn from_sizes<I: IntoIterator<Item = usize>>(sizes: I) -> Self {
        let mut counts: Vec<u64> = Vec::new();
        for k in sizes {
            assert!(k >= 1, "cluster sizes start at 1");
            if counts.len() < k {
                counts.resize(k, 0);
            }
            counts[k - 1] += 1;
        }
        SizeHistogram { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of clusters of size `k`.
    pub fn mass(&self, k: usize) -> f64 {
        let t = self.total();
        if t == 0 || k == 0 {
            return 0.0;
        }
        self.counts.get(k - 1).copied().unwrap_or(0) as f64 / t as f64
    }
}

/// Pearson test of cluster sizes against `theta (1 - theta)^(k-1)`.
///
/// Bins `1, 2, ..., K-1` are kept and sizes `>= K` pooled, with `K` the
/// largest cut for which every expected count is at least 5.
pub fn chi_square_geometric(hist: &SizeHistogram, theta: f64) -> Result<TestReport> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid("theta", format!("must lie in (0, 1], got {theta}")));
    }
    let n = hist.total();
    let null = format!("geometric(theta={theta})");
    let nf = n as f64;
    let inconclusive = |stat: f64| TestReport {
        test: "chi_square".into(),
        null_distribution: null.clone(),
        statistic: stat,
        p_value: 1.0,
        n: n as usize,
        ensemble: None,
        seed: None,
        alpha: DEFAULT_ALPHA,
        verdict: Verdict::Inconclusive,
    };
    if theta >= 1.0 {
        if n < 5 {
            return Ok(inconclusive(0.0));
        }
        let bigger = n - hist.counts.first().copied().unwrap_or(0);
        return Ok(if bigger > 0 {
            TestReport::decided("chi_square", null, f64::INFINITY, 0.0, n as usize)
        } else {
            TestReport::decided("chi_square", null, 0.0, 1.0, n as usize)
        });
    }
    let expected = |k: usize| nf * theta * (1.0 - theta).powi(k as i32 - 1);
    let tail = |k: usize| nf * (1.0 - theta).powi(k as i32 - 1);
    let mut cut = 1;
    while expected(cut) >= 5.0 && tail(cut + 1) >= 5.0 {
        cut += 1;
    }
    if cut < 2 {
        return Ok(inconclusive(f64::NAN));
    }
    let obs = |k: usize| hist.counts.get(k - 1).copied().unwrap_or(0) as f64;
    let mut stat = 0.0;
    for k in 1..cut {
        let e = expected(k);
        stat += (obs(k) - e).powi(2) / e;
    }
    let o_tail: f64 = (cut..=hist.counts.len()).map(obs).sum();
    let e_tail = tail(cut);
    stat += (o_tail - e_tail).powi(2) / e_tail;
    let df = (cut - 1) as f64;
    let p = ChiSquared::new(df).map_err(|e| Error::Numerical(e.to_string()))?.sf(stat);
    Ok(TestReport::decided("chi_square", format!("{null}, df={df}"), stat, p, n as usize))
}

/// Atom times observed in the window `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomWindow {
    pub start: f64,
    pub end: f64,
    pub times: Vec<f64>,
}

/// Kaplan-Meier survival curve of waiting times between atoms.
///
/// Every window contributes the wait from its start to the first atom, the
/// gaps between consecutive atoms, and a censored wait from the last atom
/// to its end.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanMeier {
    /// Distinct event times with the survival just after each.
    pub steps: Vec<(f64, f64)>,
    pub events: usize,
    pub censored: usize,
}

impl KaplanMeier {
    pub fn from_windows(windows: &[AtomWindow]) -> Result<Self> {
        let mut obs: Vec<(f64, bool)> = Vec::new();
        for w in windows {
            if !(w.start <= w.end) {
                return Err(Error::invalid("window", "start must not exceed end"));
            }
            let mut prev = w.start;
            for &t in &w.times {
                if t < prev || t >= w.end {
                    return Err(Error::invalid("times", "atom times must be sorted and inside the window"));
                }
                obs.push((t - prev, true));
                prev = t;
            }
            obs.push((w.end - prev, false));
        }
        // events before censorings at tied durations
        obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut at_risk = obs.len() as f64;
        let mut s = 1.0;
        let mut steps = Vec::new();
        let (mut events, mut censored) = (0, 0);
        let mut i = 0;
        while i < obs.len() {
            let d = obs[i].0;
            let mut dead = 0usize;
            let mut cens = 0usize;
            while i < obs.len() && obs[i].0 == d {
                if obs[i].1 {
                    dead += 1;
                } else {
                    cens += 1;
                }
                i += 1;
            }
            if dead > 0 {
                s *= 1.0 - dead as f64 / at_risk;
                steps.push((d, s));
            }
            at_risk -= (dead + cens) as f64;
            events += dead;
            censored += cens;
        }
        Ok(KaplanMeier {
            steps,
            events,
            censored,
        })
    }

    /// Largest distance to the survival function `sf` over the observed range.
    pub fn sup_distance<F: Fn(f64) -> f64>(&self, sf: F) -> f64 {
        let mut prev = 1.0;
        let mut d: f64 = 0.0;
        for &(t, s) in &self.steps {
            let m = sf(t);
            d = d.max((prev - m).abs()).max((s - m).abs());
            prev = s;
        }
        d
    }
}

pub const MIN_INTERARRIVAL_ATOMS: usize = 100;

/// KS-type test of waiting times against `Exp(theta)`.
///
/// The statistic is the sup distance between the Kaplan-Meier curve and
/// `exp(-theta t)`. The p-value applies the Kolmogorov asymptotic with the
/// number of uncensored waits as sample size; under censoring it is approximate.
pub fn interarrival_test(windows: &[AtomWindow], theta: f64) -> Result<TestReport> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", "intensity must be positive"));
    }
    let atoms: usize = windows.iter().map(|w| w.times.len()).sum();
    if atoms < MIN_INTERARRIVAL_ATOMS {
        return Err(Error::InsufficientData(format!(
            "interarrival test needs at least {MIN_INTERARRIVAL_ATOMS} atoms, got {atoms}"
        )));
    }
    let km = KaplanMeier::from_windows(windows)?;
    let d = km.sup_distance(|t| (-theta * t).exp());
    Ok(TestReport::decided(
        "interarrival_km_ks",
        format!("exponential(rate={theta})"),
        d,
        ks_p_value(d, km.events),
        km.events,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn kolmogorov_branches_agree() {
        for l in [1.1, 1.15, 1.18, 1.2, 1.25] {
            let c = std::f64::consts::PI.powi(2) / (8.0 * l * l);
            let a: f64 = 1.0
                - (2.0 * std::f64::consts::PI).sqrt() / l
                    * (1..=30).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum::<f64>();
            let b: f64 = 2.0
                * (1..=30)
                    .map(|k| (-1f64).powi(k - 1) * (-2.0 * (k as f64).powi(2) * l * l).exp())
                    .sum::<f64>();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            assert_abs_diff_eq!(kolmogorov_sf(l), b, epsilon = 1e-12);
        }
        // classical critical value
        assert_abs_diff_eq!(kolmogorov_sf(1.6276), 0.01, epsilon = 2e-4);
    }

    #[test]
    fn ks_against_own_cdf() {
        let mut rng = seeds::rng(3);
        let e = Ecdf::new((0..10_000).map(|_| rng.random::<f64>()).collect());
        let r = ks_statistic(&e, |x| x.clamp(0.0, 1.0), "uniform").unwrap();
        assert!(r.statistic < 1.63 / 100.0);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn ks_shifted_cdf() {
        let mut rng = seeds::rng(4);
        let e = Ecdf::new((0..1000).map(|_| rng.random::<f64>()).collect());
        let r = ks_statistic(&e, |x| (x - 0.2).clamp(0.0, 1.0), "shifted").unwrap();
        assert!(r.statistic >= 0.2);
        assert_eq!(r.verdict, Verdict::Reject);
    }

    #[test]
    fn ks_invariant_under_monotone_map() {
        let mut rng = seeds::rng(5);
        let xs: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let a = ks_statistic(&Ecdf::new(xs.clone()), |x| x * x, "").unwrap();
        let b = ks_statistic(&Ecdf::new(xs.iter().map(|x| x.exp()).collect()), |y| y.ln().powi(2), "").unwrap();
        assert_abs_diff_eq!(a.statistic, b.statistic, epsilon = 1e-12);
    }

    #[test]
    fn ks_needs_thirty() {
        assert!(ks_statistic(&Ecdf::new(vec![0.5; 29]), |x| x, "").is_err());
    }

    #[test]
    fn merge_matches_pooled_sample() {
        let a = Ecdf::new(vec![0.1, 0.5, 0.9]);
        let b = Ecdf::new(vec![0.2, 0.5]);
        let m = Ecdf::merge(&[a.clone(), b.clone()]);
        for x in [0.0, 0.15, 0.5, 0.7, 1.0] {
            let w = (3.0 * a.eval(x) + 2.0 * b.eval(x)) / 5.0;
            assert_abs_diff_eq!(m.eval(x), w, epsilon = 1e-15);
        }
    }

    #[test]
    fn step_ecdf() {
        let e = Ecdf::new(vec![2.0; 10]);
        assert_eq!(e.eval(1.999), 0.0);
        assert_eq!(e.eval(2.0), 1.0);
    }

    #[test]
    fn chi_square_unit_theta() {
        let h = SizeHistogram::from_sizes(vec![1; 200]);
        let r = chi_square_geometric(&h, 1.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
        let h = SizeHistogram::from_sizes(vec![1, 1, 2, 1, 1, 1]);
        assert_eq!(chi_square_geometric(&h, 1.0).unwrap().verdict, Verdict::Reject);
    }

    fn geometric_sample(theta: f64, n: usize, seed: u64) -> SizeHistogram {
        let mut rng = seeds::rng(seed);
        SizeHistogram::from_sizes((0..n).map(|_| {
            let mut k = 1;
            while rng.random::<f64>() >= theta {
                k += 1;
            }
            k
        }))
    }

    #[test]
    fn chi_square_power() {
        let h = geometric_sample(2.0 / 3.0, 10_000, 8);
        assert_eq!(chi_square_geometric(&h, 2.0 / 3.0).unwrap().verdict, Verdict::Pass);
        assert_eq!(chi_square_geometric(&h, 0.9).unwrap().verdict, Verdict::Reject);
    }

    #[test]
    fn chi_square_small_sample_is_inconclusive() {
        let h = SizeHistogram::from_sizes(vec![1, 2]);
        assert_eq!(chi_square_geometric(&h, 0.5).unwrap().verdict, Verdict::Inconclusive);
    }

    #[test]
    fn chi_square_calibration() {
        // p-values under the null fall below 0.1 about a tenth of the time
        let low = (0..200)
            .filter(|&s| chi_square_geometric(&geometric_sample(0.6, 2000, 100 + s), 0.6).unwrap().p_value < 0.1)
            .count();
        assert!((5..=40).contains(&low), "{low}");
    }

    #[test]
    fn kaplan_meier_without_censoring_is_the_ecdf() {
        let w = AtomWindow {
            start: 0.0,
            end: 10.0,
            times: vec![1.0, 3.0, 6.0],
        };
        let km = KaplanMeier::from_windows(&[w]).unwrap();
        // waits 1, 2, 3 and a censored 4
        assert_eq!(km.events, 3);
        assert_eq!(km.censored, 1);
        assert_abs_diff_eq!(km.steps[0].1, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(km.steps[1].1, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(km.steps[2].1, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn equally_spaced_atoms_fail() {
        let w = AtomWindow {
            start: 0.0,
            end: 300.5,
            times: (1..=300).map(|k| k as f64).collect(),
        };
        let r = interarrival_test(&[w], 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Reject);
    }

    #[test]
    fn poisson_windows_pass() {
        let mut rng = seeds::rng(11);
        let windows: Vec<AtomWindow> = (0..2000)
            .map(|_| {
                let mut t = 0.0;
                let mut times = Vec::new();
                loop {
                    t += -(1.0 - rng.random::<f64>()).ln() / 0.7;
                    if t >= 2.0 {
                        break;
                    }
                    times.push(t);
                }
                AtomWindow {
                    start: 0.0,
                    end: 2.0,
                    times,
                }
            })
            .collect();
        let r = interarrival_test(&windows, 0.7).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.statistic < 0.05);
    }
}
