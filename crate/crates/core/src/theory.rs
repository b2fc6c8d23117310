//! Limiting objects: extremal index, multiplicity distributions and compound
//! Poisson processes.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};

use crate::dynamics::ParryDensity;
use crate::error::{Error, Result};
use crate::observables::{GType, ObservableSpec};
use crate::pointprocess::{Atom, MarkType, MarkedMeasure};
use crate::seeds;

/// Position of the target relative to the dynamics of the unperturbed map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZetaKind {
    /// Periodic of prime period `p`, orbit never hits `0 ~ 1`.
    InteriorPeriodic { p: u32 },
    /// `zeta = 0 ~ 1`, with `p` the period seen from the left endpoint.
    Boundary { p: u32 },
    Aperiodic,
}

/// Extremal index; the boundary case carries two readings of the formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ExtremalIndex {
    Single {
        theta: f64,
    },
    Boundary {
        /// `h(0)(1 - beta^-1) + h(1)(1 - beta^-p)`.
        verbatim: f64,
        /// The same sum divided by `h(0) + h(1)`.
        normalized: f64,
    },
}

impl ExtremalIndex {
    pub fn candidates(&self) -> Vec<(&'static str, f64)> {
        match *self {
            ExtremalIndex::Single { theta } => vec![("theta", theta)],
            ExtremalIndex::Boundary {
                verbatim,
                normalized,
            } => vec![("verbatim", verbatim), ("normalized", normalized)],
        }
    }
}

/// `theta` for the beta map. For a boundary target, `densities = (h(0), h(1))`
/// defaults to the one-sided limits of the Parry density.
pub fn extremal_index(beta: f64, kind: ZetaKind, densities: Option<(f64, f64)>) -> Result<ExtremalIndex> {
    if !beta.is_finite() || beta <= 1.0 {
        return Err(Error::invalid("beta", format!("expected a value > 1, got {beta}")));
    }
    match kind {
        ZetaKind::Aperiodic => Ok(ExtremalIndex::Single { theta: 1.0 }),
        ZetaKind::InteriorPeriodic { p } => {
            if p < 1 {
                return Err(Error::invalid("p", "period must be at least 1"));
            }
            Ok(ExtremalIndex::Single {
                theta: 1.0 - beta.powi(-(p as i32)),
            })
        }
        ZetaKind::Boundary { p } => {
            if p < 1 {
                return Err(Error::invalid("p", "period must be at least 1"));
            }
            let (h0, h1) = match densities {
                Some(d) => d,
                None => ParryDensity::new(beta)?.boundary_values(),
            };
            let verbatim = h0 * (1.0 - 1.0 / beta) + h1 * (1.0 - beta.powi(-(p as i32)));
            Ok(ExtremalIndex::Boundary {
                verbatim,
                normalized: verbatim / (h0 + h1),
            })
        }
    }
}

/// Limiting POT multiplicity distribution for the canonical `g` of each type.
pub fn pot_multiplicity(g: &GType, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    match *g {
        GType::NegLog => 1.0 - (-x).exp(),
        GType::Power { alpha } => 1.0 - (1.0 + x).powf(-alpha),
        GType::Bounded { alpha, .. } => {
            if x >= 1.0 {
                1.0
            } else {
                1.0 - (1.0 - x).powf(alpha)
            }
        }
    }
}

/// The three rows of the AOT multiplicity table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum AotForm {
    NegLog,
    Power { alpha: f64 },
    Bounded { alpha: f64 },
}

impl From<&GType> for AotForm {
    fn from(g: &GType) -> Self {
        match *g {
            GType::NegLog => AotForm::NegLog,
            GType::Power { alpha } => AotForm::Power { alpha },
            GType::Bounded { alpha, .. } => AotForm::Bounded { alpha },
        }
    }
}

const KAPPA_SCAN_LIMIT: usize = 1_000_000;

/// Cluster size index `kappa(x)` of the table row, or `None` past every bracket.
pub fn aot_kappa(form: AotForm, m: f64, x: f64) -> Option<usize> {
    let x = x.max(0.0);
    match form {
        AotForm::NegLog => Some((((1.0 + 8.0 * x / m.ln()).sqrt() - 1.0) / 2.0).floor() as usize),
        AotForm::Power { alpha } => {
            let a = m.powf(-1.0 / alpha);
            (0..KAPPA_SCAN_LIMIT).find(|&k| {
                let s = k as f64 + 1.0 + x;
                let lo = (m.powf(k as f64 / alpha) - a) / (1.0 - a);
                let hi = (m.powf((k as f64 + 1.0) / alpha) - 1.0) / (1.0 - a);
                lo <= s && s < hi
            })
        }
        AotForm::Bounded { alpha } => {
            let b = m.powf(1.0 / alpha);
            (0..KAPPA_SCAN_LIMIT).find(|&k| {
                let s = k as f64 + 1.0 - x;
                let lo = (1.0 - m.powf(-(k as f64 + 1.0) / alpha)) / (b - 1.0);
                let hi = (b - m.powf(-(k as f64) / alpha)) / (b - 1.0);
                lo < s && s <= hi
            })
        }
    }
}

/// Limiting AOT multiplicity distribution, row by row of the table; `M = beta^p`.
pub fn aot_multiplicity_table(form: AotForm, m: f64, x: f64) -> Result<f64> {
    if !m.is_finite() || m <= 1.0 {
        return Err(Error::invalid("M", format!("expected M > 1, got {m}")));
    }
    if x.is_nan() {
        return Err(Error::invalid("x", "NaN"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let Some(k) = aot_kappa(form, m, x) else {
        return Ok(1.0);
    };
    let kf = k as f64;
    let tail = match form {
        AotForm::NegLog => m.sqrt().powf(-kf) * (-x / (kf + 1.0)).exp(),
        AotForm::Power { alpha } => {
            let ratio = (1.0 - m.powf(-1.0 / alpha)) / (1.0 - m.powf(-(kf + 1.0) / alpha));
            ratio.powf(-alpha) * (kf + 1.0 + x).powf(-alpha)
        }
        AotForm::Bounded { alpha } => {
            let ratio = (1.0 - m.powf(1.0 / alpha)) / (1.0 - m.powf((kf + 1.0) / alpha));
            ratio.powf(alpha) * (kf + 1.0 - x).powf(alpha)
        }
    };
    Ok((1.0 - tail).clamp(0.0, 1.0))
}

/// Summed excesses of a cluster whose deepest point sits at distance `y`:
/// `g_{kappa,u}(y) = sum_{i <= kappa} (g(M^i y) - u)`.
pub fn g_kappa_u(obs: &ObservableSpec, m: f64, kappa: usize, u: f64, y: f64) -> f64 {
    let mut s = 0.0;
    let mut z = y;
    for _ in 0..=kappa {
        s += obs.g(z) - u;
        z *= m;
    }
    s
}

/// Pre-limit AOT multiplicity at level `u`.
///
/// Finds the `kappa` whose bracket contains `X = x / a_n`, solves
/// `g_{kappa,u}(y) = X` on `(r / M^(kappa+1), r / M^kappa]` and returns
/// `1 - y / r`, where `r = g^-1(u)`.
pub fn aot_multiplicity_general(obs: &ObservableSpec, m: f64, u: f64, x: f64) -> Result<f64> {
    if !m.is_finite() || m <= 1.0 {
        return Err(Error::invalid("M", format!("expected M > 1, got {m}")));
    }
    if x.is_nan() {
        return Err(Error::invalid("x", "NaN"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let r = obs.g_inverse(u)?;
    let a_n = obs.normalizer(u)?;
    let target = x / a_n;
    let mut kappa = None;
    let mut scale = 1.0;
    for k in 0..KAPPA_SCAN_LIMIT {
        let hi_y = r / scale;
        let lo_y = hi_y / m;
        if lo_y == 0.0 {
            break;
        }
        let lo = g_kappa_u(obs, m, k, u, hi_y);
        let hi = g_kappa_u(obs, m, k, u, lo_y);
        if lo <= target && target < hi {
            kappa = Some((k, lo_y, hi_y));
            break;
        }
        if target < lo {
            return Err(Error::Numerical(format!("brackets skipped x = {x} at kappa = {k}")));
        }
        scale *= m;
    }
    let Some((k, mut lo_y, mut hi_y)) = kappa else {
        return Err(Error::Numerical(format!("no cluster-size bracket contains x = {x}")));
    };
    // g_{k,u} decreases in y on the bracket.
    for _ in 0..200 {
        let mid = 0.5 * (lo_y + hi_y);
        if mid <= lo_y || mid >= hi_y {
            break;
        }
        if g_kappa_u(obs, m, k, u, mid) > target {
            lo_y = mid;
        } else {
            hi_y = mid;
        }
    }
    Ok((1.0 - 0.5 * (lo_y + hi_y) / r).clamp(0.0, 1.0))
}

/// `P(cluster size = k) = theta (1 - theta)^(k-1)`.
pub fn repp_multiplicity(theta: f64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    theta * (1.0 - theta).powi((k - 1) as i32)
}

/// Distribution of the cluster marks.
#[derive(Debug, Clone, PartialEq)]
pub enum Multiplicity {
    /// `delta_1`.
    UnitMass,
    /// Cluster sizes `theta (1 - theta)^(k-1)`.
    Geometric { theta: f64 },
    /// Peak marks for the canonical `g` of each type.
    Pot(GType),
    /// Summed marks, table form, with `M = beta^p`.
    AotTable { form: AotForm, m: f64 },
    /// Sorted finite sample.
    Empirical(Arc<Vec<f64>>),
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    quadrature::double_exponential::integrate(f, a, b, 1e-12).integral
}

impl Multiplicity {
    pub fn empirical(mut sample: Vec<f64>) -> Result<Self> {
        sample.retain(|x| x.is_finite());
        if sample.is_empty() {
            return Err(Error::InsufficientData("empty multiplicity sample".into()));
        }
        sample.sort_by(f64::total_cmp);
        Ok(Multiplicity::Empirical(Arc::new(sample)))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Multiplicity::UnitMass => {
                if x >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Multiplicity::Geometric { theta } => {
                if x < 1.0 {
                    0.0
                } else {
                    1.0 - (1.0 - theta).powf(x.floor())
                }
            }
            Multiplicity::Pot(g) => pot_multiplicity(g, x),
            Multiplicity::AotTable { form, m } => aot_multiplicity_table(*form, *m, x).unwrap_or(f64::NAN),
            Multiplicity::Empirical(s) => s.partition_point(|v| *v <= x) as f64 / s.len() as f64,
        }
    }

    /// Points where the distribution function has a kink or jump, within `[0, x_max]`.
    fn breakpoints(&self, x_max: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        if let Multiplicity::AotTable { form, m } = *self {
            let mut k = 0usize;
            loop {
                // lower end of bracket k + 1, in x
                let b = match form {
                    AotForm::NegLog => m.ln() * (k as f64 + 1.0) * (k as f64 + 2.0) / 2.0,
                    AotForm::Power { alpha } => {
                        let a = m.powf(-1.0 / alpha);
                        (m.powf((k as f64 + 1.0) / alpha) - 1.0) / (1.0 - a) - (k as f64 + 1.0)
                    }
                    AotForm::Bounded { alpha } => {
                        let b = m.powf(1.0 / alpha);
                        k as f64 + 1.0 - (1.0 - m.powf(-(k as f64 + 1.0) / alpha)) / (b - 1.0)
                    }
                };
                if !(b < x_max) || k > 10_000 {
                    break;
                }
                out.push(b);
                k += 1;
            }
        }
        if let Multiplicity::Pot(GType::Bounded { .. }) = self {
            out.push(1.0f64.min(x_max));
        }
        let mut p = 1.0;
        while p < x_max {
            out.push(p);
            p *= 2.0;
        }
        out.push(x_max);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Laplace transform `phi(y) = E exp(-y X)`.
    pub fn laplace(&self, y: f64) -> f64 {
        if y == 0.0 {
            return 1.0;
        }
        match self {
            Multiplicity::UnitMass => (-y).exp(),
            Multiplicity::Geometric { theta } => {
                let e = (-y).exp();
                theta * e / (1.0 - (1.0 - theta) * e)
            }
            Multiplicity::Pot(GType::NegLog) => 1.0 / (1.0 + y),
            Multiplicity::Empirical(s) => s.iter().map(|x| (-y * x).exp()).sum::<f64>() / s.len() as f64,
            _ => {
                // 1 - y int_0^inf e^{-yx} (1 - pi(x)) dx
                let mut x_max = 1.0;
                while 1.0 - self.cdf(x_max) >= 1e-10 && x_max < 1e300 {
                    x_max *= 2.0;
                }
                let x_max = x_max.min(60.0 / y);
                let f = |x: f64| (-y * x).exp() * (1.0 - self.cdf(x));
                let pts = self.breakpoints(x_max);
                let integral: f64 = pts.windows(2).map(|w| integrate(f, w[0], w[1])).sum();
                1.0 - y * integral
            }
        }
    }

    /// One mark drawn from the distribution.
    ///
    /// Table forms are sampled from their generative description: the
    /// deepest point of a cluster sits at a uniform fraction `V` of the ball
    /// radius and the cluster visits `V, M V, M^2 V, ...` while inside the ball.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Multiplicity::UnitMass => 1.0,
            Multiplicity::Geometric { theta } => {
                if *theta >= 1.0 {
                    1.0
                } else {
                    1.0 + Geometric::new(*theta).expect("theta in (0, 1]").sample(rng) as f64
                }
            }
            Multiplicity::Pot(g) => {
                let u: f64 = 1.0 - rng.random::<f64>();
                match *g {
                    GType::NegLog => -u.ln(),
                    GType::Power { alpha } => u.powf(-1.0 / alpha) - 1.0,
                    GType::Bounded { alpha, .. } => 1.0 - u.powf(1.0 / alpha),
                }
            }
            Multiplicity::AotTable { form, m } => {
                let v: f64 = 1.0 - rng.random::<f64>();
                let kappa = ((1.0 / v).ln() / m.ln()).floor();
                match *form {
                    AotForm::NegLog => (kappa + 1.0) * (-v.ln()) - m.ln() * kappa * (kappa + 1.0) / 2.0,
                    AotForm::Power { alpha } => {
                        let s: f64 = (0..=kappa as usize).map(|i| m.powf(-(i as f64) / alpha)).sum();
                        v.powf(-1.0 / alpha) * s - (kappa + 1.0)
                    }
                    AotForm::Bounded { alpha } => {
                        let s: f64 = (0..=kappa as usize).map(|i| m.powf(i as f64 / alpha)).sum();
                        (kappa + 1.0) - v.powf(1.0 / alpha) * s
                    }
                }
            }
            Multiplicity::Empirical(s) => s[rng.random_range(0..s.len())],
        }
    }

    fn mark_type(&self) -> MarkType {
        match self {
            Multiplicity::UnitMass | Multiplicity::Geometric { .. } => MarkType::Repp,
            Multiplicity::Pot(_) => MarkType::Pot,
            Multiplicity::AotTable { .. } | Multiplicity::Empirical(_) => MarkType::Aot,
        }
    }
}

/// Compound Poisson process with intensity `theta` and multiplicity `pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundPoissonModel {
    pub theta: f64,
    pub pi: Multiplicity,
}

impl CompoundPoissonModel {
    pub fn new(theta: f64, pi: Multiplicity) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::invalid("theta", format!("must lie in (0, 1], got {theta}")));
        }
        Ok(CompoundPoissonModel { theta, pi })
    }
}

fn check_disjoint(intervals: &[(f64, f64)]) -> Result<()> {
    let mut s: Vec<(f64, f64)> = intervals.to_vec();
    if s.iter().any(|(a, b)| !(a <= b)) {
        return Err(Error::invalid("intervals", "each interval needs a <= b"));
    }
    s.retain(|(a, b)| a < b);
    s.sort_by(|x, y| x.0.total_cmp(&y.0));
    for w in s.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::OverlappingIntervals(w[0].0, w[0].1, w[1].0, w[1].1));
        }
    }
    Ok(())
}

/// `E exp(-sum_l y_l A(I_l)) = exp(-theta sum_l (1 - phi(y_l)) |I_l|)`.
pub fn compound_poisson_laplace(model: &CompoundPoissonModel, intervals: &[(f64, f64)], y: &[f64]) -> Result<f64> {
    if intervals.len() != y.len() {
        return Err(Error::invalid("y", "one Laplace argument per interval"));
    }
    if y.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("y", "Laplace arguments must be non-negative"));
    }
    check_disjoint(intervals)?;
    let exponent: f64 = intervals
        .iter()
        .zip(y)
        .map(|(&(a, b), &yl)| (1.0 - model.pi.laplace(yl)) * (b - a))
        .sum();
    Ok((-model.theta * exponent).exp())
}

/// Event times are partial sums of i.i.d. `Exp(theta)` waiting times up to
/// `horizon`; marks are i.i.d. draws from `pi`.
pub fn compound_poisson_sample(model: &CompoundPoissonModel, horizon: f64, rng_seed: u64) -> Result<MarkedMeasure> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", format!("must be positive and finite, got {horizon}")));
    }
    let mut times_rng = seeds::rng(seeds::derive_labelled(rng_seed, "cp-times", 0));
    let mut marks_rng = seeds::rng(seeds::derive_labelled(rng_seed, "cp-marks", 0));
    let exp = Exp::new(model.theta).map_err(|e| Error::invalid("theta", e.to_string()))?;
    let mut atoms = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(&mut times_rng);
        if t >= horizon {
            break;
        }
        atoms.push(Atom {
            time: t,
            mark: model.pi.sample(&mut marks_rng),
        });
    }
    Ok(MarkedMeasure {
        atoms,
        mark_type: model.pi.mark_type(),
        u_n: 0.0,
        v_n: 1.0,
        q: 0,
        infinite_marks: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn extremal_index_examples() {
        let t = extremal_index(3.0, ZetaKind::InteriorPeriodic { p: 1 }, None).unwrap();
        assert_eq!(t.candidates().len(), 1);
        assert_abs_diff_eq!(t.candidates()[0].1, 2.0 / 3.0, epsilon = 1e-15);
        let t = extremal_index(2.0, ZetaKind::InteriorPeriodic { p: 2 }, None).unwrap();
        assert_eq!(t, ExtremalIndex::Single { theta: 0.75 });
        let t = extremal_index(2.5, ZetaKind::Aperiodic, None).unwrap();
        assert_eq!(t, ExtremalIndex::Single { theta: 1.0 });
        assert!(extremal_index(2.0, ZetaKind::InteriorPeriodic { p: 0 }, None).is_err());
    }

    #[test]
    fn boundary_variants_for_doubling() {
        let t = extremal_index(2.0, ZetaKind::Boundary { p: 1 }, None).unwrap();
        assert_eq!(
            t,
            ExtremalIndex::Boundary {
                verbatim: 1.0,
                normalized: 0.5
            }
        );
    }

    #[test]
    fn normalized_variant_degenerates_for_equal_densities() {
        for beta in [1.7, 2.0, 3.3] {
            let t = extremal_index(beta, ZetaKind::Boundary { p: 1 }, Some((0.8, 0.8))).unwrap();
            let ExtremalIndex::Boundary { normalized, .. } = t else { panic!() };
            assert_abs_diff_eq!(normalized, 1.0 - 1.0 / beta, epsilon = 1e-15);
        }
    }

    #[test]
    fn pot_examples() {
        assert_eq!(pot_multiplicity(&GType::NegLog, 0.0), 0.0);
        assert_abs_diff_eq!(pot_multiplicity(&GType::NegLog, 1.0), 0.6321205588285577, epsilon = 1e-15);
        assert_abs_diff_eq!(pot_multiplicity(&GType::Power { alpha: 2.0 }, 1.0), 0.75, epsilon = 1e-15);
        assert_eq!(pot_multiplicity(&GType::Bounded { d: 1.0, alpha: 2.0 }, 1.5), 1.0);
    }

    #[test]
    fn aot_table_examples() {
        assert_eq!(aot_multiplicity_table(AotForm::NegLog, 3.0, 0.0).unwrap(), 0.0);
        let v = aot_multiplicity_table(AotForm::NegLog, 4.0, 4f64.ln()).unwrap();
        assert_abs_diff_eq!(v, 0.75, epsilon = 1e-12);
        let v = aot_multiplicity_table(AotForm::Power { alpha: 1.5 }, 3.0, 1e9).unwrap();
        assert!(v > 1.0 - 1e-9);
    }

    #[test]
    fn aot_table_is_continuous_across_brackets() {
        for form in [
            AotForm::NegLog,
            AotForm::Power { alpha: 0.8 },
            AotForm::Bounded { alpha: 1.3 },
        ] {
            let pi = Multiplicity::AotTable { form, m: 3.0 };
            for &b in pi.breakpoints(30.0).iter().skip(1) {
                let l = aot_multiplicity_table(form, 3.0, b - 1e-9).unwrap();
                let r = aot_multiplicity_table(form, 3.0, b + 1e-9).unwrap();
                assert!((l - r).abs() < 1e-6, "{form:?} at {b}: {l} vs {r}");
            }
        }
    }

    #[test]
    fn general_reduces_to_pot_in_the_single_exceedance_regime() {
        let obs = ObservableSpec::neg_log(0.5).unwrap();
        for x in [0.1, 0.5, 0.9] {
            let v = aot_multiplicity_general(&obs, 3.0, 20.0, x).unwrap();
            assert_abs_diff_eq!(v, 1.0 - (-x).exp(), epsilon = 1e-9);
        }
    }

    #[test]
    fn general_example_at_u_20() {
        let obs = ObservableSpec::neg_log(0.5).unwrap();
        let v = aot_multiplicity_general(&obs, 4.0, 20.0, 4f64.ln()).unwrap();
        assert!((v - 0.75).abs() < 1e-3);
    }

    #[test]
    fn repp_examples() {
        assert_eq!(repp_multiplicity(1.0, 1), 1.0);
        assert_eq!(repp_multiplicity(1.0, 3), 0.0);
        assert_abs_diff_eq!(repp_multiplicity(2.0 / 3.0, 2), 2.0 / 9.0, epsilon = 1e-15);
        let s: f64 = (1..200).map(|k| repp_multiplicity(0.3, k)).sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn laplace_examples() {
        let m = CompoundPoissonModel::new(1.0, Multiplicity::UnitMass).unwrap();
        assert_eq!(compound_poisson_laplace(&m, &[(0.0, 1.0)], &[0.0]).unwrap(), 1.0);
        let v = compound_poisson_laplace(&m, &[(0.0, 1.0)], &[1.0]).unwrap();
        assert_abs_diff_eq!(v, 0.5314636, epsilon = 1e-6);
        let both = compound_poisson_laplace(&m, &[(0.0, 1.0), (2.0, 2.5)], &[1.0, 0.3]).unwrap();
        let a = compound_poisson_laplace(&m, &[(0.0, 1.0)], &[1.0]).unwrap();
        let b = compound_poisson_laplace(&m, &[(2.0, 2.5)], &[0.3]).unwrap();
        assert_abs_diff_eq!(both, a * b, epsilon = 1e-15);
        assert!(compound_poisson_laplace(&m, &[(0.0, 1.0), (0.5, 2.0)], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        // Exp(1) through the generic route: Pot(NegLog) is closed form, so
        // compare a table form at a large M, where clusters are singletons.
        let pi = Multiplicity::AotTable {
            form: AotForm::NegLog,
            m: 1e300,
        };
        for y in [0.1, 1.0, 5.0] {
            assert_abs_diff_eq!(pi.laplace(y), 1.0 / (1.0 + y), epsilon = 1e-9);
        }
        let pareto = Multiplicity::Pot(GType::Power { alpha: 1.0 });
        // E e^{-yX} for P(X > x) = 1/(1+x): 1 - y e^y E1(y); at y = 1, e E1(1) = 0.596347362...
        assert_abs_diff_eq!(pareto.laplace(1.0), 1.0 - 0.5963473623231940, epsilon = 1e-8);
        let bounded = Multiplicity::Pot(GType::Bounded { d: 1.0, alpha: 1.0 });
        // uniform on [0, 1]
        assert_abs_diff_eq!(bounded.laplace(2.0), (1.0 - (-2f64).exp()) / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn geometric_laplace_is_the_series() {
        let pi = Multiplicity::Geometric { theta: 2.0 / 3.0 };
        let y = 0.7;
        let s: f64 = (1..200).map(|k| repp_multiplicity(2.0 / 3.0, k) * (-y * k as f64).exp()).sum();
        assert_abs_diff_eq!(pi.laplace(y), s, epsilon = 1e-14);
    }

    #[test]
    fn sampler_mean_count() {
        let m = CompoundPoissonModel::new(0.5, Multiplicity::UnitMass).unwrap();
        let s = compound_poisson_sample(&m, 20_000.0, 9).unwrap();
        let n = s.atoms.len() as f64;
        assert!((n - 10_000.0).abs() < 4.0 * 100.0);
        assert!(compound_poisson_sample(&m, 0.0, 9).is_err());
    }
}
