//! Sequential and random compositions of beta transformations.
//!
//! Points live on the circle `[0, 1)` with `0 ~ 1`. All maps are of the form
//! `T_beta(x) = beta * x mod 1`. A sequential system applies a schedule
//! `beta_1, beta_2, ...`; a random system applies the maps selected by a word
//! over a finite alphabet.
//!
//! The floating-point routines here are deterministic functions of their
//! inputs. Ensemble Monte Carlo uses [`lazy::LazyPoint`] instead, which
//! follows the true orbit of a Lebesgue-random real and does not collapse at
//! integer `beta`.

pub mod density;
pub mod lazy;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use density::{
    marginal_density, parry_density, sample_measure_density, DensityApprox, IntervalMeasure, Lebesgue,
    ParryDensity, SampleDensity,
};
pub use lazy::{FixedBeta, LazyPoint};

/// Default number of letters used to push Lebesgue measure onto a fibre.
pub const DEFAULT_BURN_IN: usize = 50;

#[inline]
pub(crate) fn step_unchecked(beta: f64, x: f64) -> f64 {
    let y = beta * x;
    let r = y - y.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta <= 1.0 {
        return Err(Error::invalid("beta", format!("expected a finite value > 1, got {beta}")));
    }
    Ok(())
}

fn check_point(x: f64) -> Result<f64> {
    if !x.is_finite() || !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid("x", format!("expected a point of [0, 1], got {x}")));
    }
    // 1 is identified with 0.
    Ok(if x == 1.0 { 0.0 } else { x })
}

/// `beta * x mod 1`, with the input `1` identified with `0`.
pub fn beta_map_apply(beta: f64, x: f64) -> Result<f64> {
    check_beta(beta)?;
    let x = check_point(x)?;
    Ok(step_unchecked(beta, x))
}

/// The orbit `T(1), T^2(1), ...` of the right endpoint, prefixed by `1` itself.
///
/// Unlike [`beta_map_apply`] this path starts exactly at `1`. A value within
/// `1e-12` of an integer is treated as having hit `0 ~ 1`, after which the
/// orbit is fixed at `0` and the returned sequence stops.
pub fn boundary_orbit(beta: f64, max_terms: usize) -> Result<Vec<f64>> {
    check_beta(beta)?;
    const SNAP: f64 = 1e-12;
    let mut out = Vec::with_capacity(max_terms.min(4096));
    let mut t = 1.0_f64;
    while out.len() < max_terms {
        out.push(t);
        let y = beta * t;
        let r = y - y.floor();
        if r < SNAP || r > 1.0 - SNAP {
            out.push(0.0);
            break;
        }
        t = r;
    }
    out.truncate(max_terms);
    Ok(out)
}

/// Sign of the perturbation `beta_i - beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationSign {
    #[default]
    Plus,
    Minus,
    /// `+` at odd indices, `-` at even ones.
    Alternating,
}

impl PerturbationSign {
    fn at(self, i: usize) -> f64 {
        match self {
            PerturbationSign::Plus => 1.0,
            PerturbationSign::Minus => -1.0,
            PerturbationSign::Alternating => {
                if i % 2 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// A drifting schedule `beta_i = beta + sign * i^(-xi)`, `i = 1..=length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub beta_limit: f64,
    pub xi: f64,
    pub sign: PerturbationSign,
    pub length: usize,
    /// Every `beta_i` must exceed `1 + margin`.
    pub margin: f64,
}

impl BetaSchedule {
    pub fn new(beta_limit: f64, xi: f64, sign: PerturbationSign, length: usize) -> Result<Self> {
        let margin = (beta_limit - 1.0) / 2.0;
        let s = BetaSchedule {
            beta_limit,
            xi,
            sign,
            length,
            margin,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        self.margin = margin;
        self.validate()?;
        Ok(self)
    }

    /// A schedule whose maps never move away from `beta`.
    pub fn constant(beta: f64, length: usize) -> Result<Vec<f64>> {
        check_beta(beta)?;
        Ok(vec![beta; length])
    }

    fn validate(&self) -> Result<()> {
        check_beta(self.beta_limit)?;
        if !(self.xi > 1.0) || !self.xi.is_finite() {
            return Err(Error::invalid("xi", format!("perturbation exponent must exceed 1, got {}", self.xi)));
        }
        if !(self.margin > 0.0) || self.beta_limit <= 1.0 + self.margin {
            return Err(Error::invalid(
                "margin",
                format!("need 0 < c < beta - 1, got c = {} for beta = {}", self.margin, self.beta_limit),
            ));
        }
        if self.length == 0 {
            return Err(Error::invalid("length", "schedule length must be positive"));
        }
        Ok(())
    }

    /// `beta_i` for `i >= 1`, rounded towards `beta` so that
    /// `|beta_i - beta| <= i^(-xi)` holds in floating point.
    pub fn beta_at(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        let bound = (i as f64).powf(-self.xi);
        let mut b = self.beta_limit + self.sign.at(i) * bound;
        while (b - self.beta_limit).abs() > bound {
            b = if b > self.beta_limit { b.next_down() } else { b.next_up() };
        }
        b
    }

    /// `[beta_1, ..., beta_length]`.
    pub fn make_schedule(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let floor = 1.0 + self.margin;
        (1..=self.length)
            .map(|i| {
                let b = self.beta_at(i);
                if b > floor {
                    Ok(b)
                } else {
                    Err(Error::invalid(
                        "schedule",
                        format!("beta_{i} = {b} does not exceed 1 + c = {floor}"),
                    ))
                }
            })
            .collect()
    }
}

/// A finite orbit `x_0, ..., x_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub x0: f64,
    pub points: Vec<f64>,
    pub word: Option<Vec<usize>>,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `points[i] = T_{beta_i} o ... o T_{beta_1}(x0)`; `schedule[i - 1]` holds `beta_i`.
pub fn sequential_orbit(schedule: &[f64], x0: f64, n: usize) -> Result<Orbit> {
    if schedule.len() < n {
        return Err(Error::invalid(
            "schedule",
            format!("needs at least {n} maps, has {}", schedule.len()),
        ));
    }
    for &b in &schedule[..n] {
        check_beta(b)?;
    }
    let x0 = check_point(x0)?;
    let mut points = Vec::with_capacity(n + 1);
    let mut x = x0;
    points.push(x);
    for &b in &schedule[..n] {
        x = step_unchecked(b, x);
        points.push(x);
    }
    Ok(Orbit {
        x0,
        points,
        word: None,
    })
}

/// Finitely many beta maps chosen i.i.d. with Bernoulli weights.
///
/// Letters are zero-based indices into `alphabet`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomLySystem {
    pub alphabet: Vec<f64>,
    pub weights: Vec<f64>,
    /// Letters applied to Lebesgue measure before time 0.
    pub burn_in: usize,
}

impl RandomLySystem {
    pub fn new(alphabet: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if alphabet.is_empty() {
            return Err(Error::invalid("alphabet", "must contain at least one map"));
        }
        if alphabet.len() != weights.len() {
            return Err(Error::invalid(
                "weights",
                format!("{} weights for {} letters", weights.len(), alphabet.len()),
            ));
        }
        for &b in &alphabet {
            // delta(f) = beta for a beta map, so expansion > 1 is beta > 1.
            check_beta(b)?;
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights", "must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("weights", format!("must sum to 1, sum is {total}")));
        }
        Ok(RandomLySystem {
            alphabet,
            weights,
            burn_in: DEFAULT_BURN_IN,
        })
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn beta(&self, letter: usize) -> Result<f64> {
        self.alphabet.get(letter).copied().ok_or(Error::LetterOutOfRange {
            letter,
            size: self.alphabet.len(),
        })
    }

    /// An i.i.d. word of `len` letters drawn with the system weights.
    pub fn sample_word<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Vec<usize> {
        if self.alphabet.len() == 1 {
            return vec![0; len];
        }
        let dist = WeightedIndex::new(&self.weights).expect("weights validated at construction");
        (0..len).map(|_| dist.sample(rng)).collect()
    }

    /// Map parameters selected by `word`.
    pub fn betas_for(&self, word: &[usize]) -> Result<Vec<f64>> {
        word.iter().map(|&l| self.beta(l)).collect()
    }
}

/// `points[i] = f_{w_i} o ... o f_{w_1}(x0)` along the fibre selected by `word`.
pub fn random_orbit(system: &RandomLySystem, word: &[usize], x0: f64, n: usize) -> Result<Orbit> {
    if word.len() < n {
        return Err(Error::invalid(
            "word",
            format!("needs at least {n} letters, has {}", word.len()),
        ));
    }
    let betas = system.betas_for(&word[..n])?;
    let mut orbit = sequential_orbit(&betas, x0, n)?;
    orbit.word = Some(word[..n].to_vec());
    Ok(orbit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn map_examples() {
        assert_abs_diff_eq!(beta_map_apply(2.0, 0.3).unwrap(), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(beta_map_apply(3.0, 0.5).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(beta_map_apply(2.5, 0.9).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(beta_map_apply(2.5, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn map_rejects_bad_input() {
        assert!(beta_map_apply(f64::NAN, 0.3).is_err());
        assert!(beta_map_apply(2.0, f64::INFINITY).is_err());
        assert!(beta_map_apply(1.0, 0.3).is_err());
        assert!(beta_map_apply(2.0, 1.5).is_err());
    }

    #[test]
    fn schedule_examples() {
        let s = BetaSchedule::new(3.0, 2.0, PerturbationSign::Plus, 10).unwrap();
        assert_eq!(s.beta_at(1), 4.0);
        assert_abs_diff_eq!(s.beta_at(10), 3.01, epsilon = 1e-15);
        let betas = s.make_schedule().unwrap();
        assert_eq!(betas.len(), 10);
        assert_eq!(betas[0], 4.0);

        let s = BetaSchedule::new(2.0, 1.5, PerturbationSign::Minus, 10).unwrap();
        assert_eq!(s.beta_at(4), 1.875);
        // beta_1 = 1 violates beta_i > 1 + c.
        assert!(s.make_schedule().is_err());
    }

    #[test]
    fn schedule_rejects_small_xi() {
        assert!(BetaSchedule::new(3.0, 1.0, PerturbationSign::Plus, 10).is_err());
        assert!(BetaSchedule::new(3.0, 0.5, PerturbationSign::Plus, 10).is_err());
    }

    #[test]
    fn schedule_bound_holds_in_floating_point() {
        for sign in [PerturbationSign::Plus, PerturbationSign::Minus, PerturbationSign::Alternating] {
            let s = BetaSchedule::new(3.7, 1.3, sign, 5000).unwrap();
            for (k, b) in s.make_schedule().unwrap().iter().enumerate() {
                let i = (k + 1) as f64;
                assert!((b - 3.7).abs() <= i.powf(-1.3));
            }
        }
    }

    #[test]
    fn alternating_sign_flips() {
        let s = BetaSchedule::new(3.0, 2.0, PerturbationSign::Alternating, 4).unwrap();
        assert!(s.beta_at(1) > 3.0);
        assert!(s.beta_at(2) < 3.0);
        assert!(s.beta_at(3) > 3.0);
    }

    #[test]
    fn sequential_orbit_examples() {
        let o = sequential_orbit(&[3.0; 5], 0.5, 5).unwrap();
        assert!(o.points.iter().all(|&x| x == 0.5));
        assert_eq!(o.len(), 6);

        let o = sequential_orbit(&[2.0; 2], 0.3, 2).unwrap();
        assert_abs_diff_eq!(o.points[1], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(o.points[2], 0.2, epsilon = 1e-15);

        assert!(sequential_orbit(&[2.0; 2], 0.3, 3).is_err());
    }

    #[test]
    fn sequential_orbit_matches_stepwise_recomputation() {
        let s = BetaSchedule::new(3.0, 2.0, PerturbationSign::Plus, 100).unwrap();
        let betas = s.make_schedule().unwrap();
        for g in 0..50 {
            let x0 = g as f64 / 50.0;
            let o = sequential_orbit(&betas, x0, 100).unwrap();
            let mut x = x0;
            for i in 1..=100 {
                let y = betas[i - 1] * x;
                x = y - y.floor();
                assert_eq!(o.points[i].to_bits(), x.to_bits());
            }
        }
    }

    #[test]
    fn random_orbit_examples() {
        let sys = RandomLySystem::new(vec![2.0, 3.0], vec![0.5, 0.5]).unwrap();
        let o = random_orbit(&sys, &[0, 1], 0.3, 2).unwrap();
        assert_abs_diff_eq!(o.points[1], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(o.points[2], 0.8, epsilon = 1e-12);
        assert_eq!(o.word.as_deref(), Some(&[0, 1][..]));

        assert!(matches!(
            random_orbit(&sys, &[0, 2], 0.3, 2),
            Err(Error::LetterOutOfRange { letter: 2, size: 2 })
        ));
    }

    #[test]
    fn single_letter_alphabet_is_the_constant_schedule() {
        let sys = RandomLySystem::new(vec![2.0], vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let word = sys.sample_word(&mut rng, 40);
        let a = random_orbit(&sys, &word, 0.123, 40).unwrap();
        let b = sequential_orbit(&[2.0; 40], 0.123, 40).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn random_orbit_matches_letterwise_composition() {
        let sys = RandomLySystem::new(vec![2.0, 3.0, 2.5], vec![0.2, 0.5, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let word = sys.sample_word(&mut rng, 50);
        let o = random_orbit(&sys, &word, 0.41, 50).unwrap();
        let mut x = 0.41_f64;
        for (i, &l) in word.iter().enumerate() {
            let y = sys.alphabet[l] * x;
            x = y - y.floor();
            assert_eq!(o.points[i + 1], x);
        }
    }

    #[test]
    fn random_system_validation() {
        assert!(RandomLySystem::new(vec![], vec![]).is_err());
        assert!(RandomLySystem::new(vec![2.0], vec![0.5]).is_err());
        assert!(RandomLySystem::new(vec![2.0, 0.9], vec![0.5, 0.5]).is_err());
        assert!(RandomLySystem::new(vec![2.0, 3.0], vec![1.0]).is_err());
    }

    #[test]
    fn degenerate_weights_never_pick_the_null_letter() {
        let sys = RandomLySystem::new(vec![2.0, 3.0], vec![1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sys.sample_word(&mut rng, 1000).iter().all(|&l| l == 0));
    }

    #[test]
    fn boundary_orbit_of_golden_beta_hits_zero() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let orb = boundary_orbit(phi, 100).unwrap();
        assert_eq!(orb.len(), 3);
        assert_eq!(orb[0], 1.0);
        assert_abs_diff_eq!(orb[1], phi - 1.0, epsilon = 1e-15);
        assert_eq!(orb[2], 0.0);

        assert_eq!(boundary_orbit(3.0, 100).unwrap(), vec![1.0, 0.0]);
    }
}
