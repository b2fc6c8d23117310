//! Invariant and sample densities on the circle.

use super::{boundary_orbit, check_beta, RandomLySystem};
use crate::error::{Error, Result};

/// A finite measure on `[0, 1)` described by its distribution function.
pub trait IntervalMeasure {
    /// Mass of `[0, x)`.
    fn cdf(&self, x: f64) -> f64;

    fn total(&self) -> f64 {
        self.cdf(1.0)
    }

    /// Mass of `[a, b)` for `0 <= a <= b <= 1`.
    fn interval(&self, a: f64, b: f64) -> f64 {
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }

    /// Mass of the open circle ball `B(center, radius)`.
    fn ball(&self, center: f64, radius: f64) -> f64 {
        if radius <= 0.0 {
            return 0.0;
        }
        if radius >= 0.5 {
            return self.total();
        }
        let lo = center - radius;
        let hi = center + radius;
        if lo < 0.0 {
            self.interval(0.0, hi) + self.interval(1.0 + lo, 1.0)
        } else if hi > 1.0 {
            self.interval(lo, 1.0) + self.interval(0.0, hi - 1.0)
        } else {
            self.interval(lo, hi)
        }
    }
}

/// Lebesgue measure on `[0, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Lebesgue;

impl IntervalMeasure for Lebesgue {
    fn cdf(&self, x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }

    fn interval(&self, a: f64, b: f64) -> f64 {
        (b.min(1.0) - a.max(0.0)).max(0.0)
    }

    fn ball(&self, _center: f64, radius: f64) -> f64 {
        (2.0 * radius).clamp(0.0, 1.0)
    }
}

/// Piecewise-constant density on a uniform partition of `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityApprox {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DensityApprox {
    /// Builds a density from per-cell values; the values are not renormalised.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("values", "a density needs at least one cell"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("values", "densities must be finite and non-negative"));
        }
        let width = 1.0 / values.len() as f64;
        let mut cumulative = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for v in &values {
            acc += v * width;
            cumulative.push(acc);
        }
        Ok(DensityApprox { values, cumulative })
    }

    /// Normalised histogram of points of `[0, 1)`.
    pub fn from_samples(samples: impl IntoIterator<Item = f64>, cells: usize) -> Result<Self> {
        let mut counts = vec![0u64; cells.max(1)];
        let mut total = 0u64;
        for x in samples {
            let c = ((x * cells as f64) as usize).min(cells - 1);
            counts[c] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::InsufficientData("empty sample".into()));
        }
        let scale = cells as f64 / total as f64;
        Self::from_values(counts.into_iter().map(|c| c as f64 * scale).collect())
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    /// Riemann sum of values times cell widths.
    pub fn integral(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.values.len();
        self.values[((x * n as f64) as usize).min(n - 1)]
    }

    /// `int |f - g| dm` for densities on the same grid.
    pub fn l1_distance(&self, other: &DensityApprox) -> Result<f64> {
        if self.cells() != other.cells() {
            return Err(Error::invalid("other", "densities live on different grids"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.cell_width())
    }

    /// Pointwise average of densities on a common grid.
    pub fn average(densities: &[DensityApprox]) -> Result<Self> {
        let first = densities
            .first()
            .ok_or_else(|| Error::InsufficientData("no densities to average".into()))?;
        let mut acc = vec![0.0; first.cells()];
        for d in densities {
            if d.cells() != first.cells() {
                return Err(Error::invalid("densities", "densities live on different grids"));
            }
            for (a, v) in acc.iter_mut().zip(&d.values) {
                *a += v;
            }
        }
        let k = densities.len() as f64;
        Self::from_values(acc.into_iter().map(|a| a / k).collect())
    }
}

impl IntervalMeasure for DensityApprox {
    fn cdf(&self, x: f64) -> f64 {
        let n = self.values.len();
        let x = x.clamp(0.0, 1.0);
        let pos = x * n as f64;
        let c = (pos as usize).min(n - 1);
        self.cumulative[c] + (pos - c as f64) * self.values[c] / n as f64
    }
}

/// The Parry density of `T_beta`, `h(x) = M^-1 sum_{x < T^n(1)} beta^-n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParryDensity {
    beta: f64,
    orbit: Vec<f64>,
    weights: Vec<f64>,
    norm: f64,
}

/// Smallest weight kept in the Parry series.
const PARRY_CUTOFF: f64 = 1e-14;

impl ParryDensity {
    /// Truncates the series once `beta^-n < 1e-14` or the orbit of 1 reaches 0.
    pub fn new(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let terms = (PARRY_CUTOFF.ln() / -beta.ln()).ceil() as usize + 1;
        Self::with_terms(beta, terms)
    }

    pub fn with_terms(beta: f64, orbit_terms: usize) -> Result<Self> {
        check_beta(beta)?;
        let orbit = boundary_orbit(beta, orbit_terms.max(1))?;
        let reached_zero = orbit.last() == Some(&0.0);
        if !reached_zero && beta.powi(-(orbit_terms as i32)) >= PARRY_CUTOFF {
            return Err(Error::invalid(
                "orbit_terms",
                format!("{orbit_terms} terms leave a tail weight >= {PARRY_CUTOFF}"),
            ));
        }
        let mut kept = Vec::new();
        let mut weights = Vec::new();
        let mut w = 1.0;
        for &t in &orbit {
            if t == 0.0 || w < PARRY_CUTOFF {
                break;
            }
            kept.push(t);
            weights.push(w);
            w /= beta;
        }
        let norm: f64 = kept.iter().zip(&weights).map(|(t, w)| t * w).sum();
        assert!(norm.is_finite() && norm > 0.0, "Parry normalisation diverged");
        Ok(ParryDensity {
            beta,
            orbit: kept,
            weights,
            norm,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `M(beta) = int sum_{x < T^n(1)} beta^-n dm`.
    pub fn normalisation(&self) -> f64 {
        self.norm
    }

    pub fn density_at(&self, x: f64) -> f64 {
        self.orbit
            .iter()
            .zip(&self.weights)
            .filter(|(t, _)| x < **t)
            .map(|(_, w)| w)
            .sum::<f64>()
            / self.norm
    }

    /// Right limit at 0 and left limit at 1.
    pub fn boundary_values(&self) -> (f64, f64) {
        let at_one = self
            .orbit
            .iter()
            .zip(&self.weights)
            .filter(|(t, _)| **t >= 1.0)
            .map(|(_, w)| w)
            .sum::<f64>()
            / self.norm;
        (self.density_at(0.0), at_one)
    }

    pub fn on_grid(&self, cells: usize) -> Result<DensityApprox> {
        if cells == 0 {
            return Err(Error::invalid("cells", "grid needs at least one cell"));
        }
        let n = cells as f64;
        let values = (0..cells)
            .map(|c| self.interval(c as f64 / n, (c + 1) as f64 / n) * n)
            .collect();
        DensityApprox::from_values(values)
    }
}

impl IntervalMeasure for ParryDensity {
    fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        self.orbit
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * x.min(*t))
            .sum::<f64>()
            / self.norm
    }

    fn interval(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
        if b <= a {
            return 0.0;
        }
        self.orbit
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * (b.min(*t) - a.min(*t)))
            .sum::<f64>()
            / self.norm
    }
}

/// Cell averages of the Parry density on `cells` uniform cells.
pub fn parry_density(beta: f64, orbit_terms: usize, cells: usize) -> Result<DensityApprox> {
    ParryDensity::with_terms(beta, orbit_terms)?.on_grid(cells)
}

/// Pushes cell masses forward under `x -> beta x mod 1` (Ulam discretisation).
fn ulam_push(mass: &[f64], beta: f64, out: &mut [f64]) {
    let n = mass.len();
    let nf = n as f64;
    out.iter_mut().for_each(|v| *v = 0.0);
    for (j, &m) in mass.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let mut s = beta * j as f64 / nf;
        let e = beta * (j + 1) as f64 / nf;
        let lin = m / (e - s);
        while s < e {
            let k = s.floor();
            let stop = e.min(k + 1.0);
            let (p0, p1) = (s - k, stop - k);
            let c0 = ((p0 * nf) as usize).min(n - 1);
            let c1 = ((p1 * nf).ceil() as usize).min(n);
            for c in c0..c1 {
                let lo = p0.max(c as f64 / nf);
                let hi = p1.min((c + 1) as f64 / nf);
                if hi > lo {
                    out[c] += (hi - lo) * lin;
                }
            }
            s = stop;
        }
    }
}

/// Sample density together with the cells where positivity failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDensity {
    pub density: DensityApprox,
    pub nonpositive_cells: Vec<usize>,
}

/// Approximates the fibre density `h_omega` by pushing the constant density
/// through the transfer operators of `prefix` (oldest letter first).
pub fn sample_measure_density(
    system: &RandomLySystem,
    prefix: &[usize],
    grid_cells: usize,
) -> Result<SampleDensity> {
    if grid_cells < 64 {
        return Err(Error::invalid("grid_cells", format!("need at least 64 cells, got {grid_cells}")));
    }
    if prefix.len() < system.burn_in {
        return Err(Error::invalid(
            "prefix",
            format!("{} letters is shorter than the burn-in of {}", prefix.len(), system.burn_in),
        ));
    }
    let betas = system.betas_for(prefix)?;
    let mut mass = vec![1.0 / grid_cells as f64; grid_cells];
    let mut scratch = vec![0.0; grid_cells];
    for b in betas {
        ulam_push(&mass, b, &mut scratch);
        std::mem::swap(&mut mass, &mut scratch);
    }
    let total: f64 = mass.iter().sum();
    let values: Vec<f64> = mass.iter().map(|m| m / total * grid_cells as f64).collect();
    let nonpositive_cells = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v <= 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(SampleDensity {
        density: DensityApprox::from_values(values)?,
        nonpositive_cells,
    })
}

/// Density of the marginal `int mu_omega dQ` for i.i.d. letters: the averaged
/// operator `sum_k p_k P_k` applied `burn_in` times to the constant density.
pub fn marginal_density(system: &RandomLySystem, grid_cells: usize) -> Result<DensityApprox> {
    if grid_cells < 64 {
        return Err(Error::invalid("grid_cells", format!("need at least 64 cells, got {grid_cells}")));
    }
    let mut mass = vec![1.0 / grid_cells as f64; grid_cells];
    let mut scratch = vec![0.0; grid_cells];
    let mut next = vec![0.0; grid_cells];
    for _ in 0..system.burn_in {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (&b, &p) in system.alphabet.iter().zip(&system.weights) {
            if p == 0.0 {
                continue;
            }
            ulam_push(&mass, b, &mut scratch);
            for (a, s) in next.iter_mut().zip(&scratch) {
                *a += p * s;
            }
        }
        std::mem::swap(&mut mass, &mut next);
    }
    let total: f64 = mass.iter().sum();
    DensityApprox::from_values(mass.iter().map(|m| m / total * grid_cells as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn golden() -> f64 {
        (1.0 + 5f64.sqrt()) / 2.0
    }

    #[test]
    fn integer_beta_density_is_one() {
        for beta in 2..=10 {
            let d = parry_density(beta as f64, 60, 256).unwrap();
            assert!(d.values().iter().all(|&v| v == 1.0), "beta = {beta}");
            assert_abs_diff_eq!(d.integral(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn golden_beta_has_two_steps() {
        let beta = golden();
        let p = ParryDensity::new(beta).unwrap();
        assert_abs_diff_eq!(p.normalisation(), 3.0 - beta, epsilon = 1e-12);
        assert_abs_diff_eq!(p.density_at(0.3), 1.1708203932499369, epsilon = 1e-9);
        assert_abs_diff_eq!(p.density_at(0.9), 0.7236067977499789, epsilon = 1e-9);
        let d = p.on_grid(1000).unwrap();
        assert_abs_diff_eq!(d.integral(), 1.0, epsilon = 1e-10);
        let (h0, h1) = p.boundary_values();
        assert_abs_diff_eq!(h0, 1.1708203932499369, epsilon = 1e-9);
        assert_abs_diff_eq!(h1, 0.7236067977499789, epsilon = 1e-9);
    }

    #[test]
    fn generic_beta_normalises() {
        for beta in [1.3, 2.5, 3.01, 7.77] {
            let d = parry_density(beta, 200, 4096).unwrap();
            assert_abs_diff_eq!(d.integral(), 1.0, epsilon = 1e-10);
            assert!(d.values().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn too_few_terms_rejected() {
        assert!(parry_density(2.5, 3, 64).is_err());
        // An orbit that reaches zero needs no tail bound.
        assert!(parry_density(golden(), 3, 64).is_ok());
    }

    #[test]
    fn ball_measure_wraps() {
        assert_abs_diff_eq!(Lebesgue.ball(0.0, 0.1), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(Lebesgue.ball(0.95, 0.1), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(Lebesgue.ball(0.3, 0.7), 1.0, epsilon = 1e-15);
        let p = ParryDensity::new(golden()).unwrap();
        assert_abs_diff_eq!(p.ball(0.0, 0.01), 0.01 * (1.1708203932499369 + 0.7236067977499789), epsilon = 1e-12);
    }

    #[test]
    fn ulam_preserves_lebesgue_for_doubling() {
        let sys = RandomLySystem::new(vec![2.0], vec![1.0]).unwrap();
        let s = sample_measure_density(&sys, &[0; 50], 4096).unwrap();
        assert!(s.nonpositive_cells.is_empty());
        for v in s.density.values() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn ulam_reduces_to_deterministic_case() {
        let sys = RandomLySystem::new(vec![2.0, 3.0], vec![0.5, 0.5]).unwrap();
        let s = sample_measure_density(&sys, &[0; 60], 1024).unwrap();
        for v in s.density.values() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn ulam_recovers_golden_parry_density() {
        let sys = RandomLySystem::new(vec![2.0, golden()], vec![0.5, 0.5]).unwrap();
        let s = sample_measure_density(&sys, &[1; 200], 4096).unwrap();
        let parry = ParryDensity::new(golden()).unwrap().on_grid(4096).unwrap();
        let l1 = s.density.l1_distance(&parry).unwrap();
        assert!(l1 < 0.01, "L1 = {l1}");
        assert!(s.nonpositive_cells.is_empty());
    }

    #[test]
    fn ulam_preconditions() {
        let sys = RandomLySystem::new(vec![2.0], vec![1.0]).unwrap();
        assert!(sample_measure_density(&sys, &[0; 10], 4096).is_err());
        assert!(sample_measure_density(&sys, &[0; 50], 32).is_err());
    }

    #[test]
    fn marginal_of_integer_alphabet_is_lebesgue() {
        let sys = RandomLySystem::new(vec![2.0, 3.0], vec![0.5, 0.5]).unwrap();
        let d = marginal_density(&sys, 1024).unwrap();
        for v in d.values() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn marginal_of_one_letter_is_the_fibre_density() {
        let sys = RandomLySystem::new(vec![golden(), 2.0], vec![1.0, 0.0]).unwrap();
        let a = marginal_density(&sys, 512).unwrap();
        let b = sample_measure_density(&sys, &[0; 50], 512).unwrap().density;
        assert!(a.l1_distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn histogram_density_normalises() {
        let d = DensityApprox::from_samples((0..1000).map(|i| i as f64 / 1000.0), 10).unwrap();
        assert_abs_diff_eq!(d.integral(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.value_at(0.55), 1.0, epsilon = 1e-12);
    }
}
