//! Observables `phi(x) = g(dist(x, zeta))` peaked at a target point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of `g` near `0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GType {
    /// `g(x) = -log x`; type 1 with scale function `h = 1`.
    NegLog,
    /// `g(x) = x^(-1/alpha)`; type 2 with tail index `alpha`.
    Power { alpha: f64 },
    /// `g(x) = D - x^(1/alpha)`; type 3 with `g(0) = D`.
    Bounded { d: f64, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub g: GType,
    pub zeta: f64,
}

/// Distance on the circle `[0, 1)` with `0 ~ 1`.
#[inline]
pub fn circle_dist(x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    d.min(1.0 - d)
}

impl ObservableSpec {
    pub fn new(g: GType, zeta: f64) -> Result<Self> {
        if !zeta.is_finite() || !(0.0..1.0).contains(&zeta) {
            return Err(Error::invalid("zeta", format!("target must lie in [0, 1), got {zeta}")));
        }
        match g {
            GType::NegLog => {}
            GType::Power { alpha } | GType::Bounded { alpha, .. } => {
                if !alpha.is_finite() || alpha <= 0.0 {
                    return Err(Error::invalid("alpha", format!("must be a positive real, got {alpha}")));
                }
            }
        }
        if let GType::Bounded { d, .. } = g {
            if !d.is_finite() {
                return Err(Error::invalid("d", "the maximum of a type-3 observable must be finite"));
            }
        }
        Ok(ObservableSpec { g, zeta })
    }

    pub fn neg_log(zeta: f64) -> Result<Self> {
        Self::new(GType::NegLog, zeta)
    }

    /// `g(0)`, possibly `+inf`.
    pub fn g_max(&self) -> f64 {
        match self.g {
            GType::NegLog | GType::Power { .. } => f64::INFINITY,
            GType::Bounded { d, .. } => d,
        }
    }

    /// `g(r)` for `r >= 0`.
    #[inline]
    pub fn g(&self, r: f64) -> f64 {
        match self.g {
            GType::NegLog => -r.ln(),
            GType::Power { alpha } => {
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    r.powf(-1.0 / alpha)
                }
            }
            GType::Bounded { d, alpha } => d - r.powf(1.0 / alpha),
        }
    }

    /// The radius `r` with `g(r) = u`, so that `{phi > u}` is the ball `B(zeta, r)`.
    pub fn g_inverse(&self, u: f64) -> Result<f64> {
        if u.is_nan() {
            return Err(Error::LevelOutOfRange {
                level: u,
                reason: "level is NaN",
            });
        }
        match self.g {
            GType::NegLog => Ok((-u).exp()),
            GType::Power { alpha } => {
                if u <= 0.0 {
                    return Err(Error::LevelOutOfRange {
                        level: u,
                        reason: "a power observable only takes positive values",
                    });
                }
                Ok(u.powf(-alpha))
            }
            GType::Bounded { d, alpha } => {
                if u > d {
                    return Err(Error::LevelOutOfRange {
                        level: u,
                        reason: "level above g(0) = D",
                    });
                }
                Ok((d - u).powf(alpha))
            }
        }
    }

    /// `phi(x)`; `+inf` at `x = zeta` when `g(0) = +inf`.
    #[inline]
    pub fn observe(&self, x: f64) -> f64 {
        self.g(circle_dist(x, self.zeta))
    }

    /// The normalising factor `a_n` for the level `u_n`.
    pub fn normalizer(&self, u_n: f64) -> Result<f64> {
        match self.g {
            GType::NegLog => Ok(1.0),
            GType::Power { .. } => {
                if !(u_n > 0.0) || !u_n.is_finite() {
                    return Err(Error::LevelOutOfRange {
                        level: u_n,
                        reason: "a_n = 1/u_n needs a positive finite level",
                    });
                }
                Ok(1.0 / u_n)
            }
            GType::Bounded { d, .. } => {
                if !(u_n < d) {
                    return Err(Error::LevelOutOfRange {
                        level: u_n,
                        reason: "a_n = 1/(D - u_n) needs u_n < D",
                    });
                }
                Ok(1.0 / (d - u_n))
            }
        }
    }

    /// Checks that `g` decreases strictly on `points` log-spaced radii in `(0, r_max]`.
    pub fn check_decreasing(&self, r_max: f64, points: usize) -> bool {
        let lo = (r_max * 1e-12).ln();
        let hi = r_max.ln();
        let mut prev = f64::INFINITY;
        for k in 0..points {
            let r = (lo + (hi - lo) * k as f64 / (points - 1).max(1) as f64).exp();
            let v = self.g(r);
            if k > 0 && !(v < prev) {
                return false;
            }
            prev = v;
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn distance_examples() {
        assert_abs_diff_eq!(circle_dist(0.1, 0.9), 0.2, epsilon = 1e-15);
        assert_eq!(circle_dist(0.3, 0.3), 0.0);
        assert_eq!(circle_dist(0.0, 0.5), 0.5);
    }

    #[test]
    fn observe_examples() {
        let o = ObservableSpec::neg_log(0.0).unwrap();
        assert_abs_diff_eq!(o.observe(0.1), 2.302585092994046, epsilon = 1e-12);
        assert_eq!(o.observe(0.0), f64::INFINITY);
        let o = ObservableSpec::new(GType::Power { alpha: 2.0 }, 0.0).unwrap();
        assert_abs_diff_eq!(o.observe(0.04), 5.0, epsilon = 1e-12);
        assert_eq!(o.observe(0.0), f64::INFINITY);
        let o = ObservableSpec::new(GType::Bounded { d: 1.0, alpha: 1.0 }, 0.0).unwrap();
        assert_abs_diff_eq!(o.observe(0.25), 0.75, epsilon = 1e-15);
        assert_eq!(o.observe(0.0), 1.0);
    }

    #[test]
    fn inverse_examples() {
        let o = ObservableSpec::neg_log(0.3).unwrap();
        assert_abs_diff_eq!(o.g_inverse(100f64.ln()).unwrap(), 0.01, epsilon = 1e-15);
        let o = ObservableSpec::new(GType::Power { alpha: 2.0 }, 0.3).unwrap();
        assert_abs_diff_eq!(o.g_inverse(5.0).unwrap(), 0.04, epsilon = 1e-15);
        let o = ObservableSpec::new(GType::Bounded { d: 1.0, alpha: 1.0 }, 0.3).unwrap();
        assert_abs_diff_eq!(o.g_inverse(0.75).unwrap(), 0.25, epsilon = 1e-15);
        assert!(o.g_inverse(1.5).is_err());
    }

    #[test]
    fn normalizer_examples() {
        assert_eq!(ObservableSpec::neg_log(0.0).unwrap().normalizer(7.0).unwrap(), 1.0);
        let o = ObservableSpec::new(GType::Power { alpha: 2.0 }, 0.0).unwrap();
        assert_abs_diff_eq!(o.normalizer(5.0).unwrap(), 0.2, epsilon = 1e-15);
        let o = ObservableSpec::new(GType::Bounded { d: 1.0, alpha: 1.0 }, 0.0).unwrap();
        assert_eq!(o.normalizer(0.75).unwrap(), 4.0);
        assert!(o.normalizer(1.0).is_err());
    }

    #[test]
    fn specs_are_validated() {
        assert!(ObservableSpec::neg_log(1.0).is_err());
        assert!(ObservableSpec::new(GType::Power { alpha: 0.0 }, 0.1).is_err());
        assert!(ObservableSpec::new(GType::Bounded { d: f64::INFINITY, alpha: 1.0 }, 0.1).is_err());
    }

    #[test]
    fn all_types_decrease_near_zero() {
        for g in [
            GType::NegLog,
            GType::Power { alpha: 0.7 },
            GType::Bounded { d: 2.0, alpha: 3.0 },
        ] {
            assert!(ObservableSpec::new(g, 0.2).unwrap().check_decreasing(0.5, 500));
        }
    }
}
