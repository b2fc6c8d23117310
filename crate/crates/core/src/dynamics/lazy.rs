//! Orbits of Lebesgue-random points in 64-bit fixed point.
//!
//! A double carries 53 bits, and `x -> 2x mod 1` discards one of them per
//! step, so floating-point orbits of the doubling map reach `0` after about
//! 53 iterations. A [`LazyPoint`] keeps the top 64 binary digits of a point
//! and draws the digits below them only when the dynamics shift them into
//! view. For integer `beta` this reproduces the exact orbit of a uniformly
//! random real; for other `beta` the map is applied with a 64-bit fraction.

use rand::RngCore;

use crate::error::Result;

/// `beta` split into integer part and a 64-bit binary fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedBeta {
    whole: u64,
    frac: u64,
    value: f64,
}

const TWO_64: f64 = 18_446_744_073_709_551_616.0;

impl FixedBeta {
    pub fn new(beta: f64) -> Result<Self> {
        super::check_beta(beta)?;
        if beta >= 1e18 {
            return Err(crate::error::Error::invalid("beta", "too large for fixed-point stepping"));
        }
        let whole = beta.floor();
        // beta - floor(beta) is exact and has at most 53 significant bits.
        let frac = ((beta - whole) * TWO_64) as u64;
        Ok(FixedBeta {
            whole: whole as u64,
            frac,
            value: beta,
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_integer(&self) -> bool {
        self.frac == 0
    }
}

/// A point of `[0, 1)` whose leading 64 binary digits are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LazyPoint {
    bits: u64,
}

impl LazyPoint {
    /// A Lebesgue-uniform point.
    pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        LazyPoint { bits: rng.next_u64() }
    }

    /// The point whose leading digits are those of `x`.
    pub fn from_f64(x: f64) -> Self {
        let x = x.clamp(0.0, 1.0);
        LazyPoint {
            bits: if x >= 1.0 { 0 } else { (x * TWO_64) as u64 },
        }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Nearest double below the point; always in `[0, 1)`.
    #[inline]
    pub fn value(&self) -> f64 {
        (self.bits >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Applies `x -> beta x mod 1`, drawing the digits shifted into the
    /// 64-bit window from `rng`.
    #[inline]
    pub fn step<R: RngCore + ?Sized>(&mut self, beta: FixedBeta, rng: &mut R) {
        let prod = beta.frac as u128 * self.bits as u128;
        let hi = (prod >> 64) as u64;
        let lo = prod as u64 as u128;
        // The hidden tail U is uniform on [0, 1); carry = floor(lo / 2^64 + beta U).
        let r = rng.next_u64() as u128;
        let tail = lo + beta.whole as u128 * r + ((beta.frac as u128 * r) >> 64);
        let carry = (tail >> 64) as u64;
        self.bits = beta
            .whole
            .wrapping_mul(self.bits)
            .wrapping_add(hi)
            .wrapping_add(carry);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn doubling_does_not_collapse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = FixedBeta::new(2.0).unwrap();
        let mut p = LazyPoint::uniform(&mut rng);
        let mut zeros = 0;
        for _ in 0..10_000 {
            p.step(b, &mut rng);
            if p.value() == 0.0 {
                zeros += 1;
            }
        }
        assert_eq!(zeros, 0);
    }

    #[test]
    fn integer_beta_shifts_digits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = FixedBeta::new(2.0).unwrap();
        let mut p = LazyPoint { bits: 0xC000_0000_0000_0000 };
        p.step(b, &mut rng);
        assert_eq!(p.bits >> 1, 0x4000_0000_0000_0000);
        let b3 = FixedBeta::new(3.0).unwrap();
        let mut p = LazyPoint::from_f64(0.5);
        p.step(b3, &mut rng);
        assert_eq!(p.bits >> 2, LazyPoint::from_f64(0.5).bits >> 2);
    }

    #[test]
    fn agrees_with_floating_point_for_a_few_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for beta in [2.5, 3.0 + 1.0 / 49.0, 1.618_033_988_749_895] {
            let fb = FixedBeta::new(beta).unwrap();
            let x0 = 0.123_456_789;
            let mut p = LazyPoint::from_f64(x0);
            let mut x = x0;
            for _ in 0..10 {
                p.step(fb, &mut rng);
                x = crate::dynamics::step_unchecked(beta, x);
                let d = (p.value() - x).abs();
                assert!(d.min(1.0 - d) < 1e-9, "beta = {beta}: {} vs {x}", p.value());
            }
        }
    }

    #[test]
    fn value_is_below_one() {
        assert!(LazyPoint { bits: u64::MAX }.value() < 1.0);
        assert_eq!(LazyPoint::from_f64(1.0).bits(), 0);
    }
}
