//! Seeded, platform-independent pseudo-random streams.
//!
//! The generator is xoshiro256** with its 256-bit state filled by four
//! successive SplitMix64 outputs of the seed. Uniform doubles take the top
//! 53 bits of a draw; normals use Box–Muller on two uniforms per pair.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::Vector;

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededRng {
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    /// Seeds the state with four successive SplitMix64 outputs of `seed`.
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_MINUS_53
    }

    /// Uniform integer in `[0, n)` without modulo bias (Lemire's method).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let mut m = (self.next_u64() as u128) * (n as u128);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = (self.next_u64() as u128) * (n as u128);
            }
        }
        (m >> 64) as usize
    }

    /// Two independent standard normals from two uniform draws.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // 1 - u lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Independent child stream seeded from one draw of this stream.
    pub fn fork(&mut self) -> SeededRng {
        SeededRng::new(self.next_u64())
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `n` samples from N(0, sigma²). Odd `n` discards the final pair's second value.
pub fn gaussian<S: Scalar>(rng: &mut SeededRng, n: usize, sigma: S) -> Result<Vector<S>> {
    if sigma.is_nan() || sigma < S::zero() || sigma.is_infinite() {
        return Err(Error::param(
            "sigma",
            format!("must be finite and >= 0, got {sigma}"),
        ));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (a, b) = rng.normal_pair();
        out.push(sigma * S::lit(a));
        if out.len() < n {
            out.push(sigma * S::lit(b));
        }
    }
    Ok(Vector::new(out))
}

/// `n` i.i.d. samples from `[lo, hi)`.
pub fn uniform<S: Scalar>(rng: &mut SeededRng, n: usize, lo: S, hi: S) -> Result<Vector<S>> {
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(Error::param(
            "interval",
            format!("need finite lo <= hi, got [{lo}, {hi})"),
        ));
    }
    let width = hi - lo;
    let out = (0..n)
        .map(|_| {
            let v = lo + width * S::lit(rng.next_f64());
            if v >= hi && hi > lo {
                lo
            } else {
                v
            }
        })
        .collect();
    Ok(Vector::new(out))
}
