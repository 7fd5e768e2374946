//! Reproducible uniform stream and the inverse-transform samplers built on it.
//!
//! Every draw goes through [`SeededStream`], a ChaCha20 generator seeded from
//! a `u64`. ChaCha output is specified bit-for-bit, and the transforms below
//! use only `ln`, `sqrt`, `cos` and `tan`, so a seed always regenerates the
//! same values on the same platform.

use std::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Clone)]
pub struct SeededStream {
    rng: ChaCha20Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 / TWO_POW_53
    }

    /// Uniform on the open interval `(0, 1)`; never returns either endpoint.
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / TWO_POW_53
    }

    /// Standard normal via the cosine branch of Box-Muller (two uniforms per draw).
    #[inline]
    pub fn next_standard_normal(&mut self) -> f64 {
        let u1 = self.next_open01();
        let u2 = self.next_unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// Cauchy(0, scale) by inverting the CDF: `scale * tan(pi (u - 1/2))`.
    #[inline]
    pub fn next_cauchy(&mut self, scale: f64) -> f64 {
        let u = self.next_open01();
        scale * (PI * (u - 0.5)).tan()
    }

    /// Laplace(0, scale) by inverting the CDF: `-scale * sgn(u - 1/2) * ln(1 - 2|u - 1/2|)`.
    #[inline]
    pub fn next_laplace(&mut self, scale: f64) -> f64 {
        let centered = self.next_open01() - 0.5;
        let sign = if centered > 0.0 {
            1.0
        } else if centered < 0.0 {
            -1.0
        } else {
            0.0
        };
        -scale * sign * (1.0 - 2.0 * centered.abs()).ln()
    }

    /// Uniform phase on `[0, 2 pi)`.
    #[inline]
    pub fn next_phase(&mut self) -> f64 {
        let phase = 2.0 * PI * self.next_unit();
        // (1 - 2^-53) * 2pi can round up to 2pi
        if phase >= 2.0 * PI {
            f64::from_bits((2.0 * PI).to_bits() - 1)
        } else {
            phase
        }
    }
}
