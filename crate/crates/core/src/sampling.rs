//! Axis-aligned boxes and deterministic sample points inside them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Closed axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { lo, hi }
    }

    /// The cube `[-r, r]^dim`.
    pub fn cube(dim: usize, radius: f64) -> Self {
        Self {
            lo: vec![-radius; dim],
            hi: vec![radius; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_well_formed(&self) -> bool {
        self.lo.len() == self.hi.len() && self.lo.iter().zip(&self.hi).all(|(l, h)| l.is_finite() && h.is_finite() && l <= h)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        let b = Self { lo, hi };
        b.is_well_formed().then_some(b)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    fn at(&self, unit: impl Iterator<Item = f64>) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).zip(unit).map(|((l, h), u)| l + (h - l) * u).collect()
    }

    /// The first `n` points of a Halton sequence mapped into the box.
    pub fn halton(&self, n: usize) -> Vec<Vec<f64>> {
        (1..=n as u64)
            .map(|i| self.at((0..self.dim()).map(|d| radical_inverse(i, PRIMES[d % PRIMES.len()]))))
            .collect()
    }

    /// `n` uniform points drawn from a seeded generator.
    pub fn random(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: Vec<f64> = (0..self.dim()).map(|_| rng.gen::<f64>()).collect();
                self.at(u.into_iter())
            })
            .collect()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut f = 1.0 / base as f64;
    while i > 0 {
        result += f * (i % base) as f64;
        i /= base;
        f /= base as f64;
    }
    result
}

/// Which points a sampled check should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Halton,
    Seeded(u64),
}

impl Sampler {
    pub fn points(self, domain: &BoxDomain, n: usize) -> Vec<Vec<f64>> {
        match self {
            Sampler::Halton => domain.halton(n),
            Sampler::Seeded(seed) => domain.random(n, seed),
        }
    }
}
