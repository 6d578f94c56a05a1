//! Halton low-discrepancy sequences.
//!
//! Van der Corput radical inverses in the first `dim` prime bases, unscrambled
//! and unleaped, starting at index 1 so the all-zeros point is skipped.

/// First `n` primes, by trial division (n stays small: one prime per
/// stochastic dimension).
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate: u64 = 2;
    while primes.len() < n {
        if primes.iter().all(|&p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Radical inverse of `index` in base `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut digit_weight = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * digit_weight;
        index /= base;
        digit_weight /= base as f64;
    }
    result
}

/// Halton sequence over the unit hypercube [0,1)^dim.
#[derive(Debug, Clone)]
pub struct Halton {
    bases: Vec<u64>,
    next_index: u64,
}

impl Halton {
    pub fn new(dim: usize) -> Self {
        Self {
            bases: first_primes(dim),
            next_index: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.bases.len()
    }

    /// The `index`-th point (index >= 1).
    pub fn point(&self, index: u64) -> Vec<f64> {
        self.bases
            .iter()
            .map(|&b| radical_inverse(index, b))
            .collect()
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let p = self.point(self.next_index);
        self.next_index += 1;
        p
    }

    /// First `count` points mapped affinely into the box given by `intervals`.
    pub fn points_in_box(&self, count: usize, intervals: &[(f64, f64)]) -> Vec<Vec<f64>> {
        assert_eq!(intervals.len(), self.dim());
        (1..=count as u64)
            .map(|i| {
                self.point(i)
                    .iter()
                    .zip(intervals)
                    .map(|(&u, &(a, b))| a + u * (b - a))
                    .collect()
            })
            .collect()
    }
}
