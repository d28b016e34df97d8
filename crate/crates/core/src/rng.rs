//! Reproducible Gaussian increments keyed by `(seed, trajectory index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Independent stream for trajectory `index` under master seed `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Endless sequence of `Normal(0, dt)` Brownian increments.
pub struct BrownianIncrements {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl BrownianIncrements {
    pub fn new(seed: u64, index: u64, dt: f64) -> Result<Self> {
        let normal = Normal::new(0.0, dt.sqrt())
            .map_err(|e| Error::InvalidArgument(format!("dt = {dt}: {e}")))?;
        Ok(BrownianIncrements {
            rng: stream(seed, index),
            normal,
        })
    }
}

impl Iterator for BrownianIncrements {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.normal.sample(&mut self.rng))
    }
}

/// Sums consecutive groups of `factor` increments.
pub fn coarsen(increments: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 || !increments.len().is_multiple_of(factor) {
        return Err(Error::InvalidArgument(format!(
            "cannot coarsen {} increments by {factor}",
            increments.len()
        )));
    }
    Ok(increments.chunks(factor).map(|c| c.iter().sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = BrownianIncrements::new(7, 3, 1e-2)
            .unwrap()
            .take(5)
            .collect();
        let b: Vec<f64> = BrownianIncrements::new(7, 3, 1e-2)
            .unwrap()
            .take(5)
            .collect();
        let c: Vec<f64> = BrownianIncrements::new(7, 4, 1e-2)
            .unwrap()
            .take(5)
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn increment_variance() {
        let dt = 1e-3;
        let n = 200_000;
        let v: f64 = BrownianIncrements::new(1, 0, dt)
            .unwrap()
            .take(n)
            .map(|x| x * x)
            .sum::<f64>()
            / n as f64;
        // standard error of the sample second moment is dt * sqrt(2/n)
        assert!((v - dt).abs() < 5.0 * dt * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn coarsen_sums_groups() {
        assert_eq!(coarsen(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![3.0, 7.0]);
        assert!(coarsen(&[1.0, 2.0, 3.0], 2).is_err());
    }
}
