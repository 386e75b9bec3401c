//! Small synthetic tasks for end-to-end tests.

use super::{normalize_row, Dataset, DatasetSource};
use crate::rng::rng_from_seed;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

fn check(n: usize, d0: usize, min_dim: usize) -> Result<()> {
    if n == 0 || d0 < min_dim {
        return Err(Error::InvalidParameter(format!(
            "need n >= 1 and d0 >= {min_dim}, got n = {n}, d0 = {d0}"
        )));
    }
    Ok(())
}

/// Two unit-variance spherical clusters centred at `±(separation/2)·e₁`, fair labels.
pub fn synthetic_gaussians(n: usize, d0: usize, separation: f64, seed: u64) -> Result<Dataset> {
    check(n, d0, 1)?;
    if !(separation >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "separation must be >= 0, got {separation}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut x: Vec<f64> = (0..d0).map(|_| rng.sample(StandardNormal)).collect();
        x[0] += y * separation / 2.0;
        normalize_row(&mut x)?;
        xs.push(x);
        ys.push(y);
    }
    Dataset::new(xs, ys, DatasetSource::SyntheticGaussians, seed)
}

/// XOR of the signs of the first two coordinates; remaining coordinates are noise
/// at a tenth of the scale.
pub fn synthetic_xor(n: usize, d0: usize, seed: u64) -> Result<Dataset> {
    check(n, d0, 2)?;
    let mut rng = rng_from_seed(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x: Vec<f64> = (0..d0)
            .map(|j| {
                let z: f64 = rng.sample(StandardNormal);
                if j < 2 {
                    z
                } else {
                    0.1 * z
                }
            })
            .collect();
        let y = if x[0] * x[1] >= 0.0 { 1.0 } else { -1.0 };
        normalize_row(&mut x)?;
        xs.push(x);
        ys.push(y);
    }
    Dataset::new(xs, ys, DatasetSource::SyntheticXor, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_normalized() {
        let a = synthetic_gaussians(50, 4, 3.0, 1).unwrap();
        assert_eq!(a, synthetic_gaussians(50, 4, 3.0, 1).unwrap());
        assert_ne!(a, synthetic_gaussians(50, 4, 3.0, 2).unwrap());
        for x in a.inputs() {
            assert!((x.iter().map(|v| v * v).sum::<f64>() - 4.0).abs() < 4e-9);
        }
        let b = synthetic_xor(50, 3, 1).unwrap();
        assert_eq!(b.dim(), 3);
        assert!(b.labels().iter().any(|&y| y > 0.0) && b.labels().iter().any(|&y| y < 0.0));
        assert!(synthetic_xor(5, 1, 0).is_err());
        assert!(synthetic_gaussians(0, 2, 1.0, 0).is_err());
    }

    #[test]
    fn wide_separation_splits_on_first_coordinate() {
        let d = synthetic_gaussians(200, 4, 10.0, 3).unwrap();
        let agree = d
            .inputs()
            .iter()
            .zip(d.labels())
            .filter(|(x, &y)| x[0] * y > 0.0)
            .count();
        assert!(agree >= 199);
    }

    #[test]
    fn zero_separation_labels_are_independent_of_inputs() {
        let d = synthetic_gaussians(4000, 3, 0.0, 4).unwrap();
        let agree = d
            .inputs()
            .iter()
            .zip(d.labels())
            .filter(|(x, &y)| x[0] * y > 0.0)
            .count() as f64
            / 4000.0;
        // se = 0.5/√4000 ≈ 0.0079
        assert!((agree - 0.5).abs() < 0.032);
    }
}
