//! Factorization of the Gram matrix and the functionals built on it.
//!
//! All access to `K⁻¹` goes through the lower Cholesky factor of `K + jitter·I`.
//! Jitter escalates along a fixed ladder relative to the mean diagonal `d̄`:
//! `0, 1e-12·d̄, 1e-10·d̄, 1e-8·d̄, 1e-6·d̄, 1e-4·d̄`.
//!
//! A rung is accepted only if every squared pivot of the factor is at least
//! [`PIVOT_FLOOR`]`·d̄`. Below that the factor is numerically singular even though
//! the elimination itself did not break down.

use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative symmetry tolerance accepted by [`GramFactorization::factorize`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Minimum squared pivot, relative to the mean diagonal.
pub const PIVOT_FLOOR: f64 = 1e-10;

/// Jitter rungs as multiples of the mean diagonal.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4];

#[derive(Clone, Debug)]
pub struct GramFactorization {
    k: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter_used: f64,
}

impl GramFactorization {
    pub fn factorize(k: DMatrix<f64>) -> Result<Self> {
        let n = k.nrows();
        if n == 0 || k.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: k.ncols(),
            });
        }
        let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut asymmetry = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                asymmetry = asymmetry.max((k[(i, j)] - k[(j, i)]).abs());
            }
        }
        let rel = if scale > 0.0 {
            asymmetry / scale
        } else {
            asymmetry
        };
        if !(rel <= SYMMETRY_TOL) {
            return Err(Error::NotSymmetric { asymmetry: rel });
        }

        let mean_diag = k.diagonal().mean();
        if !(mean_diag > 0.0) {
            return Err(Error::NotPositiveDefinite { max_jitter: 0.0 });
        }
        let floor = PIVOT_FLOOR * mean_diag;
        for rung in JITTER_LADDER {
            let jitter = rung * mean_diag;
            let mut shifted = k.clone();
            for i in 0..n {
                shifted[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                let l = chol.l_dirty();
                if (0..n).all(|i| l[(i, i)] * l[(i, i)] >= floor) {
                    return Ok(Self {
                        k,
                        chol,
                        jitter_used: jitter,
                    });
                }
            }
        }
        Err(Error::NotPositiveDefinite {
            max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * mean_diag,
        })
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// The unjittered matrix as supplied.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Lower-triangular factor `L` with `L·Lᵀ = K + jitter·I`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub(crate) fn factor_ref(&self) -> &DMatrix<f64> {
        // upper triangle of l_dirty holds stale input values; callers read i >= j only
        self.chol.l_dirty()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: len,
            });
        }
        Ok(())
    }

    /// `(K + jitter·I)⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v.len())?;
        Ok(self.chol.solve(v))
    }

    /// Column-wise solve for a block of right-hand sides.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_len(b.nrows())?;
        Ok(self.chol.solve(b))
    }

    /// `L⁻¹ v`, the whitened vector with `‖L⁻¹v‖² = vᵀK⁻¹v`.
    pub fn whiten(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v.len())?;
        let l = self.factor_ref();
        let n = self.n();
        let mut out = v.clone();
        for i in 0..n {
            let mut acc = out[i];
            for j in 0..i {
                acc -= l[(i, j)] * out[j];
            }
            out[i] = acc / l[(i, i)];
        }
        Ok(out)
    }

    /// `L⁻¹ B` for a block of right-hand sides.
    pub fn whiten_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_len(b.nrows())?;
        let l = self.chol.l();
        l.solve_lower_triangular(b)
            .ok_or(Error::NotPositiveDefinite {
                max_jitter: self.jitter_used,
            })
    }

    /// `log|K + jitter·I| = 2·Σ log Lᵢᵢ`.
    pub fn logdet(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
    }

    /// `|K|^{1/n}`, the isotropic posterior's variance.
    pub fn det_root(&self) -> f64 {
        (self.logdet() / self.n() as f64).exp()
    }

    /// `tr (K + jitter·I)⁻¹ = ‖L⁻¹‖²_F`.
    pub fn trace_inverse(&self) -> f64 {
        let n = self.n();
        let l = self.factor_ref();
        // Column j of L⁻¹ by forward substitution on e_j; entries above j vanish.
        let mut total = 0.0;
        let mut col = vec![0.0; n];
        for j in 0..n {
            col[j] = 1.0 / l[(j, j)];
            let mut sq = col[j] * col[j];
            for i in (j + 1)..n {
                let mut acc = 0.0;
                for m in j..i {
                    acc -= l[(i, m)] * col[m];
                }
                col[i] = acc / l[(i, i)];
                sq += col[i] * col[i];
            }
            total += sq;
        }
        total
    }

    /// `vᵀ(K + jitter·I)⁻¹v`, the squared RKHS norm of the interpolant of `v`.
    pub fn rkhs_norm_sq(&self, v: &DVector<f64>) -> Result<f64> {
        let w = self.whiten(v)?;
        Ok(w.norm_squared())
    }

    /// Precision matrix `(K + jitter·I)⁻¹`, assembled from the factor.
    pub fn precision(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_pd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::rng::rng_from_seed(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut k = &a * a.transpose() / n as f64;
        for i in 0..n {
            k[(i, i)] += 0.1;
        }
        // exact symmetry
        DMatrix::from_fn(n, n, |i, j| if i <= j { k[(i, j)] } else { k[(j, i)] })
    }

    fn eigenvalues(k: &DMatrix<f64>) -> Vec<f64> {
        SymmetricEigen::new(k.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    #[test]
    fn identity_has_identity_factor_and_no_jitter() {
        let f = GramFactorization::factorize(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(f.jitter_used(), 0.0);
        assert_eq!(f.factor(), DMatrix::identity(3, 3));
    }

    #[test]
    fn near_singular_matrix_climbs_the_ladder() {
        let r = 0.999_999_999_999;
        let k = DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
        let f = GramFactorization::factorize(k.clone()).unwrap();
        assert!(f.jitter_used() > 0.0);
        assert!(JITTER_LADDER.iter().any(|&rung| rung == f.jitter_used()));
        let l = f.factor();
        let shifted = &k + DMatrix::identity(2, 2) * f.jitter_used();
        let err = (&l * l.transpose() - &shifted).norm() / shifted.norm();
        assert!(err <= 1e-8, "reconstruction error {err}");
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        // eigenvalues 1.9 and -0.1
        let k = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 1.0, 0.9]);
        assert!(matches!(
            GramFactorization::factorize(k),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            GramFactorization::factorize(k),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn reconstruction_within_tolerance() {
        for seed in 0..5 {
            let k = random_pd(12, seed);
            let f = GramFactorization::factorize(k.clone()).unwrap();
            let l = f.factor();
            let err = (&l * l.transpose() - &k).norm() / k.norm();
            assert!(err <= 1e-8);
        }
    }

    #[test]
    fn solve_examples() {
        let v = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let f = GramFactorization::factorize(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(f.solve(&v).unwrap(), v);
        let f2 = GramFactorization::factorize(DMatrix::identity(3, 3) * 2.0).unwrap();
        assert!((f2.solve(&v).unwrap() - &v / 2.0).norm() < 1e-15);
        assert!(matches!(
            f.solve(&DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
        for seed in 10..15 {
            let k = random_pd(20, seed);
            let f = GramFactorization::factorize(k.clone()).unwrap();
            let v = DVector::from_fn(20, |i, _| (i as f64).sin() + 0.5);
            let residual = (&k * f.solve(&v).unwrap() - &v).norm() / v.norm();
            assert!(residual <= 1e-8);
        }
    }

    #[test]
    fn logdet_examples() {
        let f = GramFactorization::factorize(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(f.logdet(), 0.0);
        let f = GramFactorization::factorize(DMatrix::identity(3, 3) * 2.0).unwrap();
        assert!((f.logdet() - 3.0 * 2f64.ln()).abs() < 1e-14);
        for seed in 20..25 {
            let k = random_pd(15, seed);
            let oracle: f64 = eigenvalues(&k).iter().map(|l| l.ln()).sum();
            let f = GramFactorization::factorize(k).unwrap();
            assert!((f.logdet() - oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn logdet_is_additive_under_scaling() {
        let k = random_pd(10, 99);
        let base = GramFactorization::factorize(k.clone()).unwrap().logdet();
        for c in [0.5, 2.0, 10.0] {
            let scaled = GramFactorization::factorize(&k * c).unwrap().logdet();
            assert!((scaled - (10.0 * f64::ln(c) + base)).abs() < 1e-8);
        }
    }

    #[test]
    fn trace_inverse_examples() {
        let f = GramFactorization::factorize(DMatrix::identity(5, 5)).unwrap();
        assert!((f.trace_inverse() - 5.0).abs() < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        let f = GramFactorization::factorize(d).unwrap();
        assert!((f.trace_inverse() - 1.75).abs() < 1e-15);
        for seed in 30..35 {
            let k = random_pd(15, seed);
            let oracle: f64 = eigenvalues(&k).iter().map(|l| 1.0 / l).sum();
            let f = GramFactorization::factorize(k).unwrap();
            assert!((f.trace_inverse() - oracle).abs() <= 1e-8 * oracle.max(1.0));
        }
    }

    #[test]
    fn rkhs_norm_examples() {
        let y = DVector::from_vec(vec![1.0, -1.0, 1.0, 1.0]);
        let f = GramFactorization::factorize(DMatrix::identity(4, 4)).unwrap();
        assert!((f.rkhs_norm_sq(&y).unwrap() - 4.0).abs() < 1e-15);
        let f = GramFactorization::factorize(DMatrix::identity(4, 4) * 2.0).unwrap();
        assert!((f.rkhs_norm_sq(&y).unwrap() - 2.0).abs() < 1e-15);
        for seed in 40..45 {
            let k = random_pd(12, seed);
            let inv = k.clone().try_inverse().unwrap();
            let v = DVector::from_fn(12, |i, _| (i as f64 * 0.7).cos());
            let oracle = (v.transpose() * &inv * &v)[(0, 0)];
            let f = GramFactorization::factorize(k).unwrap();
            let q = f.rkhs_norm_sq(&v).unwrap();
            assert!(q > 0.0);
            assert!((q - oracle).abs() <= 1e-8 * oracle.abs().max(1.0));
            assert!((q - f.solve(&v).unwrap().dot(&v)).abs() < 1e-10 * q.max(1.0));
        }
    }
}
