//! Risk bounds for the Gibbs classifier and for kernel interpolators.
//!
//! Bounds above 1 are reported as computed, never clipped; [`is_vacuous`] flags them.

use crate::gram::GramFactorization;
use crate::orthant::{complexity_a, OrthantEstimate};
use crate::{Error, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::E;

pub fn is_vacuous(bound: f64) -> bool {
    bound >= 1.0
}

fn check_n_delta(n: usize, delta: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    Ok(())
}

/// PAC-Bayes bound on the Gibbs error of a posterior consistent with the training set:
/// `1 - exp(-(KL + log(2n/δ)) / (n - 1))`.
pub fn gibbs_bound(kl: f64, n: usize, delta: f64) -> Result<f64> {
    check_n_delta(n, delta)?;
    if kl.is_nan() || kl < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "KL must be non-negative, got {kl}"
        )));
    }
    let nf = n as f64;
    let exponent = (kl + (2.0 * nf / delta).ln()) / (nf - 1.0);
    Ok(-(-exponent).exp_m1())
}

/// Risk bound for the interpolator of the centroidal labels `Y`: `e · gibbs_bound(A)`.
pub fn bpm_bound_centroid(complexity: f64, n: usize, delta: f64) -> Result<f64> {
    Ok(E * gibbs_bound(complexity, n, delta)?)
}

/// Centre-of-mass bound evaluated at an estimated `log(1/P_Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComBound {
    /// Bound at the point estimate.
    pub point: f64,
    /// Bound at `log(1/P̂_Y) + 2·SE`.
    pub conservative: f64,
}

pub fn bpm_bound_com(est: &OrthantEstimate, n: usize, delta: f64) -> Result<ComBound> {
    let point = E * gibbs_bound(est.log_inv_py, n, delta)?;
    let conservative = E * gibbs_bound(est.log_inv_py + 2.0 * est.std_error, n, delta)?;
    Ok(ComBound {
        point,
        conservative,
    })
}

/// Rademacher bound `4·√(YᵀK⁻¹Y / n)` with its confidence term left out.
pub fn rademacher_bound(rkhs_norm_sq: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(rkhs_norm_sq >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "squared norm must be non-negative, got {rkhs_norm_sq}"
        )));
    }
    Ok(4.0 * (rkhs_norm_sq / n as f64).sqrt())
}

/// C-bound on the Bayes error, `1 - (1 - 2ε)² / α`.
///
/// Only informative when `ε ≤ 1/2`; see [`c_bound_applies`].
pub fn c_bound(eps_gibbs: f64, alpha_gibbs: f64) -> Result<f64> {
    if !(alpha_gibbs > 0.0 && alpha_gibbs <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Gibbs agreement must lie in (0, 1], got {alpha_gibbs}"
        )));
    }
    if !(0.0..=1.0).contains(&eps_gibbs) {
        return Err(Error::InvalidParameter(format!(
            "Gibbs error must lie in [0, 1], got {eps_gibbs}"
        )));
    }
    let margin = 1.0 - 2.0 * eps_gibbs;
    Ok(1.0 - margin * margin / alpha_gibbs)
}

pub fn c_bound_applies(eps_gibbs: f64) -> bool {
    eps_gibbs <= 0.5
}

/// Optimistic Gibbs-BPM bound: C-bound plus the BPM approximation error `Δ`.
pub fn optimistic_bpm_bound(eps_gibbs: f64, alpha_gibbs: f64, delta_approx: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta_approx) {
        return Err(Error::InvalidParameter(format!(
            "BPM approximation error must lie in [0, 1], got {delta_approx}"
        )));
    }
    Ok(c_bound(eps_gibbs, alpha_gibbs)? + delta_approx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VacuityFlags {
    pub gibbs: bool,
    pub bpm_centroid: bool,
    pub bpm_com: bool,
    pub rademacher: bool,
}

/// Every bound and complexity term for one `(kernel, dataset, n, δ)` configuration.
///
/// `rademacher_bound` omits the Rademacher confidence term, so it understates that
/// bound slightly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub delta: f64,
    /// `A(k, X, Y) = KL(Q_iso ‖ P_GP)`.
    pub kl_iso: f64,
    pub log_inv_py: Option<OrthantEstimate>,
    pub gibbs_bound: f64,
    pub bpm_bound_centroid: f64,
    pub bpm_bound_com: Option<ComBound>,
    pub rademacher_bound: f64,
    pub c_bound: Option<f64>,
    pub jitter_used: f64,
    pub vacuous: VacuityFlags,
}

impl BoundReport {
    /// Computes the closed-form bounds; the orthant estimate is optional since it is
    /// only feasible at small `n`.
    pub fn compute(
        f: &GramFactorization,
        labels: &[f64],
        delta: f64,
        log_inv_py: Option<OrthantEstimate>,
    ) -> Result<Self> {
        let n = f.n();
        let kl_iso = complexity_a(f, labels)?;
        let gibbs = gibbs_bound(kl_iso, n, delta)?;
        let centroid = bpm_bound_centroid(kl_iso, n, delta)?;
        let norm_sq = f.rkhs_norm_sq(&DVector::from_column_slice(labels))?;
        let rademacher = rademacher_bound(norm_sq, n)?;
        let com = log_inv_py
            .as_ref()
            .map(|est| bpm_bound_com(est, n, delta))
            .transpose()?;
        Ok(Self {
            n,
            delta,
            kl_iso,
            log_inv_py,
            gibbs_bound: gibbs,
            bpm_bound_centroid: centroid,
            bpm_bound_com: com,
            rademacher_bound: rademacher,
            c_bound: None,
            jitter_used: f.jitter_used(),
            vacuous: VacuityFlags {
                gibbs: is_vacuous(gibbs),
                bpm_centroid: is_vacuous(centroid),
                bpm_com: com.map(|c| is_vacuous(c.point)).unwrap_or(false),
                rademacher: is_vacuous(rademacher),
            },
        })
    }

    /// Whether the centre-of-mass bound sits below the centroidal one, allowing the
    /// estimate to be off by `se_multiple` standard errors.
    pub fn com_ordering_holds(&self, se_multiple: f64) -> Option<bool> {
        let est = self.log_inv_py.as_ref()?;
        let slack_bound = E * gibbs_bound(
            (est.log_inv_py - se_multiple * est.std_error).max(0.0),
            self.n,
            self.delta,
        )
        .ok()?;
        Some(slack_bound <= self.bpm_bound_centroid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthant::OrthantMethod;
    use nalgebra::DMatrix;
    use std::f64::consts::LN_2;

    #[test]
    fn gibbs_bound_examples() {
        assert!((gibbs_bound(0.0, 2, 1.0).unwrap() - 0.75).abs() < 1e-15);
        // 1 - exp(-(100 log 2 + log 2000) / 99)
        let expected = 1.0 - (-(100.0 * LN_2 + 2000f64.ln()) / 99.0).exp();
        let v = gibbs_bound(100.0 * LN_2, 100, 0.1).unwrap();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.540).abs() < 5e-4);
        assert_eq!(gibbs_bound(f64::INFINITY, 100, 0.1).unwrap(), 1.0);
        assert!(gibbs_bound(1.0, 1, 0.1).is_err());
        assert!(gibbs_bound(1.0, 10, 0.0).is_err());
        assert!(gibbs_bound(-1.0, 10, 0.1).is_err());
    }

    #[test]
    fn gibbs_bound_is_monotone() {
        let mut prev = 0.0;
        for i in 0..200 {
            let v = gibbs_bound(i as f64 * 0.5, 50, 0.1).unwrap();
            assert!(v > prev);
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
        let mut prev = 0.0;
        for delta in [0.9, 0.5, 0.1, 0.01, 1e-4] {
            let v = gibbs_bound(5.0, 50, delta).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn centroid_bound_is_e_times_gibbs() {
        let v = bpm_bound_centroid(100.0 * LN_2, 100, 0.1).unwrap();
        assert!((v - 1.468).abs() < 2e-3);
        assert!(is_vacuous(v));
        for (a, n, d) in [(0.3, 5, 0.2), (12.0, 40, 0.05), (800.0, 1000, 0.1)] {
            let ratio = bpm_bound_centroid(a, n, d).unwrap() / gibbs_bound(a, n, d).unwrap();
            assert!((ratio - E).abs() < 1e-12);
        }
        let large_n = bpm_bound_centroid(0.0, 10_000_000, 0.1).unwrap();
        assert!(large_n < 1e-5);
    }

    #[test]
    fn com_bound_examples() {
        let est = OrthantEstimate {
            log_inv_py: 8.0 * LN_2,
            std_error: 0.0,
            method: OrthantMethod::Ghk,
            draws: 1,
            failed: false,
        };
        let b = bpm_bound_com(&est, 8, 0.1).unwrap();
        assert_eq!(b.point, b.conservative);
        // identity kernel: log(1/P_Y) = A = n log 2
        assert_eq!(b.point, bpm_bound_centroid(8.0 * LN_2, 8, 0.1).unwrap());
        let noisy = OrthantEstimate {
            std_error: 0.1,
            ..est
        };
        let b = bpm_bound_com(&noisy, 8, 0.1).unwrap();
        assert!(b.conservative > b.point);
    }

    #[test]
    fn rademacher_examples() {
        assert_eq!(rademacher_bound(10.0, 10).unwrap(), 4.0);
        // K = 4I: YᵀK⁻¹Y = n/4
        assert_eq!(rademacher_bound(2.5, 10).unwrap(), 2.0);
    }

    #[test]
    fn c_bound_examples() {
        assert_eq!(c_bound(0.5, 0.3).unwrap(), 1.0);
        assert!((c_bound(0.25, 1.0).unwrap() - 0.75).abs() < 1e-15);
        assert!(c_bound(0.25, 0.25).unwrap().abs() < 1e-15);
        assert!(c_bound(0.25, 0.0).is_err());
        assert!(!c_bound_applies(0.6));
    }

    #[test]
    fn optimistic_examples() {
        assert_eq!(
            optimistic_bpm_bound(0.1, 0.7, 0.0).unwrap(),
            c_bound(0.1, 0.7).unwrap()
        );
        assert!((optimistic_bpm_bound(0.25, 0.25, 0.05).unwrap() - 0.05).abs() < 1e-15);
        assert!(is_vacuous(optimistic_bpm_bound(0.25, 1.0, 1.0).unwrap()));
    }

    #[test]
    fn report_on_identity_kernel() {
        let f = GramFactorization::factorize(DMatrix::identity(6, 6)).unwrap();
        let y = [1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let est = OrthantEstimate {
            log_inv_py: 6.0 * LN_2,
            std_error: 0.0,
            method: OrthantMethod::Ghk,
            draws: 10,
            failed: false,
        };
        let r = BoundReport::compute(&f, &y, 0.1, Some(est)).unwrap();
        assert!((r.kl_iso - 6.0 * LN_2).abs() < 1e-12);
        assert_eq!(r.bpm_bound_centroid, E * r.gibbs_bound);
        assert_eq!(r.rademacher_bound, 4.0);
        assert!(r.vacuous.rademacher);
        assert!((r.bpm_bound_com.unwrap().point - r.bpm_bound_centroid).abs() < 1e-12);
        assert_eq!(r.com_ordering_holds(4.0), Some(true));
        assert_eq!(r.jitter_used, 0.0);
    }
}
