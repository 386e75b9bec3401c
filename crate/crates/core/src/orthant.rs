//! Gaussian orthant probabilities and the closed-form complexity measure.
//!
//! The orthant probability `P_Y = P[sign Υ = Y]` for `Υ ~ N(0, K)` is the evidence of
//! a GP classifier with zero-one likelihood, and `log(1/P_Y) = KL(Q_GP ‖ P_GP)`.
//! It has no closed form, so it is estimated here by naive Monte Carlo or by the GHK
//! sequential-conditioning importance sampler. Everything is carried in log-domain
//! since `P_Y` underflows quickly with `n`.
//!
//! The complexity measure
//!
//! ```text
//! A(k, X, Y) = n(log 2 - 1/2) + |K|^{1/n}·[(1/2 - 1/π)·tr K⁻¹ + (1/π)·YᵀK⁻¹Y]
//! ```
//!
//! is exact and equals `KL(Q_iso ‖ P_GP) ≥ log(1/P_Y)`.

use crate::gram::GramFactorization;
use crate::rng::rng_from_seed;
use crate::sampler::{check_labels, std_normal_above};
use crate::stats::{binomial_se, log_normal_sf, log_sum_exp, mean_and_se, CompensatedSum};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthantMethod {
    NaiveMc,
    Ghk,
}

/// Estimate of `log(1/P_Y)`.
///
/// `std_error` is on the log scale (delta method). A naive estimate with zero hits
/// has `log_inv_py = +∞` and `failed = true`; all it certifies is that `P_Y` is small.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthantEstimate {
    pub log_inv_py: f64,
    pub std_error: f64,
    pub method: OrthantMethod,
    pub draws: u64,
    #[serde(default)]
    pub failed: bool,
}

impl OrthantEstimate {
    /// Point estimate of `P_Y`.
    pub fn probability(&self) -> f64 {
        (-self.log_inv_py).exp()
    }

    /// Standard error of the `P_Y` estimate.
    pub fn probability_se(&self) -> f64 {
        self.std_error * self.probability()
    }
}

fn check_instance(f: &GramFactorization, labels: &[f64], draws: u64) -> Result<()> {
    check_labels(labels)?;
    if labels.len() != f.n() {
        return Err(Error::DimensionMismatch {
            expected: f.n(),
            found: labels.len(),
        });
    }
    if draws == 0 {
        return Err(Error::InvalidParameter("draws must be >= 1".into()));
    }
    Ok(())
}

/// Fraction of prior draws `Υ = L·e` landing in the orthant.
pub fn orthant_naive_mc(
    f: &GramFactorization,
    labels: &[f64],
    draws: u64,
    seed: u64,
) -> Result<OrthantEstimate> {
    check_instance(f, labels, draws)?;
    let n = f.n();
    let l = f.factor();
    let mut rng = rng_from_seed(seed);
    let mut e = vec![0.0; n];
    let mut hits = 0u64;
    for _ in 0..draws {
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let inside = (0..n).all(|i| {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += l[(i, j)] * e[j];
            }
            acc * labels[i] > 0.0
        });
        if inside {
            hits += 1;
        }
    }
    if hits == 0 {
        return Ok(OrthantEstimate {
            log_inv_py: f64::INFINITY,
            std_error: 0.0,
            method: OrthantMethod::NaiveMc,
            draws,
            failed: true,
        });
    }
    let p = hits as f64 / draws as f64;
    Ok(OrthantEstimate {
        log_inv_py: -p.ln(),
        std_error: binomial_se(p, draws as usize) / p,
        method: OrthantMethod::NaiveMc,
        draws,
        failed: false,
    })
}

/// GHK importance sampler in natural coordinate order.
///
/// With `Z = diag(Y)·Υ = L'e` and `L' = diag(Y)·L·diag(Y)` (still lower-triangular
/// with positive diagonal), the orthant is `Z > 0`. Coordinate `i` then requires
/// `eᵢ > aᵢ = -Σ_{j<i} L'ᵢⱼ eⱼ / L'ᵢᵢ`: each `eᵢ` is drawn from its truncated
/// conditional and the weight accumulates `Π P[eᵢ > aᵢ]`, whose mean is `P_Y`.
pub fn orthant_ghk(
    f: &GramFactorization,
    labels: &[f64],
    draws: u64,
    seed: u64,
) -> Result<OrthantEstimate> {
    check_instance(f, labels, draws)?;
    let n = f.n();
    let l = f.factor();
    let lp = DMatrix::from_fn(n, n, |i, j| labels[i] * labels[j] * l[(i, j)]);
    let mut rng = rng_from_seed(seed);
    let mut e = vec![0.0; n];
    let mut log_weights = Vec::with_capacity(draws as usize);
    for _ in 0..draws {
        let mut log_w = 0.0;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..i {
                acc += lp[(i, j)] * e[j];
            }
            let a = -acc / lp[(i, i)];
            log_w += log_normal_sf(a);
            e[i] = std_normal_above(a, &mut rng);
        }
        log_weights.push(log_w);
    }
    let log_mean = log_sum_exp(&log_weights) - (draws as f64).ln();
    // Relative weights w/P̂ have mean one; their SE is the SE of log P̂.
    let relative: Vec<f64> = log_weights.iter().map(|lw| (lw - log_mean).exp()).collect();
    let (_, se) = mean_and_se(&relative);
    Ok(OrthantEstimate {
        log_inv_py: -log_mean,
        std_error: se,
        method: OrthantMethod::Ghk,
        draws,
        failed: false,
    })
}

/// GHK on a reordered problem: coordinate `order[i]` is conditioned `i`-th.
pub fn orthant_ghk_ordered(
    k: &DMatrix<f64>,
    labels: &[f64],
    order: &[usize],
    draws: u64,
    seed: u64,
) -> Result<OrthantEstimate> {
    let n = labels.len();
    let mut seen = vec![false; n];
    if order.len() != n
        || order
            .iter()
            .any(|&i| i >= n || std::mem::replace(&mut seen[i], true))
    {
        return Err(Error::InvalidParameter(
            "order must be a permutation of 0..n".into(),
        ));
    }
    let permuted = DMatrix::from_fn(n, n, |i, j| k[(order[i], order[j])]);
    let permuted_labels: Vec<f64> = order.iter().map(|&i| labels[i]).collect();
    let f = GramFactorization::factorize(permuted)?;
    orthant_ghk(&f, &permuted_labels, draws, seed)
}

/// Exact `A(k, X, Y)` from the factorization.
pub fn complexity_a(f: &GramFactorization, labels: &[f64]) -> Result<f64> {
    check_labels(labels)?;
    let n = f.n();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let y = nalgebra::DVector::from_column_slice(labels);
    let det_root = f.det_root();
    let quad = f.rkhs_norm_sq(&y)?;
    let trace = f.trace_inverse();
    let nf = n as f64;
    let value = nf * (LN_2 - 0.5) + det_root * ((0.5 - 1.0 / PI) * trace + quad / PI);
    Ok(value)
}

/// Monte-Carlo estimate of `KL(Q_iso ‖ P_GP)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    pub std_error: f64,
    pub draws: u64,
}

/// Averages the exact log-density ratio over draws from `Q_iso`:
///
/// ```text
/// log Q_iso(Υ)/P_GP(Υ) = n log 2 - ½ΥᵀΥ/|K|^{1/n} + ½ΥᵀK⁻¹Υ
/// ```
///
/// (the normalizing constants cancel because `|K|^{1/n·n} = |K|`). Used as an
/// oracle for [`complexity_a`].
pub fn kl_iso_mc_check(
    f: &GramFactorization,
    labels: &[f64],
    draws: u64,
    seed: u64,
) -> Result<KlEstimate> {
    check_instance(f, labels, draws)?;
    let n = f.n();
    let scale_sq = f.det_root();
    let sd = scale_sq.sqrt();
    let nf = n as f64;
    let mut rng = rng_from_seed(seed);
    let mut upsilon = nalgebra::DVector::zeros(n);
    let mut values = Vec::with_capacity(draws as usize);
    for _ in 0..draws {
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            upsilon[i] = labels[i] * sd * z.abs();
        }
        let iso_quad = upsilon.norm_squared() / scale_sq;
        let gp_quad = f.rkhs_norm_sq(&upsilon)?;
        values.push(nf * LN_2 - 0.5 * iso_quad + 0.5 * gp_quad);
    }
    let (value, std_error) = mean_and_se(&values);
    Ok(KlEstimate {
        value,
        std_error,
        draws,
    })
}

/// `1/4 + arcsin(ρ)/(2π)`: the mass of each same-sign quadrant of a standard
/// bivariate normal with correlation `ρ`.
pub fn bivariate_same_sign_probability(rho: f64) -> f64 {
    0.25 + rho.asin() / (2.0 * PI)
}

/// `log(1/P_Y)` through the log-sum-exp representation, by tensor-product Simpson
/// quadrature over the orthant (truncated at `radius` prior standard deviations).
///
/// ```text
/// log(1/P_Y) = -log ∫_{sign Υ = Y} exp(-½‖f_Υ‖²_H) dΥ + ½ log((2π)ⁿ|K|)
/// ```
///
/// Cost grows as `intervals^n`; intended for `n ≤ 3`.
pub fn log_inv_py_quadrature(
    f: &GramFactorization,
    labels: &[f64],
    intervals: usize,
    radius: f64,
) -> Result<f64> {
    check_labels(labels)?;
    let n = f.n();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let intervals = intervals + intervals % 2;
    let precision = f.precision();
    let k = f.matrix();
    let upper: Vec<f64> = (0..n)
        .map(|i| radius * (k[(i, i)] + f.jitter_used()).sqrt())
        .collect();
    let weight = |idx: usize| -> f64 {
        if idx == 0 || idx == intervals {
            1.0
        } else if idx % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let points = intervals + 1;
    let total_points = points.pow(n as u32);
    let mut acc = CompensatedSum::new();
    let mut upsilon = vec![0.0; n];
    for flat in 0..total_points {
        let mut rem = flat;
        let mut w = 1.0;
        for i in 0..n {
            let idx = rem % points;
            rem /= points;
            let h = upper[i] / intervals as f64;
            upsilon[i] = labels[i] * idx as f64 * h;
            w *= weight(idx) * h / 3.0;
        }
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += upsilon[i] * precision[(i, j)] * upsilon[j];
            }
        }
        acc.add(w * (-0.5 * quad).exp());
    }
    let integral = acc.value();
    Ok(-integral.ln() + 0.5 * (n as f64 * (2.0 * PI).ln() + f.logdet()))
}
