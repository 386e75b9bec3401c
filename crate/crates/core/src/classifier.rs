//! Kernel interpolator and the Gibbs, Bayes, BPM and margin-scaled predictors.
//!
//! A posterior sample `Υ` acts through its interpolant `f_Υ(x) = K_xX K⁻¹Υ`. A Gibbs
//! vote adds predictive noise `ξ ~ N(0, K_xx - K_xX K⁻¹ K_Xx)`, drawn afresh for every
//! ensemble member. The Bayes prediction is the majority vote. The BPM prediction is
//! the sign of the interpolant of the posterior mean labels, where the noise averages out.
//!
//! `sign(0)` is `+1` throughout; Bayes ties are counted.

use crate::gram::GramFactorization;
use crate::kernel::{gram_vector, kernel_eval, KernelSpec};
use crate::rng::stream;
use crate::sampler::PosteriorSamples;
use crate::sign;
use crate::stats::{mean_and_se, CompensatedSum};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::E;

/// Interpolation coefficients `K⁻¹Υ`, solved once and reused across test points.
#[derive(Debug, Clone)]
pub struct Interpolant {
    coef: DVector<f64>,
}

impl Interpolant {
    pub fn new(f: &GramFactorization, labels: &[f64]) -> Result<Self> {
        let coef = f.solve(&DVector::from_column_slice(labels))?;
        Ok(Self { coef })
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coef
    }

    pub fn eval(&self, kx: &DVector<f64>) -> Result<f64> {
        if kx.len() != self.coef.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coef.len(),
                found: kx.len(),
            });
        }
        Ok(kx.dot(&self.coef))
    }
}

/// `f_Υ(x) = K_xX K⁻¹Υ`.
pub fn interpolate(f: &GramFactorization, labels: &[f64], kx: &DVector<f64>) -> Result<f64> {
    Interpolant::new(f, labels)?.eval(kx)
}

/// Predictive variance `K_xx - K_xX K⁻¹ K_Xx` clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveVariance {
    pub value: f64,
    /// The raw value was negative and has been clamped.
    pub clamped: bool,
}

pub fn predictive_variance_from(
    f: &GramFactorization,
    kxx: f64,
    kx: &DVector<f64>,
) -> Result<PredictiveVariance> {
    let explained = f.rkhs_norm_sq(kx)?;
    Ok(clamp_variance(kxx - explained))
}

fn clamp_variance(raw: f64) -> PredictiveVariance {
    if raw < 0.0 {
        PredictiveVariance {
            value: 0.0,
            clamped: true,
        }
    } else {
        PredictiveVariance {
            value: raw,
            clamped: false,
        }
    }
}

pub fn predictive_variance(
    spec: &KernelSpec,
    f: &GramFactorization,
    xs: &[Vec<f64>],
    x: &[f64],
) -> Result<f64> {
    let kx = gram_vector(spec, xs, x)?;
    let kxx = kernel_eval(spec, x, x)?;
    Ok(predictive_variance_from(f, kxx, &kx)?.value)
}

/// One vote per sample row: `sign(f_Υ(x) + ξ)` with independent `ξ`.
pub fn gibbs_predict<R: Rng + ?Sized>(
    s: &PosteriorSamples,
    f: &GramFactorization,
    spec: &KernelSpec,
    xs: &[Vec<f64>],
    x: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if s.dim() != f.n() || xs.len() != f.n() {
        return Err(Error::DimensionMismatch {
            expected: f.n(),
            found: s.dim(),
        });
    }
    let kx = gram_vector(spec, xs, x)?;
    let sd = predictive_variance_from(f, kernel_eval(spec, x, x)?, &kx)?
        .value
        .sqrt();
    // f_Υ(x) = (K⁻¹k)ᵀΥ for every row at once
    let w = f.solve(&kx)?;
    let values = s.samples() * w;
    Ok(noisy_votes(values.iter().copied(), sd, rng))
}

fn noisy_votes<R: Rng + ?Sized>(
    values: impl Iterator<Item = f64>,
    sd: f64,
    rng: &mut R,
) -> Vec<f64> {
    values
        .map(|v| {
            let xi: f64 = if sd > 0.0 {
                sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            sign(v + xi)
        })
        .collect()
}

/// Majority vote of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BayesVote {
    pub prediction: i8,
    pub tie: bool,
}

pub fn majority_vote(votes: &[f64]) -> Result<BayesVote> {
    if votes.is_empty() {
        return Err(Error::EmptySamples);
    }
    let plus = votes.iter().filter(|&&v| v > 0.0).count();
    Ok(VoteTally {
        plus,
        total: votes.len(),
    }
    .majority())
}

pub fn bayes_predict<R: Rng + ?Sized>(
    s: &PosteriorSamples,
    f: &GramFactorization,
    spec: &KernelSpec,
    xs: &[Vec<f64>],
    x: &[f64],
    rng: &mut R,
) -> Result<BayesVote> {
    majority_vote(&gibbs_predict(s, f, spec, xs, x, rng)?)
}

/// `sign(f_Ȳ(x))` for posterior mean labels `Ȳ` (the labels `Y`, or `Y_com`).
pub fn bpm_predict(f: &GramFactorization, mean_labels: &[f64], kx: &DVector<f64>) -> Result<f64> {
    Ok(sign(interpolate(f, mean_labels, kx)?))
}

/// `sign(f_Y(x) + (σᴸ/γ)·η·√var)` with `η ~ N(0, 1)`.
pub fn margin_scaled_predict<R: Rng + ?Sized>(
    f: &GramFactorization,
    labels: &[f64],
    kx: &DVector<f64>,
    var: f64,
    gamma_over_sigma: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(var >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "variance must be >= 0, got {var}"
        )));
    }
    if !(gamma_over_sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "normalised margin must be positive, got {gamma_over_sigma}"
        )));
    }
    let centre = interpolate(f, labels, kx)?;
    Ok(margin_scaled_from(centre, var, gamma_over_sigma, rng))
}

/// [`margin_scaled_predict`] with the interpolant value already computed.
pub fn margin_scaled_from<R: Rng + ?Sized>(
    centre: f64,
    var: f64,
    gamma_over_sigma: f64,
    rng: &mut R,
) -> f64 {
    let eta: f64 = rng.sample(StandardNormal);
    sign(centre + eta * var.sqrt() / gamma_over_sigma)
}

/// Vote counts at one test point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub plus: usize,
    pub total: usize,
}

impl VoteTally {
    pub fn from_votes(votes: &[f64]) -> Self {
        Self {
            plus: votes.iter().filter(|&&v| v > 0.0).count(),
            total: votes.len(),
        }
    }

    /// `E_w sign f_w(x)` over the ensemble.
    pub fn mean_vote(&self) -> f64 {
        (2.0 * self.plus as f64 - self.total as f64) / self.total as f64
    }

    pub fn majority(&self) -> BayesVote {
        let minus = self.total - self.plus;
        BayesVote {
            prediction: if self.plus >= minus { 1 } else { -1 },
            tie: self.plus == minus,
        }
    }

    /// Fraction of votes disagreeing with `truth`.
    pub fn error_fraction(&self, truth: f64) -> f64 {
        let wrong = if truth > 0.0 {
            self.total - self.plus
        } else {
            self.plus
        };
        wrong as f64 / self.total as f64
    }
}

/// Standard errors over test points. The paired ones are for differences of
/// per-point errors, as used by the inequality checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalStandardErrors {
    pub gibbs: f64,
    pub bayes: f64,
    pub bpm: f64,
    pub bayes_minus_2gibbs: f64,
    pub bpm_minus_e_gibbs: f64,
    pub gibbs_minus_bayes: f64,
    pub gibbs_minus_bpm: f64,
}

/// Empirical test errors of the three classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub eps_gibbs: f64,
    pub eps_bayes: f64,
    pub eps_bpm: f64,
    /// Fraction of test points where the Bayes and BPM predictions differ.
    pub delta_approx: f64,
    /// `E_x[(E_w sign f_w(x))²]`.
    pub alpha_gibbs: f64,
    pub test_count: usize,
    pub ensemble_size: usize,
    pub bayes_ties: usize,
    pub se: EvalStandardErrors,
}

pub fn evaluate(truth: &[f64], votes: &[Vec<f64>], bpm: &[f64]) -> Result<ClassifierEval> {
    let tallies: Vec<VoteTally> = votes.iter().map(|v| VoteTally::from_votes(v)).collect();
    evaluate_tallies(truth, &tallies, bpm)
}

pub fn evaluate_tallies(
    truth: &[f64],
    tallies: &[VoteTally],
    bpm: &[f64],
) -> Result<ClassifierEval> {
    let q = truth.len();
    if q == 0 {
        return Err(Error::EmptySamples);
    }
    for len in [tallies.len(), bpm.len()] {
        if len != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                found: len,
            });
        }
    }
    let m = tallies[0].total;
    if m == 0 || tallies.iter().any(|t| t.total != m) {
        return Err(Error::InvalidParameter(
            "every test point needs the same non-zero number of votes".into(),
        ));
    }

    let mut gibbs = Vec::with_capacity(q);
    let mut bayes = Vec::with_capacity(q);
    let mut bpm_err = Vec::with_capacity(q);
    let mut disagree = 0usize;
    let mut ties = 0usize;
    let mut bayes_wrong = 0usize;
    let mut bpm_wrong = 0usize;
    let mut agreement = CompensatedSum::new();
    for ((&y, tally), &b) in truth.iter().zip(tallies).zip(bpm) {
        let vote = tally.majority();
        let bayes_pred = vote.prediction as f64;
        ties += vote.tie as usize;
        let bayes_miss = (bayes_pred != sign(y)) as usize;
        let bpm_miss = (sign(b) != sign(y)) as usize;
        bayes_wrong += bayes_miss;
        bpm_wrong += bpm_miss;
        disagree += (bayes_pred != sign(b)) as usize;
        gibbs.push(tally.error_fraction(y));
        bayes.push(bayes_miss as f64);
        bpm_err.push(bpm_miss as f64);
        agreement.add(tally.mean_vote().powi(2));
    }
    // Per test point, a BPM miss where Bayes is right forces a disagreement.
    assert!(
        bpm_wrong <= bayes_wrong + disagree,
        "BPM errors {bpm_wrong} exceed Bayes errors {bayes_wrong} plus disagreements {disagree}"
    );

    let qf = q as f64;
    let paired_se = |a: &[f64], b: &[f64], cb: f64| {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - cb * y).collect();
        mean_and_se(&d).1
    };
    let se = EvalStandardErrors {
        gibbs: mean_and_se(&gibbs).1,
        bayes: mean_and_se(&bayes).1,
        bpm: mean_and_se(&bpm_err).1,
        bayes_minus_2gibbs: paired_se(&bayes, &gibbs, 2.0),
        bpm_minus_e_gibbs: paired_se(&bpm_err, &gibbs, E),
        gibbs_minus_bayes: paired_se(&gibbs, &bayes, 1.0),
        gibbs_minus_bpm: paired_se(&gibbs, &bpm_err, 1.0),
    };
    Ok(ClassifierEval {
        eps_gibbs: gibbs.iter().copied().collect::<CompensatedSum>().value() / qf,
        eps_bayes: bayes_wrong as f64 / qf,
        eps_bpm: bpm_wrong as f64 / qf,
        delta_approx: disagree as f64 / qf,
        alpha_gibbs: agreement.value() / qf,
        test_count: q,
        ensemble_size: m,
        bayes_ties: ties,
        se,
    })
}

/// Result of one named inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when the inequality does not apply to this evaluation.
    pub passed: Option<bool>,
}

impl InequalityCheck {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            passed: Some(lhs <= rhs),
        }
    }
}

/// The Gibbs/Bayes/BPM inequalities on one evaluation, each with `se_multiple`
/// standard errors of slack (none for the Bayes-BPM count identity).
pub fn inequality_checks(eval: &ClassifierEval, se_multiple: f64) -> Vec<InequalityCheck> {
    let se = &eval.se;
    let mut out = vec![
        InequalityCheck::new(
            "Bayes <= 2 Gibbs",
            eval.eps_bayes,
            2.0 * eval.eps_gibbs + se_multiple * se.bayes_minus_2gibbs,
        ),
        InequalityCheck::new(
            "BPM <= e Gibbs",
            eval.eps_bpm,
            E * eval.eps_gibbs + se_multiple * se.bpm_minus_e_gibbs,
        ),
        InequalityCheck::new(
            "BPM <= Bayes + disagreement",
            eval.eps_bpm,
            eval.eps_bayes + eval.delta_approx,
        ),
    ];
    let applies = eval.eps_gibbs <= 0.5 && eval.alpha_gibbs > 0.0;
    let c = if applies {
        crate::bounds::c_bound(eval.eps_gibbs, eval.alpha_gibbs).ok()
    } else {
        None
    };
    match c {
        Some(c) => {
            out.push(InequalityCheck::new(
                "Bayes <= C-bound",
                eval.eps_bayes,
                c + se_multiple * se.bayes,
            ));
            out.push(InequalityCheck::new(
                "BPM <= C-bound + disagreement",
                eval.eps_bpm,
                c + eval.delta_approx + se_multiple * se.bpm,
            ));
        }
        None => {
            for name in ["Bayes <= C-bound", "BPM <= C-bound + disagreement"] {
                out.push(InequalityCheck {
                    name: name.into(),
                    lhs: f64::NAN,
                    rhs: f64::NAN,
                    passed: None,
                });
            }
        }
    }
    out
}

/// Ensemble predictions over a batch of test points.
#[derive(Debug, Clone)]
pub struct EnsemblePredictions {
    pub tallies: Vec<VoteTally>,
    /// BPM predictions, one per test point.
    pub bpm: Vec<f64>,
    /// Interpolant of the mean labels at each test point.
    pub bpm_values: Vec<f64>,
    pub variances: Vec<f64>,
    pub clamped_variances: usize,
}

/// Gibbs votes for every sample and test point, plus BPM predictions for `mean_labels`.
///
/// `cross` is the `n × q` matrix of Gram vectors and `kxx` the query self-similarities.
/// Test point `t` draws its noise from stream `t` of `seed`, so results do not depend
/// on thread scheduling.
pub fn predict_ensemble(
    f: &GramFactorization,
    samples: &PosteriorSamples,
    mean_labels: &[f64],
    cross: &DMatrix<f64>,
    kxx: &[f64],
    seed: u64,
) -> Result<EnsemblePredictions> {
    let n = f.n();
    if samples.dim() != n || mean_labels.len() != n || cross.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: samples.dim(),
        });
    }
    let q = cross.ncols();
    if kxx.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            found: kxx.len(),
        });
    }
    // f_Υ(x_t) = (L⁻¹k_t)ᵀ(L⁻¹Υ); the same whitened columns give the variances.
    let w = f.whiten_matrix(cross)?;
    let ws = f.whiten_matrix(&samples.samples().transpose())?;
    let values = w.transpose() * ws; // q × m
    let coef = Interpolant::new(f, mean_labels)?;

    let per_point: Vec<(VoteTally, f64, f64, bool)> = (0..q)
        .into_par_iter()
        .map(|t| {
            let var = clamp_variance(kxx[t] - w.column(t).norm_squared());
            let mut rng = stream(seed, t as u64);
            let votes = noisy_votes(values.row(t).iter().copied(), var.value.sqrt(), &mut rng);
            let centre = cross.column(t).dot(coef.coefficients());
            (
                VoteTally::from_votes(&votes),
                centre,
                var.value,
                var.clamped,
            )
        })
        .collect();

    let mut out = EnsemblePredictions {
        tallies: Vec::with_capacity(q),
        bpm: Vec::with_capacity(q),
        bpm_values: Vec::with_capacity(q),
        variances: Vec::with_capacity(q),
        clamped_variances: 0,
    };
    for (tally, centre, var, clamped) in per_point {
        out.tallies.push(tally);
        out.bpm.push(sign(centre));
        out.bpm_values.push(centre);
        out.variances.push(var);
        out.clamped_variances += clamped as usize;
    }
    Ok(out)
}

/// Fraction of posterior samples on the same side of the hyperplane `direction` as
/// `centre`. For a log-concave posterior and its centre of mass this is at least `1/e`.
pub fn halfspace_agreement(
    samples: &DMatrix<f64>,
    centre: &DVector<f64>,
    direction: &DVector<f64>,
) -> Result<f64> {
    if samples.ncols() != centre.len() || direction.len() != centre.len() {
        return Err(Error::DimensionMismatch {
            expected: centre.len(),
            found: direction.len(),
        });
    }
    if samples.nrows() == 0 {
        return Err(Error::EmptySamples);
    }
    let side = sign(direction.dot(centre));
    let projections = samples * direction;
    let agree = projections.iter().filter(|&&p| sign(p) == side).count();
    Ok(agree as f64 / samples.nrows() as f64)
}
