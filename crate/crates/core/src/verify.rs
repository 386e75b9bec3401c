//! Fixed-scale empirical checks of every identity and inequality the library relies on.
//!
//! Each suite is a handful of checks run at small `n` with Monte-Carlo tolerances in
//! standard errors. `tolerance_scale` multiplies every tolerance; a negative value
//! makes the two-sided checks unsatisfiable, which exercises the failure path.

use crate::bounds::{gibbs_bound, BoundReport};
use crate::classifier::{
    evaluate_tallies, halfspace_agreement, inequality_checks, predict_ensemble, ClassifierEval,
};
use crate::data::{synthetic_gaussians, synthetic_xor, Dataset};
use crate::gram::GramFactorization;
use crate::kernel::{cross_gram, gram_matrix, KernelSpec};
use crate::orthant::{
    bivariate_same_sign_probability, complexity_a, kl_iso_mc_check, log_inv_py_quadrature,
    orthant_ghk, orthant_naive_mc,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampler::{
    centre_of_mass_labels, sample_gp_orthant_chains, sample_gp_orthant_rejection,
    sample_iso_orthant,
};
use crate::stats::{batch_means, mean_and_se};
use crate::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::f64::consts::{E, LN_2, PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub tolerance_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tolerance_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suite {
    pub name: String,
    pub checks: Vec<Check>,
}

impl Suite {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, label: String, passed: bool) {
        self.checks.push(Check { label, passed });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<Suite>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(Suite::passed)
    }

    /// One line per suite followed by its checks, indented.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            out.push_str(&format!("{} {}\n", verdict(s.passed()), s.name));
            for c in &s.checks {
                out.push_str(&format!("    {} {}\n", verdict(c.passed), c.label));
            }
        }
        let passed = self.suites.iter().filter(|s| s.passed()).count();
        out.push_str(&format!(
            "{passed}/{} suites passed (seed {})\n",
            self.suites.len(),
            self.seed
        ));
        out
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

struct Ctx {
    seed: u64,
    scale: f64,
    next: u64,
}

impl Ctx {
    fn seed(&mut self) -> u64 {
        self.next += 1;
        derive_seed(self.seed, self.next)
    }

    /// `|a - b| ≤ scale·tol`.
    fn close(&self, a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= self.scale * tol
    }

    /// `a ≤ b + scale·slack`.
    fn below(&self, a: f64, b: f64, slack: f64) -> bool {
        a <= b + self.scale * slack
    }
}

/// Random correlation matrix with condition number kept moderate by a ridge.
pub fn random_correlation(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let a = DMatrix::from_fn(n, n + 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut k = &a * a.transpose();
    for i in 0..n {
        k[(i, i)] += 0.5 * (n + 2) as f64;
    }
    let d: Vec<f64> = (0..n).map(|i| k[(i, i)].sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        if a == b {
            1.0
        } else {
            k[(a, b)] / (d[a] * d[b])
        }
    })
}

/// Random `±1` labels.
pub fn random_labels(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// Orthant probability of a trivariate normal with correlations `r12, r13, r23`.
fn trivariate_orthant(r12: f64, r13: f64, r23: f64) -> f64 {
    0.125 + (r12.asin() + r13.asin() + r23.asin()) / (4.0 * PI)
}

pub fn run_verify(opts: VerifyOptions) -> Result<VerifyReport> {
    let mut ctx = Ctx {
        seed: opts.seed,
        scale: opts.tolerance_scale,
        next: 0,
    };
    let mut suites = vec![
        kl_identity_suite(&mut ctx)?,
        kl_equality_suite(&mut ctx)?,
        kl_inequality_suite(&mut ctx)?,
        second_moment_suite(&mut ctx)?,
        sampler_suite(&mut ctx)?,
        bivariate_suite(&mut ctx)?,
        log_sum_exp_suite(&mut ctx)?,
        ghk_suite(&mut ctx)?,
        halfspace_suite(&mut ctx)?,
        bound_suite(&mut ctx)?,
    ];
    suites.extend(classifier_suites(&mut ctx)?);
    Ok(VerifyReport {
        seed: opts.seed,
        suites,
    })
}

fn kl_identity_suite(ctx: &mut Ctx) -> Result<Suite> {
    let mut s = Suite::new("complexity A on the identity kernel");
    for n in [1usize, 4, 16, 64] {
        let f = GramFactorization::factorize(DMatrix::identity(n, n))?;
        let a = complexity_a(&f, &random_labels(n, ctx.seed()))?;
        s.push(
            format!("A(I) = n log 2 at n = {n}: {a:.15}"),
            ctx.close(a, n as f64 * LN_2, 1e-12),
        );
    }
    let f = GramFactorization::factorize(DMatrix::identity(4, 4))?;
    let est = orthant_naive_mc(&f, &random_labels(4, ctx.seed()), 100_000, ctx.seed())?;
    s.push(
        format!(
            "naive P_Y = {:.5} ± {:.5} vs 1/16",
            est.probability(),
            est.probability_se()
        ),
        ctx.close(est.probability(), 1.0 / 16.0, 3.0 * est.probability_se()),
    );
    Ok(s)
}

fn kl_equality_suite(ctx: &mut Ctx) -> Result<Suite> {
    let mut s = Suite::new("A equals the Monte-Carlo KL(Q_iso || P_GP)");
    for case in 0..5 {
        let f = GramFactorization::factorize(random_correlation(6, ctx.seed()))?;
        let y = random_labels(6, ctx.seed());
        let a = complexity_a(&f, &y)?;
        let kl = kl_iso_mc_check(&f, &y, 100_000, ctx.seed())?;
        s.push(
            format!(
                "case {case}: A = {a:.4}, MC = {:.4} ± {:.4}",
                kl.value, kl.std_error
            ),
            ctx.close(a, kl.value, 4.0 * kl.std_error),
        );
    }
    Ok(s)
}

fn kl_inequality_suite(ctx: &mut Ctx) -> Result<Suite> {
    let mut s = Suite::new("A bounds log(1/P_Y) from above");
    for case in 0..5 {
        let n = 4 + case;
        let f = GramFactorization::factorize(random_correlation(n, ctx.seed()))?;
        let y = random_labels(n, ctx.seed());
        let a = complexity_a(&f, &y)?;
        let est = orthant_naive_mc(&f, &y, 100_000, ctx.seed())?;
        s.push(
            format!(
                "n = {n}: A = {a:.4}, log(1/P_Y) = {:.4} ± {:.4}",
                est.log_inv_py, est.std_error
            ),
            !est.failed && ctx.below(est.log_inv_py, a, 4.0 * est.std_error),
        );
    }
    Ok(s)
}

fn second_moment_suite(ctx: &mut Ctx) -> Result<Suite> {
    let mut s = Suite::new("second-moment identity of the isotropic posterior");
    let n = 4;
    let scale_sq = 2.5;
    let y = random_labels(n, ctx.seed());
    let samples = sample_iso_orthant(scale_sq, &y, 200_000, ctx.seed())?;
    let m = samples.samples();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..n {
        for j in i..n {
            let prods: Vec<f64> = m
                .column(i)
                .iter()
                .zip(m.column(j).iter())
                .map(|(a, b)| a * b)
                .collect();
            let (mean, se) = mean_and_se(&prods);
            let expected = if i == j {
                scale_sq
            } else {
                scale_sq * 2.0 / PI * y[i] * y[j]
            };
            worst = worst.max((mean - expected).abs() / se);
            ok &= ctx.close(mean, expected, 4.0 * se);
        }
    }
    s.push(format!("all pairs within 4 SE (worst {worst:.2} SE)"), ok);
    Ok(s)
}

fn sampler_suite(ctx: &mut Ctx) -> Result<Suite> {
    let mut s = Suite::new("Gibbs chain against the rejection oracle");
    for case in 0..3 {
        let n = 2 + case;
        let k = random_correlation(n, ctx.seed());
        let y = random_labels(n, ctx.seed());
        let f = GramFactorization::factorize(k.clone())?;
        let gibbs = sample_gp_orthant_chains(&f, &y, 4, 5000, 50, 5, ctx.seed())?;
        let rej = sample_gp_orthant_rejection(&k, &y, 20_000, 10_000_000, ctx.seed())?;
        let mut ok = true;
        for c in 0..n {
            let gc: Vec<f64> = gibbs.samples().column(c).iter().copied().collect();
            let rc: Vec<f64> = rej.samples.samples().column(c).iter().copied().collect();
            let (gm, gse) = batch_means(&gc, 50);
            let (rm, rse) = mean_and_se(&rc);
            ok &= ctx.close(gm, rm, 4.0 * (gse * gse + rse * rse).sqrt());
        }
        s.push(format!("n = {n}: coordinate means agree"), ok);
    }
    Ok(s)
}

fn bivariate_suite(ctx: &mut Ctx) -> Result<Suite> {
    let mut s = Suite::new("bivariate orthant probability");
    for rho in [-0.5, 0.0, 0.5, 0.9] {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let f = GramFactorization::factorize(k)?;
        let y = [1.0, 1.0];
        let exact = bivariate_same_sign_probability(rho);
        let quad = (-log_inv_py_quadrature(&f, &y, 400, 12.0)?).exp();
        let naive = orthant_naive_mc(&f, &y, 100_000, ctx.seed())?;
        let ghk = orthant_ghk(&f, &y, 20_000, ctx.seed())?;
        s.push(
            format!("rho = {rho}: closed form {exact:.6}, quadrature {quad:.6}"),
            ctx.close(quad, exact, 1e-6),
        );
        s.push(
            format!("rho = {rho}: naive MC {:.5}", naive.probability()),
            ctx.close(naive.probability(), exact, 3.0 * naive.probability_se()),
        );
        s.push(
            format!("rho = {rho}: GHK {:.5}", ghk.probability()),
            ctx.close(ghk.probability(), exact, 3.0 * ghk.probability_se() + 1e-12),
        );
    }
    Ok(s)
}

fn log_sum_exp_suite(ctx: &mut Ctx) -> Result<Suite> {
    let mut s = Suite::new("quadrature of log(1/P_Y) against the trivariate closed form");
    for case in 0..3 {
        let k = random_correlation(3, ctx.seed());
        let y = random_labels(3, ctx.seed());
        let r = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
        let exact = -trivariate_orthant(r(0, 1), r(0, 2), r(1, 2)).ln();
        let f = GramFactorization::factorize(k)?;
        let quad = log_inv_py_quadrature(&f, &y, 80, 9.0)?;
        s.push(
            format!("case {case}: quadrature {quad:.6} vs closed form {exact:.6}"),
            ctx.close(quad, exact, 1e-3),
        );
    }
    Ok(s)
}

fn ghk_suite(ctx: &mut Ctx) -> Result<Suite> {
    let mut s = Suite::new("GHK against naive Monte Carlo");
    let f = GramFactorization::factorize(DMatrix::identity(10, 10))?;
    let exact = orthant_ghk(&f, &random_labels(10, ctx.seed()), 100, ctx.seed())?;
    s.push(
        format!(
            "identity n = 10: {:.12} with SE {:.1e}",
            exact.log_inv_py, exact.std_error
        ),
        ctx.close(exact.log_inv_py, 10.0 * LN_2, 1e-12) && exact.std_error < 1e-12,
    );
    for n in [5usize, 8] {
        let f = GramFactorization::factorize(random_correlation(n, ctx.seed()))?;
        let y = random_labels(n, ctx.seed());
        let ghk = orthant_ghk(&f, &y, 50_000, ctx.seed())?;
        let naive = orthant_naive_mc(&f, &y, 200_000, ctx.seed())?;
        let se = (ghk.std_error.powi(2) + naive.std_error.powi(2)).sqrt();
        s.push(
            format!(
                "n = {n}: GHK {:.4}, naive {:.4} (log scale)",
                ghk.log_inv_py, naive.log_inv_py
            ),
            !naive.failed && ctx.close(ghk.log_inv_py, naive.log_inv_py, 4.0 * se),
        );
    }
    Ok(s)
}

fn halfspace_suite(ctx: &mut Ctx) -> Result<Suite> {
    let mut s = Suite::new("halfspaces through the centre of mass keep 1/e of the mass");
    let data = synthetic_gaussians(46, 3, 1.0, ctx.seed())?;
    let (train, test) = data.split(6, 40)?;
    let spec = KernelSpec::arccosine(3, 3)?;
    let k = gram_matrix(&spec, train.inputs())?;
    let f = GramFactorization::factorize(k.clone())?;
    let y = train.labels();
    let draws = sample_gp_orthant_rejection(&k, y, 20_000, 50_000_000, ctx.seed())?.samples;
    let centre = centre_of_mass_labels(&draws)?;
    let mut directions: Vec<DVector<f64>> = Vec::new();
    let cross = cross_gram(&spec, train.inputs(), test.inputs())?;
    let coef = f.solve_matrix(&cross)?;
    directions.extend(coef.column_iter().map(|c| c.into_owned()));
    let mut rng = rng_from_seed(ctx.seed());
    for _ in 0..40 {
        let v = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
        directions.push(v.normalize());
    }
    let m = draws.len() as f64;
    let mut worst = 1.0f64;
    let mut ok = true;
    for v in &directions {
        let p = halfspace_agreement(draws.samples(), &centre, v)?;
        let se = (p * (1.0 - p) / m).sqrt();
        worst = worst.min(p);
        ok &= ctx.below(1.0 / E, p, 4.0 * se);
    }
    s.push(
        format!(
            "{} directions, smallest agreement {worst:.4} vs 1/e",
            directions.len()
        ),
        ok,
    );
    Ok(s)
}

fn bound_suite(ctx: &mut Ctx) -> Result<Suite> {
    let mut s = Suite::new("Gibbs PAC-Bayes and BPM bounds");
    let f = GramFactorization::factorize(random_correlation(8, ctx.seed()))?;
    let y = random_labels(8, ctx.seed());
    let est = orthant_ghk(&f, &y, 50_000, ctx.seed())?;
    let r = BoundReport::compute(&f, &y, 0.1, Some(est))?;
    s.push(
        "centroidal bound = e x Gibbs bound".into(),
        ctx.close(r.bpm_bound_centroid / r.gibbs_bound, E, 1e-12),
    );
    s.push(
        format!(
            "centre-of-mass bound {:.4} <= centroidal {:.4}",
            r.bpm_bound_com.map(|c| c.point).unwrap_or(f64::NAN),
            r.bpm_bound_centroid
        ),
        r.com_ordering_holds(4.0 * ctx.scale) == Some(true),
    );
    let mut prev = 0.0;
    let mut monotone = true;
    for i in 0..50 {
        let g = gibbs_bound(i as f64, 100, 0.1)?;
        monotone &= g > prev && (0.0..=1.0).contains(&g);
        prev = g;
    }
    s.push(
        "Gibbs bound increasing in KL and inside [0, 1]".into(),
        monotone,
    );
    Ok(s)
}

fn evaluate_posterior(
    f: &GramFactorization,
    train: &Dataset,
    test: &Dataset,
    spec: &KernelSpec,
    gp: bool,
    seed: u64,
) -> Result<ClassifierEval> {
    let y = train.labels();
    let cross = cross_gram(spec, train.inputs(), test.inputs())?;
    let kxx = vec![1.0; test.len()];
    let (samples, mean) = if gp {
        let s = sample_gp_orthant_chains(f, y, 4, 100, 50, 5, derive_seed(seed, 1))?;
        let c = centre_of_mass_labels(&s)?;
        (s, c.as_slice().to_vec())
    } else {
        let s = sample_iso_orthant(f.det_root(), y, 400, derive_seed(seed, 1))?;
        (s, y.to_vec())
    };
    let preds = predict_ensemble(f, &samples, &mean, &cross, &kxx, derive_seed(seed, 2))?;
    evaluate_tallies(test.labels(), &preds.tallies, &preds.bpm)
}

fn classifier_suites(ctx: &mut Ctx) -> Result<Vec<Suite>> {
    let names = [
        "Bayes <= 2 Gibbs",
        "BPM <= e Gibbs",
        "BPM <= Bayes + disagreement",
        "Bayes <= C-bound",
        "BPM <= C-bound + disagreement",
    ];
    let mut suites: Vec<Suite> = names.iter().map(|n| Suite::new(n)).collect();
    let spec = KernelSpec::arccosine(3, 4)?;
    let sets = [
        ("gaussians", synthetic_gaussians(560, 4, 2.0, ctx.seed())?),
        ("xor", synthetic_xor(560, 4, ctx.seed())?),
    ];
    for (label, data) in &sets {
        let (train, test) = data.split(60, 500)?;
        let f = GramFactorization::factorize(gram_matrix(&spec, train.inputs())?)?;
        for gp in [false, true] {
            let eval = evaluate_posterior(&f, &train, &test, &spec, gp, ctx.seed())?;
            let posterior = if gp { "GP" } else { "iso" };
            for check in inequality_checks(&eval, 4.0 * ctx.scale) {
                let suite = suites
                    .iter_mut()
                    .find(|s| s.name == check.name)
                    .expect("inequality_checks names are fixed");
                let text = format!("{label}/{posterior}: {:.4} <= {:.4}", check.lhs, check.rhs);
                match check.passed {
                    Some(p) => suite.push(text, p),
                    None => suite.push(format!("{label}/{posterior}: not applicable"), true),
                }
            }
        }
    }
    Ok(suites)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivariate_oracle_reduces_to_independence() {
        assert!((trivariate_orthant(0.0, 0.0, 0.0) - 0.125).abs() < 1e-15);
        // perfectly correlated pair collapses to a bivariate orthant
        let rho = 0.3;
        let v = trivariate_orthant(1.0, rho, rho);
        assert!((v - bivariate_same_sign_probability(rho)).abs() < 1e-15);
    }

    #[test]
    fn random_correlation_is_valid() {
        let k = random_correlation(6, 1);
        assert!(GramFactorization::factorize(k.clone()).is_ok());
        for i in 0..6 {
            assert_eq!(k[(i, i)], 1.0);
            for j in 0..6 {
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
    }

    #[test]
    fn default_run_passes_and_corruption_fails() {
        let report = run_verify(VerifyOptions::default()).unwrap();
        assert!(report.passed(), "{}", report.render());
        let text = report.render();
        for name in [
            "Bayes <= 2 Gibbs",
            "halfspaces through the centre of mass keep 1/e of the mass",
            "Bayes <= C-bound",
        ] {
            assert!(text.contains(name));
        }
        let corrupted = run_verify(VerifyOptions {
            seed: 0,
            tolerance_scale: -1.0,
        })
        .unwrap();
        assert!(!corrupted.passed());
        assert!(corrupted.render().contains("FAIL"));
    }
}
