//! Draws from the orthant-truncated label posteriors.
//!
//! ```text
//! Q_GP : Υ ~ N(0, K_XX)           | sign Υ = Y
//! Q_iso: Υ ~ N(0, |K_XX|^{1/n}·I) | sign Υ = Y
//! ```
//!
//! `Q_iso` factorizes over coordinates and is sampled exactly. `Q_GP` is sampled by a
//! coordinate-wise Gibbs chain on the precision matrix; tiny instances can also be
//! sampled exactly by rejection, which the tests use as an oracle for the chain.

use crate::gram::GramFactorization;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{normal_quantile, normal_sf, CompensatedSum};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BURN_IN: usize = 100;
pub const DEFAULT_THINNING: usize = 10;

/// Truncation points beyond this many standard deviations into the tail switch from
/// inverse-CDF to exponential-proposal rejection.
const TAIL_SWITCH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorKind {
    Gp,
    Iso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

/// A batch of label vectors, one per row, all in the orthant `sign Υ = Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    samples: DMatrix<f64>,
    kind: PosteriorKind,
    labels: Vec<f64>,
    meta: ChainMeta,
}

impl PosteriorSamples {
    /// Validates the orthant and shape invariants.
    pub fn new(
        samples: DMatrix<f64>,
        kind: PosteriorKind,
        labels: Vec<f64>,
        meta: ChainMeta,
    ) -> Result<Self> {
        check_labels(&labels)?;
        if samples.nrows() == 0 {
            return Err(Error::EmptySamples);
        }
        if samples.ncols() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                found: samples.ncols(),
            });
        }
        if meta.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be >= 1".into()));
        }
        for r in 0..samples.nrows() {
            for (c, &y) in labels.iter().enumerate() {
                let v = samples[(r, c)];
                if !(v * y > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "sample {r} leaves the orthant at coordinate {c} ({v})"
                    )));
                }
            }
        }
        Ok(Self {
            samples,
            kind,
            labels,
            meta,
        })
    }

    /// `m × n` matrix, one label vector per row.
    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn kind(&self) -> PosteriorKind {
        self.kind
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn meta(&self) -> ChainMeta {
        self.meta
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.samples.row(i).transpose()
    }

    /// Concatenate batches drawn for the same labels and posterior.
    pub fn concat(parts: Vec<PosteriorSamples>) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptySamples)?;
        let (kind, labels, meta) = (first.kind, first.labels.clone(), first.meta);
        let n = labels.len();
        let rows: usize = parts.iter().map(|p| p.len()).sum();
        let mut out = DMatrix::zeros(rows, n);
        let mut r0 = 0;
        for p in &parts {
            if p.labels != labels || p.kind != kind {
                return Err(Error::InvalidParameter(
                    "cannot concatenate samples of different posteriors".into(),
                ));
            }
            out.rows_mut(r0, p.len()).copy_from(&p.samples);
            r0 += p.len();
        }
        Ok(Self {
            samples: out,
            kind,
            labels,
            meta,
        })
    }
}

pub(crate) fn check_labels(labels: &[f64]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("label vector is empty".into()));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidParameter(format!(
            "labels must be ±1, found {bad}"
        )));
    }
    Ok(())
}

/// Standard normal conditioned on `Z > a`.
pub fn std_normal_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= TAIL_SWITCH {
        // Inverse survival function: Z = S⁻¹(u·S(a)), u ∈ (0, 1].
        let tail = normal_sf(a);
        loop {
            let u = 1.0 - rng.random::<f64>();
            let z = -normal_quantile(u * tail);
            if z > a && z.is_finite() {
                return z;
            }
        }
    } else {
        // Robert (1995): shifted exponential proposal with the optimal rate.
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e = -(1.0 - rng.random::<f64>()).ln() / rate;
            let z = a + e;
            let accept = (-0.5 * (z - rate) * (z - rate)).exp();
            if rng.random::<f64>() < accept && z > a {
                return z;
            }
        }
    }
}

/// A draw from `N(mean, sd²)` conditioned on having sign `sign` (±1), strictly.
pub fn truncated_normal_sample<R: Rng + ?Sized>(mean: f64, sd: f64, sign: f64, rng: &mut R) -> f64 {
    debug_assert!(sd > 0.0);
    // Reflect the negative case onto the positive half-line.
    let m = if sign >= 0.0 { mean } else { -mean };
    loop {
        let z = std_normal_above(-m / sd, rng);
        let x = m + sd * z;
        if x > 0.0 {
            return if sign >= 0.0 { x } else { -x };
        }
    }
}

/// Exact draws from the isotropic posterior: `Υᵢ = Yᵢ·|zᵢ|`, `zᵢ ~ N(0, scale_sq)`.
pub fn sample_iso_orthant(
    scale_sq: f64,
    labels: &[f64],
    m: usize,
    seed: u64,
) -> Result<PosteriorSamples> {
    if !(scale_sq > 0.0) || !scale_sq.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "isotropic scale must be positive, got {scale_sq}"
        )));
    }
    check_labels(labels)?;
    if m == 0 {
        return Err(Error::EmptySamples);
    }
    let n = labels.len();
    let sd = scale_sq.sqrt();
    let mut rng = rng_from_seed(seed);
    let mut samples = DMatrix::zeros(m, n);
    for r in 0..m {
        for (c, &y) in labels.iter().enumerate() {
            let z = loop {
                let z: f64 = rng.sample(StandardNormal);
                if z != 0.0 {
                    break z.abs();
                }
            };
            samples[(r, c)] = y * sd * z;
        }
    }
    let meta = ChainMeta {
        burn_in: 0,
        thinning: 1,
        seed,
    };
    PosteriorSamples::new(samples, PosteriorKind::Iso, labels.to_vec(), meta)
}

/// Coordinate-wise Gibbs sampler for `N(0, K) | sign Υ = Y`.
///
/// With precision `P = K⁻¹`, the full conditional of `Υᵢ` is
/// `N(-Σ_{j≠i} Pᵢⱼ Υⱼ / Pᵢᵢ, 1 / Pᵢᵢ)` truncated to sign `Yᵢ`. After `burn_in` sweeps,
/// the state after every `thinning`-th sweep is emitted.
pub fn sample_gp_orthant_gibbs(
    f: &GramFactorization,
    labels: &[f64],
    m: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
) -> Result<PosteriorSamples> {
    check_labels(labels)?;
    let n = f.n();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if thinning == 0 {
        return Err(Error::InvalidParameter("thinning must be >= 1".into()));
    }
    if m == 0 {
        return Err(Error::EmptySamples);
    }
    let precision = f.precision();
    let cond_sd: Vec<f64> = (0..n).map(|i| precision[(i, i)].sqrt().recip()).collect();
    let k = f.matrix();
    let mut state: Vec<f64> = (0..n)
        .map(|i| labels[i] * (k[(i, i)] + f.jitter_used()).sqrt())
        .collect();
    let mut rng = rng_from_seed(seed);
    let mut samples = DMatrix::zeros(m, n);

    let sweep = |state: &mut Vec<f64>, rng: &mut _| {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                if j != i {
                    acc += precision[(i, j)] * state[j];
                }
            }
            let mean = -acc / precision[(i, i)];
            state[i] = truncated_normal_sample(mean, cond_sd[i], labels[i], rng);
        }
    };
    for _ in 0..burn_in {
        sweep(&mut state, &mut rng);
    }
    for r in 0..m {
        for _ in 0..thinning {
            sweep(&mut state, &mut rng);
        }
        for c in 0..n {
            samples[(r, c)] = state[c];
        }
    }
    let meta = ChainMeta {
        burn_in,
        thinning,
        seed,
    };
    PosteriorSamples::new(samples, PosteriorKind::Gp, labels.to_vec(), meta)
}

/// Runs `chains` independent Gibbs chains in parallel and stacks their output.
///
/// Chain `c` is seeded with `derive_seed(master_seed, c)`; the result's metadata
/// carries the master seed.
pub fn sample_gp_orthant_chains(
    f: &GramFactorization,
    labels: &[f64],
    chains: usize,
    per_chain: usize,
    burn_in: usize,
    thinning: usize,
    master_seed: u64,
) -> Result<PosteriorSamples> {
    if chains == 0 {
        return Err(Error::InvalidParameter("need at least one chain".into()));
    }
    let parts = (0..chains as u64)
        .into_par_iter()
        .map(|c| {
            sample_gp_orthant_gibbs(
                f,
                labels,
                per_chain,
                burn_in,
                thinning,
                derive_seed(master_seed, c),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = PosteriorSamples::concat(parts)?;
    out.meta.seed = master_seed;
    Ok(out)
}

/// Result of a rejection run: the accepted draws and how many proposals it took.
#[derive(Debug, Clone)]
pub struct RejectionOutcome {
    pub samples: PosteriorSamples,
    pub attempts: u64,
}

impl RejectionOutcome {
    pub fn acceptance_rate(&self) -> f64 {
        self.samples.len() as f64 / self.attempts as f64
    }
}

/// Exact iid draws from `N(0, K) | sign Υ = Y` by proposing from the prior.
///
/// Acceptance is the orthant probability, so this is only practical for small `n`.
pub fn sample_gp_orthant_rejection(
    k: &DMatrix<f64>,
    labels: &[f64],
    m: usize,
    max_attempts: u64,
    seed: u64,
) -> Result<RejectionOutcome> {
    check_labels(labels)?;
    let n = labels.len();
    if k.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.nrows(),
        });
    }
    if m == 0 {
        return Err(Error::EmptySamples);
    }
    let f = GramFactorization::factorize(k.clone())?;
    let l = f.factor();
    let mut rng = rng_from_seed(seed);
    let mut samples = DMatrix::zeros(m, n);
    let mut accepted = 0usize;
    let mut attempts = 0u64;
    let mut e = vec![0.0; n];
    let mut draw = vec![0.0; n];
    while accepted < m {
        if attempts >= max_attempts {
            return Err(Error::AttemptBudgetExhausted {
                attempts,
                accepted,
                acceptance_rate: accepted as f64 / attempts.max(1) as f64,
            });
        }
        attempts += 1;
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut inside = true;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += l[(i, j)] * e[j];
            }
            draw[i] = acc;
            if !(acc * labels[i] > 0.0) {
                inside = false;
                break;
            }
        }
        if inside {
            for c in 0..n {
                samples[(accepted, c)] = draw[c];
            }
            accepted += 1;
        }
    }
    let meta = ChainMeta {
        burn_in: 0,
        thinning: 1,
        seed,
    };
    Ok(RejectionOutcome {
        samples: PosteriorSamples::new(samples, PosteriorKind::Gp, labels.to_vec(), meta)?,
        attempts,
    })
}

/// Column mean of the samples: the estimated centre-of-mass labels `Y_com`.
///
/// Meant for `Q_GP` samples. For `Q_iso` the centre of mass is known in closed form,
/// see [`iso_centre_of_mass`].
pub fn centre_of_mass_labels(s: &PosteriorSamples) -> Result<DVector<f64>> {
    if s.is_empty() {
        return Err(Error::EmptySamples);
    }
    let m = s.len() as f64;
    Ok(DVector::from_fn(s.dim(), |c, _| {
        s.samples
            .column(c)
            .iter()
            .copied()
            .collect::<CompensatedSum>()
            .value()
            / m
    }))
}

/// `E Υ` under `Q_iso`: `Yᵢ·√(scale_sq)·√(2/π)`.
pub fn iso_centre_of_mass(scale_sq: f64, labels: &[f64]) -> DVector<f64> {
    let c = (scale_sq * 2.0 / std::f64::consts::PI).sqrt();
    DVector::from_iterator(labels.len(), labels.iter().map(|y| y * c))
}
