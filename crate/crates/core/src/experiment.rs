//! One row of a bounds or comparison sweep.
//!
//! A row is fully determined by its configuration, its data and `row_seed =
//! derive_seed(master_seed, row_index)`. Sub-streams of the row seed drive the
//! orthant estimate, the ensembles and the predictive noise.

use crate::bounds::{c_bound, optimistic_bpm_bound, BoundReport};
use crate::classifier::{evaluate_tallies, predict_ensemble, ClassifierEval};
use crate::data::{Dataset, ExperimentKind, ExperimentRecord};
use crate::gram::GramFactorization;
use crate::kernel::{cross_gram, gram_matrix, kernel_eval, KernelSpec};
use crate::orthant::orthant_ghk;
use crate::rng::derive_seed;
use crate::sampler::{
    centre_of_mass_labels, sample_gp_orthant_chains, sample_iso_orthant, DEFAULT_BURN_IN,
    DEFAULT_THINNING,
};
use crate::Result;
use serde::{Deserialize, Serialize};

const STREAM_ORTHANT: u64 = 1;
const STREAM_ISO: u64 = 2;
const STREAM_ISO_NOISE: u64 = 3;
const STREAM_GP: u64 = 4;
const STREAM_GP_NOISE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowConfig {
    pub kernel: KernelSpec,
    pub delta: f64,
    /// Ensemble size `m` for both posteriors.
    pub ensemble: usize,
    /// Largest `n` for which `log(1/P_Y)` and the centre-of-mass labels are estimated.
    pub ycom_cap: usize,
    pub orthant_draws: u64,
    pub chains: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

impl RowConfig {
    pub fn new(kernel: KernelSpec) -> Self {
        Self {
            kernel,
            delta: 0.1,
            ensemble: 1000,
            ycom_cap: 200,
            orthant_draws: 20_000,
            chains: 4,
            burn_in: DEFAULT_BURN_IN,
            thinning: DEFAULT_THINNING,
        }
    }
}

fn blank_record(
    kind: ExperimentKind,
    cfg: &RowConfig,
    n: usize,
    master_seed: u64,
    row_seed: u64,
) -> ExperimentRecord {
    ExperimentRecord {
        experiment: kind,
        n,
        delta: cfg.delta,
        master_seed,
        row_seed,
        jitter_used: 0.0,
        kernel: cfg.kernel,
        bounds: None,
        eval: None,
        eval_com: None,
        optimistic_bpm_bound: None,
        clamped_variances: None,
        error: None,
    }
}

fn bounds_for(
    cfg: &RowConfig,
    f: &GramFactorization,
    labels: &[f64],
    row_seed: u64,
) -> Result<BoundReport> {
    let est = if f.n() <= cfg.ycom_cap {
        Some(orthant_ghk(
            f,
            labels,
            cfg.orthant_draws,
            derive_seed(row_seed, STREAM_ORTHANT),
        )?)
    } else {
        None
    };
    BoundReport::compute(f, labels, cfg.delta, est)
}

/// Bounds for one training set. Failures are recorded in the row rather than returned.
pub fn bounds_row(
    cfg: &RowConfig,
    train: &Dataset,
    master_seed: u64,
    row_index: u64,
) -> ExperimentRecord {
    let row_seed = derive_seed(master_seed, row_index);
    let mut rec = blank_record(
        ExperimentKind::Bounds,
        cfg,
        train.len(),
        master_seed,
        row_seed,
    );
    let run = || -> Result<BoundReport> {
        let f = GramFactorization::factorize(gram_matrix(&cfg.kernel, train.inputs())?)?;
        bounds_for(cfg, &f, train.labels(), row_seed)
    };
    match run() {
        Ok(b) => {
            rec.jitter_used = b.jitter_used;
            rec.bounds = Some(b);
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// Bounds plus test errors of the Gibbs, Bayes and BPM classifiers.
///
/// The iso-posterior ensemble is paired with the centroidal BPM (labels `Y`). For
/// `n ≤ ycom_cap` a GP-posterior ensemble from Gibbs chains is paired with the
/// centre-of-mass BPM.
pub fn compare_row(
    cfg: &RowConfig,
    train: &Dataset,
    test: &Dataset,
    master_seed: u64,
    row_index: u64,
) -> ExperimentRecord {
    let row_seed = derive_seed(master_seed, row_index);
    let mut rec = blank_record(
        ExperimentKind::Compare,
        cfg,
        train.len(),
        master_seed,
        row_seed,
    );
    if let Err(e) = fill_compare(cfg, train, test, row_seed, &mut rec) {
        rec.error = Some(e.to_string());
    }
    rec
}

fn fill_compare(
    cfg: &RowConfig,
    train: &Dataset,
    test: &Dataset,
    row_seed: u64,
    rec: &mut ExperimentRecord,
) -> Result<()> {
    let y = train.labels();
    let f = GramFactorization::factorize(gram_matrix(&cfg.kernel, train.inputs())?)?;
    rec.jitter_used = f.jitter_used();
    let mut bounds = bounds_for(cfg, &f, y, row_seed)?;

    let cross = cross_gram(&cfg.kernel, train.inputs(), test.inputs())?;
    let kxx = test
        .inputs()
        .iter()
        .map(|x| kernel_eval(&cfg.kernel, x, x))
        .collect::<Result<Vec<f64>>>()?;

    let iso = sample_iso_orthant(
        f.det_root(),
        y,
        cfg.ensemble,
        derive_seed(row_seed, STREAM_ISO),
    )?;
    let preds = predict_ensemble(
        &f,
        &iso,
        y,
        &cross,
        &kxx,
        derive_seed(row_seed, STREAM_ISO_NOISE),
    )?;
    let eval = evaluate_tallies(test.labels(), &preds.tallies, &preds.bpm)?;
    rec.clamped_variances = Some(preds.clamped_variances);
    attach_c_bound(&mut bounds, &eval, rec)?;
    rec.eval = Some(eval);

    if train.len() <= cfg.ycom_cap {
        let per_chain = cfg.ensemble.div_ceil(cfg.chains.max(1));
        let gp = sample_gp_orthant_chains(
            &f,
            y,
            cfg.chains.max(1),
            per_chain,
            cfg.burn_in,
            cfg.thinning,
            derive_seed(row_seed, STREAM_GP),
        )?;
        let ycom = centre_of_mass_labels(&gp)?;
        let preds = predict_ensemble(
            &f,
            &gp,
            ycom.as_slice(),
            &cross,
            &kxx,
            derive_seed(row_seed, STREAM_GP_NOISE),
        )?;
        rec.eval_com = Some(evaluate_tallies(test.labels(), &preds.tallies, &preds.bpm)?);
    }
    rec.bounds = Some(bounds);
    Ok(())
}

fn attach_c_bound(
    bounds: &mut BoundReport,
    eval: &ClassifierEval,
    rec: &mut ExperimentRecord,
) -> Result<()> {
    if eval.eps_gibbs <= 0.5 && eval.alpha_gibbs > 0.0 {
        bounds.c_bound = Some(c_bound(eval.eps_gibbs, eval.alpha_gibbs)?);
        rec.optimistic_bpm_bound = Some(optimistic_bpm_bound(
            eval.eps_gibbs,
            eval.alpha_gibbs,
            eval.delta_approx,
        )?);
    }
    Ok(())
}
