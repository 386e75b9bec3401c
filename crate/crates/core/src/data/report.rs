//! Experiment reports: JSON Lines records plus a flat CSV export.
//!
//! Each line of a report file is one [`ExperimentRecord`]. Appending a line never
//! disturbs earlier ones. Required keys are `experiment`, `n`, `delta`, `master_seed`,
//! `row_seed`, `jitter_used` and `kernel`; the remaining keys may be absent or null.

use crate::bounds::BoundReport;
use crate::classifier::ClassifierEval;
use crate::kernel::{KernelKind, KernelSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Bounds,
    Compare,
}

/// One experiment row: a single training size of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub delta: f64,
    pub master_seed: u64,
    /// Seed of this row's stream; rerunning the row alone with it reproduces it.
    pub row_seed: u64,
    pub jitter_used: f64,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub bounds: Option<BoundReport>,
    /// Iso-posterior ensemble with the centroidal BPM.
    #[serde(default)]
    pub eval: Option<ClassifierEval>,
    /// GP-posterior ensemble with the centre-of-mass BPM.
    #[serde(default)]
    pub eval_com: Option<ClassifierEval>,
    #[serde(default)]
    pub optimistic_bpm_bound: Option<f64>,
    #[serde(default)]
    pub clamped_variances: Option<usize>,
    #[serde(default)]
    pub error: Option<String>,
}

pub fn append_report(path: &Path, record: &ExperimentRecord) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    Ok(())
}

pub fn load_reports(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// Flat view of a record for plotting. Absent values are empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub delta: f64,
    pub master_seed: u64,
    pub row_seed: u64,
    pub jitter_used: f64,
    pub kernel: String,
    pub kl_iso: Option<f64>,
    pub log_inv_py: Option<f64>,
    pub log_inv_py_se: Option<f64>,
    pub gibbs_bound: Option<f64>,
    pub bpm_bound_centroid: Option<f64>,
    pub bpm_bound_com: Option<f64>,
    pub bpm_bound_com_conservative: Option<f64>,
    /// Without the confidence term.
    pub rademacher_bound: Option<f64>,
    pub c_bound: Option<f64>,
    pub optimistic_bpm_bound: Option<f64>,
    pub eps_gibbs: Option<f64>,
    pub eps_bayes: Option<f64>,
    pub eps_bpm: Option<f64>,
    pub delta_approx: Option<f64>,
    pub alpha_gibbs: Option<f64>,
    pub se_gibbs: Option<f64>,
    pub se_bayes: Option<f64>,
    pub se_bpm: Option<f64>,
    pub test_count: Option<usize>,
    pub ensemble_size: Option<usize>,
    pub bayes_ties: Option<usize>,
    pub eps_gibbs_gp: Option<f64>,
    pub eps_bayes_gp: Option<f64>,
    pub eps_bpm_com: Option<f64>,
    pub clamped_variances: Option<usize>,
    pub error: Option<String>,
}

fn kernel_label(spec: &KernelSpec) -> String {
    match spec.kind {
        KernelKind::ArcCosine { depth } => format!("arccosine(L={depth})"),
        KernelKind::Linear => "linear".into(),
        KernelKind::Rbf { lengthscale } => format!("rbf(l={lengthscale})"),
    }
}

impl From<&ExperimentRecord> for CsvRow {
    fn from(r: &ExperimentRecord) -> Self {
        let b = r.bounds.as_ref();
        let est = b.and_then(|b| b.log_inv_py);
        let com = b.and_then(|b| b.bpm_bound_com);
        let e = r.eval.as_ref();
        let g = r.eval_com.as_ref();
        Self {
            experiment: r.experiment,
            n: r.n,
            delta: r.delta,
            master_seed: r.master_seed,
            row_seed: r.row_seed,
            jitter_used: r.jitter_used,
            kernel: kernel_label(&r.kernel),
            kl_iso: b.map(|b| b.kl_iso),
            log_inv_py: est.map(|e| e.log_inv_py),
            log_inv_py_se: est.map(|e| e.std_error),
            gibbs_bound: b.map(|b| b.gibbs_bound),
            bpm_bound_centroid: b.map(|b| b.bpm_bound_centroid),
            bpm_bound_com: com.map(|c| c.point),
            bpm_bound_com_conservative: com.map(|c| c.conservative),
            rademacher_bound: b.map(|b| b.rademacher_bound),
            c_bound: b.and_then(|b| b.c_bound),
            optimistic_bpm_bound: r.optimistic_bpm_bound,
            eps_gibbs: e.map(|e| e.eps_gibbs),
            eps_bayes: e.map(|e| e.eps_bayes),
            eps_bpm: e.map(|e| e.eps_bpm),
            delta_approx: e.map(|e| e.delta_approx),
            alpha_gibbs: e.map(|e| e.alpha_gibbs),
            se_gibbs: e.map(|e| e.se.gibbs),
            se_bayes: e.map(|e| e.se.bayes),
            se_bpm: e.map(|e| e.se.bpm),
            test_count: e.map(|e| e.test_count),
            ensemble_size: e.map(|e| e.ensemble_size),
            bayes_ties: e.map(|e| e.bayes_ties),
            eps_gibbs_gp: g.map(|g| g.eps_gibbs),
            eps_bayes_gp: g.map(|g| g.eps_bayes),
            eps_bpm_com: g.map(|g| g.eps_bpm),
            clamped_variances: r.clamped_variances,
            error: r.error.clone(),
        }
    }
}

/// Writes all records as CSV with a single header row, replacing any existing file.
pub fn write_csv(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Schema(e.to_string())))
        .collect()
}
