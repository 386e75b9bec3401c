//! Experiment driver behind the `kbpm` binary.
//!
//! Settings come from an optional TOML file; command-line flags override it. Every
//! run writes a JSON Lines report and a CSV export to the output directory.
//!
//! Exit codes: 0 on success, 1 when a verification fails, 2 on configuration or setup
//! errors. Errors inside a single sweep row are written into that row instead.

use crate::data::{
    append_report, load_mnist, save_matrix, synthetic_gaussians, synthetic_xor, write_csv, Dataset,
    ExperimentRecord,
};
use crate::experiment::{bounds_row, compare_row, RowConfig};
use crate::gram::GramFactorization;
use crate::kernel::{gram_matrix, KernelKind, KernelSpec};
use crate::rng::derive_seed;
use crate::sampler::{
    centre_of_mass_labels, sample_gp_orthant_chains, sample_iso_orthant, ChainMeta, PosteriorKind,
    DEFAULT_BURN_IN, DEFAULT_THINNING,
};
use crate::verify::{run_verify, VerifyOptions};
use crate::{Error, Result};
use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "kbpm",
    version,
    about = "Kernel interpolation as a Bayes point machine"
)]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for reports, CSV exports and sample matrices.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Comma-separated training sizes, strictly increasing.
    #[arg(long, global = true, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    /// Confidence parameter of the bounds, in (0, 1].
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Arccosine kernel depth `L`.
    #[arg(long, global = true)]
    pub depth: Option<u32>,
    /// Posterior ensemble size `m`.
    #[arg(long, global = true)]
    pub ensemble: Option<usize>,
    /// Largest `n` for which `log(1/P_Y)` and the centre-of-mass labels are estimated.
    #[arg(long, global = true)]
    pub ycom_cap: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Risk bounds for every training size.
    Bounds,
    /// Gibbs, Bayes and BPM test errors alongside the bounds.
    Compare,
    /// Draw and persist posterior samples for every training size.
    Sample,
    /// Run the fixed-scale verification suites.
    Verify {
        /// Test mode: invert every tolerance so the failure path runs.
        #[arg(long, hide = true)]
        corrupt_tolerance: bool,
    },
    /// Load the configured dataset, print a summary and export it.
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Mnist { images: PathBuf, labels: PathBuf },
    SyntheticGaussians { d0: usize, separation: f64 },
    SyntheticXor { d0: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub chains: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            burn_in: DEFAULT_BURN_IN,
            thinning: DEFAULT_THINNING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub kernel: KernelKind,
    pub n_grid: Vec<usize>,
    pub test_count: usize,
    pub delta: f64,
    pub ensemble: usize,
    pub ycom_cap: usize,
    pub orthant_draws: u64,
    pub chain: ChainConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::Mnist {
                images: "data/mnist/mnist5k-images-idx3-ubyte.gz".into(),
                labels: "data/mnist/mnist5k-labels-idx1-ubyte.gz".into(),
            },
            kernel: KernelKind::ArcCosine { depth: 7 },
            n_grid: vec![100, 200, 500, 1000],
            test_count: 1000,
            delta: 0.1,
            ensemble: 1000,
            ycom_cap: 200,
            orthant_draws: 20_000,
            chain: ChainConfig::default(),
            seed: 0,
            out_dir: "results".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Flags win over file values.
    pub fn apply_overrides(&mut self, cli: &Cli) -> Result<()> {
        if let Some(seed) = cli.seed {
            self.seed = seed;
        }
        if let Some(dir) = &cli.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(grid) = &cli.n_grid {
            self.n_grid = grid.clone();
        }
        if let Some(delta) = cli.delta {
            self.delta = delta;
        }
        if let Some(depth) = cli.depth {
            match &mut self.kernel {
                KernelKind::ArcCosine { depth: d } => *d = depth,
                _ => {
                    return Err(Error::Config(
                        "--depth only applies to the arccosine kernel".into(),
                    ))
                }
            }
        }
        if let Some(m) = cli.ensemble {
            self.ensemble = m;
        }
        if let Some(cap) = cli.ycom_cap {
            self.ycom_cap = cap;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_grid.is_empty() {
            return bad("n_grid is empty".into());
        }
        if self.n_grid[0] < 2 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "n_grid must be strictly increasing with entries >= 2, got {:?}",
                self.n_grid
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.test_count == 0 || self.ensemble == 0 || self.orthant_draws == 0 {
            return bad("test_count, ensemble and orthant_draws must be positive".into());
        }
        if self.chain.chains == 0 || self.chain.thinning == 0 {
            return bad("chain.chains and chain.thinning must be positive".into());
        }
        match self.dataset {
            DatasetConfig::SyntheticGaussians { d0, separation }
                if d0 == 0 || !(separation >= 0.0) =>
            {
                return bad("synthetic_gaussians needs d0 >= 1 and separation >= 0".into())
            }
            DatasetConfig::SyntheticXor { d0 } if d0 < 2 => {
                return bad("synthetic_xor needs d0 >= 2".into())
            }
            _ => {}
        }
        KernelSpec::new(self.kernel, 1)
            .map(|_| ())
            .map_err(|e| Error::Config(e.to_string()))
    }

    fn max_n(&self) -> usize {
        *self.n_grid.last().expect("validated non-empty")
    }

    pub fn load_dataset(&self, count: usize) -> Result<Dataset> {
        let seed = derive_seed(self.seed, DATA_STREAM);
        match &self.dataset {
            DatasetConfig::Mnist { images, labels } => load_mnist(images, labels, count, seed),
            DatasetConfig::SyntheticGaussians { d0, separation } => {
                synthetic_gaussians(count, *d0, *separation, seed)
            }
            DatasetConfig::SyntheticXor { d0 } => synthetic_xor(count, *d0, seed),
        }
    }

    pub fn row_config(&self, input_dim: usize) -> Result<RowConfig> {
        Ok(RowConfig {
            kernel: KernelSpec::new(self.kernel, input_dim)?,
            delta: self.delta,
            ensemble: self.ensemble,
            ycom_cap: self.ycom_cap,
            orthant_draws: self.orthant_draws,
            chains: self.chain.chains,
            burn_in: self.chain.burn_in,
            thinning: self.chain.thinning,
        })
    }
}

/// Stream of the master seed that picks and orders the dataset.
const DATA_STREAM: u64 = u64::MAX;

fn prepare_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::Config(format!("{}: {e}", cfg.out_dir.display())))
}

fn write_outputs(cfg: &ExperimentConfig, stem: &str, records: &[ExperimentRecord]) -> Result<()> {
    let jsonl = cfg.out_dir.join(format!("{stem}.jsonl"));
    if jsonl.exists() {
        std::fs::remove_file(&jsonl)?;
    }
    for r in records {
        append_report(&jsonl, r)?;
    }
    write_csv(&cfg.out_dir.join(format!("{stem}.csv")), records)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

pub fn cmd_bounds(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let data = cfg.load_dataset(cfg.max_n())?;
    let row_cfg = cfg.row_config(data.dim())?;
    let records: Vec<ExperimentRecord> = cfg
        .n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let train = data.slice(0..n)?;
            Ok(bounds_row(&row_cfg, &train, cfg.seed, i as u64))
        })
        .collect::<Result<_>>()?;
    write_outputs(cfg, "bounds", &records)?;
    Ok(records)
}

pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let total = cfg.max_n() + cfg.test_count;
    let data = cfg.load_dataset(total)?;
    let test = data.slice(cfg.max_n()..total)?;
    let row_cfg = cfg.row_config(data.dim())?;
    let records: Vec<ExperimentRecord> = cfg
        .n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let train = data.slice(0..n)?;
            Ok(compare_row(&row_cfg, &train, &test, cfg.seed, i as u64))
        })
        .collect::<Result<_>>()?;
    write_outputs(cfg, "compare", &records)?;
    Ok(records)
}

/// Sidecar written next to each persisted sample matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub kind: PosteriorKind,
    pub n: usize,
    pub labels: Vec<f64>,
    pub chain_meta: ChainMeta,
    pub chains: usize,
    pub jitter_used: f64,
    pub scale_sq: Option<f64>,
    pub centre_of_mass: Vec<f64>,
}

/// Persists iso samples for every `n`, and GP chain samples for `n ≤ ycom_cap`.
/// Returns the paths of the matrices written.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = cfg.load_dataset(cfg.max_n())?;
    let row_cfg = cfg.row_config(data.dim())?;
    let mut written = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let train = data.slice(0..n)?;
        let y = train.labels();
        let f = GramFactorization::factorize(gram_matrix(&row_cfg.kernel, train.inputs())?)?;
        let row_seed = derive_seed(cfg.seed, i as u64);
        let scale_sq = f.det_root();
        let iso = sample_iso_orthant(scale_sq, y, cfg.ensemble, derive_seed(row_seed, 2))?;
        let mut outputs = vec![(iso, Some(scale_sq), 1)];
        if n <= cfg.ycom_cap {
            let per_chain = cfg.ensemble.div_ceil(cfg.chain.chains);
            let gp = sample_gp_orthant_chains(
                &f,
                y,
                cfg.chain.chains,
                per_chain,
                cfg.chain.burn_in,
                cfg.chain.thinning,
                derive_seed(row_seed, 4),
            )?;
            outputs.push((gp, None, cfg.chain.chains));
        }
        for (samples, scale_sq, chains) in outputs {
            let tag = match samples.kind() {
                PosteriorKind::Iso => "iso",
                PosteriorKind::Gp => "gp",
            };
            let path = cfg.out_dir.join(format!("samples_{tag}_n{n}.bpmmat"));
            save_matrix(&path, samples.samples())?;
            let sidecar = SampleSidecar {
                kind: samples.kind(),
                n,
                labels: y.to_vec(),
                chain_meta: samples.meta(),
                chains,
                jitter_used: f.jitter_used(),
                scale_sq,
                centre_of_mass: centre_of_mass_labels(&samples)?.as_slice().to_vec(),
            };
            let meta_path = cfg.out_dir.join(format!("samples_{tag}_n{n}.meta.json"));
            std::fs::write(&meta_path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Loads `test_count + max(n_grid)` examples, prints a summary and exports the inputs
/// and labels as matrices.
pub fn cmd_data(cfg: &ExperimentConfig) -> Result<String> {
    let count = cfg.max_n() + cfg.test_count;
    let data = cfg.load_dataset(count)?;
    let positive = data.labels().iter().filter(|&&y| y > 0.0).count();
    let worst = data
        .inputs()
        .iter()
        .map(|x| (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 - 1.0).abs())
        .fold(0.0f64, f64::max);
    let xs = DMatrix::from_fn(data.len(), data.dim(), |i, j| data.inputs()[i][j]);
    let ys = DMatrix::from_row_slice(data.len(), 1, data.labels());
    save_matrix(&cfg.out_dir.join("dataset_x.bpmmat"), &xs)?;
    save_matrix(&cfg.out_dir.join("dataset_y.bpmmat"), &ys)?;
    Ok(format!(
        "source: {:?}\nexamples: {}\ninput dimension: {}\nlabel +1: {positive}, label -1: {}\nmax relative norm deviation: {worst:.2e}\nwritten: dataset_x.bpmmat, dataset_y.bpmmat\n",
        data.source(),
        data.len(),
        data.dim(),
        data.len() - positive,
    ))
}

fn format_rows(records: &[ExperimentRecord]) -> String {
    let mut out = format!(
        "{:>6} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8}\n",
        "n", "A", "gibbs", "bpm", "rademach", "eGibbs", "eBayes", "eBPM", "Delta"
    );
    for r in records {
        if let Some(err) = &r.error {
            out.push_str(&format!("{:>6} error: {err}\n", r.n));
            continue;
        }
        let b = r.bounds.as_ref();
        let e = r.eval.as_ref();
        out.push_str(&format!(
            "{:>6} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8}\n",
            r.n,
            fmt_opt(b.map(|b| b.kl_iso)),
            fmt_opt(b.map(|b| b.gibbs_bound)),
            fmt_opt(b.map(|b| b.bpm_bound_centroid)),
            fmt_opt(b.map(|b| b.rademacher_bound)),
            fmt_opt(e.map(|e| e.eps_gibbs)),
            fmt_opt(e.map(|e| e.eps_bayes)),
            fmt_opt(e.map(|e| e.eps_bpm)),
            fmt_opt(e.map(|e| e.delta_approx)),
        ));
    }
    out
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(cli)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the command and returns its exit code and the text for stdout.
fn dispatch(cli: &Cli) -> Result<(i32, String)> {
    if let Command::Verify { corrupt_tolerance } = cli.command {
        let report = run_verify(VerifyOptions {
            seed: cli.seed.unwrap_or(0),
            tolerance_scale: if corrupt_tolerance { -1.0 } else { 1.0 },
        })?;
        let code = if report.passed() {
            EXIT_OK
        } else {
            EXIT_VERIFY_FAILED
        };
        return Ok((code, report.render()));
    }
    let cfg = resolve_config(cli)?;
    prepare_out_dir(&cfg)?;
    let text = match cli.command {
        Command::Bounds => format_rows(&cmd_bounds(&cfg)?),
        Command::Compare => format_rows(&cmd_compare(&cfg)?),
        Command::Sample => cmd_sample(&cfg)?
            .iter()
            .map(|p| format!("{}\n", p.display()))
            .collect(),
        Command::Data => cmd_data(&cfg)?,
        Command::Verify { .. } => unreachable!("handled above"),
    };
    Ok((EXIT_OK, text))
}

/// Parses arguments and runs the chosen subcommand, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok((code, text)) => {
            // a closed pipe (`kbpm bounds | head`) is not an error
            let _ = std::io::stdout().write_all(text.as_bytes());
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
