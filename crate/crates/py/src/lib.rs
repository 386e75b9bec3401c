//! Python bindings for `kbpm`.
//!
//! Vectors and matrices cross the boundary as lists. Structured results (orthant
//! estimates, bound reports, evaluations, experiment rows) come back as dicts.

use kbpm::bounds::{self, BoundReport};
use kbpm::classifier;
use kbpm::data::{synthetic_gaussians, synthetic_xor, Dataset, DatasetSource};
use kbpm::experiment::{bounds_row, compare_row, RowConfig};
use kbpm::gram::GramFactorization;
use kbpm::kernel::{self, KernelSpec};
use kbpm::orthant;
use kbpm::sampler::{self, PosteriorKind, PosteriorSamples};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: kbpm::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

#[pyclass(name = "Kernel", frozen)]
struct PyKernel {
    spec: KernelSpec,
}

#[pymethods]
impl PyKernel {
    #[staticmethod]
    fn arccosine(depth: u32, input_dim: usize) -> PyResult<Self> {
        Ok(Self {
            spec: KernelSpec::arccosine(depth, input_dim).map_err(err)?,
        })
    }

    #[staticmethod]
    fn linear(input_dim: usize) -> PyResult<Self> {
        Ok(Self {
            spec: KernelSpec::linear(input_dim).map_err(err)?,
        })
    }

    #[staticmethod]
    fn rbf(lengthscale: f64, input_dim: usize) -> PyResult<Self> {
        Ok(Self {
            spec: KernelSpec::rbf(lengthscale, input_dim).map_err(err)?,
        })
    }

    fn eval(&self, x: Vec<f64>, x2: Vec<f64>) -> PyResult<f64> {
        kernel::kernel_eval(&self.spec, &x, &x2).map_err(err)
    }

    fn gram(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&kernel::gram_matrix(&self.spec, &xs).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Kernel({:?}, input_dim={})",
            self.spec.kind, self.spec.input_dim
        )
    }
}

/// Cholesky factorization of a Gram matrix.
#[pyclass(name = "Gram", frozen)]
struct PyGram {
    inner: GramFactorization,
}

#[pymethods]
impl PyGram {
    #[new]
    fn new(matrix: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = GramFactorization::factorize(to_matrix(&matrix)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_inputs(kernel: &PyKernel, xs: Vec<Vec<f64>>) -> PyResult<Self> {
        let k = kernel::gram_matrix(&kernel.spec, &xs).map_err(err)?;
        Ok(Self {
            inner: GramFactorization::factorize(k).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn jitter_used(&self) -> f64 {
        self.inner.jitter_used()
    }

    fn logdet(&self) -> f64 {
        self.inner.logdet()
    }

    fn det_root(&self) -> f64 {
        self.inner.det_root()
    }

    fn solve(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = self.inner.solve(&DVector::from_vec(v)).map_err(err)?;
        Ok(x.iter().copied().collect())
    }

    fn rkhs_norm_sq(&self, v: Vec<f64>) -> PyResult<f64> {
        self.inner.rkhs_norm_sq(&DVector::from_vec(v)).map_err(err)
    }

    fn complexity_a(&self, labels: Vec<f64>) -> PyResult<f64> {
        orthant::complexity_a(&self.inner, &labels).map_err(err)
    }

    fn interpolate(&self, labels: Vec<f64>, kx: Vec<f64>) -> PyResult<f64> {
        classifier::interpolate(&self.inner, &labels, &DVector::from_vec(kx)).map_err(err)
    }

    fn predictive_variance(&self, kxx: f64, kx: Vec<f64>) -> PyResult<f64> {
        let v = classifier::predictive_variance_from(&self.inner, kxx, &DVector::from_vec(kx))
            .map_err(err)?;
        Ok(v.value)
    }

    fn bpm_predict(&self, mean_labels: Vec<f64>, kx: Vec<f64>) -> PyResult<f64> {
        classifier::bpm_predict(&self.inner, &mean_labels, &DVector::from_vec(kx)).map_err(err)
    }

    #[pyo3(signature = (labels, delta, orthant_draws=None, seed=0))]
    fn bound_report<'py>(
        &self,
        py: Python<'py>,
        labels: Vec<f64>,
        delta: f64,
        orthant_draws: Option<u64>,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let est = orthant_draws
            .map(|d| orthant::orthant_ghk(&self.inner, &labels, d, seed))
            .transpose()
            .map_err(err)?;
        let report = BoundReport::compute(&self.inner, &labels, delta, est).map_err(err)?;
        to_py(py, &report)
    }

    fn orthant_ghk<'py>(
        &self,
        py: Python<'py>,
        labels: Vec<f64>,
        draws: u64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &orthant::orthant_ghk(&self.inner, &labels, draws, seed).map_err(err)?,
        )
    }

    fn orthant_naive_mc<'py>(
        &self,
        py: Python<'py>,
        labels: Vec<f64>,
        draws: u64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &orthant::orthant_naive_mc(&self.inner, &labels, draws, seed).map_err(err)?,
        )
    }

    fn kl_iso_mc_check<'py>(
        &self,
        py: Python<'py>,
        labels: Vec<f64>,
        draws: u64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &orthant::kl_iso_mc_check(&self.inner, &labels, draws, seed).map_err(err)?,
        )
    }

    fn sample_iso(&self, labels: Vec<f64>, m: usize, seed: u64) -> PyResult<PySamples> {
        sampler::sample_iso_orthant(self.inner.det_root(), &labels, m, seed)
            .map(PySamples::from)
            .map_err(err)
    }

    #[pyo3(signature = (labels, m, seed, burn_in=sampler::DEFAULT_BURN_IN, thinning=sampler::DEFAULT_THINNING))]
    fn sample_gp(
        &self,
        labels: Vec<f64>,
        m: usize,
        seed: u64,
        burn_in: usize,
        thinning: usize,
    ) -> PyResult<PySamples> {
        sampler::sample_gp_orthant_gibbs(&self.inner, &labels, m, burn_in, thinning, seed)
            .map(PySamples::from)
            .map_err(err)
    }

    fn sample_gp_rejection(
        &self,
        labels: Vec<f64>,
        m: usize,
        max_attempts: u64,
        seed: u64,
    ) -> PyResult<PySamples> {
        sampler::sample_gp_orthant_rejection(self.inner.matrix(), &labels, m, max_attempts, seed)
            .map(|o| PySamples::from(o.samples))
            .map_err(err)
    }
}

/// Draws from an orthant-truncated posterior, one row per draw.
#[pyclass(name = "Samples", frozen)]
struct PySamples {
    inner: PosteriorSamples,
}

impl From<PosteriorSamples> for PySamples {
    fn from(inner: PosteriorSamples) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PySamples {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind() {
            PosteriorKind::Gp => "gp",
            PosteriorKind::Iso => "iso",
        }
    }

    #[getter]
    fn labels(&self) -> Vec<f64> {
        self.inner.labels().to_vec()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.samples())
    }

    fn centre_of_mass(&self) -> PyResult<Vec<f64>> {
        let c = sampler::centre_of_mass_labels(&self.inner).map_err(err)?;
        Ok(c.iter().copied().collect())
    }

    fn halfspace_agreement(&self, centre: Vec<f64>, direction: Vec<f64>) -> PyResult<f64> {
        classifier::halfspace_agreement(
            self.inner.samples(),
            &DVector::from_vec(centre),
            &DVector::from_vec(direction),
        )
        .map_err(err)
    }
}

/// Labelled inputs with `‖x‖² = d0` on every row.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> PyResult<Self> {
        let inner = Dataset::new(xs, ys, DatasetSource::External, 0).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn gaussians(n: usize, d0: usize, separation: f64, seed: u64) -> PyResult<Self> {
        let inner = synthetic_gaussians(n, d0, separation, seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn xor(n: usize, d0: usize, seed: u64) -> PyResult<Self> {
        let inner = synthetic_xor(n, d0, seed).map_err(err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn inputs(&self) -> Vec<Vec<f64>> {
        self.inner.inputs().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<f64> {
        self.inner.labels().to_vec()
    }

    fn split(&self, train: usize, test: usize) -> PyResult<(Self, Self)> {
        let (a, b) = self.inner.split(train, test).map_err(err)?;
        Ok((Self { inner: a }, Self { inner: b }))
    }
}

fn row_config(kernel: &PyKernel, delta: f64, ensemble: usize, ycom_cap: usize) -> RowConfig {
    RowConfig {
        delta,
        ensemble,
        ycom_cap,
        ..RowConfig::new(kernel.spec)
    }
}

#[pyfunction]
fn arccos_h(t: f64) -> PyResult<f64> {
    kernel::arccos_h(t).map_err(err)
}

#[pyfunction]
fn gibbs_bound(kl: f64, n: usize, delta: f64) -> PyResult<f64> {
    bounds::gibbs_bound(kl, n, delta).map_err(err)
}

#[pyfunction]
fn bpm_bound_centroid(complexity: f64, n: usize, delta: f64) -> PyResult<f64> {
    bounds::bpm_bound_centroid(complexity, n, delta).map_err(err)
}

#[pyfunction]
fn rademacher_bound(rkhs_norm_sq: f64, n: usize) -> PyResult<f64> {
    bounds::rademacher_bound(rkhs_norm_sq, n).map_err(err)
}

#[pyfunction]
fn c_bound(eps_gibbs: f64, alpha_gibbs: f64) -> PyResult<f64> {
    bounds::c_bound(eps_gibbs, alpha_gibbs).map_err(err)
}

#[pyfunction]
fn optimistic_bpm_bound(eps_gibbs: f64, alpha_gibbs: f64, delta_approx: f64) -> PyResult<f64> {
    bounds::optimistic_bpm_bound(eps_gibbs, alpha_gibbs, delta_approx).map_err(err)
}

#[pyfunction]
fn bivariate_same_sign_probability(rho: f64) -> f64 {
    orthant::bivariate_same_sign_probability(rho)
}

/// Error rates from per-test-point ensemble votes and BPM predictions.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    truth: Vec<f64>,
    votes: Vec<Vec<f64>>,
    bpm: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &classifier::evaluate(&truth, &votes, &bpm).map_err(err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (kernel, train, master_seed, row_index=0, delta=0.1, ycom_cap=200))]
fn bounds_experiment<'py>(
    py: Python<'py>,
    kernel: &PyKernel,
    train: &PyDataset,
    master_seed: u64,
    row_index: u64,
    delta: f64,
    ycom_cap: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = row_config(kernel, delta, 1, ycom_cap);
    to_py(py, &bounds_row(&cfg, &train.inner, master_seed, row_index))
}

#[pyfunction]
#[pyo3(signature = (kernel, train, test, master_seed, row_index=0, delta=0.1, ensemble=1000, ycom_cap=200))]
#[allow(clippy::too_many_arguments)]
fn compare_experiment<'py>(
    py: Python<'py>,
    kernel: &PyKernel,
    train: &PyDataset,
    test: &PyDataset,
    master_seed: u64,
    row_index: u64,
    delta: f64,
    ensemble: usize,
    ycom_cap: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = row_config(kernel, delta, ensemble, ycom_cap);
    let rec = py.detach(|| compare_row(&cfg, &train.inner, &test.inner, master_seed, row_index));
    to_py(py, &rec)
}

#[pymodule]
fn kbpm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyGram>()?;
    m.add_class::<PySamples>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(arccos_h, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_bound, m)?)?;
    m.add_function(wrap_pyfunction!(bpm_bound_centroid, m)?)?;
    m.add_function(wrap_pyfunction!(rademacher_bound, m)?)?;
    m.add_function(wrap_pyfunction!(c_bound, m)?)?;
    m.add_function(wrap_pyfunction!(optimistic_bpm_bound, m)?)?;
    m.add_function(wrap_pyfunction!(bivariate_same_sign_probability, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(bounds_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(compare_experiment, m)?)?;
    Ok(())
}
