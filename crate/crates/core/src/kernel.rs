//! Kernel functions and Gram construction.
//!
//! The main kernel is the compositional arccosine kernel, the NN-GP covariance of a
//! depth-`L` relu MLP:
//!
//! ```text
//! k(x, x') = h∘…∘h (xᵀx' / d0)      (L - 1 applications)
//! h(t)     = (1/π)·[√(1 - t²) + t·(π - arccos t)]
//! ```
//!
//! It expects inputs normalized to `‖x‖² = d0`, so that `k(x, x) = 1`. Normalization is
//! the data module's job; here it is only checked. The linear and RBF kinds exist
//! to give tests analytic cross-checks.

use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Inner products may overshoot ±1 by a few ulps; anything within this is clamped.
pub const CLAMP_TOL: f64 = 1e-9;

/// Relative tolerance on `‖x‖² = d0` for arccosine inputs.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// Depth-`depth` arccosine kernel; `depth - 1` applications of `h`.
    #[serde(rename = "arccosine")]
    ArcCosine { depth: u32 },
    /// `xᵀx' / d0`.
    Linear,
    /// `exp(-‖x - x'‖² / (2ℓ²))`.
    Rbf { lengthscale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub input_dim: usize,
}

impl KernelSpec {
    pub fn arccosine(depth: u32, input_dim: usize) -> Result<Self> {
        Self::new(KernelKind::ArcCosine { depth }, input_dim)
    }

    pub fn linear(input_dim: usize) -> Result<Self> {
        Self::new(KernelKind::Linear, input_dim)
    }

    pub fn rbf(lengthscale: f64, input_dim: usize) -> Result<Self> {
        Self::new(KernelKind::Rbf { lengthscale }, input_dim)
    }

    pub fn new(kind: KernelKind, input_dim: usize) -> Result<Self> {
        let spec = Self { kind, input_dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidParameter("input_dim must be positive".into()));
        }
        match self.kind {
            KernelKind::ArcCosine { depth } if depth < 2 => Err(Error::InvalidParameter(format!(
                "arccosine depth must be >= 2, got {depth}"
            ))),
            KernelKind::Rbf { lengthscale } if !(lengthscale > 0.0) || !lengthscale.is_finite() => {
                Err(Error::InvalidParameter(format!(
                    "rbf lengthscale must be positive, got {lengthscale}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        if let KernelKind::ArcCosine { .. } = self.kind {
            let d0 = self.input_dim as f64;
            let norm_sq = dot(x, x);
            if (norm_sq - d0).abs() > NORM_TOL * d0 {
                return Err(Error::NotNormalized {
                    norm_sq,
                    expected: d0,
                });
            }
        }
        Ok(())
    }

    /// Kernel value for inputs already known to be valid.
    fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let d0 = self.input_dim as f64;
        match self.kind {
            KernelKind::ArcCosine { depth } => {
                let mut t = dot(x, x2) / d0;
                for _ in 1..depth {
                    t = arccos_h(t)?;
                }
                Ok(t)
            }
            KernelKind::Linear => Ok(dot(x, x2) / d0),
            KernelKind::Rbf { lengthscale } => {
                let dist_sq: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok((-dist_sq / (2.0 * lengthscale * lengthscale)).exp())
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The arccosine map `h(t) = (1/π)[√(1-t²) + t(π - arccos t)]`.
///
/// Inputs within [`CLAMP_TOL`] of ±1 are clamped onto the interval.
pub fn arccos_h(t: f64) -> Result<f64> {
    if !(t.abs() <= 1.0 + CLAMP_TOL) {
        return Err(Error::Domain { value: t });
    }
    let t = t.clamp(-1.0, 1.0);
    let value = ((1.0 - t * t).sqrt() + t * (PI - t.acos())) / PI;
    Ok(value.clamp(0.0, 1.0))
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    spec.check_input(x)?;
    spec.check_input(x2)?;
    spec.eval_unchecked(x, x2)
}

/// Symmetric `n × n` Gram matrix.
pub fn gram_matrix(spec: &KernelSpec, xs: &[Vec<f64>]) -> Result<nalgebra::DMatrix<f64>> {
    let n = xs.len();
    if n == 0 {
        return Err(Error::InvalidParameter(
            "gram_matrix needs at least one input".into(),
        ));
    }
    for x in xs {
        spec.check_input(x)?;
    }
    // Upper triangle row by row, mirrored below, so K is exactly symmetric.
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| spec.eval_unchecked(&xs[i], &xs[j]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut k = nalgebra::DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + offset;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `[k(x, x_1), …, k(x, x_n)]`.
pub fn gram_vector(
    spec: &KernelSpec,
    xs: &[Vec<f64>],
    x: &[f64],
) -> Result<nalgebra::DVector<f64>> {
    spec.check_input(x)?;
    let values = xs
        .iter()
        .map(|xi| {
            spec.check_input(xi)?;
            // argument order matches gram_matrix's upper triangle for training points
            spec.eval_unchecked(xi, x)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(nalgebra::DVector::from_vec(values))
}

/// Gram vectors for many query points, one column per query (`n × q`).
pub fn cross_gram(
    spec: &KernelSpec,
    xs: &[Vec<f64>],
    queries: &[Vec<f64>],
) -> Result<nalgebra::DMatrix<f64>> {
    for x in xs.iter().chain(queries) {
        spec.check_input(x)?;
    }
    let cols: Vec<Vec<f64>> = queries
        .par_iter()
        .map(|q| {
            xs.iter()
                .map(|xi| spec.eval_unchecked(xi, q))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let n = xs.len();
    Ok(nalgebra::DMatrix::from_fn(n, queries.len(), |i, j| {
        cols[j][i]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn normalized(v: Vec<f64>) -> Vec<f64> {
        let d0 = v.len() as f64;
        let scale = (d0 / dot(&v, &v)).sqrt();
        v.into_iter().map(|x| x * scale).collect()
    }

    #[test]
    fn h_endpoints_and_centre() {
        assert_eq!(arccos_h(1.0).unwrap(), 1.0);
        assert_eq!(arccos_h(-1.0).unwrap(), 0.0);
        assert!((arccos_h(0.0).unwrap() - 1.0 / PI).abs() < 1e-16);
    }

    #[test]
    fn h_clamps_ulp_overshoot_and_rejects_far_outside() {
        assert_eq!(arccos_h(1.0 + 1e-12).unwrap(), 1.0);
        assert_eq!(arccos_h(-1.0 - 1e-12).unwrap(), 0.0);
        assert!(matches!(arccos_h(1.0 + 1e-6), Err(Error::Domain { .. })));
        assert!(arccos_h(f64::NAN).is_err());
    }

    #[test]
    fn h_is_monotone_on_dense_grid() {
        let mut prev = arccos_h(-1.0).unwrap();
        for i in 1..=100_000 {
            let t = -1.0 + 2.0 * i as f64 / 100_000.0;
            let v = arccos_h(t).unwrap();
            assert!(v >= prev, "t={t}");
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn arccosine_examples() {
        let spec2 = KernelSpec::arccosine(2, 2).unwrap();
        let spec3 = KernelSpec::arccosine(3, 2).unwrap();
        let a = normalized(vec![1.0, 0.0]);
        let b = normalized(vec![0.0, 1.0]);
        assert_eq!(kernel_eval(&spec2, &a, &a).unwrap(), 1.0);
        assert!((kernel_eval(&spec2, &a, &b).unwrap() - 1.0 / PI).abs() < 1e-15);
        // h(1/π) evaluated independently in 50-digit arithmetic (mpmath)
        let h_of_inv_pi = 0.493_731_090_200_371_5;
        assert!((kernel_eval(&spec3, &a, &b).unwrap() - h_of_inv_pi).abs() < 1e-14);
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::arccosine(1, 3).is_err());
        assert!(KernelSpec::rbf(0.0, 3).is_err());
        assert!(KernelSpec::rbf(-1.0, 3).is_err());
        assert!(KernelSpec::linear(0).is_err());
    }

    #[test]
    fn arccosine_rejects_unnormalized_and_wrong_dims() {
        let spec = KernelSpec::arccosine(2, 2).unwrap();
        assert!(matches!(
            kernel_eval(&spec, &[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            kernel_eval(&spec, &[1.0, 1.0, 0.0], &[1.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        // rbf does not require normalization
        let rbf = KernelSpec::rbf(1.0, 2).unwrap();
        assert_eq!(kernel_eval(&rbf, &[3.0, 0.0], &[3.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn gram_examples() {
        let spec = KernelSpec::arccosine(2, 2).unwrap();
        let a = normalized(vec![1.0, 0.0]);
        let b = normalized(vec![0.0, 1.0]);
        let k1 = gram_matrix(&spec, std::slice::from_ref(&a)).unwrap();
        assert_eq!(k1[(0, 0)], 1.0);
        let k2 = gram_matrix(&spec, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(k2[(0, 0)], 1.0);
        assert_eq!(k2[(1, 1)], 1.0);
        assert!((k2[(0, 1)] - 1.0 / PI).abs() < 1e-15);
        assert_eq!(k2[(0, 1)], k2[(1, 0)]);
        assert!(gram_matrix(&spec, &[]).is_err());
    }

    #[test]
    fn gram_vector_examples() {
        let spec = KernelSpec::arccosine(2, 3).unwrap();
        let e = |i: usize| {
            let mut v = vec![0.0; 3];
            v[i] = 3f64.sqrt();
            v
        };
        let v = gram_vector(&spec, &[e(0)], &e(0)).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);
        let v = gram_vector(&spec, &[e(0), e(1)], &e(2)).unwrap();
        for x in v.iter() {
            assert!((x - 1.0 / PI).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn kernel_symmetric_and_unit_diagonal(
            a in prop::collection::vec(-3.0f64..3.0, 5),
            b in prop::collection::vec(-3.0f64..3.0, 5),
            depth in 2u32..9,
        ) {
            prop_assume!(dot(&a, &a) > 1e-6 && dot(&b, &b) > 1e-6);
            let (a, b) = (normalized(a), normalized(b));
            let spec = KernelSpec::arccosine(depth, 5).unwrap();
            prop_assert_eq!(kernel_eval(&spec, &a, &b).unwrap(), kernel_eval(&spec, &b, &a).unwrap());
            prop_assert!((kernel_eval(&spec, &a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
