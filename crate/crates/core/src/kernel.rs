//! Gram matrices, double centering and centered kernel alignment.
//!
//! Alignment between two kernels is `Tr(H K1 H K2)` with `H = I - 11ᵀ/n`.
//! `H` is never materialized: centering subtracts row and column means and
//! adds back the grand mean, and the trace is the Frobenius inner product of
//! the centered first argument with the raw second one.

use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{FairselError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: Bandwidth,
}

fn default_bandwidth() -> Bandwidth {
    Bandwidth::MedianHeuristic
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::rbf()
    }
}

impl KernelSpec {
    pub fn rbf() -> Self {
        KernelSpec {
            family: KernelFamily::Rbf,
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }

    pub fn rbf_fixed(sigma: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Rbf,
            bandwidth: Bandwidth::Fixed(sigma),
        }
    }

    pub fn linear() -> Self {
        KernelSpec {
            family: KernelFamily::Linear,
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(FairselError::config(
                    "kernel",
                    format!("fixed bandwidth must be positive, got {s}"),
                ));
            }
        }
        Ok(())
    }

    /// The bandwidth this spec would use on `data`; `None` for linear.
    pub fn sigma_for(&self, data: &Array2<f64>) -> Result<Option<f64>> {
        match (self.family, self.bandwidth) {
            (KernelFamily::Linear, _) => Ok(None),
            (KernelFamily::Rbf, Bandwidth::Fixed(s)) => Ok(Some(s)),
            (KernelFamily::Rbf, Bandwidth::MedianHeuristic) => resolve_bandwidth(data).map(Some),
        }
    }
}

/// Symmetric `n × n` kernel matrix and the bandwidth it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: Array2<f64>,
    pub bandwidth_used: Option<f64>,
}

impl GramMatrix {
    pub fn from_values(values: Array2<f64>) -> Self {
        GramMatrix {
            values,
            bandwidth_used: None,
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

fn sq_dist(data: &Array2<f64>, i: usize, j: usize) -> f64 {
    data.column(i)
        .iter()
        .zip(data.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Median pairwise Euclidean distance between instance columns, or 1.0
/// when every instance coincides.
pub fn resolve_bandwidth(data: &Array2<f64>) -> Result<f64> {
    let n = data.ncols();
    if n < 2 {
        return Err(FairselError::InvalidData(format!(
            "bandwidth needs at least 2 instances, got {n}"
        )));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(data, i, j).sqrt());
        }
    }
    let m = dists.len();
    let mid = m / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if m % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    Ok(if median < 1e-12 { 1.0 } else { median })
}

/// Builds the kernel matrix over the instance columns of `data`.
pub fn gram(data: &Array2<f64>, spec: &KernelSpec) -> Result<GramMatrix> {
    spec.validate()?;
    let sigma = spec.sigma_for(data)?;
    gram_with(data, spec.family, sigma)
}

/// Kernel matrix with an already resolved bandwidth. `sigma` is required for
/// rbf and ignored for linear.
pub fn gram_with(
    data: &Array2<f64>,
    family: KernelFamily,
    sigma: Option<f64>,
) -> Result<GramMatrix> {
    let n = data.ncols();
    if n < 2 {
        return Err(FairselError::InvalidData(format!(
            "gram matrix needs at least 2 instances, got {n}"
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(FairselError::Numeric("non-finite kernel input".into()));
    }
    let mut values = Array2::zeros((n, n));
    match family {
        KernelFamily::Rbf => {
            let sigma = sigma
                .ok_or_else(|| FairselError::Numeric("rbf kernel without bandwidth".into()))?;
            let scale = 1.0 / (2.0 * sigma * sigma);
            for i in 0..n {
                values[[i, i]] = 1.0;
                for j in (i + 1)..n {
                    let v = (-sq_dist(data, i, j) * scale).exp();
                    values[[i, j]] = v;
                    values[[j, i]] = v;
                }
            }
            Ok(GramMatrix {
                values,
                bandwidth_used: Some(sigma),
            })
        }
        KernelFamily::Linear => {
            for i in 0..n {
                for j in i..n {
                    let v = data.column(i).dot(&data.column(j));
                    values[[i, j]] = v;
                    values[[j, i]] = v;
                }
            }
            Ok(GramMatrix {
                values,
                bandwidth_used: None,
            })
        }
    }
}

/// `H K H` by row/column mean subtraction.
pub fn center_values(k: &Array2<f64>) -> Array2<f64> {
    let n = k.nrows() as f64;
    let row_means: Array1<f64> = k.rows().into_iter().map(|r| r.sum() / n).collect();
    let col_means: Array1<f64> = k.columns().into_iter().map(|c| c.sum() / n).collect();
    let grand = row_means.sum() / n;
    let mut out = k.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = *v - row_means[i] - col_means[j] + grand;
    }
    out
}

pub fn center(k: &GramMatrix) -> GramMatrix {
    GramMatrix {
        values: center_values(&k.values),
        bandwidth_used: k.bandwidth_used,
    }
}

/// Frobenius inner product `Σ_ij a_ij b_ij`.
pub fn frobenius(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|x, y| acc += x * y);
    acc
}

/// `Tr(H k1 H k2)`.
pub fn centered_alignment(k1: &GramMatrix, k2: &GramMatrix) -> Result<f64> {
    if k1.values.dim() != k2.values.dim() || k1.values.nrows() != k1.values.ncols() {
        return Err(FairselError::Shape(format!(
            "alignment of {:?} and {:?} kernels",
            k1.values.dim(),
            k2.values.dim()
        )));
    }
    Ok(frobenius(&center_values(&k1.values), &k2.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn random_psd(n: usize, seed: u64) -> GramMatrix {
        let a = random_data(n, n, seed);
        GramMatrix::from_values(a.t().dot(&a))
    }

    /// Explicit `H` and dense matrix products.
    fn naive_alignment(k1: &Array2<f64>, k2: &Array2<f64>) -> f64 {
        let n = k1.nrows();
        let h = Array2::from_shape_fn((n, n), |(i, j)| {
            f64::from(u8::from(i == j)) - 1.0 / n as f64
        });
        h.dot(k1).dot(&h).dot(k2).diag().sum()
    }

    #[test]
    fn bandwidth_single_pair_and_degenerate() {
        let two = array![[0.0, 2.0]];
        assert_eq!(resolve_bandwidth(&two).unwrap(), 2.0);
        let same = Array2::from_elem((3, 5), 4.2);
        assert_eq!(resolve_bandwidth(&same).unwrap(), 1.0);
        assert!(resolve_bandwidth(&Array2::zeros((2, 1))).is_err());
    }

    #[test]
    fn bandwidth_matches_exhaustive_median() {
        let data = random_data(3, 5, 1);
        let mut d = Vec::new();
        for i in 0..5 {
            for j in (i + 1)..5 {
                let diff = &data.column(i) - &data.column(j);
                d.push(diff.dot(&diff).sqrt());
            }
        }
        d.sort_by(f64::total_cmp);
        let expected = 0.5 * (d[4] + d[5]);
        assert!((resolve_bandwidth(&data).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn rbf_diagonal_and_flat_limit() {
        let data = random_data(4, 9, 2);
        let k = gram(&data, &KernelSpec::rbf()).unwrap();
        assert!(k.values.diag().iter().all(|&v| v == 1.0));
        let flat = gram(&data, &KernelSpec::rbf_fixed(1e6)).unwrap();
        assert!(flat.values.iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn linear_orthogonal_columns() {
        let data = array![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]];
        let k = gram(&data, &KernelSpec::linear()).unwrap();
        assert_eq!(k.values, Array2::from_diag(&array![1.0, 4.0, 9.0]));
    }

    #[test]
    fn gram_rejects_non_finite_and_bad_bandwidth() {
        let mut data = random_data(2, 4, 3);
        data[[0, 1]] = f64::NAN;
        assert!(gram(&data, &KernelSpec::rbf_fixed(1.0)).is_err());
        assert!(gram(&random_data(2, 4, 3), &KernelSpec::rbf_fixed(0.0)).is_err());
    }

    #[test]
    fn gram_is_psd_and_symmetric() {
        for (seed, spec) in [(4, KernelSpec::rbf()), (5, KernelSpec::linear())] {
            let data = random_data(3, 12, seed);
            let k = gram(&data, &spec).unwrap();
            assert_eq!(k.values, k.values.t());
            let m = nalgebra::DMatrix::from_fn(12, 12, |i, j| k.values[[i, j]]);
            let min_eig = m.symmetric_eigen().eigenvalues.min();
            assert!(min_eig >= -1e-8 * 12.0, "min eigenvalue {min_eig}");
        }
    }

    #[test]
    fn centering_cases() {
        let ones = GramMatrix::from_values(Array2::ones((4, 4)));
        assert!(center(&ones).values.iter().all(|v| v.abs() < 1e-15));
        let eye = GramMatrix::from_values(Array2::eye(2));
        assert_eq!(center(&eye).values, array![[0.5, -0.5], [-0.5, 0.5]]);
        let k = random_psd(7, 6);
        let c1 = center(&k);
        let c2 = center(&c1);
        assert!((&c1.values - &c2.values).iter().all(|v| v.abs() < 1e-12));
        for r in c1.values.rows() {
            assert!(r.sum().abs() < 1e-10 * 7.0);
        }
    }

    #[test]
    fn alignment_cases() {
        let eye = GramMatrix::from_values(Array2::eye(2));
        assert!((centered_alignment(&eye, &eye).unwrap() - 1.0).abs() < 1e-15);
        let k = random_psd(5, 7);
        let ones = GramMatrix::from_values(Array2::ones((5, 5)));
        assert!(centered_alignment(&k, &ones).unwrap().abs() < 1e-10);
        let bad = GramMatrix::from_values(Array2::ones((4, 4)));
        assert!(centered_alignment(&k, &bad).is_err());
    }

    #[test]
    fn alignment_matches_naive_products() {
        let k1 = random_psd(6, 3);
        let k2 = random_psd(6, 33);
        let fast = centered_alignment(&k1, &k2).unwrap();
        let slow = naive_alignment(&k1.values, &k2.values);
        assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn alignment_symmetric_and_shift_invariant(seed in 0u64..1000, n in 2usize..9, c in -5.0f64..5.0) {
            let a = random_psd(n, seed);
            let b = random_psd(n, seed + 10_000);
            let ab = centered_alignment(&a, &b).unwrap();
            let ba = centered_alignment(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-10 * ab.abs().max(1.0));
            let shifted = GramMatrix::from_values(&b.values + c);
            let ab_shift = centered_alignment(&a, &shifted).unwrap();
            prop_assert!((ab - ab_shift).abs() < 1e-8);
            prop_assert!(centered_alignment(&a, &a).unwrap() >= -1e-10);
        }

        #[test]
        fn center_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let k1 = random_psd(6, seed).values;
            let k2 = random_psd(6, seed + 1).values;
            let lhs = center_values(&(&k1 * a + &k2 * b));
            let rhs = center_values(&k1) * a + center_values(&k2) * b;
            prop_assert!((&lhs - &rhs).iter().all(|v| v.abs() < 1e-10));
        }
    }
}
