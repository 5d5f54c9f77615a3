use ndarray::{Array1, Array2, Axis, Zip};

use super::{FufsConfig, IndicatorPair, ObjectiveBreakdown};
use crate::dataset::Dataset;
use crate::error::{FairselError, Result};
use crate::kernel::{center_values, frobenius, gram_with, KernelFamily};

/// Kernels that do not depend on the indicators: `K` on `X`, `K^P` on `P`,
/// their centered forms, and the bandwidth resolved on `X` that `K^M` and
/// `K^G` reuse.
#[derive(Debug, Clone)]
pub struct KernelCache {
    family: KernelFamily,
    sigma_x: Option<f64>,
    sigma_p: Option<f64>,
    k_centered: Array2<f64>,
    kp_centered: Array2<f64>,
}

impl KernelCache {
    pub fn new(dataset: &Dataset, cfg: &FufsConfig) -> Result<Self> {
        cfg.kernel.validate()?;
        let sigma_x = cfg.kernel.sigma_for(&dataset.x)?;
        let sigma_p = cfg.kernel.sigma_for(&dataset.p_mat)?;
        let k = gram_with(&dataset.x, cfg.kernel.family, sigma_x)?;
        let kp = gram_with(&dataset.p_mat, cfg.kernel.family, sigma_p)?;
        Ok(KernelCache {
            family: cfg.kernel.family,
            sigma_x,
            sigma_p,
            k_centered: center_values(&k.values),
            kp_centered: center_values(&kp.values),
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Bandwidth resolved on `X` (rbf only).
    pub fn sigma_x(&self) -> Option<f64> {
        self.sigma_x
    }

    pub fn sigma_p(&self) -> Option<f64> {
        self.sigma_p
    }

    pub(crate) fn kernel_m(&self, dataset: &Dataset, m: &[f64]) -> Result<Array2<f64>> {
        let data = build_m_matrix(dataset, m)?;
        Ok(gram_with(&data, self.family, self.sigma_x)?.values)
    }

    pub(crate) fn kernel_g(&self, dataset: &Dataset, pair: &IndicatorPair) -> Result<Array2<f64>> {
        let data = build_g_matrix(dataset, pair)?;
        Ok(gram_with(&data, self.family, self.sigma_x)?.values)
    }

    pub(crate) fn breakdown(
        &self,
        cfg: &FufsConfig,
        pair: &IndicatorPair,
        km: &Array2<f64>,
        kg: &Array2<f64>,
    ) -> Result<ObjectiveBreakdown> {
        let utility = -frobenius(&self.k_centered, km);
        let fairness_m = cfg.alpha * frobenius(&self.kp_centered, km);
        let fairness_g = -cfg.alpha * frobenius(&self.kp_centered, kg);
        let sparsity = cfg.beta * (pair.m.iter().sum::<f64>() + pair.g.iter().sum::<f64>());
        let out = ObjectiveBreakdown::from_terms(utility, fairness_m, fairness_g, sparsity);
        if !out.total.is_finite() {
            return Err(FairselError::Numeric(format!(
                "non-finite objective: {out:?}"
            )));
        }
        Ok(out)
    }

    /// Partial derivatives of the objective. Pass `want_m = false` to skip
    /// the `m` block (its `K^M` path is the expensive one).
    pub(crate) fn gradient_parts(
        &self,
        dataset: &Dataset,
        cfg: &FufsConfig,
        pair: &IndicatorPair,
        km: &Array2<f64>,
        kg: &Array2<f64>,
        want_m: bool,
    ) -> Result<(Option<Vec<f64>>, Vec<f64>)> {
        let x = &dataset.x;
        let d = x.nrows();
        let (m, g) = (&pair.m, &pair.g);
        let beta = cfg.beta;

        // C_G = -α H K^P H
        let c_g = &self.kp_centered * (-cfg.alpha);
        let s_g = self.feature_sums(x, &c_g, kg);

        let grad_m = if want_m {
            // C_M = -H K H + α H K^P H
            let c_m = &self.kp_centered * cfg.alpha - &self.k_centered;
            let s_m = self.feature_sums(x, &c_m, km);
            Some(match self.family {
                KernelFamily::Rbf => {
                    let inv = 1.0 / self.sigma_x.expect("rbf cache carries sigma").powi(2);
                    (0..d)
                        .map(|k| {
                            -m[k] * inv * s_m[k] + g[k] * g[k] * (1.0 - m[k]) * inv * s_g[k] + beta
                        })
                        .collect::<Vec<_>>()
                }
                KernelFamily::Linear => (0..d)
                    .map(|k| 2.0 * m[k] * s_m[k] - 2.0 * g[k] * g[k] * (1.0 - m[k]) * s_g[k] + beta)
                    .collect(),
            })
        } else {
            None
        };

        let grad_g: Vec<f64> = match self.family {
            KernelFamily::Rbf => {
                let inv = 1.0 / self.sigma_x.expect("rbf cache carries sigma").powi(2);
                (0..d)
                    .map(|k| -g[k] * (1.0 - m[k]).powi(2) * inv * s_g[k] + beta)
                    .collect()
            }
            KernelFamily::Linear => (0..d)
                .map(|k| 2.0 * g[k] * (1.0 - m[k]).powi(2) * s_g[k] + beta)
                .collect(),
        };

        let finite = grad_g
            .iter()
            .chain(grad_m.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(FairselError::Numeric("non-finite gradient".into()));
        }
        Ok((grad_m, grad_g))
    }

    /// Per-feature contraction of a coefficient matrix against a kernel.
    ///
    /// rbf: `Σ_ij C_ij K_ij (x_ki - x_kj)²`, expanded through the row sums of
    /// `W = C ∘ K` as `2 Σ_i x_ki² r_i - 2 x_kᵀ W x_k`.
    /// linear: `x_kᵀ C x_k` (the kernel itself drops out).
    fn feature_sums(
        &self,
        x: &Array2<f64>,
        coeff: &Array2<f64>,
        kernel: &Array2<f64>,
    ) -> Array1<f64> {
        match self.family {
            KernelFamily::Rbf => {
                let mut w = coeff.clone();
                Zip::from(&mut w).and(kernel).for_each(|a, &b| *a *= b);
                let r = w.sum_axis(Axis(1));
                let xw = x.dot(&w);
                Zip::from(x.rows()).and(xw.rows()).map_collect(|xr, xwr| {
                    let quad = xr.dot(&xwr);
                    let lin: f64 = xr.iter().zip(r.iter()).map(|(v, ri)| v * v * ri).sum();
                    2.0 * lin - 2.0 * quad
                })
            }
            KernelFamily::Linear => {
                let xc = x.dot(coeff);
                Zip::from(x.rows())
                    .and(xc.rows())
                    .map_collect(|xr, xcr| xr.dot(&xcr))
            }
        }
    }
}

fn check_len(dataset: &Dataset, v: &[f64], what: &str) -> Result<()> {
    if v.len() != dataset.d() {
        return Err(FairselError::Shape(format!(
            "{what} has length {} but the dataset has {} features",
            v.len(),
            dataset.d()
        )));
    }
    Ok(())
}

/// `diag(m) X`.
pub fn build_m_matrix(dataset: &Dataset, m: &[f64]) -> Result<Array2<f64>> {
    check_len(dataset, m, "m")?;
    let mut out = dataset.x.clone();
    for (mut row, &w) in out.rows_mut().into_iter().zip(m) {
        row *= w;
    }
    Ok(out)
}

/// `diag(g) (I - diag(m)) X`.
pub fn build_g_matrix(dataset: &Dataset, pair: &IndicatorPair) -> Result<Array2<f64>> {
    check_len(dataset, &pair.m, "m")?;
    check_len(dataset, &pair.g, "g")?;
    let mut out = dataset.x.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        row *= pair.g[i] * (1.0 - pair.m[i]);
    }
    Ok(out)
}

/// Evaluates the objective and its four terms at `pair`.
pub fn objective(
    dataset: &Dataset,
    pair: &IndicatorPair,
    cfg: &FufsConfig,
    cache: &KernelCache,
) -> Result<ObjectiveBreakdown> {
    let km = cache.kernel_m(dataset, &pair.m)?;
    let kg = cache.kernel_g(dataset, pair)?;
    cache.breakdown(cfg, pair, &km, &kg)
}

/// Analytic `(∂L/∂m, ∂L/∂g)` at `pair`.
pub fn gradient(
    dataset: &Dataset,
    pair: &IndicatorPair,
    cfg: &FufsConfig,
    cache: &KernelCache,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let km = cache.kernel_m(dataset, &pair.m)?;
    let kg = cache.kernel_g(dataset, pair)?;
    let (gm, gg) = cache.gradient_parts(dataset, cfg, pair, &km, &kg, true)?;
    Ok((gm.expect("m block requested"), gg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(d: usize, n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((d, n), |_| rng.random_range(-1.5..1.5));
        let pm = Array2::from_shape_fn((p, n), |_| rng.random_range(-1.0..1.0));
        Dataset::new(x, pm, None).unwrap()
    }

    fn random_pair(d: usize, seed: u64) -> IndicatorPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        IndicatorPair {
            m: (0..d).map(|_| rng.random_range(0.1..0.9)).collect(),
            g: (0..d).map(|_| rng.random_range(0.1..0.9)).collect(),
        }
    }

    /// Straight-line evaluation: explicit H, dense products, per-entry kernels.
    fn naive_objective(ds: &Dataset, pair: &IndicatorPair, cfg: &FufsConfig) -> f64 {
        let n = ds.n();
        let h = Array2::from_shape_fn((n, n), |(i, j)| {
            f64::from(u8::from(i == j)) - 1.0 / n as f64
        });
        let rbf = |data: &Array2<f64>, sigma: f64| {
            Array2::from_shape_fn((n, n), |(i, j)| {
                let diff = &data.column(i) - &data.column(j);
                (-diff.dot(&diff) / (2.0 * sigma * sigma)).exp()
            })
        };
        let sx = crate::kernel::resolve_bandwidth(&ds.x).unwrap();
        let sp = crate::kernel::resolve_bandwidth(&ds.p_mat).unwrap();
        let k = rbf(&ds.x, sx);
        let kp = rbf(&ds.p_mat, sp);
        let mdiag = Array2::from_diag(&Array1::from(pair.m.clone()));
        let gdiag = Array2::from_diag(&Array1::from(pair.g.clone()));
        let eye = Array2::<f64>::eye(ds.d());
        let km = rbf(&mdiag.dot(&ds.x), sx);
        let kg = rbf(&gdiag.dot(&(&eye - &mdiag)).dot(&ds.x), sx);
        let tr = |a: &Array2<f64>, b: &Array2<f64>| h.dot(a).dot(&h).dot(b).diag().sum();
        -tr(&k, &km) + cfg.alpha * tr(&km, &kp) - cfg.alpha * tr(&kg, &kp)
            + cfg.beta * (pair.m.iter().sum::<f64>() + pair.g.iter().sum::<f64>())
    }

    #[test]
    fn m_matrix_cases() {
        let ds = Dataset::new(array![[1.0, 2.0], [3.0, 4.0]], array![[0.0, 1.0]], None).unwrap();
        assert_eq!(build_m_matrix(&ds, &[1.0, 1.0]).unwrap(), ds.x);
        assert_eq!(
            build_m_matrix(&ds, &[0.0, 0.0]).unwrap(),
            Array2::<f64>::zeros((2, 2))
        );
        assert_eq!(
            build_m_matrix(&ds, &[0.0, 1.0]).unwrap(),
            array![[0.0, 0.0], [3.0, 4.0]]
        );
        assert!(build_m_matrix(&ds, &[1.0]).is_err());
    }

    #[test]
    fn g_matrix_cases() {
        let ds = Dataset::new(array![[1.0, 2.0], [3.0, 4.0]], array![[0.0, 1.0]], None).unwrap();
        let pair = IndicatorPair {
            m: vec![1.0, 1.0],
            g: vec![0.3, 0.9],
        };
        assert_eq!(
            build_g_matrix(&ds, &pair).unwrap(),
            Array2::<f64>::zeros((2, 2))
        );
        let pair = IndicatorPair {
            m: vec![0.0, 0.0],
            g: vec![1.0, 1.0],
        };
        assert_eq!(build_g_matrix(&ds, &pair).unwrap(), ds.x);
        let pair = IndicatorPair {
            m: vec![0.5, 0.0],
            g: vec![0.5, 0.0],
        };
        assert_eq!(
            build_g_matrix(&ds, &pair).unwrap(),
            array![[0.25, 0.5], [0.0, 0.0]]
        );
        let bad = IndicatorPair {
            m: vec![0.5, 0.0],
            g: vec![0.5],
        };
        assert!(build_g_matrix(&ds, &bad).is_err());
    }

    #[test]
    fn utility_only_equals_negative_self_alignment() {
        let ds = random_dataset(5, 12, 1, 2);
        let mut cfg = FufsConfig::new(2);
        cfg.alpha = 0.0;
        cfg.beta = 0.0;
        let cache = KernelCache::new(&ds, &cfg).unwrap();
        let pair = IndicatorPair {
            m: vec![1.0; 5],
            g: vec![0.3, 0.1, 0.7, 0.2, 0.9],
        };
        let out = objective(&ds, &pair, &cfg, &cache).unwrap();
        let k = crate::kernel::gram(&ds.x, &KernelSpec::rbf()).unwrap();
        let self_align = crate::kernel::centered_alignment(&k, &k).unwrap();
        assert!((out.total + self_align).abs() < 1e-10);
        assert!(out.total <= 0.0);
    }

    #[test]
    fn origin_annihilates_kernel_terms() {
        let ds = random_dataset(4, 9, 1, 3);
        let mut cfg = FufsConfig::new(2);
        cfg.beta = 0.0;
        let cache = KernelCache::new(&ds, &cfg).unwrap();
        let out = objective(&ds, &IndicatorPair::uniform(4, 0.0), &cfg, &cache).unwrap();
        assert!(out.utility_term.abs() < 1e-10);
        assert!(out.fairness_m_term.abs() < 1e-10);
        assert!(out.fairness_g_term.abs() < 1e-10);
        assert!(out.total.abs() < 1e-10);
    }

    #[test]
    fn objective_matches_naive_composition() {
        let ds = random_dataset(6, 10, 1, 5);
        let pair = random_pair(6, 5);
        let mut cfg = FufsConfig::new(2);
        cfg.alpha = 0.7;
        cfg.beta = 0.3;
        let cache = KernelCache::new(&ds, &cfg).unwrap();
        let out = objective(&ds, &pair, &cfg, &cache).unwrap();
        let naive = naive_objective(&ds, &pair, &cfg);
        assert!(
            (out.total - naive).abs() < 1e-10 * naive.abs().max(1.0),
            "{} vs {naive}",
            out.total
        );
        let sum = out.utility_term + out.fairness_m_term + out.fairness_g_term + out.sparsity_term;
        assert!((sum - out.total).abs() < 1e-10);
    }

    #[test]
    fn gradient_at_origin_is_beta() {
        let ds = random_dataset(5, 8, 1, 9);
        let mut cfg = FufsConfig::new(2);
        cfg.alpha = 0.0;
        cfg.beta = 0.25;
        let cache = KernelCache::new(&ds, &cfg).unwrap();
        let (gm, gg) = gradient(&ds, &IndicatorPair::uniform(5, 0.0), &cfg, &cache).unwrap();
        assert!(gm.iter().all(|&v| v == 0.25));
        assert!(gg.iter().all(|&v| v == 0.25));
        let (_, gg) = gradient(&ds, &random_pair(5, 1), &cfg, &cache).unwrap();
        assert!(gg.iter().all(|&v| v == 0.25));
    }

    fn finite_difference_error(
        ds: &Dataset,
        cfg: &FufsConfig,
        pair: &IndicatorPair,
        eps: f64,
    ) -> f64 {
        let cache = KernelCache::new(ds, cfg).unwrap();
        let (gm, gg) = gradient(ds, pair, cfg, &cache).unwrap();
        let f = |p: &IndicatorPair| objective(ds, p, cfg, &cache).unwrap().total;
        let mut worst: f64 = 0.0;
        for block in 0..2 {
            for i in 0..pair.d() {
                let mut plus = pair.clone();
                let mut minus = pair.clone();
                let (vp, vm) = if block == 0 {
                    (&mut plus.m, &mut minus.m)
                } else {
                    (&mut plus.g, &mut minus.g)
                };
                vp[i] += eps;
                vm[i] -= eps;
                let fd = (f(&plus) - f(&minus)) / (2.0 * eps);
                let an = if block == 0 { gm[i] } else { gg[i] };
                worst = worst.max((an - fd).abs() / fd.abs().max(an.abs()).max(1e-8));
            }
        }
        worst
    }

    #[test]
    fn rbf_gradient_matches_finite_differences() {
        let ds = random_dataset(8, 15, 1, 11);
        let mut cfg = FufsConfig::new(3);
        cfg.alpha = 1.3;
        cfg.beta = 0.05;
        let err = finite_difference_error(&ds, &cfg, &random_pair(8, 11), 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn linear_gradient_matches_finite_differences() {
        let ds = random_dataset(6, 12, 2, 4);
        let mut cfg = FufsConfig::new(3);
        cfg.kernel = KernelSpec::linear();
        cfg.alpha = 0.8;
        let err = finite_difference_error(&ds, &cfg, &random_pair(6, 4), 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }
}
