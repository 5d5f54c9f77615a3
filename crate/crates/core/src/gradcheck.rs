//! Analytic vs central finite-difference gradients on random instances.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::fufs::{gradient, objective, FufsConfig, IndicatorPair, KernelCache};

/// Pass threshold on the worst relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Which block a coordinate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    M,
    G,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub max_rel_error_m: f64,
    pub max_rel_error_g: f64,
    pub worst_block: Block,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_m.max(self.max_rel_error_g)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < GRADCHECK_TOLERANCE
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Uniform data in `[-1.5, 1.5]`, a continuous protected matrix, and
/// indicators drawn from `[0.1, 0.9]` so every coordinate is interior.
pub fn random_instance(
    d: usize,
    n: usize,
    p: usize,
    seed: u64,
) -> Result<(Dataset, IndicatorPair)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((d, n), |_| rng.random_range(-1.5..1.5));
    let pm = Array2::from_shape_fn((p, n), |_| rng.random_range(-1.0..1.0));
    let pair = IndicatorPair {
        m: (0..d).map(|_| rng.random_range(0.1..0.9)).collect(),
        g: (0..d).map(|_| rng.random_range(0.1..0.9)).collect(),
    };
    Ok((Dataset::new(x, pm, None)?, pair))
}

pub fn check_gradient(
    dataset: &Dataset,
    pair: &IndicatorPair,
    cfg: &FufsConfig,
    epsilon: f64,
) -> Result<GradcheckReport> {
    let cache = KernelCache::new(dataset, cfg)?;
    let (gm, gg) = gradient(dataset, pair, cfg, &cache)?;
    let mut report = GradcheckReport {
        max_rel_error_m: 0.0,
        max_rel_error_g: 0.0,
        worst_block: Block::M,
        worst_index: 0,
        analytic: gm[0],
        numeric: f64::NAN,
    };
    let mut worst = -1.0;
    for block in [Block::M, Block::G] {
        for i in 0..pair.d() {
            let shifted = |delta: f64| -> Result<f64> {
                let mut p = pair.clone();
                match block {
                    Block::M => p.m[i] += delta,
                    Block::G => p.g[i] += delta,
                }
                Ok(objective(dataset, &p, cfg, &cache)?.total)
            };
            let numeric = (shifted(epsilon)? - shifted(-epsilon)?) / (2.0 * epsilon);
            let analytic = match block {
                Block::M => gm[i],
                Block::G => gg[i],
            };
            let err = relative_error(analytic, numeric);
            match block {
                Block::M => report.max_rel_error_m = report.max_rel_error_m.max(err),
                Block::G => report.max_rel_error_g = report.max_rel_error_g.max(err),
            }
            if err > worst {
                worst = err;
                report.worst_block = block;
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
