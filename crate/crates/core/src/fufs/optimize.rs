use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objective::KernelCache;
use super::{FufsConfig, IndicatorPair, Init, ObjectiveBreakdown, SelectionResult, StepPolicy};
use crate::dataset::Dataset;
use crate::error::{FairselError, Result};

/// Elementwise clamp to `[0, 1]`.
pub fn project_box(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.clamp(0.0, 1.0)).collect()
}

/// Indices sorted by descending score, ties by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn top_indices(scores: &[f64], count: usize) -> Vec<usize> {
    let mut idx = ranking(scores);
    idx.truncate(count);
    idx
}

/// All features ordered by their final `m` entry.
pub fn rank_features(result: &SelectionResult) -> Vec<(usize, f64)> {
    let m = &result.indicators.m;
    ranking(m).into_iter().map(|i| (i, m[i])).collect()
}

/// Current iterate together with the kernels it induces.
struct Iterate {
    pair: IndicatorPair,
    km: Array2<f64>,
    kg: Array2<f64>,
    value: ObjectiveBreakdown,
}

#[derive(Clone, Copy)]
enum Block {
    M,
    G,
}

struct Solver<'a> {
    dataset: &'a Dataset,
    cfg: &'a FufsConfig,
    cache: KernelCache,
}

impl Solver<'_> {
    fn evaluate(&self, pair: IndicatorPair, km: Option<Array2<f64>>) -> Result<Iterate> {
        let km = match km {
            Some(km) => km,
            None => self.cache.kernel_m(self.dataset, &pair.m)?,
        };
        let kg = self.cache.kernel_g(self.dataset, &pair)?;
        let value = self.cache.breakdown(self.cfg, &pair, &km, &kg)?;
        Ok(Iterate {
            pair,
            km,
            kg,
            value,
        })
    }

    /// One projected gradient step on a single block. Under backtracking the
    /// step shrinks until the Armijo condition holds; if it never does the
    /// iterate is returned unchanged.
    fn step(&self, cur: Iterate, block: Block) -> Result<Iterate> {
        let (grad_m, grad_g) = self.cache.gradient_parts(
            self.dataset,
            self.cfg,
            &cur.pair,
            &cur.km,
            &cur.kg,
            matches!(block, Block::M),
        )?;
        let (x0, grad) = match block {
            Block::M => (&cur.pair.m, grad_m.expect("m block requested")),
            Block::G => (&cur.pair.g, grad_g),
        };

        let candidate = |eta: f64| -> (IndicatorPair, Vec<f64>) {
            let moved: Vec<f64> = x0.iter().zip(&grad).map(|(x, g)| x - eta * g).collect();
            let projected = project_box(&moved);
            let mut pair = cur.pair.clone();
            match block {
                Block::M => pair.m = projected.clone(),
                Block::G => pair.g = projected.clone(),
            }
            (pair, projected)
        };
        // g only enters K^G, so a g-step reuses K^M.
        let reuse_km = |it: &Iterate| match block {
            Block::G => Some(it.km.clone()),
            Block::M => None,
        };

        match self.cfg.step_policy {
            StepPolicy::Fixed => {
                let (pair, _) = candidate(self.cfg.eta);
                self.evaluate(pair, reuse_km(&cur))
            }
            StepPolicy::Backtracking {
                shrink,
                max_backtracks,
                armijo_c,
            } => {
                let mut eta = self.cfg.eta;
                for _ in 0..=max_backtracks {
                    let (pair, projected) = candidate(eta);
                    if projected == *x0 {
                        return Ok(cur);
                    }
                    let decrease: f64 = projected
                        .iter()
                        .zip(x0)
                        .zip(&grad)
                        .map(|((new, old), g)| g * (new - old))
                        .sum();
                    let next = self.evaluate(pair, reuse_km(&cur))?;
                    if next.value.total <= cur.value.total + armijo_c * decrease {
                        return Ok(next);
                    }
                    eta *= shrink;
                }
                Ok(cur)
            }
        }
    }
}

fn initial_pair(d: usize, cfg: &FufsConfig) -> IndicatorPair {
    let mut pair = match cfg.init {
        Init::UniformHalf => IndicatorPair::uniform(d, 0.5),
        Init::SeededRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let m = (0..d).map(|_| rng.random::<f64>()).collect();
            let g = (0..d).map(|_| rng.random::<f64>()).collect();
            IndicatorPair { m, g }
        }
    };
    if cfg.ablate_g {
        pair.g = vec![0.0; d];
    }
    pair
}

/// Alternating projected gradient descent on `(g, m)`.
///
/// Each iteration takes a `g` step then an `m` step, projecting onto the
/// box after each. Stops once the relative change of the objective drops
/// below `cfg.tol` or after `cfg.max_iter` iterations.
pub fn optimize(dataset: &Dataset, cfg: &FufsConfig) -> Result<SelectionResult> {
    optimize_observed(dataset, cfg, |_, _, _| {})
}

/// [`optimize`], calling `observe(t, iterate, objective)` on the starting
/// point (`t = 0`) and after every iteration.
pub fn optimize_observed<F>(
    dataset: &Dataset,
    cfg: &FufsConfig,
    mut observe: F,
) -> Result<SelectionResult>
where
    F: FnMut(usize, &IndicatorPair, &ObjectiveBreakdown),
{
    dataset.validate()?;
    let d = dataset.d();
    cfg.validate(d)?;
    let solver = Solver {
        dataset,
        cfg,
        cache: KernelCache::new(dataset, cfg)?,
    };

    let mut cur = solver.evaluate(initial_pair(d, cfg), None)?;
    observe(0, &cur.pair, &cur.value);
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let prev = cur.value.total;
        if !cfg.ablate_g {
            cur = solver.step(cur, Block::G)?;
        }
        cur = solver.step(cur, Block::M)?;
        iterations += 1;
        observe(iterations, &cur.pair, &cur.value);
        trajectory.push(cur.value);
        if (cur.value.total - prev).abs() / (prev.abs() + 1e-12) < cfg.tol {
            converged = true;
            break;
        }
    }

    let pair = cur.pair;
    if !pair.is_feasible() {
        return Err(FairselError::Numeric("indicators left the unit box".into()));
    }
    let selected = top_indices(&pair.m, cfg.k);
    let flagged_sensitive = if cfg.ablate_g {
        Vec::new()
    } else {
        ranking(&pair.g)
            .into_iter()
            .filter(|i| !selected.contains(i))
            .take(cfg.l)
            .collect()
    };
    Ok(SelectionResult {
        indicators: pair,
        selected,
        flagged_sensitive,
        trajectory,
        iterations,
        converged,
    })
}
