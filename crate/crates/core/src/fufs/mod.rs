//! Fairness-aware feature selection by centered kernel alignment.
//!
//! Two relaxed indicator vectors drive the selection. `m` weights the
//! features kept, `g` weights the unselected features that should soak up
//! the dependence on the protected attributes. The objective
//!
//! ```text
//! L(m, g) = -Tr(H K H K^M) + α Tr(H K^M H K^P) - α Tr(H K^G H K^P) + β (|m|₁ + |g|₁)
//! ```
//!
//! is minimized over the box `[0,1]^d × [0,1]^d` by alternating projected
//! gradient steps, `g` first. `K^M` is built from `diag(m) X` and `K^G` from
//! `diag(g)(I - diag(m)) X`, both with the bandwidth resolved on `X`.

mod objective;
mod optimize;

pub use objective::{build_g_matrix, build_m_matrix, gradient, objective, KernelCache};
pub use optimize::{optimize, optimize_observed, project_box, rank_features, top_indices};

use serde::{Deserialize, Serialize};

use crate::error::{FairselError, Result};
use crate::kernel::KernelSpec;

/// Relaxed selection vector `m` and decomposition vector `g`, both in `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPair {
    pub m: Vec<f64>,
    pub g: Vec<f64>,
}

impl IndicatorPair {
    pub fn uniform(d: usize, value: f64) -> Self {
        IndicatorPair {
            m: vec![value; d],
            g: vec![value; d],
        }
    }

    pub fn d(&self) -> usize {
        self.m.len()
    }

    pub fn is_feasible(&self) -> bool {
        self.m.len() == self.g.len()
            && self
                .m
                .iter()
                .chain(&self.g)
                .all(|v| (0.0..=1.0).contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    Fixed,
    Backtracking {
        shrink: f64,
        max_backtracks: usize,
        armijo_c: f64,
    },
}

impl StepPolicy {
    pub fn backtracking() -> Self {
        StepPolicy::Backtracking {
            shrink: 0.5,
            max_backtracks: 20,
            armijo_c: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    UniformHalf,
    SeededRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FufsConfig {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub l: usize,
    pub eta: f64,
    pub step_policy: StepPolicy,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub init: Init,
    /// Drop the decomposition vector: `g` stays at zero and is never updated,
    /// which removes the `K^G` term from both objective and gradient.
    #[serde(default)]
    pub ablate_g: bool,
}

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-6;

impl FufsConfig {
    /// Defaults for everything but the selection size; `l` follows `k`.
    pub fn new(k: usize) -> Self {
        FufsConfig {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            k,
            l: k,
            eta: DEFAULT_ETA,
            step_policy: StepPolicy::backtracking(),
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            seed: 0,
            kernel: KernelSpec::rbf(),
            init: Init::UniformHalf,
            ablate_g: false,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.alpha) {
            return Err(FairselError::config(
                "alpha",
                format!("must be >= 0, got {}", self.alpha),
            ));
        }
        if !finite_nonneg(self.beta) {
            return Err(FairselError::config(
                "beta",
                format!("must be >= 0, got {}", self.beta),
            ));
        }
        if self.k < 1 || self.k > d {
            return Err(FairselError::config(
                "k",
                format!("must lie in [1, {d}], got {}", self.k),
            ));
        }
        if self.l > d {
            return Err(FairselError::config(
                "l",
                format!("must lie in [0, {d}], got {}", self.l),
            ));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(FairselError::config(
                "eta",
                format!("must be > 0, got {}", self.eta),
            ));
        }
        if let StepPolicy::Backtracking {
            shrink, armijo_c, ..
        } = self.step_policy
        {
            if !(shrink > 0.0 && shrink < 1.0) {
                return Err(FairselError::config(
                    "step_policy",
                    "shrink must lie in (0, 1)",
                ));
            }
            if !(armijo_c > 0.0 && armijo_c < 1.0) {
                return Err(FairselError::config(
                    "step_policy",
                    "armijo_c must lie in (0, 1)",
                ));
            }
        }
        if self.max_iter < 1 {
            return Err(FairselError::config("max_iter", "must be >= 1"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(FairselError::config(
                "tol",
                format!("must be > 0, got {}", self.tol),
            ));
        }
        self.kernel.validate()
    }

    /// Non-fatal configuration remarks.
    pub fn warnings(&self, d: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.k + self.l > d {
            out.push(format!(
                "k + l = {} exceeds d = {d}; fewer than l features can be flagged",
                self.k + self.l
            ));
        }
        out
    }
}

/// The four terms of the objective at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub utility_term: f64,
    pub fairness_m_term: f64,
    pub fairness_g_term: f64,
    pub sparsity_term: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    pub fn from_terms(utility: f64, fairness_m: f64, fairness_g: f64, sparsity: f64) -> Self {
        ObjectiveBreakdown {
            utility_term: utility,
            fairness_m_term: fairness_m,
            fairness_g_term: fairness_g,
            sparsity_term: sparsity,
            total: utility + fairness_m + fairness_g + sparsity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    #[serde(flatten)]
    pub indicators: IndicatorPair,
    pub selected: Vec<usize>,
    pub flagged_sensitive: Vec<usize>,
    pub trajectory: Vec<ObjectiveBreakdown>,
    pub iterations: usize,
    pub converged: bool,
}
