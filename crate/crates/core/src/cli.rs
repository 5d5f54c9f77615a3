//! Command implementations behind the `fairsel` binary.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
//! failure. Every failure prints a single diagnostic line on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    generate_synthetic, load_csv, Dataset, RolesFile, SyntheticSpec, LABEL_COLUMN,
};
use crate::error::{ErrorClass, FairselError, Result};
use crate::eval::{evaluate_selection, EvalOptions, EvalReport, Grouping};
use crate::fufs::{
    optimize, rank_features, FufsConfig, Init, SelectionResult, StepPolicy, DEFAULT_ALPHA,
    DEFAULT_BETA, DEFAULT_ETA, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::gradcheck::{check_gradient, random_instance, Block};
use crate::kernel::KernelSpec;

/// Feature fractions evaluated by default.
pub const DEFAULT_FRACTIONS: [f64; 7] = [0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40];
/// Default alpha grid for `sweep`.
pub const DEFAULT_ALPHA_GRID: [f64; 7] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];
pub const DEFAULT_RESTARTS: usize = 50;
pub const THREADS_ENV: &str = "FAIRSEL_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "fairsel",
    version,
    about = "Fairness-aware unsupervised feature selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the optimizer and write the selection as JSON.
    Select(SelectArgs),
    /// Score a selection with k-means over a grid of feature fractions.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients on a random instance.
    Gradcheck(GradcheckArgs),
    /// Select and evaluate over an alpha x beta grid.
    Sweep(SweepArgs),
    /// Write a synthetic dataset CSV plus a roles JSON sidecar.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub n_utility: usize,
    #[arg(long, default_value_t = 10)]
    pub n_sensitive: usize,
    #[arg(long, default_value_t = 10)]
    pub n_noise: usize,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.9)]
    pub sensitive_correlation: f64,
    #[arg(long, default_value_t = 0)]
    pub synth_seed: u64,
}

impl SynthFlags {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n: self.n,
            n_utility: self.n_utility,
            n_sensitive: self.n_sensitive,
            n_noise: self.n_noise,
            cluster_separation: self.separation,
            sensitive_correlation: self.sensitive_correlation,
            seed: self.synth_seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Instance-per-row CSV with a header.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Protected column names (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub protected: Vec<String>,
    /// Ground-truth label column; a column named `label` is used when omitted.
    #[arg(long)]
    pub label: Option<String>,
    /// Skip z-scoring of feature and protected rows.
    #[arg(long)]
    pub no_standardize: bool,
    /// Generate the dataset instead of reading one.
    #[arg(long)]
    pub synthetic: bool,
    #[command(flatten)]
    pub synth: SynthFlags,
}

/// Where a dataset came from; enough to rebuild it bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        protected: Vec<String>,
        label: Option<String>,
        standardize: bool,
    },
    Synthetic {
        spec: SyntheticSpec,
        standardize: bool,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Csv {
                path,
                protected,
                label,
                standardize,
            } => {
                if protected.is_empty() {
                    return Err(FairselError::config(
                        "protected",
                        "at least one protected column is required",
                    ));
                }
                load_csv(path, protected, label.as_deref(), *standardize)
            }
            DataSource::Synthetic { spec, standardize } => {
                let mut ds = generate_synthetic(spec)?.dataset;
                if *standardize {
                    ds.standardize();
                }
                Ok(ds)
            }
        }
    }
}

fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => FairselError::io(path, io),
        other => FairselError::InvalidData(format!("{}: {other:?}", path.display())),
    })?;
    Ok(reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}

impl DataArgs {
    pub fn source(&self) -> Result<DataSource> {
        let standardize = !self.no_standardize;
        match (&self.data, self.synthetic) {
            (Some(path), _) => {
                let label = match &self.label {
                    Some(label) => Some(label.clone()),
                    None => csv_header(path)?
                        .iter()
                        .any(|h| h == LABEL_COLUMN)
                        .then(|| LABEL_COLUMN.to_string()),
                };
                Ok(DataSource::Csv {
                    path: path.clone(),
                    protected: self.protected.clone(),
                    label,
                    standardize,
                })
            }
            (None, true) => Ok(DataSource::Synthetic {
                spec: self.synth.spec(),
                standardize,
            }),
            (None, false) => Err(FairselError::config(
                "data",
                "pass --data PATH or --synthetic",
            )),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON file whose keys are optimizer config field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Optimizer config as read from disk: every key optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub eta: Option<f64>,
    pub step_policy: Option<StepPolicy>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub kernel: Option<KernelSpec>,
    pub init: Option<Init>,
    pub ablate_g: Option<bool>,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| FairselError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| FairselError::config("config", format!("{}: {e}", path.display())))
    }
}

impl ConfigArgs {
    /// Flag > file > default.
    pub fn resolve(&self, seed: Option<u64>, d: usize) -> Result<FufsConfig> {
        let file = match &self.config {
            Some(path) => ConfigFile::read(path)?,
            None => ConfigFile::default(),
        };
        let k = self
            .k
            .or(file.k)
            .ok_or_else(|| FairselError::config("k", "not set (use --k or the config file)"))?;
        let cfg = FufsConfig {
            alpha: self.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA),
            beta: self.beta.or(file.beta).unwrap_or(DEFAULT_BETA),
            k,
            l: self.l.or(file.l).unwrap_or(k),
            eta: self.eta.or(file.eta).unwrap_or(DEFAULT_ETA),
            step_policy: file.step_policy.unwrap_or_else(StepPolicy::backtracking),
            max_iter: self.max_iter.or(file.max_iter).unwrap_or(DEFAULT_MAX_ITER),
            tol: self.tol.or(file.tol).unwrap_or(DEFAULT_TOL),
            seed: seed.or(file.seed).unwrap_or(0),
            kernel: file.kernel.unwrap_or_default(),
            init: file.init.unwrap_or(Init::UniformHalf),
            ablate_g: file.ablate_g.unwrap_or(false),
        };
        cfg.validate(d)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Optimizer seed (used by seeded_random init).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop the decomposition vector g.
    #[arg(long)]
    pub ablate_g: bool,
    /// Replay a previous run from its manifest instead of flags.
    #[arg(long, conflicts_with_all = ["data", "synthetic", "config", "k", "l", "alpha", "beta"])]
    pub manifest: Option<PathBuf>,
    /// Output path for the selection JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Selection JSON written by `select`.
    #[arg(long)]
    pub selection: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// k-means seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature fractions, e.g. `0.1,0.15` or `10%,15%`.
    #[arg(long)]
    pub fractions: Option<String>,
    /// Metrics to compute: acc,nmi,balance,proportion.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    /// Number of clusters when the dataset has no labels.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Split the protected row at this value instead of the automatic rule.
    #[arg(long)]
    pub group_threshold: Option<f64>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, default_value_t = 15)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    /// Use the linear kernel instead of rbf.
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Alpha values (comma separated); defaults to 0.001..1000 by decades.
    #[arg(long)]
    pub alpha_grid: Option<String>,
    /// Beta values (comma separated); defaults to the fixed beta.
    #[arg(long)]
    pub beta_grid: Option<String>,
    #[arg(long)]
    pub fractions: Option<String>,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Seed for k-means and the optimizer.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also run every grid point without the decomposition vector.
    #[arg(long)]
    pub ablate_g: bool,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    /// Output CSV path; roles go to `<stem>.roles.json` next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance written next to every command's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_snapshot: ConfigSnapshot,
    pub tool_version: String,
    pub wall_time_seconds: f64,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub fufs: Option<FufsConfig>,
    pub data: Option<DataSource>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

/// `dir/stem.ext` -> `dir/stem<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| FairselError::io(parent, e))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| FairselError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| FairselError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| FairselError::InvalidData(format!("{}: {e}", path.display())))
}

fn parse_list(raw: &str, field: &'static str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let (num, scale) = match s.strip_suffix('%') {
                Some(pct) => (pct, 0.01),
                None => (s, 1.0),
            };
            num.parse::<f64>()
                .map(|v| v * scale)
                .map_err(|_| FairselError::config(field, format!("cannot parse `{s}`")))
        })
        .collect()
}

pub fn parse_fractions(raw: Option<&str>) -> Result<Vec<f64>> {
    let fractions = match raw {
        Some(raw) => parse_list(raw, "fractions")?,
        None => DEFAULT_FRACTIONS.to_vec(),
    };
    if fractions.is_empty() {
        return Err(FairselError::config("fractions", "empty grid"));
    }
    if let Some(bad) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(FairselError::config(
            "fractions",
            format!("{bad} is outside (0, 1]"),
        ));
    }
    Ok(fractions)
}

/// Features kept at `fraction` of `d`: `ceil(fraction * d)` in `[1, d]`.
pub fn feature_count(fraction: f64, d: usize) -> usize {
    ((fraction * d as f64 - 1e-9).ceil() as usize).clamp(1, d)
}

/// One row of the evaluation / sweep tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionRow {
    pub fraction: f64,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub balance: Option<f64>,
    pub proportion: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSet {
    pub acc: bool,
    pub nmi: bool,
    pub balance: bool,
    pub proportion: bool,
}

impl MetricSet {
    pub const ALL: MetricSet = MetricSet {
        acc: true,
        nmi: true,
        balance: true,
        proportion: true,
    };

    pub fn parse(names: &[String], has_labels: bool) -> Result<Self> {
        if names.is_empty() {
            return Ok(MetricSet {
                acc: has_labels,
                nmi: has_labels,
                balance: true,
                proportion: true,
            });
        }
        let mut set = MetricSet {
            acc: false,
            nmi: false,
            balance: false,
            proportion: false,
        };
        for name in names {
            match name.trim() {
                "acc" => set.acc = true,
                "nmi" => set.nmi = true,
                "balance" => set.balance = true,
                "proportion" => set.proportion = true,
                other => {
                    return Err(FairselError::config(
                        "metrics",
                        format!("unknown metric `{other}`"),
                    ))
                }
            }
        }
        if (set.acc || set.nmi) && !has_labels {
            return Err(FairselError::InvalidData(
                "acc/nmi requested but the dataset has no labels".into(),
            ));
        }
        Ok(set)
    }

    fn utility(&self) -> bool {
        self.acc || self.nmi
    }
}

/// Evaluates the top-ranked features of `result` at every fraction.
pub fn evaluate_fractions(
    dataset: &Dataset,
    result: &SelectionResult,
    fractions: &[f64],
    metrics: MetricSet,
    opts: &EvalOptions,
) -> Result<Vec<FractionRow>> {
    if result.indicators.m.len() != dataset.d() {
        return Err(FairselError::Shape(format!(
            "selection has {} features but the dataset has {}",
            result.indicators.m.len(),
            dataset.d()
        )));
    }
    let ranked: Vec<usize> = rank_features(result).into_iter().map(|(i, _)| i).collect();
    let opts = EvalOptions {
        utility: metrics.utility(),
        keep_per_restart: false,
        ..opts.clone()
    };
    fractions
        .iter()
        .map(|&fraction| {
            let count = feature_count(fraction, dataset.d());
            let report: EvalReport = evaluate_selection(dataset, &ranked[..count], &opts)?;
            Ok(FractionRow {
                fraction,
                acc: report.acc.filter(|_| metrics.acc),
                nmi: report.nmi.filter(|_| metrics.nmi),
                balance: metrics.balance.then_some(report.balance),
                proportion: metrics.proportion.then_some(report.proportion),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Best {
    pub value: f64,
    pub fraction: f64,
}

/// Best value per metric across fractions (max for acc/nmi/balance, min for
/// proportion); earliest fraction wins ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestReport {
    pub acc: Option<Best>,
    pub nmi: Option<Best>,
    pub balance: Option<Best>,
    pub proportion: Option<Best>,
}

pub fn best_per_metric(rows: &[FractionRow]) -> BestReport {
    fn pick(
        rows: &[FractionRow],
        get: fn(&FractionRow) -> Option<f64>,
        higher: bool,
    ) -> Option<Best> {
        let mut best: Option<Best> = None;
        for row in rows {
            if let Some(v) = get(row) {
                let better = match best {
                    None => true,
                    Some(b) if higher => v > b.value,
                    Some(b) => v < b.value,
                };
                if better {
                    best = Some(Best {
                        value: v,
                        fraction: row.fraction,
                    });
                }
            }
        }
        best
    }
    BestReport {
        acc: pick(rows, |r| r.acc, true),
        nmi: pick(rows, |r| r.nmi, true),
        balance: pick(rows, |r| r.balance, true),
        proportion: pick(rows, |r| r.proportion, false),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_fraction_csv(path: &Path, rows: &[FractionRow]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fraction", "acc", "nmi", "balance", "proportion"])?;
    for r in rows {
        w.write_record([
            r.fraction.to_string(),
            fmt_opt(r.acc),
            fmt_opt(r.nmi),
            fmt_opt(r.balance),
            fmt_opt(r.proportion),
        ])?;
    }
    w.flush().map_err(|e| FairselError::io(path, e))
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub fraction: f64,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub balance: Option<f64>,
    pub proportion: Option<f64>,
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "alpha",
        "beta",
        "fraction",
        "acc",
        "nmi",
        "balance",
        "proportion",
    ])?;
    for r in rows {
        w.write_record([
            r.alpha.to_string(),
            r.beta.to_string(),
            r.fraction.to_string(),
            fmt_opt(r.acc),
            fmt_opt(r.nmi),
            fmt_opt(r.balance),
            fmt_opt(r.proportion),
        ])?;
    }
    w.flush().map_err(|e| FairselError::io(path, e))
}

/// Runs select + evaluate for every (alpha, beta) pair; rows come back
/// sorted by (alpha, beta, fraction) whatever order the points finish in.
pub fn run_sweep(
    dataset: &Dataset,
    base: &FufsConfig,
    alphas: &[f64],
    betas: &[f64],
    fractions: &[f64],
    metrics: MetricSet,
    opts: &EvalOptions,
) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(FairselError::config("alpha_grid", "empty grid"));
    }
    if betas.is_empty() {
        return Err(FairselError::config("beta_grid", "empty grid"));
    }
    let points: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    let per_point = points
        .par_iter()
        .map(|&(alpha, beta)| {
            let cfg = FufsConfig {
                alpha,
                beta,
                ..base.clone()
            };
            cfg.validate(dataset.d())?;
            let result = optimize(dataset, &cfg)?;
            let rows = evaluate_fractions(dataset, &result, fractions, metrics, opts)?;
            Ok(rows
                .into_iter()
                .map(|r| SweepRow {
                    alpha,
                    beta,
                    fraction: r.fraction,
                    acc: r.acc,
                    nmi: r.nmi,
                    balance: r.balance,
                    proportion: r.proportion,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<SweepRow> = per_point.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.alpha
            .total_cmp(&b.alpha)
            .then(a.beta.total_cmp(&b.beta))
            .then(a.fraction.total_cmp(&b.fraction))
    });
    Ok(rows)
}

fn manifest_for(
    command: &str,
    fufs: Option<FufsConfig>,
    data: Option<DataSource>,
    extra: serde_json::Value,
    started: Instant,
    outputs: Vec<PathBuf>,
) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        config_snapshot: ConfigSnapshot { fufs, data, extra },
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs,
    }
}

pub fn cmd_select(args: &SelectArgs) -> Result<()> {
    let started = Instant::now();
    let (source, dataset, cfg) = match &args.manifest {
        Some(path) => {
            let manifest: RunManifest = read_json(path)?;
            let source = manifest
                .config_snapshot
                .data
                .ok_or_else(|| FairselError::config("manifest", "no data source recorded"))?;
            let cfg = manifest
                .config_snapshot
                .fufs
                .ok_or_else(|| FairselError::config("manifest", "no optimizer config recorded"))?;
            let dataset = source.load()?;
            cfg.validate(dataset.d())?;
            (source, dataset, cfg)
        }
        None => {
            let source = args.data.source()?;
            let dataset = source.load()?;
            let mut cfg = args.config.resolve(args.seed, dataset.d())?;
            cfg.ablate_g |= args.ablate_g;
            (source, dataset, cfg)
        }
    };
    for w in cfg.warnings(dataset.d()) {
        eprintln!("warning: {w}");
    }
    let result = optimize(&dataset, &cfg)?;
    write_json(&args.out, &result)?;
    let manifest_path = sibling(&args.out, ".manifest.json");
    let manifest = manifest_for(
        "select",
        Some(cfg),
        Some(source),
        serde_json::Value::Null,
        started,
        vec![args.out.clone(), manifest_path.clone()],
    );
    write_json(&manifest_path, &manifest)?;
    println!(
        "selected {} features in {} iterations (converged: {})",
        result.selected.len(),
        result.iterations,
        result.converged
    );
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    let result: SelectionResult = read_json(&args.selection)?;
    let source = args.data.source()?;
    let dataset = source.load()?;
    let fractions = parse_fractions(args.fractions.as_deref())?;
    let metrics = MetricSet::parse(&args.metrics, dataset.labels.is_some())?;
    let opts = EvalOptions {
        clusters: args.clusters,
        restarts: args.restarts,
        seed: args.seed,
        utility: metrics.utility(),
        grouping: args
            .group_threshold
            .map_or(Grouping::Auto, Grouping::Threshold),
        keep_per_restart: false,
    };
    let rows = evaluate_fractions(&dataset, &result, &fractions, metrics, &opts)?;
    write_fraction_csv(&args.out, &rows)?;
    let best = best_per_metric(&rows);
    let best_path = sibling(&args.out, ".best.json");
    write_json(&best_path, &best)?;
    for (name, b) in [
        ("acc", best.acc),
        ("nmi", best.nmi),
        ("balance", best.balance),
        ("proportion", best.proportion),
    ] {
        if let Some(b) = b {
            println!("best {name}: {:.4} at fraction {}", b.value, b.fraction);
        }
    }
    let manifest_path = sibling(&args.out, ".manifest.json");
    let extra = serde_json::json!({
        "selection": args.selection,
        "restarts": args.restarts,
        "seed": args.seed,
        "fractions": fractions,
        "clusters": args.clusters,
        "group_threshold": args.group_threshold,
    });
    let manifest = manifest_for(
        "evaluate",
        None,
        Some(source),
        extra,
        started,
        vec![args.out.clone(), best_path, manifest_path.clone()],
    );
    write_json(&manifest_path, &manifest)
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    if args.d == 0 || args.n < 2 || args.p == 0 {
        return Err(FairselError::config("d", "need d >= 1, n >= 2, p >= 1"));
    }
    if args.epsilon.is_nan() || args.epsilon <= 0.0 {
        return Err(FairselError::config("epsilon", "must be > 0"));
    }
    let (dataset, pair) = random_instance(args.d, args.n, args.p, args.seed)?;
    let mut cfg = FufsConfig::new(1);
    cfg.alpha = args.alpha;
    cfg.beta = args.beta;
    if args.linear {
        cfg.kernel = KernelSpec::linear();
    }
    cfg.validate(args.d)?;
    let report = check_gradient(&dataset, &pair, &cfg, args.epsilon)?;
    println!(
        "max relative error: m {:.3e}, g {:.3e}",
        report.max_rel_error_m, report.max_rel_error_g
    );
    if report.passed() {
        Ok(())
    } else {
        let block = match report.worst_block {
            Block::M => "m",
            Block::G => "g",
        };
        Err(FairselError::Numeric(format!(
            "gradient check failed at {block}[{}]: analytic {:.6e}, finite difference {:.6e}, relative error {:.3e}",
            report.worst_index,
            report.analytic,
            report.numeric,
            report.max_rel_error()
        )))
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let started = Instant::now();
    let source = args.data.source()?;
    let dataset = source.load()?;
    let base = args.config.resolve(Some(args.seed), dataset.d())?;
    let alphas = match &args.alpha_grid {
        Some(raw) => parse_list(raw, "alpha_grid")?,
        None => DEFAULT_ALPHA_GRID.to_vec(),
    };
    let betas = match &args.beta_grid {
        Some(raw) => parse_list(raw, "beta_grid")?,
        None => vec![base.beta],
    };
    if alphas.is_empty() {
        return Err(FairselError::config("alpha_grid", "empty grid"));
    }
    if betas.is_empty() {
        return Err(FairselError::config("beta_grid", "empty grid"));
    }
    let fractions = parse_fractions(args.fractions.as_deref())?;
    let metrics = MetricSet::parse(&[], dataset.labels.is_some())?;
    let opts = EvalOptions {
        restarts: args.restarts,
        seed: args.seed,
        ..Default::default()
    };
    let rows = run_sweep(&dataset, &base, &alphas, &betas, &fractions, metrics, &opts)?;
    write_sweep_csv(&args.out, &rows)?;
    let mut outputs = vec![args.out.clone()];
    if args.ablate_g {
        let ablated = FufsConfig {
            ablate_g: true,
            ..base.clone()
        };
        let rows = run_sweep(
            &dataset, &ablated, &alphas, &betas, &fractions, metrics, &opts,
        )?;
        let path = sibling(&args.out, "_ablate_g.csv");
        write_sweep_csv(&path, &rows)?;
        outputs.push(path);
    }
    let manifest_path = sibling(&args.out, ".manifest.json");
    outputs.push(manifest_path.clone());
    let extra = serde_json::json!({
        "alpha_grid": alphas,
        "beta_grid": betas,
        "fractions": fractions,
        "restarts": args.restarts,
        "seed": args.seed,
        "ablate_g": args.ablate_g,
    });
    let manifest = manifest_for("sweep", Some(base), Some(source), extra, started, outputs);
    write_json(&manifest_path, &manifest)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let started = Instant::now();
    let spec = args.synth.spec();
    let data = generate_synthetic(&spec)?;
    ensure_parent(&args.out)?;
    data.dataset.write_csv(&args.out)?;
    let roles_path = sibling(&args.out, ".roles.json");
    write_json(&roles_path, &RolesFile { roles: data.roles })?;
    let manifest_path = sibling(&args.out, ".manifest.json");
    let manifest = manifest_for(
        "synth",
        None,
        Some(DataSource::Synthetic {
            spec,
            standardize: false,
        }),
        serde_json::Value::Null,
        started,
        vec![args.out.clone(), roles_path, manifest_path.clone()],
    );
    write_json(&manifest_path, &manifest)
}

pub fn exit_code(err: &FairselError) -> i32 {
    match err.class() {
        ErrorClass::Config => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // a second call in the same process is harmless; keep the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    let msg = e.to_string();
                    eprintln!(
                        "error: {}",
                        msg.lines()
                            .next()
                            .unwrap_or("invalid arguments")
                            .trim_start_matches("error: ")
                    );
                    1
                }
            };
        }
    };
    configure_threads();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_counts() {
        assert_eq!(feature_count(0.1, 30), 3);
        assert_eq!(feature_count(0.33, 30), 10);
        assert_eq!(feature_count(0.15, 30), 5);
        assert_eq!(feature_count(0.01, 30), 1);
        assert_eq!(feature_count(1.0, 30), 30);
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!(parse_fractions(Some("10%,0.5")).unwrap(), vec![0.1, 0.5]);
        assert_eq!(parse_fractions(None).unwrap().len(), 7);
        assert!(parse_fractions(Some("")).is_err());
        assert!(parse_fractions(Some("1.5")).is_err());
        assert!(parse_fractions(Some("x")).is_err());
    }

    #[test]
    fn best_picks_direction_and_first_tie() {
        let row = |f, a, p| FractionRow {
            fraction: f,
            acc: Some(a),
            nmi: None,
            balance: Some(a),
            proportion: Some(p),
        };
        let best = best_per_metric(&[row(0.1, 0.5, 1.2), row(0.2, 0.9, 1.0), row(0.3, 0.9, 1.0)]);
        assert_eq!(best.acc.unwrap().fraction, 0.2);
        assert_eq!(best.proportion.unwrap().fraction, 0.2);
        assert!(best.nmi.is_none());
    }

    #[test]
    fn config_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"k": 4, "alpha": 2.5, "beta": 0.3}"#).unwrap();
        let args = ConfigArgs {
            config: Some(path.clone()),
            beta: Some(0.7),
            ..Default::default()
        };
        let cfg = args.resolve(None, 10).unwrap();
        assert_eq!((cfg.k, cfg.l, cfg.alpha, cfg.beta), (4, 4, 2.5, 0.7));
        assert_eq!(cfg.eta, DEFAULT_ETA);

        fs::write(&path, r#"{"k": 4, "alhpa": 2.5}"#).unwrap();
        let err = args.resolve(None, 10).unwrap_err();
        assert_eq!(exit_code(&err), 1);

        let args = ConfigArgs {
            k: Some(11),
            ..Default::default()
        };
        assert!(matches!(
            args.resolve(None, 10),
            Err(FairselError::Config { field: "k", .. })
        ));
    }

    #[test]
    fn metric_set_validation() {
        assert!(MetricSet::parse(&["acc".into()], false).is_err());
        assert_eq!(
            exit_code(&MetricSet::parse(&["acc".into()], false).unwrap_err()),
            2
        );
        let m = MetricSet::parse(&[], false).unwrap();
        assert!(!m.acc && m.balance);
        assert!(MetricSet::parse(&["bogus".into()], true).is_err());
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(
            sibling(Path::new("/a/b/sel.json"), ".manifest.json"),
            PathBuf::from("/a/b/sel.manifest.json")
        );
        assert_eq!(
            sibling(Path::new("t.csv"), "_ablate_g.csv"),
            PathBuf::from("t_ablate_g.csv")
        );
    }
}
