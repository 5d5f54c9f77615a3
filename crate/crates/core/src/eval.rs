//! Clustering-based evaluation of a feature subset.
//!
//! k-means is run on the selected features with independent restarts; every
//! restart is scored for utility against ground truth (ACC, NMI) and for
//! fairness against protected groups (Balance, Proportion), and the report
//! holds the per-restart means.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{FairselError, Result};

pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding, `restarts` times. Restart `r`
/// draws from ChaCha stream `r` under `seed`, so the output does not depend
/// on how restarts are scheduled.
pub fn kmeans(
    points: &Array2<f64>,
    c: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<ClusterAssignment>> {
    let n = points.ncols();
    if c < 2 {
        return Err(FairselError::InvalidData(format!(
            "k-means needs c >= 2, got {c}"
        )));
    }
    if n < c {
        return Err(FairselError::InvalidData(format!(
            "k-means with c = {c} needs at least {c} instances, got {n}"
        )));
    }
    // instances as contiguous rows
    let rows = points.t().as_standard_layout().to_owned();
    Ok((0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(&rows, c, &mut rng)
        })
        .collect())
}

fn plus_plus(rows: &Array2<f64>, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = rows.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(rows.row(i), rows.row(chosen[0])))
        .collect();
    while chosen.len() < c {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every remaining point coincides with a centre
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(rows.row(i), rows.row(next)));
        }
    }
    rows.select(ndarray::Axis(0), &chosen)
}

fn nearest(row: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd(rows: &Array2<f64>, c: usize, rng: &mut ChaCha8Rng) -> ClusterAssignment {
    let (n, dim) = rows.dim();
    let mut centroids = plus_plus(rows, c, rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (row, label) in rows.rows().into_iter().zip(labels.iter_mut()) {
            let (j, _) = nearest(row, &centroids);
            if *label != j {
                *label = j;
                changed = true;
            }
        }
        repair_empty(rows, &mut labels, &centroids, c);
        let mut sums = Array2::<f64>::zeros((c, dim));
        let mut counts = vec![0usize; c];
        for (row, &label) in rows.rows().into_iter().zip(&labels) {
            sums.row_mut(label).scaled_add(1.0, &row);
            counts[label] += 1;
        }
        for (mut row, &count) in sums.rows_mut().into_iter().zip(&counts) {
            row /= count as f64;
        }
        centroids = sums;
        if !changed {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(rows.row(i), centroids.row(labels[i])))
        .sum();
    ClusterAssignment { labels, inertia }
}

/// Moves the point farthest from its centroid into each empty cluster,
/// taking only from clusters that keep at least one member.
fn repair_empty(rows: &Array2<f64>, labels: &mut [usize], centroids: &Array2<f64>, c: usize) {
    let mut counts = vec![0usize; c];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for empty in 0..c {
        if counts[empty] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] > 1 {
                let d = sq_dist(rows.row(i), centroids.row(l));
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        let i = far.expect("n >= c leaves a donor cluster");
        counts[labels[i]] -= 1;
        labels[i] = empty;
        counts[empty] += 1;
    }
}

fn n_ids(labels: &[usize]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m + 1)
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Array2<f64>> {
    if a.len() != b.len() {
        return Err(FairselError::Shape(format!(
            "label vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(FairselError::InvalidData("empty label vectors".into()));
    }
    let mut table = Array2::zeros((n_ids(a), n_ids(b)));
    for (&i, &j) in a.iter().zip(b) {
        table[[i, j]] += 1.0;
    }
    Ok(table)
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian
/// method with potentials, O(n³)). Returns `assign[row] = column`.
fn hungarian(cost: &Array2<i64>) -> Vec<usize> {
    let n = cost.nrows();
    const INF: i64 = i64::MAX / 4;
    // 1-based with a sentinel column 0
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = INF;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = cost[[r - 1, col - 1]] - u[r] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assign[owner[col] - 1] = col - 1;
        }
    }
    assign
}

/// Clustering accuracy under the best one-to-one cluster-to-class map.
pub fn acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let size = table.nrows().max(table.ncols());
    let cost = Array2::from_shape_fn((size, size), |(i, j)| {
        if i < table.nrows() && j < table.ncols() {
            -(table[[i, j]] as i64)
        } else {
            0
        }
    });
    let assign = hungarian(&cost);
    let matched: i64 = assign.iter().enumerate().map(|(i, &j)| -cost[[i, j]]).sum();
    Ok(matched as f64 / pred.len() as f64)
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let rows = table.sum_axis(ndarray::Axis(1));
    let cols = table.sum_axis(ndarray::Axis(0));
    let h_pred = entropy(rows.iter().copied(), n);
    let h_truth = entropy(cols.iter().copied(), n);
    if h_pred == 0.0 && h_truth == 0.0 {
        // one cluster on each side: the partitions coincide
        return Ok(1.0);
    }
    if h_pred == 0.0 || h_truth == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for ((i, j), &nij) in table.indexed_iter() {
        if nij > 0.0 {
            mi += nij / n * (n * nij / (rows[i] * cols[j])).ln();
        }
    }
    Ok((mi / (0.5 * (h_pred + h_truth))).clamp(0.0, 1.0))
}

/// Cluster × group counts, rejecting empty clusters.
fn cluster_group_table(pred: &[usize], groups: &[usize]) -> Result<Array2<f64>> {
    let table = contingency(pred, groups)?;
    if let Some(empty) = table.rows().into_iter().position(|r| r.sum() == 0.0) {
        return Err(FairselError::InvalidData(format!(
            "cluster {empty} is empty"
        )));
    }
    Ok(table)
}

/// `min_i min_g |C_i ∩ X_g| / |C_i|`; higher is fairer.
pub fn balance(pred: &[usize], groups: &[usize]) -> Result<f64> {
    let table = cluster_group_table(pred, groups)?;
    Ok(table
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min) / r.sum())
        .fold(f64::INFINITY, f64::min))
}

/// `Σ_i max_g |C_i ∩ X_g| / |C_i|`; lower is fairer.
pub fn proportion(pred: &[usize], groups: &[usize]) -> Result<f64> {
    let table = cluster_group_table(pred, groups)?;
    Ok(table
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(0.0, f64::max) / r.sum())
        .sum())
}

/// How a protected row is turned into group ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Rows with at most two distinct values are categorical; anything else
    /// is split at its median.
    Auto,
    /// Every distinct value is its own group.
    Categorical,
    /// Group 1 is `value > threshold`.
    Threshold(f64),
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn groups_from_row(row: &[f64], rule: Grouping) -> Vec<usize> {
    let mut distinct = row.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let categorical = |distinct: &[f64]| {
        row.iter()
            .map(|v| {
                distinct
                    .iter()
                    .position(|d| d == v)
                    .expect("value is present")
            })
            .collect()
    };
    match rule {
        Grouping::Categorical => categorical(&distinct),
        Grouping::Auto if distinct.len() <= 2 => categorical(&distinct),
        Grouping::Auto => {
            let t = median(row);
            row.iter().map(|&v| usize::from(v > t)).collect()
        }
        Grouping::Threshold(t) => row.iter().map(|&v| usize::from(v > t)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartMetrics {
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub balance: f64,
    pub proportion: f64,
}

/// Means over restarts. `acc`/`nmi` are null when utility metrics were not
/// requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub balance: f64,
    pub proportion: f64,
    pub restarts: usize,
    pub per_restart: Option<Vec<RestartMetrics>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Number of clusters; defaults to the ground-truth label count.
    pub clusters: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
    /// Compute ACC and NMI (requires labels).
    pub utility: bool,
    pub grouping: Grouping,
    pub keep_per_restart: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            clusters: None,
            restarts: 50,
            seed: 0,
            utility: true,
            grouping: Grouping::Auto,
            keep_per_restart: true,
        }
    }
}

/// Clusters the instances on the `selected` feature rows and scores them.
/// Groups come from the first protected row.
pub fn evaluate_selection(
    dataset: &Dataset,
    selected: &[usize],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if selected.is_empty() {
        return Err(FairselError::InvalidData("empty feature selection".into()));
    }
    if opts.restarts == 0 {
        return Err(FairselError::InvalidData("restarts must be >= 1".into()));
    }
    let truth = match (&dataset.labels, opts.utility) {
        (Some(l), true) => Some(l.as_slice()),
        (None, true) => {
            return Err(FairselError::InvalidData(
                "acc/nmi requested but the dataset has no labels".into(),
            ))
        }
        (_, false) => None,
    };
    let c = opts
        .clusters
        .or_else(|| dataset.n_clusters())
        .ok_or_else(|| {
            FairselError::InvalidData("number of clusters unknown without labels".into())
        })?;
    let points = dataset.select_features(selected)?;
    let groups = groups_from_row(&dataset.p_mat.row(0).to_vec(), opts.grouping);

    let runs = kmeans(&points, c, opts.restarts, opts.seed)?;
    let per_restart = runs
        .iter()
        .map(|run| {
            Ok(RestartMetrics {
                acc: truth.map(|t| acc(&run.labels, t)).transpose()?,
                nmi: truth.map(|t| nmi(&run.labels, t)).transpose()?,
                balance: balance(&run.labels, &groups)?,
                proportion: proportion(&run.labels, &groups)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let r = per_restart.len() as f64;
    let mean = |f: fn(&RestartMetrics) -> f64| per_restart.iter().map(f).sum::<f64>() / r;
    let mean_opt = |f: fn(&RestartMetrics) -> Option<f64>| {
        per_restart
            .iter()
            .map(f)
            .sum::<Option<f64>>()
            .map(|s| s / r)
    };
    Ok(EvalReport {
        acc: mean_opt(|m| m.acc),
        nmi: mean_opt(|m| m.nmi),
        balance: mean(|m| m.balance),
        proportion: mean(|m| m.proportion),
        restarts: opts.restarts,
        per_restart: opts.keep_per_restart.then_some(per_restart),
    })
}
