#![allow(dead_code)]

use fairsel::cli::feature_count;
use fairsel::dataset::{generate_synthetic, Dataset, FeatureRole, SyntheticData, SyntheticSpec};
use fairsel::eval::{evaluate_selection, EvalOptions, EvalReport};
use fairsel::fufs::{optimize, rank_features, FufsConfig, SelectionResult};

/// Standard benchmark data, z-scored the way the CLI feeds it to the optimizer.
pub fn standard(seed: u64) -> SyntheticData {
    let mut data = generate_synthetic(&SyntheticSpec::standard(200, seed)).unwrap();
    data.dataset.standardize();
    data
}

pub fn select(
    dataset: &Dataset,
    k: usize,
    alpha: f64,
    beta: f64,
    ablate_g: bool,
) -> SelectionResult {
    let mut cfg = FufsConfig::new(k);
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.ablate_g = ablate_g;
    optimize(dataset, &cfg).unwrap()
}

/// k-means scores on the top `fraction` of features ranked by `m`.
pub fn evaluate_at(dataset: &Dataset, result: &SelectionResult, fraction: f64) -> EvalReport {
    let count = feature_count(fraction, dataset.d());
    let top: Vec<usize> = rank_features(result)
        .into_iter()
        .take(count)
        .map(|(i, _)| i)
        .collect();
    evaluate_selection(dataset, &top, &EvalOptions::default()).unwrap()
}

pub fn count_role(data: &SyntheticData, indices: &[usize], role: FeatureRole) -> usize {
    data.count_role(indices, role)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Every labelling of `n` items that uses exactly the ids `0..c`.
pub fn surjective_labelings(n: usize, c: usize) -> Vec<Vec<usize>> {
    let total = c.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let v = code % c;
                    code /= c;
                    v
                })
                .collect::<Vec<_>>()
        })
        .filter(|l| (0..c).all(|k| l.contains(&k)))
        .collect()
}

fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.clone();
        let head = rest.remove(i);
        for mut tail in permutations(rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn distinct(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Best accuracy over all one-to-one maps from predicted to true ids.
pub fn brute_acc(pred: &[usize], truth: &[usize]) -> f64 {
    let size = distinct(pred).max(distinct(truth));
    permutations((0..size).collect())
        .into_iter()
        .map(|perm| {
            pred.iter()
                .zip(truth)
                .filter(|(p, t)| perm[**p] == **t)
                .count()
        })
        .max()
        .unwrap() as f64
        / pred.len() as f64
}

/// Mutual information over the mean entropy, summed instance by instance.
pub fn brute_nmi(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let frac = |f: &dyn Fn(usize) -> bool| (0..pred.len()).filter(|&i| f(i)).count() as f64 / n;
    let h = |labels: &[usize]| -> f64 {
        (0..distinct(labels))
            .map(|k| frac(&|i| labels[i] == k))
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    };
    let (hp, ht) = (h(pred), h(truth));
    if hp == 0.0 && ht == 0.0 {
        return 1.0;
    }
    if hp == 0.0 || ht == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for a in 0..distinct(pred) {
        for b in 0..distinct(truth) {
            let pab = frac(&|i| pred[i] == a && truth[i] == b);
            if pab > 0.0 {
                mi += pab * (pab / (frac(&|i| pred[i] == a) * frac(&|i| truth[i] == b))).ln();
            }
        }
    }
    mi / ((hp + ht) / 2.0)
}

fn cluster_group_fractions(pred: &[usize], groups: &[usize]) -> Vec<Vec<f64>> {
    (0..distinct(pred))
        .map(|c| {
            let size = pred.iter().filter(|&&p| p == c).count();
            (0..distinct(groups))
                .map(|g| {
                    let both = pred
                        .iter()
                        .zip(groups)
                        .filter(|(p, q)| **p == c && **q == g)
                        .count();
                    both as f64 / size as f64
                })
                .collect()
        })
        .collect()
}

pub fn brute_balance(pred: &[usize], groups: &[usize]) -> f64 {
    cluster_group_fractions(pred, groups)
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min)
}

pub fn brute_proportion(pred: &[usize], groups: &[usize]) -> f64 {
    cluster_group_fractions(pred, groups)
        .into_iter()
        .map(|row| row.into_iter().fold(0.0, f64::max))
        .sum()
}

/// Largest deviations between the library metrics and the brute-force
/// versions over every partition pair with `n <= 6`, `c <= 3`, `G <= 2`.
#[derive(Debug, Default)]
pub struct OracleSweep {
    pub pairs: usize,
    pub max_acc_err: f64,
    pub max_nmi_err: f64,
    pub fairness_mismatches: usize,
}

pub fn metric_oracle_sweep() -> OracleSweep {
    use fairsel::eval::{acc, balance, nmi, proportion};
    let mut out = OracleSweep::default();
    for n in 1..=6 {
        let preds: Vec<Vec<usize>> = (1..=3.min(n))
            .flat_map(|c| surjective_labelings(n, c))
            .collect();
        for pred in &preds {
            for truth in &preds {
                out.pairs += 1;
                out.max_acc_err = out
                    .max_acc_err
                    .max((acc(pred, truth).unwrap() - brute_acc(pred, truth)).abs());
                out.max_nmi_err = out
                    .max_nmi_err
                    .max((nmi(pred, truth).unwrap() - brute_nmi(pred, truth)).abs());
            }
            for groups in (1..=2.min(n)).flat_map(|g| surjective_labelings(n, g)) {
                out.pairs += 1;
                if balance(pred, &groups).unwrap() != brute_balance(pred, &groups)
                    || proportion(pred, &groups).unwrap() != brute_proportion(pred, &groups)
                {
                    out.fairness_mismatches += 1;
                }
            }
        }
    }
    out
}
