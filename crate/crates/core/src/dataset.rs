//! Data model, CSV ingestion, standardization and the synthetic generator.
//!
//! Matrices are stored feature-major: `x` is `d × n` and `p_mat` is `p × n`,
//! one column per instance. CSV files are the usual instance-per-row layout
//! and get transposed on the way in and out.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FairselError, Result};

/// Non-protected features, protected features and optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub p_mat: Array2<f64>,
    pub labels: Option<Vec<usize>>,
    pub feature_names: Option<Vec<String>>,
    pub protected_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset and checks its invariants.
    pub fn new(x: Array2<f64>, p_mat: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let ds = Dataset {
            x,
            p_mat,
            labels,
            feature_names: None,
            protected_names: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_names(mut self, features: Vec<String>, protected: Vec<String>) -> Result<Self> {
        self.feature_names = Some(features);
        self.protected_names = Some(protected);
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn d(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.p_mat.nrows()
    }

    /// Number of distinct ground-truth clusters, if labels are present.
    pub fn n_clusters(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.ncols();
        if self.p_mat.ncols() != n {
            return Err(FairselError::Shape(format!(
                "x has {} instances but p_mat has {}",
                n,
                self.p_mat.ncols()
            )));
        }
        if n < 2 {
            return Err(FairselError::InvalidData(format!(
                "need at least 2 instances, got {n}"
            )));
        }
        if self.x.nrows() == 0 {
            return Err(FairselError::InvalidData(
                "no non-protected features".into(),
            ));
        }
        if self.p_mat.nrows() == 0 {
            return Err(FairselError::InvalidData("no protected features".into()));
        }
        if self
            .x
            .iter()
            .chain(self.p_mat.iter())
            .any(|v| !v.is_finite())
        {
            return Err(FairselError::InvalidData("non-finite entry".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(FairselError::Shape(format!(
                    "{} labels for {} instances",
                    labels.len(),
                    n
                )));
            }
            let c = labels.iter().copied().max().map_or(0, |m| m + 1);
            let mut seen = vec![false; c];
            for &l in labels {
                seen[l] = true;
            }
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(FairselError::InvalidData(format!(
                    "cluster id {missing} never occurs in labels"
                )));
            }
        }
        if let Some(names) = &self.feature_names {
            if names.len() != self.d() {
                return Err(FairselError::Shape("feature_names length != d".into()));
            }
        }
        if let Some(names) = &self.protected_names {
            if names.len() != self.p() {
                return Err(FairselError::Shape("protected_names length != p".into()));
            }
        }
        Ok(())
    }

    /// Z-scores every row of `x` and `p_mat` in place.
    pub fn standardize(&mut self) {
        standardize_rows(&mut self.x);
        standardize_rows(&mut self.p_mat);
    }

    pub fn standardized(mut self) -> Self {
        self.standardize();
        self
    }

    /// Keeps only the listed feature rows of `x`, in the given order.
    pub fn select_features(&self, indices: &[usize]) -> Result<Array2<f64>> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.d()) {
            return Err(FairselError::InvalidData(format!(
                "feature index {bad} out of range (d = {})",
                self.d()
            )));
        }
        Ok(self.x.select(Axis(0), indices))
    }

    /// Writes the dataset as instance-per-row CSV. Column names fall back to
    /// `f{i}`, `protected{i}` and `label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| FairselError::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = self.feature_header();
        header.extend(self.protected_header());
        if self.labels.is_some() {
            header.push(LABEL_COLUMN.to_string());
        }
        w.write_record(&header)?;
        for j in 0..self.n() {
            let mut row: Vec<String> = self.x.column(j).iter().map(|v| v.to_string()).collect();
            row.extend(self.p_mat.column(j).iter().map(|v| v.to_string()));
            if let Some(labels) = &self.labels {
                row.push(labels[j].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| FairselError::io(path, e))?;
        Ok(())
    }

    pub fn feature_header(&self) -> Vec<String> {
        self.feature_names
            .clone()
            .unwrap_or_else(|| (0..self.d()).map(|i| format!("f{i}")).collect())
    }

    pub fn protected_header(&self) -> Vec<String> {
        self.protected_names.clone().unwrap_or_else(|| {
            if self.p() == 1 {
                vec!["protected".to_string()]
            } else {
                (0..self.p()).map(|i| format!("protected{i}")).collect()
            }
        })
    }
}

/// Label column name used by [`Dataset::write_csv`].
pub const LABEL_COLUMN: &str = "label";

fn standardize_rows(m: &mut Array2<f64>) {
    let n = m.ncols() as f64;
    for mut row in m.rows_mut() {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let std = (row.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        if std > 1e-12 {
            row.mapv_inplace(|v| v / std);
        } else {
            row.fill(0.0);
        }
    }
}

/// Reads an instance-per-row CSV.
///
/// Protected columns that do not parse as numbers are one-hot encoded, one
/// row of `p_mat` per category (sorted), named `column=category`. Label
/// values are mapped onto dense ids `0..c` in sorted order.
pub fn load_csv(
    path: &Path,
    protected_columns: &[String],
    label_column: Option<&str>,
    standardize: bool,
) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| FairselError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let col_index = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FairselError::UnknownColumn(name.to_string()))
    };
    let protected_idx = protected_columns
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<Vec<_>>>()?;
    let label_idx = label_column.map(col_index).transpose()?;
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|i| !protected_idx.contains(i) && Some(*i) != label_idx)
        .collect();

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        records.push(rec.iter().map(|c| c.trim().to_string()).collect::<Vec<_>>());
    }
    let n = records.len();
    if n < 2 {
        return Err(FairselError::InvalidData(format!(
            "need at least 2 instances, got {n}"
        )));
    }

    let parse_cell = |row: usize, col: usize| -> Result<f64> {
        let raw = &records[row][col];
        let value: f64 = raw.parse().map_err(|_| FairselError::Parse {
            row: row + 1,
            column: header[col].clone(),
            value: raw.clone(),
        })?;
        if !value.is_finite() {
            return Err(FairselError::InvalidData(format!(
                "row {}, column `{}`: non-finite value `{raw}`",
                row + 1,
                header[col]
            )));
        }
        Ok(value)
    };

    let mut x = Array2::zeros((feature_idx.len(), n));
    for (r, &col) in feature_idx.iter().enumerate() {
        for j in 0..n {
            x[[r, j]] = parse_cell(j, col)?;
        }
    }

    let mut p_rows: Vec<Vec<f64>> = Vec::new();
    let mut p_names = Vec::new();
    for &col in &protected_idx {
        let numeric: Option<Vec<f64>> = (0..n).map(|j| parse_cell(j, col).ok()).collect();
        match numeric {
            Some(values) => {
                p_rows.push(values);
                p_names.push(header[col].clone());
            }
            None => {
                let categories: BTreeSet<&str> = records.iter().map(|r| r[col].as_str()).collect();
                for cat in categories {
                    p_rows.push(
                        records
                            .iter()
                            .map(|r| if r[col] == cat { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    p_names.push(format!("{}={}", header[col], cat));
                }
            }
        }
    }
    let mut p_mat = Array2::zeros((p_rows.len(), n));
    for (r, values) in p_rows.iter().enumerate() {
        for (j, v) in values.iter().enumerate() {
            p_mat[[r, j]] = *v;
        }
    }

    let labels = label_idx.map(|col| dense_labels(records.iter().map(|r| r[col].as_str())));

    let mut ds = Dataset::new(x, p_mat, labels)?.with_names(
        feature_idx.iter().map(|&i| header[i].clone()).collect(),
        p_names,
    )?;
    if standardize {
        ds.standardize();
    }
    Ok(ds)
}

fn dense_labels<'a>(raw: impl Iterator<Item = &'a str> + Clone) -> Vec<usize> {
    let all_numeric = raw.clone().all(|s| s.parse::<f64>().is_ok());
    let ids: BTreeMap<String, usize> = if all_numeric {
        let mut values: Vec<f64> = raw.clone().map(|s| s.parse().unwrap()).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        // key by the parsed value so "1" and "1.0" coincide
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.to_string(), i))
            .collect()
    } else {
        raw.clone()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s.to_string(), i))
            .collect()
    };
    raw.map(|s| {
        let key = if all_numeric {
            s.parse::<f64>().unwrap().to_string()
        } else {
            s.to_string()
        };
        ids[&key]
    })
    .collect()
}

/// What a synthetic feature was generated to carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    Utility,
    Sensitive,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub n_utility: usize,
    pub n_sensitive: usize,
    pub n_noise: usize,
    pub cluster_separation: f64,
    pub sensitive_correlation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 10 utility / 10 sensitive / 10 noise features, separation 3,
    /// sensitive correlation 0.9.
    pub fn standard(n: usize, seed: u64) -> Self {
        SyntheticSpec {
            n,
            n_utility: 10,
            n_sensitive: 10,
            n_noise: 10,
            cluster_separation: 3.0,
            sensitive_correlation: 0.9,
            seed,
        }
    }

    pub fn d(&self) -> usize {
        self.n_utility + self.n_sensitive + self.n_noise
    }

    pub fn validate(&self) -> Result<()> {
        if self.d() < 2 {
            return Err(FairselError::InvalidData(format!(
                "synthetic spec needs at least 2 features, got {}",
                self.d()
            )));
        }
        if self.n < 4 {
            return Err(FairselError::InvalidData(format!(
                "synthetic spec needs at least 4 instances, got {}",
                self.n
            )));
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation.is_finite()) {
            return Err(FairselError::InvalidData(
                "cluster_separation must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.sensitive_correlation) {
            return Err(FairselError::InvalidData(
                "sensitive_correlation must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// A generated dataset plus the true role of every feature index.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub roles: Vec<FeatureRole>,
}

/// JSON shape of the roles sidecar: `{"roles": ["utility", ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolesFile {
    pub roles: Vec<FeatureRole>,
}

impl SyntheticData {
    pub fn indices_with(&self, role: FeatureRole) -> Vec<usize> {
        (0..self.roles.len())
            .filter(|&i| self.roles[i] == role)
            .collect()
    }

    pub fn count_role(&self, indices: &[usize], role: FeatureRole) -> usize {
        indices.iter().filter(|&&i| self.roles[i] == role).count()
    }
}

/// Two balanced clusters, a balanced binary protected attribute drawn
/// independently of the clusters, and three kinds of features. Feature
/// order is shuffled; `roles` says which index is which.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;

    let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n.div_ceil(2))).collect();
    labels.shuffle(&mut rng);
    let mut protected: Vec<usize> = (0..n).map(|i| usize::from(i >= n.div_ceil(2))).collect();
    protected.shuffle(&mut rng);

    let mut roles: Vec<FeatureRole> = std::iter::repeat_n(FeatureRole::Utility, spec.n_utility)
        .chain(std::iter::repeat_n(
            FeatureRole::Sensitive,
            spec.n_sensitive,
        ))
        .chain(std::iter::repeat_n(FeatureRole::Noise, spec.n_noise))
        .collect();
    roles.shuffle(&mut rng);

    let half = spec.cluster_separation / 2.0;
    let corr = spec.sensitive_correlation;
    let mut x = Array2::zeros((roles.len(), n));
    for (f, role) in roles.iter().enumerate() {
        for j in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[[f, j]] = match role {
                FeatureRole::Utility => {
                    let mean = if labels[j] == 0 { -half } else { half };
                    mean + z
                }
                FeatureRole::Sensitive => {
                    let s = if protected[j] == 0 { -1.0 } else { 1.0 };
                    corr * s + (1.0 - corr) * z
                }
                FeatureRole::Noise => z,
            };
        }
    }
    let p_mat = Array2::from_shape_fn((1, n), |(_, j)| protected[j] as f64);
    let dataset = Dataset::new(x, p_mat, Some(labels))?;
    Ok(SyntheticData { dataset, roles })
}

/// Sample Pearson correlation; 0 when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
