//! Dataset acquisition, splitting, repeated training-set sampling, and
//! standardization.
//!
//! Everything here is a pure function of its inputs and an explicit seed:
//! the same spec, file bytes, and seed always produce the same dataset,
//! split, or draw.

mod fetch;
mod loader;
mod synthetic;

pub use fetch::fetch_dataset;
pub use loader::{load_csv, LoadReport};
pub use synthetic::generate_synthetic;

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Where a dataset's bytes come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic,
    LocalFile,
    RemoteUrl,
}

/// A column referenced either by header name or positional index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl std::fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "#{i}"),
            ColumnRef::Name(s) => write!(f, "{s}"),
        }
    }
}

/// Declarative description of one dataset in the experiment registry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub source: DatasetSource,
    /// Download URL (remote-url sources only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    /// SHA-256 hex digest of the file; mandatory for remote sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
    /// Path on disk (local-file sources only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<std::path::PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_column: Option<ColumnRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feature_columns: Vec<ColumnRef>,
    /// When set, the loaded row count must match exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_rows: Option<usize>,
    /// Synthetic sources: number of samples to generate.
    #[serde(default = "default_synthetic_count")]
    pub count: usize,
    /// Synthetic sources: feature dimension.
    #[serde(default = "default_synthetic_dim")]
    pub d: usize,
    /// Synthetic sources: generator seed.
    #[serde(default = "default_synthetic_seed")]
    pub gen_seed: u64,
}

fn default_synthetic_count() -> usize {
    5000
}

fn default_synthetic_dim() -> usize {
    8
}

fn default_synthetic_seed() -> u64 {
    7
}

impl DatasetSpec {
    /// A synthetic-source spec with the default generator settings.
    pub fn synthetic(name: &str) -> Self {
        DatasetSpec {
            name: name.to_string(),
            source: DatasetSource::Synthetic,
            url: None,
            checksum: None,
            path: None,
            target_column: None,
            feature_columns: Vec::new(),
            expected_rows: None,
            count: default_synthetic_count(),
            d: default_synthetic_dim(),
            gen_seed: default_synthetic_seed(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("dataset name must be non-empty".into()));
        }
        match self.source {
            DatasetSource::RemoteUrl => {
                if self.url.is_none() {
                    return Err(Error::Config(format!("dataset {}: remote-url source requires url", self.name)));
                }
                if self.checksum.is_none() {
                    return Err(Error::Config(format!(
                        "dataset {}: remote-url source requires a sha-256 checksum",
                        self.name
                    )));
                }
            }
            DatasetSource::LocalFile => {
                if self.path.is_none() {
                    return Err(Error::Config(format!("dataset {}: local-file source requires path", self.name)));
                }
            }
            DatasetSource::Synthetic => {
                if self.d < 6 {
                    return Err(Error::Config(format!(
                        "dataset {}: synthetic generator needs d >= 6, got {}",
                        self.name, self.d
                    )));
                }
            }
        }
        if self.source != DatasetSource::Synthetic {
            let target = self.target_column.as_ref().ok_or_else(|| {
                Error::Config(format!("dataset {}: target_column is required", self.name))
            })?;
            if self.feature_columns.is_empty() {
                return Err(Error::Config(format!(
                    "dataset {}: feature_columns must be non-empty",
                    self.name
                )));
            }
            if self.feature_columns.contains(target) {
                return Err(Error::Config(format!(
                    "dataset {}: target column {target} also listed as a feature",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// A loaded regression dataset: row-major feature matrix plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub name: String,
    /// Row-major, `rows x d`.
    features: Vec<f64>,
    targets: Vec<f64>,
    d: usize,
}

impl RegressionDataset {
    /// Build a dataset, enforcing shape and finiteness invariants.
    pub fn new(name: String, features: Vec<f64>, targets: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dataset(format!("{name}: feature count must be >= 1")));
        }
        if features.len() != targets.len() * d {
            return Err(Error::Dataset(format!(
                "{name}: feature matrix length {} does not match {} rows x {} features",
                features.len(),
                targets.len(),
                d
            )));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Dataset(format!("{name}: non-finite value in data")));
        }
        Ok(RegressionDataset {
            name,
            features,
            targets,
            d,
        })
    }

    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// Fixed pool/test partition of a dataset's row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub pool_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Uniform random pool/test split without replacement.
///
/// `|test| = round(frac * rows)`; both index lists come back sorted.
/// The test split is drawn once per dataset and reused for the whole
/// experiment.
pub fn split_test(dataset: &RegressionDataset, frac: f64, seed: u64) -> SplitResult {
    assert!((0.0..1.0).contains(&frac), "test fraction must be in [0, 1)");
    let rows = dataset.rows();
    let n_test = (frac * rows as f64).round() as usize;
    let mut order: Vec<usize> = (0..rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut test_indices: Vec<usize> = order[..n_test].to_vec();
    let mut pool_indices: Vec<usize> = order[n_test..].to_vec();
    test_indices.sort_unstable();
    pool_indices.sort_unstable();
    SplitResult {
        pool_indices,
        test_indices,
    }
}

/// Sample `n` indices uniformly without replacement from the pool.
pub fn draw_training_set(pool: &[usize], n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > pool.len() {
        return Err(Error::TrainingSizeExceedsPool {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch: Vec<usize> = pool.to_vec();
    // Partial Fisher-Yates: after i swaps, scratch[..i] is the sample.
    for i in 0..n {
        let j = rand::Rng::gen_range(&mut rng, i..scratch.len());
        scratch.swap(i, j);
    }
    scratch.truncate(n);
    Ok(scratch)
}

/// Per-draw feature and target standardization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

/// Degenerate-column guard: stds at or below this are replaced by 1.
const STD_FLOOR: f64 = 1e-12;

/// Fit standardization constants on the sampled training rows only.
///
/// Population (1/n) denominator for the std. Constant columns get std 1 so
/// the transform stays invertible.
pub fn fit_standardization(dataset: &RegressionDataset, train_indices: &[usize]) -> Standardization {
    assert!(train_indices.len() >= 2, "standardization needs >= 2 rows");
    let d = dataset.dim();
    let n = train_indices.len() as f64;

    let mut feature_means = vec![0.0; d];
    for &i in train_indices {
        for (m, &x) in feature_means.iter_mut().zip(dataset.row(i)) {
            *m += x;
        }
    }
    for m in &mut feature_means {
        *m /= n;
    }

    let mut feature_stds = vec![0.0; d];
    for &i in train_indices {
        for ((s, &m), &x) in feature_stds.iter_mut().zip(&feature_means).zip(dataset.row(i)) {
            let c = x - m;
            *s += c * c;
        }
    }
    for s in &mut feature_stds {
        *s = (*s / n).sqrt();
        if *s <= STD_FLOOR {
            *s = 1.0;
        }
    }

    let target_mean = train_indices.iter().map(|&i| dataset.target(i)).sum::<f64>() / n;
    let target_var = train_indices
        .iter()
        .map(|&i| {
            let c = dataset.target(i) - target_mean;
            c * c
        })
        .sum::<f64>()
        / n;
    let mut target_std = target_var.sqrt();
    if target_std <= STD_FLOOR {
        target_std = 1.0;
    }

    Standardization {
        feature_means,
        feature_stds,
        target_mean,
        target_std,
    }
}

/// Apply standardization to every feature column and the target.
pub fn apply_standardization(dataset: &RegressionDataset, std: &Standardization) -> RegressionDataset {
    let d = dataset.dim();
    assert_eq!(std.feature_means.len(), d, "standardization dimension mismatch");
    let mut features = Vec::with_capacity(dataset.rows() * d);
    for i in 0..dataset.rows() {
        for ((&x, &m), &s) in dataset.row(i).iter().zip(&std.feature_means).zip(&std.feature_stds) {
            features.push((x - m) / s);
        }
    }
    let targets = dataset
        .targets()
        .iter()
        .map(|&y| (y - std.target_mean) / std.target_std)
        .collect();
    RegressionDataset {
        name: dataset.name.clone(),
        features,
        targets,
        d,
    }
}

/// Invert [`apply_standardization`].
pub fn invert_standardization(dataset: &RegressionDataset, std: &Standardization) -> RegressionDataset {
    let d = dataset.dim();
    let mut features = Vec::with_capacity(dataset.rows() * d);
    for i in 0..dataset.rows() {
        for ((&z, &m), &s) in dataset.row(i).iter().zip(&std.feature_means).zip(&std.feature_stds) {
            features.push(z * s + m);
        }
    }
    let targets = dataset
        .targets()
        .iter()
        .map(|&z| z * std.target_std + std.target_mean)
        .collect();
    RegressionDataset {
        name: dataset.name.clone(),
        features,
        targets,
        d,
    }
}

/// Gather selected rows into a compact (features, targets) pair for training.
pub fn gather_rows(dataset: &RegressionDataset, indices: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = dataset.dim();
    let mut features = Vec::with_capacity(indices.len() * d);
    let mut targets = Vec::with_capacity(indices.len());
    for &i in indices {
        features.extend_from_slice(dataset.row(i));
        targets.push(dataset.target(i));
    }
    (features, targets)
}
