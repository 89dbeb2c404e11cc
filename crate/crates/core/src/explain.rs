//! Local surrogate explanations of single price predictions.
//!
//! The instance is perturbed by resampling every feature from the training
//! bin distribution, each perturbation is encoded as a binary vector (1 where
//! it shares the instance's bin), samples are weighted by an exponential
//! kernel on their distance to the all-ones vector, and a weighted ridge
//! surrogate over the K most informative binary columns yields one signed
//! contribution per selected bin label.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{interpretable_encode, BinLabel, Discretization, DEFAULT_BINS};
use crate::linreg::{self, FitOptions, LinearModel, LinregError};

pub const DEFAULT_NUM_SAMPLES: usize = 5000;
pub const DEFAULT_NUM_FEATURES: usize = 6;
/// Ridge penalty of the surrogate, applied to raw binary columns.
pub const SURROGATE_LAMBDA: f64 = 1.0;
/// Seed used when a caller does not supply one.
pub const DEFAULT_SEED: u64 = 20210101;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("invalid explainer config: {0}")]
    InvalidConfig(String),
    #[error("schema mismatch: missing {missing:?}, unexpected {extra:?}")]
    SchemaMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error(transparent)]
    Fit(#[from] LinregError),
}

pub type Result<T, E = ExplainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub num_samples: usize,
    /// Number of contributions to report (K).
    pub num_features: usize,
    /// Kernel width; `None` means `0.75 · √d`.
    pub kernel_width: Option<f64>,
    pub seed: u64,
    pub n_bins: usize,
    pub surrogate_lambda: f64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            num_samples: DEFAULT_NUM_SAMPLES,
            num_features: DEFAULT_NUM_FEATURES,
            kernel_width: None,
            seed: DEFAULT_SEED,
            n_bins: DEFAULT_BINS,
            surrogate_lambda: SURROGATE_LAMBDA,
        }
    }
}

impl ExplainerConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn kernel_width_for(&self, d: usize) -> f64 {
        self.kernel_width.unwrap_or(0.75 * (d as f64).sqrt())
    }

    /// K clamped to the feature count.
    pub fn effective_features(&self, d: usize) -> usize {
        self.num_features.min(d)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.num_samples < 10 {
            return Err(ExplainError::InvalidConfig(format!(
                "num_samples must be >= 10, got {}",
                self.num_samples
            )));
        }
        if self.num_features == 0 || d == 0 {
            return Err(ExplainError::InvalidConfig("num_features must be >= 1".into()));
        }
        let w = self.kernel_width_for(d);
        if !(w > 0.0 && w.is_finite()) {
            return Err(ExplainError::InvalidConfig(format!("kernel width {w}")));
        }
        if !(self.surrogate_lambda >= 0.0 && self.surrogate_lambda.is_finite()) {
            return Err(ExplainError::InvalidConfig(format!(
                "surrogate lambda {}",
                self.surrogate_lambda
            )));
        }
        Ok(())
    }
}

/// Perturbed neighbourhood of one instance. Row 0 is the instance itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbations {
    pub raw: Vec<Vec<f64>>,
    pub binary: Vec<Vec<u8>>,
    pub distances: Vec<f64>,
}

/// Draws `cfg.num_samples` rows: per feature a bin with probability
/// proportional to its training frequency, then a value uniformly within the
/// bin's observed training range.
pub fn sample_perturbations(
    disc: &Discretization,
    instance: &[f64],
    cfg: &ExplainerConfig,
) -> Result<Perturbations> {
    let d = disc.n_features();
    let instance_bins = disc
        .locate_all(instance)
        .map_err(|e| ExplainError::InvalidConfig(e.to_string()))?;
    let samplers: Vec<WeightedIndex<usize>> = disc
        .features
        .iter()
        .map(|f| WeightedIndex::new(&f.frequencies).expect("bins hold at least one training value"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n = cfg.num_samples;
    let mut raw = Vec::with_capacity(n);
    let mut binary = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    raw.push(instance.to_vec());
    binary.push(vec![1u8; d]);
    distances.push(0.0);
    let mut bins = vec![0usize; d];
    for _ in 1..n {
        let mut row = Vec::with_capacity(d);
        for (j, fb) in disc.features.iter().enumerate() {
            let b = samplers[j].sample(&mut rng);
            let r = fb.ranges[b];
            let v = if r.max > r.min {
                rng.random_range(r.min..=r.max)
            } else {
                r.min
            };
            bins[j] = b;
            row.push(v);
        }
        let z = interpretable_encode(&instance_bins, &bins).expect("same dimension");
        let zeros = z.iter().filter(|&&b| b == 0).count();
        distances.push((zeros as f64).sqrt());
        raw.push(row);
        binary.push(z);
    }
    Ok(Perturbations {
        raw,
        binary,
        distances,
    })
}

/// Exponential kernel `exp(−distance² / width²)`.
pub fn kernel_weight(distance: f64, kernel_width: f64) -> f64 {
    (-(distance * distance) / (kernel_width * kernel_width)).exp()
}

fn column_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("z{j}")).collect()
}

fn subset_rows(binary: &[Vec<f64>], cols: &[usize]) -> Vec<Vec<f64>> {
    binary
        .iter()
        .map(|r| cols.iter().map(|&j| r[j]).collect())
        .collect()
}

fn fit_surrogate(
    binary: &[Vec<f64>],
    cols: &[usize],
    targets: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<(LinearModel, f64)> {
    let rows = subset_rows(binary, cols);
    let model = linreg::fit(
        &column_names(cols.len()),
        "surrogate",
        &rows,
        targets,
        Some(weights),
        FitOptions::raw(lambda),
    )?;
    let predictions: Vec<f64> = rows
        .iter()
        .map(|r| model.predict(r).expect("row width matches"))
        .collect();
    let r2 = linreg::weighted_r2(&predictions, targets, weights)?;
    Ok((model, r2))
}

/// Greedy forward selection: repeatedly adds the column that most increases
/// the weighted R² of the ridge surrogate. Ties go to the lowest index.
pub fn select_features(
    binary: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    k: usize,
    lambda: f64,
) -> Result<Vec<usize>> {
    let d = binary.first().map_or(0, Vec::len);
    let k = k.min(d);
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    while selected.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..d).filter(|j| !selected.contains(j)) {
            let mut cols = selected.clone();
            cols.push(j);
            let (_, r2) = fit_surrogate(binary, &cols, targets, weights, lambda)?;
            if best.is_none_or(|(_, b)| r2 > b) {
                best = Some((j, r2));
            }
        }
        selected.push(best.expect("candidates remain while fewer than d are selected").0);
    }
    Ok(selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub label: BinLabel,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub predicted_value: f64,
    /// Min/max of the model's predictions over its training set.
    pub local_range: LocalRange,
    /// Sorted by |weight| descending.
    pub contributions: Vec<Contribution>,
    pub instance_values: BTreeMap<String, f64>,
    pub surrogate_intercept: f64,
    /// Weighted R² of the surrogate on its own perturbation set.
    pub surrogate_r2: f64,
    /// Surrogate prediction at the instance (the all-ones binary vector).
    pub local_prediction: f64,
    pub seed: u64,
    /// The predicted value lies outside `local_range`.
    pub out_of_range: bool,
    /// Every sampled prediction was identical; contributions are all zero.
    pub degenerate: bool,
}

fn check_schema(model: &LinearModel, disc: &Discretization) -> Result<()> {
    let disc_names = disc.feature_names();
    if disc_names != model.feature_names {
        return Err(ExplainError::SchemaMismatch {
            missing: model
                .feature_names
                .iter()
                .filter(|n| !disc_names.contains(n))
                .cloned()
                .collect(),
            extra: disc_names
                .iter()
                .filter(|n| !model.feature_names.contains(n))
                .cloned()
                .collect(),
        });
    }
    Ok(())
}

/// Explains `model`'s prediction for `instance` (schema order).
pub fn explain(
    model: &LinearModel,
    disc: &Discretization,
    instance: &[f64],
    cfg: &ExplainerConfig,
) -> Result<Explanation> {
    check_schema(model, disc)?;
    let d = model.n_features();
    cfg.validate(d)?;
    if instance.len() != d {
        return Err(ExplainError::Fit(LinregError::InvalidInput(format!(
            "{} values for {d} features",
            instance.len()
        ))));
    }
    let predicted_value = model.predict(instance)?;
    let instance_bins = disc
        .locate_all(instance)
        .map_err(|e| ExplainError::InvalidConfig(e.to_string()))?;

    let samples = sample_perturbations(disc, instance, cfg)?;
    let targets: Vec<f64> = samples
        .raw
        .iter()
        .map(|r| model.predict(r))
        .collect::<std::result::Result<_, _>>()?;
    let width = cfg.kernel_width_for(d);
    let weights: Vec<f64> = samples
        .distances
        .iter()
        .map(|&dist| kernel_weight(dist, width))
        .collect();
    let binary: Vec<Vec<f64>> = samples
        .binary
        .iter()
        .map(|r| r.iter().map(|&b| f64::from(b)).collect())
        .collect();
    let k = cfg.effective_features(d);

    let degenerate = targets.iter().all(|&t| t == targets[0]);
    let (selected, coefs, surrogate_intercept, surrogate_r2, local_prediction) = if degenerate {
        let c = targets[0];
        ((0..k).collect::<Vec<_>>(), vec![0.0; k], c, 1.0, c)
    } else {
        let selected = select_features(&binary, &targets, &weights, k, cfg.surrogate_lambda)?;
        let (surrogate, r2) = fit_surrogate(&binary, &selected, &targets, &weights, cfg.surrogate_lambda)?;
        let coefs: Vec<f64> = surrogate.coefficients.iter().map(|c| c.value).collect();
        let local = surrogate.predict(&vec![1.0; selected.len()])?;
        (selected, coefs, surrogate.intercept, r2.clamp(0.0, 1.0), local)
    };

    let mut order: Vec<usize> = (0..selected.len()).collect();
    order.sort_by(|&a, &b| {
        coefs[b]
            .abs()
            .total_cmp(&coefs[a].abs())
            .then(selected[a].cmp(&selected[b]))
    });
    let contributions = order
        .into_iter()
        .map(|i| {
            let j = selected[i];
            let fb = &disc.features[j];
            Contribution {
                feature: fb.feature.clone(),
                label: fb.label(instance_bins[j]),
                weight: coefs[i],
            }
        })
        .collect();

    let range = model.prediction_range;
    Ok(Explanation {
        predicted_value,
        local_range: LocalRange {
            min: range.min,
            max: range.max,
        },
        contributions,
        instance_values: model
            .feature_names
            .iter()
            .cloned()
            .zip(instance.iter().copied())
            .collect(),
        surrogate_intercept,
        surrogate_r2,
        local_prediction,
        seed: cfg.seed,
        out_of_range: predicted_value < range.min || predicted_value > range.max,
        degenerate,
    })
}

/// Named-instance variant of [`explain`].
pub fn explain_map(
    model: &LinearModel,
    disc: &Discretization,
    instance: &BTreeMap<String, f64>,
    cfg: &ExplainerConfig,
) -> Result<Explanation> {
    let values = model.vector_from_map(instance).map_err(|e| match e {
        LinregError::SchemaMismatch { missing, extra } => ExplainError::SchemaMismatch { missing, extra },
        other => ExplainError::Fit(other),
    })?;
    explain(model, disc, &values, cfg)
}

/// Plain-text three-section rendering: `range`, `contributions`, `values`.
///
/// ```text
/// range
///   min: 240.07
///   max: 1487.18
///   predicted: 901.55
/// contributions
///   308.00 < WT <= 327.00   -112.40
///   210.50 < PPK <= 214.10   +87.10
/// values
///   WT    327.00
///   PPK   214.10
/// ```
///
/// The values section lists the explained features in contribution order.
pub fn render_text(e: &Explanation) -> String {
    let mut out = String::new();
    out.push_str("range\n");
    let _ = writeln!(out, "  min: {:.2}", e.local_range.min);
    let _ = writeln!(out, "  max: {:.2}", e.local_range.max);
    let _ = writeln!(out, "  predicted: {:.2}", e.predicted_value);
    if e.out_of_range {
        out.push_str("  note: predicted value lies outside the training range\n");
    }

    out.push_str("contributions\n");
    if e.degenerate {
        out.push_str("  note: no local effect\n");
    }
    let label_width = e
        .contributions
        .iter()
        .map(|c| c.label.text.len())
        .max()
        .unwrap_or(0);
    let weights: Vec<String> = e
        .contributions
        .iter()
        .map(|c| format!("{:+.2}", c.weight))
        .collect();
    let weight_width = weights.iter().map(String::len).max().unwrap_or(0);
    for (c, w) in e.contributions.iter().zip(&weights) {
        let _ = writeln!(out, "  {:<label_width$}  {:>weight_width$}", c.label.text, w);
    }

    out.push_str("values\n");
    let name_width = e
        .contributions
        .iter()
        .map(|c| c.feature.len())
        .max()
        .unwrap_or(0);
    for c in &e.contributions {
        if let Some(v) = e.instance_values.get(&c.feature) {
            let _ = writeln!(out, "  {:<name_width$}  {:.2}", c.feature, v);
        }
    }
    out
}
