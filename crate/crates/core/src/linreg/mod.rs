//! Multivariate linear regression with per-sample weights and ridge
//! stabilization.
//!
//! Fitting solves the weighted ridge normal equations
//! `(Xᵀ W X + λ I') β = Xᵀ W y`, where `X` carries a leading intercept column
//! and `I'` is the identity with a zero in the intercept slot, so the
//! intercept is never shrunk. When standardization is enabled the features
//! are centred and scaled (sample standard deviation) before solving and
//! coefficients are reported in both standardized and original units.
//! Constant columns are dropped from the solve and reported with
//! coefficient 0.

mod solve;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, StandardizationStats};

pub use solve::{solve_symmetric, Singular, SquareMatrix, SINGULAR_TOLERANCE};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinregError {
    #[error("singular weighted Gram matrix (pivot breakdown at {})", .feature.as_deref().unwrap_or("intercept"))]
    SingularMatrix {
        /// Feature whose column was linearly dependent on earlier ones, when
        /// the breakdown happened on a feature column.
        feature: Option<String>,
    },
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("schema mismatch: missing {missing:?}, unexpected {extra:?}")]
    SchemaMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("R² undefined: targets are constant but residuals are not zero")]
    ScoreUndefined,
}

pub type Result<T, E = LinregError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Ridge penalty; the intercept is never penalized.
    pub lambda: f64,
    /// Standardize features before solving.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            standardize: true,
        }
    }
}

impl FitOptions {
    pub fn ridge(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    /// Ridge on raw features (no centring or scaling).
    pub fn raw(lambda: f64) -> Self {
        Self {
            lambda,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub feature: String,
    /// Original feature units.
    pub value: f64,
    /// Per standard deviation of the feature (equals `value` when the model
    /// was fitted without standardization).
    pub standardized: f64,
    /// Constant in the training data; excluded from the solve.
    pub dropped: bool,
}

/// A trained linear model. Immutable once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub coefficients: Vec<Coefficient>,
    /// Intercept in original units.
    pub intercept: f64,
    /// Intercept of the standardized-space model.
    pub standardized_intercept: f64,
    pub lambda: f64,
    pub standardized: bool,
    pub standardization: StandardizationStats,
    pub train_metrics: RegressionMetrics,
    /// Min/max of the model's own predictions over its training rows.
    pub prediction_range: PredictionRange,
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(LinregError::NonFiniteInput(format!("{what}[{i}]"))),
        None => Ok(()),
    }
}

/// Fits a model on a row-major design matrix. `weights = None` means uniform.
pub fn fit(
    feature_names: &[String],
    target_name: &str,
    design: &[Vec<f64>],
    targets: &[f64],
    weights: Option<&[f64]>,
    options: FitOptions,
) -> Result<LinearModel> {
    let n = design.len();
    let d = feature_names.len();
    if n == 0 {
        return Err(LinregError::InvalidInput("no samples".into()));
    }
    if d == 0 {
        return Err(LinregError::InvalidInput("no features".into()));
    }
    if targets.len() != n {
        return Err(LinregError::InvalidInput(format!(
            "{} targets for {n} rows",
            targets.len()
        )));
    }
    for (i, row) in design.iter().enumerate() {
        if row.len() != d {
            return Err(LinregError::InvalidInput(format!(
                "row {i} has {} values, expected {d}",
                row.len()
            )));
        }
        check_finite(&format!("design row {i}"), row)?;
    }
    check_finite("targets", targets)?;
    if !options.lambda.is_finite() || options.lambda < 0.0 {
        return Err(LinregError::InvalidInput(format!(
            "lambda must be finite and >= 0, got {}",
            options.lambda
        )));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(LinregError::InvalidInput(format!("{} weights for {n} rows", w.len())));
        }
        check_finite("weights", w)?;
        if w.iter().any(|&x| x < 0.0) || !w.iter().any(|&x| x > 0.0) {
            return Err(LinregError::InvalidInput(
                "weights must be >= 0 with at least one positive".into(),
            ));
        }
    }

    let fitted = StandardizationStats::fit_rows(design);
    let stats = if options.standardize {
        fitted.clone()
    } else {
        StandardizationStats {
            constant: fitted.constant.clone(),
            ..StandardizationStats::identity(d)
        }
    };
    let active: Vec<usize> = (0..d).filter(|&j| !stats.constant[j]).collect();
    if active.is_empty() && options.lambda == 0.0 {
        return Err(LinregError::SingularMatrix {
            feature: feature_names.first().cloned(),
        });
    }

    let p = active.len() + 1;
    let mut gram = SquareMatrix::zeros(p);
    let mut rhs = vec![0.0; p];
    let mut row = vec![0.0; p];
    for (i, x) in design.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        row[0] = 1.0;
        for (k, &j) in active.iter().enumerate() {
            row[k + 1] = (x[j] - stats.mean[j]) / stats.stddev[j];
        }
        for a in 0..p {
            let wa = w * row[a];
            rhs[a] += wa * targets[i];
            for b in a..p {
                gram.add(a, b, wa * row[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram.set(a, b, gram.get(b, a));
        }
        if a > 0 {
            gram.add(a, a, options.lambda);
        }
    }

    let beta = solve_symmetric(&gram, &rhs).map_err(|s| LinregError::SingularMatrix {
        feature: s
            .column
            .checked_sub(1)
            .map(|k| feature_names[active[k]].clone()),
    })?;

    let mut standardized = vec![0.0; d];
    for (k, &j) in active.iter().enumerate() {
        standardized[j] = beta[k + 1];
    }
    let standardized_intercept = beta[0];
    let mut intercept = standardized_intercept;
    let coefficients: Vec<Coefficient> = (0..d)
        .map(|j| {
            let value = standardized[j] / stats.stddev[j];
            intercept -= value * stats.mean[j];
            Coefficient {
                feature: feature_names[j].clone(),
                value,
                standardized: standardized[j],
                dropped: stats.constant[j],
            }
        })
        .collect();

    let mut model = LinearModel {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: feature_names.to_vec(),
        target_name: target_name.to_string(),
        coefficients,
        intercept,
        standardized_intercept,
        lambda: options.lambda,
        standardized: options.standardize,
        standardization: stats,
        train_metrics: RegressionMetrics {
            rmse: 0.0,
            mae: 0.0,
            r2: 0.0,
        },
        prediction_range: PredictionRange { min: 0.0, max: 0.0 },
    };
    let predictions: Vec<f64> = design.iter().map(|x| model.predict_unchecked(x)).collect();
    model.prediction_range = PredictionRange {
        min: predictions.iter().copied().fold(f64::INFINITY, f64::min),
        max: predictions.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    // Constant targets with numerically non-zero residuals leave R² undefined;
    // training metrics report 0 in that case.
    model.train_metrics = metrics(&predictions, targets).unwrap_or_else(|_| {
        let (rmse, mae) = rmse_mae(&predictions, targets);
        RegressionMetrics { rmse, mae, r2: 0.0 }
    });
    Ok(model)
}

/// Fits on every record of a dataset with uniform weights.
pub fn fit_dataset(d: &Dataset, options: FitOptions) -> Result<LinearModel> {
    fit(
        &d.schema.feature_names,
        &d.schema.target_name,
        &d.design(),
        &d.targets(),
        None,
        options,
    )
}

impl LinearModel {
    /// Builds a model directly from original-unit coefficients, with no
    /// standardization.
    pub fn from_parts(
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        coefficients: &[f64],
        intercept: f64,
    ) -> Self {
        let d = feature_names.len();
        assert_eq!(d, coefficients.len(), "one coefficient per feature");
        Self {
            format_version: MODEL_FORMAT_VERSION,
            coefficients: feature_names
                .iter()
                .zip(coefficients)
                .map(|(f, &c)| Coefficient {
                    feature: f.clone(),
                    value: c,
                    standardized: c,
                    dropped: false,
                })
                .collect(),
            feature_names,
            target_name: target_name.into(),
            intercept,
            standardized_intercept: intercept,
            lambda: 0.0,
            standardized: false,
            standardization: StandardizationStats::identity(d),
            train_metrics: RegressionMetrics {
                rmse: 0.0,
                mae: 0.0,
                r2: 1.0,
            },
            prediction_range: PredictionRange {
                min: intercept,
                max: intercept,
            },
        }
    }

    pub fn with_prediction_range(mut self, min: f64, max: f64) -> Self {
        self.prediction_range = PredictionRange { min, max };
        self
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn coefficient(&self, feature: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.feature == feature)
    }

    fn predict_unchecked(&self, values: &[f64]) -> f64 {
        let stats = &self.standardization;
        self.standardized_intercept
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(j, c)| c.standardized * (values[j] - stats.mean[j]) / stats.stddev[j])
                .sum::<f64>()
    }

    /// Prediction for a feature vector in schema order.
    pub fn predict(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.n_features() {
            return Err(LinregError::InvalidInput(format!(
                "{} values for {} features",
                values.len(),
                self.n_features()
            )));
        }
        check_finite("features", values)?;
        Ok(self.predict_unchecked(values))
    }

    /// Prediction for a named instance; every schema feature must be present
    /// and no other key may appear.
    pub fn predict_map(&self, values: &BTreeMap<String, f64>) -> Result<f64> {
        let v = self.vector_from_map(values)?;
        self.predict(&v)
    }

    pub fn vector_from_map(&self, values: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let missing: Vec<String> = self
            .feature_names
            .iter()
            .filter(|n| !values.contains_key(n.as_str()))
            .cloned()
            .collect();
        let extra: Vec<String> = values
            .keys()
            .filter(|k| !self.feature_names.iter().any(|n| n == *k))
            .cloned()
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(LinregError::SchemaMismatch { missing, extra });
        }
        Ok(self.feature_names.iter().map(|n| values[n.as_str()]).collect())
    }

    pub fn evaluate(&self, d: &Dataset) -> Result<RegressionMetrics> {
        if d.schema.feature_names != self.feature_names {
            let missing = self
                .feature_names
                .iter()
                .filter(|n| d.schema.index_of(n).is_none())
                .cloned()
                .collect();
            let extra = d
                .schema
                .feature_names
                .iter()
                .filter(|n| !self.feature_names.contains(n))
                .cloned()
                .collect();
            return Err(LinregError::SchemaMismatch { missing, extra });
        }
        let predictions: Vec<f64> = d
            .records
            .iter()
            .map(|r| self.predict_unchecked(&r.values))
            .collect();
        metrics(&predictions, &d.targets())
    }
}

fn rmse_mae(predictions: &[f64], targets: &[f64]) -> (f64, f64) {
    let n = targets.len() as f64;
    let (sq, abs) = predictions
        .iter()
        .zip(targets)
        .fold((0.0, 0.0), |(sq, abs), (p, y)| {
            let r = y - p;
            (sq + r * r, abs + r.abs())
        });
    ((sq / n).sqrt(), abs / n)
}

/// RMSE, MAE and R² (against the targets' own mean). R² is 1 when both the
/// target variance and the residuals vanish, and undefined when only the
/// target variance does.
pub fn metrics(predictions: &[f64], targets: &[f64]) -> Result<RegressionMetrics> {
    if targets.is_empty() || predictions.len() != targets.len() {
        return Err(LinregError::InvalidInput(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let (rmse, mae) = rmse_mae(predictions, targets);
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = predictions.iter().zip(targets).map(|(p, y)| (y - p).powi(2)).sum();
    let r2 = r2_from_sums(ss_res, ss_tot, targets)?;
    Ok(RegressionMetrics { rmse, mae, r2 })
}

fn r2_from_sums(ss_res: f64, ss_tot: f64, targets: &[f64]) -> Result<f64> {
    let scale = targets.iter().map(|y| y * y).sum::<f64>().max(1.0);
    let zero = 1e-24 * scale;
    if ss_tot <= zero {
        return if ss_res <= zero {
            Ok(1.0)
        } else {
            Err(LinregError::ScoreUndefined)
        };
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Weighted R² with the weighted target mean as baseline.
pub fn weighted_r2(predictions: &[f64], targets: &[f64], weights: &[f64]) -> Result<f64> {
    let sw: f64 = weights.iter().sum();
    if sw <= 0.0 {
        return Err(LinregError::InvalidInput("weights sum to zero".into()));
    }
    let mean = weights.iter().zip(targets).map(|(w, y)| w * y).sum::<f64>() / sw;
    let ss_tot: f64 = weights
        .iter()
        .zip(targets)
        .map(|(w, y)| w * (y - mean).powi(2))
        .sum();
    let ss_res: f64 = weights
        .iter()
        .zip(predictions.iter().zip(targets))
        .map(|(w, (p, y))| w * (y - p).powi(2))
        .sum();
    r2_from_sums(ss_res, ss_tot, targets)
}
