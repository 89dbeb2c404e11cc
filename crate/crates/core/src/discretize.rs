//! Quantile binning of training features and interval labels such as
//! `308.00 < WT <= 327.00`.
//!
//! Bins are lower-exclusive and upper-inclusive. With edges `e_0 < … < e_{k-2}`
//! bin 0 is `v <= e_0`, bin `i` is `e_{i-1} < v <= e_i`, and the last bin is
//! `v > e_{k-2}`. Label grammar (numbers fixed-point with 2 decimals):
//!
//! ```text
//! <lo> < <NAME> <= <hi>  |  <NAME> <= <hi>  |  <NAME> > <lo>
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BINS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error("need at least {n_bins} values for {n_bins} bins, got {n}")]
    TooFewValues { n: usize, n_bins: usize },
    #[error("at least 2 bins required, got {0}")]
    InvalidBinCount(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite training value for {0}")]
    NonFinite(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("label {0:?} does not match the interval grammar")]
    BadLabel(String),
}

pub type Result<T, E = DiscretizeError> = std::result::Result<T, E>;

/// Quantile edges: `edge_k = sorted[ceil(k·n/n_bins) − 1]` for
/// `k = 1..n_bins−1`. Duplicate edges collapse, and edges equal to the
/// maximum are dropped since they would leave an empty top bin, so every
/// resulting bin holds at least one training value.
pub fn fit_quantile_bins(values: &[f64], n_bins: usize) -> Result<Vec<f64>> {
    if n_bins < 2 {
        return Err(DiscretizeError::InvalidBinCount(n_bins));
    }
    let n = values.len();
    if n < n_bins {
        return Err(DiscretizeError::TooFewValues { n, n_bins });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = sorted[n - 1];
    let mut edges: Vec<f64> = Vec::with_capacity(n_bins - 1);
    for k in 1..n_bins {
        let rank = (k * n).div_ceil(n_bins);
        let e = sorted[rank - 1];
        if e < max && edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    Ok(edges)
}

/// Smallest `i` with `value <= edges[i]`, else the last bin.
pub fn locate_bin(value: f64, edges: &[f64]) -> usize {
    edges.partition_point(|&e| e < value)
}

/// 1 where the sample falls in the instance's bin, else 0.
pub fn interpretable_encode(instance_bins: &[usize], sample_bins: &[usize]) -> Result<Vec<u8>> {
    if instance_bins.len() != sample_bins.len() {
        return Err(DiscretizeError::DimensionMismatch(
            instance_bins.len(),
            sample_bins.len(),
        ));
    }
    Ok(instance_bins
        .iter()
        .zip(sample_bins)
        .map(|(a, b)| u8::from(a == b))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub feature: String,
    pub edges: Vec<f64>,
    /// Training count per bin.
    pub frequencies: Vec<usize>,
    /// Observed training min/max per bin.
    pub ranges: Vec<BinRange>,
}

impl FeatureBins {
    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn locate(&self, value: f64) -> usize {
        locate_bin(value, &self.edges)
    }

    pub fn label(&self, bin: usize) -> BinLabel {
        let last = self.n_bins() - 1;
        let name = &self.feature;
        let text = if last == 0 {
            format!("{name} <= {:.2}", self.ranges[0].max)
        } else if bin == 0 {
            format!("{name} <= {:.2}", self.edges[0])
        } else if bin >= last {
            format!("{name} > {:.2}", self.edges[last - 1])
        } else {
            format!("{:.2} < {name} <= {:.2}", self.edges[bin - 1], self.edges[bin])
        };
        BinLabel {
            text,
            feature: name.clone(),
            bin_index: bin.min(last),
        }
    }
}

/// Per-feature quantile bins fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub n_bins: usize,
    pub n_train: usize,
    pub features: Vec<FeatureBins>,
}

impl Discretization {
    /// Fits bins column by column on row-major training rows.
    pub fn fit(feature_names: &[String], rows: &[Vec<f64>], n_bins: usize) -> Result<Self> {
        let mut features = Vec::with_capacity(feature_names.len());
        for (j, name) in feature_names.iter().enumerate() {
            let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            if column.iter().any(|v| !v.is_finite()) {
                return Err(DiscretizeError::NonFinite(name.clone()));
            }
            let edges = fit_quantile_bins(&column, n_bins)?;
            let k = edges.len() + 1;
            let mut frequencies = vec![0usize; k];
            let mut ranges = vec![
                BinRange {
                    min: f64::INFINITY,
                    max: f64::NEG_INFINITY,
                };
                k
            ];
            for &v in &column {
                let b = locate_bin(v, &edges);
                frequencies[b] += 1;
                ranges[b].min = ranges[b].min.min(v);
                ranges[b].max = ranges[b].max.max(v);
            }
            features.push(FeatureBins {
                feature: name.clone(),
                edges,
                frequencies,
                ranges,
            });
        }
        Ok(Self {
            n_bins,
            n_train: rows.len(),
            features,
        })
    }

    pub fn fit_dataset(d: &crate::data::Dataset, n_bins: usize) -> Result<Self> {
        Self::fit(&d.schema.feature_names, &d.design(), n_bins)
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.feature.clone()).collect()
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureBins> {
        self.features.iter().find(|f| f.feature == name)
    }

    pub fn locate_all(&self, values: &[f64]) -> Result<Vec<usize>> {
        if values.len() != self.features.len() {
            return Err(DiscretizeError::DimensionMismatch(
                self.features.len(),
                values.len(),
            ));
        }
        Ok(self
            .features
            .iter()
            .zip(values)
            .map(|(f, &v)| f.locate(v))
            .collect())
    }

    /// Inverse of label rendering: recovers (feature, bin) from label text.
    pub fn parse_label(&self, text: &str) -> Result<BinLabel> {
        let bad = || DiscretizeError::BadLabel(text.to_string());
        let (feature, bin_index) = if let Some((lo, rest)) = text.split_once(" < ") {
            let (name, hi) = rest.split_once(" <= ").ok_or_else(bad)?;
            let fb = self.feature_or_err(name)?;
            let bin = (1..fb.n_bins().saturating_sub(1))
                .find(|&i| {
                    format!("{:.2}", fb.edges[i - 1]) == lo && format!("{:.2}", fb.edges[i]) == hi
                })
                .ok_or_else(bad)?;
            (name, bin)
        } else if let Some((name, _hi)) = text.split_once(" <= ") {
            self.feature_or_err(name)?;
            (name, 0)
        } else if let Some((name, _lo)) = text.split_once(" > ") {
            let fb = self.feature_or_err(name)?;
            (name, fb.n_bins() - 1)
        } else {
            return Err(bad());
        };
        Ok(BinLabel {
            text: text.to_string(),
            feature: feature.to_string(),
            bin_index,
        })
    }

    fn feature_or_err(&self, name: &str) -> Result<&FeatureBins> {
        self.feature(name)
            .ok_or_else(|| DiscretizeError::UnknownFeature(name.to_string()))
    }
}

/// Rendered interval condition a contribution attaches to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinLabel {
    pub text: String,
    pub feature: String,
    pub bin_index: usize,
}
