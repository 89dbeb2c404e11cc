//! Weight-band classification by regress-then-bin: a linear regressor
//! predicts weight in kilograms from image-derived features and the
//! prediction is mapped to a contiguous band such as `201-400`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linreg::{self, FitOptions, LinearModel, LinregError};

#[derive(Debug, Error)]
pub enum BandError {
    #[error("invalid band scheme: {0}")]
    InvalidScheme(String),
    #[error("need at least {needed} samples, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid sample at row {row}: {message}")]
    InvalidSample { row: usize, message: String },
    #[error(transparent)]
    Fit(#[from] LinregError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = BandError> = std::result::Result<T, E>;

/// Contiguous bands of equal width starting at 0: `[0, w]`, `(w, 2w]`, ….
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandScheme {
    pub width_kg: f64,
    pub num_classes: usize,
}

pub fn make_bands(width_kg: f64, num_classes: usize) -> Result<BandScheme> {
    if !(width_kg > 0.0 && width_kg.is_finite()) {
        return Err(BandError::InvalidScheme(format!("width must be positive, got {width_kg}")));
    }
    if num_classes < 2 {
        return Err(BandError::InvalidScheme(format!(
            "at least 2 classes required, got {num_classes}"
        )));
    }
    Ok(BandScheme {
        width_kg,
        num_classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandAssignment {
    pub class: usize,
    /// The weight exceeded the top band and was clamped into it.
    pub overflow: bool,
}

impl BandScheme {
    /// `"0-200"`, `"201-400"`, … with integer endpoints.
    pub fn labels(&self) -> Vec<String> {
        (0..self.num_classes).map(|k| self.label(k)).collect()
    }

    pub fn label(&self, class: usize) -> String {
        let lo = (class as f64 * self.width_kg).round() as i64;
        let hi = ((class + 1) as f64 * self.width_kg).round() as i64;
        if class == 0 {
            format!("0-{hi}")
        } else {
            format!("{}-{hi}", lo + 1)
        }
    }

    pub fn upper_kg(&self) -> f64 {
        self.width_kg * self.num_classes as f64
    }

    /// `ceil(weight / width) − 1`, clamped into `[0, num_classes − 1]`.
    pub fn assign(&self, weight_kg: f64) -> BandAssignment {
        let raw = (weight_kg / self.width_kg).ceil() - 1.0;
        let top = (self.num_classes - 1) as f64;
        let overflow = raw > top;
        let class = if raw.is_nan() { 0.0 } else { raw.clamp(0.0, top) };
        BandAssignment {
            class: class as usize,
            overflow,
        }
    }
}

pub fn assign_band(weight_kg: f64, scheme: &BandScheme) -> usize {
    scheme.assign(weight_kg).class
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pov {
    Side,
    Front,
    Back,
    Cross,
}

impl Pov {
    pub const ALL: [Pov; 4] = [Pov::Side, Pov::Front, Pov::Back, Pov::Cross];

    pub fn as_str(self) -> &'static str {
        match self {
            Pov::Side => "side",
            Pov::Front => "front",
            Pov::Back => "back",
            Pov::Cross => "cross",
        }
    }
}

impl fmt::Display for Pov {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pov {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pov::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown point of view {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub true_weight_kg: f64,
    pub pov: Pov,
}

fn feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

/// Fits a weight regressor (λ = 0, standardized) on the samples' features.
pub fn train_band_model(train: &[LabeledSample]) -> Result<LinearModel> {
    let d = train.first().map_or(0, |s| s.features.len());
    if d == 0 || train.len() < d + 1 {
        return Err(BandError::TooFewSamples {
            needed: d.max(1) + 1,
            actual: train.len(),
        });
    }
    let design: Vec<Vec<f64>> = train.iter().map(|s| s.features.clone()).collect();
    let targets: Vec<f64> = train.iter().map(|s| s.true_weight_kg).collect();
    Ok(linreg::fit(
        &feature_names(d),
        "true_weight_kg",
        &design,
        &targets,
        None,
        FitOptions::default(),
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEvalReport {
    pub scheme: BandScheme,
    pub labels: Vec<String>,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_pov_accuracy: BTreeMap<Pov, f64>,
    pub per_pov_count: BTreeMap<Pov, usize>,
    /// Predictions clamped into the top band.
    pub overflow: usize,
}

pub fn evaluate_bands(
    model: &LinearModel,
    test: &[LabeledSample],
    scheme: &BandScheme,
) -> Result<BandEvalReport> {
    if test.is_empty() {
        return Err(BandError::EmptyTestSet);
    }
    let k = scheme.num_classes;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut pov_hits: BTreeMap<Pov, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    let mut overflow = 0;
    for s in test {
        let predicted = model.predict(&s.features)?;
        let truth = scheme.assign(s.true_weight_kg).class;
        let assigned = scheme.assign(predicted);
        overflow += usize::from(assigned.overflow);
        confusion[truth][assigned.class] += 1;
        let hit = truth == assigned.class;
        correct += usize::from(hit);
        let entry = pov_hits.entry(s.pov).or_default();
        entry.0 += usize::from(hit);
        entry.1 += 1;
    }
    Ok(BandEvalReport {
        scheme: *scheme,
        labels: scheme.labels(),
        total: test.len(),
        correct,
        accuracy: correct as f64 / test.len() as f64,
        confusion,
        per_pov_accuracy: pov_hits
            .iter()
            .map(|(p, (h, n))| (*p, *h as f64 / *n as f64))
            .collect(),
        per_pov_count: pov_hits.iter().map(|(p, (_, n))| (*p, *n)).collect(),
        overflow,
    })
}

impl BandEvalReport {
    pub fn render_table(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "bands: {} x {} kg   accuracy: {:.4} ({}/{})   overflow: {}",
            self.scheme.num_classes, self.scheme.width_kg, self.accuracy, self.correct, self.total, self.overflow
        );
        let w = self.labels.iter().map(String::len).max().unwrap_or(0).max(10);
        let _ = write!(out, "{:<w$}", "true\\pred");
        for l in &self.labels {
            let _ = write!(out, " {l:>w$}");
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.confusion) {
            let _ = write!(out, "{label:<w$}");
            for c in row {
                let _ = write!(out, " {c:>w$}");
            }
            out.push('\n');
        }
        for (pov, acc) in &self.per_pov_accuracy {
            let _ = writeln!(out, "pov {pov:<6} accuracy {acc:.4} (n={})", self.per_pov_count[pov]);
        }
        out
    }
}

/// Parameters of the synthetic image-feature generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDataConfig {
    pub n: usize,
    pub seed: u64,
    pub povs: Vec<Pov>,
    /// Noise on the weight signal for side views.
    pub side_noise_kg: f64,
    /// Noise on the weight signal for other views.
    pub other_noise_kg: f64,
    /// Extra pure-noise feature columns.
    pub noise_dims: usize,
    pub min_weight_kg: f64,
    pub max_weight_kg: f64,
}

impl Default for BandDataConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            seed: 1,
            povs: vec![Pov::Side],
            side_noise_kg: 5.0,
            other_noise_kg: 5.0,
            noise_dims: 2,
            min_weight_kg: 20.0,
            max_weight_kg: 800.0,
        }
    }
}

impl BandDataConfig {
    /// Mixed views where only side views carry a usable weight signal.
    pub fn multi_view(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            povs: Pov::ALL.to_vec(),
            other_noise_kg: 250.0,
            ..Self::default()
        }
    }
}

/// Synthetic stand-in for image-derived features. Columns:
///
/// - `f0`: side-view size estimate (true weight plus side noise), 0 for other views
/// - `f1`: the same estimate from any other view, 0 for side views
/// - `f2`: 1 for side views
/// - `noise_dims` columns of unit noise
///
/// Splitting the estimate by view lets one linear regressor fit a separate
/// slope per view instead of averaging good and bad views together. Views
/// cycle through `povs`.
pub fn gen_band_samples(cfg: &BandDataConfig) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let side = Normal::new(0.0, cfg.side_noise_kg).expect("finite noise");
    let other = Normal::new(0.0, cfg.other_noise_kg).expect("finite noise");
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    (0..cfg.n)
        .map(|i| {
            let pov = cfg.povs[i % cfg.povs.len()];
            let weight: f64 = rng.random_range(cfg.min_weight_kg..cfg.max_weight_kg);
            let mut features = if pov == Pov::Side {
                vec![weight + side.sample(&mut rng), 0.0, 1.0]
            } else {
                vec![0.0, weight + other.sample(&mut rng), 0.0]
            };
            features.extend((0..cfg.noise_dims).map(|_| unit.sample(&mut rng)));
            LabeledSample {
                features,
                true_weight_kg: weight,
                pov,
            }
        })
        .collect()
}

/// CSV with feature columns followed by `true_weight_kg` and `pov`.
pub fn write_samples_csv(samples: &[LabeledSample]) -> String {
    let d = samples.first().map_or(0, |s| s.features.len());
    let mut out = feature_names(d).join(",");
    if d > 0 {
        out.push(',');
    }
    out.push_str("true_weight_kg,pov\n");
    for s in samples {
        for v in &s.features {
            out.push_str(&v.to_string());
            out.push(',');
        }
        out.push_str(&format!("{},{}\n", s.true_weight_kg, s.pov));
    }
    out
}

pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<LabeledSample>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let weight_idx = header.iter().position(|h| h == "true_weight_kg");
    let pov_idx = header.iter().position(|h| h == "pov");
    let (Some(weight_idx), Some(pov_idx)) = (weight_idx, pov_idx) else {
        return Err(BandError::InvalidSample {
            row: 0,
            message: "header needs true_weight_kg and pov columns".into(),
        });
    };
    let mut samples = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |message: String| BandError::InvalidSample { row, message };
        let mut features = Vec::new();
        let mut weight = 0.0;
        let mut pov = Pov::Side;
        for (j, cell) in rec.iter().enumerate() {
            if j == pov_idx {
                pov = cell.trim().parse().map_err(bad)?;
            } else {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("column {}: not a number: {cell:?}", header[j])))?;
                if !v.is_finite() {
                    return Err(bad(format!("column {}: non-finite", header[j])));
                }
                if j == weight_idx {
                    weight = v;
                } else {
                    features.push(v);
                }
            }
        }
        if weight <= 0.0 {
            return Err(bad(format!("true_weight_kg must be positive, got {weight}")));
        }
        samples.push(LabeledSample {
            features,
            true_weight_kg: weight,
            pov,
        });
    }
    Ok(samples)
}
