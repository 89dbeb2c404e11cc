//! Tabular mart sales data: schema, CSV I/O, synthetic generation, splitting
//! and standardization.
//!
//! CSV dialect: comma separator, `.` decimal point, UTF-8, mandatory header,
//! unquoted numerics. Floats are written with Rust's shortest round-trip
//! formatting, so `write_csv` followed by `load_csv` reproduces every value
//! bit for bit.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Weight feature symbol (kilograms).
pub const WEIGHT: &str = "WT";
/// Price-per-kilo feature symbol.
pub const PRICE_PER_KILO: &str = "PPK";
/// Default regression target column.
pub const DEFAULT_TARGET: &str = "total_price";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        /// 1-based data row (the header is row 0).
        row: usize,
        col: String,
        message: String,
    },
    #[error("invalid record at row {row}: {message}")]
    InvalidRecord { row: usize, message: String },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("dataset needs at least {needed} records, has {actual}")]
    TooFewRecords { needed: usize, actual: usize },
    #[error("schema mismatch: missing {missing:?}, unexpected {extra:?}")]
    SchemaMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Unit per feature (`kg`, `currency/kg`, `months`, `unitless`, ...).
    #[serde(default)]
    pub units: BTreeMap<String, String>,
}

impl FeatureSchema {
    pub fn new(feature_names: Vec<String>, target_name: impl Into<String>) -> Result<Self> {
        let target_name = target_name.into();
        if feature_names.len() < 2 {
            return Err(DataError::Schema(format!(
                "at least 2 features required, got {}",
                feature_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.is_empty() {
                return Err(DataError::Schema("empty feature name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(DataError::Schema(format!("duplicate column {name:?}")));
            }
        }
        if seen.contains(target_name.as_str()) {
            return Err(DataError::Schema(format!(
                "target {target_name:?} is also listed as a feature"
            )));
        }
        Ok(Self {
            feature_names,
            target_name,
            units: BTreeMap::new(),
        })
    }

    pub fn with_units(mut self, units: BTreeMap<String, String>) -> Self {
        self.units = units;
        self
    }

    pub fn len(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Orders a name→value map into schema order, reporting missing and
    /// unexpected keys together.
    pub fn vector_from_map(&self, values: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let missing: Vec<String> = self
            .feature_names
            .iter()
            .filter(|n| !values.contains_key(n.as_str()))
            .cloned()
            .collect();
        let extra: Vec<String> = values
            .keys()
            .filter(|k| self.index_of(k).is_none())
            .cloned()
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(DataError::SchemaMismatch { missing, extra });
        }
        Ok(self.feature_names.iter().map(|n| values[n.as_str()]).collect())
    }

    pub fn map_from_vector(&self, values: &[f64]) -> BTreeMap<String, f64> {
        self.feature_names
            .iter()
            .cloned()
            .zip(values.iter().copied())
            .collect()
    }
}

/// One sold animal: feature values in schema order plus the total price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaleRecord {
    pub values: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub records: Vec<SaleRecord>,
}

impl Dataset {
    /// Validates every record against the schema.
    pub fn new(schema: FeatureSchema, records: Vec<SaleRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(DataError::TooFewRecords {
                needed: 1,
                actual: 0,
            });
        }
        let wt = schema.index_of(WEIGHT);
        for (i, rec) in records.iter().enumerate() {
            validate_record(&schema, wt, rec, i + 1)?;
        }
        Ok(Self { schema, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    /// Row-major design matrix.
    pub fn design(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.values.clone()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.target).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.values[j]).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ASCII")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = self.schema.feature_names.join(",");
        header.push(',');
        header.push_str(&self.schema.target_name);
        writeln!(out, "{header}")?;
        for rec in &self.records {
            let mut line = String::new();
            for v in &rec.values {
                line.push_str(&v.to_string());
                line.push(',');
            }
            line.push_str(&rec.target.to_string());
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn validate_record(
    schema: &FeatureSchema,
    wt: Option<usize>,
    rec: &SaleRecord,
    row: usize,
) -> Result<()> {
    if rec.values.len() != schema.len() {
        return Err(DataError::InvalidRecord {
            row,
            message: format!("{} values for {} features", rec.values.len(), schema.len()),
        });
    }
    if let Some(j) = rec.values.iter().position(|v| !v.is_finite()) {
        return Err(DataError::InvalidRecord {
            row,
            message: format!("non-finite value in {}", schema.feature_names[j]),
        });
    }
    if !rec.target.is_finite() || rec.target < 0.0 {
        return Err(DataError::InvalidRecord {
            row,
            message: format!("target must be finite and >= 0, got {}", rec.target),
        });
    }
    if let Some(j) = wt {
        if rec.values[j] <= 0.0 {
            return Err(DataError::InvalidRecord {
                row,
                message: format!("{WEIGHT} must be positive, got {}", rec.values[j]),
            });
        }
    }
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>, target_name: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, target_name)
}

pub fn parse_csv(text: &str, target_name: &str) -> Result<Dataset> {
    read_csv(text.as_bytes(), target_name)
}

pub fn read_csv<R: Read>(input: R, target_name: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(DataError::Schema(format!("duplicate header {h:?}")));
        }
    }
    let target_idx = header
        .iter()
        .position(|h| h == target_name)
        .ok_or_else(|| DataError::Schema(format!("missing target column {target_name:?}")))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let schema = FeatureSchema::new(feature_names, target_name)?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        if row.len() != header.len() {
            return Err(DataError::Parse {
                row: row_no,
                col: header.get(row.len()).cloned().unwrap_or_default(),
                message: format!("expected {} cells, found {}", header.len(), row.len()),
            });
        }
        let mut values = Vec::with_capacity(header.len() - 1);
        let mut target = 0.0;
        for (j, cell) in row.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::Parse {
                row: row_no,
                col: header[j].clone(),
                message: format!("not a number: {cell:?}"),
            })?;
            if j == target_idx {
                target = v;
            } else {
                values.push(v);
            }
        }
        records.push(SaleRecord { values, target });
    }
    Dataset::new(schema, records)
}

/// Splits into (train, test) with `round(n * train_fraction)` training rows
/// after a seeded shuffle.
pub fn split_train_test(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train_idx, test_idx) = split_indices(d.len(), train_fraction, seed)?;
    let pick = |idx: &[usize]| Dataset {
        schema: d.schema.clone(),
        records: idx.iter().map(|&i| d.records[i].clone()).collect(),
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Index-level split used by [`split_train_test`].
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidFraction(train_fraction));
    }
    if n < 2 {
        return Err(DataError::TooFewRecords {
            needed: 2,
            actual: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// Per-feature location/scale. Uses the sample (n - 1) standard deviation;
/// columns whose deviation is zero keep scale 1 and are flagged constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    pub constant: Vec<bool>,
}

impl StandardizationStats {
    /// Location 0, scale 1 for every feature.
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            stddev: vec![1.0; d],
            constant: vec![false; d],
        }
    }

    pub fn fit_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut mean = vec![0.0; d];
        let mut stddev = vec![1.0; d];
        let mut constant = vec![false; d];
        for j in 0..d {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let first = rows[0][j];
            let all_equal = rows.iter().all(|r| r[j] == first);
            let ss: f64 = rows.iter().map(|r| (r[j] - m).powi(2)).sum();
            let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
            if all_equal || sd == 0.0 || !sd.is_finite() {
                mean[j] = if all_equal { first } else { m };
                constant[j] = true;
            } else {
                mean[j] = m;
                stddev[j] = sd;
            }
        }
        Self {
            mean,
            stddev,
            constant,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.stddev))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, standardized: &[f64]) -> Vec<f64> {
        standardized
            .iter()
            .zip(self.mean.iter().zip(&self.stddev))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }
}

pub fn fit_standardization(d: &Dataset) -> StandardizationStats {
    StandardizationStats::fit_rows(&d.design())
}

pub fn apply_standardization(stats: &StandardizationStats, record: &SaleRecord) -> Vec<f64> {
    stats.apply(&record.values)
}

/// Ground truth of the synthetic mart generator, written next to generated
/// CSVs as `<file>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n: usize,
    pub seed: u64,
    pub target_name: String,
    pub intercept: f64,
    /// Coefficient per feature in original units; features absent from the
    /// price formula carry 0.
    pub coefficients: BTreeMap<String, f64>,
    pub noise_sd: f64,
    pub units: BTreeMap<String, String>,
}

/// (name, unit, price coefficient).
const SYNTHETIC_FEATURES: [(&str, &str, f64); 22] = [
    (WEIGHT, "kg", 1.2),
    (PRICE_PER_KILO, "currency/kg", 2.0),
    ("age_months", "months", -0.8),
    ("height_cm", "cm", 0.5),
    ("body_condition", "score", 25.0),
    ("health_score", "score", 6.0),
    ("lot_size", "count", -3.0),
    ("sex_male", "unitless", 40.0),
    ("breed_code_0", "unitless", 60.0),
    ("breed_code_1", "unitless", 25.0),
    ("breed_code_2", "unitless", -20.0),
    ("mart_region_0", "unitless", 15.0),
    ("mart_region_1", "unitless", -10.0),
    ("sale_month", "month", 0.0),
    ("days_on_farm", "days", 0.0),
    ("dam_age_months", "months", 0.0),
    ("calving_count", "count", 0.0),
    ("vaccinated", "unitless", 20.0),
    ("transport_km", "km", -0.1),
    ("lot_position", "index", 0.0),
    ("horn_status", "unitless", 0.0),
    ("export_eligible", "unitless", 30.0),
];
const SYNTHETIC_INTERCEPT: f64 = 150.0;
const SYNTHETIC_NOISE_SD: f64 = 40.0;

/// Parameters that [`gen_synthetic_mart`] uses for `(n, seed)`.
pub fn synthetic_params(n: usize, seed: u64) -> GeneratorParams {
    GeneratorParams {
        n,
        seed,
        target_name: DEFAULT_TARGET.to_string(),
        intercept: SYNTHETIC_INTERCEPT,
        coefficients: SYNTHETIC_FEATURES
            .iter()
            .map(|(name, _, c)| (name.to_string(), *c))
            .collect(),
        noise_sd: SYNTHETIC_NOISE_SD,
        units: SYNTHETIC_FEATURES
            .iter()
            .map(|(name, unit, _)| (name.to_string(), unit.to_string()))
            .collect(),
    }
}

fn one_hot(rng: &mut ChaCha8Rng, levels: usize) -> Vec<f64> {
    // `levels` categories encoded with `levels - 1` columns; the last
    // category is the all-zero baseline.
    let pick = rng.random_range(0..levels);
    (0..levels - 1).map(|k| f64::from(u8::from(k == pick))).collect()
}

/// Desk-scale stand-in for a mart sales history: 22 features, target a fixed
/// linear combination of a subset plus Gaussian noise. PPK is drawn
/// independently of the target so total price is not PPK times WT.
pub fn gen_synthetic_mart(n: usize, seed: u64) -> Dataset {
    let n = n.max(1);
    let params = synthetic_params(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng, sd: f64| Normal::new(0.0, sd).unwrap().sample(rng);
    let noise = Normal::new(0.0, params.noise_sd).unwrap();
    let coefs: Vec<f64> = SYNTHETIC_FEATURES.iter().map(|f| f.2).collect();

    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let wt: f64 = rng.random_range(50.0..1000.0);
        let ppk: f64 = 150.0 + rng.random_range(0.0..100.0) + unit(&mut rng, 5.0);
        let age = rng.random_range(3.0..120.0_f64).round();
        let height = (90.0 + 0.08 * wt + unit(&mut rng, 6.0)).max(60.0);
        let body_condition = rng.random_range(1.0..5.0_f64);
        let health = rng.random_range(0.0..10.0_f64);
        let lot_size = f64::from(rng.random_range(1u8..=12));
        let sex_male = f64::from(u8::from(rng.random_bool(0.5)));
        let breed = one_hot(&mut rng, 4);
        let region = one_hot(&mut rng, 3);
        let sale_month = f64::from(rng.random_range(1u8..=12));
        let days_on_farm = rng.random_range(0.0..900.0_f64).round();
        let dam_age = rng.random_range(30.0..180.0_f64).round();
        let calving = f64::from(rng.random_range(0u8..=8));
        let vaccinated = f64::from(u8::from(rng.random_bool(0.8)));
        let transport = rng.random_range(0.0..300.0_f64);
        let lot_position = f64::from(rng.random_range(1u16..=400));
        let horn = f64::from(u8::from(rng.random_bool(0.3)));
        let export = f64::from(u8::from(rng.random_bool(0.4)));

        let mut values = vec![
            wt,
            ppk,
            age,
            height,
            body_condition,
            health,
            lot_size,
            sex_male,
        ];
        values.extend(breed);
        values.extend(region);
        values.extend([
            sale_month,
            days_on_farm,
            dam_age,
            calving,
            vaccinated,
            transport,
            lot_position,
            horn,
            export,
        ]);
        let mean: f64 = params.intercept
            + values
                .iter()
                .zip(&coefs)
                .map(|(v, c)| v * c)
                .sum::<f64>();
        let target = (mean + noise.sample(&mut rng)).max(0.0);
        records.push(SaleRecord { values, target });
    }

    let schema = FeatureSchema::new(
        SYNTHETIC_FEATURES.iter().map(|f| f.0.to_string()).collect(),
        DEFAULT_TARGET,
    )
    .expect("synthetic schema is valid")
    .with_units(params.units.clone());
    Dataset::new(schema, records).expect("synthetic records are valid")
}

/// Sidecar path for a generated CSV: `mart.csv` → `mart.csv.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}
