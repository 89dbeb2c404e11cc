//! Explainable livestock price prediction.
//!
//! - [`data`]: mart sales CSVs, the synthetic generator, splits and standardization
//! - [`linreg`]: weighted ridge linear regression and regression metrics
//! - [`discretize`]: quantile bins and interval labels
//! - [`explain`]: local surrogate explanations of single predictions
//! - [`bands`]: regress-then-bin weight band evaluation
//! - [`edge`]: frame sampling, deduplication, feature extraction and transmission
//! - [`bundle`]: persisted model artifacts with content-addressed ids
//! - [`service`]: the HTTP pricing service

pub mod data;
pub mod discretize;
pub mod explain;
pub mod linreg;
pub mod bands;
pub mod edge;
pub mod bundle;
pub mod service;
