use std::collections::BTreeMap;

use super::Frame;

/// Maps a frame to named feature estimates. Implementations must be
/// deterministic and return finite values.
pub trait FeatureExtractor: Send + Sync {
    /// Output names, in the order `extract` fills them.
    fn feature_names(&self) -> Vec<String>;

    fn extract(&self, frame: &Frame) -> Vec<f64>;

    fn extract_named(&self, frame: &Frame) -> BTreeMap<String, f64> {
        self.feature_names()
            .into_iter()
            .zip(self.extract(frame))
            .collect()
    }
}

/// Stand-in for a vision model. With `b` the bounding-box area of pixels
/// brighter than `threshold` as a fraction of the frame and `m` the mean
/// intensity in gray levels:
///
/// ```text
/// WT        = 50 + 950 · b          (kg)
/// height_cm = 80 + (100 / 255) · m
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticExtractor {
    pub threshold: u8,
}

impl Default for SyntheticExtractor {
    fn default() -> Self {
        Self { threshold: 128 }
    }
}

impl SyntheticExtractor {
    /// (mean intensity, above-threshold bounding-box area fraction).
    pub fn frame_stats(&self, frame: &Frame) -> (f64, f64) {
        let total = frame.pixels.len();
        if total == 0 {
            return (0.0, 0.0);
        }
        let mean = frame.pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / total as f64;
        let w = frame.width as usize;
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for (idx, &p) in frame.pixels.iter().enumerate() {
            if p > self.threshold {
                let (x, y) = (idx % w, idx / w);
                bounds = Some(match bounds {
                    None => (x, x, y, y),
                    Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
                });
            }
        }
        let area = bounds.map_or(0, |(x0, x1, y0, y1)| (x1 - x0 + 1) * (y1 - y0 + 1));
        (mean, area as f64 / total as f64)
    }
}

impl FeatureExtractor for SyntheticExtractor {
    fn feature_names(&self) -> Vec<String> {
        vec![crate::data::WEIGHT.to_string(), "height_cm".to_string()]
    }

    fn extract(&self, frame: &Frame) -> Vec<f64> {
        let (mean, area) = self.frame_stats(frame);
        vec![50.0 + 950.0 * area, 80.0 + 100.0 / 255.0 * mean]
    }
}
