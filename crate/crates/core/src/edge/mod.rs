//! Edge device simulation: stride sampling, redundancy removal by mean
//! absolute pixel difference against the last kept frame, feature
//! extraction, packaging and transmission to the ingestion endpoint.

mod extract;
mod frame;
pub mod packet;
mod transmit;

use thiserror::Error;

pub use extract::{FeatureExtractor, SyntheticExtractor};
pub use frame::{dedupe_stream, mean_abs_diff, sample_stride, synthetic_stream, Frame};
pub use packet::{decode_stream, encode_stream, FramePacket, PacketKind};
pub use transmit::{transmit, DeliveryReport, RejectedPacket, TransmitOptions};

#[derive(Debug, Error)]
pub enum EdgeError {
    #[error("stride must be >= 1, got {0}")]
    InvalidStride(usize),
    #[error("frame dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("malformed packet stream: {0}")]
    Malformed(String),
    #[error("endpoint unreachable at seq {seq} after {attempts} attempts: {message}")]
    EndpointUnreachable {
        seq: u64,
        attempts: u32,
        message: String,
    },
    #[error("transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_STRIDE: usize = 5;
pub const DEFAULT_DEDUPE_THRESHOLD: f64 = 5.0;

/// Stride sampling followed by deduplication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePipeline {
    pub stride: usize,
    pub threshold: f64,
    /// Run the extractor on the device and send feature packets instead of
    /// frames.
    pub extract_at_edge: bool,
}

impl Default for EdgePipeline {
    fn default() -> Self {
        Self {
            stride: DEFAULT_STRIDE,
            threshold: DEFAULT_DEDUPE_THRESHOLD,
            extract_at_edge: false,
        }
    }
}

impl EdgePipeline {
    pub fn select(&self, frames: &[Frame]) -> Result<Vec<Frame>, EdgeError> {
        let sampled = sample_stride(frames, self.stride)?;
        Ok(dedupe_stream(&sampled, self.threshold))
    }

    /// Packages the selected frames with gapless sequence numbers from 0.
    pub fn package(
        &self,
        stream_id: &str,
        frames: &[Frame],
        extractor: &dyn FeatureExtractor,
    ) -> Result<Vec<FramePacket>, EdgeError> {
        Ok(self
            .select(frames)?
            .iter()
            .enumerate()
            .map(|(seq, f)| {
                if self.extract_at_edge {
                    FramePacket::from_features(stream_id, seq as u64, &extractor.extract_named(f))
                } else {
                    FramePacket::from_frame(stream_id, seq as u64, f)
                }
            })
            .collect())
    }
}

/// Reads every `*.pgm` in a directory, ordered by file name.
pub fn read_pgm_dir(dir: &std::path::Path) -> Result<Vec<Frame>, EdgeError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Frame::from_pgm(&std::fs::read(p)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frames_from(levels: &[u8]) -> Vec<Frame> {
        levels
            .iter()
            .enumerate()
            .map(|(i, &v)| Frame::filled(i as u64, 2, 2, v))
            .collect()
    }

    #[test]
    fn package_numbers_gaplessly() {
        let frames = synthetic_stream(60, 16, 12, 3);
        let pipeline = EdgePipeline::default();
        let packets = pipeline.package("cam", &frames, &SyntheticExtractor::default()).unwrap();
        assert!(!packets.is_empty());
        for (i, p) in packets.iter().enumerate() {
            assert_eq!(p.seq, i as u64);
            assert!(p.verify());
        }
        let feature_packets = EdgePipeline {
            extract_at_edge: true,
            ..pipeline
        }
        .package("cam", &frames, &SyntheticExtractor::default())
        .unwrap();
        assert_eq!(feature_packets.len(), packets.len());
        assert!(feature_packets.iter().all(|p| p.kind == PacketKind::Features));
    }

    proptest! {
        #[test]
        fn dedupe_is_idempotent_subsequence(levels in prop::collection::vec(0u8..=255, 0..60), t in 0.0f64..40.0) {
            let frames = frames_from(&levels);
            let once = dedupe_stream(&frames, t);
            prop_assert_eq!(dedupe_stream(&once, t), once.clone());
            let mut it = frames.iter();
            for kept in &once {
                prop_assert!(it.any(|f| f == kept));
            }
        }

        #[test]
        fn strides_compose(n in 0usize..100, a in 1usize..7, b in 1usize..7) {
            let items: Vec<usize> = (0..n).collect();
            let nested = sample_stride(&sample_stride(&items, a).unwrap(), b).unwrap();
            prop_assert_eq!(sample_stride(&items, a * b).unwrap(), nested);
        }
    }
}
