//! Edge-to-service wire format.
//!
//! A request body is a sequence of records, each a 4-byte big-endian length
//! followed by that many bytes of JSON:
//!
//! ```text
//! {"stream_id":"cam-1","seq":0,"kind":"frame","payload_base64":"...","crc32":1234}
//! ```
//!
//! `crc32` is the IEEE CRC-32 of the decoded payload. Frame payloads are
//! binary PGM files; feature payloads are JSON objects of name → value.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{EdgeError, Frame};

/// Upper bound on a single record's JSON length.
pub const MAX_RECORD_LEN: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PacketKind {
    Frame,
    Features,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePacket {
    pub stream_id: String,
    pub seq: u64,
    pub kind: PacketKind,
    pub payload: Vec<u8>,
    pub checksum: u32,
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    stream_id: String,
    seq: u64,
    kind: PacketKind,
    payload_base64: String,
    crc32: u32,
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

impl FramePacket {
    pub fn new(stream_id: impl Into<String>, seq: u64, kind: PacketKind, payload: Vec<u8>) -> Self {
        let checksum = crc32(&payload);
        Self {
            stream_id: stream_id.into(),
            seq,
            kind,
            payload,
            checksum,
        }
    }

    pub fn from_frame(stream_id: impl Into<String>, seq: u64, frame: &Frame) -> Self {
        Self::new(stream_id, seq, PacketKind::Frame, frame.to_pgm())
    }

    pub fn from_features(stream_id: impl Into<String>, seq: u64, features: &BTreeMap<String, f64>) -> Self {
        let payload = serde_json::to_vec(features).expect("map of finite floats serializes");
        Self::new(stream_id, seq, PacketKind::Features, payload)
    }

    pub fn verify(&self) -> bool {
        crc32(&self.payload) == self.checksum
    }

    pub fn frame(&self) -> Result<Frame, EdgeError> {
        Frame::from_pgm(&self.payload)
    }

    pub fn features(&self) -> Result<BTreeMap<String, f64>, EdgeError> {
        serde_json::from_slice(&self.payload).map_err(|e| EdgeError::Malformed(e.to_string()))
    }

    /// Appends this packet's length-prefixed record to `out`.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let record = WireRecord {
            stream_id: self.stream_id.clone(),
            seq: self.seq,
            kind: self.kind,
            payload_base64: BASE64.encode(&self.payload),
            crc32: self.checksum,
        };
        let json = serde_json::to_vec(&record).expect("wire record serializes");
        let len = u32::try_from(json.len()).expect("record shorter than 4 GiB");
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&json);
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }
}

pub fn encode_stream(packets: &[FramePacket]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in packets {
        p.encode_into(&mut out);
    }
    out
}

/// Splits a body into packets. Checksums are not verified here; any framing,
/// JSON or base64 defect fails the whole body.
pub fn decode_stream(mut bytes: &[u8]) -> Result<Vec<FramePacket>, EdgeError> {
    let mut packets = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return Err(EdgeError::Malformed(format!(
                "{} trailing bytes after record {}",
                bytes.len(),
                packets.len()
            )));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        if len > MAX_RECORD_LEN {
            return Err(EdgeError::Malformed(format!("record length {len} exceeds limit")));
        }
        let body = bytes
            .get(4..4 + len)
            .ok_or_else(|| EdgeError::Malformed(format!("record {} truncated", packets.len())))?;
        let record: WireRecord = serde_json::from_slice(body)
            .map_err(|e| EdgeError::Malformed(format!("record {}: {e}", packets.len())))?;
        let payload = BASE64
            .decode(record.payload_base64.as_bytes())
            .map_err(|e| EdgeError::Malformed(format!("record {}: {e}", packets.len())))?;
        packets.push(FramePacket {
            stream_id: record.stream_id,
            seq: record.seq,
            kind: record.kind,
            payload,
            checksum: record.crc32,
        });
        bytes = &bytes[4 + len..];
    }
    Ok(packets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketStatus {
    Ack,
    Nack,
}

/// Receiver verdict for one packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketResult {
    pub stream_id: String,
    pub seq: u64,
    pub status: PacketStatus,
    /// Already stored; acknowledged without storing again.
    #[serde(default)]
    pub duplicate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Body of a successful ingestion response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub results: Vec<PacketResult>,
    /// Highest seq per stream such that every seq from 0 up to it is stored.
    pub highest_contiguous: BTreeMap<String, Option<u64>>,
}

pub const REASON_CHECKSUM: &str = "checksum";
