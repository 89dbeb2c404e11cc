use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EdgeError;

/// Grayscale frame, row-major, one byte per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub id: u64,
    pub timestamp_ms: u64,
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(id: u64, timestamp_ms: u64, width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, EdgeError> {
        if pixels.len() != width as usize * height as usize {
            return Err(EdgeError::InvalidFrame(format!(
                "{} pixels for {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            id,
            timestamp_ms,
            width,
            height,
            pixels,
        })
    }

    pub fn filled(id: u64, width: u32, height: u32, value: u8) -> Self {
        Self {
            id,
            timestamp_ms: id * 40,
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    /// Binary PGM (P5). The id and timestamp travel in a comment line.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!(
            "P5\n# id={} t={}\n{} {}\n255\n",
            self.id, self.timestamp_ms, self.width, self.height
        )
        .into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, EdgeError> {
        let bad = |m: &str| EdgeError::InvalidFrame(format!("pgm: {m}"));
        let mut pos = 0usize;
        let mut tokens: Vec<String> = Vec::with_capacity(4);
        let (mut id, mut ts) = (0u64, 0u64);
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos >= bytes.len() {
                return Err(bad("truncated header"));
            }
            if bytes[pos] == b'#' {
                let end = bytes[pos..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map_or(bytes.len(), |e| pos + e);
                let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
                for part in comment.split_whitespace() {
                    if let Some(v) = part.strip_prefix("id=") {
                        id = v.parse().unwrap_or(0);
                    } else if let Some(v) = part.strip_prefix("t=") {
                        ts = v.parse().unwrap_or(0);
                    }
                }
                pos = end;
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if tokens[0] != "P5" {
            return Err(bad("not a binary PGM (P5)"));
        }
        let width: u32 = tokens[1].parse().map_err(|_| bad("width"))?;
        let height: u32 = tokens[2].parse().map_err(|_| bad("height"))?;
        let maxval: u32 = tokens[3].parse().map_err(|_| bad("maxval"))?;
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit maxval supported"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let len = width as usize * height as usize;
        if bytes.len() < pos + len {
            return Err(bad("truncated raster"));
        }
        Frame::new(id, ts, width, height, bytes[pos..pos + len].to_vec())
    }
}

/// Mean absolute pixel difference in gray levels.
pub fn mean_abs_diff(a: &Frame, b: &Frame) -> Result<f64, EdgeError> {
    if a.width != b.width || a.height != b.height {
        return Err(EdgeError::DimensionMismatch {
            left: (a.width, a.height),
            right: (b.width, b.height),
        });
    }
    if a.pixels.is_empty() {
        return Ok(0.0);
    }
    let total: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| u64::from(x.abs_diff(y)))
        .sum();
    Ok(total as f64 / a.pixels.len() as f64)
}

/// Keeps items at positions 0, stride, 2·stride, ….
pub fn sample_stride<T: Clone>(stream: &[T], stride: usize) -> Result<Vec<T>, EdgeError> {
    if stride == 0 {
        return Err(EdgeError::InvalidStride(stride));
    }
    Ok(stream.iter().step_by(stride).cloned().collect())
}

/// Keeps frame `i` when it is the first frame or differs from the last kept
/// frame by more than `threshold` (mean absolute difference). A frame whose
/// dimensions differ from the last kept one is always kept.
pub fn dedupe_stream(stream: &[Frame], threshold: f64) -> Vec<Frame> {
    let mut kept: Vec<Frame> = Vec::new();
    for frame in stream {
        let keep = match kept.last() {
            None => true,
            Some(last) => mean_abs_diff(frame, last).map_or(true, |d| d > threshold),
        };
        if keep {
            kept.push(frame.clone());
        }
    }
    kept
}

/// Deterministic test stream: a bright rectangle (the animal) on a dark,
/// lightly noisy background. The animal grows and drifts every few frames
/// and otherwise holds still, so the stream mixes redundant runs with real
/// changes.
pub fn synthetic_stream(n: usize, width: u32, height: u32, seed: u64) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as usize, height as usize);
    let mut frames = Vec::with_capacity(n);
    let mut box_w = (w / 4).max(1);
    let mut box_h = (h / 4).max(1);
    let mut x0 = w / 8;
    let y0 = h / 3;
    for i in 0..n {
        if i > 0 && i % 5 == 0 {
            box_w = (box_w + rng.random_range(0..=w / 16 + 1)).min(w - x0);
            box_h = (box_h + rng.random_range(0..=h / 16 + 1)).min(h - y0);
            x0 = (x0 + rng.random_range(0..=2)).min(w - box_w);
        }
        let mut pixels = vec![0u8; w * h];
        for (idx, p) in pixels.iter_mut().enumerate() {
            let (x, y) = (idx % w, idx / w);
            let inside = x >= x0 && x < x0 + box_w && y >= y0 && y < y0 + box_h;
            *p = if inside { 200 } else { 30 + rng.random_range(0..3) };
        }
        frames.push(Frame {
            id: i as u64,
            timestamp_ms: i as u64 * 40,
            width,
            height,
            pixels,
        });
    }
    frames
}
