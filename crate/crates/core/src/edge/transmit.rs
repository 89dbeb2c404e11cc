use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::packet::{encode_stream, FramePacket, IngestResponse, PacketStatus, REASON_CHECKSUM};
use super::EdgeError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitOptions {
    /// Retries per packet after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub request_timeout: Duration,
}

impl Default for TransmitOptions {
    fn default() -> Self {
        Self {
            max_retries: 4,
            initial_backoff: Duration::from_millis(50),
            max_backoff: Duration::from_secs(2),
            request_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedPacket {
    pub seq: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub sent: usize,
    pub acked: usize,
    pub failed: usize,
    /// Acks for packets the receiver already held.
    pub duplicates: usize,
    /// Nacked packets; a checksum rejection carries reason `checksum`.
    pub rejected: Vec<RejectedPacket>,
}

impl DeliveryReport {
    pub fn checksum_rejected(&self) -> impl Iterator<Item = u64> + '_ {
        self.rejected
            .iter()
            .filter(|r| r.reason == REASON_CHECKSUM)
            .map(|r| r.seq)
    }
}

enum Attempt {
    Done(IngestResponse),
    Rejected(String),
    Transient(String),
}

/// Posts packets in order, one per request, to `<endpoint>/ingest/frames`.
/// Connection failures and 5xx responses are retried with exponential
/// backoff; once a packet exhausts its retry budget the whole transmission
/// stops with [`EdgeError::EndpointUnreachable`].
pub async fn transmit(
    packets: &[FramePacket],
    endpoint: &str,
    options: &TransmitOptions,
) -> Result<DeliveryReport, EdgeError> {
    let client = reqwest::Client::builder()
        .timeout(options.request_timeout)
        .build()
        .map_err(|e| EdgeError::Transport(e.to_string()))?;
    let url = format!("{}/ingest/frames", endpoint.trim_end_matches('/'));
    let mut report = DeliveryReport::default();

    for packet in packets {
        let body = encode_stream(std::slice::from_ref(packet));
        let mut backoff = options.initial_backoff;
        let mut attempts = 0;
        let outcome = loop {
            attempts += 1;
            match post_once(&client, &url, body.clone()).await {
                Attempt::Transient(msg) if attempts <= options.max_retries => {
                    tracing::debug!(seq = packet.seq, attempts, %msg, "retrying");
                    tokio::time::sleep(backoff).await;
                    backoff = (backoff * 2).min(options.max_backoff);
                }
                Attempt::Transient(msg) => {
                    return Err(EdgeError::EndpointUnreachable {
                        seq: packet.seq,
                        attempts,
                        message: msg,
                    });
                }
                other => break other,
            }
        };
        report.sent += 1;
        match outcome {
            Attempt::Done(resp) => {
                let result = resp
                    .results
                    .into_iter()
                    .find(|r| r.stream_id == packet.stream_id && r.seq == packet.seq);
                match result {
                    Some(r) if r.status == PacketStatus::Ack => {
                        report.acked += 1;
                        report.duplicates += usize::from(r.duplicate);
                    }
                    Some(r) => {
                        report.failed += 1;
                        report.rejected.push(RejectedPacket {
                            seq: packet.seq,
                            reason: r.reason.unwrap_or_else(|| "nack".into()),
                        });
                    }
                    None => {
                        report.failed += 1;
                        report.rejected.push(RejectedPacket {
                            seq: packet.seq,
                            reason: "no result for packet".into(),
                        });
                    }
                }
            }
            Attempt::Rejected(reason) => {
                report.failed += 1;
                report.rejected.push(RejectedPacket {
                    seq: packet.seq,
                    reason,
                });
            }
            Attempt::Transient(_) => unreachable!("transient outcomes retry or return"),
        }
    }
    Ok(report)
}

async fn post_once(client: &reqwest::Client, url: &str, body: Vec<u8>) -> Attempt {
    let resp = match client
        .post(url)
        .header("content-type", "application/octet-stream")
        .body(body)
        .send()
        .await
    {
        Ok(r) => r,
        Err(e) => return Attempt::Transient(e.to_string()),
    };
    let status = resp.status();
    let bytes = match resp.bytes().await {
        Ok(b) => b,
        Err(e) => return Attempt::Transient(e.to_string()),
    };
    if status.is_server_error() {
        return Attempt::Transient(format!("HTTP {status}"));
    }
    if !status.is_success() {
        return Attempt::Rejected(format!("HTTP {status}: {}", String::from_utf8_lossy(&bytes)));
    }
    match serde_json::from_slice::<IngestResponse>(&bytes) {
        Ok(r) => Attempt::Done(r),
        Err(e) => Attempt::Rejected(format!("unreadable response: {e}")),
    }
}
