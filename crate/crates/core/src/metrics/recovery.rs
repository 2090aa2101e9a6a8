use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::tcp::{RecoveryKind, RetxEpisode};

use super::record::MetricsError;
use super::stats::{ecdf, Decile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEvent {
    pub flow_id: u64,
    pub kind: RecoveryKind,
    pub cwnd_mss: u32,
    /// Position of the first lost segment in its window at first
    /// transmission, as a fraction of the window.
    pub loss_index_fraction: f64,
    /// Lost segments over the window.
    pub burst_fraction: f64,
    /// Time from the lost segment's latest transmission to recovery start.
    pub recovery_duration_us: u64,
}

pub const RECOVERY_CSV_HEADER: &str =
    "flow_id,kind,cwnd_mss,loss_index_fraction,burst_fraction,recovery_duration_us";

pub fn classify_episode(flow_id: u64, e: &RetxEpisode) -> RecoveryEvent {
    let w = f64::from(e.cwnd_at_loss_tx.max(1));
    RecoveryEvent {
        flow_id,
        kind: e.kind,
        cwnd_mss: e.cwnd_at_loss_tx,
        loss_index_fraction: (f64::from(e.loss_window_index) / w).clamp(0.0, 1.0),
        burst_fraction: (f64::from(e.lost_segments) / w).clamp(0.0, 1.0),
        recovery_duration_us: e.trigger_time.saturating_sub(e.last_tx_time).as_micros(),
    }
}

/// Per-kind distributions over a set of recovery events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecoverySummary {
    pub frr_burst: Decile,
    pub rto_burst: Decile,
    pub frr_loss_index: Decile,
    pub rto_loss_index: Decile,
    pub frr_cwnd_cdf: Vec<(u32, f64)>,
    pub rto_cwnd_cdf: Vec<(u32, f64)>,
}

impl RecoverySummary {
    pub fn events(&self, kind: RecoveryKind) -> u64 {
        match kind {
            RecoveryKind::Frr => self.frr_loss_index.total(),
            RecoveryKind::Rto => self.rto_loss_index.total(),
        }
    }
}

pub fn summarize_recovery(events: &[RecoveryEvent]) -> RecoverySummary {
    let mut s = RecoverySummary::default();
    let mut frr_w = Vec::new();
    let mut rto_w = Vec::new();
    for e in events {
        let (burst, index, w) = match e.kind {
            RecoveryKind::Frr => (&mut s.frr_burst, &mut s.frr_loss_index, &mut frr_w),
            RecoveryKind::Rto => (&mut s.rto_burst, &mut s.rto_loss_index, &mut rto_w),
        };
        burst.add(e.burst_fraction);
        index.add(e.loss_index_fraction);
        w.push(e.cwnd_mss);
    }
    s.frr_cwnd_cdf = ecdf(&frr_w);
    s.rto_cwnd_cdf = ecdf(&rto_w);
    s
}

pub fn write_recovery<W: Write>(w: W, events: &[RecoveryEvent]) -> Result<(), MetricsError> {
    let mut wr = csv::Writer::from_writer(w);
    if events.is_empty() {
        wr.write_record(RECOVERY_CSV_HEADER.split(','))?;
    }
    for e in events {
        wr.serialize(e)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_recovery<R: Read>(r: R) -> Result<Vec<RecoveryEvent>, MetricsError> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != RECOVERY_CSV_HEADER {
        return Err(MetricsError::Header(header));
    }
    rd.deserialize()
        .map(|r| r.map_err(MetricsError::from))
        .collect()
}
