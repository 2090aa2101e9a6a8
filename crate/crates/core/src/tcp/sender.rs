//! NewReno sender with optional ECN and DCTCP reactions.
//!
//! The sender is a pure state machine: every entry point takes the current
//! time and appends outgoing segments and recovery records to a
//! [`SenderOutput`]. Timers are exposed as a deadline the caller polls.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

use super::config::{TcpConfig, TcpVariant};
use super::segment::{fold_digest, payload_digest, Direction, FlowKey, Segment, MSS};
use super::seq::{seq_diff, seq_ge, seq_gt, seq_lt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RecoveryKind {
    Frr,
    Rto,
}

/// Raw record emitted when the sender starts a loss-recovery episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetxEpisode {
    pub kind: RecoveryKind,
    /// FRR whose triggering dupACKs included at least one spoofed ACK.
    pub rack_assisted: bool,
    pub trigger_time: SimTime,
    /// Window in segments when the first lost segment was first sent.
    pub cwnd_at_loss_tx: u32,
    /// 1-based slot of the first lost segment in that window.
    pub loss_window_index: u32,
    /// Segments of the outstanding window whose latest copy was dropped.
    pub lost_segments: u32,
    /// Most recent transmission of the first lost segment.
    pub last_tx_time: SimTime,
}

#[derive(Debug, Default)]
pub struct SenderOutput {
    pub segments: Vec<Segment>,
    pub episodes: Vec<RetxEpisode>,
}

impl SenderOutput {
    pub fn clear(&mut self) {
        self.segments.clear();
        self.episodes.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderState {
    Idle,
    SynSent,
    Established,
    Done,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SenderCounters {
    pub rto_events: u32,
    pub syn_timeouts: u32,
    pub frr_events: u32,
    pub rack_assisted_frr_events: u32,
    pub spoofed_acks_received: u32,
    pub dupacks_received: u32,
    pub invalid_acks: u32,
    pub paws_rejected: u32,
    pub retransmitted_segments: u32,
    pub ecn_reductions: u32,
}

#[derive(Debug, Clone, Copy)]
struct TxInfo {
    first_tx: SimTime,
    last_tx: SimTime,
    tx_count: u32,
    cwnd_at_first_tx: u32,
    window_index: u32,
    last_copy_dropped: bool,
}

#[derive(Debug)]
pub struct TcpSender {
    cfg: TcpConfig,
    key: FlowKey,
    conn: u32,
    state: SenderState,
    isn: u32,
    /// Peer's initial sequence number once known.
    irs: u32,
    total_bytes: Option<u64>,
    flow_seed: u64,
    sack_ok: bool,

    snd_una: u32,
    snd_nxt: u32,
    snd_max: u32,
    cwnd: f64,
    ssthresh: f64,
    dup_acks: u32,
    dup_spoofed: bool,
    in_recovery: bool,
    recover: u32,
    /// RFC 6582 guard: no new fast retransmit until this is acknowledged.
    recover_guard: u32,

    srtt: Option<f64>,
    rttvar: f64,
    rto_base: SimTime,
    backoff: u32,
    rto_deadline: Option<SimTime>,
    timed: Option<(u32, SimTime)>,
    syn_sent_at: SimTime,
    syn_tx: u32,

    ts_recent: Option<u32>,

    cwr_pending: bool,
    ecn_guard: u32,
    dctcp_alpha: f64,
    dctcp_window_end: u32,
    ce_bytes: u64,
    acked_bytes: u64,

    tx_base: u64,
    tx_log: VecDeque<TxInfo>,

    counters: SenderCounters,
    established_at: Option<SimTime>,
    completed_at: Option<SimTime>,
    cwnd_trace: u64,
}

impl TcpSender {
    pub fn new(
        cfg: TcpConfig,
        key: FlowKey,
        conn: u32,
        isn: u32,
        total_bytes: Option<u64>,
        flow_seed: u64,
    ) -> Self {
        TcpSender {
            cfg,
            key,
            conn,
            state: SenderState::Idle,
            isn,
            irs: 0,
            total_bytes,
            flow_seed,
            sack_ok: false,
            snd_una: isn,
            snd_nxt: isn,
            snd_max: isn,
            cwnd: f64::from(cfg.initial_window.max(1)),
            ssthresh: f64::INFINITY,
            dup_acks: 0,
            dup_spoofed: false,
            in_recovery: false,
            recover: isn,
            recover_guard: isn,
            srtt: None,
            rttvar: 0.0,
            rto_base: cfg.rto_initial,
            backoff: 0,
            rto_deadline: None,
            timed: None,
            syn_sent_at: SimTime::ZERO,
            syn_tx: 0,
            ts_recent: None,
            cwr_pending: false,
            ecn_guard: isn,
            dctcp_alpha: cfg.dctcp_alpha_init.clamp(0.0, 1.0),
            dctcp_window_end: isn,
            ce_bytes: 0,
            acked_bytes: 0,
            tx_base: 0,
            tx_log: VecDeque::new(),
            counters: SenderCounters::default(),
            established_at: None,
            completed_at: None,
            cwnd_trace: 0,
        }
    }

    pub fn key(&self) -> FlowKey {
        self.key
    }

    pub fn state(&self) -> SenderState {
        self.state
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn snd_una(&self) -> u32 {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> u32 {
        self.snd_nxt
    }

    pub fn snd_max(&self) -> u32 {
        self.snd_max
    }

    pub fn isn(&self) -> u32 {
        self.isn
    }

    pub fn in_recovery(&self) -> bool {
        self.in_recovery
    }

    pub fn dup_acks(&self) -> u32 {
        self.dup_acks
    }

    pub fn dctcp_alpha(&self) -> f64 {
        self.dctcp_alpha
    }

    pub fn srtt_us(&self) -> Option<f64> {
        self.srtt
    }

    pub fn counters(&self) -> SenderCounters {
        self.counters
    }

    pub fn completed_at(&self) -> Option<SimTime> {
        self.completed_at
    }

    pub fn established_at(&self) -> Option<SimTime> {
        self.established_at
    }

    /// Deadline of the retransmission timer, if armed.
    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    /// Current (backed-off) retransmission timeout.
    pub fn rto(&self) -> SimTime {
        let shifted = self
            .rto_base
            .as_micros()
            .saturating_mul(1u64 << self.backoff.min(20));
        SimTime::from_micros(shifted.min(self.cfg.rto_max.as_micros()))
    }

    /// Rolling hash of every (time, cwnd) change, for trajectory comparison.
    pub fn cwnd_trace(&self) -> u64 {
        self.cwnd_trace
    }

    /// Payload bytes cumulatively acknowledged.
    pub fn acked_payload(&self) -> u64 {
        match self.state {
            SenderState::Idle | SenderState::SynSent => 0,
            _ => u64::from(seq_diff(self.snd_una, self.isn.wrapping_add(1))),
        }
    }

    /// Checksum the receiver must report after delivering the whole flow.
    pub fn expected_stream_digest(&self, bytes: u64) -> u64 {
        let mut h = 0;
        let mut off = 0;
        let mut idx = 0;
        while off < bytes {
            let len = (bytes - off).min(u64::from(MSS)) as u32;
            h = fold_digest(h, payload_digest(self.flow_seed, idx, len));
            off += u64::from(len);
            idx += 1;
        }
        h
    }

    fn data_start(&self) -> u32 {
        self.isn.wrapping_add(1)
    }

    fn flight_bytes(&self) -> u32 {
        seq_diff(self.snd_max, self.snd_una)
    }

    fn end_of_data(&self) -> Option<u32> {
        self.total_bytes
            .map(|t| self.data_start().wrapping_add(t as u32))
    }

    fn trace_cwnd(&mut self, now: SimTime) {
        let bits = self.cwnd.to_bits() ^ now.as_micros().rotate_left(17);
        self.cwnd_trace = fold_digest(self.cwnd_trace, bits);
    }

    fn tsval(now: SimTime) -> u32 {
        now.as_micros() as u32
    }

    fn base_segment(&self, now: SimTime) -> Segment {
        let mut s = Segment::new(self.key, Direction::ToReceiver);
        s.meta.conn = self.conn;
        if self.cfg.timestamps {
            s.ts = Some((Self::tsval(now), self.ts_recent.unwrap_or(0)));
        }
        s
    }

    /// Opens the connection (or, without a handshake, starts sending).
    pub fn start(&mut self, now: SimTime, out: &mut SenderOutput) {
        assert_eq!(self.state, SenderState::Idle, "sender already started");
        if self.cfg.handshake {
            self.state = SenderState::SynSent;
            self.snd_nxt = self.isn.wrapping_add(1);
            self.snd_max = self.snd_nxt;
            self.send_syn(now, out);
        } else {
            self.sack_ok = self.cfg.sack;
            self.establish(now, out);
        }
    }

    fn send_syn(&mut self, now: SimTime, out: &mut SenderOutput) {
        let mut s = self.base_segment(now);
        s.seq = self.isn;
        s.flags.syn = true;
        s.sack_permitted = self.cfg.sack;
        self.syn_tx += 1;
        s.meta.tx_count = self.syn_tx;
        self.syn_sent_at = now;
        self.rto_deadline = Some(now + self.rto());
        out.segments.push(s);
    }

    fn establish(&mut self, now: SimTime, out: &mut SenderOutput) {
        self.state = SenderState::Established;
        self.established_at = Some(now);
        self.snd_una = self.data_start();
        self.snd_nxt = self.snd_una;
        self.snd_max = self.snd_una;
        self.recover = self.snd_una;
        self.recover_guard = self.snd_una;
        self.ecn_guard = self.snd_una;
        self.dctcp_window_end = self.snd_una;
        self.rto_deadline = None;
        self.trace_cwnd(now);
        if self.total_bytes == Some(0) {
            self.complete(now, out);
            return;
        }
        self.try_send(now, out);
    }

    fn complete(&mut self, now: SimTime, out: &mut SenderOutput) {
        self.state = SenderState::Done;
        self.completed_at = Some(now);
        self.rto_deadline = None;
        let mut fin = self.base_segment(now);
        fin.seq = self.snd_max;
        fin.ack = self.irs.wrapping_add(1);
        fin.flags.fin = true;
        fin.flags.ack = true;
        out.segments.push(fin);
    }

    fn segment_index(&self, seq: u32) -> u64 {
        u64::from(seq_diff(seq, self.data_start())) / u64::from(MSS)
    }

    fn tx_info_mut(&mut self, seq: u32) -> Option<&mut TxInfo> {
        let idx = self.segment_index(seq);
        let off = idx.checked_sub(self.tx_base)? as usize;
        self.tx_log.get_mut(off)
    }

    fn tx_info(&self, seq: u32) -> Option<&TxInfo> {
        let idx = self.segment_index(seq);
        let off = idx.checked_sub(self.tx_base)? as usize;
        self.tx_log.get(off)
    }

    /// Marks the latest copy of the segment starting at `seq` as lost in
    /// the network. Instrumentation only; never affects control flow.
    /// `tx_count` identifies the copy; drops of superseded copies are
    /// ignored.
    pub fn note_dropped(&mut self, seq: u32, tx_count: u32) {
        if let Some(info) = self.tx_info_mut(seq) {
            if info.tx_count == tx_count {
                info.last_copy_dropped = true;
            }
        }
    }

    fn emit_data(&mut self, now: SimTime, seq: u32, out: &mut SenderOutput) -> u32 {
        let remaining = match self.end_of_data() {
            Some(end) => seq_diff(end, seq),
            None => MSS,
        };
        let len = remaining.min(MSS);
        debug_assert!(len > 0);
        let idx = self.segment_index(seq);
        let window_len = (self.cwnd.floor() as u32).max(1);
        let window_index = seq_diff(seq, self.snd_una) / MSS + 1;

        let pos = idx
            .checked_sub(self.tx_base)
            .expect("segment below snd_una") as usize;
        while self.tx_log.len() <= pos {
            self.tx_log.push_back(TxInfo {
                first_tx: now,
                last_tx: now,
                tx_count: 0,
                cwnd_at_first_tx: window_len,
                window_index,
                last_copy_dropped: false,
            });
        }
        let info = &mut self.tx_log[pos];
        if info.tx_count == 0 {
            info.first_tx = now;
            info.cwnd_at_first_tx = window_len;
            info.window_index = window_index.min(window_len);
        }
        info.tx_count += 1;
        info.last_tx = now;
        info.last_copy_dropped = false;
        let tx_count = info.tx_count;
        if tx_count > 1 {
            self.counters.retransmitted_segments += 1;
        }

        let mut s = self.base_segment(now);
        s.seq = seq;
        s.ack = self.irs.wrapping_add(1);
        s.flags.ack = true;
        s.payload_len = len;
        s.ect = self.cfg.variant.ecn_capable();
        if self.cwr_pending {
            s.cwr = true;
            self.cwr_pending = false;
        }
        s.meta.tx_count = tx_count;
        s.meta.window_index = window_index;
        s.meta.window_len = window_len;
        s.meta.last_of_flow = self.end_of_data() == Some(seq.wrapping_add(len));
        s.meta.payload_digest = payload_digest(self.flow_seed, idx, len);
        out.segments.push(s);

        if !self.cfg.timestamps && tx_count == 1 && self.timed.is_none() {
            self.timed = Some((seq.wrapping_add(len), now));
        }
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto());
        }
        len
    }

    fn try_send(&mut self, now: SimTime, out: &mut SenderOutput) {
        if self.state != SenderState::Established {
            return;
        }
        let cwnd_bytes = (self.cwnd * f64::from(MSS)) as u64;
        loop {
            if let Some(end) = self.end_of_data() {
                if !seq_lt(self.snd_nxt, end) {
                    break;
                }
            }
            let in_flight = u64::from(seq_diff(self.snd_nxt, self.snd_una));
            let len = match self.end_of_data() {
                Some(end) => seq_diff(end, self.snd_nxt).min(MSS),
                None => MSS,
            };
            if in_flight + u64::from(len) > cwnd_bytes.max(u64::from(MSS)) && in_flight > 0 {
                break;
            }
            let seq = self.snd_nxt;
            let sent = self.emit_data(now, seq, out);
            self.snd_nxt = seq.wrapping_add(sent);
            if seq_gt(self.snd_nxt, self.snd_max) {
                self.snd_max = self.snd_nxt;
            }
        }
    }

    fn retransmit_una(&mut self, now: SimTime, out: &mut SenderOutput) {
        let seq = self.snd_una;
        self.rto_deadline = Some(now + self.rto());
        let sent = self.emit_data(now, seq, out);
        if seq_lt(self.snd_nxt, seq.wrapping_add(sent)) {
            self.snd_nxt = seq.wrapping_add(sent);
        }
    }

    fn rtt_sample(&mut self, sample_us: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(sample_us);
                self.rttvar = sample_us / 2.0;
            }
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (srtt - sample_us).abs();
                self.srtt = Some(0.875 * srtt + 0.125 * sample_us);
            }
        }
        let srtt = self.srtt.expect("set above");
        let computed = srtt + (4.0 * self.rttvar).max(1.0);
        let rto = SimTime::from_micros(computed.ceil() as u64);
        self.rto_base = rto.max(self.cfg.rto_min).min(self.cfg.rto_max);
        self.backoff = 0;
    }

    fn record_episode(
        &mut self,
        now: SimTime,
        kind: RecoveryKind,
        rack_assisted: bool,
        out: &mut SenderOutput,
    ) {
        let (cwnd_at_loss_tx, loss_window_index, last_tx_time) = match self.tx_info(self.snd_una) {
            Some(i) => (i.cwnd_at_first_tx, i.window_index, i.last_tx),
            None => ((self.cwnd.floor() as u32).max(1), 1, now),
        };
        let first = self.segment_index(self.snd_una);
        let last = if self.snd_max == self.snd_una {
            first
        } else {
            self.segment_index(self.snd_max.wrapping_sub(1)) + 1
        };
        let lost_segments = (first..last)
            .filter_map(|i| self.tx_log.get((i - self.tx_base) as usize))
            .filter(|i| i.last_copy_dropped)
            .count() as u32;
        out.episodes.push(RetxEpisode {
            kind,
            rack_assisted,
            trigger_time: now,
            cwnd_at_loss_tx,
            loss_window_index,
            lost_segments,
            last_tx_time,
        });
    }

    /// Handles an ACK-bearing segment from the receiver (or a shim).
    pub fn on_ack(&mut self, now: SimTime, seg: &Segment, out: &mut SenderOutput) {
        if !seg.flags.ack {
            return;
        }
        match self.state {
            SenderState::Idle | SenderState::Done => return,
            SenderState::SynSent => {
                if seg.flags.syn && seg.ack == self.isn.wrapping_add(1) {
                    self.irs = seg.seq;
                    self.sack_ok = self.cfg.sack && seg.sack_permitted;
                    if let Some((tsval, tsecr)) = seg.ts {
                        self.ts_recent = Some(tsval);
                        if tsecr != 0 {
                            self.rtt_sample(f64::from(Self::tsval(now).wrapping_sub(tsecr)));
                        }
                    } else if self.syn_tx == 1 {
                        self.rtt_sample((now - self.syn_sent_at).as_micros() as f64);
                    }
                    self.establish(now, out);
                }
                return;
            }
            SenderState::Established => {}
        }
        if seg.flags.syn {
            return;
        }
        if let (Some((tsval, _)), Some(recent)) = (seg.ts, self.ts_recent) {
            if seq_lt(tsval, recent) {
                self.counters.paws_rejected += 1;
                return;
            }
        }
        if let Some((tsval, _)) = seg.ts {
            self.ts_recent = Some(tsval);
        }
        if seg.meta.spoofed {
            self.counters.spoofed_acks_received += 1;
        }

        let ack = seg.ack;
        if seq_gt(ack, self.snd_max) {
            self.counters.invalid_acks += 1;
            return;
        }
        if seq_gt(ack, self.snd_una) {
            self.on_new_ack(now, seg, out);
        } else if ack == self.snd_una
            && seg.payload_len == 0
            && !seg.flags.fin
            && self.snd_max != self.snd_una
        {
            self.on_dup_ack(now, seg, out);
        }
    }

    fn on_new_ack(&mut self, now: SimTime, seg: &Segment, out: &mut SenderOutput) {
        let ack = seg.ack;
        let acked = seq_diff(ack, self.snd_una);

        if self.cfg.timestamps {
            if let Some((_, tsecr)) = seg.ts {
                if tsecr != 0 {
                    self.rtt_sample(f64::from(Self::tsval(now).wrapping_sub(tsecr)));
                }
            }
        } else if let Some((end, sent)) = self.timed {
            if seq_ge(ack, end) {
                self.rtt_sample((now - sent).as_micros() as f64);
                self.timed = None;
            }
        }

        self.snd_una = ack;
        if seq_lt(self.snd_nxt, self.snd_una) {
            self.snd_nxt = self.snd_una;
        }
        let una_idx = self.segment_index(self.snd_una);
        while self.tx_base < una_idx && !self.tx_log.is_empty() {
            self.tx_log.pop_front();
            self.tx_base += 1;
        }
        if self.tx_log.is_empty() {
            self.tx_base = una_idx;
        }

        // ECN / DCTCP bookkeeping
        match self.cfg.variant {
            TcpVariant::Dctcp => {
                self.acked_bytes += u64::from(acked);
                if seg.ece {
                    self.ce_bytes += u64::from(acked);
                }
                if seq_ge(self.snd_una, self.dctcp_window_end) {
                    let frac = if self.acked_bytes > 0 {
                        self.ce_bytes as f64 / self.acked_bytes as f64
                    } else {
                        0.0
                    };
                    let g = self.cfg.dctcp_gain;
                    self.dctcp_alpha = ((1.0 - g) * self.dctcp_alpha + g * frac).clamp(0.0, 1.0);
                    self.acked_bytes = 0;
                    self.ce_bytes = 0;
                    self.dctcp_window_end = self.snd_max;
                }
            }
            TcpVariant::NewRenoEcn | TcpVariant::NewReno => {}
        }

        if self.in_recovery {
            if seq_ge(ack, self.recover) {
                let flight_segs = f64::from(self.flight_bytes()) / f64::from(MSS);
                self.cwnd = self.ssthresh.min(flight_segs.max(1.0) + 1.0).max(1.0);
                self.in_recovery = false;
                self.dup_acks = 0;
                self.dup_spoofed = false;
            } else {
                // partial ACK: retransmit the next hole, deflate the window
                self.retransmit_una(now, out);
                let acked_segs = f64::from(acked) / f64::from(MSS);
                self.cwnd = (self.cwnd - acked_segs + 1.0).max(1.0);
                self.rto_deadline = Some(now + self.rto());
            }
        } else {
            self.dup_acks = 0;
            self.dup_spoofed = false;
            if self.cwnd < self.ssthresh {
                self.cwnd += 1.0;
            } else {
                self.cwnd += 1.0 / self.cwnd;
            }
            if seg.ece {
                self.react_to_ece();
            }
        }
        self.trace_cwnd(now);

        if self.end_of_data() == Some(self.snd_una) {
            self.complete(now, out);
            return;
        }
        if self.snd_una == self.snd_max || self.snd_nxt == self.snd_una {
            // nothing outstanding, or the head is about to be resent and
            // arms the timer itself
            self.rto_deadline = None;
        } else if !self.in_recovery {
            // the timer tracks the oldest outstanding segment
            let head = self.tx_info(self.snd_una).map_or(now, |i| i.last_tx);
            self.rto_deadline = Some(head + self.rto());
        }
        self.try_send(now, out);
    }

    fn react_to_ece(&mut self) {
        if !seq_ge(self.snd_una, self.ecn_guard) {
            return;
        }
        match self.cfg.variant {
            TcpVariant::NewReno => return,
            TcpVariant::NewRenoEcn => {
                self.ssthresh = (self.cwnd / 2.0).max(2.0);
                self.cwnd = self.ssthresh;
            }
            TcpVariant::Dctcp => {
                self.cwnd = (self.cwnd * (1.0 - self.dctcp_alpha / 2.0)).max(1.0);
                self.ssthresh = self.cwnd.max(2.0);
            }
        }
        self.counters.ecn_reductions += 1;
        self.ecn_guard = self.snd_max;
        self.cwr_pending = true;
    }

    fn on_dup_ack(&mut self, now: SimTime, seg: &Segment, out: &mut SenderOutput) {
        // With SACK in use, a duplicate ACK only counts if it reports data
        // above the hole.
        if self.sack_ok && seg.sack_blocks().is_empty() {
            return;
        }
        self.counters.dupacks_received += 1;
        self.dup_acks += 1;
        if seg.meta.spoofed {
            self.dup_spoofed = true;
        }
        if self.in_recovery {
            self.cwnd += 1.0;
            self.trace_cwnd(now);
            self.try_send(now, out);
            return;
        }
        if self.dup_acks == self.cfg.dupack_threshold && seq_ge(self.snd_una, self.recover_guard) {
            let rack = self.dup_spoofed;
            self.counters.frr_events += 1;
            if rack {
                self.counters.rack_assisted_frr_events += 1;
            }
            self.record_episode(now, RecoveryKind::Frr, rack, out);
            let flight_segs = f64::from(self.flight_bytes()) / f64::from(MSS);
            self.ssthresh = (flight_segs / 2.0).max(2.0);
            self.cwnd = self.ssthresh + f64::from(self.cfg.dupack_threshold);
            self.in_recovery = true;
            self.recover = self.snd_max;
            self.recover_guard = self.snd_max;
            self.retransmit_una(now, out);
            self.trace_cwnd(now);
            self.try_send(now, out);
        }
    }

    /// Retransmission timer expiry. Ignored unless the armed deadline has
    /// been reached.
    pub fn on_rto(&mut self, now: SimTime, out: &mut SenderOutput) {
        match self.rto_deadline {
            Some(d) if d <= now => {}
            _ => return,
        }
        match self.state {
            SenderState::SynSent => {
                self.counters.syn_timeouts += 1;
                self.backoff += 1;
                self.send_syn(now, out);
                return;
            }
            SenderState::Established => {}
            _ => {
                self.rto_deadline = None;
                return;
            }
        }
        if self.snd_una == self.snd_max {
            self.rto_deadline = None;
            return;
        }
        self.counters.rto_events += 1;
        self.record_episode(now, RecoveryKind::Rto, false, out);
        let flight_segs = f64::from(self.flight_bytes()) / f64::from(MSS);
        self.ssthresh = (flight_segs / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.in_recovery = false;
        self.dup_acks = 0;
        self.dup_spoofed = false;
        self.recover_guard = self.snd_max;
        self.recover = self.snd_max;
        self.timed = None;
        self.backoff += 1;
        self.snd_nxt = self.snd_una;
        self.rto_deadline = Some(now + self.rto());
        self.trace_cwnd(now);
        self.try_send(now, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ISN: u32 = 1_000;
    const IRS: u32 = 50_000;

    fn key() -> FlowKey {
        FlowKey {
            src_ip: 1,
            dst_ip: 2,
            src_port: 40_000,
            dst_port: 80,
        }
    }

    fn sender(cfg: TcpConfig, bytes: Option<u64>) -> (TcpSender, SenderOutput) {
        let mut s = TcpSender::new(cfg, key(), 0, ISN, bytes, 7);
        let mut out = SenderOutput::default();
        s.start(SimTime::ZERO, &mut out);
        (s, out)
    }

    fn ack_seg(ack: u32) -> Segment {
        let mut a = Segment::new(key().reversed(), Direction::ToSender);
        a.seq = IRS + 1;
        a.ack = ack;
        a.flags.ack = true;
        a
    }

    fn synack() -> Segment {
        let mut a = ack_seg(ISN + 1);
        a.seq = IRS;
        a.flags.syn = true;
        a
    }

    fn data_start() -> u32 {
        ISN + 1
    }

    fn established(cfg: TcpConfig, bytes: Option<u64>) -> (TcpSender, SenderOutput) {
        let (mut s, mut out) = sender(cfg, bytes);
        out.clear();
        s.on_ack(SimTime::from_micros(100), &synack(), &mut out);
        (s, out)
    }

    fn no_ts() -> TcpConfig {
        TcpConfig {
            timestamps: false,
            ..TcpConfig::default()
        }
    }

    #[test]
    fn handshake_then_initial_window() {
        let (s, out) = sender(no_ts(), Some(14_600));
        assert_eq!(out.segments.len(), 1);
        assert!(out.segments[0].flags.syn);
        assert_eq!(s.state(), SenderState::SynSent);
        let (s, out) = established(no_ts(), Some(14_600));
        assert_eq!(s.state(), SenderState::Established);
        assert_eq!(out.segments.len(), 10);
        assert!(out.segments.iter().all(|x| x.payload_len == MSS));
        assert!(out.segments[9].meta.last_of_flow);
    }

    #[test]
    fn remainder_goes_in_a_short_tail_segment() {
        let cfg = TcpConfig {
            initial_window: 20,
            ..no_ts()
        };
        let (_, out) = established(cfg, Some(14_601));
        assert_eq!(out.segments.len(), 11);
        assert_eq!(out.segments[10].payload_len, 1);
    }

    #[test]
    fn zero_byte_flow_completes_on_establishment() {
        let (s, out) = established(no_ts(), Some(0));
        assert_eq!(s.state(), SenderState::Done);
        assert_eq!(s.completed_at(), Some(SimTime::from_micros(100)));
        assert!(out.segments.iter().all(|x| x.payload_len == 0));
        assert!(out.segments.iter().any(|x| x.flags.fin));
    }

    #[test]
    fn slow_start_and_avoidance() {
        let (mut s, mut out) = established(no_ts(), None);
        out.clear();
        s.on_ack(
            SimTime::from_micros(200),
            &ack_seg(data_start() + MSS),
            &mut out,
        );
        assert_eq!(s.cwnd(), 11.0);
        assert_eq!(
            out.segments.len(),
            2,
            "one ACK releases two segments in slow start"
        );
        s.ssthresh = 5.0;
        s.on_ack(
            SimTime::from_micros(210),
            &ack_seg(data_start() + 2 * MSS),
            &mut out,
        );
        assert!((s.cwnd() - (11.0 + 1.0 / 11.0)).abs() < 1e-12);
    }

    #[test]
    fn third_dupack_triggers_one_fast_retransmit() {
        let (mut s, mut out) = established(no_ts(), None);
        out.clear();
        let t = SimTime::from_micros(300);
        for i in 0..5 {
            s.on_ack(t, &ack_seg(data_start()), &mut out);
            let rtx: Vec<_> = out
                .segments
                .iter()
                .filter(|x| x.meta.tx_count > 1)
                .collect();
            if i < 2 {
                assert!(rtx.is_empty());
            } else {
                assert_eq!(rtx.len(), 1, "exactly one fast retransmit");
                assert_eq!(rtx[0].seq, data_start());
            }
        }
        assert!(s.in_recovery());
        // flight 10 segs -> ssthresh 5, cwnd 5+3 then +1 per extra dupACK
        assert_eq!(s.ssthresh(), 5.0);
        assert_eq!(s.cwnd(), 10.0);
        assert_eq!(s.counters().frr_events, 1);
        assert_eq!(out.episodes.len(), 1);
        assert_eq!(out.episodes[0].kind, RecoveryKind::Frr);
    }

    #[test]
    fn spoofed_and_real_dupacks_are_equivalent() {
        let (mut s, mut out) = established(no_ts(), None);
        out.clear();
        let t = SimTime::from_micros(300);
        s.on_ack(t, &ack_seg(data_start()), &mut out);
        let mut spoof = ack_seg(data_start());
        spoof.meta.spoofed = true;
        s.on_ack(t, &spoof, &mut out);
        s.on_ack(t, &spoof, &mut out);
        assert_eq!(
            out.segments.iter().filter(|x| x.meta.tx_count > 1).count(),
            1
        );
        let c = s.counters();
        assert_eq!(c.frr_events, 1);
        assert_eq!(c.rack_assisted_frr_events, 1);
        assert_eq!(c.spoofed_acks_received, 2);
    }

    #[test]
    fn partial_ack_retransmits_next_hole_and_full_ack_exits() {
        let (mut s, mut out) = established(no_ts(), Some(14_600));
        out.clear();
        let t = SimTime::from_micros(300);
        for _ in 0..3 {
            s.on_ack(t, &ack_seg(data_start()), &mut out);
        }
        out.clear();
        s.on_ack(t, &ack_seg(data_start() + 3 * MSS), &mut out);
        assert!(s.in_recovery());
        assert_eq!(out.segments[0].seq, data_start() + 3 * MSS);
        assert_eq!(out.segments[0].meta.tx_count, 2);
        s.on_ack(t, &ack_seg(data_start() + 10 * MSS), &mut out);
        assert!(!s.in_recovery());
        assert_eq!(s.state(), SenderState::Done);
    }

    #[test]
    fn rto_backoff_doubles() {
        let cfg = TcpConfig {
            initial_window: 2,
            ..TcpConfig::default()
        };
        let (mut s, mut out) = established(cfg, Some(2 * u64::from(MSS)));
        assert_eq!(s.rto(), SimTime::from_millis(200));
        let mut t = s.rto_deadline().unwrap();
        let mut gaps = Vec::new();
        let mut last = SimTime::from_micros(100);
        for _ in 0..3 {
            out.clear();
            s.on_rto(t, &mut out);
            assert_eq!(out.segments.len(), 1);
            gaps.push((t - last).as_micros());
            last = t;
            t = s.rto_deadline().unwrap();
        }
        assert_eq!(gaps, vec![200_000, 400_000, 800_000]);
        assert_eq!(s.counters().rto_events, 3);
        assert_eq!(s.cwnd(), 1.0);
    }

    #[test]
    fn rto_ignored_when_deadline_moved() {
        let (mut s, mut out) = established(no_ts(), Some(14_600));
        let first = s.rto_deadline().unwrap();
        out.clear();
        s.on_ack(first, &ack_seg(data_start() + MSS), &mut out);
        out.clear();
        s.on_rto(first, &mut out);
        assert!(out.segments.is_empty());
        assert_eq!(s.counters().rto_events, 0);
    }

    #[test]
    fn late_ack_after_timeout_rearms_from_the_resend() {
        let (mut s, mut out) = established(TcpConfig::default(), Some(14_600));
        let t = s.rto_deadline().unwrap();
        s.on_rto(t, &mut out);
        // the original copy of segment 1 is acknowledged after the timeout,
        // with a fresh RTT sample clearing the backoff
        let later = t + SimTime::from_micros(50);
        let mut a = ack_seg(data_start() + MSS);
        a.ts = Some((1, TcpSender::tsval(t)));
        out.clear();
        s.on_ack(later, &a, &mut out);
        let d = s.rto_deadline().unwrap();
        assert!(d > later, "timer armed in the past: {d:?}");
        assert_eq!(s.counters().rto_events, 1);
    }

    #[test]
    fn ack_beyond_sent_data_is_ignored() {
        let (mut s, mut out) = established(no_ts(), Some(14_600));
        out.clear();
        s.on_ack(
            SimTime::from_micros(200),
            &ack_seg(data_start() + 100 * MSS),
            &mut out,
        );
        assert_eq!(s.snd_una(), data_start());
        assert_eq!(s.counters().invalid_acks, 1);
    }

    #[test]
    fn dctcp_alpha_decays_without_marks() {
        let cfg = TcpConfig {
            variant: TcpVariant::Dctcp,
            ..no_ts()
        };
        let (mut s, mut out) = established(cfg, None);
        let w0 = s.cwnd();
        out.clear();
        // first ACK closes the (empty) initial observation window
        s.on_ack(
            SimTime::from_micros(200),
            &ack_seg(data_start() + MSS),
            &mut out,
        );
        let a1 = s.dctcp_alpha();
        assert!((a1 - 15.0 / 16.0).abs() < 1e-12);
        // ack the rest of the first window: one more alpha update, no cut
        s.on_ack(
            SimTime::from_micros(300),
            &ack_seg(data_start() + 11 * MSS),
            &mut out,
        );
        assert!((s.dctcp_alpha() - a1 * 15.0 / 16.0).abs() < 1e-12);
        assert!(s.cwnd() > w0);
    }

    #[test]
    fn dctcp_cut_scales_with_alpha() {
        let cfg = TcpConfig {
            variant: TcpVariant::Dctcp,
            dctcp_alpha_init: 0.5,
            dctcp_gain: 0.0,
            ..no_ts()
        };
        let (mut s, mut out) = established(cfg, None);
        out.clear();
        let mut a = ack_seg(data_start() + MSS);
        a.ece = true;
        s.on_ack(SimTime::from_micros(200), &a, &mut out);
        // slow-start increment to 11, then cut by alpha/2 = 0.25
        assert!((s.cwnd() - 11.0 * 0.75).abs() < 1e-12);
        assert!(s.cwr_pending, "next data segment must carry CWR");
    }

    #[test]
    fn ecn_reno_halves_once_per_window() {
        let cfg = TcpConfig {
            variant: TcpVariant::NewRenoEcn,
            ..no_ts()
        };
        let (mut s, mut out) = established(cfg, None);
        out.clear();
        let mut a = ack_seg(data_start() + MSS);
        a.ece = true;
        s.on_ack(SimTime::from_micros(200), &a, &mut out);
        assert_eq!(s.cwnd(), 5.5);
        let mut b = ack_seg(data_start() + 2 * MSS);
        b.ece = true;
        s.on_ack(SimTime::from_micros(210), &b, &mut out);
        assert!(
            s.cwnd() > 5.5,
            "second ECE in the same window must not cut again"
        );
    }

    #[test]
    fn sack_dupack_without_blocks_is_not_counted() {
        let cfg = TcpConfig {
            sack: true,
            ..no_ts()
        };
        let (mut s, mut out) = sender(cfg, None);
        out.clear();
        let mut sa = synack();
        sa.sack_permitted = true;
        s.on_ack(SimTime::from_micros(100), &sa, &mut out);
        for _ in 0..3 {
            s.on_ack(SimTime::from_micros(300), &ack_seg(data_start()), &mut out);
        }
        assert_eq!(s.dup_acks(), 0);
        let mut d = ack_seg(data_start());
        d.push_sack(data_start() + MSS, data_start() + MSS + 40);
        for _ in 0..3 {
            s.on_ack(SimTime::from_micros(300), &d, &mut out);
        }
        assert!(s.in_recovery());
    }

    #[test]
    fn timestamp_rtt_sets_rto_floor() {
        let (s, _) = established(TcpConfig::default(), Some(14_600));
        assert_eq!(s.srtt_us(), Some(100.0), "falls back to timing the SYN");
        let (mut s2, mut out) = sender(TcpConfig::default(), Some(14_600));
        out.clear();
        let mut sa = synack();
        sa.ts = Some((5, 1));
        s2.on_ack(SimTime::from_micros(101), &sa, &mut out);
        assert_eq!(s2.srtt_us(), Some(100.0));
        assert_eq!(s2.rto(), SimTime::from_millis(200));
    }

    #[test]
    fn paws_rejects_older_timestamps() {
        let (mut s, mut out) = established(TcpConfig::default(), None);
        let mut a = ack_seg(data_start() + MSS);
        a.ts = Some((500, 0));
        s.on_ack(SimTime::from_micros(200), &a, &mut out);
        let mut old = ack_seg(data_start() + 2 * MSS);
        old.ts = Some((400, 0));
        s.on_ack(SimTime::from_micros(210), &old, &mut out);
        assert_eq!(s.counters().paws_rejected, 1);
        assert_eq!(s.snd_una(), data_start() + MSS);
    }
}
