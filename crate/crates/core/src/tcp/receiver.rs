use std::collections::BTreeMap;

use crate::sim::SimTime;

use super::config::{TcpConfig, TcpVariant};
use super::segment::{fold_digest, Direction, FlowKey, Segment};
use super::seq::{seq_diff, seq_le, seq_lt};

#[derive(Debug, Clone, Copy)]
struct OooSegment {
    len: u32,
    digest: u64,
    /// Arrival order, used to list SACK blocks most recent first.
    recency: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReceiverCounters {
    pub data_segments: u32,
    pub duplicate_segments: u32,
    pub out_of_order_segments: u32,
    pub acks_sent: u32,
    pub dupacks_sent: u32,
}

/// Receiving half of a connection. Produces one ACK per data segment
/// unless delayed ACKs are enabled.
#[derive(Debug)]
pub struct TcpReceiver {
    cfg: TcpConfig,
    /// Key of segments sent by this receiver (towards the data sender).
    key: FlowKey,
    conn: u32,
    isn: u32,
    irs: Option<u32>,
    rcv_nxt: u32,
    sack_ok: bool,
    ooo: BTreeMap<u64, OooSegment>,
    arrivals: u64,
    ts_recent: Option<u32>,
    ece_latched: bool,
    last_ce: bool,
    unacked_segments: u32,
    delack_deadline: Option<SimTime>,
    fin_received: bool,
    delivered_bytes: u64,
    stream_digest: u64,
    counters: ReceiverCounters,
}

impl TcpReceiver {
    pub fn new(cfg: TcpConfig, key: FlowKey, conn: u32, isn: u32) -> Self {
        TcpReceiver {
            cfg,
            key,
            conn,
            isn,
            irs: None,
            rcv_nxt: 0,
            sack_ok: false,
            ooo: BTreeMap::new(),
            arrivals: 0,
            ts_recent: None,
            ece_latched: false,
            last_ce: false,
            unacked_segments: 0,
            delack_deadline: None,
            fin_received: false,
            delivered_bytes: 0,
            stream_digest: 0,
            counters: ReceiverCounters::default(),
        }
    }

    /// Skips the handshake: data from `peer_isn + 1` is expected next.
    pub fn accept(&mut self, peer_isn: u32, sack: bool) {
        self.irs = Some(peer_isn);
        self.rcv_nxt = peer_isn.wrapping_add(1);
        self.sack_ok = sack && self.cfg.sack;
    }

    pub fn rcv_nxt(&self) -> u32 {
        self.rcv_nxt
    }

    pub fn delivered_bytes(&self) -> u64 {
        self.delivered_bytes
    }

    /// Fold of the in-order payload digests delivered so far.
    pub fn stream_digest(&self) -> u64 {
        self.stream_digest
    }

    pub fn fin_received(&self) -> bool {
        self.fin_received
    }

    pub fn counters(&self) -> ReceiverCounters {
        self.counters
    }

    pub fn delayed_ack_deadline(&self) -> Option<SimTime> {
        self.delack_deadline
    }

    /// Out-of-order byte ranges held above `rcv_nxt`, coalesced, as
    /// absolute sequence numbers in ascending order.
    pub fn ooo_ranges(&self) -> Vec<(u32, u32)> {
        self.coalesced()
            .into_iter()
            .map(|(l, r, _)| (l, r))
            .collect()
    }

    fn data_start(&self) -> u32 {
        self.irs.map(|i| i.wrapping_add(1)).unwrap_or(0)
    }

    fn offset_of(&self, seq: u32) -> u64 {
        u64::from(seq_diff(seq, self.data_start()))
    }

    fn seq_of(&self, off: u64) -> u32 {
        self.data_start().wrapping_add(off as u32)
    }

    fn coalesced(&self) -> Vec<(u32, u32, u64)> {
        let mut out: Vec<(u64, u64, u64)> = Vec::new();
        for (&off, s) in &self.ooo {
            let end = off + u64::from(s.len);
            match out.last_mut() {
                Some(last) if last.1 >= off => {
                    last.1 = last.1.max(end);
                    last.2 = last.2.max(s.recency);
                }
                _ => out.push((off, end, s.recency)),
            }
        }
        out.into_iter()
            .map(|(l, r, rec)| (self.seq_of(l), self.seq_of(r), rec))
            .collect()
    }

    fn build_ack(&mut self, now: SimTime, dup: bool) -> Segment {
        let mut a = Segment::new(self.key, Direction::ToSender);
        a.meta.conn = self.conn;
        a.seq = self.isn.wrapping_add(1);
        a.ack = self.rcv_nxt;
        a.flags.ack = true;
        if self.cfg.timestamps {
            a.ts = Some((now.as_micros() as u32, self.ts_recent.unwrap_or(0)));
        }
        a.ece = match self.cfg.variant {
            TcpVariant::NewReno => false,
            TcpVariant::NewRenoEcn => self.ece_latched,
            TcpVariant::Dctcp => self.last_ce,
        };
        if self.sack_ok {
            let mut blocks = self.coalesced();
            blocks.sort_by_key(|b| std::cmp::Reverse(b.2));
            for (l, r, _) in blocks.into_iter().take(3) {
                a.push_sack(l, r);
            }
        }
        self.counters.acks_sent += 1;
        if dup {
            self.counters.dupacks_sent += 1;
        }
        self.unacked_segments = 0;
        self.delack_deadline = None;
        a
    }

    fn syn_ack(&mut self, now: SimTime, syn: &Segment) -> Segment {
        let mut a = self.build_ack(now, false);
        a.seq = self.isn;
        a.flags.syn = true;
        a.sack_permitted = self.sack_ok;
        if let Some((tsval, _)) = syn.ts {
            if self.cfg.timestamps {
                a.ts = Some((now.as_micros() as u32, tsval));
            }
        }
        self.counters.acks_sent -= 1;
        a
    }

    /// Processes a segment from the data sender; returns the ACK to send,
    /// if any is due now.
    pub fn on_segment(&mut self, now: SimTime, seg: &Segment) -> Option<Segment> {
        if seg.flags.syn {
            if self.irs.is_none() {
                self.irs = Some(seg.seq);
                self.rcv_nxt = seg.seq.wrapping_add(1);
                self.sack_ok = self.cfg.sack && seg.sack_permitted;
            }
            if let Some((tsval, _)) = seg.ts {
                self.ts_recent = Some(tsval);
            }
            return Some(self.syn_ack(now, seg));
        }
        self.irs?;

        if let Some((tsval, _)) = seg.ts {
            if seq_le(seg.seq, self.rcv_nxt) {
                self.ts_recent = Some(tsval);
            }
        }
        match self.cfg.variant {
            TcpVariant::NewReno => {}
            TcpVariant::NewRenoEcn => {
                if seg.cwr {
                    self.ece_latched = false;
                }
                if seg.ce {
                    self.ece_latched = true;
                }
            }
            TcpVariant::Dctcp => {
                self.last_ce = seg.ce;
            }
        }

        if seg.flags.fin {
            if seg.seq == self.rcv_nxt {
                self.fin_received = true;
            }
            return None;
        }
        if seg.payload_len == 0 {
            return None;
        }
        self.counters.data_segments += 1;

        let end = seg.seq.wrapping_add(seg.payload_len);
        if seq_le(end, self.rcv_nxt) {
            self.counters.duplicate_segments += 1;
            return Some(self.build_ack(now, true));
        }
        if seg.seq == self.rcv_nxt {
            // Filling a hole is acknowledged at once.
            let filled_hole = !self.ooo.is_empty();
            self.deliver(seg.payload_len, seg.meta.payload_digest);
            self.drain_ooo();
            if self.cfg.delayed_ack && !filled_hole && !seg.ce && !self.last_ce {
                self.unacked_segments += 1;
                if self.unacked_segments < 2 {
                    if self.delack_deadline.is_none() {
                        self.delack_deadline = Some(now + self.cfg.delayed_ack_timeout);
                    }
                    return None;
                }
            }
            return Some(self.build_ack(now, false));
        }
        if seq_lt(seg.seq, self.rcv_nxt) {
            // Straddles rcv_nxt: segment boundaries are stable, so treat as duplicate.
            self.counters.duplicate_segments += 1;
            return Some(self.build_ack(now, true));
        }
        self.counters.out_of_order_segments += 1;
        self.arrivals += 1;
        let off = self.offset_of(seg.seq);
        let recency = self.arrivals;
        self.ooo
            .entry(off)
            .and_modify(|s| s.recency = recency)
            .or_insert(OooSegment {
                len: seg.payload_len,
                digest: seg.meta.payload_digest,
                recency,
            });
        Some(self.build_ack(now, true))
    }

    /// Flushes a pending delayed ACK once its deadline is reached.
    pub fn on_delayed_ack_timer(&mut self, now: SimTime) -> Option<Segment> {
        match self.delack_deadline {
            Some(d) if d <= now && self.unacked_segments > 0 => Some(self.build_ack(now, false)),
            _ => None,
        }
    }

    fn deliver(&mut self, len: u32, digest: u64) {
        self.rcv_nxt = self.rcv_nxt.wrapping_add(len);
        self.delivered_bytes += u64::from(len);
        self.stream_digest = fold_digest(self.stream_digest, digest);
    }

    fn drain_ooo(&mut self) {
        loop {
            let next = self.offset_of(self.rcv_nxt);
            // Discard anything now wholly below rcv_nxt.
            while let Some((&off, s)) = self.ooo.first_key_value() {
                if off < next && off + u64::from(s.len) <= next {
                    self.ooo.pop_first();
                } else {
                    break;
                }
            }
            match self.ooo.remove(&next) {
                Some(s) => self.deliver(s.len, s.digest),
                None => break,
            }
        }
    }
}
