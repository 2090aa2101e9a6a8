//! Host-side recovery shim. It watches a sender host's TCP traffic, and when
//! a small flow's ACK clock stalls for longer than a few RTTs it injects
//! duplicate ACKs so the sender fast-retransmits instead of waiting for its
//! retransmission timer.

mod table;

pub use table::{FlowEntry, FlowTable, Lookup};

use crate::sim::{SimTime, StreamRng};
use crate::tcp::{seq_diff, seq_gt, seq_lt, Direction, FlowKey, Segment, MSS};

/// Bytes covered by the fake SACK block attached to spoofed ACKs.
pub const FAKE_SACK_BYTES: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShimConfig {
    pub enabled: bool,
    /// RTTs to wait before spoofing.
    pub alpha: f64,
    /// Cumulative acked bytes after which a flow is left alone; `None` is
    /// infinite.
    pub gamma: Option<u64>,
    pub phi: u32,
    pub rto_min: SimTime,
    pub tick: SimTime,
    pub inactivity_timeout: SimTime,
    /// RTT assumed until the first timestamp sample.
    pub default_rtt: SimTime,
    pub table_capacity: usize,
    /// Keep a per-event log for offline checks.
    pub record_trace: bool,
}

impl Default for ShimConfig {
    fn default() -> Self {
        ShimConfig {
            enabled: true,
            alpha: 10.0,
            gamma: None,
            phi: 3,
            rto_min: SimTime::from_millis(200),
            tick: SimTime::from_millis(1),
            inactivity_timeout: SimTime::from_secs(1),
            default_rtt: SimTime::from_micros(100),
            table_capacity: 1024,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    PassRewritten,
    Drop,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShimCounters {
    pub spoofed_acks_sent: u64,
    pub dupacks_dropped: u64,
    pub episodes_opened: u64,
    pub episodes_stopped_at_rtomin: u64,
    pub flows_tracked: u64,
    pub flows_marked_long_lived: u64,
    pub untracked_flows: u64,
}

impl ShimCounters {
    pub fn add(&mut self, o: &ShimCounters) {
        self.spoofed_acks_sent += o.spoofed_acks_sent;
        self.dupacks_dropped += o.dupacks_dropped;
        self.episodes_opened += o.episodes_opened;
        self.episodes_stopped_at_rtomin += o.episodes_stopped_at_rtomin;
        self.flows_tracked += o.flows_tracked;
        self.flows_marked_long_lived += o.flows_marked_long_lived;
        self.untracked_flows += o.untracked_flows;
    }

    /// `name=value` lines in a fixed order.
    pub fn to_kv(&self) -> String {
        format!(
            "spoofed_acks_sent={}\ndupacks_dropped={}\nepisodes_opened={}\n\
             episodes_stopped_at_rtomin={}\nflows_tracked={}\nflows_marked_long_lived={}\n\
             untracked_flows={}\n",
            self.spoofed_acks_sent,
            self.dupacks_dropped,
            self.episodes_opened,
            self.episodes_stopped_at_rtomin,
            self.flows_tracked,
            self.flows_marked_long_lived,
            self.untracked_flows
        )
    }
}

/// Entry of the optional shim event log. Keys are sender-side
/// (outgoing-direction) 4-tuples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShimTrace {
    EpisodeOpened {
        key: FlowKey,
        at: SimTime,
        /// max(ack_time, active_time) when the episode opened.
        since: SimTime,
        /// RTT estimate the timeout was drawn from.
        rtt_us: f64,
        beta_us: f64,
        burst: u32,
        episode: u64,
    },
    Spoof {
        key: FlowKey,
        at: SimTime,
        episode: u64,
    },
    DupAckDropped {
        key: FlowKey,
        at: SimTime,
    },
    NewAck {
        key: FlowKey,
        at: SimTime,
        ack: u32,
    },
    LongLived {
        key: FlowKey,
        at: SimTime,
    },
    Stopped {
        key: FlowKey,
        at: SimTime,
    },
}

#[derive(Debug)]
pub struct Shim {
    cfg: ShimConfig,
    table: FlowTable,
    counters: ShimCounters,
    trace: Vec<ShimTrace>,
    episode_ids: Vec<u64>,
}

impl Shim {
    pub fn new(cfg: ShimConfig) -> Self {
        assert!(cfg.alpha >= 0.0, "alpha must be non-negative");
        assert!(cfg.tick.as_micros() >= 1, "tick must be at least 1us");
        Shim {
            table: FlowTable::new(cfg.table_capacity),
            episode_ids: vec![0; cfg.table_capacity],
            cfg,
            counters: ShimCounters::default(),
            trace: Vec::new(),
        }
    }

    pub fn config(&self) -> &ShimConfig {
        &self.cfg
    }

    pub fn set_enabled(&mut self, on: bool) {
        self.cfg.enabled = on;
    }

    pub fn counters(&self) -> ShimCounters {
        self.counters
    }

    pub fn trace(&self) -> &[ShimTrace] {
        &self.trace
    }

    pub fn entry(&self, key: &FlowKey) -> Option<&FlowEntry> {
        self.table.find(key).map(|i| self.table.get(i))
    }

    fn log(&mut self, t: ShimTrace) {
        if self.cfg.record_trace {
            self.trace.push(t);
        }
    }

    /// Segment leaving a local sender. Never modified.
    pub fn on_outgoing(&mut self, now: SimTime, seg: &Segment) {
        if !self.cfg.enabled {
            return;
        }
        let fresh_syn = seg.flags.syn && !seg.flags.ack;
        let existing = self.table.find(&seg.key);
        let idx = match existing {
            Some(i) => i,
            None if fresh_syn || seg.is_data() => match self.table.find_or_insert(&seg.key) {
                Lookup::Created(i) | Lookup::Existing(i) => i,
                Lookup::Full => {
                    self.counters.untracked_flows += 1;
                    return;
                }
            },
            None => return,
        };

        if seg.flags.fin {
            let e = self.table.get_mut(idx);
            e.active = false;
            e.soft_reset();
            return;
        }
        let inactive = !self.table.get(idx).active;
        if fresh_syn || (inactive && seg.is_data()) {
            let prev_isn = self.table.get(idx).isn;
            let known = existing.is_some();
            self.table.reset_entry(idx);
            let e = self.table.get_mut(idx);
            e.active = true;
            e.ack_time = now;
            e.active_time = now;
            if fresh_syn {
                e.isn = seg.seq;
                e.last_ack_no = seg.seq;
                e.last_seq_sent = seg.seq;
                e.sack_seen = seg.sack_permitted;
            } else {
                e.isn = if known {
                    prev_isn
                } else {
                    seg.seq.wrapping_sub(1)
                };
                e.last_ack_no = seg.seq;
                e.last_seq_sent = seg.seq;
            }
            e.ts_recent = None;
            self.counters.flows_tracked += 1;
        }
        if seg.is_data() {
            let e = self.table.get_mut(idx);
            let end = seg.end_seq();
            if seq_gt(end, e.last_seq_sent) {
                e.last_seq_sent = end;
            }
            e.active_time = now;
            e.halted = false;
        }
    }

    /// ACK arriving from the network for a local sender.
    pub fn on_incoming(&mut self, now: SimTime, seg: &mut Segment) -> Verdict {
        if !self.cfg.enabled || !seg.flags.ack {
            return Verdict::Pass;
        }
        let key = seg.key.reversed();
        let Some(idx) = self.table.find(&key) else {
            return Verdict::Pass;
        };
        let gamma = self.cfg.gamma;
        let e = self.table.get_mut(idx);
        if e.long_lived || !e.active {
            return Verdict::Pass;
        }
        if seg.flags.syn {
            e.sack_seen = e.sack_seen && seg.sack_permitted;
        }
        if let Some(ts) = seg.ts {
            e.ts_recent = Some(ts);
        }

        let mut verdict = Verdict::Pass;
        if seq_gt(seg.ack, e.last_ack_no) {
            if let Some((_, tsecr)) = seg.ts {
                let raw = (now.as_micros() as u32).wrapping_sub(tsecr);
                if tsecr != 0 && raw < 1 << 31 {
                    let sample = f64::from(raw);
                    e.rtt_est = Some(match e.rtt_est {
                        None => sample,
                        Some(r) => 0.875 * r + 0.125 * sample,
                    });
                }
            }
            e.last_ack_no = seg.ack;
            e.dup_ack_nr = 0;
            e.ack_time = now;
            e.soft_reset();
            e.halted = false;
            let acked = u64::from(seq_diff(e.last_ack_no, e.isn));
            let crossed = gamma.is_some_and(|g| acked >= g);
            if crossed {
                e.long_lived = true;
                self.counters.flows_marked_long_lived += 1;
            }
            self.log(ShimTrace::NewAck {
                key,
                at: now,
                ack: seg.ack,
            });
            if crossed {
                self.log(ShimTrace::LongLived { key, at: now });
            }
        } else if seg.ack == e.last_ack_no && seg.is_pure_ack() {
            e.dup_ack_nr += 1;
            if e.episode_open() {
                self.counters.dupacks_dropped += 1;
                self.log(ShimTrace::DupAckDropped { key, at: now });
                return Verdict::Drop;
            }
            if e.sack_seen && seg.sack_blocks().is_empty() {
                let l = e.last_ack_no;
                seg.push_sack(l.wrapping_add(MSS), l.wrapping_add(MSS + FAKE_SACK_BYTES));
                verdict = Verdict::PassRewritten;
            }
        }
        verdict
    }

    /// Periodic handler. Returns spoofed ACKs to hand to local senders, in
    /// injection order.
    pub fn on_tick(&mut self, now: SimTime, rng: &mut StreamRng) -> Vec<Segment> {
        let mut out = Vec::new();
        if !self.cfg.enabled {
            return out;
        }
        let alpha = self.cfg.alpha;
        let default_rtt = self.cfg.default_rtt.as_micros() as f64;
        let rto_min = self.cfg.rto_min;
        let inactivity = self.cfg.inactivity_timeout;
        let phi = self.cfg.phi;
        let idx: Vec<usize> = self.table.occupied().collect();
        for i in idx {
            let e = self.table.get(i);
            if !e.active || e.long_lived {
                continue;
            }
            let rtt = e.rtt_est.unwrap_or(default_rtt);
            let beta = alpha * rtt + rng.uniform(0.0, rtt);
            let t = e.ack_time.max(e.active_time);
            let outstanding = seq_lt(e.last_ack_no, e.last_seq_sent);
            let idle = |since: SimTime| (now.saturating_sub(since)).as_micros() as f64;

            if outstanding && !e.episode_open() && !e.halted && idle(t) >= beta {
                let burst = phi.saturating_sub(e.dup_ack_nr).max(1);
                let key = e.key.expect("occupied");
                self.episode_ids[i] += 1;
                let episode = self.episode_ids[i];
                self.counters.episodes_opened += 1;
                self.log(ShimTrace::EpisodeOpened {
                    key,
                    at: now,
                    since: t,
                    rtt_us: rtt,
                    beta_us: beta,
                    burst,
                    episode,
                });
                for _ in 0..burst {
                    out.push(self.spoof(i));
                    self.log(ShimTrace::Spoof {
                        key,
                        at: now,
                        episode,
                    });
                }
                let e = self.table.get_mut(i);
                e.resent = burst;
                e.resent_time = now;
                e.x = 2;
                continue;
            }
            if e.episode_open() {
                let backoff = beta * f64::from(1u32 << e.x.min(31));
                if idle(e.resent_time) >= backoff && idle(e.ack_time) < rto_min.as_micros() as f64 {
                    let key = e.key.expect("occupied");
                    let episode = self.episode_ids[i];
                    out.push(self.spoof(i));
                    self.log(ShimTrace::Spoof {
                        key,
                        at: now,
                        episode,
                    });
                    let e = self.table.get_mut(i);
                    e.resent += 1;
                    e.x += 1;
                    continue;
                }
                if now.saturating_sub(e.ack_time) >= rto_min {
                    let key = e.key.expect("occupied");
                    let e = self.table.get_mut(i);
                    e.soft_reset();
                    e.halted = true;
                    self.counters.episodes_stopped_at_rtomin += 1;
                    self.log(ShimTrace::Stopped { key, at: now });
                    continue;
                }
            }
            let e = self.table.get_mut(i);
            if now.saturating_sub(e.active_time) >= inactivity {
                e.active = false;
                e.soft_reset();
                e.halted = false;
            }
        }
        out
    }

    fn spoof(&mut self, i: usize) -> Segment {
        self.counters.spoofed_acks_sent += 1;
        build_spoofed_ack(self.table.get(i))
    }
}

/// Duplicate ACK for `entry`'s flow, as the receiver would send it.
pub fn build_spoofed_ack(entry: &FlowEntry) -> Segment {
    let key = entry.key.expect("spoof for unused entry").reversed();
    let mut s = Segment::new(key, Direction::ToSender);
    s.ack = entry.last_ack_no;
    s.flags.ack = true;
    s.ts = entry.ts_recent;
    if entry.sack_seen {
        let l = entry.last_ack_no;
        s.push_sack(l.wrapping_add(MSS), l.wrapping_add(MSS + FAKE_SACK_BYTES));
    }
    s.meta.spoofed = true;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RngStream;

    const ISN: u32 = 5_000;

    fn key() -> FlowKey {
        FlowKey {
            src_ip: 1,
            dst_ip: 2,
            src_port: 33_000,
            dst_port: 80,
        }
    }

    fn rng() -> StreamRng {
        StreamRng::new(1, RngStream::BetaJitter)
    }

    fn us(v: u64) -> SimTime {
        SimTime::from_micros(v)
    }

    fn syn() -> Segment {
        let mut s = Segment::new(key(), Direction::ToReceiver);
        s.seq = ISN;
        s.flags.syn = true;
        s
    }

    fn data(i: u32) -> Segment {
        let mut s = Segment::new(key(), Direction::ToReceiver);
        s.seq = ISN + 1 + i * MSS;
        s.flags.ack = true;
        s.payload_len = MSS;
        s
    }

    fn ack(a: u32) -> Segment {
        let mut s = Segment::new(key().reversed(), Direction::ToSender);
        s.ack = a;
        s.flags.ack = true;
        s
    }

    fn shim_with(cfg: ShimConfig) -> Shim {
        Shim::new(ShimConfig {
            record_trace: true,
            ..cfg
        })
    }

    /// Flow with data outstanding past `ISN+1`, last activity at t=0.
    fn stalled(cfg: ShimConfig) -> Shim {
        let mut sh = shim_with(cfg);
        sh.on_outgoing(us(0), &syn());
        sh.on_incoming(us(0), &mut ack(ISN + 1));
        sh.on_outgoing(us(0), &data(0));
        sh.on_outgoing(us(0), &data(1));
        sh
    }

    #[test]
    fn syn_creates_active_entry() {
        let mut sh = shim_with(ShimConfig::default());
        sh.on_outgoing(us(0), &syn());
        let e = sh.entry(&key()).unwrap();
        assert!(e.active && !e.long_lived);
        assert_eq!(e.isn, ISN);
        assert_eq!(sh.counters().flows_tracked, 1);
    }

    #[test]
    fn data_refreshes_activity_even_on_retransmission() {
        let mut sh = stalled(ShimConfig::default());
        sh.on_outgoing(us(50), &data(0));
        assert_eq!(sh.entry(&key()).unwrap().active_time, us(50));
    }

    #[test]
    fn burst_is_phi_minus_dupacks() {
        let mut sh = stalled(ShimConfig::default());
        assert_eq!(sh.on_incoming(us(10), &mut ack(ISN + 1)), Verdict::Pass);
        let spoofs = sh.on_tick(us(2_000), &mut rng());
        assert_eq!(spoofs.len(), 2);
        assert!(spoofs.iter().all(|s| s.meta.spoofed && s.ack == ISN + 1));
        assert_eq!(spoofs[0], spoofs[1]);
    }

    #[test]
    fn no_spoof_before_beta() {
        let cfg = ShimConfig {
            default_rtt: us(100),
            ..ShimConfig::default()
        };
        let mut sh = stalled(cfg);
        // beta >= 10 * 100us
        assert!(sh.on_tick(us(999), &mut rng()).is_empty());
        assert_eq!(sh.on_tick(us(2_000), &mut rng()).len(), 3);
    }

    #[test]
    fn backoff_doubles_from_episode_open() {
        // alpha=10, rtt=100us, jitter < 100us: beta in [1000, 1100)
        let mut sh = stalled(ShimConfig::default());
        let mut r = rng();
        let mut times = Vec::new();
        let mut t = 1_000;
        while t <= 100_000 {
            if !sh.on_tick(us(t), &mut r).is_empty() {
                times.push(t);
            }
            t += 1_000;
        }
        let t0 = times[0];
        assert!(t0 <= 2_000);
        // 4*beta <= 4400, 8*beta <= 8800, 16*beta <= 17600, ...
        let gaps: Vec<_> = times.iter().map(|x| x - t0).collect();
        assert!(gaps[1] >= 4_000 && gaps[1] <= 5_000, "{gaps:?}");
        assert!(gaps[2] >= 8_000 && gaps[2] <= 9_000, "{gaps:?}");
        assert!(gaps[3] >= 16_000 && gaps[3] <= 18_000, "{gaps:?}");
        assert_eq!(sh.entry(&key()).unwrap().x, 2 + (times.len() as u32 - 1));
    }

    #[test]
    fn dupacks_during_episode_are_dropped_and_new_ack_closes_it() {
        let mut sh = stalled(ShimConfig::default());
        assert_eq!(sh.on_tick(us(2_000), &mut rng()).len(), 3);
        assert_eq!(sh.on_incoming(us(2_010), &mut ack(ISN + 1)), Verdict::Drop);
        assert_eq!(sh.counters().dupacks_dropped, 1);
        assert_eq!(
            sh.on_incoming(us(2_100), &mut ack(ISN + 1 + MSS)),
            Verdict::Pass
        );
        let e = sh.entry(&key()).unwrap();
        assert!(!e.episode_open());
        assert_eq!(e.dup_ack_nr, 0);
        assert_eq!(
            sh.on_incoming(us(2_110), &mut ack(ISN + 1 + MSS)),
            Verdict::Pass
        );
    }

    #[test]
    fn stops_at_rto_min_and_stays_quiet() {
        let mut sh = stalled(ShimConfig::default());
        let mut r = rng();
        let mut last_spoof = 0;
        for t in (1_000..=400_000).step_by(1_000) {
            if !sh.on_tick(us(t), &mut r).is_empty() {
                last_spoof = t;
            }
        }
        assert!(last_spoof < 200_000);
        assert_eq!(sh.counters().episodes_stopped_at_rtomin, 1);
        assert_eq!(sh.counters().episodes_opened, 1);
    }

    #[test]
    fn gamma_marks_long_lived() {
        let cfg = ShimConfig {
            gamma: Some(100_000),
            ..ShimConfig::default()
        };
        let mut sh = stalled(cfg);
        sh.on_incoming(us(10), &mut ack(ISN + 100_000));
        assert!(sh.entry(&key()).unwrap().long_lived);
        sh.on_outgoing(us(10), &data(80));
        assert!(sh.on_tick(us(500_000), &mut rng()).is_empty());
        assert_eq!(sh.counters().flows_marked_long_lived, 1);
    }

    #[test]
    fn idle_entry_deactivates_and_data_reactivates() {
        let mut sh = stalled(ShimConfig::default());
        sh.on_incoming(us(10), &mut ack(ISN + 1 + 2 * MSS));
        sh.on_tick(us(1_000_010), &mut rng());
        assert!(!sh.entry(&key()).unwrap().active);
        sh.on_outgoing(us(1_100_000), &data(2));
        let e = sh.entry(&key()).unwrap();
        assert!(e.active);
        assert_eq!(e.isn, ISN);
    }

    #[test]
    fn spoof_carries_fake_sack_when_negotiated() {
        let mut sh = shim_with(ShimConfig::default());
        let mut s = syn();
        s.sack_permitted = true;
        sh.on_outgoing(us(0), &s);
        let mut sa = ack(ISN + 1);
        sa.flags.syn = true;
        sa.sack_permitted = true;
        sa.ts = Some((77, 1));
        sh.on_incoming(us(101), &mut sa);
        sh.on_outgoing(us(0), &data(0));
        let spoofs = sh.on_tick(us(5_000), &mut rng());
        let l = ISN + 1;
        let blocks = spoofs[0].sack_blocks();
        assert_eq!(blocks.len(), 1);
        assert_eq!((blocks[0].left, blocks[0].right), (l + 1460, l + 1500));
        assert_eq!(spoofs[0].ts, Some((77, 1)));
    }

    #[test]
    fn disabled_shim_passes_everything() {
        let mut sh = stalled(ShimConfig::default());
        sh.on_tick(us(2_000), &mut rng());
        sh.set_enabled(false);
        assert_eq!(sh.on_incoming(us(2_010), &mut ack(ISN + 1)), Verdict::Pass);
        assert!(sh.on_tick(us(50_000), &mut rng()).is_empty());
    }

    #[test]
    fn unknown_flow_fails_open() {
        let mut sh = shim_with(ShimConfig::default());
        assert_eq!(sh.on_incoming(us(0), &mut ack(7)), Verdict::Pass);
    }

    #[test]
    fn full_table_counts_untracked() {
        let mut sh = shim_with(ShimConfig {
            table_capacity: 1,
            ..ShimConfig::default()
        });
        sh.on_outgoing(us(0), &syn());
        let mut other = syn();
        other.key.src_port += 1;
        sh.on_outgoing(us(0), &other);
        assert_eq!(sh.counters().untracked_flows, 1);
    }
}
