use std::collections::VecDeque;

use crate::sim::StreamRng;
use crate::tcp::Segment;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedParams {
    pub min_th: f64,
    pub max_th: f64,
    pub max_p: f64,
    pub wq: f64,
}

impl Default for RedParams {
    fn default() -> Self {
        RedParams {
            min_th: 20.0,
            max_th: 80.0,
            max_p: 0.1,
            wq: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AqmPolicy {
    DropTail,
    /// On overflow a uniformly chosen queued packet is pushed out and the
    /// arrival is kept.
    DropRand,
    RedEcn {
        params: RedParams,
        avg_q: f64,
        /// Packets since the last mark or drop (RED's `count`).
        count: i64,
    },
    DctcpMark {
        k: usize,
    },
}

impl AqmPolicy {
    pub fn red(params: RedParams) -> Self {
        AqmPolicy::RedEcn {
            params,
            avg_q: 0.0,
            count: -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Enqueued,
    EnqueuedMarked,
    Dropped,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QueueStats {
    pub arrivals: u64,
    pub enqueued: u64,
    pub marked: u64,
    pub dropped: u64,
    pub dequeued: u64,
}

/// Finite FIFO buffer in front of a link.
#[derive(Debug, Clone)]
pub struct PortQueue {
    capacity_pkts: usize,
    buf: VecDeque<Segment>,
    aqm: AqmPolicy,
    ecn_capable: bool,
    stats: QueueStats,
}

impl PortQueue {
    pub fn new(capacity_pkts: usize, aqm: AqmPolicy, ecn_capable: bool) -> Self {
        PortQueue {
            capacity_pkts,
            buf: VecDeque::with_capacity(capacity_pkts.min(1024)),
            aqm,
            ecn_capable,
            stats: QueueStats::default(),
        }
    }

    pub fn occupancy(&self) -> usize {
        self.buf.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity_pkts
    }

    pub fn stats(&self) -> QueueStats {
        self.stats
    }

    pub fn aqm(&self) -> &AqmPolicy {
        &self.aqm
    }

    pub fn iter(&self) -> impl Iterator<Item = &Segment> {
        self.buf.iter()
    }

    pub fn dequeue(&mut self) -> Option<Segment> {
        let s = self.buf.pop_front();
        if s.is_some() {
            self.stats.dequeued += 1;
        }
        s
    }

    /// Applies the AQM decision to an arriving segment.
    ///
    /// Returns the verdict for the arrival and, when something was
    /// discarded (the arrival itself or a pushed-out victim), that segment.
    pub fn admit(&mut self, mut seg: Segment, rng: &mut StreamRng) -> (Admission, Option<Segment>) {
        self.stats.arrivals += 1;
        let occ = self.buf.len();
        let full = occ >= self.capacity_pkts;
        let can_mark = self.ecn_capable && seg.ect;

        let verdict = match &mut self.aqm {
            AqmPolicy::DropTail => {
                if full {
                    Admission::Dropped
                } else {
                    Admission::Enqueued
                }
            }
            AqmPolicy::DropRand => {
                if full && occ > 0 {
                    let victim_ix = rng.below(occ);
                    let victim = self.buf.remove(victim_ix).expect("index in range");
                    self.buf.push_back(seg);
                    self.stats.enqueued += 1;
                    self.stats.dropped += 1;
                    return (Admission::Enqueued, Some(victim));
                } else if full {
                    Admission::Dropped
                } else {
                    Admission::Enqueued
                }
            }
            AqmPolicy::RedEcn {
                params,
                avg_q,
                count,
            } => {
                *avg_q = (1.0 - params.wq) * *avg_q + params.wq * occ as f64;
                if full {
                    *count = 0;
                    Admission::Dropped
                } else if *avg_q < params.min_th {
                    *count = -1;
                    Admission::Enqueued
                } else if *avg_q >= params.max_th {
                    *count = 0;
                    if can_mark {
                        Admission::EnqueuedMarked
                    } else {
                        Admission::Dropped
                    }
                } else {
                    *count += 1;
                    let pb =
                        params.max_p * (*avg_q - params.min_th) / (params.max_th - params.min_th);
                    let denom = 1.0 - *count as f64 * pb;
                    let pa = if denom <= 0.0 {
                        1.0
                    } else {
                        (pb / denom).min(1.0)
                    };
                    if rng.uniform(0.0, 1.0) < pa {
                        *count = 0;
                        if can_mark {
                            Admission::EnqueuedMarked
                        } else {
                            Admission::Dropped
                        }
                    } else {
                        Admission::Enqueued
                    }
                }
            }
            AqmPolicy::DctcpMark { k } => {
                if full {
                    Admission::Dropped
                } else if occ >= *k && can_mark {
                    Admission::EnqueuedMarked
                } else {
                    Admission::Enqueued
                }
            }
        };

        match verdict {
            Admission::Dropped => {
                self.stats.dropped += 1;
                (verdict, Some(seg))
            }
            Admission::Enqueued | Admission::EnqueuedMarked => {
                if verdict == Admission::EnqueuedMarked {
                    seg.ce = true;
                    self.stats.marked += 1;
                }
                self.stats.enqueued += 1;
                self.buf.push_back(seg);
                (verdict, None)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RngStream;
    use crate::tcp::{Direction, FlowKey};

    fn seg(ect: bool, tag: u32) -> Segment {
        let key = FlowKey {
            src_ip: 1,
            dst_ip: 2,
            src_port: 3,
            dst_port: 4,
        };
        let mut s = Segment::new(key, Direction::ToReceiver);
        s.seq = tag;
        s.payload_len = 1460;
        s.ect = ect;
        s
    }

    fn rng() -> StreamRng {
        StreamRng::new(9, RngStream::Aqm)
    }

    fn fill(q: &mut PortQueue, n: usize, r: &mut StreamRng) {
        for i in 0..n {
            q.admit(seg(false, i as u32), r);
        }
    }

    #[test]
    fn droptail_drops_when_full() {
        let mut r = rng();
        let mut q = PortQueue::new(100, AqmPolicy::DropTail, false);
        fill(&mut q, 100, &mut r);
        assert_eq!(q.occupancy(), 100);
        let (v, d) = q.admit(seg(false, 999), &mut r);
        assert_eq!(v, Admission::Dropped);
        assert_eq!(d.unwrap().seq, 999);
        assert_eq!(q.occupancy(), 100);
    }

    #[test]
    fn dctcp_threshold_boundary() {
        let mut r = rng();
        let mut q = PortQueue::new(100, AqmPolicy::DctcpMark { k: 20 }, true);
        fill(&mut q, 19, &mut r);
        assert_eq!(q.admit(seg(true, 19), &mut r).0, Admission::Enqueued);
        assert_eq!(q.occupancy(), 20);
        assert_eq!(q.admit(seg(true, 20), &mut r).0, Admission::EnqueuedMarked);
        assert!(q.iter().last().unwrap().ce);
    }

    #[test]
    fn dctcp_never_marks_non_ect() {
        let mut r = rng();
        let mut q = PortQueue::new(100, AqmPolicy::DctcpMark { k: 0 }, true);
        assert_eq!(q.admit(seg(false, 0), &mut r).0, Admission::Enqueued);
    }

    #[test]
    fn red_below_min_never_marks() {
        let mut r = rng();
        let mut q = PortQueue::new(100, AqmPolicy::red(RedParams::default()), true);
        // avg moves by wq per arrival, so a few dozen arrivals stay far below min_th
        for i in 0..60 {
            let (v, _) = q.admit(seg(true, i), &mut r);
            assert_eq!(v, Admission::Enqueued);
        }
    }

    #[test]
    fn red_above_max_marks_ect_drops_others() {
        let mut r = rng();
        let mut q = PortQueue::new(
            1000,
            AqmPolicy::RedEcn {
                params: RedParams::default(),
                avg_q: 90.0,
                count: 0,
            },
            true,
        );
        fill(&mut q, 0, &mut r);
        assert_eq!(q.admit(seg(true, 1), &mut r).0, Admission::EnqueuedMarked);
        assert_eq!(q.admit(seg(false, 2), &mut r).0, Admission::Dropped);
    }

    #[test]
    fn droprand_pushes_out_a_queued_packet() {
        let mut r = rng();
        let mut q = PortQueue::new(10, AqmPolicy::DropRand, false);
        fill(&mut q, 10, &mut r);
        let (v, victim) = q.admit(seg(false, 77), &mut r);
        assert_eq!(v, Admission::Enqueued);
        let victim = victim.expect("push-out victim");
        assert!(victim.seq < 10);
        assert_eq!(q.occupancy(), 10);
        assert_eq!(q.iter().last().unwrap().seq, 77);
        assert!(q.iter().all(|s| s.seq != victim.seq));
    }

    #[test]
    fn fifo_order() {
        let mut r = rng();
        let mut q = PortQueue::new(10, AqmPolicy::DropTail, false);
        fill(&mut q, 5, &mut r);
        let out: Vec<u32> = std::iter::from_fn(|| q.dequeue()).map(|s| s.seq).collect();
        assert_eq!(out, vec![0, 1, 2, 3, 4]);
    }
}
