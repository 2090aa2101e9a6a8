use std::collections::BTreeSet;

use crate::sim::SimTime;
use crate::tcp::FlowKey;

/// Per-flow recovery state kept by the shim.
#[derive(Debug, Clone, Default)]
pub struct FlowEntry {
    pub key: Option<FlowKey>,
    pub active: bool,
    pub long_lived: bool,
    pub last_ack_no: u32,
    pub dup_ack_nr: u32,
    pub ack_time: SimTime,
    pub active_time: SimTime,
    /// End of the highest data byte seen leaving the host.
    pub last_seq_sent: u32,
    /// Spoofs injected in the current episode; non-zero means open.
    pub resent: u32,
    pub resent_time: SimTime,
    pub x: u32,
    pub rtt_est: Option<f64>,
    /// Latest (TSval, TSecr) seen on an ACK from the receiver.
    pub ts_recent: Option<(u32, u32)>,
    pub sack_seen: bool,
    pub isn: u32,
    /// Set when spoofing was abandoned at the RTO_min cutoff; cleared by
    /// the next new ACK or data segment.
    pub halted: bool,
    next: Option<usize>,
}

impl FlowEntry {
    pub fn episode_open(&self) -> bool {
        self.resent > 0
    }

    /// Clears recovery state, keeping identity and measurements.
    pub fn soft_reset(&mut self) {
        self.resent = 0;
        self.x = 2;
    }

    fn reset(&mut self, key: FlowKey) {
        let next = self.next;
        *self = FlowEntry {
            key: Some(key),
            x: 2,
            next,
            ..FlowEntry::default()
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Existing(usize),
    Created(usize),
    Full,
}

/// Fixed-capacity hash table of flow entries backed by a preallocated pool,
/// with chaining for collisions.
#[derive(Debug)]
pub struct FlowTable {
    buckets: Vec<Option<usize>>,
    pool: Vec<FlowEntry>,
    free: Vec<usize>,
    live: BTreeSet<usize>,
}

fn mix(key: &FlowKey) -> u64 {
    let mut z = (u64::from(key.src_ip) << 32 | u64::from(key.dst_ip))
        ^ (u64::from(key.src_port) << 16 | u64::from(key.dst_port)).rotate_left(29);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl FlowTable {
    pub fn new(capacity: usize) -> Self {
        let n_buckets = capacity.max(1).next_power_of_two();
        FlowTable {
            buckets: vec![None; n_buckets],
            pool: vec![FlowEntry::default(); capacity],
            free: (0..capacity).rev().collect(),
            live: BTreeSet::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.pool.len()
    }

    pub fn len(&self) -> usize {
        self.pool.len() - self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn bucket(&self, key: &FlowKey) -> usize {
        (mix(key) as usize) & (self.buckets.len() - 1)
    }

    pub fn find(&self, key: &FlowKey) -> Option<usize> {
        let mut cur = self.buckets[self.bucket(key)];
        while let Some(i) = cur {
            if self.pool[i].key.as_ref() == Some(key) {
                return Some(i);
            }
            cur = self.pool[i].next;
        }
        None
    }

    /// Finds the entry for `key`, allocating a fresh one if needed. When the
    /// pool is exhausted an inactive entry is recycled.
    pub fn find_or_insert(&mut self, key: &FlowKey) -> Lookup {
        if let Some(i) = self.find(key) {
            return Lookup::Existing(i);
        }
        let slot = match self.free.pop() {
            Some(i) => i,
            None => match self.pool.iter().position(|e| !e.active) {
                Some(i) => {
                    self.unlink(i);
                    i
                }
                None => return Lookup::Full,
            },
        };
        let b = self.bucket(key);
        self.pool[slot].next = self.buckets[b];
        self.pool[slot].reset(*key);
        self.buckets[b] = Some(slot);
        self.live.insert(slot);
        Lookup::Created(slot)
    }

    fn unlink(&mut self, i: usize) {
        let key = self.pool[i].key.expect("linked entry has a key");
        let b = self.bucket(&key);
        let next = self.pool[i].next;
        if self.buckets[b] == Some(i) {
            self.buckets[b] = next;
        } else {
            let mut cur = self.buckets[b];
            while let Some(j) = cur {
                if self.pool[j].next == Some(i) {
                    self.pool[j].next = next;
                    break;
                }
                cur = self.pool[j].next;
            }
        }
        self.pool[i].next = None;
        self.pool[i].key = None;
    }

    pub fn reset_entry(&mut self, i: usize) {
        let key = self.pool[i].key.expect("reset of unused entry");
        self.pool[i].reset(key);
    }

    pub fn get(&self, i: usize) -> &FlowEntry {
        &self.pool[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut FlowEntry {
        &mut self.pool[i]
    }

    /// Indices of all entries holding a key, in pool order.
    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.live.iter().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(p: u16) -> FlowKey {
        FlowKey {
            src_ip: 10,
            dst_ip: 20,
            src_port: p,
            dst_port: 80,
        }
    }

    #[test]
    fn same_key_same_entry() {
        let mut t = FlowTable::new(8);
        let Lookup::Created(a) = t.find_or_insert(&key(1)) else {
            panic!("expected insert")
        };
        assert_eq!(t.find_or_insert(&key(1)), Lookup::Existing(a));
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn collisions_chain() {
        // one bucket forces every key onto the same chain
        let mut t = FlowTable::new(1);
        t.buckets = vec![None];
        t.pool = vec![FlowEntry::default(); 4];
        t.free = (0..4).rev().collect();
        let ids: Vec<_> = (0..4)
            .map(|p| match t.find_or_insert(&key(p)) {
                Lookup::Created(i) => i,
                other => panic!("{other:?}"),
            })
            .collect();
        for (p, i) in ids.iter().enumerate() {
            assert_eq!(t.find(&key(p as u16)), Some(*i));
        }
    }

    #[test]
    fn full_table_recycles_inactive_only() {
        let mut t = FlowTable::new(2);
        for p in 0..2 {
            if let Lookup::Created(i) = t.find_or_insert(&key(p)) {
                t.get_mut(i).active = true;
            }
        }
        assert_eq!(t.find_or_insert(&key(9)), Lookup::Full);
        let i0 = t.find(&key(0)).unwrap();
        t.get_mut(i0).active = false;
        assert_eq!(t.find_or_insert(&key(9)), Lookup::Created(i0));
        assert_eq!(t.find(&key(0)), None);
        assert!(t.find(&key(1)).is_some());
    }
}
