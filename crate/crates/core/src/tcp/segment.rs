use std::fmt;

/// Payload bytes per full segment.
pub const MSS: u32 = 1460;
/// IP + TCP header bytes carried by every segment.
pub const HEADER_BYTES: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub src_ip: u32,
    pub dst_ip: u32,
    pub src_port: u16,
    pub dst_port: u16,
}

impl FlowKey {
    pub fn reversed(&self) -> FlowKey {
        FlowKey {
            src_ip: self.dst_ip,
            dst_ip: self.src_ip,
            src_port: self.dst_port,
            dst_port: self.src_port,
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ip = |v: u32| {
            let b = v.to_be_bytes();
            format!("{}.{}.{}.{}", b[0], b[1], b[2], b[3])
        };
        write!(
            f,
            "{}:{}->{}:{}",
            ip(self.src_ip),
            self.src_port,
            ip(self.dst_ip),
            self.dst_port
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flags {
    pub syn: bool,
    pub fin: bool,
    pub ack: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SackBlock {
    pub left: u32,
    pub right: u32,
}

/// Which endpoint of a connection a segment is travelling towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToReceiver,
    ToSender,
}

/// Simulation bookkeeping carried alongside the header. Endpoint control
/// logic never reads it; it feeds instrumentation and loss injection.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SegMeta {
    /// Connection index used for dispatch at the destination host.
    pub conn: u32,
    /// Transmission count of this byte range (1 = original).
    pub tx_count: u32,
    /// 1-based position of the segment in the flight at transmission.
    pub window_index: u32,
    /// Sender window in whole segments at transmission.
    pub window_len: u32,
    /// Final segment of a finite flow.
    pub last_of_flow: bool,
    /// Injected by a shim rather than produced by the receiver.
    pub spoofed: bool,
    /// Digest of the payload bytes, used for stream-integrity checks.
    pub payload_digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub key: FlowKey,
    pub seq: u32,
    pub ack: u32,
    pub flags: Flags,
    pub payload_len: u32,
    pub ect: bool,
    pub ce: bool,
    pub ece: bool,
    pub cwr: bool,
    /// TCP timestamp option; `None` when timestamps are not in use.
    pub ts: Option<(u32, u32)>,
    pub sack_permitted: bool,
    sack: [SackBlock; 3],
    sack_len: u8,
    pub dir: Direction,
    pub meta: SegMeta,
}

impl Segment {
    pub fn new(key: FlowKey, dir: Direction) -> Self {
        Segment {
            key,
            seq: 0,
            ack: 0,
            flags: Flags::default(),
            payload_len: 0,
            ect: false,
            ce: false,
            ece: false,
            cwr: false,
            ts: None,
            sack_permitted: false,
            sack: [SackBlock { left: 0, right: 0 }; 3],
            sack_len: 0,
            dir,
            meta: SegMeta::default(),
        }
    }

    pub fn sack_blocks(&self) -> &[SackBlock] {
        &self.sack[..self.sack_len as usize]
    }

    /// Appends a SACK block; at most three fit, extra blocks are ignored.
    pub fn push_sack(&mut self, left: u32, right: u32) -> bool {
        assert!(super::seq::seq_lt(left, right), "empty SACK block");
        if self.sack_len as usize >= self.sack.len() {
            return false;
        }
        self.sack[self.sack_len as usize] = SackBlock { left, right };
        self.sack_len += 1;
        true
    }

    pub fn clear_sack(&mut self) {
        self.sack_len = 0;
    }

    pub fn is_pure_ack(&self) -> bool {
        self.flags.ack && !self.flags.syn && !self.flags.fin && self.payload_len == 0
    }

    pub fn is_data(&self) -> bool {
        self.payload_len > 0
    }

    /// Sequence number one past the last byte this segment occupies.
    pub fn end_seq(&self) -> u32 {
        let syn_fin = u32::from(self.flags.syn) + u32::from(self.flags.fin);
        self.seq.wrapping_add(self.payload_len + syn_fin)
    }

    /// Bytes on the wire, excluding any configured framing overhead.
    pub fn wire_bytes(&self) -> u32 {
        HEADER_BYTES + self.payload_len
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> FlowKey {
        FlowKey {
            src_ip: 0x0a00_0001,
            dst_ip: 0x0a00_0002,
            src_port: 40000,
            dst_port: 80,
        }
    }

    #[test]
    fn full_segment_is_1500_bytes() {
        let mut s = Segment::new(key(), Direction::ToReceiver);
        s.payload_len = MSS;
        assert_eq!(s.wire_bytes(), 1500);
        let a = Segment::new(key(), Direction::ToSender);
        assert_eq!(a.wire_bytes(), 40);
    }

    #[test]
    fn sack_holds_three_blocks() {
        let mut s = Segment::new(key(), Direction::ToSender);
        for i in 0..4u32 {
            let ok = s.push_sack(i * 10, i * 10 + 5);
            assert_eq!(ok, i < 3);
        }
        assert_eq!(s.sack_blocks().len(), 3);
    }

    #[test]
    fn reversed_key_roundtrip() {
        assert_eq!(key().reversed().reversed(), key());
        assert_eq!(key().to_string(), "10.0.0.1:40000->10.0.0.2:80");
    }
}

/// Digest of the synthetic payload carried by segment `index` of a flow.
pub fn payload_digest(flow_seed: u64, index: u64, len: u32) -> u64 {
    let mut x = flow_seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (u64::from(len) << 48);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Order-sensitive fold of per-segment digests into a stream checksum.
pub fn fold_digest(acc: u64, digest: u64) -> u64 {
    (acc.rotate_left(7) ^ digest).wrapping_mul(0x100_0000_01b3)
}
