use crate::sim::{SimTime, StreamRng};
use crate::tcp::{Segment, HEADER_BYTES, MSS};

use super::link::{Link, Transmission};
use super::queue::{Admission, AqmPolicy, PortQueue, RedParams};

pub type NodeId = usize;
pub type PortId = usize;

const FULL_FRAME: u32 = MSS + HEADER_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AqmKind {
    DropTail,
    DropRand,
    RedEcn,
    DctcpMark,
}

impl AqmKind {
    pub fn name(self) -> &'static str {
        match self {
            AqmKind::DropTail => "droptail",
            AqmKind::DropRand => "droprand",
            AqmKind::RedEcn => "red-ecn",
            AqmKind::DctcpMark => "dctcp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "droptail" | "drop-tail" => Some(AqmKind::DropTail),
            "droprand" | "drop-rand" | "randomdrop" => Some(AqmKind::DropRand),
            "red" | "red-ecn" | "redecn" => Some(AqmKind::RedEcn),
            "dctcp" | "dctcp-mark" | "dctcpmark" => Some(AqmKind::DctcpMark),
            _ => None,
        }
    }
}

/// Switch-port policy shared by every switch port in a topology.
#[derive(Debug, Clone, PartialEq)]
pub struct FabricConfig {
    pub aqm: AqmKind,
    pub red: RedParams,
    /// DCTCP marking threshold; `None` picks one from the port speed.
    pub dctcp_k: Option<usize>,
    /// Host NIC queue depth (hosts never run an AQM).
    pub host_buffer_pkts: usize,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            aqm: AqmKind::DropTail,
            red: RedParams::default(),
            dctcp_k: None,
            host_buffer_pkts: 10_000,
        }
    }
}

/// DCTCP marking threshold for a port speed: 20 packets at 1 Gb/s and
/// 65 at 10 Gb/s, linear in between.
pub fn default_dctcp_k(capacity_bps: u64) -> usize {
    const G: f64 = 1e9;
    let c = capacity_bps as f64;
    if c <= G {
        20
    } else if c >= 10.0 * G {
        65
    } else {
        (20.0 + 45.0 * (c - G) / (9.0 * G)).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    /// `n_senders` hosts behind one switch whose port to a single receiver
    /// host is the bottleneck.
    Dumbbell {
        n_senders: usize,
        host_bps: u64,
        bottleneck_bps: u64,
        /// Unloaded RTT of a full data frame plus its ACK, host to host.
        rtt_ns: u64,
        buffer_pkts: usize,
    },
    LeafSpine {
        n_leaf: usize,
        n_spine: usize,
        hosts_per_leaf: usize,
        host_bps: u64,
        oversub: u64,
        hop_delay_ns: u64,
        /// `None` sizes buffers to the intra-rack bandwidth-delay product.
        buffer_pkts: Option<usize>,
    },
}

impl TopologySpec {
    pub fn dumbbell(n_senders: usize) -> Self {
        TopologySpec::Dumbbell {
            n_senders,
            host_bps: 1_000_000_000,
            bottleneck_bps: 1_000_000_000,
            rtt_ns: 100_000,
            buffer_pkts: 100,
        }
    }

    pub fn leaf_spine() -> Self {
        TopologySpec::LeafSpine {
            n_leaf: 9,
            n_spine: 4,
            hosts_per_leaf: 4,
            host_bps: 10_000_000_000,
            oversub: 5,
            hop_delay_ns: 50_000,
            buffer_pkts: None,
        }
    }

    pub fn n_hosts(&self) -> usize {
        match *self {
            TopologySpec::Dumbbell { n_senders, .. } => n_senders + 1,
            TopologySpec::LeafSpine {
                n_leaf,
                hosts_per_leaf,
                ..
            } => n_leaf * hosts_per_leaf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Host(usize),
    Switch(usize),
}

#[derive(Debug, Clone)]
enum Route {
    Direct(PortId),
    Ecmp(Vec<PortId>),
}

#[derive(Debug, Clone)]
pub struct Port {
    pub from: NodeId,
    pub to: NodeId,
    pub link: Link,
    pub queue: PortQueue,
    busy: bool,
}

impl Port {
    pub fn is_busy(&self) -> bool {
        self.busy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Dumbbell { receiver: usize },
    LeafSpine { hosts_per_leaf: usize },
}

/// Built topology: nodes, ports, and per-switch forwarding tables.
#[derive(Debug, Clone)]
pub struct Network {
    layout: Layout,
    n_hosts: usize,
    n_switches: usize,
    ports: Vec<Port>,
    host_nic: Vec<PortId>,
    /// `routes[switch][dst_host]`
    routes: Vec<Vec<Route>>,
    ecmp_salt: u64,
    buffer_pkts: usize,
    base_rtt: SimTime,
    load_capacity_bps: u64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TopologyError {
    #[error("topology needs at least {0} hosts")]
    TooFewHosts(usize),
    #[error("invalid topology parameter: {0}")]
    Invalid(&'static str),
}

impl Network {
    pub fn build(
        spec: &TopologySpec,
        fabric: &FabricConfig,
        ecmp_salt: u64,
    ) -> Result<Self, TopologyError> {
        match *spec {
            TopologySpec::Dumbbell {
                n_senders,
                host_bps,
                bottleneck_bps,
                rtt_ns,
                buffer_pkts,
            } => {
                if n_senders == 0 {
                    return Err(TopologyError::TooFewHosts(2));
                }
                if host_bps == 0 || bottleneck_bps == 0 || buffer_pkts == 0 {
                    return Err(TopologyError::Invalid(
                        "dumbbell capacities and buffer must be positive",
                    ));
                }
                Ok(Self::build_dumbbell(
                    n_senders,
                    host_bps,
                    bottleneck_bps,
                    rtt_ns,
                    buffer_pkts,
                    fabric,
                    ecmp_salt,
                ))
            }
            TopologySpec::LeafSpine {
                n_leaf,
                n_spine,
                hosts_per_leaf,
                host_bps,
                oversub,
                hop_delay_ns,
                buffer_pkts,
            } => {
                if n_leaf == 0 || n_spine == 0 || hosts_per_leaf == 0 {
                    return Err(TopologyError::Invalid("leaf-spine counts must be positive"));
                }
                if n_leaf * hosts_per_leaf < 2 {
                    return Err(TopologyError::TooFewHosts(2));
                }
                if oversub == 0 || host_bps == 0 {
                    return Err(TopologyError::Invalid(
                        "oversubscription and host speed must be positive",
                    ));
                }
                if buffer_pkts == Some(0) {
                    return Err(TopologyError::Invalid("buffer must be positive"));
                }
                Ok(Self::build_leaf_spine(
                    n_leaf,
                    n_spine,
                    hosts_per_leaf,
                    host_bps,
                    oversub,
                    hop_delay_ns,
                    buffer_pkts,
                    fabric,
                    ecmp_salt,
                ))
            }
        }
    }

    fn switch_queue(fabric: &FabricConfig, capacity_bps: u64, buffer_pkts: usize) -> PortQueue {
        let aqm = match fabric.aqm {
            AqmKind::DropTail => AqmPolicy::DropTail,
            AqmKind::DropRand => AqmPolicy::DropRand,
            AqmKind::RedEcn => AqmPolicy::red(fabric.red),
            AqmKind::DctcpMark => AqmPolicy::DctcpMark {
                k: fabric
                    .dctcp_k
                    .unwrap_or_else(|| default_dctcp_k(capacity_bps)),
            },
        };
        let ecn = matches!(fabric.aqm, AqmKind::RedEcn | AqmKind::DctcpMark);
        PortQueue::new(buffer_pkts, aqm, ecn)
    }

    fn host_queue(fabric: &FabricConfig) -> PortQueue {
        PortQueue::new(fabric.host_buffer_pkts, AqmPolicy::DropTail, false)
    }

    fn add_port(&mut self, from: NodeId, to: NodeId, link: Link, queue: PortQueue) -> PortId {
        self.ports.push(Port {
            from,
            to,
            link,
            queue,
            busy: false,
        });
        self.ports.len() - 1
    }

    fn empty(layout: Layout, n_hosts: usize, n_switches: usize, ecmp_salt: u64) -> Self {
        Network {
            layout,
            n_hosts,
            n_switches,
            ports: Vec::new(),
            host_nic: Vec::with_capacity(n_hosts),
            routes: Vec::new(),
            ecmp_salt,
            buffer_pkts: 0,
            base_rtt: SimTime::ZERO,
            load_capacity_bps: 0,
        }
    }

    fn build_dumbbell(
        n_senders: usize,
        host_bps: u64,
        bottleneck_bps: u64,
        rtt_ns: u64,
        buffer_pkts: usize,
        fabric: &FabricConfig,
        salt: u64,
    ) -> Self {
        let n_hosts = n_senders + 1;
        let receiver = n_senders;
        let sw = n_hosts;
        let mut net = Self::empty(Layout::Dumbbell { receiver }, n_hosts, 1, salt);

        // Propagation is whatever remains of the target RTT once a full
        // frame and a pure ACK have been serialized on both hops.
        let ser = |bps: u64, bytes: u32| Link::new(bps, 0).serialization_ns(bytes);
        let ser_total = ser(host_bps, FULL_FRAME)
            + ser(bottleneck_bps, FULL_FRAME)
            + ser(host_bps, HEADER_BYTES)
            + ser(host_bps, HEADER_BYTES);
        let prop = rtt_ns.saturating_sub(ser_total) / 4;

        for h in 0..n_hosts {
            let p = net.add_port(h, sw, Link::new(host_bps, prop), Self::host_queue(fabric));
            net.host_nic.push(p);
        }
        let mut table = Vec::with_capacity(n_hosts);
        for h in 0..n_hosts {
            let bps = if h == receiver {
                bottleneck_bps
            } else {
                host_bps
            };
            let q = Self::switch_queue(fabric, bps, buffer_pkts);
            table.push(Route::Direct(net.add_port(sw, h, Link::new(bps, prop), q)));
        }
        net.routes.push(table);
        net.buffer_pkts = buffer_pkts;
        net.base_rtt = SimTime::from_nanos_ceil(rtt_ns);
        net.load_capacity_bps = bottleneck_bps;
        net
    }

    #[allow(clippy::too_many_arguments)]
    fn build_leaf_spine(
        n_leaf: usize,
        n_spine: usize,
        hpl: usize,
        host_bps: u64,
        oversub: u64,
        hop_ns: u64,
        buffer_pkts: Option<usize>,
        fabric: &FabricConfig,
        salt: u64,
    ) -> Self {
        let n_hosts = n_leaf * hpl;
        let mut net = Self::empty(
            Layout::LeafSpine {
                hosts_per_leaf: hpl,
            },
            n_hosts,
            n_leaf + n_spine,
            salt,
        );
        let uplink_bps = (hpl as u64 * host_bps) / (oversub * n_spine as u64);
        // Intra-rack propagation RTT is four hops (host-leaf-host and back).
        let bdp_bits = u128::from(host_bps) * u128::from(4 * hop_ns) / 1_000_000_000;
        let buf =
            buffer_pkts.unwrap_or_else(|| bdp_bits.div_ceil(u128::from(FULL_FRAME) * 8) as usize);

        let leaf = |l: usize| n_hosts + l;
        let spine = |s: usize| n_hosts + n_leaf + s;

        for h in 0..n_hosts {
            let p = net.add_port(
                h,
                leaf(h / hpl),
                Link::new(host_bps, hop_ns),
                Self::host_queue(fabric),
            );
            net.host_nic.push(p);
        }
        // leaf tables
        let mut spine_down = vec![vec![0; n_leaf]; n_spine];
        let mut uplinks = vec![Vec::with_capacity(n_spine); n_leaf];
        for l in 0..n_leaf {
            for (s, row) in spine_down.iter_mut().enumerate() {
                let q = Self::switch_queue(fabric, uplink_bps, buf);
                uplinks[l].push(net.add_port(leaf(l), spine(s), Link::new(uplink_bps, hop_ns), q));
                let q = Self::switch_queue(fabric, uplink_bps, buf);
                row[l] = net.add_port(spine(s), leaf(l), Link::new(uplink_bps, hop_ns), q);
            }
        }
        for (l, ups) in uplinks.iter().enumerate() {
            let mut table = Vec::with_capacity(n_hosts);
            let mut down = Vec::with_capacity(hpl);
            for i in 0..hpl {
                let h = l * hpl + i;
                let q = Self::switch_queue(fabric, host_bps, buf);
                down.push(net.add_port(leaf(l), h, Link::new(host_bps, hop_ns), q));
            }
            for h in 0..n_hosts {
                if h / hpl == l {
                    table.push(Route::Direct(down[h % hpl]));
                } else {
                    table.push(Route::Ecmp(ups.clone()));
                }
            }
            net.routes.push(table);
        }
        for row in &spine_down {
            net.routes
                .push((0..n_hosts).map(|h| Route::Direct(row[h / hpl])).collect());
        }

        net.buffer_pkts = buf;
        net.base_rtt = SimTime::from_nanos_ceil(8 * hop_ns);
        // Bisection: half the leaves' aggregate uplink capacity.
        net.load_capacity_bps = n_leaf as u64 * n_spine as u64 * uplink_bps / 2;
        net
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_hosts(&self) -> usize {
        self.n_hosts
    }

    pub fn n_nodes(&self) -> usize {
        self.n_hosts + self.n_switches
    }

    pub fn node_kind(&self, node: NodeId) -> NodeKind {
        if node < self.n_hosts {
            NodeKind::Host(node)
        } else {
            NodeKind::Switch(node - self.n_hosts)
        }
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    pub fn port(&self, id: PortId) -> &Port {
        &self.ports[id]
    }

    pub fn host_nic(&self, host: usize) -> PortId {
        self.host_nic[host]
    }

    /// Switch buffer depth in packets (after any bandwidth-delay sizing).
    pub fn buffer_pkts(&self) -> usize {
        self.buffer_pkts
    }

    /// Unloaded RTT of the longest host-to-host path.
    pub fn base_rtt(&self) -> SimTime {
        self.base_rtt
    }

    /// Capacity used to normalise offered load: the bottleneck link on a
    /// dumbbell, bisection bandwidth on a leaf-spine.
    pub fn load_capacity_bps(&self) -> u64 {
        self.load_capacity_bps
    }

    pub fn leaf_of(&self, host: usize) -> Option<usize> {
        match self.layout {
            Layout::LeafSpine { hosts_per_leaf } => Some(host / hosts_per_leaf),
            Layout::Dumbbell { .. } => None,
        }
    }

    /// Host bandwidth into a leaf divided by that leaf's uplink bandwidth.
    pub fn oversubscription(&self, leaf: usize) -> Option<f64> {
        let Layout::LeafSpine { hosts_per_leaf } = self.layout else {
            return None;
        };
        let leaf_node = self.n_hosts + leaf;
        let host_in: u64 = (leaf * hosts_per_leaf..(leaf + 1) * hosts_per_leaf)
            .map(|h| self.ports[self.host_nic[h]].link.capacity_bps())
            .sum();
        let up: u64 = self
            .ports
            .iter()
            .filter(|p| p.from == leaf_node && p.to >= self.n_hosts)
            .map(|p| p.link.capacity_bps())
            .sum();
        Some(host_in as f64 / up as f64)
    }

    pub fn host_ip(host: usize) -> u32 {
        0x0a00_0001 + host as u32
    }

    pub fn host_of_ip(&self, ip: u32) -> Option<usize> {
        let h = ip.checked_sub(0x0a00_0001)? as usize;
        (h < self.n_hosts).then_some(h)
    }

    fn ecmp_index(&self, seg: &Segment, n: usize) -> usize {
        let k = seg.key;
        let mut x = self.ecmp_salt
            ^ (u64::from(k.src_ip) << 32 | u64::from(k.dst_ip))
            ^ (u64::from(k.src_port) << 16 | u64::from(k.dst_port)).rotate_left(29);
        // splitmix64 finalizer
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
        (x % n as u64) as usize
    }

    /// Output port a segment takes when leaving `node`.
    pub fn next_port(&self, node: NodeId, seg: &Segment) -> PortId {
        match self.node_kind(node) {
            NodeKind::Host(h) => self.host_nic[h],
            NodeKind::Switch(s) => {
                let dst = self
                    .host_of_ip(seg.key.dst_ip)
                    .expect("segment addressed to unknown host");
                match &self.routes[s][dst] {
                    Route::Direct(p) => *p,
                    Route::Ecmp(ps) => ps[self.ecmp_index(seg, ps.len())],
                }
            }
        }
    }

    /// Ordered list of ports a segment crosses from its source host.
    pub fn route(&self, seg: &Segment) -> Result<Vec<PortId>, TopologyError> {
        let src = self
            .host_of_ip(seg.key.src_ip)
            .ok_or(TopologyError::Invalid("unknown source host"))?;
        let dst = self
            .host_of_ip(seg.key.dst_ip)
            .ok_or(TopologyError::Invalid("unknown destination host"))?;
        let mut path = Vec::new();
        let mut node = src;
        while node != dst {
            let p = self.next_port(node, seg);
            path.push(p);
            node = self.ports[p].to;
            assert!(path.len() <= self.n_nodes(), "routing loop");
        }
        Ok(path)
    }

    /// Offers a segment to a port. Returns the admission verdict, any
    /// segment discarded as a result, and the transmission started if the
    /// link was idle.
    pub fn enqueue(
        &mut self,
        port: PortId,
        seg: Segment,
        now: SimTime,
        rng: &mut StreamRng,
    ) -> (Admission, Option<Segment>, Option<(Transmission, Segment)>) {
        let p = &mut self.ports[port];
        let (verdict, discarded) = p.queue.admit(seg, rng);
        let started = if !p.busy && verdict != Admission::Dropped {
            Self::start_next(p, now)
        } else {
            None
        };
        (verdict, discarded, started)
    }

    /// Called when a port's link finishes serializing; starts the next
    /// queued frame if any.
    pub fn link_free(&mut self, port: PortId, now: SimTime) -> Option<(Transmission, Segment)> {
        let p = &mut self.ports[port];
        p.busy = false;
        Self::start_next(p, now)
    }

    fn start_next(p: &mut Port, now: SimTime) -> Option<(Transmission, Segment)> {
        let seg = p.queue.dequeue()?;
        p.busy = true;
        let tx = p.link.transmit(now, seg.wire_bytes());
        Some((tx, seg))
    }

    /// Segments currently buffered in any port queue.
    pub fn queued_segments(&self) -> usize {
        self.ports.iter().map(|p| p.queue.occupancy()).sum()
    }
}
