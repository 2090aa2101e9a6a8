//! One simulation run: hosts with TCP endpoints and shims, the switch
//! fabric, and the workload, driven by the event engine.

use std::collections::HashMap;

use crate::fabric::{
    Admission, FabricConfig, LossRule, Network, NodeId, NodeKind, PortId, TopologyError,
    TopologySpec, Transmission,
};
use crate::metrics::{classify_episode, deadline_missed, FlowRecord, RecoveryEvent};
use crate::shim::{Shim, ShimConfig, ShimCounters, ShimTrace, Verdict};
use crate::sim::{Engine, Event, RngStream, SimTime, StreamRng};
use crate::tcp::{
    fold_digest, Direction, FlowKey, RetxEpisode, Segment, SenderOutput, TcpConfig, TcpReceiver,
    TcpSender,
};
use crate::workload::{classify_size, schedule_hash, FlowSpec, Scenario, ScenarioError};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub topology: TopologySpec,
    pub fabric: FabricConfig,
    pub tcp: TcpConfig,
    pub shim: ShimConfig,
    pub scenario: Scenario,
    pub loss: LossRule,
    pub seed: u64,
    /// End of simulated time.
    pub duration: SimTime,
    /// Stop as soon as every finite flow has completed.
    pub stop_when_done: bool,
}

impl SimConfig {
    /// Dumbbell sized for `scenario`, default TCP and fabric, shim off.
    pub fn dumbbell(scenario: Scenario) -> Self {
        let n = scenario.dumbbell_senders().unwrap_or(1);
        SimConfig {
            topology: TopologySpec::dumbbell(n),
            fabric: FabricConfig::default(),
            tcp: TcpConfig::default(),
            shim: ShimConfig {
                enabled: false,
                ..ShimConfig::default()
            },
            scenario,
            loss: LossRule::default(),
            seed: 1,
            duration: SimTime::from_secs(15),
            stop_when_done: true,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Run-wide accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub events_scheduled: u64,
    pub events_dispatched: u64,
    pub events_pending: u64,
    /// Segments admitted to a host NIC.
    pub injected: u64,
    /// Segments that reached their destination host.
    pub delivered: u64,
    /// Segments discarded by a queue (arrival or push-out victim).
    pub dropped: u64,
    /// Segments still queued or on a wire at the end.
    pub in_flight: u64,
    /// Data segments removed by the loss rule before reaching the NIC.
    pub forced_drops: u64,
    pub spoofs_delivered: u64,
    /// Completed flows whose delivered stream did not match what was sent.
    pub integrity_failures: u64,
    /// Network dupACKs that reached a sender while its shim episode was open.
    pub suppression_violations: u64,
    pub ce_marked: u64,
    pub end_time_us: u64,
}

impl RunStats {
    pub fn conserved(&self) -> bool {
        self.injected == self.delivered + self.dropped + self.in_flight
    }
}

/// Per-flow details beyond the CSV record.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDetail {
    pub flow_id: u64,
    pub round: Option<u32>,
    pub cwnd_trace: u64,
    pub delivered_bytes: u64,
    pub syn_timeouts: u32,
    pub integrity_ok: bool,
    pub episodes: Vec<RetxEpisode>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub flows: Vec<FlowRecord>,
    pub recovery: Vec<RecoveryEvent>,
    pub details: Vec<FlowDetail>,
    pub shim: ShimCounters,
    pub shim_trace: Vec<ShimTrace>,
    pub stats: RunStats,
    pub schedule_hash: String,
    pub buffer_pkts: usize,
    pub base_rtt: SimTime,
}

impl RunOutput {
    pub fn total_rto_events(&self) -> u64 {
        self.flows.iter().map(|f| u64::from(f.rto_events)).sum()
    }

    pub fn total_rack_assisted(&self) -> u64 {
        self.flows
            .iter()
            .map(|f| u64::from(f.rack_assisted_frr_events))
            .sum()
    }

    /// Rolling hash over every flow's cwnd trajectory.
    pub fn cwnd_trace_hash(&self) -> u64 {
        self.details
            .iter()
            .fold(0, |h, d| fold_digest(h, d.cwnd_trace))
    }
}

#[derive(Debug, Clone)]
enum Ev {
    Arrive { node: NodeId, seg: Segment },
    LinkFree { port: PortId },
    Spoof { seg: Segment },
    FlowStart { flow: usize },
    Rto { conn: usize },
    DelayedAck { conn: usize },
    ShimTick { host: usize },
}

struct Conn {
    spec: FlowSpec,
    sender: TcpSender,
    receiver: TcpReceiver,
    rto_armed: Option<SimTime>,
    delack_armed: Option<SimTime>,
    forced_drops: u32,
    episodes: Vec<RetxEpisode>,
    done: bool,
    integrity_ok: bool,
}

struct World {
    net: Network,
    conns: Vec<Conn>,
    by_key: HashMap<FlowKey, usize>,
    shims: Vec<Option<Shim>>,
    shim_cfg: ShimConfig,
    loss: LossRule,
    aqm_rng: StreamRng,
    beta_rng: StreamRng,
    stats: RunStats,
    open_finite: usize,
    infinite_flows: usize,
    stop_when_done: bool,
    out: SenderOutput,
}

fn transmit_events(
    eng: &mut Engine<Ev>,
    net: &Network,
    port: PortId,
    started: Option<(Transmission, Segment)>,
) {
    if let Some((tx, seg)) = started {
        let node = net.port(port).to;
        eng.schedule(tx.delivery_at, Ev::Arrive { node, seg });
        eng.schedule(tx.link_free_at, Ev::LinkFree { port });
    }
}

impl World {
    fn offer(&mut self, eng: &mut Engine<Ev>, port: PortId, seg: Segment) {
        let now = eng.now();
        let (verdict, discarded, started) = self.net.enqueue(port, seg, now, &mut self.aqm_rng);
        if verdict == Admission::EnqueuedMarked {
            self.stats.ce_marked += 1;
        }
        if let Some(d) = discarded {
            self.stats.dropped += 1;
            self.note_loss(&d);
        }
        transmit_events(eng, &self.net, port, started);
    }

    fn note_loss(&mut self, seg: &Segment) {
        if seg.dir == Direction::ToReceiver && seg.is_data() {
            if let Some(c) = self.conns.get_mut(seg.meta.conn as usize) {
                c.sender.note_dropped(seg.seq, seg.meta.tx_count);
            }
        }
    }

    fn host_send(&mut self, eng: &mut Engine<Ev>, host: usize, seg: Segment) {
        let now = eng.now();
        if let Some(sh) = self.shims[host].as_mut() {
            sh.on_outgoing(now, &seg);
        }
        if self.loss.is_active() && seg.dir == Direction::ToReceiver {
            let c = &mut self.conns[seg.meta.conn as usize];
            if self.loss.should_drop(&seg, c.forced_drops) {
                c.forced_drops += 1;
                c.sender.note_dropped(seg.seq, seg.meta.tx_count);
                self.stats.forced_drops += 1;
                return;
            }
        }
        self.stats.injected += 1;
        let port = self.net.host_nic(host);
        self.offer(eng, port, seg);
    }

    /// Sends whatever the sender produced and re-syncs its timer.
    fn flush_sender(&mut self, eng: &mut Engine<Ev>, conn: usize) {
        let mut out = std::mem::take(&mut self.out);
        let host = self.conns[conn].spec.src;
        for seg in out.segments.drain(..) {
            self.host_send(eng, host, seg);
        }
        self.conns[conn].episodes.append(&mut out.episodes);
        self.out = out;

        let now = eng.now();
        let c = &mut self.conns[conn];
        if let Some(d) = c.sender.rto_deadline() {
            if c.rto_armed.is_none_or(|a| d < a) {
                let at = d.max(now);
                eng.schedule(at, Ev::Rto { conn });
                c.rto_armed = Some(at);
            }
        }
        if let (false, Some(_), Some(bytes)) = (c.done, c.sender.completed_at(), c.spec.bytes) {
            c.done = true;
            c.integrity_ok = c.receiver.stream_digest() == c.sender.expected_stream_digest(bytes)
                && c.receiver.delivered_bytes() == bytes;
            if !c.integrity_ok {
                self.stats.integrity_failures += 1;
            }
            self.open_finite -= 1;
            if self.open_finite == 0 && self.infinite_flows == 0 && self.stop_when_done {
                eng.stop();
            }
        }
    }

    fn receiver_reply(&mut self, eng: &mut Engine<Ev>, conn: usize, ack: Option<Segment>) {
        let now = eng.now();
        let host = self.conns[conn].spec.dst;
        if let Some(a) = ack {
            self.host_send(eng, host, a);
        }
        let c = &mut self.conns[conn];
        if let Some(d) = c.receiver.delayed_ack_deadline() {
            if c.delack_armed.is_none_or(|a| d < a) {
                eng.schedule(d.max(now), Ev::DelayedAck { conn });
                c.delack_armed = Some(d.max(now));
            }
        }
    }

    fn deliver_to_sender(&mut self, eng: &mut Engine<Ev>, conn: usize, seg: &Segment) {
        let now = eng.now();
        let mut out = std::mem::take(&mut self.out);
        self.conns[conn].sender.on_ack(now, seg, &mut out);
        self.out = out;
        self.flush_sender(eng, conn);
    }

    fn handle(&mut self, eng: &mut Engine<Ev>, ev: Event<Ev>) {
        let now = eng.now();
        match ev.payload {
            Ev::LinkFree { port } => {
                let started = self.net.link_free(port, now);
                transmit_events(eng, &self.net, port, started);
            }
            Ev::Arrive { node, seg } => match self.net.node_kind(node) {
                NodeKind::Switch(_) => {
                    let port = self.net.next_port(node, &seg);
                    self.offer(eng, port, seg);
                }
                NodeKind::Host(h) => {
                    self.stats.delivered += 1;
                    self.host_receive(eng, h, seg);
                }
            },
            Ev::Spoof { seg } => {
                let Some(&conn) = self.by_key.get(&seg.key.reversed()) else {
                    return;
                };
                self.stats.spoofs_delivered += 1;
                self.deliver_to_sender(eng, conn, &seg);
            }
            Ev::FlowStart { flow } => {
                let mut out = std::mem::take(&mut self.out);
                self.conns[flow].sender.start(now, &mut out);
                self.out = out;
                self.flush_sender(eng, flow);
            }
            Ev::Rto { conn } => {
                let c = &mut self.conns[conn];
                if c.rto_armed == Some(now) {
                    c.rto_armed = None;
                }
                let mut out = std::mem::take(&mut self.out);
                c.sender.on_rto(now, &mut out);
                self.out = out;
                self.flush_sender(eng, conn);
            }
            Ev::DelayedAck { conn } => {
                let c = &mut self.conns[conn];
                if c.delack_armed == Some(now) {
                    c.delack_armed = None;
                }
                let ack = c.receiver.on_delayed_ack_timer(now);
                self.receiver_reply(eng, conn, ack);
            }
            Ev::ShimTick { host } => {
                let spoofs = match self.shims[host].as_mut() {
                    Some(sh) => sh.on_tick(now, &mut self.beta_rng),
                    None => return,
                };
                // back-to-back arrival, 1 us apart
                for (i, seg) in spoofs.into_iter().enumerate() {
                    eng.schedule(now + SimTime::from_micros(i as u64), Ev::Spoof { seg });
                }
                eng.schedule(now + self.shim_cfg.tick, Ev::ShimTick { host });
            }
        }
    }

    fn host_receive(&mut self, eng: &mut Engine<Ev>, host: usize, mut seg: Segment) {
        let now = eng.now();
        let conn = seg.meta.conn as usize;
        match seg.dir {
            Direction::ToReceiver => {
                let ack = self.conns[conn].receiver.on_segment(now, &seg);
                self.receiver_reply(eng, conn, ack);
            }
            Direction::ToSender => {
                if let Some(sh) = self.shims[host].as_mut() {
                    if sh.on_incoming(now, &mut seg) == Verdict::Drop {
                        return;
                    }
                    let sender = &self.conns[conn].sender;
                    let dup = seg.is_pure_ack()
                        && seg.ack == sender.snd_una()
                        && sender.snd_una() != sender.snd_max();
                    let open = sh
                        .entry(&seg.key.reversed())
                        .is_some_and(|e| e.active && e.episode_open());
                    if dup && open {
                        self.stats.suppression_violations += 1;
                    }
                }
                self.deliver_to_sender(eng, conn, &seg);
            }
        }
    }
}

fn flow_key(spec: &FlowSpec) -> FlowKey {
    FlowKey {
        src_ip: Network::host_ip(spec.src),
        dst_ip: Network::host_ip(spec.dst),
        src_port: 1024 + (spec.id % 60_000) as u16,
        dst_port: 80 + (spec.id / 60_000) as u16,
    }
}

fn flow_seed(seed: u64, id: u64) -> u64 {
    seed.rotate_left(32) ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Runs one simulation to completion.
pub fn run_simulation(cfg: &SimConfig) -> Result<RunOutput, SimError> {
    let mut ecmp = StreamRng::new(cfg.seed, RngStream::Ecmp);
    let net = Network::build(&cfg.topology, &cfg.fabric, ecmp.next_u64())?;
    let flows = cfg.scenario.generate(&net, cfg.duration, cfg.seed)?;
    let sched_hash = schedule_hash(&flows);

    let mut shim_cfg = cfg.shim;
    if shim_cfg.enabled && shim_cfg.default_rtt == ShimConfig::default().default_rtt {
        shim_cfg.default_rtt = net.base_rtt();
    }

    let mut isn_rng = StreamRng::new(cfg.seed, RngStream::Isn);
    let mut conns = Vec::with_capacity(flows.len());
    let mut by_key = HashMap::new();
    for (i, f) in flows.iter().enumerate() {
        let key = flow_key(f);
        let fs = flow_seed(cfg.seed, f.id);
        let sender = TcpSender::new(cfg.tcp, key, i as u32, isn_rng.next_u32(), f.bytes, fs);
        let mut receiver = TcpReceiver::new(cfg.tcp, key.reversed(), i as u32, isn_rng.next_u32());
        if !cfg.tcp.handshake {
            receiver.accept(sender.isn(), cfg.tcp.sack);
        }
        by_key.insert(key, i);
        conns.push(Conn {
            spec: f.clone(),
            sender,
            receiver,
            rto_armed: None,
            delack_armed: None,
            forced_drops: 0,
            episodes: Vec::new(),
            done: false,
            integrity_ok: true,
        });
    }

    let mut sender_hosts: Vec<bool> = vec![false; net.n_hosts()];
    for f in &flows {
        sender_hosts[f.src] = true;
    }
    let shims = (0..net.n_hosts())
        .map(|h| (shim_cfg.enabled && sender_hosts[h]).then(|| Shim::new(shim_cfg)))
        .collect();

    let open_finite = flows.iter().filter(|f| f.bytes.is_some()).count();
    let infinite_flows = flows.len() - open_finite;
    let buffer_pkts = net.buffer_pkts();
    let base_rtt = net.base_rtt();
    let mut world = World {
        net,
        conns,
        by_key,
        shims,
        shim_cfg,
        loss: cfg.loss,
        aqm_rng: StreamRng::new(cfg.seed, RngStream::Aqm),
        beta_rng: StreamRng::new(cfg.seed, RngStream::BetaJitter),
        stats: RunStats::default(),
        open_finite,
        infinite_flows,
        stop_when_done: cfg.stop_when_done,
        out: SenderOutput::default(),
    };

    let mut eng: Engine<Ev> = Engine::new();
    for (i, f) in flows.iter().enumerate() {
        eng.schedule(f.start, Ev::FlowStart { flow: i });
    }
    for (h, sh) in world.shims.iter().enumerate() {
        if sh.is_some() {
            eng.schedule(shim_cfg.tick, Ev::ShimTick { host: h });
        }
    }
    if open_finite == 0 && infinite_flows == 0 && cfg.stop_when_done {
        eng.stop();
    }
    eng.run_until(cfg.duration, |e, ev| world.handle(e, ev));

    // Account for what is still in the network.
    let mut in_flight = world.net.queued_segments() as u64;
    in_flight += eng
        .pending_events()
        .filter(|e| matches!(e.payload, Ev::Arrive { .. }))
        .count() as u64;
    world.stats.in_flight = in_flight;
    world.stats.events_scheduled = eng.scheduled_count();
    world.stats.events_dispatched = eng.dispatched_count();
    world.stats.events_pending = eng.pending() as u64;
    world.stats.end_time_us = eng.now().as_micros();

    let mut records = Vec::with_capacity(flows.len());
    let mut recovery = Vec::new();
    let mut details = Vec::with_capacity(flows.len());
    for c in &world.conns {
        let f = &c.spec;
        let class = classify_size(f.bytes);
        let end = c.sender.completed_at();
        let fct = end.map(|e| e - f.start);
        let k = c.sender.counters();
        records.push(FlowRecord {
            flow_id: f.id,
            src: f.src,
            dst: f.dst,
            size_bytes: f.bytes,
            class,
            start_us: f.start.as_micros(),
            end_us: end.map(SimTime::as_micros),
            fct_us: fct.map(SimTime::as_micros),
            rto_events: k.rto_events + k.syn_timeouts,
            frr_events: k.frr_events,
            rack_assisted_frr_events: k.rack_assisted_frr_events,
            spoofed_acks_received: k.spoofed_acks_received,
            deadline_missed: deadline_missed(class, fct),
        });
        recovery.extend(c.episodes.iter().map(|e| classify_episode(f.id, e)));
        details.push(FlowDetail {
            flow_id: f.id,
            round: f.round,
            cwnd_trace: c.sender.cwnd_trace(),
            delivered_bytes: c.receiver.delivered_bytes(),
            syn_timeouts: k.syn_timeouts,
            integrity_ok: c.integrity_ok,
            episodes: c.episodes.clone(),
        });
    }

    let mut shim_counters = ShimCounters::default();
    let mut shim_trace = Vec::new();
    for sh in world.shims.iter().flatten() {
        shim_counters.add(&sh.counters());
        shim_trace.extend_from_slice(sh.trace());
    }

    Ok(RunOutput {
        flows: records,
        recovery,
        details,
        shim: shim_counters,
        shim_trace,
        stats: world.stats,
        schedule_hash: sched_hash,
        buffer_pkts,
        base_rtt,
    })
}
