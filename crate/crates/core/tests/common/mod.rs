#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use tracks_core::fabric::{AqmKind, LossPosition, LossRule, TopologySpec};
use tracks_core::metrics::{write_flows, write_recovery};
use tracks_core::shim::ShimTrace;
use tracks_core::sim::SimTime;
use tracks_core::tcp::{FlowKey, TcpVariant, MSS};
use tracks_core::workload::{Pattern, Scenario, Workload};
use tracks_core::world::{run_simulation, RunOutput, SimConfig};

pub fn with_aqm(mut cfg: SimConfig, aqm: AqmKind) -> SimConfig {
    cfg.fabric.aqm = aqm;
    cfg.tcp.variant = match aqm {
        AqmKind::RedEcn => TcpVariant::NewRenoEcn,
        AqmKind::DctcpMark => TcpVariant::Dctcp,
        AqmKind::DropTail | AqmKind::DropRand => TcpVariant::NewReno,
    };
    cfg
}

pub fn dumbbell(sc: Scenario, aqm: AqmKind, shim: bool, seed: u64) -> SimConfig {
    let mut cfg = with_aqm(SimConfig::dumbbell(sc), aqm);
    cfg.shim.enabled = shim;
    cfg.seed = seed;
    cfg
}

pub fn websearch(load: f64, window_ms: u64, alpha: Option<f64>, seed: u64) -> SimConfig {
    let sc = Scenario::Poisson {
        workload: Workload::WebSearch,
        load,
        pattern: Pattern::AllToAll,
        arrival_window: SimTime::from_millis(window_ms),
    };
    let mut cfg = SimConfig::dumbbell(sc);
    cfg.topology = TopologySpec::leaf_spine();
    cfg.duration = SimTime::from_secs(30);
    cfg.shim.enabled = alpha.is_some();
    cfg.shim.alpha = alpha.unwrap_or(10.0);
    cfg.seed = seed;
    cfg
}

/// Single flow of `segs` full segments whose last segment is dropped once.
pub fn tail_drop_single(segs: u64, shim: bool) -> SimConfig {
    let mut cfg = SimConfig::dumbbell(Scenario::Single {
        bytes: segs * u64::from(MSS),
    });
    cfg.loss = LossRule {
        position: LossPosition::LastSegment,
        min_window: 0,
        max_per_flow: 1,
    };
    cfg.shim.enabled = shim;
    cfg.shim.record_trace = true;
    cfg
}

/// The scenarios every property suite runs on.
pub fn ci_scenarios() -> Vec<(&'static str, SimConfig)> {
    vec![
        (
            "case1-20-droptail",
            dumbbell(Scenario::case1(20), AqmKind::DropTail, true, 1),
        ),
        (
            "case2-20-dctcp",
            dumbbell(Scenario::case2(20), AqmKind::DctcpMark, true, 2),
        ),
        (
            "case2-8-red",
            dumbbell(Scenario::case2(8), AqmKind::RedEcn, true, 3),
        ),
        ("single-tail-drop", tail_drop_single(3, true)),
        ("websearch-leafspine", websearch(0.5, 40, Some(10.0), 4)),
    ]
}

pub fn csv_bytes(out: &RunOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    write_flows(&mut buf, &out.flows).unwrap();
    write_recovery(&mut buf, &out.recovery).unwrap();
    buf
}

/// Largest spoof count a single episode may produce.
pub fn spoof_bound(phi: u32, rto_min: SimTime, beta_us: f64) -> u64 {
    let ratio = rto_min.as_micros() as f64 / beta_us;
    u64::from(phi) + ratio.log2().ceil().max(0.0) as u64
}

/// Checks the per-run invariants on a trace-recording run and returns a
/// description of every violation.
pub fn run_invariants(cfg: &SimConfig, out: &RunOutput) -> Vec<String> {
    let mut bad = Vec::new();
    let s = &out.stats;
    if !s.conserved() {
        bad.push(format!("packet conservation {s:?}"));
    }
    if s.integrity_failures > 0 {
        bad.push(format!("{} corrupted streams", s.integrity_failures));
    }
    for (d, f) in out.details.iter().zip(&out.flows) {
        let short = f.size_bytes.is_some_and(|n| d.delivered_bytes != n);
        if f.completed() && (!d.integrity_ok || short) {
            bad.push(format!(
                "flow {} delivered {} of {:?}",
                f.flow_id, d.delivered_bytes, f.size_bytes
            ));
        }
    }
    if s.suppression_violations > 0 {
        bad.push(format!(
            "{} network dupACKs leaked into open episodes",
            s.suppression_violations
        ));
    }
    let mut spoofs: HashMap<(FlowKey, u64), u64> = HashMap::new();
    let mut opened: BTreeMap<(FlowKey, u64), f64> = BTreeMap::new();
    let mut long_lived: HashMap<FlowKey, SimTime> = HashMap::new();
    for t in &out.shim_trace {
        match t {
            ShimTrace::EpisodeOpened {
                key,
                at,
                since,
                beta_us,
                episode,
                ..
            } => {
                if (at.as_micros() as f64) < since.as_micros() as f64 + beta_us {
                    bad.push(format!(
                        "episode {episode} opened at {at:?} before since {since:?} + {beta_us}"
                    ));
                }
                opened.insert((*key, *episode), *beta_us);
            }
            ShimTrace::Spoof { key, at, episode } => {
                *spoofs.entry((*key, *episode)).or_default() += 1;
                if long_lived.get(key).is_some_and(|t| t <= at) {
                    bad.push(format!("spoof at {at:?} for long-lived flow {key:?}"));
                }
            }
            ShimTrace::LongLived { key, at } => {
                long_lived.entry(*key).or_insert(*at);
            }
            _ => {}
        }
    }
    for (ep, n) in &spoofs {
        match opened.get(ep) {
            Some(&beta) => {
                let bound = spoof_bound(cfg.shim.phi, cfg.shim.rto_min, beta);
                if *n > bound {
                    bad.push(format!("episode {ep:?}: {n} spoofs > bound {bound}"));
                }
            }
            None => bad.push(format!("spoofs for unknown episode {ep:?}")),
        }
    }
    bad
}

/// Runs `cfg` with traces on and checks [`run_invariants`].
pub fn checked_run(mut cfg: SimConfig) -> (RunOutput, Vec<String>) {
    cfg.shim.record_trace = true;
    let out = run_simulation(&cfg).expect("valid config");
    let bad = run_invariants(&cfg, &out);
    (out, bad)
}

/// Turns `cfg` into a loss-free variant: deep switch buffers, no forced drops.
pub fn lossless(mut cfg: SimConfig) -> SimConfig {
    cfg.loss = LossRule::default();
    // RED drops non-ECT packets early however deep the buffer is
    cfg.fabric.red.min_th = 1e9;
    cfg.fabric.red.max_th = 2e9;
    match &mut cfg.topology {
        TopologySpec::Dumbbell { buffer_pkts, .. } => *buffer_pkts = 1_000_000,
        TopologySpec::LeafSpine { buffer_pkts, .. } => *buffer_pkts = Some(1_000_000),
    }
    cfg
}

/// Paired-run transparency: with no loss, shim on and off must produce
/// the same FCTs and cwnd trajectories.
pub fn transparency(cfg: &SimConfig) -> Result<(), String> {
    let mut off = lossless(cfg.clone());
    off.shim.enabled = false;
    let mut on = off.clone();
    on.shim.enabled = true;
    let a = run_simulation(&off).unwrap();
    let b = run_simulation(&on).unwrap();
    if a.stats.dropped + a.stats.forced_drops > 0 {
        return Err(format!(
            "lossless variant still dropped {}",
            a.stats.dropped
        ));
    }
    if a.flows != b.flows {
        return Err("flow records differ".into());
    }
    if a.cwnd_trace_hash() != b.cwnd_trace_hash() {
        return Err("cwnd trajectories differ".into());
    }
    if b.shim.spoofed_acks_sent > 0 {
        return Err(format!("{} spoofs without loss", b.shim.spoofed_acks_sent));
    }
    Ok(())
}

/// Two executions of the same config produce byte-identical CSVs.
pub fn reproducible(cfg: &SimConfig) -> Result<(), String> {
    let a = run_simulation(cfg).unwrap();
    let b = run_simulation(cfg).unwrap();
    if csv_bytes(&a) != csv_bytes(&b) || a.schedule_hash != b.schedule_hash || a.stats != b.stats {
        return Err("outputs differ between executions".into());
    }
    Ok(())
}
