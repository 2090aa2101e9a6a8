//! Flat `key = value` run configuration.
//!
//! Files may `include other.conf` (resolved relative to the including
//! file); later keys win, and command-line overrides are applied last.
//! `#` starts a comment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::fabric::{AqmKind, FabricConfig, LossPosition, LossRule, RedParams, TopologySpec};
use crate::shim::ShimConfig;
use crate::sim::SimTime;
use crate::tcp::{TcpConfig, TcpVariant};
use crate::workload::{IncastParams, Pattern, Scenario, Workload};
use crate::world::SimConfig;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Dumbbell,
    LeafSpine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Case1,
    Case2,
    Poisson,
    Single,
}

/// Everything needed to reproduce one run. Every field has a default.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub topology: TopologyKind,
    /// Dumbbell senders; 0 sizes the dumbbell to the scenario.
    pub senders: usize,
    pub host_gbps: f64,
    pub bottleneck_gbps: f64,
    pub rtt_us: u64,
    /// 0 uses the topology default.
    pub buffer_pkts: usize,
    pub leaves: usize,
    pub spines: usize,
    pub hosts_per_leaf: usize,
    pub oversub: u64,
    pub hop_delay_us: u64,

    pub tcp: TcpConfig,
    pub aqm: AqmKind,
    pub red: RedParams,
    pub dctcp_k: Option<usize>,

    pub shim: ShimConfig,

    pub scenario: ScenarioKind,
    pub flows: usize,
    pub round_period_ms: u64,
    pub flow_bytes: u64,
    pub workload: Workload,
    pub load: f64,
    pub pattern: Pattern,
    pub arrival_window_ms: u64,
    pub single_bytes: u64,

    pub loss: LossRule,
    pub seed: u64,
    pub duration_ms: u64,
    pub stop_when_done: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let incast = IncastParams::default();
        RunConfig {
            topology: TopologyKind::Dumbbell,
            senders: 0,
            host_gbps: 1.0,
            bottleneck_gbps: 1.0,
            rtt_us: 100,
            buffer_pkts: 0,
            leaves: 9,
            spines: 4,
            hosts_per_leaf: 4,
            oversub: 5,
            hop_delay_us: 50,
            tcp: TcpConfig::default(),
            aqm: AqmKind::DropTail,
            red: RedParams::default(),
            dctcp_k: None,
            shim: ShimConfig {
                enabled: false,
                ..ShimConfig::default()
            },
            scenario: ScenarioKind::Case1,
            flows: 20,
            round_period_ms: incast.round_period.as_micros() / 1000,
            flow_bytes: incast.flow_bytes,
            workload: Workload::WebSearch,
            load: 0.7,
            pattern: Pattern::AllToAll,
            arrival_window_ms: 1000,
            single_bytes: 14_600,
            loss: LossRule::default(),
            seed: 1,
            duration_ms: 15_000,
            stop_when_done: true,
        }
    }
}

/// Every key, in canonical order.
pub const KEYS: &[&str] = &[
    "topology",
    "senders",
    "host_gbps",
    "bottleneck_gbps",
    "rtt_us",
    "buffer_pkts",
    "leaves",
    "spines",
    "hosts_per_leaf",
    "oversub",
    "hop_delay_us",
    "tcp",
    "sack",
    "timestamps",
    "initial_window",
    "dupack_threshold",
    "rto_min_ms",
    "rto_initial_ms",
    "delayed_ack",
    "handshake",
    "aqm",
    "red_min_th",
    "red_max_th",
    "red_max_p",
    "red_wq",
    "dctcp_k",
    "shim",
    "alpha",
    "gamma",
    "phi",
    "shim_rto_min_ms",
    "tick_us",
    "inactivity_ms",
    "default_rtt_us",
    "table_capacity",
    "shim_trace",
    "scenario",
    "flows",
    "round_period_ms",
    "flow_bytes",
    "workload",
    "load",
    "pattern",
    "arrival_window_ms",
    "single_bytes",
    "loss",
    "loss_min_window",
    "loss_max_per_flow",
    "seed",
    "duration_ms",
    "stop_when_done",
];

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on/off, got `{v}`")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("not a valid number: `{v}`"))
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn gbps_to_bps(g: f64) -> u64 {
    (g * 1e9).round() as u64
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let ms = |v: &str| parse_num::<u64>(v).map(SimTime::from_millis);
        let us = |v: &str| parse_num::<u64>(v).map(SimTime::from_micros);
        match key {
            "topology" => {
                self.topology = match v {
                    "dumbbell" => TopologyKind::Dumbbell,
                    "leaf-spine" | "leafspine" => TopologyKind::LeafSpine,
                    _ => return Err(format!("unknown topology `{v}`")),
                }
            }
            "senders" => self.senders = parse_num(v)?,
            "host_gbps" => self.host_gbps = parse_num(v)?,
            "bottleneck_gbps" => self.bottleneck_gbps = parse_num(v)?,
            "rtt_us" => self.rtt_us = parse_num(v)?,
            "buffer_pkts" => self.buffer_pkts = parse_num(v)?,
            "leaves" => self.leaves = parse_num(v)?,
            "spines" => self.spines = parse_num(v)?,
            "hosts_per_leaf" => self.hosts_per_leaf = parse_num(v)?,
            "oversub" => self.oversub = parse_num(v)?,
            "hop_delay_us" => self.hop_delay_us = parse_num(v)?,
            "tcp" => {
                self.tcp.variant =
                    TcpVariant::parse(v).ok_or_else(|| format!("unknown tcp variant `{v}`"))?
            }
            "sack" => self.tcp.sack = parse_bool(v)?,
            "timestamps" => self.tcp.timestamps = parse_bool(v)?,
            "initial_window" => self.tcp.initial_window = parse_num(v)?,
            "dupack_threshold" => self.tcp.dupack_threshold = parse_num(v)?,
            "rto_min_ms" => self.tcp.rto_min = ms(v)?,
            "rto_initial_ms" => self.tcp.rto_initial = ms(v)?,
            "delayed_ack" => self.tcp.delayed_ack = parse_bool(v)?,
            "handshake" => self.tcp.handshake = parse_bool(v)?,
            "aqm" => self.aqm = AqmKind::parse(v).ok_or_else(|| format!("unknown aqm `{v}`"))?,
            "red_min_th" => self.red.min_th = parse_num(v)?,
            "red_max_th" => self.red.max_th = parse_num(v)?,
            "red_max_p" => self.red.max_p = parse_num(v)?,
            "red_wq" => self.red.wq = parse_num(v)?,
            "dctcp_k" => {
                self.dctcp_k = match v {
                    "auto" => None,
                    _ => Some(parse_num(v)?),
                }
            }
            "shim" => self.shim.enabled = parse_bool(v)?,
            "alpha" => self.shim.alpha = parse_num(v)?,
            "gamma" => {
                self.shim.gamma = match v {
                    "inf" | "infinite" | "none" => None,
                    _ => Some(parse_num(v)?),
                }
            }
            "phi" => self.shim.phi = parse_num(v)?,
            "shim_rto_min_ms" => self.shim.rto_min = ms(v)?,
            "tick_us" => self.shim.tick = us(v)?,
            "inactivity_ms" => self.shim.inactivity_timeout = ms(v)?,
            "default_rtt_us" => self.shim.default_rtt = us(v)?,
            "table_capacity" => self.shim.table_capacity = parse_num(v)?,
            "shim_trace" => self.shim.record_trace = parse_bool(v)?,
            "scenario" => {
                self.scenario = match v {
                    "case1" => ScenarioKind::Case1,
                    "case2" => ScenarioKind::Case2,
                    "poisson" => ScenarioKind::Poisson,
                    "single" => ScenarioKind::Single,
                    _ => return Err(format!("unknown scenario `{v}`")),
                }
            }
            "flows" => self.flows = parse_num(v)?,
            "round_period_ms" => self.round_period_ms = parse_num(v)?,
            "flow_bytes" => self.flow_bytes = parse_num(v)?,
            "workload" => {
                self.workload =
                    Workload::parse(v).ok_or_else(|| format!("unknown workload `{v}`"))?
            }
            "load" => self.load = parse_num(v)?,
            "pattern" => {
                self.pattern = Pattern::parse(v).ok_or_else(|| format!("unknown pattern `{v}`"))?
            }
            "arrival_window_ms" => self.arrival_window_ms = parse_num(v)?,
            "single_bytes" => self.single_bytes = parse_num(v)?,
            "loss" => {
                self.loss.position =
                    LossPosition::parse(v).ok_or_else(|| format!("unknown loss rule `{v}`"))?
            }
            "loss_min_window" => self.loss.min_window = parse_num(v)?,
            "loss_max_per_flow" => self.loss.max_per_flow = parse_num(v)?,
            "seed" => self.seed = parse_num(v)?,
            "duration_ms" => self.duration_ms = parse_num(v)?,
            "stop_when_done" => self.stop_when_done = parse_bool(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Text form of one key, as `set` accepts it.
    pub fn get(&self, key: &str) -> Option<String> {
        let ms = |t: SimTime| (t.as_micros() / 1000).to_string();
        Some(match key {
            "topology" => match self.topology {
                TopologyKind::Dumbbell => "dumbbell".into(),
                TopologyKind::LeafSpine => "leaf-spine".into(),
            },
            "senders" => self.senders.to_string(),
            "host_gbps" => self.host_gbps.to_string(),
            "bottleneck_gbps" => self.bottleneck_gbps.to_string(),
            "rtt_us" => self.rtt_us.to_string(),
            "buffer_pkts" => self.buffer_pkts.to_string(),
            "leaves" => self.leaves.to_string(),
            "spines" => self.spines.to_string(),
            "hosts_per_leaf" => self.hosts_per_leaf.to_string(),
            "oversub" => self.oversub.to_string(),
            "hop_delay_us" => self.hop_delay_us.to_string(),
            "tcp" => self.tcp.variant.name().into(),
            "sack" => on_off(self.tcp.sack).into(),
            "timestamps" => on_off(self.tcp.timestamps).into(),
            "initial_window" => self.tcp.initial_window.to_string(),
            "dupack_threshold" => self.tcp.dupack_threshold.to_string(),
            "rto_min_ms" => ms(self.tcp.rto_min),
            "rto_initial_ms" => ms(self.tcp.rto_initial),
            "delayed_ack" => on_off(self.tcp.delayed_ack).into(),
            "handshake" => on_off(self.tcp.handshake).into(),
            "aqm" => self.aqm.name().into(),
            "red_min_th" => self.red.min_th.to_string(),
            "red_max_th" => self.red.max_th.to_string(),
            "red_max_p" => self.red.max_p.to_string(),
            "red_wq" => self.red.wq.to_string(),
            "dctcp_k" => self.dctcp_k.map_or("auto".into(), |k| k.to_string()),
            "shim" => on_off(self.shim.enabled).into(),
            "alpha" => self.shim.alpha.to_string(),
            "gamma" => self.shim.gamma.map_or("inf".into(), |g| g.to_string()),
            "phi" => self.shim.phi.to_string(),
            "shim_rto_min_ms" => ms(self.shim.rto_min),
            "tick_us" => self.shim.tick.as_micros().to_string(),
            "inactivity_ms" => ms(self.shim.inactivity_timeout),
            "default_rtt_us" => self.shim.default_rtt.as_micros().to_string(),
            "table_capacity" => self.shim.table_capacity.to_string(),
            "shim_trace" => on_off(self.shim.record_trace).into(),
            "scenario" => match self.scenario {
                ScenarioKind::Case1 => "case1".into(),
                ScenarioKind::Case2 => "case2".into(),
                ScenarioKind::Poisson => "poisson".into(),
                ScenarioKind::Single => "single".into(),
            },
            "flows" => self.flows.to_string(),
            "round_period_ms" => self.round_period_ms.to_string(),
            "flow_bytes" => self.flow_bytes.to_string(),
            "workload" => self.workload.name().into(),
            "load" => self.load.to_string(),
            "pattern" => self.pattern.name().into(),
            "arrival_window_ms" => self.arrival_window_ms.to_string(),
            "single_bytes" => self.single_bytes.to_string(),
            "loss" => self.loss.position.name().into(),
            "loss_min_window" => self.loss.min_window.to_string(),
            "loss_max_per_flow" => self.loss.max_per_flow.to_string(),
            "seed" => self.seed.to_string(),
            "duration_ms" => self.duration_ms.to_string(),
            "stop_when_done" => on_off(self.stop_when_done).into(),
            _ => return None,
        })
    }

    /// Canonical `key = value` dump; parsing it back yields an equal config.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("listed key"));
        }
        s
    }

    /// Hex SHA-256 of the canonical dump.
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.to_kv().as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Applies `key=value` text (file contents or overrides).
    /// `origin` names the source in diagnostics.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), HarnessError> {
        self.apply_text_depth(text, origin, 0)
    }

    fn apply_text_depth(
        &mut self,
        text: &str,
        origin: &Path,
        depth: usize,
    ) -> Result<(), HarnessError> {
        if depth > 16 {
            return Err(HarnessError::Config {
                origin: origin.display().to_string(),
                line: 0,
                msg: "include nesting too deep".into(),
            });
        }
        for (i, raw) in text.lines().enumerate() {
            let err = |msg: String| HarnessError::Config {
                origin: origin.display().to_string(),
                line: i + 1,
                msg,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("include ") {
                let base = origin.parent().unwrap_or(Path::new("."));
                let path: PathBuf = base.join(rest.trim());
                let inner = std::fs::read_to_string(&path)
                    .map_err(|e| err(format!("cannot include {}: {e}", path.display())))?;
                self.apply_text_depth(&inner, &path, depth + 1)?;
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got `{line}`")))?;
            self.set(k.trim(), v.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
            origin: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
        let mut c = RunConfig::default();
        c.apply_text(&text, path)?;
        Ok(c)
    }

    /// Applies `key=value` overrides, e.g. from the command line.
    pub fn apply_overrides<'a>(
        &mut self,
        kvs: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), HarnessError> {
        for (i, kv) in kvs.into_iter().enumerate() {
            let err = |msg: String| HarnessError::Config {
                origin: "command line".into(),
                line: i + 1,
                msg,
            };
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{kv}`")))?;
            self.set(k.trim(), v.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        let incast = IncastParams {
            round_period: SimTime::from_millis(self.round_period_ms),
            flow_bytes: self.flow_bytes,
            ..IncastParams::default()
        };
        match self.scenario {
            ScenarioKind::Case1 => Scenario::Case1 {
                n_flows: self.flows,
                incast,
            },
            ScenarioKind::Case2 => Scenario::Case2 {
                n_flows: self.flows,
                incast,
            },
            ScenarioKind::Poisson => Scenario::Poisson {
                workload: self.workload,
                load: self.load,
                pattern: self.pattern,
                arrival_window: SimTime::from_millis(self.arrival_window_ms),
            },
            ScenarioKind::Single => Scenario::Single {
                bytes: self.single_bytes,
            },
        }
    }

    /// Checks field ranges and builds the simulator input.
    pub fn to_sim(&self) -> Result<SimConfig, HarnessError> {
        let bad = |field: &str, msg: &str| HarnessError::Field {
            field: field.to_string(),
            msg: msg.to_string(),
        };
        let scenario = self.scenario();
        scenario.validate().map_err(|e| {
            bad(
                if self.scenario == ScenarioKind::Poisson {
                    "load"
                } else {
                    "flows"
                },
                &e.to_string(),
            )
        })?;
        if self.duration_ms == 0 {
            return Err(bad("duration_ms", "must be positive"));
        }
        if !(self.shim.alpha >= 1.0) {
            return Err(bad("alpha", "must be at least 1"));
        }
        if self.shim.tick.as_micros() == 0 {
            return Err(bad("tick_us", "must be at least 1"));
        }
        if self.shim.gamma == Some(0) {
            return Err(bad("gamma", "must be positive or inf"));
        }
        if self.tcp.initial_window == 0 {
            return Err(bad("initial_window", "must be positive"));
        }
        if self.tcp.dupack_threshold == 0 {
            return Err(bad("dupack_threshold", "must be positive"));
        }
        if !(self.host_gbps > 0.0) || !(self.bottleneck_gbps > 0.0) {
            return Err(bad("host_gbps", "link speeds must be positive"));
        }
        if !(self.red.min_th < self.red.max_th) {
            return Err(bad("red_min_th", "must be below red_max_th"));
        }
        let topology = match self.topology {
            TopologyKind::Dumbbell => {
                let senders = if self.senders > 0 {
                    self.senders
                } else {
                    scenario.dumbbell_senders().unwrap_or(1)
                };
                TopologySpec::Dumbbell {
                    n_senders: senders,
                    host_bps: gbps_to_bps(self.host_gbps),
                    bottleneck_bps: gbps_to_bps(self.bottleneck_gbps),
                    rtt_ns: self.rtt_us * 1000,
                    buffer_pkts: if self.buffer_pkts > 0 {
                        self.buffer_pkts
                    } else {
                        100
                    },
                }
            }
            TopologyKind::LeafSpine => TopologySpec::LeafSpine {
                n_leaf: self.leaves,
                n_spine: self.spines,
                hosts_per_leaf: self.hosts_per_leaf,
                host_bps: gbps_to_bps(self.host_gbps),
                oversub: self.oversub,
                hop_delay_ns: self.hop_delay_us * 1000,
                buffer_pkts: (self.buffer_pkts > 0).then_some(self.buffer_pkts),
            },
        };
        Ok(SimConfig {
            topology,
            fabric: FabricConfig {
                aqm: self.aqm,
                red: self.red,
                dctcp_k: self.dctcp_k,
                ..FabricConfig::default()
            },
            tcp: self.tcp,
            shim: self.shim,
            scenario,
            loss: self.loss,
            seed: self.seed,
            duration: SimTime::from_millis(self.duration_ms),
            stop_when_done: self.stop_when_done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_dump_round_trips() {
        let mut c = RunConfig::default();
        c.apply_overrides([
            "shim=on",
            "alpha=5",
            "gamma=100000",
            "aqm=dctcp",
            "dctcp_k=30",
        ])
        .unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_kv(), Path::new("dump")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn every_key_is_settable_from_its_own_value() {
        let c = RunConfig::default();
        for k in KEYS {
            let mut d = RunConfig::default();
            d.set(k, &c.get(k).unwrap()).unwrap();
            assert_eq!(d, c, "{k}");
        }
    }

    #[test]
    fn errors_name_the_line() {
        let mut c = RunConfig::default();
        let e = c
            .apply_text("seed = 3\n# note\nflows = many\n", Path::new("x.conf"))
            .unwrap_err();
        match e {
            HarnessError::Config { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("many"));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn zero_flows_is_rejected() {
        let mut c = RunConfig::default();
        c.set("flows", "0").unwrap();
        assert!(matches!(c.to_sim(), Err(HarnessError::Field { .. })));
    }

    #[test]
    fn hash_changes_with_any_field() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.set("seed", "2").unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
