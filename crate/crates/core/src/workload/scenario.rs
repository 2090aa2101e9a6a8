use rand::seq::SliceRandom;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fabric::{Layout, Network};
use crate::sim::{RngStream, SimTime, StreamRng};

use super::cdf::Workload;

/// Size class thresholds, in bytes.
pub const SMALL_MAX_BYTES: u64 = 100_000;
pub const MEDIUM_MAX_BYTES: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub fn name(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "small" => Some(SizeClass::Small),
            "medium" => Some(SizeClass::Medium),
            "large" => Some(SizeClass::Large),
            _ => None,
        }
    }
}

/// Classifies a flow by size; `None` (an unbounded flow) is Large.
pub fn classify_size(bytes: Option<u64>) -> SizeClass {
    match bytes {
        Some(b) if b <= SMALL_MAX_BYTES => SizeClass::Small,
        Some(b) if b <= MEDIUM_MAX_BYTES => SizeClass::Medium,
        _ => SizeClass::Large,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    AllToAll,
    OneToAll,
}

impl Pattern {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "all_to_all" => Some(Pattern::AllToAll),
            "one_to_all" => Some(Pattern::OneToAll),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pattern::AllToAll => "all_to_all",
            Pattern::OneToAll => "one_to_all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncastParams {
    pub round_period: SimTime,
    pub flow_bytes: u64,
    /// Mean of the exponential start offsets between consecutive flows.
    pub mean_gap_us: f64,
}

impl Default for IncastParams {
    fn default() -> Self {
        IncastParams {
            round_period: SimTime::from_secs(3),
            flow_bytes: 14_600,
            mean_gap_us: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// Synchronised rounds of small flows into one receiver.
    Case1 {
        n_flows: usize,
        incast: IncastParams,
    },
    /// As `Case1` plus one persistent large flow per three small ones.
    Case2 {
        n_flows: usize,
        incast: IncastParams,
    },
    /// Poisson arrivals with sizes drawn from a workload distribution.
    Poisson {
        workload: Workload,
        load: f64,
        pattern: Pattern,
        /// Arrivals are generated in `[0, arrival_window)`.
        arrival_window: SimTime,
    },
    /// One flow from host 0 to the last host at t = 0.
    Single { bytes: u64 },
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario needs at least one flow")]
    NoFlows,
    #[error("load must be in (0, 1), got {0}")]
    Load(f64),
    #[error("scenario {0} needs a {1} topology")]
    Topology(&'static str, &'static str),
    #[error("topology has {have} hosts, scenario needs {need}")]
    Hosts { have: usize, need: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: u64,
    pub src: usize,
    pub dst: usize,
    /// `None` sends for the whole run.
    pub bytes: Option<u64>,
    pub start: SimTime,
    /// Incast round, when the scenario has rounds.
    pub round: Option<u32>,
}

impl Scenario {
    pub fn case1(n_flows: usize) -> Self {
        Scenario::Case1 {
            n_flows,
            incast: IncastParams::default(),
        }
    }

    pub fn case2(n_flows: usize) -> Self {
        Scenario::Case2 {
            n_flows,
            incast: IncastParams::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Case1 { .. } => "case1",
            Scenario::Case2 { .. } => "case2",
            Scenario::Poisson { .. } => "poisson",
            Scenario::Single { .. } => "single",
        }
    }

    /// Number of persistent large flows added by CASE 2.
    pub fn large_flows(n_small: usize) -> usize {
        n_small.div_ceil(3)
    }

    /// Sender hosts a dumbbell must provide for this scenario.
    pub fn dumbbell_senders(&self) -> Option<usize> {
        match *self {
            Scenario::Case1 { n_flows, .. } => Some(n_flows),
            Scenario::Case2 { n_flows, .. } => Some(n_flows + Self::large_flows(n_flows)),
            Scenario::Single { .. } => Some(1),
            Scenario::Poisson { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match *self {
            Scenario::Case1 { n_flows, .. } | Scenario::Case2 { n_flows, .. } if n_flows == 0 => {
                Err(ScenarioError::NoFlows)
            }
            Scenario::Poisson { load, .. } if !(load > 0.0 && load < 1.0) => {
                Err(ScenarioError::Load(load))
            }
            _ => Ok(()),
        }
    }

    /// Every flow of the run, ordered by start time then id.
    pub fn generate(
        &self,
        net: &Network,
        duration: SimTime,
        seed: u64,
    ) -> Result<Vec<FlowSpec>, ScenarioError> {
        self.validate()?;
        let mut arrivals = StreamRng::new(seed, RngStream::Arrivals);
        let mut sizes = StreamRng::new(seed, RngStream::FlowSizes);
        let mut placement = StreamRng::new(seed, RngStream::Placement);
        let mut flows = match *self {
            Scenario::Case1 { n_flows, incast } | Scenario::Case2 { n_flows, incast } => {
                let Layout::Dumbbell { receiver } = net.layout() else {
                    return Err(ScenarioError::Topology(self.name(), "dumbbell"));
                };
                let need = self.dumbbell_senders().expect("incast") + 1;
                if net.n_hosts() < need {
                    return Err(ScenarioError::Hosts {
                        have: net.n_hosts(),
                        need,
                    });
                }
                let mut flows = Vec::new();
                if matches!(self, Scenario::Case2 { .. }) {
                    for k in 0..Self::large_flows(n_flows) {
                        flows.push(FlowSpec {
                            id: 0,
                            src: n_flows + k,
                            dst: receiver,
                            bytes: None,
                            start: SimTime::ZERO,
                            round: None,
                        });
                    }
                }
                let mut round = 0u32;
                while incast.round_period.as_micros() * u64::from(round) < duration.as_micros() {
                    flows.extend(gen_incast_round(
                        n_flows,
                        receiver,
                        round,
                        &incast,
                        &mut arrivals,
                        &mut placement,
                    ));
                    round += 1;
                }
                flows
            }
            Scenario::Poisson {
                workload,
                load,
                pattern,
                arrival_window,
            } => {
                if !matches!(net.layout(), Layout::LeafSpine { .. }) {
                    return Err(ScenarioError::Topology("poisson", "leaf-spine"));
                }
                gen_poisson_flows(
                    net,
                    workload,
                    load,
                    pattern,
                    arrival_window,
                    &mut arrivals,
                    &mut sizes,
                    &mut placement,
                )
            }
            Scenario::Single { bytes } => vec![FlowSpec {
                id: 0,
                src: 0,
                dst: net.n_hosts() - 1,
                bytes: Some(bytes),
                start: SimTime::ZERO,
                round: None,
            }],
        };
        flows.sort_by_key(|f| f.start);
        for (i, f) in flows.iter_mut().enumerate() {
            f.id = i as u64;
        }
        Ok(flows)
    }
}

/// Flows of one incast round: every sender starts once, in random order,
/// separated by exponential gaps.
pub fn gen_incast_round(
    n_flows: usize,
    receiver: usize,
    round: u32,
    p: &IncastParams,
    arrivals: &mut StreamRng,
    placement: &mut StreamRng,
) -> Vec<FlowSpec> {
    let mut order: Vec<usize> = (0..n_flows).collect();
    order.shuffle(placement.rng());
    let gap = Exp::new(1.0 / p.mean_gap_us).expect("positive mean gap");
    let base = p.round_period.as_micros() * u64::from(round);
    let mut offset = 0.0;
    order
        .into_iter()
        .map(|src| {
            offset += gap.sample(arrivals.rng());
            FlowSpec {
                id: 0,
                src,
                dst: receiver,
                bytes: Some(p.flow_bytes),
                start: SimTime::from_micros(base + offset.round() as u64),
                round: Some(round),
            }
        })
        .collect()
}

/// Arrival rate in flows per second for an offered load.
pub fn poisson_rate(load: f64, capacity_bps: u64, mean_bytes: f64) -> f64 {
    load * capacity_bps as f64 / (mean_bytes * 8.0)
}

#[allow(clippy::too_many_arguments)]
pub fn gen_poisson_flows(
    net: &Network,
    workload: Workload,
    load: f64,
    pattern: Pattern,
    window: SimTime,
    arrivals: &mut StreamRng,
    sizes: &mut StreamRng,
    placement: &mut StreamRng,
) -> Vec<FlowSpec> {
    let cdf = workload.cdf::<f64>();
    let lambda = poisson_rate(load, net.load_capacity_bps(), cdf.mean());
    let gap = Exp::new(lambda / 1e6).expect("positive rate");
    let n = net.n_hosts();
    let hpl = match net.layout() {
        Layout::LeafSpine { hosts_per_leaf } => hosts_per_leaf,
        Layout::Dumbbell { .. } => n,
    };
    let mut flows = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(arrivals.rng());
        let start = SimTime::from_micros(t.round() as u64);
        if start >= window {
            break;
        }
        let (src, dst) = match pattern {
            Pattern::AllToAll => {
                let s = placement.below(n);
                let mut d = placement.below(n - 1);
                if d >= s {
                    d += 1;
                }
                (s, d)
            }
            Pattern::OneToAll => {
                let s = placement.below(hpl);
                (s, hpl + placement.below(n - hpl))
            }
        };
        let u = sizes.uniform(0.0, 1.0);
        flows.push(FlowSpec {
            id: 0,
            src,
            dst,
            bytes: Some(cdf.sample_bytes(u)),
            start,
            round: None,
        });
    }
    flows
}

/// Hex digest of a flow schedule, for pairing runs that must share one.
pub fn schedule_hash(flows: &[FlowSpec]) -> String {
    let mut h = Sha256::new();
    for f in flows {
        h.update(f.id.to_le_bytes());
        h.update((f.src as u64).to_le_bytes());
        h.update((f.dst as u64).to_le_bytes());
        h.update(f.bytes.unwrap_or(u64::MAX).to_le_bytes());
        h.update(f.start.as_micros().to_le_bytes());
    }
    h.finalize()[..16]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
