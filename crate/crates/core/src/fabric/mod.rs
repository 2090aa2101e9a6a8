//! Links, switch port queues with AQM, and dumbbell / leaf-spine topologies.

mod link;
mod loss;
mod queue;
mod topology;

pub use link::{Link, Transmission};
pub use loss::{LossPosition, LossRule};
pub use queue::{Admission, AqmPolicy, PortQueue, QueueStats, RedParams};
pub use topology::{
    default_dctcp_k, AqmKind, FabricConfig, Layout, Network, NodeId, NodeKind, Port, PortId,
    TopologyError, TopologySpec,
};
