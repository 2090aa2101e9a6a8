//! Packet-level simulation of data-center TCP with a host shim that turns
//! impending retransmission timeouts into fast retransmits.
//!
//! The simulator itself works in integer microseconds and `f64`. The
//! analytic pieces (flow-size CDFs, summary statistics, the fluid model)
//! are generic over [`Scalar`], with `f64` and `f32` aliases below.

pub mod fabric;
pub mod harness;
pub mod metrics;
pub mod scalar;
pub mod shim;
pub mod sim;
pub mod tcp;
pub mod workload;
pub mod world;

pub use scalar::Scalar;

pub type FlowSizeCdfF64 = workload::FlowSizeCdf<f64>;
pub type FlowSizeCdfF32 = workload::FlowSizeCdf<f32>;
pub type FluidParamsF64 = metrics::FluidParams<f64>;
pub type FluidParamsF32 = metrics::FluidParams<f32>;
