//! Deterministic discrete-event core: clock, event queue, seeded randomness.

mod engine;
mod rng;
mod time;

pub use engine::{Engine, Event};
pub use rng::{RngStream, StreamRng};
pub use time::SimTime;
