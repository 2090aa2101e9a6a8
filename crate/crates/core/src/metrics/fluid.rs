//! Fluid approximation of small-flow throughput with and without a
//! retransmission timeout.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams<T> {
    /// Flow size in bits.
    pub b: T,
    /// Flows sharing the bottleneck.
    pub n_flows: T,
    /// Bottleneck capacity in bits/s.
    pub capacity: T,
    /// RTTs needed without loss.
    pub rtts: T,
    /// RTT in seconds without loss.
    pub tau: T,
    /// Retransmission timeout paid, in seconds.
    pub rto: T,
    /// RTTs needed with loss.
    pub rtts_loss: T,
    /// RTT in seconds with loss.
    pub tau_loss: T,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FluidError {
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("parameter {0} out of domain")]
    Domain(&'static str),
}

/// Ideal and timeout-affected throughput `(rho_star, rho)` in bits/s.
pub fn fluid_throughput<T: Scalar>(p: &FluidParams<T>) -> Result<(T, T), FluidError> {
    let zero = T::zero();
    if !(p.capacity > zero) {
        return Err(FluidError::ZeroCapacity);
    }
    let positive = [
        (p.b, "b"),
        (p.n_flows, "n_flows"),
        (p.rtts, "rtts"),
        (p.tau, "tau"),
    ];
    for (v, name) in positive {
        if !(v > zero) || !v.is_finite() {
            return Err(FluidError::Domain(name));
        }
    }
    if !(p.rto >= zero) || !p.rto.is_finite() {
        return Err(FluidError::Domain("rto"));
    }
    if !(p.rtts_loss >= p.rtts) {
        return Err(FluidError::Domain("rtts_loss"));
    }
    if !(p.tau_loss >= p.tau) {
        return Err(FluidError::Domain("tau_loss"));
    }
    let drain = p.b * p.n_flows / p.capacity;
    let rho_star = p.b / (p.rtts * p.tau + drain);
    let rho = p.b / (p.rto + p.rtts_loss * p.tau_loss + drain);
    Ok((rho_star, rho))
}
