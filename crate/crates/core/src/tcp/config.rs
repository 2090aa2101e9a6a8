use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcpVariant {
    NewReno,
    NewRenoEcn,
    Dctcp,
}

impl TcpVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "newreno" | "reno" => Some(TcpVariant::NewReno),
            "newreno-ecn" | "ecn" | "reno-ecn" => Some(TcpVariant::NewRenoEcn),
            "dctcp" => Some(TcpVariant::Dctcp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TcpVariant::NewReno => "newreno",
            TcpVariant::NewRenoEcn => "newreno-ecn",
            TcpVariant::Dctcp => "dctcp",
        }
    }

    pub fn ecn_capable(self) -> bool {
        !matches!(self, TcpVariant::NewReno)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpConfig {
    pub variant: TcpVariant,
    pub sack: bool,
    pub timestamps: bool,
    /// Initial congestion window in segments.
    pub initial_window: u32,
    /// Duplicate ACKs that trigger fast retransmit.
    pub dupack_threshold: u32,
    pub rto_min: SimTime,
    pub rto_max: SimTime,
    /// RTO used before the first RTT sample (SYN retransmission).
    pub rto_initial: SimTime,
    pub dctcp_gain: f64,
    pub dctcp_alpha_init: f64,
    pub delayed_ack: bool,
    pub delayed_ack_timeout: SimTime,
    /// Model the SYN / SYN-ACK exchange before data.
    pub handshake: bool,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            variant: TcpVariant::NewReno,
            sack: false,
            timestamps: true,
            initial_window: 10,
            dupack_threshold: 3,
            rto_min: SimTime::from_millis(200),
            rto_max: SimTime::from_secs(60),
            rto_initial: SimTime::from_secs(1),
            dctcp_gain: 1.0 / 16.0,
            dctcp_alpha_init: 1.0,
            delayed_ack: false,
            delayed_ack_timeout: SimTime::from_millis(40),
            handshake: true,
        }
    }
}
