use crate::tcp::Segment;

/// Which data segments a forced-loss rule targets. Only original
/// transmissions are ever dropped, so every forced loss is recoverable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossPosition {
    #[default]
    None,
    /// The final segment of each finite flow.
    LastSegment,
    /// The segment occupying the last slot of the sender's window.
    WindowTail,
    /// A segment in the first tenth of the window (at least slot 1).
    WindowHead,
}

impl LossPosition {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(LossPosition::None),
            "last-segment" => Some(LossPosition::LastSegment),
            "window-tail" => Some(LossPosition::WindowTail),
            "window-head" => Some(LossPosition::WindowHead),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossPosition::None => "none",
            LossPosition::LastSegment => "last-segment",
            LossPosition::WindowTail => "window-tail",
            LossPosition::WindowHead => "window-head",
        }
    }
}

/// Deterministic loss injection applied on host egress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LossRule {
    pub position: LossPosition,
    /// Only windows of at least this many segments are eligible.
    pub min_window: u32,
    /// Cap on forced drops per flow; 0 means unlimited.
    pub max_per_flow: u32,
}

impl LossRule {
    pub fn is_active(&self) -> bool {
        self.position != LossPosition::None
    }

    pub fn should_drop(&self, seg: &Segment, already_dropped: u32) -> bool {
        if !seg.is_data() || seg.meta.tx_count != 1 || seg.meta.spoofed {
            return false;
        }
        if self.max_per_flow > 0 && already_dropped >= self.max_per_flow {
            return false;
        }
        let m = &seg.meta;
        if m.window_len < self.min_window {
            return false;
        }
        match self.position {
            LossPosition::None => false,
            LossPosition::LastSegment => m.last_of_flow,
            LossPosition::WindowTail => m.window_index >= m.window_len,
            LossPosition::WindowHead => m.window_index <= (m.window_len / 10).max(1),
        }
    }
}
