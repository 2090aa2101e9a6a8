//! TCP endpoints: segments, sequence arithmetic, sender and receiver.

pub mod config;
pub mod receiver;
pub mod segment;
pub mod sender;
pub mod seq;

pub use config::{TcpConfig, TcpVariant};
pub use receiver::{ReceiverCounters, TcpReceiver};
pub use segment::{
    fold_digest, payload_digest, Direction, Flags, FlowKey, SackBlock, SegMeta, Segment,
    HEADER_BYTES, MSS,
};
pub use sender::{RecoveryKind, RetxEpisode, SenderCounters, SenderOutput, SenderState, TcpSender};
pub use seq::{seq_diff, seq_ge, seq_gt, seq_le, seq_lt};
