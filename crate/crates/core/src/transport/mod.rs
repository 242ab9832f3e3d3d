//! Traffic endpoints above PDCP.

pub mod tcp;
pub mod udp;

pub use tcp::{AckRecord, CcState, TcpConfig, TcpReceiver, TcpSegment, TcpSender, TcpStats};
pub use udp::{UdpDatagram, UdpSink, UdpSource};
