use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

/// Constant-bit-rate source. SDU `k` (1-based) leaves at exactly
/// `start + k * sdu_bits / rate`, truncated to the microsecond, so the
/// schedule never drifts.
#[derive(Debug, Clone)]
pub struct UdpSource {
    rate_bps: u64,
    sdu_bytes: u32,
    start: SimTime,
    stop: SimTime,
    sent: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UdpDatagram {
    pub seq: u64,
    pub size_bytes: u32,
}

impl UdpSource {
    /// Emits SDUs strictly before `stop`.
    pub fn new(rate_bps: u64, sdu_bytes: u32, start: SimTime, stop: SimTime) -> Self {
        assert!(sdu_bytes > 0);
        UdpSource {
            rate_bps,
            sdu_bytes,
            start,
            stop,
            sent: 0,
        }
    }

    /// Offset of SDU `k` from the start, in microseconds.
    fn offset_us(&self, k: u64) -> u64 {
        let bits = u128::from(self.sdu_bytes) * 8;
        (u128::from(k) * bits * 1_000_000 / u128::from(self.rate_bps)) as u64
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    /// Time of the next SDU, if any remains before `stop`.
    pub fn next_tick(&self) -> Option<SimTime> {
        if self.rate_bps == 0 {
            return None;
        }
        let t = self.start + SimTime::from_micros(self.offset_us(self.sent + 1));
        (t < self.stop).then_some(t)
    }

    /// Emits the SDU due at `now`.
    pub fn udp_tick(&mut self, now: SimTime) -> UdpDatagram {
        debug_assert_eq!(self.next_tick(), Some(now));
        let seq = self.sent;
        self.sent += 1;
        UdpDatagram {
            seq,
            size_bytes: self.sdu_bytes,
        }
    }
}

/// Counts what reaches the application.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UdpSink {
    pub received: u64,
    pub bytes: u64,
    /// Datagrams arriving after a higher sequence number.
    pub out_of_order: u64,
    highest: Option<u64>,
}

impl UdpSink {
    pub fn on_delivery(&mut self, dgram: UdpDatagram) {
        self.received += 1;
        self.bytes += u64::from(dgram.size_bytes);
        match self.highest {
            Some(h) if dgram.seq < h => self.out_of_order += 1,
            _ => self.highest = Some(dgram.seq),
        }
    }
}
