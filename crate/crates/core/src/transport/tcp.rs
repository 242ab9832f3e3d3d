//! Segment-granular NewReno sender and cumulative-ACK receiver.
//!
//! Sequence numbers count segments, not bytes. The sender always has data
//! to send (saturated application) and is limited only by `min(cwnd, rwnd)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::sim::{SimTime, TimerCommand};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpConfig {
    pub segment_bytes: u32,
    pub initial_cwnd: f64,
    pub initial_rto: SimTime,
    pub min_rto: SimTime,
    pub max_rto: SimTime,
    pub rwnd_segments: u64,
    pub dupack_threshold: u32,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            segment_bytes: 1400,
            initial_cwnd: 10.0,
            initial_rto: SimTime::from_millis(200),
            min_rto: SimTime::from_millis(200),
            max_rto: SimTime::from_secs(60),
            rwnd_segments: 1 << 20,
            dupack_threshold: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcState {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpSegment {
    pub seq: u64,
    pub retransmission: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenderOutput {
    pub segments: Vec<TcpSegment>,
    pub timer: TimerCommand,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpStats {
    pub segments_sent: u64,
    pub retransmissions: u64,
    pub fast_retransmits: u64,
    pub rto_events: u64,
    pub acks_received: u64,
    pub dup_acks_received: u64,
}

#[derive(Debug, Clone, Copy)]
struct SendRecord {
    at: SimTime,
    retransmitted: bool,
}

#[derive(Debug, Clone)]
pub struct TcpSender {
    cfg: TcpConfig,
    cwnd: f64,
    ssthresh: f64,
    state: CcState,
    snd_una: u64,
    snd_nxt: u64,
    // one past the highest segment ever sent
    high_water: u64,
    dupacks: u32,
    recover: Option<u64>,
    // partial ACKs seen in the current recovery
    partial_acks: u32,
    srtt_us: Option<f64>,
    rttvar_us: f64,
    rto: SimTime,
    rto_deadline: Option<SimTime>,
    in_flight: BTreeMap<u64, SendRecord>,
    stats: TcpStats,
}

impl TcpSender {
    pub fn new(cfg: TcpConfig) -> Self {
        assert!(cfg.initial_cwnd >= 1.0);
        TcpSender {
            cfg,
            cwnd: cfg.initial_cwnd,
            ssthresh: f64::INFINITY,
            state: CcState::SlowStart,
            snd_una: 0,
            snd_nxt: 0,
            high_water: 0,
            dupacks: 0,
            recover: None,
            partial_acks: 0,
            srtt_us: None,
            rttvar_us: 0.0,
            rto: cfg.initial_rto,
            rto_deadline: None,
            in_flight: BTreeMap::new(),
            stats: TcpStats::default(),
        }
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn state(&self) -> CcState {
        self.state
    }

    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> u64 {
        self.snd_nxt
    }

    pub fn high_water(&self) -> u64 {
        self.high_water
    }

    pub fn flight(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    pub fn rto(&self) -> SimTime {
        self.rto
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    pub fn srtt(&self) -> Option<SimTime> {
        self.srtt_us.map(|s| SimTime::from_micros(s.round() as u64))
    }

    pub fn stats(&self) -> &TcpStats {
        &self.stats
    }

    fn window(&self) -> u64 {
        (self.cwnd.floor() as u64).max(1).min(self.cfg.rwnd_segments)
    }

    /// Sends the initial window.
    pub fn start(&mut self, now: SimTime) -> SenderOutput {
        let before = self.rto_deadline;
        let mut segments = Vec::new();
        self.fill(now, &mut segments);
        self.output(before, segments)
    }

    pub fn on_ack(&mut self, ack: u64, now: SimTime) -> SenderOutput {
        let before = self.rto_deadline;
        let mut segments = Vec::new();
        self.stats.acks_received += 1;

        if ack > self.snd_una {
            let acked = ack - self.snd_una;
            if let Some(rec) = self.in_flight.get(&(ack - 1)) {
                if !rec.retransmitted {
                    self.rtt_sample(now - rec.at);
                }
            }
            self.in_flight = self.in_flight.split_off(&ack);
            self.snd_una = ack;
            if self.snd_nxt < self.snd_una {
                self.snd_nxt = self.snd_una;
            }
            self.dupacks = 0;
            let mut rearm = true;
            match self.state {
                CcState::FastRecovery => {
                    if self.recover.is_some_and(|r| ack > r) {
                        self.cwnd = self.ssthresh;
                        self.state = CcState::CongestionAvoidance;
                    } else {
                        // partial ACK: the next hole is lost too. Only the
                        // first one re-arms the timer, so a long run of holes
                        // ends in a timeout instead of one repair per RTT.
                        rearm = self.partial_acks == 0;
                        self.partial_acks += 1;
                        self.retransmit(self.snd_una, now, &mut segments);
                        self.cwnd = (self.cwnd - acked as f64 + 1.0).max(1.0);
                    }
                }
                CcState::SlowStart => {
                    self.cwnd += 1.0;
                    if self.cwnd >= self.ssthresh {
                        self.state = CcState::CongestionAvoidance;
                    }
                }
                CcState::CongestionAvoidance => {
                    self.cwnd += 1.0 / self.cwnd;
                }
            }
            if self.snd_nxt == self.snd_una {
                self.rto_deadline = None;
            } else if rearm || self.rto_deadline.is_none() {
                self.rto_deadline = Some(now + self.rto);
            }
        } else if ack == self.snd_una && self.snd_nxt > self.snd_una {
            self.stats.dup_acks_received += 1;
            self.dupacks += 1;
            if self.state == CcState::FastRecovery {
                self.cwnd += 1.0;
            } else if self.dupacks == self.cfg.dupack_threshold
                && self.recover.is_none_or(|r| self.snd_una > r)
            {
                self.ssthresh = (self.flight() as f64 / 2.0).max(2.0);
                self.stats.fast_retransmits += 1;
                self.retransmit(self.snd_una, now, &mut segments);
                self.cwnd = self.ssthresh + f64::from(self.cfg.dupack_threshold);
                self.recover = Some(self.high_water - 1);
                self.partial_acks = 0;
                self.state = CcState::FastRecovery;
            }
        }

        self.fill(now, &mut segments);
        self.output(before, segments)
    }

    /// Handles expiry of the retransmission timer.
    pub fn on_rto(&mut self, now: SimTime) -> SenderOutput {
        let before = self.rto_deadline;
        self.rto_deadline = None;
        let mut segments = Vec::new();
        if self.snd_nxt == self.snd_una && self.high_water == self.snd_una {
            return self.output(before, segments);
        }
        self.stats.rto_events += 1;
        self.ssthresh = (self.flight() as f64 / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.state = CcState::SlowStart;
        self.dupacks = 0;
        self.recover = Some(self.high_water.saturating_sub(1));
        self.rto = (self.rto + self.rto).min(self.cfg.max_rto);
        // go back to the first unacknowledged segment
        self.snd_nxt = self.snd_una;
        self.fill(now, &mut segments);
        self.output(before, segments)
    }

    fn output(&self, before: Option<SimTime>, segments: Vec<TcpSegment>) -> SenderOutput {
        let timer = match (before, self.rto_deadline) {
            (a, b) if a == b => TimerCommand::Keep,
            (_, Some(at)) => TimerCommand::Start(at),
            (Some(_), None) => TimerCommand::Stop,
            (None, None) => TimerCommand::Keep,
        };
        SenderOutput { segments, timer }
    }

    fn fill(&mut self, now: SimTime, out: &mut Vec<TcpSegment>) {
        while self.flight() < self.window() {
            let seq = self.snd_nxt;
            self.snd_nxt += 1;
            if seq < self.high_water {
                self.retransmit(seq, now, out);
            } else {
                self.high_water = seq + 1;
                self.stats.segments_sent += 1;
                self.in_flight.insert(
                    seq,
                    SendRecord {
                        at: now,
                        retransmitted: false,
                    },
                );
                out.push(TcpSegment {
                    seq,
                    retransmission: false,
                });
            }
            if self.rto_deadline.is_none() {
                self.rto_deadline = Some(now + self.rto);
            }
        }
    }

    fn retransmit(&mut self, seq: u64, now: SimTime, out: &mut Vec<TcpSegment>) {
        self.stats.segments_sent += 1;
        self.stats.retransmissions += 1;
        self.in_flight.insert(
            seq,
            SendRecord {
                at: now,
                retransmitted: true,
            },
        );
        out.push(TcpSegment {
            seq,
            retransmission: true,
        });
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto);
        }
    }

    fn rtt_sample(&mut self, rtt: SimTime) {
        let r = rtt.as_micros() as f64;
        match self.srtt_us {
            None => {
                self.srtt_us = Some(r);
                self.rttvar_us = r / 2.0;
            }
            Some(srtt) => {
                self.rttvar_us = 0.75 * self.rttvar_us + 0.25 * (srtt - r).abs();
                self.srtt_us = Some(0.875 * srtt + 0.125 * r);
            }
        }
        let srtt = self.srtt_us.expect("set above");
        let rto_us = srtt + (4.0 * self.rttvar_us).max(1_000.0);
        self.rto = SimTime::from_micros(rto_us.ceil() as u64)
            .max(self.cfg.min_rto)
            .min(self.cfg.max_rto);
    }
}

/// One ACK emitted by the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckRecord {
    /// Next segment expected (lowest missing).
    pub ack: u64,
    pub duplicate: bool,
    /// Segments newly handed to the application by this arrival.
    pub newly_delivered: u64,
}

#[derive(Debug, Clone, Default)]
pub struct TcpReceiver {
    rcv_nxt: u64,
    out_of_order: BTreeSet<u64>,
    pub dup_acks_sent: u64,
}

impl TcpReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rcv_nxt(&self) -> u64 {
        self.rcv_nxt
    }

    pub fn on_segment(&mut self, seq: u64) -> AckRecord {
        let before = self.rcv_nxt;
        if seq == self.rcv_nxt {
            self.rcv_nxt += 1;
            while self.out_of_order.remove(&self.rcv_nxt) {
                self.rcv_nxt += 1;
            }
        } else if seq > self.rcv_nxt {
            self.out_of_order.insert(seq);
        }
        let duplicate = self.rcv_nxt == before;
        if duplicate {
            self.dup_acks_sent += 1;
        }
        AckRecord {
            ack: self.rcv_nxt,
            duplicate,
            newly_delivered: self.rcv_nxt - before,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sender(cwnd: f64) -> TcpSender {
        TcpSender::new(TcpConfig {
            initial_cwnd: cwnd,
            ..TcpConfig::default()
        })
    }

    fn seqs(out: &SenderOutput) -> Vec<u64> {
        out.segments.iter().map(|s| s.seq).collect()
    }

    #[test]
    fn receiver_cumulative_acks() {
        let mut rx = TcpReceiver::new();
        let acks: Vec<u64> = [0, 1, 2].iter().map(|&s| rx.on_segment(s).ack).collect();
        assert_eq!(acks, vec![1, 2, 3]);

        let mut rx = TcpReceiver::new();
        assert_eq!(rx.on_segment(0).ack, 1);
        let dup = rx.on_segment(2);
        assert_eq!((dup.ack, dup.duplicate), (1, true));

        let mut rx = TcpReceiver::new();
        let acks: Vec<u64> = [0, 2, 1].iter().map(|&s| rx.on_segment(s).ack).collect();
        assert_eq!(acks, vec![1, 1, 3]);
    }

    #[test]
    fn receiver_ignores_old_segments() {
        let mut rx = TcpReceiver::new();
        rx.on_segment(0);
        let again = rx.on_segment(0);
        assert_eq!((again.ack, again.duplicate, again.newly_delivered), (1, true, 0));
    }

    #[test]
    fn initial_window_and_timer() {
        let mut tx = sender(10.0);
        let out = tx.start(SimTime::ZERO);
        assert_eq!(seqs(&out), (0..10).collect::<Vec<_>>());
        assert_eq!(out.timer, TimerCommand::Start(SimTime::from_millis(200)));
    }

    #[test]
    fn slow_start_grows_one_per_ack() {
        let mut tx = sender(2.0);
        tx.start(SimTime::ZERO);
        tx.on_ack(1, SimTime::from_millis(20));
        tx.on_ack(2, SimTime::from_millis(21));
        assert_eq!(tx.cwnd(), 4.0);
        assert_eq!(tx.state(), CcState::SlowStart);
    }

    #[test]
    fn congestion_avoidance_grows_by_inverse_cwnd() {
        let mut tx = sender(4.0);
        tx.ssthresh = 4.0;
        tx.state = CcState::CongestionAvoidance;
        tx.start(SimTime::ZERO);
        tx.on_ack(1, SimTime::from_millis(20));
        assert!((tx.cwnd() - 4.25).abs() < 1e-12);
    }

    #[test]
    fn third_dupack_triggers_fast_retransmit() {
        let mut tx = sender(20.0);
        tx.start(SimTime::ZERO);
        assert_eq!(tx.flight(), 20);
        let t = SimTime::from_millis(30);
        assert!(tx.on_ack(0, t).segments.is_empty());
        assert!(tx.on_ack(0, t).segments.is_empty());
        let out = tx.on_ack(0, t);
        assert_eq!(out.segments, vec![TcpSegment { seq: 0, retransmission: true }]);
        assert_eq!(tx.ssthresh(), 10.0);
        assert_eq!(tx.state(), CcState::FastRecovery);
        assert_eq!(tx.stats().fast_retransmits, 1);
    }

    #[test]
    fn full_ack_ends_recovery() {
        let mut tx = sender(20.0);
        tx.start(SimTime::ZERO);
        for _ in 0..3 {
            tx.on_ack(0, SimTime::from_millis(30));
        }
        tx.on_ack(20, SimTime::from_millis(60));
        assert_eq!(tx.state(), CcState::CongestionAvoidance);
        assert_eq!(tx.cwnd(), 10.0);
    }

    #[test]
    fn partial_ack_retransmits_next_hole() {
        let mut tx = sender(20.0);
        tx.start(SimTime::ZERO);
        for _ in 0..3 {
            tx.on_ack(0, SimTime::from_millis(30));
        }
        let out = tx.on_ack(5, SimTime::from_millis(60));
        assert_eq!(out.segments[0], TcpSegment { seq: 5, retransmission: true });
        assert_eq!(tx.state(), CcState::FastRecovery);
    }

    #[test]
    fn rto_collapses_window_and_backs_off() {
        let mut tx = sender(10.0);
        tx.start(SimTime::ZERO);
        let out = tx.on_rto(SimTime::from_millis(200));
        assert_eq!(tx.cwnd(), 1.0);
        assert_eq!(tx.ssthresh(), 5.0);
        assert_eq!(tx.state(), CcState::SlowStart);
        assert_eq!(out.segments, vec![TcpSegment { seq: 0, retransmission: true }]);
        assert_eq!(tx.rto(), SimTime::from_millis(400));
        assert_eq!(out.timer, TimerCommand::Start(SimTime::from_millis(600)));
    }

    #[test]
    fn rto_backoff_caps_at_sixty_seconds() {
        let mut tx = sender(1.0);
        tx.start(SimTime::ZERO);
        let mut now = SimTime::ZERO;
        for _ in 0..20 {
            now = tx.rto_deadline().unwrap();
            tx.on_rto(now);
        }
        assert_eq!(tx.rto(), SimTime::from_secs(60));
        assert!(now > SimTime::from_secs(60));
    }

    #[test]
    fn rtt_sample_sets_rto_with_floor() {
        let mut tx = sender(1.0);
        tx.start(SimTime::ZERO);
        tx.on_ack(1, SimTime::from_millis(40));
        assert_eq!(tx.srtt(), Some(SimTime::from_millis(40)));
        // 40 + 4 * 20 = 120 ms, floored at 200 ms
        assert_eq!(tx.rto(), SimTime::from_millis(200));
    }

    #[test]
    fn timer_stops_when_everything_is_acked() {
        let mut tx = TcpSender::new(TcpConfig {
            initial_cwnd: 2.0,
            rwnd_segments: 2,
            ..TcpConfig::default()
        });
        tx.start(SimTime::ZERO);
        let out = tx.on_ack(2, SimTime::from_millis(20));
        // window refills immediately, so the timer is re-armed, not stopped
        assert_eq!(out.timer, TimerCommand::Start(SimTime::from_millis(220)));
        assert_eq!(seqs(&out), vec![2, 3]);
    }

    proptest! {
        /// Drives a sender against an adversarial ACK stream.
        #[test]
        fn sender_invariants(events in prop::collection::vec((0u8..4, 0u64..8), 1..300)) {
            let mut tx = sender(10.0);
            let mut now = SimTime::ZERO;
            tx.start(now);
            let mut last_una = 0;
            for (kind, jump) in events {
                now += SimTime::from_millis(1);
                let out = match kind {
                    0 => tx.on_ack(tx.snd_una(), now),
                    1 | 2 => {
                        let ack = (tx.snd_una() + jump).min(tx.high_water());
                        tx.on_ack(ack, now)
                    }
                    _ => tx.on_rto(now),
                };
                prop_assert!(tx.cwnd() >= 1.0);
                prop_assert!(tx.ssthresh() >= 2.0);
                prop_assert!(tx.snd_una() <= tx.snd_nxt());
                prop_assert!(tx.snd_una() >= last_una);
                prop_assert!(tx.snd_una() <= tx.high_water());
                prop_assert!(tx.rto() <= SimTime::from_secs(60));
                let new_data = out.segments.iter().filter(|s| !s.retransmission).count();
                if new_data > 0 {
                    prop_assert!(tx.flight() as f64 <= tx.cwnd());
                }
                last_una = tx.snd_una();
            }
        }
    }
}
