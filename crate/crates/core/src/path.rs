//! One radio leg: optional backhaul delay, drop-tail FIFO, trace-driven
//! serialization, propagation delay and independent Bernoulli loss.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::pdcp::PdcpPdu;
use crate::sim::{RandomStream, SimTime};
use crate::trace::LinkCapacity;

#[derive(Debug, Clone)]
pub struct PathParams {
    pub id: String,
    /// Delay between the anchor and this leg's transmitter; zero for the
    /// anchor's own air interface.
    pub backhaul_delay: SimTime,
    pub capacity: LinkCapacity,
    /// Bytes admitted to the queue, counting PDUs still in the backhaul.
    pub queue_limit_bytes: u64,
    pub prop_delay: SimTime,
    pub loss_prob: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStats {
    pub id: String,
    pub enqueued: u64,
    pub dequeued: u64,
    pub dropped_overflow: u64,
    pub dropped_loss: u64,
    /// PDUs that left the link intact and were handed to propagation.
    pub delivered: u64,
    pub bytes_sent: u64,
    /// Bytes serialized in each whole second.
    pub tx_bytes_per_second: Vec<u64>,
    /// Queue bytes sampled at each second boundary.
    pub queue_bytes_per_second: Vec<u64>,
    /// Capacity integrated over the run, bits.
    pub capacity_bits: u64,
}

#[derive(Debug, Clone)]
struct Queued {
    eligible_at: SimTime,
    pdu: PdcpPdu,
}

#[derive(Debug, Clone)]
struct InService {
    pdu: PdcpPdu,
    finish: SimTime,
}

/// What the caller must schedule after polling an idle path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathPoll {
    /// Nothing queued.
    Idle,
    /// A transmission is already under way.
    Busy,
    /// The head PDU started serializing and completes at this time.
    Started(SimTime),
    /// The head PDU is still crossing the backhaul until this time.
    WaitUntil(SimTime),
    /// The link never transmits again.
    Stalled,
}

/// Outcome of a completed transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Departure {
    /// The PDU reaches the receiver at `arrive_at`.
    Arrives { pdu: PdcpPdu, arrive_at: SimTime },
    Lost(PdcpPdu),
}

#[derive(Debug)]
pub struct RadioPath {
    params: PathParams,
    queue: VecDeque<Queued>,
    queued_bytes: u64,
    in_service: Option<InService>,
    in_propagation: u64,
    rng: RandomStream,
    stats: PathStats,
}

impl RadioPath {
    pub fn new(params: PathParams, rng: RandomStream) -> Self {
        assert!((0.0..=1.0).contains(&params.loss_prob), "loss_prob must be in [0, 1]");
        let stats = PathStats {
            id: params.id.clone(),
            ..PathStats::default()
        };
        RadioPath {
            params,
            queue: VecDeque::new(),
            queued_bytes: 0,
            in_service: None,
            in_propagation: 0,
            rng,
            stats,
        }
    }

    pub fn params(&self) -> &PathParams {
        &self.params
    }

    pub fn stats(&self) -> &PathStats {
        &self.stats
    }

    pub fn queued_bytes(&self) -> u64 {
        self.queued_bytes
    }

    pub fn queued_pdus(&self) -> usize {
        self.queue.len()
    }

    pub fn is_busy(&self) -> bool {
        self.in_service.is_some()
    }

    pub fn in_propagation(&self) -> u64 {
        self.in_propagation
    }

    pub fn rate_at(&self, t: SimTime) -> f64 {
        self.params.capacity.rate_at(t)
    }

    /// PDUs currently held anywhere on the path: queue, backhaul, link or air.
    pub fn held_pdus(&self) -> impl Iterator<Item = &PdcpPdu> + '_ {
        self.queue
            .iter()
            .map(|q| &q.pdu)
            .chain(self.in_service.iter().map(|s| &s.pdu))
    }

    /// Admits `pdu` unless the queue would exceed its byte limit. The PDU is
    /// eligible for serialization once it has crossed the backhaul.
    pub fn enqueue(&mut self, pdu: PdcpPdu, now: SimTime) -> bool {
        self.stats.enqueued += 1;
        let size = u64::from(pdu.size_bytes);
        if self.queued_bytes + size > self.params.queue_limit_bytes {
            self.stats.dropped_overflow += 1;
            return false;
        }
        self.queued_bytes += size;
        let eligible_at = now + self.params.backhaul_delay;
        if let Some(last) = self.queue.back() {
            debug_assert!(last.eligible_at <= eligible_at);
        }
        self.queue.push_back(Queued { eligible_at, pdu });
        true
    }

    /// Starts serializing the head PDU if the link is idle and the PDU has
    /// crossed the backhaul.
    pub fn poll(&mut self, now: SimTime) -> PathPoll {
        if self.in_service.is_some() {
            return PathPoll::Busy;
        }
        let Some(head) = self.queue.front() else {
            return PathPoll::Idle;
        };
        if head.eligible_at > now {
            return PathPoll::WaitUntil(head.eligible_at);
        }
        let bits = u64::from(head.pdu.size_bytes) * 8;
        let Some(finish) = self.params.capacity.finish_time(now, bits) else {
            return PathPoll::Stalled;
        };
        let head = self.queue.pop_front().expect("peeked");
        self.queued_bytes -= u64::from(head.pdu.size_bytes);
        self.stats.dequeued += 1;
        self.in_service = Some(InService {
            pdu: head.pdu,
            finish,
        });
        PathPoll::Started(finish)
    }

    /// Completes the transmission in progress; `now` must be its finish time.
    pub fn complete(&mut self, now: SimTime) -> Departure {
        let InService { pdu, finish } = self.in_service.take().expect("no transmission in progress");
        debug_assert_eq!(finish, now);
        let size = u64::from(pdu.size_bytes);
        self.stats.bytes_sent += size;
        let sec = now.saturating_sub(SimTime::from_micros(1)).whole_seconds() as usize;
        bump(&mut self.stats.tx_bytes_per_second, sec, size);
        if self.rng.bernoulli(self.params.loss_prob) {
            self.stats.dropped_loss += 1;
            Departure::Lost(pdu)
        } else {
            self.stats.delivered += 1;
            self.in_propagation += 1;
            Departure::Arrives {
                pdu,
                arrive_at: now + self.params.prop_delay,
            }
        }
    }

    /// Called when a propagated PDU reaches the receiver.
    pub fn mark_arrived(&mut self) {
        self.in_propagation = self
            .in_propagation
            .checked_sub(1)
            .expect("arrival without a PDU in propagation");
    }

    pub fn sample_queue(&mut self, second: u64) {
        let sec = second as usize;
        if self.stats.queue_bytes_per_second.len() <= sec {
            self.stats.queue_bytes_per_second.resize(sec + 1, 0);
        }
        self.stats.queue_bytes_per_second[sec] = self.queued_bytes;
    }

    /// Final statistics for a run of `duration`.
    pub fn finish_stats(&self, duration: SimTime) -> PathStats {
        let mut stats = self.stats.clone();
        let secs = duration.as_micros().div_ceil(1_000_000) as usize;
        stats.tx_bytes_per_second.resize(secs.max(stats.tx_bytes_per_second.len()), 0);
        stats.capacity_bits = self.params.capacity.integrated_bits(duration).round() as u64;
        stats
    }
}

pub(crate) fn bump(series: &mut Vec<u64>, idx: usize, by: u64) {
    if series.len() <= idx {
        series.resize(idx + 1, 0);
    }
    series[idx] += by;
}
