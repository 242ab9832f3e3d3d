//! One simulation run: wires traffic, the PDCP anchor, the paths and the
//! receiver to the event scheduler and collects metrics.

use std::collections::{HashSet, VecDeque};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig, TrafficKind};
use crate::metrics::{self, EmitError, MetricsRecorder, OutputFormat, RunInfo, RunMetrics};
use crate::path::{Departure, PathPoll, RadioPath};
use crate::pdcp::{
    Delivery, DiscardKind, FlowPolicy, PathSnapshot, PdcpPdu, PdcpTx, ReorderConfig, ReorderState,
    RxOutcome,
};
use crate::sim::{
    EventHandle, RandomStream, Scheduler, SchedulerCounters, SimTime, TimerCommand, RNG_ALGORITHM,
};
use crate::transport::{TcpReceiver, TcpSender, UdpDatagram, UdpSink, UdpSource};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("accounting check failed: {0}")]
    Accounting(String),
    #[error(transparent)]
    Emit(#[from] EmitError),
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub info: RunInfo,
    pub metrics: RunMetrics,
    pub counters: SchedulerCounters,
}

impl ScenarioOutput {
    pub fn write(&self, dir: &Path, formats: &[OutputFormat]) -> Result<Vec<PathBuf>, EmitError> {
        metrics::emit(dir, &self.info, &self.metrics, formats)
    }

    pub fn csv(&self) -> String {
        metrics::to_csv(&self.info, &self.metrics)
    }

    pub fn json(&self) -> String {
        metrics::to_json(&self.info, &self.metrics).expect("metrics serialize")
    }
}

#[derive(Debug)]
enum Ev {
    UdpTick,
    TcpStart,
    /// The head PDU of a path finished crossing the backhaul.
    PathWake(usize),
    TxDone(usize),
    Arrival(usize, PdcpPdu),
    ReorderExpiry,
    TcpRto,
    Ack(u64),
    Second(u64),
}

/// Where one SDU ended up. Indexed by COUNT, which equals the SDU id.
#[derive(Debug, Clone, Copy, Default)]
struct Fate {
    copies: u8,
    dropped: u8,
    /// Copies in a queue, on a link or in the air.
    in_system: u8,
    skipped: bool,
    stale_arrival: bool,
    /// A copy reached the receiver and was thrown away, whatever the reason.
    discarded_arrival: bool,
    delivered: bool,
}

/// The queue level a path reported `delay` ago.
#[derive(Debug)]
struct DelayedView {
    log: VecDeque<(SimTime, u64)>,
}

impl DelayedView {
    fn new() -> Self {
        DelayedView {
            log: VecDeque::from([(SimTime::ZERO, 0)]),
        }
    }

    fn note(&mut self, at: SimTime, bytes: u64) {
        self.log.push_back((at, bytes));
    }

    fn at(&mut self, t: SimTime) -> u64 {
        while self.log.len() > 1 && self.log[1].0 <= t {
            self.log.pop_front();
        }
        self.log[0].1
    }
}

enum Transport {
    Udp {
        src: UdpSource,
        sink: UdpSink,
    },
    Tcp {
        snd: TcpSender,
        rcv: TcpReceiver,
        /// Segment carried by each SDU.
        seg_of: Vec<u64>,
        seg_bytes: u64,
        timer: Option<EventHandle>,
    },
}

type Sched = Scheduler<Ev>;

struct Run<'o> {
    paths: Vec<RadioPath>,
    wake_pending: Vec<bool>,
    views: Vec<DelayedView>,
    feedback_delay: SimTime,
    tx: PdcpTx,
    rx: ReorderState,
    reorder_timer: Option<EventHandle>,
    transport: Transport,
    uplink_delay: SimTime,
    recorder: MetricsRecorder,
    ledger: Vec<Fate>,
    end: SimTime,
    observer: &'o mut dyn FnMut(&Delivery),
}

fn at(sched: &mut Sched, t: SimTime, ev: Ev) -> EventHandle {
    sched.schedule(t, ev).expect("handlers only schedule forward in time")
}

impl Run<'_> {
    fn handle(&mut self, sched: &mut Sched, ev: Ev) {
        let now = sched.now();
        match ev {
            Ev::UdpTick => {
                let Transport::Udp { src, .. } = &mut self.transport else {
                    unreachable!("udp tick without a udp source")
                };
                let d = src.udp_tick(now);
                let next = src.next_tick();
                self.submit(sched, d.size_bytes, now);
                if let Some(t) = next {
                    at(sched, t, Ev::UdpTick);
                }
            }
            Ev::TcpStart => {
                let Transport::Tcp { snd, .. } = &mut self.transport else {
                    unreachable!()
                };
                let out = snd.start(now);
                self.tcp_output(sched, out, now);
            }
            Ev::Ack(ack) => {
                let Transport::Tcp { snd, .. } = &mut self.transport else {
                    unreachable!()
                };
                let out = snd.on_ack(ack, now);
                self.tcp_output(sched, out, now);
            }
            Ev::TcpRto => {
                let Transport::Tcp { snd, timer, .. } = &mut self.transport else {
                    unreachable!()
                };
                *timer = None;
                let out = snd.on_rto(now);
                self.tcp_output(sched, out, now);
            }
            Ev::PathWake(p) => {
                self.wake_pending[p] = false;
                self.service(sched, p, now);
            }
            Ev::TxDone(p) => {
                match self.paths[p].complete(now) {
                    Departure::Arrives { pdu, arrive_at } => {
                        at(sched, arrive_at, Ev::Arrival(p, pdu));
                    }
                    Departure::Lost(pdu) => {
                        let f = &mut self.ledger[pdu.sdu_id as usize];
                        f.dropped += 1;
                        f.in_system -= 1;
                    }
                }
                self.service(sched, p, now);
            }
            Ev::Arrival(p, pdu) => {
                self.paths[p].mark_arrived();
                self.ledger[pdu.sdu_id as usize].in_system -= 1;
                let out = self.rx.receive(&pdu, now);
                self.rx_outcome(sched, out, now);
            }
            Ev::ReorderExpiry => {
                self.reorder_timer = None;
                let out = self.rx.on_t_reordering_expiry(now);
                self.rx_outcome(sched, out, now);
            }
            Ev::Second(s) => {
                for path in &mut self.paths {
                    path.sample_queue(s);
                }
                let next = SimTime::from_secs(s + 1);
                if next < self.end {
                    at(sched, next, Ev::Second(s + 1));
                }
            }
        }
    }

    /// Hands one SDU to the PDCP transmitter and enqueues its copies.
    fn submit(&mut self, sched: &mut Sched, size: u32, now: SimTime) -> u64 {
        if self.tx.policy() == FlowPolicy::QueueAware {
            let seen = now.saturating_sub(self.feedback_delay);
            for i in 0..self.paths.len() {
                let queue_bytes = if self.feedback_delay == SimTime::ZERO {
                    self.paths[i].queued_bytes()
                } else {
                    self.views[i].at(seen)
                };
                let rate_bps = self.paths[i].rate_at(seen);
                self.tx.update_snapshot(i, PathSnapshot { queue_bytes, rate_bps });
            }
        }
        let sdu_id = self.tx.next_count();
        let (pdu, decision) = self.tx.submit_sdu(sdu_id, size, now);
        debug_assert_eq!(pdu.count, sdu_id);
        self.recorder.record_submission();
        self.ledger.push(Fate {
            copies: decision.targets().len() as u8,
            ..Fate::default()
        });
        for &p in decision.targets() {
            let mut copy = pdu.clone();
            copy.path = Some(p);
            let f = &mut self.ledger[sdu_id as usize];
            if self.paths[p].enqueue(copy, now) {
                f.in_system += 1;
                self.note_queue(p, now);
                self.service(sched, p, now);
            } else {
                f.dropped += 1;
            }
        }
        sdu_id
    }

    fn note_queue(&mut self, p: usize, now: SimTime) {
        if self.feedback_delay > SimTime::ZERO {
            self.views[p].note(now, self.paths[p].queued_bytes());
        }
    }

    fn service(&mut self, sched: &mut Sched, p: usize, now: SimTime) {
        match self.paths[p].poll(now) {
            PathPoll::Started(done) => {
                at(sched, done, Ev::TxDone(p));
                self.note_queue(p, now);
            }
            PathPoll::WaitUntil(t) => {
                if !self.wake_pending[p] {
                    self.wake_pending[p] = true;
                    at(sched, t, Ev::PathWake(p));
                }
            }
            PathPoll::Idle | PathPoll::Busy | PathPoll::Stalled => {}
        }
    }

    fn tcp_output(&mut self, sched: &mut Sched, out: crate::transport::tcp::SenderOutput, now: SimTime) {
        let Transport::Tcp { timer, .. } = &mut self.transport else {
            unreachable!()
        };
        apply_timer(sched, timer, out.timer, Ev::TcpRto);
        for seg in out.segments {
            let size = match &self.transport {
                Transport::Tcp { seg_bytes, .. } => *seg_bytes as u32,
                Transport::Udp { .. } => unreachable!(),
            };
            let sdu = self.submit(sched, size, now);
            if let Transport::Tcp { seg_of, .. } = &mut self.transport {
                debug_assert_eq!(seg_of.len() as u64, sdu);
                seg_of.push(seg.seq);
            }
        }
    }

    fn rx_outcome(&mut self, sched: &mut Sched, out: RxOutcome, now: SimTime) {
        for count in &out.declared_lost {
            if let Some(f) = self.ledger.get_mut(*count as usize) {
                f.skipped = true;
            }
        }
        if let Some(d) = out.discarded {
            let f = &mut self.ledger[d.sdu_id as usize];
            f.discarded_arrival = true;
            if d.kind == DiscardKind::Stale {
                f.stale_arrival = true;
            }
        }
        apply_timer(sched, &mut self.reorder_timer, out.timer, Ev::ReorderExpiry);
        for d in &out.delivered {
            self.ledger[d.sdu_id as usize].delivered = true;
            self.recorder.record_delivery(d);
            (self.observer)(d);
            match &mut self.transport {
                Transport::Udp { sink, .. } => {
                    sink.on_delivery(UdpDatagram {
                        seq: d.sdu_id,
                        size_bytes: d.size_bytes,
                    });
                    self.recorder.record_app_bytes(u64::from(d.size_bytes), now);
                }
                Transport::Tcp {
                    rcv,
                    seg_of,
                    seg_bytes,
                    ..
                } => {
                    let rec = rcv.on_segment(seg_of[d.sdu_id as usize]);
                    if rec.newly_delivered > 0 {
                        self.recorder.record_app_bytes(rec.newly_delivered * *seg_bytes, now);
                    }
                    at(sched, now + self.uplink_delay, Ev::Ack(rec.ack));
                }
            }
        }
        let (bytes, pdus) = self.rx.occupancy();
        self.recorder.record_occupancy(bytes, pdus, now);
    }

    fn finish(self, events: u64, info: RunInfo) -> Result<RunMetrics, RunError> {
        let end = self.end;
        let mut m = self.recorder.finish(end);

        let buffered: HashSet<u64> = self.rx.buffered().map(|p| p.sdu_id).collect();
        let (mut delivered, mut stale, mut lost, mut dropped, mut residual) = (0u64, 0u64, 0u64, 0u64, 0u64);
        let mut in_system = 0u64;
        // copies thrown away under a wrongly inferred COUNT
        let mut desync = 0u64;
        for (id, f) in self.ledger.iter().enumerate() {
            in_system += u64::from(f.in_system);
            if f.delivered {
                delivered += 1;
            } else if f.skipped && f.stale_arrival {
                stale += 1;
            } else if f.skipped {
                lost += 1;
            } else if f.dropped == f.copies {
                dropped += 1;
            } else if f.in_system == 0 && f.discarded_arrival && !buffered.contains(&(id as u64)) {
                stale += 1;
                desync += 1;
            } else {
                residual += 1;
                if f.in_system == 0 && !buffered.contains(&(id as u64)) {
                    return Err(RunError::Accounting(format!(
                        "{}: SDU {id} is neither delivered, dropped, skipped nor held anywhere",
                        info.run_key
                    )));
                }
            }
        }
        let held: u64 = self
            .paths
            .iter()
            .map(|p| p.held_pdus().count() as u64 + p.in_propagation())
            .sum();
        let rs = self.rx.stats();
        // Once the receiver has inferred a wrong HFN its COUNT-based counters
        // no longer line up with SDU identities.
        let in_sync = rs.hfn_mismatches == 0;
        let checks = [
            (held == in_system, format!("paths hold {held} PDUs, ledger says {in_system}")),
            (
                !in_sync || delivered == rs.delivered,
                format!("{} deliveries for {delivered} distinct SDUs", rs.delivered),
            ),
            (
                !in_sync || rs.declared_lost == lost + stale,
                format!("receiver skipped {} COUNTs, ledger has {}", rs.declared_lost, lost + stale),
            ),
            (
                desync == 0 || !in_sync,
                format!("{desync} SDUs discarded on arrival without an HFN mismatch"),
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(RunError::Accounting(format!("{}: {msg}", info.run_key)));
            }
        }

        m.delivered = delivered;
        m.ooo_delivered = rs.ooo_delivered;
        m.stale_discarded = stale;
        m.declared_lost = lost;
        m.path_dropped = dropped;
        m.residual_in_flight = residual;
        m.duplicate_discarded = rs.duplicate_discarded;
        m.gaps_declared = rs.declared_lost;
        m.reorder_expiries = rs.expiries;
        m.hfn_mismatches = rs.hfn_mismatches;
        m.events_processed = events;
        m.paths = self.paths.iter().map(|p| p.finish_stats(end)).collect();
        if let Transport::Tcp { snd, .. } = &self.transport {
            m.tcp = Some(*snd.stats());
        }
        if !m.accounting_balances() {
            return Err(RunError::Accounting(format!("{}: fate buckets do not sum", info.run_key)));
        }
        Ok(m)
    }
}

fn apply_timer(sched: &mut Sched, slot: &mut Option<EventHandle>, cmd: TimerCommand, ev: Ev) {
    match cmd {
        TimerCommand::Keep => {}
        TimerCommand::Stop => {
            if let Some(h) = slot.take() {
                sched.cancel(h);
            }
        }
        TimerCommand::Start(t) => {
            if let Some(h) = slot.take() {
                sched.cancel(h);
            }
            *slot = Some(at(sched, t, ev));
        }
    }
}

/// Describes `cfg` for output files.
pub fn run_info(cfg: &ScenarioConfig) -> RunInfo {
    let policy = cfg.policy();
    RunInfo {
        run_key: cfg.name.clone(),
        mode: cfg.mode.name().to_string(),
        traffic: cfg.traffic.kind.name().to_string(),
        policy: policy.name().to_string(),
        policy_extension: policy.is_extension(),
        t_reordering_ms: cfg.t_reordering_ms,
        seed: cfg.seed,
        rng: RNG_ALGORITHM.to_string(),
    }
}

/// Runs one scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput, RunError> {
    run_scenario_observed(cfg, &mut |_| {})
}

/// Like [`run_scenario`], calling `observer` for every PDCP delivery in
/// delivery order.
pub fn run_scenario_observed(
    cfg: &ScenarioConfig,
    observer: &mut dyn FnMut(&Delivery),
) -> Result<ScenarioOutput, RunError> {
    cfg.validate()?;
    let info = run_info(cfg);
    let params = cfg.build_paths()?;
    let n = params.len();
    let paths: Vec<RadioPath> = params
        .into_iter()
        .map(|p| {
            let rng = RandomStream::substream(cfg.seed, &format!("path/{}/loss", p.id));
            RadioPath::new(p, rng)
        })
        .collect();

    let rx_cfg = if cfg.reordering_on() {
        ReorderConfig::enabled(
            cfg.sn_len,
            SimTime::from_millis(cfg.t_reordering_ms.unwrap_or(0)),
        )
    } else {
        ReorderConfig::disabled(cfg.sn_len)
    };

    let end = cfg.duration();
    let t = &cfg.traffic;
    let start = SimTime::from_secs_f64(t.start_s);
    let mut sched: Sched = Scheduler::new();
    let transport = match t.kind {
        TrafficKind::Udp => {
            let rate = (t.udp_rate_mbps.unwrap_or(0.0) * 1e6).round() as u64;
            let stop = SimTime::from_secs_f64(t.stop_s.unwrap_or(cfg.duration_s));
            let src = UdpSource::new(rate, t.sdu_bytes, start, stop);
            if let Some(first) = src.next_tick() {
                at(&mut sched, first, Ev::UdpTick);
            }
            Transport::Udp {
                src,
                sink: UdpSink::default(),
            }
        }
        TrafficKind::Tcp => {
            if start < end {
                at(&mut sched, start, Ev::TcpStart);
            }
            Transport::Tcp {
                snd: TcpSender::new(t.tcp_config()),
                rcv: TcpReceiver::new(),
                seg_of: Vec::new(),
                seg_bytes: u64::from(t.sdu_bytes),
                timer: None,
            }
        }
    };
    at(&mut sched, SimTime::ZERO, Ev::Second(0));

    let mut run = Run {
        paths,
        wake_pending: vec![false; n],
        views: (0..n).map(|_| DelayedView::new()).collect(),
        feedback_delay: SimTime::from_millis_f64(cfg.feedback_delay_ms),
        tx: PdcpTx::new(cfg.sn_len, cfg.policy(), n),
        rx: ReorderState::new(rx_cfg),
        reorder_timer: None,
        transport,
        uplink_delay: SimTime::from_millis_f64(t.uplink_delay_ms),
        recorder: MetricsRecorder::new(),
        ledger: Vec::new(),
        end,
        observer,
    };
    let summary = sched.run_until(end, |s, ev| run.handle(s, ev.payload));
    let counters = sched.counters();
    let metrics = run.finish(summary.events_processed, info.clone())?;
    Ok(ScenarioOutput {
        info,
        metrics,
        counters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Mode, PathConfig, TrafficConfig};

    fn two_paths() -> Vec<PathConfig> {
        vec![PathConfig::constant("A", 15.0), PathConfig::constant("B", 12.0)]
    }

    #[test]
    fn sc_udp_is_path_limited() {
        let mut cfg = ScenarioConfig::new(Mode::Sc, vec![PathConfig::constant("A", 15.0)], TrafficConfig::udp(27.0));
        cfg.duration_s = 5.0;
        let out = run_scenario(&cfg).unwrap();
        let g = out.metrics.goodput_mbps();
        assert!((14.9..=15.0).contains(&g), "goodput {g}");
        assert!(out.metrics.accounting_balances());
        assert!(out.metrics.path_dropped > 0);
    }

    #[test]
    fn dc_nor_below_capacity_delivers_offered_load() {
        let mut cfg = ScenarioConfig::new(Mode::DcNoR, two_paths(), TrafficConfig::udp(20.0));
        cfg.duration_s = 5.0;
        let out = run_scenario(&cfg).unwrap();
        let m = &out.metrics;
        assert_eq!(m.path_dropped, 0);
        // everything but the last few ms in flight reaches the sink
        let offered = 20e6 * 5.0 / 8.0 / 1400.0;
        assert!(m.delivered as f64 >= offered - 40.0, "{} of {offered}", m.delivered);
        assert!(m.ooo_delivered > 0);
    }

    #[test]
    fn tcp_on_one_path_converges() {
        let mut path = PathConfig::constant("A", 15.0);
        path.queue_limit_bytes = Some(100 * 1400);
        let mut cfg = ScenarioConfig::new(Mode::Sc, vec![path], TrafficConfig::tcp());
        cfg.duration_s = 8.0;
        let m = run_scenario(&cfg).unwrap().metrics;
        for (s, &bytes) in m.app_bytes_per_second.iter().enumerate().skip(5) {
            let mbps = bytes as f64 * 8.0 / 1e6;
            assert!(mbps >= 0.9 * 15.0, "second {s}: {mbps} Mb/s");
        }
        assert!(m.goodput_mbps() < 15.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut cfg = ScenarioConfig::new(Mode::DcReo, two_paths(), TrafficConfig::tcp()).with_t_reordering(40);
        cfg.duration_s = 3.0;
        cfg.paths[1].loss_prob = 0.01;
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.csv(), b.csv());
        assert_eq!(a.json(), b.json());
    }

    #[test]
    fn delayed_feedback_view() {
        let mut v = DelayedView::new();
        v.note(SimTime::from_millis(1), 100);
        v.note(SimTime::from_millis(3), 300);
        assert_eq!(v.at(SimTime::ZERO), 0);
        assert_eq!(v.at(SimTime::from_millis(2)), 100);
        assert_eq!(v.at(SimTime::from_millis(3)), 300);
    }
}
