use serde::{Deserialize, Serialize};

use super::{PdcpPdu, SnLen, MAX_SDU_BYTES};
use crate::sim::SimTime;

/// How the anchor distributes PDUs over its paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowPolicy {
    /// One PDU per path per turn, in path-index order, blind to path state.
    RoundRobin,
    /// Path with the smallest estimated drain time for the new PDU.
    QueueAware,
    /// Every PDU on every path.
    Duplicate,
}

impl FlowPolicy {
    pub fn name(self) -> &'static str {
        match self {
            FlowPolicy::RoundRobin => "round_robin",
            FlowPolicy::QueueAware => "queue_aware",
            FlowPolicy::Duplicate => "duplicate",
        }
    }

    /// Policies not used in the baseline testbed reproduction.
    pub fn is_extension(self) -> bool {
        matches!(self, FlowPolicy::QueueAware)
    }
}

/// Transmitter's view of one path, as last reported.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathSnapshot {
    pub queue_bytes: u64,
    pub rate_bps: f64,
}

/// Paths a PDU is sent on. Never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowDecision {
    targets: Vec<usize>,
}

impl FlowDecision {
    pub fn single(path: usize) -> Self {
        FlowDecision {
            targets: vec![path],
        }
    }

    pub fn all(paths: usize) -> Self {
        assert!(paths > 0);
        FlowDecision {
            targets: (0..paths).collect(),
        }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }
}

/// Floor applied to path rates in drain-time estimates, bit/s.
const RATE_FLOOR_BPS: f64 = 1.0;

/// PDCP transmitter at the anchor.
///
/// Sequencing is independent of the routing policy: COUNTs are assigned
/// gap-free in submission order whatever path(s) the PDU ends up on.
#[derive(Debug, Clone)]
pub struct PdcpTx {
    sn_len: SnLen,
    next_count: u64,
    policy: FlowPolicy,
    rr_cursor: usize,
    snapshot: Vec<PathSnapshot>,
}

impl PdcpTx {
    pub fn new(sn_len: SnLen, policy: FlowPolicy, paths: usize) -> Self {
        assert!(paths > 0, "at least one path is required");
        PdcpTx {
            sn_len,
            next_count: 0,
            policy,
            rr_cursor: 0,
            snapshot: vec![PathSnapshot::default(); paths],
        }
    }

    pub fn policy(&self) -> FlowPolicy {
        self.policy
    }

    pub fn next_count(&self) -> u64 {
        self.next_count
    }

    pub fn paths(&self) -> usize {
        self.snapshot.len()
    }

    pub fn update_snapshot(&mut self, path: usize, snapshot: PathSnapshot) {
        self.snapshot[path] = snapshot;
    }

    pub fn snapshot(&self) -> &[PathSnapshot] {
        &self.snapshot
    }

    /// Sequences one SDU and picks its path(s). The returned PDU has no path
    /// stamped; the caller stamps each copy when enqueuing it.
    pub fn submit_sdu(&mut self, sdu_id: u64, size_bytes: u32, now: SimTime) -> (PdcpPdu, FlowDecision) {
        assert!(
            size_bytes > 0 && size_bytes <= MAX_SDU_BYTES,
            "SDU size {size_bytes} outside (0, {MAX_SDU_BYTES}]"
        );
        let count = self.next_count;
        self.next_count += 1;
        let pdu = PdcpPdu {
            count,
            sn: self.sn_len.sn_of(count),
            sdu_id,
            size_bytes,
            created_at: now,
            path: None,
        };
        let decision = self.decide(&pdu);
        (pdu, decision)
    }

    pub fn decide(&mut self, pdu: &PdcpPdu) -> FlowDecision {
        let n = self.snapshot.len();
        match self.policy {
            FlowPolicy::RoundRobin => {
                let p = self.rr_cursor;
                self.rr_cursor = (self.rr_cursor + 1) % n;
                FlowDecision::single(p)
            }
            FlowPolicy::Duplicate => FlowDecision::all(n),
            FlowPolicy::QueueAware => {
                let bits = |s: &PathSnapshot| (s.queue_bytes + u64::from(pdu.size_bytes)) as f64 * 8.0;
                let mut best = 0;
                let mut best_drain = f64::INFINITY;
                for (i, s) in self.snapshot.iter().enumerate() {
                    let drain = bits(s) / s.rate_bps.max(RATE_FLOOR_BPS);
                    if drain < best_drain {
                        best = i;
                        best_drain = drain;
                    }
                }
                FlowDecision::single(best)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tx(policy: FlowPolicy, paths: usize) -> PdcpTx {
        PdcpTx::new(SnLen::DEFAULT, policy, paths)
    }

    fn paths_of(tx: &mut PdcpTx, n: usize) -> Vec<usize> {
        (0..n)
            .map(|i| tx.submit_sdu(i as u64, 1400, SimTime::ZERO).1.targets()[0])
            .collect()
    }

    #[test]
    fn first_sdu_has_count_zero() {
        let mut t = tx(FlowPolicy::RoundRobin, 2);
        let (pdu, _) = t.submit_sdu(0, 1400, SimTime::ZERO);
        assert_eq!((pdu.count, pdu.sn), (0, 0));
    }

    #[test]
    fn sn_wraps_at_4096() {
        let mut t = tx(FlowPolicy::RoundRobin, 1);
        let mut last = None;
        for i in 0..=4096 {
            last = Some(t.submit_sdu(i, 100, SimTime::ZERO).0);
        }
        let pdu = last.unwrap();
        assert_eq!(pdu.count, 4096);
        assert_eq!(pdu.sn, 0);
        assert_eq!(pdu.hfn(SnLen::DEFAULT), 1);
    }

    #[test]
    fn round_robin_cycles_in_index_order() {
        assert_eq!(paths_of(&mut tx(FlowPolicy::RoundRobin, 2), 4), vec![0, 1, 0, 1]);
        assert_eq!(paths_of(&mut tx(FlowPolicy::RoundRobin, 3), 5), vec![0, 1, 2, 0, 1]);
        assert_eq!(paths_of(&mut tx(FlowPolicy::RoundRobin, 1), 3), vec![0, 0, 0]);
    }

    #[test]
    fn round_robin_ignores_queue_state() {
        let mut t = tx(FlowPolicy::RoundRobin, 2);
        t.update_snapshot(0, PathSnapshot { queue_bytes: 1 << 30, rate_bps: 1.0 });
        assert_eq!(paths_of(&mut t, 2), vec![0, 1]);
    }

    #[test]
    fn duplicate_targets_every_path() {
        for n in 1..=3 {
            let mut t = tx(FlowPolicy::Duplicate, n);
            let (_, d) = t.submit_sdu(0, 1400, SimTime::ZERO);
            assert_eq!(d.targets(), (0..n).collect::<Vec<_>>().as_slice());
        }
    }

    #[test]
    fn queue_aware_prefers_shorter_queue_at_equal_rates() {
        let mut t = tx(FlowPolicy::QueueAware, 2);
        t.update_snapshot(0, PathSnapshot { queue_bytes: 20_000, rate_bps: 10e6 });
        t.update_snapshot(1, PathSnapshot { queue_bytes: 5_000, rate_bps: 10e6 });
        assert_eq!(paths_of(&mut t, 1), vec![1]);
    }

    #[test]
    fn queue_aware_avoids_zero_rate_path() {
        let mut t = tx(FlowPolicy::QueueAware, 2);
        t.update_snapshot(0, PathSnapshot { queue_bytes: 0, rate_bps: 0.0 });
        t.update_snapshot(1, PathSnapshot { queue_bytes: 50_000, rate_bps: 5e6 });
        assert_eq!(paths_of(&mut t, 1), vec![1]);
    }

    #[test]
    fn queue_aware_drain_time_arithmetic() {
        // (15000 + 1500) * 8 / 15e6 = 8.8 ms vs / 12e6 = 11 ms
        let a: f64 = 16_500.0 * 8.0 / 15e6;
        let b: f64 = 16_500.0 * 8.0 / 12e6;
        assert!((a - 0.0088).abs() < 1e-12 && (b - 0.011).abs() < 1e-12);
        let mut t = tx(FlowPolicy::QueueAware, 2);
        t.update_snapshot(0, PathSnapshot { queue_bytes: 15_000, rate_bps: 15e6 });
        t.update_snapshot(1, PathSnapshot { queue_bytes: 15_000, rate_bps: 12e6 });
        let (_, d) = t.submit_sdu(0, 1500, SimTime::ZERO);
        assert_eq!(d.targets(), &[0]);
    }

    #[test]
    fn queue_aware_tie_goes_to_lowest_index() {
        let mut t = tx(FlowPolicy::QueueAware, 3);
        for p in 0..3 {
            t.update_snapshot(p, PathSnapshot { queue_bytes: 1000, rate_bps: 1e6 });
        }
        assert_eq!(paths_of(&mut t, 1), vec![0]);
    }

    proptest! {
        #[test]
        fn round_robin_balance(k in 1usize..6, m in 0usize..200) {
            let mut t = tx(FlowPolicy::RoundRobin, k);
            let mut per = vec![0usize; k];
            for p in paths_of(&mut t, m) { per[p] += 1; }
            for c in per {
                prop_assert!(c == m / k || c == m.div_ceil(k));
            }
        }

        #[test]
        fn policy_never_changes_sequencing(m in 1usize..100, seed in any::<u64>()) {
            let mut counts = vec![];
            for policy in [FlowPolicy::RoundRobin, FlowPolicy::QueueAware, FlowPolicy::Duplicate] {
                let mut t = tx(policy, 3);
                let mut c = vec![];
                for i in 0..m {
                    let q = seed.rotate_left(i as u32) % 100_000;
                    t.update_snapshot(i % 3, PathSnapshot { queue_bytes: q, rate_bps: 1e6 });
                    c.push(t.submit_sdu(i as u64, 1400, SimTime::ZERO).0.count);
                }
                counts.push(c);
            }
            prop_assert_eq!(&counts[0], &(0..m as u64).collect::<Vec<_>>());
            prop_assert_eq!(&counts[0], &counts[1]);
            prop_assert_eq!(&counts[0], &counts[2]);
        }
    }
}
