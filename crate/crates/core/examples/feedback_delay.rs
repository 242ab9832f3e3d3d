//! Queue-aware splitting when the anchor sees path queues only after a
//! feedback delay. Stale views over-fill whichever path looked empty.

use mcsim::config::{Mode, PathConfig, ScenarioConfig, TrafficConfig};
use mcsim::pdcp::FlowPolicy;
use mcsim::scenario::run_scenario;

fn main() {
    for delay_ms in [0.0, 5.0, 20.0, 50.0, 100.0] {
        let mut cfg = ScenarioConfig::new(
            Mode::DcReo,
            vec![PathConfig::constant("A", 15.0), PathConfig::constant("B", 12.0)],
            TrafficConfig::udp(26.0),
        )
        .with_t_reordering(60);
        cfg.policy = Some(FlowPolicy::QueueAware);
        cfg.feedback_delay_ms = delay_ms;
        cfg.duration_s = 10.0;
        let m = run_scenario(&cfg).unwrap().metrics;
        let peak: Vec<u64> = m.paths.iter().map(|p| p.queue_bytes_per_second.iter().copied().max().unwrap_or(0)).collect();
        println!(
            "feedback {delay_ms:>5} ms  goodput {:>7.3} Mb/s  p99 {:>7} us  peak queue bytes {peak:?}",
            m.goodput_mbps(),
            m.delay.p99_us.unwrap_or(0)
        );
    }
}
