//! More than two legs. Every non-anchor path gets the default 10 ms
//! backhaul unless told otherwise.

use mcsim::config::{Mode, PathConfig, ScenarioConfig, TrafficConfig};
use mcsim::pdcp::FlowPolicy;
use mcsim::scenario::run_scenario;

fn main() {
    let mut c = PathConfig::constant("C", 6.0);
    c.backhaul_ms = Some(25.0);
    let paths = vec![PathConfig::constant("A", 15.0), PathConfig::constant("B", 12.0), c];

    for policy in [FlowPolicy::RoundRobin, FlowPolicy::QueueAware] {
        let mut cfg = ScenarioConfig::new(Mode::DcReo, paths.clone(), TrafficConfig::udp(33.0))
            .with_t_reordering(60);
        cfg.policy = Some(policy);
        cfg.duration_s = 10.0;
        let m = run_scenario(&cfg).unwrap().metrics;
        println!("{}: {:.3} of {:.1} Mb/s", policy.name(), m.goodput_mbps(), m.capacity_bps() / 1e6);
        for p in &m.paths {
            println!("  {} sent {:>9} B, overflow {:>5}", p.id, p.bytes_sent, p.dropped_overflow);
        }
    }
}
