//! Two constant paths, 15 and 12 Mb/s, fed 27 Mb/s of UDP. Round robin
//! pushes 13.5 Mb/s into each path and overflows the slower one; the
//! queue-aware split follows the rates.

use mcsim::config::{Mode, PathConfig, ScenarioConfig, TrafficConfig};
use mcsim::pdcp::FlowPolicy;
use mcsim::scenario::run_scenario;

fn main() {
    for mode in [Mode::DcNoR, Mode::DcReo] {
        for policy in [FlowPolicy::RoundRobin, FlowPolicy::QueueAware] {
            let mut cfg = ScenarioConfig::new(
                mode,
                vec![PathConfig::constant("A", 15.0), PathConfig::constant("B", 12.0)],
                TrafficConfig::udp(27.0),
            );
            if mode == Mode::DcReo {
                cfg = cfg.with_t_reordering(40);
            }
            cfg.policy = Some(policy);
            let m = run_scenario(&cfg).unwrap().metrics;
            let sent: Vec<String> = m
                .paths
                .iter()
                .map(|p| format!("{} {:.2} Mb/s", p.id, p.bytes_sent as f64 * 8.0 / m.duration_secs() / 1e6))
                .collect();
            println!(
                "{:<7} {:<12} goodput {:>7.3} Mb/s  dropped {:>5}  [{}]",
                mode.name(),
                policy.name(),
                m.goodput_mbps(),
                m.path_dropped_pdus(),
                sent.join(", ")
            );
        }
    }
}
