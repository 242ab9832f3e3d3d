//! Duplicating every PDU over a lossy and a clean path: the receiver
//! discards the second copy and nothing is lost.

use mcsim::config::{Mode, PathConfig, ScenarioConfig, TrafficConfig};
use mcsim::scenario::run_scenario;

fn main() {
    let mut lossy = PathConfig::constant("A", 15.0);
    lossy.loss_prob = 0.1;
    let clean = PathConfig::constant("B", 12.0);

    let mut traffic = TrafficConfig::udp(8.0);
    traffic.stop_s = Some(9.0);

    let mut split = ScenarioConfig::new(Mode::DcReo, vec![lossy.clone(), clean.clone()], traffic.clone())
        .with_t_reordering(40);
    split.duration_s = 10.0;
    let mut dup = ScenarioConfig::new(Mode::DcDup, vec![lossy, clean], traffic).with_t_reordering(40);
    dup.duration_s = 10.0;

    for cfg in [&split, &dup] {
        let m = run_scenario(cfg).unwrap().metrics;
        println!(
            "{:<7} delivered {:>5}/{:<5} lost {:>4}  duplicates discarded {:>5}  p99 {:>6} us",
            cfg.mode.name(),
            m.delivered,
            m.submitted,
            m.declared_lost,
            m.duplicate_discarded,
            m.delay.p99_us.unwrap_or(0)
        );
    }
}
