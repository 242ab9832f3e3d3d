//! TCP over two paths with a 10 ms backhaul on the second: no reordering
//! against a sweep of t-Reordering values.

use mcsim::config::{Mode, PathConfig, ScenarioConfig, TrafficConfig};
use mcsim::scenario::run_scenario;

fn paths() -> Vec<PathConfig> {
    let mut a = PathConfig::constant("A", 15.0);
    let mut b = PathConfig::constant("B", 12.0);
    a.queue_limit_bytes = Some(100 * 1400);
    b.queue_limit_bytes = Some(100 * 1400);
    vec![a, b]
}

fn report(label: &str, cfg: &ScenarioConfig) {
    let m = run_scenario(cfg).unwrap().metrics;
    let tcp = m.tcp.unwrap();
    println!(
        "{label:<10} {:>7.3} Mb/s  retx {:>5}  fast {:>4}  rto {:>3}  reorder {:>8.0} B",
        m.goodput_mbps(),
        tcp.retransmissions,
        tcp.fast_retransmits,
        tcp.rto_events,
        m.mean_reorder_bytes()
    );
}

fn main() {
    let mut sc = ScenarioConfig::new(Mode::Sc, paths()[..1].to_vec(), TrafficConfig::tcp());
    sc.duration_s = 20.0;
    report("SC_A", &sc);

    let mut nor = ScenarioConfig::new(Mode::DcNoR, paths(), TrafficConfig::tcp());
    nor.duration_s = 20.0;
    report("DC_NoR", &nor);

    for t in [0, 10, 40, 80, 150] {
        let mut reo = ScenarioConfig::new(Mode::DcReo, paths(), TrafficConfig::tcp()).with_t_reordering(t);
        reo.duration_s = 20.0;
        report(&format!("Reo {t} ms"), &reo);
    }
}
