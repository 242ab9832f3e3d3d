//! COUNT, SN and HFN with a 7-bit SN: the receiver recovers the full
//! COUNT from the wire SN as long as it stays within half the SN space.

use mcsim::config::{Mode, PathConfig, ScenarioConfig, TrafficConfig};
use mcsim::pdcp::SnLen;
use mcsim::scenario::run_scenario_observed;

fn main() {
    let sn = SnLen::new(7).unwrap();
    for count in [0u64, 127, 128, 300] {
        println!("COUNT {count:>3} -> SN {:>3} HFN {}", sn.sn_of(count), sn.hfn_of(count));
    }
    println!("SN 5 near RX_DELIV 250 -> COUNT {}", sn.infer_count(5, 250));
    println!("SN 120 near RX_DELIV 260 -> COUNT {}", sn.infer_count(120, 260));

    let mut traffic = TrafficConfig::udp(11.2);
    traffic.stop_s = Some(0.3845);
    let mut cfg = ScenarioConfig::new(
        Mode::DcReo,
        vec![PathConfig::constant("A", 15.0), PathConfig::constant("B", 12.0)],
        traffic,
    )
    .with_t_reordering(40);
    cfg.sn_len = sn;
    cfg.duration_s = 1.0;

    let mut last = None;
    let mut wraps = 0;
    let out = run_scenario_observed(&cfg, &mut |d| {
        assert!(last.is_none_or(|l| d.count > l));
        if d.count % 128 == 0 && d.count > 0 {
            wraps += 1;
        }
        last = Some(d.count);
    })
    .unwrap();
    let m = &out.metrics;
    println!(
        "{} SDUs, {} delivered in COUNT order, {wraps} SN wraps, hfn mismatches {}",
        m.submitted, m.delivered, m.hfn_mismatches
    );
}
