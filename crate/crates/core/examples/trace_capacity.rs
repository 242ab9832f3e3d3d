//! CQI trace to link capacity: per-second rates, integrated bits, and the
//! peak rate needed for a target mean.

use std::path::Path;
use std::sync::Arc;

use mcsim::sim::SimTime;
use mcsim::trace::{ChannelTrace, CqiRateTable, LinkCapacity};

fn main() {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/traces/pedestrian_a.csv");
    let trace = Arc::new(ChannelTrace::load(&file).expect("fixture trace"));
    let table = Arc::new(CqiRateTable::lte_default());

    let mean_rel: f64 =
        trace.samples().iter().map(|&c| table.relative(c)).sum::<f64>() / trace.len() as f64;
    let peak = 15e6 / mean_rel;
    println!("{}: {} s, mean relative rate {mean_rel:.4}", trace.label(), trace.len());
    println!("peak for a 15 Mb/s mean: {:.6} Mb/s", peak / 1e6);

    let link = LinkCapacity::new(trace.clone(), table, peak);
    for s in 0..6 {
        println!("  second {s}: cqi {:>2}  {:>7.3} Mb/s", trace.cqi_at_second(s), link.rate_in_second(s) / 1e6);
    }
    let bits = link.integrated_bits(SimTime::from_secs(30));
    println!("30 s integrated: {:.3} Mbit ({:.4} Mb/s mean)", bits / 1e6, bits / 30e6);

    // 1500 bytes starting half a second in
    let done = link.finish_time(SimTime::from_millis(500), 12_000).unwrap();
    println!("1500 B from 0.5 s done at {} us", done.as_micros());
}
