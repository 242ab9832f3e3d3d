//! Runs the shipped 16-run matrix and prints goodput against capacity,
//! with gains relative to SC_A.
//!
//!     cargo run --release --example testbed_matrix [matrix.json]

use std::path::PathBuf;

use mcsim::config;
use mcsim::matrix::run_matrix;
use mcsim::metrics::{relative_gain, sig6};

fn main() {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/testbed_matrix.json")));
    let matrix = config::load(&path).expect("matrix loads").into_matrix();
    let out = run_matrix(&matrix, 0);

    for traffic in ["tcp", "udp"] {
        let sc_a = out
            .get(&format!("SC_A-{traffic}"))
            .map(|o| o.metrics.goodput_mbps())
            .unwrap_or(0.0);
        println!("{traffic}:");
        println!(
            "  {:<30} {:>9} {:>9} {:>8} {:>7} {:>7} {:>6} {:>10}",
            "run", "Mb/s", "cap", "vs SC_A", "lost", "stale", "rto", "reorder B"
        );
        for r in out.runs.iter().filter(|r| r.key.ends_with(traffic)) {
            let o = r.result.as_ref().expect("run succeeds");
            let m = &o.metrics;
            let gain = relative_gain(m.goodput_mbps(), sc_a)
                .map(|g| format!("{:+.1}%", g))
                .unwrap_or_default();
            println!(
                "  {:<30} {:>9} {:>9} {:>8} {:>7} {:>7} {:>6} {:>10}",
                r.key,
                sig6(m.goodput_mbps()),
                sig6(m.capacity_bps() / 1e6),
                gain,
                m.declared_lost,
                m.stale_discarded,
                m.tcp.map(|t| t.rto_events.to_string()).unwrap_or_default(),
                sig6(m.mean_reorder_bytes()),
            );
        }
    }
}
