//! Writes one run as CSV and JSON, then reads the JSON back.

use mcsim::config::{Mode, PathConfig, ScenarioConfig, TrafficConfig};
use mcsim::metrics::{from_json, OutputFormat};
use mcsim::scenario::run_scenario;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "out/example".into());
    let mut cfg = ScenarioConfig::new(
        Mode::DcReo,
        vec![PathConfig::constant("A", 15.0), PathConfig::constant("B", 12.0)],
        TrafficConfig::tcp(),
    )
    .with_t_reordering(80)
    .with_name("two-paths-tcp");
    cfg.duration_s = 5.0;

    let out = run_scenario(&cfg).unwrap();
    let files = out.write(dir.as_ref(), &[OutputFormat::Csv, OutputFormat::Json]).unwrap();
    for f in &files {
        println!("wrote {}", f.display());
    }
    for line in out.csv().lines().take(4) {
        println!("  {line}");
    }

    let doc = from_json(&out.json()).unwrap();
    println!("{} {} -> {:.3} Mb/s", doc.schema, doc.run.run_key, doc.summary.goodput_mbps);
}
