//! A small sweep described inline: one base scenario, two variants and a
//! global axis, run on every core.

use std::path::Path;

use mcsim::config::parse_str;
use mcsim::matrix::run_matrix;

const MATRIX: &str = r#"{
  "base": {
    "mode": "DC_Reo",
    "duration_s": 5,
    "t_reordering_ms": 40,
    "paths": [
      {"cqi": [15], "peak_rate_mbps": 15},
      {"cqi": [15, 12, 9, 12], "peak_rate_mbps": 12}
    ],
    "traffic": {"kind": "udp", "udp_rate_mbps": 24}
  },
  "variants": [
    {"name": "nor", "set": {"mode": "DC_NoR", "t_reordering_ms": null}},
    {"name": "reo", "axes": {"t_reordering_ms": [20, 80]}}
  ],
  "axes": {"sn_len": [12, 18]}
}"#;

fn main() {
    let matrix = parse_str(MATRIX, Path::new(".")).unwrap().into_matrix();
    let out = run_matrix(&matrix, 0);
    print!("{}", out.summary_csv());
}
