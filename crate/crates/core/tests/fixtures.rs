use std::path::{Path, PathBuf};
use std::sync::Arc;

use mcsim::config::{self, ConfigFile};
use mcsim::trace::{ChannelTrace, CqiRateTable, LinkCapacity, TraceManifest};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

#[test]
fn trace_manifests_match_their_csv() {
    for name in ["pedestrian_a", "pedestrian_b"] {
        let trace = ChannelTrace::load(&fixture(&format!("traces/{name}.csv"))).unwrap();
        let text = std::fs::read_to_string(fixture(&format!("traces/{name}.manifest.json"))).unwrap();
        let manifest: TraceManifest = serde_json::from_str(&text).unwrap();
        let mut derived = trace.manifest();
        derived.seed = manifest.seed;
        assert_eq!(derived, manifest, "{name}");
        assert_eq!(trace.len(), 30);
    }
}

#[test]
fn fixture_capacities_sum_to_27_mbps() {
    let matrix = config::load(&fixture("testbed_matrix.json")).unwrap().into_matrix();
    let dc = matrix.runs.iter().find(|c| c.name == "DC_NoR-udp").unwrap();
    let table = Arc::new(CqiRateTable::lte_default());
    let mut total = 0.0;
    for (p, want) in dc.paths.iter().zip([15e6, 12e6]) {
        let trace = ChannelTrace::load(p.trace_file.as_ref().unwrap()).unwrap();
        let link = LinkCapacity::new(Arc::new(trace), table.clone(), p.peak_rate_mbps * 1e6);
        let mean = link.mean_rate_bps(30);
        assert!((mean - want).abs() < 1.0, "{}: {mean}", p.id);
        total += mean;
    }
    assert!((total - 27e6).abs() < 2.0);
}

#[test]
fn fixture_matrix_shape() {
    let ConfigFile::Matrix(m) = config::load(&fixture("testbed_matrix.json")).unwrap() else {
        panic!("fixture is a matrix");
    };
    let keys: Vec<&str> = m.runs.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(keys.len(), 16);
    assert_eq!(&keys[..4], ["SC_A-tcp", "SC_A-udp", "SC_B-tcp", "SC_B-udp"]);
    assert!(keys.contains(&"DC_Reo-t_reordering_ms150-udp"));
    let sc_b = m.runs.iter().find(|c| c.name == "SC_B-tcp").unwrap();
    assert_eq!(sc_b.paths.len(), 1);
    assert_eq!(sc_b.paths[0].id, "B");
    assert_eq!(sc_b.paths[0].backhaul_ms, Some(0.0));
}

#[test]
fn scenario_round_trips_through_json() {
    let m = config::load(&fixture("testbed_matrix.json")).unwrap().into_matrix();
    for cfg in &m.runs {
        let again = config::parse_scenario_str(&cfg.to_json(), Path::new("/")).unwrap();
        assert_eq!(&again, cfg, "{}", cfg.name);
    }
}
