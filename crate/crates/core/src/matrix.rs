//! Runs every scenario of an experiment matrix as an independent instance
//! and tabulates the results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ExperimentMatrix;
use crate::metrics::{sig6, EmitError, OutputFormat};
use crate::scenario::{run_scenario, RunError, ScenarioOutput};

#[derive(Debug)]
pub struct MatrixRun {
    pub key: String,
    pub result: Result<ScenarioOutput, RunError>,
}

#[derive(Debug)]
pub struct MatrixOutput {
    /// One entry per expanded run, in matrix order.
    pub runs: Vec<MatrixRun>,
}

impl MatrixOutput {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result.is_err()).count()
    }

    pub fn get(&self, key: &str) -> Option<&ScenarioOutput> {
        self.runs
            .iter()
            .find(|r| r.key == key)
            .and_then(|r| r.result.as_ref().ok())
    }

    /// One row per run. Failed runs keep their row with the error message.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "run,mode,traffic,policy,policy_extension,t_reordering_ms,seed,goodput_mbps,capacity_mbps,\
             submitted,delivered,ooo_delivered,declared_lost,stale_discarded,path_dropped,\
             residual_in_flight,reorder_mean_bytes,delay_p99_us,retransmissions,rto_events,status\n",
        );
        for r in &self.runs {
            match &r.result {
                Ok(o) => {
                    let (i, m) = (&o.info, &o.metrics);
                    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},ok",
                        i.run_key,
                        i.mode,
                        i.traffic,
                        i.policy,
                        i.policy_extension,
                        opt(i.t_reordering_ms),
                        i.seed,
                        sig6(m.goodput_mbps()),
                        sig6(m.capacity_bps() / 1e6),
                        m.submitted,
                        m.delivered,
                        m.ooo_delivered,
                        m.declared_lost,
                        m.stale_discarded,
                        m.path_dropped,
                        m.residual_in_flight,
                        sig6(m.mean_reorder_bytes()),
                        opt(m.delay.p99_us),
                        opt(m.tcp.map(|t| t.retransmissions)),
                        opt(m.tcp.map(|t| t.rto_events)),
                    );
                }
                Err(e) => {
                    let msg = e.to_string().replace([',', '\n'], ";");
                    let _ = writeln!(out, "{}{}error: {msg}", r.key, ",".repeat(20));
                }
            }
        }
        out
    }

    /// Writes every successful run's files plus `summary.csv`.
    pub fn write(&self, dir: &Path, formats: &[OutputFormat]) -> Result<Vec<PathBuf>, EmitError> {
        let mut written = Vec::new();
        for r in &self.runs {
            if let Ok(o) = &r.result {
                written.extend(o.write(dir, formats)?);
            }
        }
        std::fs::create_dir_all(dir).map_err(|source| EmitError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join("summary.csv");
        std::fs::write(&path, self.summary_csv()).map_err(|source| EmitError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
        Ok(written)
    }
}

/// Runs the matrix on `parallelism` worker threads (0 = one per core).
/// Results come back in matrix order whatever the degree.
pub fn run_matrix(matrix: &ExperimentMatrix, parallelism: usize) -> MatrixOutput {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .expect("thread pool");
    let runs = pool.install(|| {
        matrix
            .runs
            .par_iter()
            .map(|cfg| MatrixRun {
                key: cfg.name.clone(),
                result: run_scenario(cfg),
            })
            .collect()
    });
    MatrixOutput { runs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Mode, PathConfig, ScenarioConfig, TrafficConfig};

    fn small() -> ExperimentMatrix {
        let mut runs = Vec::new();
        for (i, t) in [40, 80, 150].into_iter().enumerate() {
            let mut cfg = ScenarioConfig::new(
                Mode::DcReo,
                vec![PathConfig::constant("A", 15.0), PathConfig::constant("B", 12.0)],
                TrafficConfig::udp(30.0),
            )
            .with_t_reordering(t)
            .with_name(&format!("r{i}"));
            cfg.duration_s = 1.0;
            runs.push(cfg);
        }
        ExperimentMatrix { runs }
    }

    #[test]
    fn summary_has_a_row_per_run() {
        let out = run_matrix(&small(), 2);
        assert_eq!(out.failures(), 0);
        let csv = out.summary_csv();
        assert_eq!(csv.lines().count(), 4);
        let keys: Vec<_> = csv.lines().skip(1).map(|l| l.split(',').nth(5).unwrap()).collect();
        assert_eq!(keys, ["40", "80", "150"]);
    }

    #[test]
    fn failures_are_recorded_and_others_proceed() {
        let mut m = small();
        m.runs[1].paths.pop();
        let out = run_matrix(&m, 1);
        assert_eq!(out.failures(), 1);
        assert!(out.runs[0].result.is_ok() && out.runs[2].result.is_ok());
        assert!(out.summary_csv().lines().nth(2).unwrap().contains("error: paths"));
    }
}
