use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mcsim::config::{self, ConfigError, ConfigFile, ExperimentMatrix};
use mcsim::matrix::run_matrix;
use mcsim::metrics::{sig6, OutputFormat};
use mcsim::trace::{generate_trace, CqiRateTable, RandomWalk};

const OUT_DIR_ENV: &str = "MCSIM_OUT_DIR";

#[derive(Parser)]
#[command(name = "mcsim", version, about = "PDCP multi-connectivity simulator")]
struct Cli {
    /// Override the seed of every run
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (also MCSIM_OUT_DIR)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Write only this format
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario
    Run { config: PathBuf },
    /// Run every scenario of a matrix file
    Sweep {
        config: PathBuf,
        /// Worker threads, 0 for one per core
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Check a scenario or matrix file and list its runs
    Validate { config: PathBuf },
    /// Write a random-walk CQI trace and its manifest
    GenTrace {
        #[arg(long)]
        seconds: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = RandomWalk::default().start)]
        start: u8,
        #[arg(long, default_value_t = RandomWalk::default().min)]
        min: u8,
        #[arg(long, default_value_t = RandomWalk::default().max)]
        max: u8,
        /// Also print the peak rate that gives this mean capacity
        #[arg(long)]
        target_mean_mbps: Option<f64>,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("run error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ConfigFile, Failure> {
    let mut file = config::load(path)?;
    if let Some(seed) = cli.seed {
        match &mut file {
            ConfigFile::Scenario(c) => c.seed = seed,
            ConfigFile::Matrix(m) => m.runs.iter_mut().for_each(|c| c.seed = seed),
        }
    }
    Ok(file)
}

fn out_dir(cli: &Cli, m: &ExperimentMatrix) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| m.runs.first().and_then(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn formats(cli: &Cli, m: &ExperimentMatrix) -> Vec<OutputFormat> {
    match cli.format {
        Some(Format::Csv) => vec![OutputFormat::Csv],
        Some(Format::Json) => vec![OutputFormat::Json],
        None => m
            .runs
            .first()
            .map(|c| c.output.formats.clone())
            .unwrap_or_default(),
    }
}

fn execute(cli: &Cli, m: &ExperimentMatrix, jobs: usize) -> Result<(), Failure> {
    let out = run_matrix(m, jobs);
    let dir = out_dir(cli, m);
    out.write(&dir, &formats(cli, m))
        .map_err(|e| Failure::Run(e.to_string()))?;
    println!("{:<40} {:>10} {:>10} {:>9}", "run", "goodput", "capacity", "ooo");
    for r in &out.runs {
        match &r.result {
            Ok(o) => println!(
                "{:<40} {:>10} {:>10} {:>9}",
                r.key,
                sig6(o.metrics.goodput_mbps()),
                sig6(o.metrics.capacity_bps() / 1e6),
                o.metrics.ooo_delivered
            ),
            Err(e) => println!("{:<40} failed: {e}", r.key),
        }
    }
    println!("wrote {}", dir.display());
    match out.failures() {
        0 => Ok(()),
        n => Err(Failure::Run(format!("{n} of {} runs failed", out.runs.len()))),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.cmd {
        Cmd::Run { config } => match load(&cli, config)? {
            ConfigFile::Scenario(c) => execute(&cli, &ExperimentMatrix::single(*c), 1),
            ConfigFile::Matrix(m) => Err(Failure::Config(format!(
                "{} describes {} runs; use `sweep`",
                config.display(),
                m.len()
            ))),
        },
        Cmd::Sweep { config, jobs } => {
            let m = load(&cli, config)?.into_matrix();
            execute(&cli, &m, *jobs)
        }
        Cmd::Validate { config } => {
            let m = load(&cli, config)?.into_matrix();
            for c in &m.runs {
                println!("{}", c.name);
            }
            println!("ok: {} run(s)", m.len());
            Ok(())
        }
        Cmd::GenTrace {
            seconds,
            out,
            start,
            min,
            max,
            target_mean_mbps,
        } => {
            let seed = cli.seed.unwrap_or(0);
            if !(min <= start && start <= max && *max <= 15) {
                return Err(Failure::Config("need min <= start <= max <= 15".into()));
            }
            let walk = RandomWalk {
                start: *start,
                min: *min,
                max: *max,
            };
            let label = out
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "trace".into());
            let trace = generate_trace(&label, seed, *seconds, walk)
                .map_err(|e| Failure::Config(e.to_string()))?;
            let io = |p: &Path, e: std::io::Error| Failure::Run(format!("writing {}: {e}", p.display()));
            std::fs::write(out, trace.to_csv()).map_err(|e| io(out, e))?;
            let mut manifest = trace.manifest();
            manifest.seed = Some(seed);
            let mpath = out.with_extension("manifest.json");
            let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
            std::fs::write(&mpath, body).map_err(|e| io(&mpath, e))?;
            println!("wrote {} and {}", out.display(), mpath.display());
            if let Some(target) = target_mean_mbps {
                let table = CqiRateTable::lte_default();
                let mean_rel = trace.samples().iter().map(|&c| table.relative(c)).sum::<f64>()
                    / trace.len() as f64;
                println!("peak_rate_mbps for a {target} Mb/s mean: {:.6}", target / mean_rel);
            }
            Ok(())
        }
    }
}
