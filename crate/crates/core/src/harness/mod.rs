//! Experiment execution: single runs with atomically written outputs,
//! parallel parameter sweeps, and re-analysis of existing run directories.

mod config;
mod output;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::metrics::{fct_percentiles, mean_fct_us, read_flows, FlowRecord, MetricsError};
use crate::workload::SizeClass;
use crate::world::{run_simulation, RunOutput, SimError};

pub use config::{RunConfig, ScenarioKind, TopologyKind, KEYS};
pub use output::{write_run, RunFiles, METADATA_FILE};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "TRACKS_SIM_OUT";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{origin}:{line}: {msg}")]
    Config {
        origin: String,
        line: usize,
        msg: String,
    },
    #[error("invalid {field}: {msg}")]
    Field { field: String, msg: String },
    #[error("output directory {0} already exists (use --overwrite)")]
    OutputExists(PathBuf),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("run assertion failed: {0}")]
    Assertion(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. }
            | HarnessError::Field { .. }
            | HarnessError::OutputExists(_) => 2,
            HarnessError::Sim(SimError::Scenario(_)) | HarnessError::Sim(SimError::Topology(_)) => {
                2
            }
            HarnessError::Assertion(_) => 3,
            HarnessError::Metrics(_) | HarnessError::Io(_) => 1,
        }
    }
}

/// Default output root: `$TRACKS_SIM_OUT`, else `./runs`.
pub fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// Runs the simulation, converting panics and violated run-wide
/// invariants into [`HarnessError::Assertion`].
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, HarnessError> {
    let sim = cfg.to_sim()?;
    let res = panic::catch_unwind(AssertUnwindSafe(|| run_simulation(&sim)));
    let out = match res {
        Ok(r) => r?,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            return Err(HarnessError::Assertion(msg));
        }
    };
    let s = &out.stats;
    if !s.conserved() {
        return Err(HarnessError::Assertion(format!(
            "packet conservation: injected {} != delivered {} + dropped {} + in flight {}",
            s.injected, s.delivered, s.dropped, s.in_flight
        )));
    }
    if s.integrity_failures > 0 {
        return Err(HarnessError::Assertion(format!(
            "{} flows delivered a corrupted stream",
            s.integrity_failures
        )));
    }
    Ok(out)
}

/// One complete run: validates, simulates, writes `dir`.
pub fn run(cfg: &RunConfig, dir: &Path, overwrite: bool) -> Result<RunOutput, HarnessError> {
    cfg.to_sim()?;
    if dir.exists() && !overwrite {
        return Err(HarnessError::OutputExists(dir.to_path_buf()));
    }
    let out = execute(cfg)?;
    write_run(dir, cfg, &out, overwrite)?;
    Ok(out)
}

/// Per-class summary of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub class: SizeClass,
    pub flows: usize,
    pub completed: usize,
    pub mean_fct_us: Option<f64>,
    pub p95_fct_us: Option<u64>,
    pub rto_events: u64,
    pub deadline_misses: usize,
}

pub fn summarize(flows: &[FlowRecord]) -> Vec<ClassSummary> {
    [SizeClass::Small, SizeClass::Medium, SizeClass::Large]
        .into_iter()
        .map(|class| {
            let sel: Vec<_> = flows.iter().filter(|f| f.class == class).collect();
            ClassSummary {
                class,
                flows: sel.len(),
                completed: sel.iter().filter(|f| f.completed()).count(),
                mean_fct_us: mean_fct_us(flows, Some(class)),
                p95_fct_us: fct_percentiles(flows, Some(class), &[95.0])
                    .first()
                    .map(|p| p.1),
                rto_events: sel.iter().map(|f| u64::from(f.rto_events)).sum(),
                deadline_misses: sel.iter().filter(|f| f.deadline_missed).count(),
            }
        })
        .collect()
}

pub const SUMMARY_CSV_HEADER: &str =
    "point,class,flows,completed,mean_fct_us,p95_fct_us,rto_events,deadline_misses,status";

fn summary_rows(point: &str, rows: &[ClassSummary], status: &str) -> String {
    let mut s = String::new();
    for r in rows {
        s.push_str(&format!(
            "{point},{},{},{},{},{},{},{},{status}\n",
            r.class.name(),
            r.flows,
            r.completed,
            r.mean_fct_us.map_or(String::new(), |m| format!("{m:.1}")),
            r.p95_fct_us.map_or(String::new(), |p| p.to_string()),
            r.rto_events,
            r.deadline_misses,
        ));
    }
    s
}

/// Outcome of one sweep point.
#[derive(Debug)]
pub struct SweepPoint {
    pub value: String,
    pub dir: PathBuf,
    pub result: Result<Vec<ClassSummary>, HarnessError>,
}

/// Runs `template` once per value of `key`, in parallel on up to `jobs`
/// threads, and writes `summary.csv` under `root`. A failing point is
/// recorded and the sweep carries on. An empty axis does nothing.
pub fn sweep(
    template: &RunConfig,
    key: &str,
    values: &[String],
    root: &Path,
    jobs: usize,
    overwrite: bool,
) -> Result<Vec<SweepPoint>, HarnessError> {
    if values.is_empty() {
        return Ok(Vec::new());
    }
    if template.get(key).is_none() {
        return Err(HarnessError::Field {
            field: key.to_string(),
            msg: "unknown sweep key".into(),
        });
    }
    fs::create_dir_all(root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Io(std::io::Error::other(e)))?;
    let points: Vec<SweepPoint> = pool.install(|| {
        values
            .par_iter()
            .map(|v| {
                let dir = root.join(format!("{key}={v}"));
                let result = (|| {
                    let mut cfg = template.clone();
                    cfg.set(key, v).map_err(|msg| HarnessError::Field {
                        field: key.to_string(),
                        msg,
                    })?;
                    let out = run(&cfg, &dir, overwrite)?;
                    Ok(summarize(&out.flows))
                })();
                SweepPoint {
                    value: v.clone(),
                    dir,
                    result,
                }
            })
            .collect()
    });
    let mut csv = format!("{SUMMARY_CSV_HEADER}\n");
    for p in &points {
        let point = format!("{key}={}", p.value);
        match &p.result {
            Ok(rows) => csv.push_str(&summary_rows(&point, rows, "ok")),
            Err(e) => csv.push_str(&format!(
                "{point},,,,,,,,error: {}\n",
                e.to_string().replace([',', '\n'], ";")
            )),
        }
    }
    output::write_atomic(&root.join("summary.csv"), csv.as_bytes())?;
    Ok(points)
}

/// Re-derives the per-class summary from a run directory's flow CSV.
pub fn analyze(dir: &Path) -> Result<Vec<ClassSummary>, HarnessError> {
    let f = fs::File::open(dir.join(output::FLOWS_FILE))?;
    let flows = read_flows(f)?;
    Ok(summarize(&flows))
}

/// Summary rows as CSV text, with header.
pub fn summary_csv(point: &str, rows: &[ClassSummary]) -> String {
    format!("{SUMMARY_CSV_HEADER}\n{}", summary_rows(point, rows, "ok"))
}
