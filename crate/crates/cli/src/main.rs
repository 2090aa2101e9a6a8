//! `tracks-sim`: run, sweep and re-analyze simulator experiments.
//!
//! Exit status is 0 on success, 2 for configuration errors and 3 when a
//! run-wide assertion (packet conservation, stream integrity) fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracks_core::harness::{self, HarnessError, RunConfig, KEYS, OUT_ENV};

#[derive(Parser)]
#[command(
    name = "tracks-sim",
    version,
    about = "Packet-level data-center TCP simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation and write its CSV outputs.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory. Defaults to a config-derived name under
        /// $TRACKS_SIM_OUT (or ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace an existing output directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Run one simulation per value of a single parameter.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Axis as key=v1,v2,... (an empty value list does nothing).
        #[arg(long)]
        axis: String,
        /// Parallel workers.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Root directory for the per-point runs and summary.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Recompute the per-class summary from a run directory.
    Analyze { dir: PathBuf },
    /// List every config key with its default value.
    Keys,
}

/// Config sources, applied in order: file, convenience flags, `--set`.
#[derive(Args)]
struct ConfigArgs {
    /// key=value config file (supports `include <path>` and # comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// case1, case2, poisson or single.
    #[arg(long)]
    scenario: Option<String>,
    /// Senders per round (case1/case2) or total flows (poisson).
    #[arg(long)]
    flows: Option<String>,
    /// droptail, droprand, red or dctcp.
    #[arg(long)]
    aqm: Option<String>,
    /// newreno, newreno-ecn or dctcp.
    #[arg(long)]
    tcp: Option<String>,
    /// on or off.
    #[arg(long)]
    shim: Option<String>,
    /// Timeout multiplier on the measured RTT.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// dumbbell or leaf-spine.
    #[arg(long)]
    topology: Option<String>,
    /// Offered load fraction for poisson workloads.
    #[arg(long)]
    load: Option<String>,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("scenario", &self.scenario),
            ("flows", &self.flows),
            ("aqm", &self.aqm),
            ("tcp", &self.tcp),
            ("shim", &self.shim),
            ("alpha", &self.alpha),
            ("seed", &self.seed),
            ("topology", &self.topology),
            ("load", &self.load),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v).map_err(|msg| HarnessError::Field {
                    field: k.to_string(),
                    msg,
                })?;
            }
        }
        cfg.apply_overrides(self.set.iter().map(String::as_str))?;
        Ok(cfg)
    }
}

fn default_run_dir(cfg: &RunConfig) -> PathBuf {
    let scenario = cfg.get("scenario").unwrap_or_default();
    let seed = cfg.get("seed").unwrap_or_default();
    let hash = cfg.hash();
    harness::default_out_root().join(format!("{scenario}-seed{seed}-{}", &hash[..12]))
}

fn print_summary(rows: &[harness::ClassSummary], point: &str) {
    print!("{}", harness::summary_csv(point, rows));
}

fn run_cmd(cfg: &ConfigArgs, out: Option<&Path>, overwrite: bool) -> Result<(), HarnessError> {
    let cfg = cfg.build()?;
    let dir = out.map_or_else(|| default_run_dir(&cfg), Path::to_path_buf);
    let res = harness::run(&cfg, &dir, overwrite)?;
    eprintln!(
        "wrote {} ({} flows, {} rto events)",
        dir.display(),
        res.flows.len(),
        res.total_rto_events()
    );
    print_summary(&harness::summarize(&res.flows), &dir.display().to_string());
    Ok(())
}

fn sweep_cmd(
    cfg: &ConfigArgs,
    axis: &str,
    jobs: usize,
    out: Option<&Path>,
    overwrite: bool,
) -> Result<(), HarnessError> {
    let template = cfg.build()?;
    let (key, vals) = axis.split_once('=').ok_or_else(|| HarnessError::Field {
        field: "axis".into(),
        msg: format!("expected key=v1,v2,..., got `{axis}`"),
    })?;
    let key = key.trim();
    let values: Vec<String> = vals
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .collect();
    if values.is_empty() {
        eprintln!("empty axis, nothing to do");
        return Ok(());
    }
    let root = out.map_or_else(
        || harness::default_out_root().join(format!("sweep-{key}-{}", &template.hash()[..12])),
        Path::to_path_buf,
    );
    let points = harness::sweep(&template, key, &values, &root, jobs, overwrite)?;
    let failed = points.iter().filter(|p| p.result.is_err()).count();
    for p in &points {
        if let Err(e) = &p.result {
            eprintln!("{key}={}: {e}", p.value);
        }
    }
    eprintln!(
        "{} points, {failed} failed, summary in {}",
        points.len(),
        root.join("summary.csv").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run {
            cfg,
            out,
            overwrite,
        } => run_cmd(cfg, out.as_deref(), *overwrite),
        Cmd::Sweep {
            cfg,
            axis,
            jobs,
            out,
            overwrite,
        } => sweep_cmd(cfg, axis, *jobs, out.as_deref(), *overwrite),
        Cmd::Analyze { dir } => {
            harness::analyze(dir).map(|rows| print_summary(&rows, &dir.display().to_string()))
        }
        Cmd::Keys => {
            let d = RunConfig::default();
            for k in KEYS {
                println!("{k} = {}", d.get(k).unwrap_or_default());
            }
            println!("# default output root: ${OUT_ENV} or ./runs");
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
