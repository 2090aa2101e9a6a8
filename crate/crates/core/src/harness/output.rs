use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::metrics::{fct_cdf, group_means, write_flows, write_recovery};
use crate::workload::SizeClass;
use crate::world::RunOutput;

use super::{HarnessError, RunConfig};

pub const FLOWS_FILE: &str = "flows.csv";
pub const RECOVERY_FILE: &str = "recovery.csv";
pub const SHIM_FILE: &str = "shim_counters.txt";
pub const METADATA_FILE: &str = "metadata.txt";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const CDF_FILE: &str = "fct_cdf.csv";

static TMP_SEQ: AtomicU64 = AtomicU64::new(0);

fn tmp_sibling(path: &Path) -> PathBuf {
    let n = TMP_SEQ.fetch_add(1, Ordering::Relaxed);
    let name = path
        .file_name()
        .map_or("out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!(".{name}.tmp-{}-{n}", std::process::id()))
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = tmp_sibling(path);
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)
}

/// Paths of the files making up one run directory.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub flows: PathBuf,
    pub recovery: PathBuf,
    pub shim: PathBuf,
    pub metadata: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        RunFiles {
            flows: dir.join(FLOWS_FILE),
            recovery: dir.join(RECOVERY_FILE),
            shim: dir.join(SHIM_FILE),
            metadata: dir.join(METADATA_FILE),
        }
    }
}

fn metadata(cfg: &RunConfig, out: &RunOutput) -> String {
    let s = &out.stats;
    let mut m = String::new();
    let _ = writeln!(m, "tool_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "config_hash = {}", cfg.hash());
    let _ = writeln!(m, "schedule_hash = {}", out.schedule_hash);
    let _ = writeln!(m, "buffer_pkts_effective = {}", out.buffer_pkts);
    let _ = writeln!(m, "base_rtt_us = {}", out.base_rtt.as_micros());
    let _ = writeln!(m, "flows_total = {}", out.flows.len());
    let _ = writeln!(m, "events_scheduled = {}", s.events_scheduled);
    let _ = writeln!(m, "events_dispatched = {}", s.events_dispatched);
    let _ = writeln!(m, "packets_injected = {}", s.injected);
    let _ = writeln!(m, "packets_delivered = {}", s.delivered);
    let _ = writeln!(m, "packets_dropped = {}", s.dropped);
    let _ = writeln!(m, "packets_in_flight = {}", s.in_flight);
    let _ = writeln!(m, "forced_drops = {}", s.forced_drops);
    let _ = writeln!(m, "ce_marked = {}", s.ce_marked);
    let _ = writeln!(m, "end_time_us = {}", s.end_time_us);
    m.push_str(&cfg.to_kv());
    m
}

fn rounds_csv(out: &RunOutput) -> Option<String> {
    let pairs: Vec<(u32, u64)> = out
        .details
        .iter()
        .zip(&out.flows)
        .filter(|(_, f)| f.class == SizeClass::Small)
        .filter_map(|(d, f)| Some((d.round?, f.fct_us?)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let mut s = String::from("round,mean_small_fct_us\n");
    for (r, m) in group_means(pairs) {
        let _ = writeln!(s, "{r},{m:.1}");
    }
    Some(s)
}

fn cdf_csv(out: &RunOutput) -> String {
    let mut s = String::from("class,fct_us,cdf\n");
    for class in [SizeClass::Small, SizeClass::Medium, SizeClass::Large] {
        for (v, p) in fct_cdf(&out.flows, Some(class)) {
            let _ = writeln!(s, "{},{v},{p}", class.name());
        }
    }
    s
}

/// Writes every output of a run into a fresh temporary directory and
/// renames it to `dir`, so readers never see a partial run.
pub fn write_run(
    dir: &Path,
    cfg: &RunConfig,
    out: &RunOutput,
    overwrite: bool,
) -> Result<RunFiles, HarnessError> {
    if dir.exists() && !overwrite {
        return Err(HarnessError::OutputExists(dir.to_path_buf()));
    }
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = tmp_sibling(dir);
    fs::create_dir(&tmp)?;
    let res = (|| -> Result<(), HarnessError> {
        let files = RunFiles::in_dir(&tmp);
        let mut buf = Vec::new();
        write_flows(&mut buf, &out.flows)?;
        fs::write(&files.flows, &buf)?;
        buf.clear();
        write_recovery(&mut buf, &out.recovery)?;
        fs::write(&files.recovery, &buf)?;
        fs::write(&files.shim, out.shim.to_kv())?;
        fs::write(&files.metadata, metadata(cfg, out))?;
        fs::write(tmp.join(CDF_FILE), cdf_csv(out))?;
        if let Some(r) = rounds_csv(out) {
            fs::write(tmp.join(ROUNDS_FILE), r)?;
        }
        Ok(())
    })();
    if let Err(e) = res {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(RunFiles::in_dir(dir))
}
