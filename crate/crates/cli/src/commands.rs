//! Batch subcommands: `run`, `compare` and `metrics`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use drillshare_core::compare::{compare_modes, Comparison, Execution};
use drillshare_core::config::{load_config, Mode, SessionConfig};
use drillshare_core::metrics::{metrics_for_trace, MetricsDocument};
use drillshare_core::session::{Finish, Session};
use drillshare_core::smoothing::smooth_trace;
use drillshare_core::trace::{read_trace, write_line, TraceRecord};
use serde::{Deserialize, Serialize};

pub const TRACE_FILE: &str = "trace.ndjson";
pub const METRICS_FILE: &str = "metrics.json";
pub const COMPARE_FILE: &str = "compare.json";
pub const SMOOTHED_FILE: &str = "smoothed.csv";

pub const COMPARE_FORMAT: &str = "drillshare-compare";
pub const COMPARE_VERSION: u32 = 1;

/// Config file plus command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    pub path: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
}

impl ConfigSource {
    pub fn resolve(&self) -> anyhow::Result<SessionConfig> {
        let mut cfg = match &self.path {
            Some(p) => load_config(p).with_context(|| format!("loading config {}", p.display()))?,
            None => SessionConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub finish: Finish,
    pub trace: PathBuf,
    pub metrics: Option<PathBuf>,
    pub smoothed: PathBuf,
    pub records: usize,
}

/// Runs one session, streaming the trace to `out/trace.ndjson` and writing
/// `out/metrics.json`. A faulted run keeps its partial trace and returns an error.
pub fn run(cfg: SessionConfig, out: &Path) -> anyhow::Result<RunSummary> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let trace_path = out.join(TRACE_FILE);
    let metrics_path = out.join(METRICS_FILE);
    // never leave a metrics file from an earlier run next to a new trace
    if metrics_path.exists() {
        fs::remove_file(&metrics_path)?;
    }

    let window = cfg.smoothing_window;
    let mut session = Session::new(cfg)?;
    let header = session.header();
    let mut w =
        BufWriter::new(File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?);
    write_line(&mut w, &header)?;
    let mut records = Vec::new();
    while let Some(r) = session.step() {
        write_line(&mut w, &r)?;
        records.push(r);
    }
    w.flush()?;
    drop(w);

    let smoothed_path = out.join(SMOOTHED_FILE);
    write_smoothed(&smoothed_path, &records, window, 1.0 / header.dt)?;

    let finish = session.finished().cloned().unwrap_or(Finish::Timeout);
    let metrics = metrics_for_trace(&header, &records);
    let written = match &metrics {
        Ok(m) => {
            fs::write(&metrics_path, MetricsDocument::new(&header, *m).to_json())?;
            Some(metrics_path)
        }
        Err(_) => None,
    };
    if let Finish::Fault(reason) = &finish {
        bail!(
            "session fault at t = {:.3} s: {reason} (partial trace in {})",
            records.last().map_or(0.0, |r| r.t),
            trace_path.display()
        );
    }
    metrics?;
    Ok(RunSummary { finish, trace: trace_path, metrics: written, smoothed: smoothed_path, records: records.len() })
}

const SMOOTHED_COLUMNS: [&str; 6] = ["alpha", "alpha_bar", "w", "depth", "f_sensor", "f_operator"];

/// Plotting series smoothed with a `window`-second Savitzky–Golay filter, as CSV with
/// a leading `t` column. Forces are magnitudes.
pub fn write_smoothed(path: &Path, records: &[TraceRecord], window: f64, rate: f64) -> anyhow::Result<()> {
    let columns: [Vec<f64>; 6] = [
        records.iter().map(|r| r.alpha).collect(),
        records.iter().map(|r| r.alpha_bar).collect(),
        records.iter().map(|r| r.w).collect(),
        records.iter().map(|r| r.depth).collect(),
        records.iter().map(|r| r.f_sensor.norm()).collect(),
        records.iter().map(|r| r.f_operator.norm()).collect(),
    ];
    let smoothed = columns.map(|c| smooth_trace(&c, window, rate));
    if smoothed[0].unfiltered {
        tracing::warn!(
            samples = records.len(),
            window,
            "trace shorter than the smoothing window, series left unfiltered"
        );
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "t,{}", SMOOTHED_COLUMNS.join(","))?;
    for (i, r) in records.iter().enumerate() {
        write!(w, "{}", r.t)?;
        for s in &smoothed {
            write!(w, ",{}", s.values[i])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareDocument {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub comparison: Comparison,
}

impl CompareDocument {
    pub fn new(comparison: Comparison) -> Self {
        Self { format: COMPARE_FORMAT.into(), version: COMPARE_VERSION, comparison }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("comparison serialises");
        s.push('\n');
        s
    }
}

/// Runs all three modes on one seed; writes `out/compare.json` when `out` is given.
pub fn compare(cfg: &SessionConfig, out: Option<&Path>) -> anyhow::Result<Comparison> {
    let cmp = compare_modes(cfg, Execution::default())?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(COMPARE_FILE), CompareDocument::new(cmp.clone()).to_json())?;
    }
    Ok(cmp)
}

/// Recomputes the metrics document of a stored trace.
pub fn metrics(trace: &Path) -> anyhow::Result<String> {
    let file = File::open(trace).with_context(|| format!("opening {}", trace.display()))?;
    let (header, records) = read_trace(BufReader::new(file)).with_context(|| format!("reading {}", trace.display()))?;
    let m = metrics_for_trace(&header, &records)?;
    Ok(MetricsDocument::new(&header, m).to_json())
}
