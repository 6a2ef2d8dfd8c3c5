//! Experiment configuration, seed/density sweeps and CSV output.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SimTime;
use crate::mac::EdcaParams;
use crate::metrics::RunMetrics;
use crate::ofdma::SchedulerConfig;
use crate::phy::PhyConfig;
use crate::sim::{run_simulation, SimParams};
use crate::traffic::TrafficConfig;

pub use crate::mac::Discipline;

/// Full description of a sweep. Every key has a default, and unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub sta_counts: Vec<usize>,
    pub disciplines: Vec<Discipline>,
    pub seeds: Vec<u64>,
    /// Seconds of simulated time per run.
    pub run_duration: f64,
    /// Initial period excluded from latency and RMSE statistics, ms.
    pub warmup_ms: u64,
    pub phy: PhyConfig,
    pub mac: EdcaParams,
    pub scheduler: SchedulerConfig,
    pub traffic: TrafficConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sta_counts: (1..=12).collect(),
            disciplines: vec![Discipline::Vanilla, Discipline::Nobus],
            seeds: (1..=10).collect(),
            run_duration: 10.0,
            warmup_ms: 100,
            phy: PhyConfig::default(),
            mac: EdcaParams::default(),
            scheduler: SchedulerConfig::default(),
            traffic: TrafficConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::ConfigParse(p) => Error::Config(format!("{}: {p}", path.display())),
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn run_duration_time(&self) -> SimTime {
        SimTime::from_nanos((self.run_duration * 1e9).round() as u64)
    }

    pub fn warmup(&self) -> SimTime {
        SimTime::from_millis(self.warmup_ms)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sta_counts.is_empty() || self.sta_counts.contains(&0) {
            return bad("sta_counts must be non-empty and every count >= 1".into());
        }
        if let Some(&n) = self.sta_counts.iter().find(|&&n| n >= u16::MAX as usize) {
            return bad(format!("sta count {n} is too large"));
        }
        if self.disciplines.is_empty() {
            return bad("disciplines must list vanilla and/or nobus".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        for (name, v) in [
            ("sta_counts", has_dupes(&self.sta_counts)),
            ("disciplines", has_dupes(&self.disciplines)),
            ("seeds", has_dupes(&self.seeds)),
        ] {
            if v {
                return bad(format!("{name} contains duplicates"));
            }
        }
        // Nanosecond clock in u64 and tick counts in usize must not overflow.
        if !(self.run_duration.is_finite() && self.run_duration > 0.0 && self.run_duration < 1.0e9)
        {
            return bad(format!(
                "run_duration {} s must be positive and below 1e9 s",
                self.run_duration
            ));
        }
        if self.warmup() >= self.run_duration_time() {
            return bad("warmup_ms must be shorter than run_duration".into());
        }
        self.phy.validate().map_err(Error::Config)?;
        self.mac.validate().map_err(Error::Config)?;
        self.scheduler.validate().map_err(Error::Config)?;
        self.traffic.validate().map_err(Error::Config)?;
        let period = self.traffic.sample_period();
        if self.run_duration_time() < period {
            return bad("run_duration is shorter than one sample period".into());
        }
        Ok(())
    }

    pub fn sim_params(&self, n_stas: usize, discipline: Discipline, seed: u64) -> SimParams {
        SimParams {
            n_stas,
            discipline,
            seed,
            duration: self.run_duration_time(),
            warmup: self.warmup(),
            phy: self.phy,
            edca: self.mac,
            scheduler: self.scheduler,
            traffic: self.traffic.clone(),
        }
    }

    pub fn run_count(&self) -> usize {
        self.sta_counts.len() * self.disciplines.len() * self.seeds.len()
    }
}

fn has_dupes<T: Ord + Clone>(v: &[T]) -> bool {
    let mut s = v.to_vec();
    s.sort();
    s.windows(2).any(|w| w[0] == w[1])
}

/// One run of a sweep: its metrics, or why it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub discipline: Discipline,
    pub sta_count: usize,
    pub seed: u64,
    /// Invariant violations counted by the simulator (0 for a sound run).
    pub violations: u64,
    pub result: std::result::Result<RunMetrics, String>,
}

impl RunRow {
    pub fn key(&self) -> (Discipline, usize, u64) {
        (self.discipline, self.sta_count, self.seed)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    /// Sorted by (discipline, sta_count, seed).
    pub rows: Vec<RunRow>,
}

/// Runs every (STA count, discipline, seed) combination, in parallel, and
/// merges the rows in key order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut jobs = Vec::with_capacity(cfg.run_count());
    for &d in &cfg.disciplines {
        for &n in &cfg.sta_counts {
            for &s in &cfg.seeds {
                jobs.push((d, n, s));
            }
        }
    }
    let mut rows: Vec<RunRow> = jobs
        .into_par_iter()
        .map(|(discipline, sta_count, seed)| {
            let out = run_simulation(&cfg.sim_params(sta_count, discipline, seed));
            let (violations, result) = match out {
                Ok(o) => (o.violations.total(), Ok(o.metrics)),
                Err(e) => (0, Err(e.to_string())),
            };
            RunRow {
                discipline,
                sta_count,
                seed,
                violations,
                result,
            }
        })
        .collect();
    rows.sort_by_key(RunRow::key);
    Ok(SweepResult { rows })
}

/// Seed aggregate of one (discipline, STA count) point: maxima for the
/// worst-case latencies, means for everything else.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub sta_count: usize,
    pub discipline: Discipline,
    pub worst_dl_ms: f64,
    pub worst_ul_ms: f64,
    pub worst_rtt_ms: f64,
    pub mean_ampdu_dl: f64,
    pub mean_ampdu_ul: f64,
    pub delivered_fraction: f64,
    pub rmse_cm: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Mean,
    Max,
}

impl Aggregate {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregate::Mean => "mean",
            Aggregate::Max => "max",
        }
    }
}

const RUN_ROW_PREFIX: [&str; 4] = ["row", "status", "violations", "error"];

fn metrics_record(m: &RunMetrics) -> Result<(csv::StringRecord, csv::StringRecord)> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(m)?;
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Metrics(format!("metrics serialization: {e}")))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers()?.clone();
    let values = r
        .records()
        .next()
        .ok_or_else(|| Error::Metrics("metrics serialization produced no row".into()))??;
    Ok((header, values))
}

fn metrics_header() -> csv::StringRecord {
    let zero = RunMetrics::zeroed(Discipline::Vanilla, 0, 0);
    metrics_record(&zero).expect("in-memory CSV").0
}

impl SweepResult {
    pub fn ok(&self) -> impl Iterator<Item = &RunMetrics> {
        self.rows.iter().filter_map(|r| r.result.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(|r| r.result.is_err())
    }

    pub fn disciplines(&self) -> Vec<Discipline> {
        let mut d: Vec<_> = self.rows.iter().map(|r| r.discipline).collect();
        d.sort();
        d.dedup();
        d
    }

    /// Successful runs grouped by (discipline, sta_count).
    fn groups(&self) -> BTreeMap<(Discipline, usize), Vec<&RunMetrics>> {
        let mut g: BTreeMap<_, Vec<_>> = BTreeMap::new();
        for r in &self.rows {
            if let Ok(m) = &r.result {
                g.entry((r.discipline, r.sta_count)).or_default().push(m);
            }
        }
        g
    }

    /// Per-point seed aggregates, ordered by STA count then discipline.
    pub fn summaries(&self) -> Vec<PointSummary> {
        let mut out: Vec<PointSummary> = self
            .groups()
            .into_iter()
            .map(|((discipline, sta_count), ms)| {
                let max = |f: fn(&RunMetrics) -> f64| ms.iter().map(|m| f(m)).fold(f64::MIN, f64::max);
                let mean = |f: fn(&RunMetrics) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / ms.len() as f64;
                PointSummary {
                    sta_count,
                    discipline,
                    worst_dl_ms: max(|m| m.worst_dl_ms),
                    worst_ul_ms: max(|m| m.worst_ul_ms),
                    worst_rtt_ms: max(|m| m.worst_rtt_ms),
                    mean_ampdu_dl: mean(|m| m.mean_ampdu_dl),
                    mean_ampdu_ul: mean(|m| m.mean_ampdu_ul),
                    delivered_fraction: mean(|m| m.delivered_fraction),
                    rmse_cm: mean(|m| m.rmse_cm),
                    runs: ms.len(),
                }
            })
            .collect();
        out.sort_by_key(|p| (p.sta_count, p.discipline));
        out
    }

    pub fn summary(&self, discipline: Discipline, sta_count: usize) -> Option<PointSummary> {
        self.summaries()
            .into_iter()
            .find(|p| p.discipline == discipline && p.sta_count == sta_count)
    }

    /// Writes one row per run, then a mean and a max row per
    /// (discipline, sta_count). Failed runs keep their key and carry the
    /// error message; their metric fields are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let header = metrics_header();
        let seed_col = header.iter().position(|h| h == "seed").expect("seed column");
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RUN_ROW_PREFIX.iter().copied().chain(header.iter()))?;
        for r in &self.rows {
            let mut rec: Vec<String> = vec!["run".into()];
            match &r.result {
                Ok(m) => {
                    rec.extend(["ok".into(), r.violations.to_string(), String::new()]);
                    rec.extend(metrics_record(m)?.1.iter().map(str::to_owned));
                }
                Err(e) => {
                    rec.extend(["error".into(), r.violations.to_string(), e.clone()]);
                    for h in header.iter() {
                        rec.push(match h {
                            "discipline" => r.discipline.to_string(),
                            "sta_count" => r.sta_count.to_string(),
                            "seed" => r.seed.to_string(),
                            _ => String::new(),
                        });
                    }
                }
            }
            w.write_record(&rec)?;
        }
        for ((d, n), ms) in self.groups() {
            let recs: Vec<csv::StringRecord> = ms
                .iter()
                .map(|m| metrics_record(m).map(|r| r.1))
                .collect::<Result<_>>()?;
            for agg in [Aggregate::Mean, Aggregate::Max] {
                let mut rec: Vec<String> = vec![
                    agg.as_str().into(),
                    "ok".into(),
                    self.rows
                        .iter()
                        .filter(|r| r.discipline == d && r.sta_count == n)
                        .map(|r| r.violations)
                        .sum::<u64>()
                        .to_string(),
                    String::new(),
                ];
                for (i, h) in header.iter().enumerate() {
                    rec.push(match h {
                        "discipline" => d.to_string(),
                        "sta_count" => n.to_string(),
                        _ if i == seed_col => String::new(),
                        _ => {
                            let vals = recs.iter().map(|r| r[i].parse::<f64>().unwrap_or(f64::NAN));
                            let v = match agg {
                                Aggregate::Mean => vals.sum::<f64>() / recs.len() as f64,
                                Aggregate::Max => vals.fold(f64::MIN, f64::max),
                            };
                            v.to_string()
                        }
                    });
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the per-run rows written by [`SweepResult::write_csv`];
    /// aggregate rows are recomputed, not read.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Metrics(format!("sweep CSV lacks column {name:?}")))
        };
        let (c_row, c_status, c_viol, c_err) = (col("row")?, col("status")?, col("violations")?, col("error")?);
        let (c_d, c_n, c_s) = (col("discipline")?, col("sta_count")?, col("seed")?);
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if &rec[c_row] != "run" {
                continue;
            }
            let parse_err = |what: &str| Error::Metrics(format!("bad {what} in sweep CSV row {:?}", rec.position().map(|p| p.line())));
            let discipline = Discipline::from_str(&rec[c_d]).map_err(|_| parse_err("discipline"))?;
            let sta_count = rec[c_n].parse().map_err(|_| parse_err("sta_count"))?;
            let seed = rec[c_s].parse().map_err(|_| parse_err("seed"))?;
            let violations = rec[c_viol].parse().map_err(|_| parse_err("violations"))?;
            let result = match &rec[c_status] {
                "ok" => Ok(rec.deserialize::<RunMetrics>(Some(&headers))?),
                _ => Err(rec[c_err].to_string()),
            };
            rows.push(RunRow {
                discipline,
                sta_count,
                seed,
                violations,
                result,
            });
        }
        rows.sort_by_key(RunRow::key);
        Ok(SweepResult { rows })
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Plot-ready tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Worst-case DL/UL/RTT latency and mean AMPDU sizes per density.
    LatencyAmpdu,
    /// Delivered fraction and teleoperator position RMSE per density.
    RmseFraction,
}

impl PlotKind {
    pub const ALL: [PlotKind; 2] = [PlotKind::LatencyAmpdu, PlotKind::RmseFraction];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::LatencyAmpdu => "latency_ampdu",
            PlotKind::RmseFraction => "rmse_fraction",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.as_str())
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            PlotKind::LatencyAmpdu => &[
                "sta_count",
                "discipline",
                "worst_dl_ms",
                "worst_ul_ms",
                "worst_rtt_ms",
                "mean_ampdu_dl",
                "mean_ampdu_ul",
            ],
            PlotKind::RmseFraction => &["sta_count", "discipline", "delivered_fraction", "rmse_cm"],
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "latency_ampdu" => Ok(PlotKind::LatencyAmpdu),
            "rmse_fraction" => Ok(PlotKind::RmseFraction),
            other => Err(format!("unknown plot kind {other:?} (expected latency_ampdu|rmse_fraction)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmitOutcome {
    Written(PathBuf),
    /// Nothing matched; no file was written.
    Skipped(String),
}

/// Writes the plot table of `kind` for the selected disciplines into
/// `out_dir`.
pub fn emit_plotdata(
    sweep: &SweepResult,
    kind: PlotKind,
    disciplines: &[Discipline],
    out_dir: &Path,
) -> Result<EmitOutcome> {
    let points: Vec<PointSummary> = sweep
        .summaries()
        .into_iter()
        .filter(|p| disciplines.contains(&p.discipline))
        .collect();
    if points.is_empty() {
        return Ok(EmitOutcome::Skipped(format!(
            "no successful runs for disciplines [{}]; {} not written",
            disciplines.iter().map(|d| d.as_str()).collect::<Vec<_>>().join(", "),
            kind.file_name()
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(kind.file_name());
    let file = std::fs::File::create(&path)?;
    write_plotdata(&points, kind, file)?;
    Ok(EmitOutcome::Written(path))
}

pub fn write_plotdata<W: Write>(points: &[PointSummary], kind: PlotKind, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(kind.columns())?;
    for p in points {
        let head = [p.sta_count.to_string(), p.discipline.to_string()];
        let tail: Vec<f64> = match kind {
            PlotKind::LatencyAmpdu => vec![
                p.worst_dl_ms,
                p.worst_ul_ms,
                p.worst_rtt_ms,
                p.mean_ampdu_dl,
                p.mean_ampdu_ul,
            ],
            PlotKind::RmseFraction => vec![p.delivered_fraction, p.rmse_cm],
        };
        w.write_record(head.into_iter().chain(tail.into_iter().map(|v| v.to_string())))?;
    }
    w.flush()?;
    Ok(())
}
