//! `tisim`: run single simulations, sweeps, and emit plot tables.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tisim::experiment::{emit_plotdata, run_sweep, EmitOutcome, PlotKind, SweepResult};
use tisim::metrics::{write_metrics_csv, write_sample_log};
use tisim::{run_simulation, Discipline, ExperimentConfig};

const SWEEP_FILE: &str = "sweep.csv";

#[derive(Parser)]
#[command(name = "tisim", version, about = "WiFi-7 Tactile Internet BSS simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "TISIM_OUT_DIR", default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its summary and per-sample log.
    Simulate {
        /// TOML experiment config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// STA count (default: first entry of `sta_counts`).
        #[arg(long)]
        stas: Option<usize>,
        /// vanilla | nobus (default: first entry of `disciplines`).
        #[arg(long)]
        discipline: Option<Discipline>,
        /// Seed (default: first entry of `seeds`).
        #[arg(long)]
        seed: Option<u64>,
        /// Run duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run every (STA count, discipline, seed) combination of a config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Write a plot-ready table from a sweep result.
    Emit {
        /// latency_ampdu | rmse_fraction
        #[arg(long)]
        kind: PlotKind,
        /// Sweep CSV to read (default: <out-dir>/sweep.csv).
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Restrict to these disciplines (repeatable; default: all).
        #[arg(long = "discipline")]
        disciplines: Vec<Discipline>,
        #[command(flatten)]
        out: OutDir,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    use std::io::Write;
    let mut w = create(dir, "config.toml")?;
    w.write_all(cfg.to_toml_string()?.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn simulate(
    config: Option<&Path>,
    stas: Option<usize>,
    discipline: Option<Discipline>,
    seed: Option<u64>,
    duration: Option<f64>,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    let n = stas.unwrap_or(cfg.sta_counts[0]);
    let d = discipline.unwrap_or(cfg.disciplines[0]);
    let s = seed.unwrap_or(cfg.seeds[0]);
    cfg.sta_counts = vec![n];
    cfg.disciplines = vec![d];
    cfg.seeds = vec![s];
    if let Some(secs) = duration {
        cfg.run_duration = secs;
    }
    cfg.validate().context("invalid effective config")?;

    let run = run_simulation(&cfg.sim_params(n, d, s))?;
    if !run.violations.is_clean() {
        bail!(
            "invariant violations in run ({d}, {n} STAs, seed {s}): {:?}",
            run.violations
        );
    }
    write_config(&cfg, out)?;
    write_metrics_csv(std::slice::from_ref(&run.metrics), create(out, "summary.csv")?)?;
    write_sample_log(&run.log, create(out, "samples.csv")?)?;
    let m = &run.metrics;
    println!(
        "{d} {n} STAs seed {s}: worst RTT {:.3} ms, AMPDU DL/UL {:.2}/{:.2}, delivered {:.4}, RMSE {:.4} cm",
        m.worst_rtt_ms, m.mean_ampdu_dl, m.mean_ampdu_ul, m.delivered_fraction, m.rmse_cm
    );
    println!("wrote summary.csv, samples.csv, config.toml to {}", out.display());
    Ok(())
}

fn sweep(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(Some(config))?;
    eprintln!("running {} simulations", cfg.run_count());
    let result = run_sweep(&cfg)?;
    write_config(&cfg, out)?;
    result.write_csv(create(out, SWEEP_FILE)?)?;
    let failed: Vec<_> = result.failures().collect();
    let violated = result.rows.iter().filter(|r| r.violations > 0).count();
    println!(
        "{} runs, {} failed, {} with invariant violations; wrote {}",
        result.rows.len(),
        failed.len(),
        violated,
        out.join(SWEEP_FILE).display()
    );
    if let Some(r) = failed.first() {
        bail!(
            "run ({}, {} STAs, seed {}) failed: {}",
            r.discipline,
            r.sta_count,
            r.seed,
            r.result.as_ref().err().map(String::as_str).unwrap_or_default()
        );
    }
    if violated > 0 {
        bail!("{violated} runs reported invariant violations");
    }
    Ok(())
}

fn emit(kind: PlotKind, sweep: Option<&Path>, disciplines: &[Discipline], out: &Path) -> Result<()> {
    let path = sweep.map_or_else(|| out.join(SWEEP_FILE), Path::to_path_buf);
    let result = SweepResult::read_csv_file(&path)
        .with_context(|| format!("reading sweep result {}", path.display()))?;
    if result.rows.is_empty() {
        bail!("sweep result {} has no runs", path.display());
    }
    let selected = if disciplines.is_empty() {
        result.disciplines()
    } else {
        disciplines.to_vec()
    };
    match emit_plotdata(&result, kind, &selected, out)? {
        EmitOutcome::Written(p) => println!("wrote {}", p.display()),
        EmitOutcome::Skipped(notice) => println!("notice: {notice}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Simulate {
            config,
            stas,
            discipline,
            seed,
            duration,
            out,
        } => simulate(config.as_deref(), *stas, *discipline, *seed, *duration, &out.out_dir),
        Command::Sweep { config, out } => sweep(config, &out.out_dir),
        Command::Emit {
            kind,
            sweep,
            disciplines,
            out,
        } => emit(*kind, sweep.as_deref(), disciplines, &out.out_dir),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
