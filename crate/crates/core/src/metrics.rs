//! Per-sample event log of a run and its reduction to [`RunMetrics`].

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::SimTime;
use crate::mac::Discipline;
use crate::playback::rmse;
use crate::traffic::{Position, SensorTrace};
use crate::{Direction, FlowId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOutcome {
    /// Still queued or on the air when the run ended.
    Pending,
    Delivered,
    RetryDrop,
    ProactiveDrop,
}

impl SampleOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleOutcome::Pending => "residual",
            SampleOutcome::Delivered => "delivered",
            SampleOutcome::RetryDrop => "retry_drop",
            SampleOutcome::ProactiveDrop => "proactive_drop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub seq: u64,
    pub generated_at: SimTime,
    pub enqueued_at: SimTime,
    pub first_attempt_at: Option<SimTime>,
    pub received_at: Option<SimTime>,
    pub displayed_at: Option<SimTime>,
    pub outcome: SampleOutcome,
}

#[derive(Debug, Clone)]
pub struct FlowLog {
    pub flow: FlowId,
    /// Indexed by sequence number.
    pub records: Vec<SampleRecord>,
    /// Value shown by the receiver at each display tick.
    pub displayed: Vec<Position>,
    pub source: Arc<SensorTrace>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AmpduTally {
    pub ampdus: u64,
    pub mpdus: u64,
}

impl AmpduTally {
    pub fn add(&mut self, mpdus: usize) {
        if mpdus > 0 {
            self.ampdus += 1;
            self.mpdus += mpdus as u64;
        }
    }

    pub fn mean(&self) -> f64 {
        if self.ampdus == 0 {
            0.0
        } else {
            self.mpdus as f64 / self.ampdus as f64
        }
    }
}

/// Everything a run records, before reduction.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub discipline: Discipline,
    pub n_stas: usize,
    pub seed: u64,
    pub warmup: SimTime,
    pub sample_period: SimTime,
    pub flows: Vec<FlowLog>,
    pub ampdu_dl: AmpduTally,
    pub ampdu_ul: AmpduTally,
    pub attempts: u64,
    pub collided_attempts: u64,
    pub ap_txops: u64,
    pub medium_busy: SimTime,
    pub duration: SimTime,
}

/// Summary of one run. Times are in milliseconds, RMSE in centimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub discipline: Discipline,
    pub sta_count: usize,
    pub seed: u64,
    pub worst_dl_ms: f64,
    pub worst_ul_ms: f64,
    pub worst_rtt_ms: f64,
    pub mean_dl_ms: f64,
    pub mean_ul_ms: f64,
    pub p99_dl_ms: f64,
    pub p99_ul_ms: f64,
    pub worst_queueing_ms: f64,
    pub mean_display_delay_ms: f64,
    pub mean_ampdu_dl: f64,
    pub mean_ampdu_ul: f64,
    pub delivered_fraction: f64,
    pub delivered_fraction_dl: f64,
    pub delivered_fraction_ul: f64,
    /// Teleoperator-side (DL) position RMSE on the x axis, mean over flows.
    pub rmse_cm: f64,
    pub rmse_x_cm: f64,
    pub rmse_y_cm: f64,
    pub rmse_z_cm: f64,
    pub rmse_ul_cm: f64,
    pub generated: u64,
    pub delivered: u64,
    pub retry_drops: u64,
    pub proactive_drops: u64,
    pub residual: u64,
    pub collision_probability: f64,
    pub medium_utilization: f64,
    pub ap_txops: u64,
}

impl RunMetrics {
    /// All-zero metrics for the given key.
    pub fn zeroed(discipline: Discipline, sta_count: usize, seed: u64) -> Self {
        RunMetrics {
            discipline,
            sta_count,
            seed,
            worst_dl_ms: 0.0,
            worst_ul_ms: 0.0,
            worst_rtt_ms: 0.0,
            mean_dl_ms: 0.0,
            mean_ul_ms: 0.0,
            p99_dl_ms: 0.0,
            p99_ul_ms: 0.0,
            worst_queueing_ms: 0.0,
            mean_display_delay_ms: 0.0,
            mean_ampdu_dl: 0.0,
            mean_ampdu_ul: 0.0,
            delivered_fraction: 0.0,
            delivered_fraction_dl: 0.0,
            delivered_fraction_ul: 0.0,
            rmse_cm: 0.0,
            rmse_x_cm: 0.0,
            rmse_y_cm: 0.0,
            rmse_z_cm: 0.0,
            rmse_ul_cm: 0.0,
            generated: 0,
            delivered: 0,
            retry_drops: 0,
            proactive_drops: 0,
            residual: 0,
            collision_probability: 0.0,
            medium_utilization: 0.0,
            ap_txops: 0,
        }
    }
}

fn ms(t: SimTime) -> f64 {
    t.as_millis_f64()
}

fn percentile(sorted: &[SimTime], q: f64) -> SimTime {
    if sorted.is_empty() {
        return SimTime::ZERO;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[derive(Default)]
struct DirStats {
    latencies: Vec<SimTime>,
    generated: u64,
    delivered: u64,
    rmse: Vec<[f64; 3]>,
}

/// Reduces a run log. Latency and RMSE statistics skip samples generated
/// during the warmup; counts cover the whole run.
pub fn summarize(log: &RunLog) -> Result<RunMetrics> {
    let warmup_ticks = (log.warmup.as_nanos() / log.sample_period.as_nanos()) as usize;
    let mut dl = DirStats::default();
    let mut ul = DirStats::default();
    let (mut retry, mut proactive, mut residual) = (0u64, 0u64, 0u64);
    let mut worst_queueing = SimTime::ZERO;
    let mut display_delay_sum = 0.0;
    let mut display_delay_n = 0u64;

    for f in &log.flows {
        let d = match f.flow.direction {
            Direction::Dl => &mut dl,
            Direction::Ul => &mut ul,
        };
        d.generated += f.records.len() as u64;
        for r in &f.records {
            match r.outcome {
                SampleOutcome::Delivered => {
                    d.delivered += 1;
                    if r.generated_at >= log.warmup {
                        let rx = r.received_at.expect("delivered sample has a reception time");
                        d.latencies.push(rx - r.enqueued_at);
                        if let Some(t) = r.displayed_at {
                            display_delay_sum += ms(t - rx);
                            display_delay_n += 1;
                        }
                    }
                }
                SampleOutcome::RetryDrop => retry += 1,
                SampleOutcome::ProactiveDrop => proactive += 1,
                SampleOutcome::Pending => residual += 1,
            }
            if r.generated_at >= log.warmup {
                if let Some(a) = r.first_attempt_at {
                    worst_queueing = worst_queueing.max(a - r.enqueued_at);
                }
            }
        }
        let src: Vec<Position> = f.source.samples[..f.displayed.len()]
            .iter()
            .map(|s| s.position)
            .collect();
        d.rmse.push(rmse(&src, &f.displayed, warmup_ticks)?);
    }

    for d in [&mut dl, &mut ul] {
        d.latencies.sort_unstable();
    }
    let worst = |d: &DirStats| d.latencies.last().copied().unwrap_or(SimTime::ZERO);
    let mean = |d: &DirStats| {
        if d.latencies.is_empty() {
            0.0
        } else {
            d.latencies.iter().map(|t| ms(*t)).sum::<f64>() / d.latencies.len() as f64
        }
    };
    let frac = |del: u64, gen: u64| if gen == 0 { 0.0 } else { del as f64 / gen as f64 };
    let mean_axis = |d: &DirStats, axis: usize| {
        if d.rmse.is_empty() {
            0.0
        } else {
            d.rmse.iter().map(|r| r[axis]).sum::<f64>() / d.rmse.len() as f64
        }
    };

    Ok(RunMetrics {
        discipline: log.discipline,
        sta_count: log.n_stas,
        seed: log.seed,
        worst_dl_ms: ms(worst(&dl)),
        worst_ul_ms: ms(worst(&ul)),
        worst_rtt_ms: ms(worst(&dl) + worst(&ul)),
        mean_dl_ms: mean(&dl),
        mean_ul_ms: mean(&ul),
        p99_dl_ms: ms(percentile(&dl.latencies, 0.99)),
        p99_ul_ms: ms(percentile(&ul.latencies, 0.99)),
        worst_queueing_ms: ms(worst_queueing),
        mean_display_delay_ms: if display_delay_n == 0 {
            0.0
        } else {
            display_delay_sum / display_delay_n as f64
        },
        mean_ampdu_dl: log.ampdu_dl.mean(),
        mean_ampdu_ul: log.ampdu_ul.mean(),
        delivered_fraction: frac(dl.delivered + ul.delivered, dl.generated + ul.generated),
        delivered_fraction_dl: frac(dl.delivered, dl.generated),
        delivered_fraction_ul: frac(ul.delivered, ul.generated),
        rmse_cm: mean_axis(&dl, 0),
        rmse_x_cm: mean_axis(&dl, 0),
        rmse_y_cm: mean_axis(&dl, 1),
        rmse_z_cm: mean_axis(&dl, 2),
        rmse_ul_cm: mean_axis(&ul, 0),
        generated: dl.generated + ul.generated,
        delivered: dl.delivered + ul.delivered,
        retry_drops: retry,
        proactive_drops: proactive,
        residual,
        collision_probability: if log.attempts == 0 {
            0.0
        } else {
            log.collided_attempts as f64 / log.attempts as f64
        },
        medium_utilization: log.medium_busy.as_secs_f64() / log.duration.as_secs_f64(),
        ap_txops: log.ap_txops,
    })
}

/// Writes the per-sample log as CSV. Times are integer nanoseconds; empty
/// fields mean the event never happened.
pub fn write_sample_log<W: Write>(log: &RunLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "flow",
        "seq",
        "generated_at",
        "enqueued_at",
        "received_at",
        "displayed_at",
        "outcome",
    ])?;
    let opt = |t: Option<SimTime>| t.map_or(String::new(), |t| t.as_nanos().to_string());
    for f in &log.flows {
        let flow = f.flow.to_string();
        for r in &f.records {
            w.write_record([
                flow.as_str(),
                &r.seq.to_string(),
                &r.generated_at.as_nanos().to_string(),
                &r.enqueued_at.as_nanos().to_string(),
                &opt(r.received_at),
                &opt(r.displayed_at),
                r.outcome.as_str(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `rows` as CSV with a header row.
pub fn write_metrics_csv<W: Write>(rows: &[RunMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
