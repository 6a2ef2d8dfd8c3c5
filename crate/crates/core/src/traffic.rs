//! 1 kHz haptic traffic: position traces and the MPDUs that carry them.
//!
//! Recorded teleoperation traces are not available, so the default source
//! is a synthetic band-limited motion: per axis, a sum of sinusoids between
//! 0.1 and 4 Hz scaled so that 99 % of the samples lie within ±10 cm.
//! Recorded traces can be replayed from CSV (`tick,x,y,z`).

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{RngStream, SimTime};
use crate::mac::Mpdu;
use crate::FlowId;

pub type Position = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub tick: u64,
    /// Centimeters.
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    Synthetic { seed: u64, params: MotionParams },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    pub samples: Vec<TraceSample>,
    pub source: TraceSource,
}

impl SensorTrace {
    pub fn duration_ticks(&self) -> u64 {
        self.samples.len() as u64
    }

    pub fn at(&self, tick: u64) -> Position {
        self.samples[tick as usize].position
    }

    /// One axis as a plain vector, indexed by tick.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.position[axis]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionParams {
    /// Sinusoids per axis.
    pub components: usize,
    pub min_freq_hz: f64,
    pub max_freq_hz: f64,
    /// Target 99th percentile of |position| per axis, cm.
    pub p99_cm: f64,
    /// Hard ceiling on |position| per axis, cm.
    pub max_abs_cm: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            components: 4,
            min_freq_hz: 0.1,
            max_freq_hz: 4.0,
            p99_cm: 10.0,
            max_abs_cm: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    /// Application payload rate per direction per STA, bit/s.
    pub per_sta_rate_bps: u64,
    pub sampling_rate_hz: u64,
    /// Generation phase offset per STA index.
    pub stagger: SimTime,
    pub motion: MotionParams,
    /// Replay this CSV trace on every flow instead of synthetic motion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_csv: Option<PathBuf>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            per_sta_rate_bps: 20_000_000,
            sampling_rate_hz: 1000,
            stagger: SimTime::from_micros(1),
            motion: MotionParams::default(),
            trace_csv: None,
        }
    }
}

impl TrafficConfig {
    pub fn payload_bytes(&self) -> u64 {
        self.per_sta_rate_bps / (8 * self.sampling_rate_hz)
    }

    pub fn sample_period(&self) -> SimTime {
        SimTime::from_nanos(1_000_000_000 / self.sampling_rate_hz)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sampling_rate_hz == 0 || 1_000_000_000 % self.sampling_rate_hz != 0 {
            return Err("sampling_rate_hz must divide 1e9".into());
        }
        let p = self.payload_bytes();
        if p == 0 {
            return Err("per-STA rate too low for a non-empty payload".into());
        }
        if p * 8 * self.sampling_rate_hz != self.per_sta_rate_bps {
            return Err(format!(
                "per_sta_rate_bps {} is not a whole number of bytes per sample at {} Hz",
                self.per_sta_rate_bps, self.sampling_rate_hz
            ));
        }
        if self.stagger >= self.sample_period() {
            return Err("stagger must be shorter than one sample period".into());
        }
        let m = &self.motion;
        if !(m.min_freq_hz > 0.0 && m.min_freq_hz <= m.max_freq_hz) {
            return Err("motion frequencies must satisfy 0 < min <= max".into());
        }
        if !(m.p99_cm > 0.0 && m.max_abs_cm >= m.p99_cm) {
            return Err("motion amplitudes must satisfy 0 < p99_cm <= max_abs_cm".into());
        }
        Ok(())
    }

    /// Instant at which `flow` enqueues the sample of `tick`.
    pub fn enqueue_time(&self, flow: FlowId, tick: u64) -> SimTime {
        self.sample_period().mul(tick) + self.stagger.mul(flow.sta.index() as u64)
    }
}

/// Synthetic sum-of-sinusoids motion at 1 kHz.
pub fn generate_trace(seed: u64, duration_ticks: u64, params: &MotionParams) -> SensorTrace {
    assert!(duration_ticks > 0, "generate_trace: empty duration");
    let mut rng = RngStream::new(seed, 0x0074_7261_6365);
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(3);
    for _ in 0..3 {
        let comps: Vec<(f64, f64, f64)> = (0..params.components)
            .map(|_| {
                let f = rng.uniform_f64(params.min_freq_hz, params.max_freq_hz);
                let phase = rng.uniform_f64(0.0, TAU);
                let amp = rng.uniform_f64(0.5, 1.0);
                (f, phase, amp)
            })
            .collect();
        let mut v: Vec<f64> = (0..duration_ticks)
            .map(|k| {
                let t = k as f64 / 1000.0;
                comps
                    .iter()
                    .map(|&(f, ph, a)| a * (TAU * f * t + ph).sin())
                    .sum()
            })
            .collect();
        normalize(&mut v, params);
        axes.push(v);
    }
    let samples = (0..duration_ticks as usize)
        .map(|k| TraceSample {
            tick: k as u64,
            position: [axes[0][k], axes[1][k], axes[2][k]],
        })
        .collect();
    SensorTrace {
        samples,
        source: TraceSource::Synthetic {
            seed,
            params: *params,
        },
    }
}

fn normalize(v: &mut [f64], params: &MotionParams) {
    let mut abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let max = abs.last().copied().unwrap_or(0.0);
    if max == 0.0 {
        return;
    }
    let idx = ((abs.len() as f64 * 0.99).ceil() as usize).clamp(1, abs.len()) - 1;
    let p99 = abs[idx];
    let scale = (params.p99_cm / p99).min(params.max_abs_cm / max);
    v.iter_mut().for_each(|x| *x *= scale);
}

/// Loads a `tick,x,y,z` CSV trace. Ticks must start at 0 and be contiguous.
pub fn load_trace_csv(path: impl AsRef<Path>) -> Result<SensorTrace> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let expected = ["tick", "x", "y", "z"];
    if headers.is_empty() {
        return Err(Error::Trace {
            path: path.into(),
            msg: "no samples".into(),
        });
    }
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::TraceParse {
            path: path.into(),
            line: 1,
            msg: format!("expected header tick,x,y,z, found {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut samples: Vec<TraceSample> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let perr = |msg: String| Error::TraceParse {
            path: path.into(),
            line,
            msg,
        };
        if rec.len() != 4 {
            return Err(perr(format!("expected 4 fields, found {}", rec.len())));
        }
        let tick: u64 = rec[0]
            .parse()
            .map_err(|_| perr(format!("non-numeric tick {:?}", &rec[0])))?;
        let mut position = [0.0; 3];
        for (axis, p) in position.iter_mut().enumerate() {
            let field = &rec[axis + 1];
            *p = field
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| perr(format!("non-numeric value {field:?}")))?;
        }
        let expected_tick = samples.len() as u64;
        if tick < expected_tick {
            return Err(perr(format!("duplicate tick {tick}")));
        }
        if tick > expected_tick {
            return Err(perr(format!("gap at tick {expected_tick}")));
        }
        samples.push(TraceSample { tick, position });
    }
    if samples.is_empty() {
        return Err(Error::Trace {
            path: path.into(),
            msg: "no samples".into(),
        });
    }
    Ok(SensorTrace {
        samples,
        source: TraceSource::File(path.into()),
    })
}

/// The MPDU carrying `flow`'s sample for `tick`.
pub fn message_at_tick(
    flow: FlowId,
    tick: u64,
    trace: &SensorTrace,
    cfg: &TrafficConfig,
) -> Mpdu {
    assert!(tick < trace.duration_ticks(), "tick {tick} beyond trace");
    Mpdu {
        seq: tick,
        src: flow.src(),
        dst: flow.dst(),
        generated_at: cfg.sample_period().mul(tick),
        enqueued_at: cfg.enqueue_time(flow, tick),
        payload_bytes: cfg.payload_bytes(),
        sample: trace.samples[tick as usize],
        retry_count: 0,
        first_attempt_at: None,
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;
    use crate::DeviceId;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn default_payload_is_2500_bytes() {
        let c = TrafficConfig::default();
        assert_eq!(c.payload_bytes(), 20_000_000 / (8 * 1000));
        assert_eq!(c.payload_bytes(), 2500);
        assert_eq!(c.payload_bytes() * 8 * c.sampling_rate_hz, c.per_sta_rate_bps);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn inexact_rate_rejected() {
        let c = TrafficConfig {
            per_sta_rate_bps: 20_000_001,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_components_is_flat() {
        let p = MotionParams {
            components: 0,
            ..Default::default()
        };
        let t = generate_trace(3, 500, &p);
        assert!(t.samples.iter().all(|s| s.position == [0.0; 3]));
    }

    #[test]
    fn generated_trace_bounds_and_determinism() {
        for seed in 0..20 {
            let t = generate_trace(seed, 10_000, &MotionParams::default());
            let again = generate_trace(seed, 10_000, &MotionParams::default());
            assert_eq!(t, again);
            for axis in 0..3 {
                let v = t.axis(axis);
                let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                assert!(max <= 12.0 + 1e-9, "seed {seed} max {max}");
                let inside = v.iter().filter(|x| x.abs() <= 10.0 + 1e-9).count();
                assert!(inside as f64 >= 0.98 * v.len() as f64);
            }
            assert!(t.samples.iter().enumerate().all(|(k, s)| s.tick == k as u64));
        }
        assert_ne!(
            generate_trace(1, 100, &MotionParams::default()),
            generate_trace(2, 100, &MotionParams::default())
        );
    }

    #[test]
    fn generated_trace_is_smooth() {
        // Band-limited to 4 Hz: per-ms steps stay far below the amplitude.
        let t = generate_trace(9, 5_000, &MotionParams::default());
        let v = t.axis(0);
        let max_step = v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!(max_step < 0.5, "{max_step}");
    }

    #[test]
    fn csv_valid() {
        let f = write_tmp("tick,x,y,z\n0,1.0,2.0,3.0\n1,1.5,-2,0\n2,0,0,0.25\n");
        let t = load_trace_csv(f.path()).unwrap();
        assert_eq!(t.duration_ticks(), 3);
        assert_eq!(t.at(1), [1.5, -2.0, 0.0]);
        assert_eq!(t.at(2)[2], 0.25);
    }

    #[test]
    fn csv_gap() {
        let f = write_tmp("tick,x,y,z\n0,1,2,3\n2,1,2,3\n");
        let e = load_trace_csv(f.path()).unwrap_err().to_string();
        assert!(e.contains("gap at tick 1"), "{e}");
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn csv_duplicate() {
        let f = write_tmp("tick,x,y,z\n0,1,2,3\n0,1,2,3\n");
        let e = load_trace_csv(f.path()).unwrap_err().to_string();
        assert!(e.contains("duplicate tick 0"), "{e}");
    }

    #[test]
    fn csv_non_numeric() {
        let f = write_tmp("tick,x,y,z\n0,1,abc,3\n");
        let e = load_trace_csv(f.path()).unwrap_err().to_string();
        assert!(e.contains("non-numeric"), "{e}");
    }

    #[test]
    fn csv_empty() {
        for content in ["", "tick,x,y,z\n"] {
            let f = write_tmp(content);
            let e = load_trace_csv(f.path()).unwrap_err().to_string();
            assert!(e.contains("no samples"), "{e}");
        }
    }

    #[test]
    fn message_fields() {
        let cfg = TrafficConfig::default();
        let trace = generate_trace(1, 100, &MotionParams::default());
        let flow = FlowId::ul(DeviceId(3));
        let m = message_at_tick(flow, 0, &trace, &cfg);
        assert_eq!(m.seq, 0);
        assert_eq!(m.generated_at, SimTime::ZERO);
        assert_eq!(m.enqueued_at, SimTime::from_micros(3));
        assert_eq!(m.payload_bytes, 2500);
        assert_eq!((m.src, m.dst), (DeviceId(3), DeviceId::AP));
        let m = message_at_tick(flow, 42, &trace, &cfg);
        assert_eq!(m.generated_at, SimTime::from_millis(42));
        assert_eq!(m.sample, trace.samples[42]);
    }
}
