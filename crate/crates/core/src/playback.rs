//! Receiver-side display models and the position RMSE.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::SimTime;
use crate::mac::Discipline;
use crate::traffic::Position;

/// Serial 1 kHz playback of every received sample, in sequence order.
#[derive(Debug, Clone, Default)]
pub struct JitterBuffer {
    pending: BTreeMap<u64, Position>,
    last_displayed: Position,
    last_seq: Option<u64>,
}

impl JitterBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn on_reception(&mut self, seq: u64, value: Position) {
        if self.last_seq.is_none_or(|s| seq > s) {
            self.pending.insert(seq, value);
        }
    }

    /// Shows the lowest pending sample, or holds the last one when the
    /// buffer is empty. Missing sequence numbers are skipped, not waited for.
    pub fn display_tick(&mut self) -> (Position, Option<u64>) {
        match self.pending.pop_first() {
            Some((seq, v)) => {
                self.last_displayed = v;
                self.last_seq = Some(seq);
                (v, Some(seq))
            }
            None => (self.last_displayed, None),
        }
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }
}

/// Latest-sample display with zero-order hold.
#[derive(Debug, Clone, Default)]
pub struct ZohDisplay {
    latest_seq: Option<u64>,
    value: Position,
}

impl ZohDisplay {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns whether the arrival became the displayed value.
    pub fn on_reception(&mut self, seq: u64, value: Position) -> bool {
        if self.latest_seq.is_none_or(|s| seq > s) {
            self.latest_seq = Some(seq);
            self.value = value;
            true
        } else {
            false
        }
    }

    pub fn value(&self) -> Position {
        self.value
    }

    pub fn latest_seq(&self) -> Option<u64> {
        self.latest_seq
    }
}

/// What a receiver did with an arriving sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceptionEffect {
    /// Queued for a later display tick.
    Buffered,
    /// Displayed immediately at the reception instant.
    Displayed,
    /// Older than what is already shown; discarded.
    Stale,
}

#[derive(Debug, Clone)]
pub enum Display {
    JitterBuffer(JitterBuffer),
    Zoh(ZohDisplay),
}

impl Display {
    pub fn for_discipline(d: Discipline) -> Self {
        match d {
            Discipline::Vanilla => Display::JitterBuffer(JitterBuffer::new()),
            Discipline::Nobus => Display::Zoh(ZohDisplay::new()),
        }
    }

    pub fn on_reception(&mut self, seq: u64, value: Position) -> ReceptionEffect {
        match self {
            Display::JitterBuffer(jb) => {
                jb.on_reception(seq, value);
                ReceptionEffect::Buffered
            }
            Display::Zoh(z) => {
                if z.on_reception(seq, value) {
                    ReceptionEffect::Displayed
                } else {
                    ReceptionEffect::Stale
                }
            }
        }
    }

    /// Value shown at this tick, plus the sample newly shown by the tick
    /// (jitter buffer only).
    pub fn display_tick(&mut self) -> (Position, Option<u64>) {
        match self {
            Display::JitterBuffer(jb) => jb.display_tick(),
            Display::Zoh(z) => (z.value(), None),
        }
    }

    pub fn shown_seq(&self) -> Option<u64> {
        match self {
            Display::JitterBuffer(jb) => jb.last_seq(),
            Display::Zoh(z) => z.latest_seq(),
        }
    }
}

/// Per-axis RMSE between `source[k]` and `displayed[k]` over ticks
/// `k >= warmup_ticks`.
pub fn rmse(source: &[Position], displayed: &[Position], warmup_ticks: usize) -> Result<[f64; 3]> {
    let n = source.len().min(displayed.len());
    if displayed.len() < source.len() {
        return Err(Error::Metrics(format!(
            "displayed signal covers {} of {} ticks",
            displayed.len(),
            source.len()
        )));
    }
    if n <= warmup_ticks {
        return Err(Error::Metrics(format!(
            "run of {n} ticks is not longer than the {warmup_ticks}-tick warmup"
        )));
    }
    let mut acc = [0.0f64; 3];
    for k in warmup_ticks..n {
        for (axis, a) in acc.iter_mut().enumerate() {
            let e = displayed[k][axis] - source[k][axis];
            *a += e * e;
        }
    }
    let count = (n - warmup_ticks) as f64;
    Ok(acc.map(|a| (a / count).sqrt()))
}

/// Display latency of a jitter-buffered sample shown at `tick_time`.
pub fn display_delay(received_at: SimTime, tick_time: SimTime) -> SimTime {
    tick_time.saturating_sub(received_at)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> Position {
        [x, 0.0, 0.0]
    }

    #[test]
    fn zoh_discards_stale() {
        let mut z = ZohDisplay::new();
        assert!(z.on_reception(10, p(1.0)));
        assert!(!z.on_reception(9, p(2.0)));
        assert_eq!(z.value(), p(1.0));
        assert!(z.on_reception(11, p(3.0)));
        assert_eq!(z.value(), p(3.0));
    }

    #[test]
    fn jitter_buffer_serial_playback() {
        let mut jb = JitterBuffer::new();
        for s in 0..12 {
            jb.on_reception(s, p(s as f64));
        }
        assert_eq!(jb.pending_len(), 12);
        for s in 0..12 {
            assert_eq!(jb.display_tick(), (p(s as f64), Some(s)));
        }
        // Empty: hold last value.
        assert_eq!(jb.display_tick(), (p(11.0), None));
    }

    #[test]
    fn jitter_buffer_skips_missing() {
        let mut jb = JitterBuffer::new();
        jb.on_reception(7, p(7.0));
        jb.on_reception(5, p(5.0));
        assert_eq!(jb.display_tick().1, Some(5));
        assert_eq!(jb.display_tick().1, Some(7));
    }

    #[test]
    fn display_enum_effects() {
        let mut d = Display::for_discipline(Discipline::Nobus);
        assert_eq!(d.on_reception(11, p(1.0)), ReceptionEffect::Displayed);
        assert_eq!(d.display_tick().0, p(1.0));
        assert_eq!(d.on_reception(3, p(9.0)), ReceptionEffect::Stale);
        let mut d = Display::for_discipline(Discipline::Vanilla);
        assert_eq!(d.on_reception(0, p(1.0)), ReceptionEffect::Buffered);
        assert_eq!(d.shown_seq(), None);
        d.display_tick();
        assert_eq!(d.shown_seq(), Some(0));
    }

    #[test]
    fn rmse_identity_and_constant() {
        let src: Vec<Position> = (0..500).map(|k| [k as f64, 1.0, -2.0]).collect();
        assert_eq!(rmse(&src, &src, 100).unwrap(), [0.0; 3]);
        let src = vec![[3.0; 3]; 300];
        let shown = vec![[0.0; 3]; 300];
        let r = rmse(&src, &shown, 100).unwrap();
        assert!(r.iter().all(|&x| (x - 3.0).abs() < 1e-12));
    }

    #[test]
    fn rmse_short_run_is_error() {
        let src = vec![[0.0; 3]; 50];
        assert!(rmse(&src, &src, 100).is_err());
        assert!(rmse(&src, &src[..10], 0).is_err());
    }
}
