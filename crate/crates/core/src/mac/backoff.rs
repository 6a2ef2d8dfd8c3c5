use serde::{Deserialize, Serialize};

use crate::kernel::{RngStream, SimTime};

/// AC_VO EDCA parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdcaParams {
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub slot: SimTime,
    pub aifs: SimTime,
}

impl Default for EdcaParams {
    fn default() -> Self {
        EdcaParams {
            cw_min: 3,
            cw_max: 7,
            retry_limit: 7,
            slot: SimTime::from_micros(9),
            aifs: SimTime::from_micros(34),
        }
    }
}

impl EdcaParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.cw_min > self.cw_max {
            return Err("cw_min must not exceed cw_max".into());
        }
        if self.slot == SimTime::ZERO {
            return Err("slot must be positive".into());
        }
        Ok(())
    }

    /// Next contention window after a failed attempt.
    pub fn escalate(&self, cw: u32) -> u32 {
        (2 * (cw + 1) - 1).min(self.cw_max)
    }
}

/// Backoff bookkeeping of one EDCA contender.
///
/// `counter` is the number of idle slots still to count down. `join_slot`
/// is the slot index (on the current idle period's grid) at which counting
/// started; it is non-zero only for devices that gained traffic while the
/// medium was already idle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackoffState {
    pub cw: u32,
    pub counter: Option<u32>,
    pub join_slot: u64,
}

impl BackoffState {
    pub fn new(params: &EdcaParams) -> Self {
        BackoffState {
            cw: params.cw_min,
            counter: None,
            join_slot: 0,
        }
    }

    /// Draws a counter in `[0, cw]` unless one is already pending.
    pub fn draw_backoff(&mut self, rng: &mut RngStream) -> u32 {
        if let Some(c) = self.counter {
            return c;
        }
        let c = rng.uniform_int(0, self.cw as i64) as u32;
        self.counter = Some(c);
        c
    }

    /// Slot index of the transmission attempt on the current idle grid.
    pub fn tx_slot(&self) -> Option<u64> {
        self.counter.map(|c| self.join_slot + c as u64)
    }

    /// The medium turned busy at slot index `slot` of the grid: retain the
    /// slots not yet counted. Counting resumes after a fresh AIFS.
    pub fn freeze(&mut self, slot: u64) {
        if let Some(c) = self.counter.as_mut() {
            let elapsed = slot.saturating_sub(self.join_slot);
            *c = c.saturating_sub(elapsed as u32);
        }
        self.join_slot = 0;
    }

    pub fn on_success(&mut self, params: &EdcaParams) {
        self.cw = params.cw_min;
        self.counter = None;
        self.join_slot = 0;
    }

    pub fn on_collision(&mut self, params: &EdcaParams) {
        self.cw = params.escalate(self.cw);
        self.counter = None;
        self.join_slot = 0;
    }

    /// The frame was discarded at the retry limit.
    pub fn on_discard(&mut self, params: &EdcaParams) {
        self.on_success(params);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escalation() {
        let p = EdcaParams::default();
        assert_eq!(p.escalate(3), 7);
        assert_eq!(p.escalate(7), 7);
    }

    #[test]
    fn draws_within_window() {
        let p = EdcaParams::default();
        let mut rng = RngStream::new(11, 1);
        let mut b = BackoffState::new(&p);
        let mut seen = [false; 8];
        for _ in 0..200 {
            b.counter = None;
            let c = b.draw_backoff(&mut rng);
            assert!(c <= 3);
            seen[c as usize] = true;
        }
        assert!(seen[..4].iter().all(|&s| s));
        b.on_collision(&p);
        assert_eq!(b.cw, 7);
        for _ in 0..400 {
            b.counter = None;
            let c = b.draw_backoff(&mut rng);
            assert!(c <= 7);
            seen[c as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
        b.on_success(&p);
        assert_eq!(b.cw, 3);
    }

    #[test]
    fn pending_counter_is_kept() {
        let p = EdcaParams::default();
        let mut rng = RngStream::new(1, 1);
        let mut b = BackoffState::new(&p);
        let c = b.draw_backoff(&mut rng);
        assert_eq!(b.draw_backoff(&mut rng), c);
    }

    #[test]
    fn freeze_retains_remaining_slots() {
        let mut b = BackoffState {
            cw: 7,
            counter: Some(6),
            join_slot: 2,
        };
        assert_eq!(b.tx_slot(), Some(8));
        b.freeze(5);
        assert_eq!(b.counter, Some(3));
        assert_eq!(b.join_slot, 0);
        // Busy before this device started counting.
        let mut b = BackoffState {
            cw: 3,
            counter: Some(2),
            join_slot: 4,
        };
        b.freeze(1);
        assert_eq!(b.counter, Some(2));
    }
}
