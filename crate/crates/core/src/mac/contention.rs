use super::{BackoffState, EdcaParams};
use crate::kernel::SimTime;
use crate::DeviceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Success,
    Collision,
}

/// Resolves simultaneous PPDU starts on the shared medium. Propagation is
/// instantaneous and sensing perfect, so a lone transmitter always
/// succeeds and any overlap destroys every PPDU involved.
pub fn medium_arbitrate(transmitters: &[DeviceId]) -> Vec<(DeviceId, TxOutcome)> {
    let outcome = if transmitters.len() == 1 {
        TxOutcome::Success
    } else {
        TxOutcome::Collision
    };
    transmitters.iter().map(|&d| (d, outcome)).collect()
}

/// Slot grid of the current idle period.
///
/// When the medium goes idle at `T`, every contender waits AIFS and then
/// counts down one backoff slot per `slot` of idle time. Attempts can only
/// begin at `T + AIFS + k * slot`, so two devices collide exactly when they
/// pick the same `k`.
#[derive(Debug, Clone)]
pub struct Contention {
    params: EdcaParams,
    idle_since: Option<SimTime>,
}

impl Contention {
    pub fn new(params: EdcaParams) -> Self {
        Contention {
            params,
            idle_since: Some(SimTime::ZERO),
        }
    }

    pub fn params(&self) -> &EdcaParams {
        &self.params
    }

    pub fn is_idle(&self) -> bool {
        self.idle_since.is_some()
    }

    pub fn idle_since(&self) -> Option<SimTime> {
        self.idle_since
    }

    pub fn slot_start(&self, slot: u64) -> Option<SimTime> {
        self.idle_since
            .map(|t| t + self.params.aifs + self.params.slot.mul(slot))
    }

    /// First grid slot a device that starts contending at `now` may use.
    pub fn join_slot(&self, now: SimTime) -> u64 {
        match self.idle_since {
            Some(origin) if now > origin => {
                (now - origin).as_nanos().div_ceil(self.params.slot.as_nanos())
            }
            _ => 0,
        }
    }

    /// Registers a device that just became a contender.
    pub fn join(&self, now: SimTime, backoff: &mut BackoffState) {
        backoff.join_slot = self.join_slot(now);
    }

    /// Slot index whose start is `now`, if `now` lies on the grid.
    pub fn slot_at(&self, now: SimTime) -> Option<u64> {
        let start = self.idle_since? + self.params.aifs;
        let off = now.checked_sub(start)?.as_nanos();
        let slot = self.params.slot.as_nanos();
        (off % slot == 0).then_some(off / slot)
    }

    /// Time of the earliest attempt among `contenders`.
    pub fn next_attempt<'a>(
        &self,
        contenders: impl IntoIterator<Item = &'a BackoffState>,
    ) -> Option<SimTime> {
        let slot = contenders.into_iter().filter_map(|b| b.tx_slot()).min()?;
        self.slot_start(slot)
    }

    /// The medium becomes busy at `now`; every contender freezes.
    pub fn set_busy<'a>(
        &mut self,
        now: SimTime,
        contenders: impl IntoIterator<Item = &'a mut BackoffState>,
    ) {
        let slot = match self.idle_since {
            Some(origin) => {
                let start = origin + self.params.aifs;
                now.checked_sub(start)
                    .map_or(0, |d| d.as_nanos() / self.params.slot.as_nanos())
            }
            None => 0,
        };
        for b in contenders {
            b.freeze(slot);
        }
        self.idle_since = None;
    }

    pub fn set_idle(&mut self, now: SimTime) {
        debug_assert!(self.idle_since.is_none(), "medium already idle");
        self.idle_since = Some(now);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arbitrate() {
        assert_eq!(
            medium_arbitrate(&[DeviceId(1)]),
            vec![(DeviceId(1), TxOutcome::Success)]
        );
        let r = medium_arbitrate(&[DeviceId(1), DeviceId(2)]);
        assert!(r.iter().all(|(_, o)| *o == TxOutcome::Collision));
        assert_eq!(medium_arbitrate(&[DeviceId(0), DeviceId(1), DeviceId(2)]).len(), 3);
    }

    #[test]
    fn attempt_time_is_aifs_plus_slots() {
        let p = EdcaParams::default();
        let c = Contention::new(p);
        let b = BackoffState {
            cw: 3,
            counter: Some(2),
            join_slot: 0,
        };
        assert_eq!(c.next_attempt([&b]), Some(SimTime::from_micros(34 + 18)));
    }

    #[test]
    fn late_joiner_waits_its_own_aifs() {
        let p = EdcaParams::default();
        let mut c = Contention::new(p);
        c.set_busy(SimTime::ZERO, []);
        c.set_idle(SimTime::from_micros(100));
        // Joining 20 µs into the idle period: grid slot ceil(20/9) = 3.
        assert_eq!(c.join_slot(SimTime::from_micros(120)), 3);
        let mut b = BackoffState {
            cw: 3,
            counter: Some(0),
            join_slot: 0,
        };
        c.join(SimTime::from_micros(120), &mut b);
        let t = c.next_attempt([&b]).unwrap();
        assert!(t >= SimTime::from_micros(120 + 34));
        assert_eq!(t, SimTime::from_micros(100 + 34 + 27));
        assert_eq!(c.slot_at(t), Some(3));
    }

    #[test]
    fn busy_freezes_contenders() {
        let p = EdcaParams::default();
        let mut c = Contention::new(p);
        let mut a = BackoffState {
            cw: 3,
            counter: Some(1),
            join_slot: 0,
        };
        let mut b = BackoffState {
            cw: 7,
            counter: Some(5),
            join_slot: 0,
        };
        let t = c.next_attempt([&a, &b]).unwrap();
        assert_eq!(c.slot_at(t), Some(1));
        c.set_busy(t, [&mut a, &mut b]);
        assert_eq!(b.counter, Some(4));
        assert_eq!(a.counter, Some(0));
        assert!(!c.is_idle());
    }
}
