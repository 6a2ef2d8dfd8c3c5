use super::{Ampdu, BackoffState, Discipline, EdcaParams, Mpdu, TxOutcome, TxQueue};
use crate::kernel::{RngStream, SimTime};
use crate::DeviceId;

/// MPDUs that left the device without being delivered when an attempt ended.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TxEndReport {
    pub retry_dropped: Vec<Mpdu>,
    pub proactive_dropped: Vec<Mpdu>,
}

/// MAC state of one EDCA contender (the AP or a STA).
#[derive(Debug, Clone)]
pub struct MacDevice {
    pub id: DeviceId,
    pub queue: TxQueue,
    pub backoff: BackoffState,
    /// AMPDUs of a contended attempt whose outcome is still pending.
    pub in_flight: Vec<Ampdu>,
    pub rng: RngStream,
    edca: EdcaParams,
    pub attempts: u64,
    pub collisions: u64,
}

impl MacDevice {
    pub fn new(id: DeviceId, discipline: Discipline, edca: EdcaParams, rng: RngStream) -> Self {
        MacDevice {
            id,
            queue: TxQueue::new(discipline),
            backoff: BackoffState::new(&edca),
            in_flight: Vec::new(),
            rng,
            edca,
            attempts: 0,
            collisions: 0,
        }
    }

    pub fn edca(&self) -> &EdcaParams {
        &self.edca
    }

    pub fn is_transmitting(&self) -> bool {
        !self.in_flight.is_empty()
    }

    pub fn draw_backoff(&mut self) -> u32 {
        self.backoff.draw_backoff(&mut self.rng)
    }

    /// Stamps first-attempt times and holds `ampdus` until the attempt
    /// resolves.
    pub fn begin_attempt(&mut self, mut ampdus: Vec<Ampdu>, now: SimTime) {
        debug_assert!(self.in_flight.is_empty());
        for m in ampdus.iter_mut().flat_map(|a| a.mpdus.iter_mut()) {
            m.first_attempt_at.get_or_insert(now);
        }
        self.attempts += 1;
        self.in_flight = ampdus;
    }

    /// Hands the in-flight AMPDUs to the receiver side.
    pub fn take_in_flight(&mut self) -> Vec<Ampdu> {
        std::mem::take(&mut self.in_flight)
    }

    /// Resolves the pending contended attempt.
    ///
    /// On success the contention window resets. On collision every MPDU's
    /// retry counter grows; MPDUs beyond the retry limit are dropped, and
    /// under NoBuS an MPDU whose destination already holds a newer sample
    /// is discarded. Survivors return to the head of their queue.
    pub fn on_tx_end(&mut self, outcome: TxOutcome) -> TxEndReport {
        let mut report = TxEndReport::default();
        match outcome {
            TxOutcome::Success => {
                debug_assert!(self.in_flight.is_empty(), "deliver before on_tx_end");
                self.in_flight.clear();
                self.backoff.on_success(&self.edca);
            }
            TxOutcome::Collision => {
                self.collisions += 1;
                let mut survivors_any = false;
                let mut any = false;
                for ampdu in std::mem::take(&mut self.in_flight) {
                    let mut survivors = Vec::with_capacity(ampdu.mpdus.len());
                    for mut m in ampdu.mpdus {
                        any = true;
                        m.retry_count += 1;
                        if m.retry_count > self.edca.retry_limit {
                            report.retry_dropped.push(m);
                        } else {
                            survivors.push(m);
                        }
                    }
                    if survivors.is_empty() {
                        continue;
                    }
                    match self.queue.discipline() {
                        Discipline::Vanilla => {
                            survivors_any = true;
                            self.queue.requeue_front(ampdu.dst, survivors);
                        }
                        Discipline::Nobus => {
                            if self.queue.len_for(ampdu.dst) > 0 {
                                for m in survivors {
                                    self.queue.note_proactive_drop();
                                    report.proactive_dropped.push(m);
                                }
                            } else {
                                survivors_any = true;
                                self.queue.requeue_front(ampdu.dst, survivors);
                            }
                        }
                    }
                }
                if any && !survivors_any && !report.retry_dropped.is_empty() {
                    self.backoff.on_discard(&self.edca);
                } else {
                    self.backoff.on_collision(&self.edca);
                }
            }
        }
        debug_assert!(self.backoff.cw == self.edca.cw_min || self.backoff.cw == self.edca.cw_max);
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::TraceSample;

    fn mpdu(seq: u64) -> Mpdu {
        Mpdu {
            seq,
            src: DeviceId(1),
            dst: DeviceId::AP,
            generated_at: SimTime::from_millis(seq),
            enqueued_at: SimTime::from_millis(seq),
            payload_bytes: 2500,
            sample: TraceSample {
                tick: seq,
                position: [0.0; 3],
            },
            retry_count: 0,
            first_attempt_at: None,
        }
    }

    fn dev(d: Discipline) -> MacDevice {
        MacDevice::new(DeviceId(1), d, EdcaParams::default(), RngStream::new(5, 1))
    }

    fn attempt(d: &mut MacDevice, now: SimTime) {
        let a = d.queue.build_ampdu(DeviceId::AP, 100, None).unwrap();
        d.begin_attempt(vec![a], now);
    }

    #[test]
    fn collision_escalates_cw() {
        let mut d = dev(Discipline::Vanilla);
        d.queue.enqueue(mpdu(0));
        attempt(&mut d, SimTime::ZERO);
        let r = d.on_tx_end(TxOutcome::Collision);
        assert_eq!(d.backoff.cw, 7);
        assert!(r.retry_dropped.is_empty());
        assert_eq!(d.queue.peek(DeviceId::AP).unwrap().retry_count, 1);
        attempt(&mut d, SimTime::from_micros(100));
        d.take_in_flight();
        d.on_tx_end(TxOutcome::Success);
        assert_eq!(d.backoff.cw, 3);
    }

    #[test]
    fn retry_limit_drop() {
        let mut d = dev(Discipline::Vanilla);
        let mut m = mpdu(0);
        m.retry_count = 7;
        d.queue.enqueue(m);
        attempt(&mut d, SimTime::ZERO);
        let r = d.on_tx_end(TxOutcome::Collision);
        assert_eq!(r.retry_dropped.len(), 1);
        assert_eq!(r.retry_dropped[0].retry_count, 8);
        assert!(d.queue.is_empty());
        assert_eq!(d.backoff.cw, 3);
    }

    #[test]
    fn nobus_eight_attempts_then_drop() {
        let mut d = dev(Discipline::Nobus);
        d.queue.enqueue(mpdu(0));
        let mut attempts = 0;
        let mut t = SimTime::ZERO;
        loop {
            attempt(&mut d, t);
            attempts += 1;
            t += SimTime::from_micros(50);
            let r = d.on_tx_end(TxOutcome::Collision);
            if !r.retry_dropped.is_empty() {
                assert_eq!(r.retry_dropped[0].seq, 0);
                assert_eq!(r.retry_dropped[0].first_attempt_at, Some(SimTime::ZERO));
                break;
            }
            assert_eq!(d.backoff.cw, 7);
        }
        assert_eq!(attempts, 8);
        assert!(d.queue.is_empty());
    }

    #[test]
    fn nobus_collision_overtaken_by_new_sample() {
        let mut d = dev(Discipline::Nobus);
        d.queue.enqueue(mpdu(0));
        attempt(&mut d, SimTime::ZERO);
        // New sample arrives while the attempt is on the air.
        assert_eq!(d.queue.enqueue(mpdu(1)).replaced, None);
        let r = d.on_tx_end(TxOutcome::Collision);
        assert_eq!(r.proactive_dropped.len(), 1);
        assert_eq!(r.proactive_dropped[0].seq, 0);
        assert_eq!(d.queue.peek(DeviceId::AP).unwrap().seq, 1);
        assert_eq!(d.queue.total_len(), 1);
        assert_eq!(d.queue.proactive_drop_count(), 1);
    }
}
