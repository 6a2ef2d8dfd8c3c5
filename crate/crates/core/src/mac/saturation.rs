//! Saturated-contention harness: `n` always-backlogged devices sending
//! fixed-length single-MPDU PPDUs through the same backoff, arbitration and
//! retry code used by the BSS simulator. Used to validate the collision
//! behavior against an analytical model of the backoff chain.

use super::{medium_arbitrate, Contention, EdcaParams, MacDevice, Mpdu, TxOutcome};
use crate::kernel::{RngStream, Scheduler, SimTime};
use crate::mac::Discipline;
use crate::traffic::TraceSample;
use crate::DeviceId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationStats {
    pub attempts: u64,
    pub collided_attempts: u64,
    pub successes: u64,
    pub retry_drops: u64,
}

impl SaturationStats {
    /// Fraction of transmission attempts that overlapped another one.
    pub fn collision_probability(&self) -> f64 {
        self.collided_attempts as f64 / self.attempts as f64
    }
}

enum Ev {
    Attempt,
    End(Vec<DeviceId>, TxOutcome),
}

/// Runs `n` saturated contenders for `duration`.
pub fn run_saturated(
    n: usize,
    edca: EdcaParams,
    ppdu: SimTime,
    success_tail: SimTime,
    seed: u64,
    duration: SimTime,
) -> SaturationStats {
    let mut devices: Vec<MacDevice> = (0..n)
        .map(|i| {
            MacDevice::new(
                DeviceId(i as u16),
                Discipline::Vanilla,
                edca,
                RngStream::new(seed, i as u64),
            )
        })
        .collect();
    let mut next_seq = vec![0u64; n];
    let refill = |d: &mut MacDevice, seq: &mut u64| {
        while d.queue.total_len() < 2 {
            d.queue.enqueue(Mpdu {
                seq: *seq,
                src: d.id,
                dst: DeviceId(u16::MAX),
                generated_at: SimTime::ZERO,
                enqueued_at: SimTime::ZERO,
                payload_bytes: 1,
                sample: TraceSample {
                    tick: *seq,
                    position: [0.0; 3],
                },
                retry_count: 0,
                first_attempt_at: None,
            });
            *seq += 1;
        }
    };
    let mut contention = Contention::new(edca);
    let mut sched: Scheduler<Ev> = Scheduler::new();
    let mut stats = SaturationStats {
        attempts: 0,
        collided_attempts: 0,
        successes: 0,
        retry_drops: 0,
    };

    let arm = |sched: &mut Scheduler<Ev>, devices: &mut [MacDevice], c: &Contention| {
        for d in devices.iter_mut() {
            d.draw_backoff();
        }
        let t = c
            .next_attempt(devices.iter().map(|d| &d.backoff))
            .expect("saturated devices always contend");
        sched.schedule(t, Ev::Attempt);
    };

    for (d, s) in devices.iter_mut().zip(next_seq.iter_mut()) {
        refill(d, s);
    }
    arm(&mut sched, &mut devices, &contention);

    sched.run_until(duration, |sched, ev| {
        let now = ev.fire_at;
        match ev.payload {
            Ev::Attempt => {
                let slot = contention.slot_at(now).expect("attempt on slot grid");
                let tx: Vec<DeviceId> = devices
                    .iter()
                    .filter(|d| d.backoff.tx_slot() == Some(slot))
                    .map(|d| d.id)
                    .collect();
                contention.set_busy(now, devices.iter_mut().map(|d| &mut d.backoff));
                for &id in &tx {
                    let d = &mut devices[id.index()];
                    let a = d.queue.build_ampdu(DeviceId(u16::MAX), 1, None).unwrap();
                    d.begin_attempt(vec![a], now);
                }
                let outcome = medium_arbitrate(&tx)[0].1;
                stats.attempts += tx.len() as u64;
                let busy = match outcome {
                    TxOutcome::Success => ppdu + success_tail,
                    TxOutcome::Collision => {
                        stats.collided_attempts += tx.len() as u64;
                        ppdu
                    }
                };
                sched.schedule(now + busy, Ev::End(tx, outcome));
            }
            Ev::End(tx, outcome) => {
                for id in tx {
                    let d = &mut devices[id.index()];
                    if outcome == TxOutcome::Success {
                        d.take_in_flight();
                        stats.successes += 1;
                    }
                    let r = d.on_tx_end(outcome);
                    stats.retry_drops += r.retry_dropped.len() as u64;
                    refill(d, &mut next_seq[id.index()]);
                }
                contention.set_idle(now);
                arm(sched, &mut devices, &contention);
            }
        }
    });
    stats
}
