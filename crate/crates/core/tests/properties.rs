//! Property tests over the model's invariants.

use proptest::prelude::*;
use tisim::kernel::Scheduler;
use tisim::mac::{BackoffState, Discipline, EdcaParams, Mpdu, TxQueue};
use tisim::metrics::{write_metrics_csv, write_sample_log};
use tisim::ofdma::{group_stas, SchedulerConfig, TxopPlan};
use tisim::phy::{max_ampdu_mpdus, ppdu_airtime, AirtimeBudget, McsParams, TonePlan};
use tisim::traffic::TraceSample;
use tisim::{run_simulation, DeviceId, RngStream, SimParams, SimTime};

const B: AirtimeBudget = AirtimeBudget::DEFAULT;
const M: McsParams = McsParams::MCS9;

fn tones() -> impl Strategy<Value = u64> {
    prop::sample::select(vec![980u64, 1960, 3920])
}

fn mpdu(seq: u64, dst: u16) -> Mpdu {
    Mpdu {
        seq,
        src: DeviceId::AP,
        dst: DeviceId(dst),
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

proptest! {
    #[test]
    fn airtime_monotone_in_bytes(a in 0u64..200_000, extra in 0u64..50_000, t in tones()) {
        let x = ppdu_airtime(a, t, &B, &M).duration();
        let y = ppdu_airtime(a + extra, t, &B, &M).duration();
        prop_assert!(x <= y);
    }

    #[test]
    fn wider_ru_is_never_slower(a in 0u64..200_000) {
        let q = ppdu_airtime(a, 980, &B, &M).duration();
        let h = ppdu_airtime(a, 1960, &B, &M).duration();
        let f = ppdu_airtime(a, 3920, &B, &M).duration();
        prop_assert!(f <= h && h <= q);
    }

    #[test]
    fn ampdu_cap_is_tight(size in 45u64..12_000, t in tones()) {
        let k = max_ampdu_mpdus(size, t, &B, &M);
        prop_assert!(k >= 1);
        prop_assert!(ppdu_airtime(k * size, t, &B, &M).fits().is_some());
        prop_assert!(ppdu_airtime((k + 1) * size, t, &B, &M).fits().is_none());
    }

    #[test]
    fn nobus_queue_depth_at_most_one(ops in prop::collection::vec((0u8..3, 1u16..5), 1..200)) {
        let mut q = TxQueue::new(Discipline::Nobus);
        let mut seq = 0;
        let mut enqueued = 0u64;
        for (op, dst) in ops {
            match op {
                0 | 1 => {
                    q.enqueue(mpdu(seq, dst));
                    seq += 1;
                    enqueued += 1;
                }
                _ => {
                    if let Some(a) = q.build_ampdu(DeviceId(dst), 100, None) {
                        prop_assert_eq!(a.len(), 1);
                        enqueued -= 1;
                    }
                }
            }
            prop_assert!(q.max_depth() <= 1);
        }
        prop_assert_eq!(enqueued, q.total_len() as u64 + q.proactive_drop_count());
    }

    #[test]
    fn vanilla_ampdu_preserves_fifo(n in 1usize..40, cap in 1usize..50) {
        let mut q = TxQueue::new(Discipline::Vanilla);
        for s in 0..n as u64 {
            q.enqueue(mpdu(s, 1));
        }
        let mut next = 0;
        while let Some(a) = q.build_ampdu(DeviceId(1), cap, None) {
            prop_assert!(a.len() <= cap);
            for m in &a.mpdus {
                prop_assert_eq!(m.seq, next);
                next += 1;
            }
        }
        prop_assert_eq!(next as usize, n);
    }

    #[test]
    fn cw_stays_in_two_values(events in prop::collection::vec(any::<bool>(), 1..100), seed in any::<u64>()) {
        let p = EdcaParams::default();
        let mut b = BackoffState::new(&p);
        let mut rng = RngStream::new(seed, 0);
        for success in events {
            let c = b.draw_backoff(&mut rng);
            prop_assert!(c <= b.cw);
            if success { b.on_success(&p) } else { b.on_collision(&p) }
            prop_assert!(b.cw == 3 || b.cw == 7);
        }
    }

    #[test]
    fn grouping_is_highest_first_partition(occ in prop::collection::vec(0usize..20, 1..13)) {
        let input: Vec<(DeviceId, usize)> =
            occ.iter().enumerate().map(|(i, &o)| (DeviceId(i as u16 + 1), o)).collect();
        let cfg = SchedulerConfig::default();
        let groups = group_stas(&input, &TonePlan::BW320, &cfg);
        let active = occ.iter().filter(|&&o| o > 0).count();
        let flat: Vec<usize> = groups.iter().flat_map(|g| g.occupancies.clone()).collect();
        prop_assert_eq!(flat.len(), active);
        prop_assert!(flat.windows(2).all(|w| w[0] >= w[1]));
        let size = if active < 4 { 2 } else { 4 };
        for (i, g) in groups.iter().enumerate() {
            prop_assert!(!g.members.is_empty() && g.members.len() <= 4);
            if i + 1 < groups.len() {
                prop_assert_eq!(g.members.len(), size);
            }
            prop_assert_eq!(g.ru.ru_count, g.members.len());
        }
    }

    #[test]
    fn txop_plan_runs_dl_before_ul(dl in prop::collection::vec(0usize..9, 1..13), ul in prop::collection::vec(0usize..9, 1..13)) {
        let mk = |v: &[usize]| v.iter().enumerate().map(|(i, &o)| (DeviceId(i as u16 + 1), o)).collect::<Vec<_>>();
        let plan = TxopPlan::build(&mk(&dl), &mk(&ul), SimTime::ZERO, &TonePlan::BW320, &SchedulerConfig::default());
        let kinds: Vec<bool> = plan.phases().map(|p| matches!(p, tisim::ofdma::Phase::Dl(_))).collect();
        prop_assert!(kinds.windows(2).all(|w| w[0] || !w[1]));
    }

    #[test]
    fn scheduler_fires_in_time_then_insertion_order(times in prop::collection::vec(0u64..50, 1..100)) {
        let mut s: Scheduler<usize> = Scheduler::new();
        for (i, &t) in times.iter().enumerate() {
            s.schedule(SimTime::from_nanos(t), i);
        }
        let mut fired = Vec::new();
        s.run_until(SimTime::from_nanos(100), |_, ev| fired.push((ev.fire_at, ev.payload)));
        prop_assert_eq!(fired.len(), times.len());
        prop_assert!(fired.windows(2).all(|w| w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Whole-run invariants on short random runs, plus byte-identical reruns.
    #[test]
    fn short_runs_are_clean_and_deterministic(n in 1usize..=12, nobus in any::<bool>(), seed in any::<u64>()) {
        let d = if nobus { Discipline::Nobus } else { Discipline::Vanilla };
        let p = SimParams::new(n, d, seed).with_duration(SimTime::from_millis(300));
        let a = run_simulation(&p).unwrap();
        prop_assert!(a.violations.is_clean(), "{:?}", a.violations);
        let m = &a.metrics;
        prop_assert_eq!(m.generated, m.delivered + m.retry_drops + m.proactive_drops + m.residual);
        if d == Discipline::Nobus {
            prop_assert!(m.worst_queueing_ms <= 1.0);
            prop_assert_eq!(m.mean_ampdu_dl.max(m.mean_ampdu_ul), 1.0);
        } else {
            prop_assert_eq!(m.proactive_drops, 0);
        }
        let b = run_simulation(&p).unwrap();
        let bytes = |o: &tisim::RunOutput| {
            let mut v = Vec::new();
            write_metrics_csv(std::slice::from_ref(&o.metrics), &mut v).unwrap();
            write_sample_log(&o.log, &mut v).unwrap();
            v
        };
        prop_assert_eq!(bytes(&a), bytes(&b));
    }
}

/// Paired comparisons on identical traces over ten seeds.
#[test]
fn nobus_trades_delivery_for_fidelity() {
    for n in [1usize, 6, 12] {
        let (mut rv, mut rn) = (0.0, 0.0);
        for seed in 1..=10 {
            let run = |d| {
                run_simulation(&SimParams::new(n, d, seed).with_duration(SimTime::from_secs(2)))
                    .unwrap()
                    .metrics
            };
            let (v, b) = (run(Discipline::Vanilla), run(Discipline::Nobus));
            assert!(
                v.delivered_fraction >= b.delivered_fraction,
                "n={n} seed={seed}: vanilla {} < nobus {}",
                v.delivered_fraction,
                b.delivered_fraction
            );
            rv += v.rmse_cm;
            rn += b.rmse_cm;
        }
        if n >= 5 {
            assert!(rn <= rv, "n={n}: mean RMSE nobus {rn} > vanilla {rv}");
        }
    }
}
