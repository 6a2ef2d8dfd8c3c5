//! One BSS run: an AP (device 0) and `n` teleoperator STAs, each with a DL
//! and a UL 1 kHz flow.
//!
//! Every device is an AC_VO EDCA contender. A STA that wins sends a
//! single-user AMPDU to the AP over the full band. The AP, when it wins,
//! runs one TXOP: DL-OFDMA exchanges for every STA it holds data for, then
//! one round of trigger-based UL-OFDMA exchanges for every STA whose last
//! buffer status report was non-zero. Only the first frame of a contended
//! access can collide.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{EventHandle, RngStream, Scheduler, SimTime};
use crate::mac::{
    ampdu_cap, medium_arbitrate, Ampdu, Contention, Discipline, EdcaParams, MacDevice, Mpdu,
    TxOutcome, MPDU_OVERHEAD_BYTES,
};
use crate::metrics::{summarize, AmpduTally, FlowLog, RunLog, RunMetrics, SampleOutcome, SampleRecord};
use crate::ofdma::{
    ofdma_ppdu_duration, run_ap_txop, BsrTable, ExchangeTiming, Phase, SchedulerConfig,
    SnapshotPolicy, TxopPlan,
};
use crate::phy::PhyConfig;
use crate::playback::{Display, ReceptionEffect};
use crate::traffic::{generate_trace, load_trace_csv, message_at_tick, SensorTrace, TrafficConfig};
use crate::{DeviceId, FlowId};

/// Stream ids above this are reserved for trace generation.
const TRACE_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub n_stas: usize,
    pub discipline: Discipline,
    pub seed: u64,
    pub duration: SimTime,
    pub warmup: SimTime,
    pub phy: PhyConfig,
    pub edca: EdcaParams,
    pub scheduler: SchedulerConfig,
    pub traffic: TrafficConfig,
}

impl SimParams {
    pub fn new(n_stas: usize, discipline: Discipline, seed: u64) -> Self {
        SimParams {
            n_stas,
            discipline,
            seed,
            duration: SimTime::from_secs(10),
            warmup: SimTime::from_millis(100),
            phy: PhyConfig::default(),
            edca: EdcaParams::default(),
            scheduler: SchedulerConfig::default(),
            traffic: TrafficConfig::default(),
        }
    }

    pub fn with_duration(mut self, d: SimTime) -> Self {
        self.duration = d;
        self
    }

    /// Samples generated per flow.
    pub fn ticks(&self) -> u64 {
        self.duration.as_nanos() / self.traffic.sample_period().as_nanos()
    }

    pub fn flow_count(&self) -> usize {
        2 * self.n_stas
    }

    fn run_error(&self, msg: impl Into<String>) -> Error {
        Error::Run {
            discipline: self.discipline.to_string(),
            stas: self.n_stas,
            seed: self.seed,
            msg: msg.into(),
        }
    }
}

/// Per-flow trace seed; identical across disciplines so runs are paired.
pub fn trace_seed(seed: u64, flow_index: usize) -> u64 {
    let mut r = RngStream::new(seed, TRACE_STREAM_BASE + flow_index as u64);
    r.uniform_int(0, i64::MAX) as u64
}

/// Builds the source trace of every flow for `p`.
pub fn build_traces(p: &SimParams) -> Result<Vec<Arc<SensorTrace>>> {
    let ticks = p.ticks();
    if let Some(path) = &p.traffic.trace_csv {
        let t = load_trace_csv(path)?;
        if t.duration_ticks() < ticks {
            return Err(Error::Trace {
                path: path.clone(),
                msg: format!("{} samples, run needs {ticks}", t.duration_ticks()),
            });
        }
        let t = Arc::new(t);
        return Ok(vec![t; p.flow_count()]);
    }
    Ok((0..p.flow_count())
        .map(|i| Arc::new(generate_trace(trace_seed(p.seed, i), ticks, &p.traffic.motion)))
        .collect())
}

/// Counts of invariant violations observed during a run. A correct run has
/// all zeros.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Violations {
    pub nobus_depth: u64,
    pub nobus_freshness: u64,
    pub nobus_queueing: u64,
    pub conservation: u64,
    pub in_order: u64,
    pub cw_range: u64,
    pub ppdu_cap: u64,
    pub txop_accounting: u64,
    pub playback: u64,
    #[serde(skip)]
    pub first: Option<String>,
}

impl Violations {
    pub fn total(&self) -> u64 {
        self.nobus_depth
            + self.nobus_freshness
            + self.nobus_queueing
            + self.conservation
            + self.in_order
            + self.cw_range
            + self.ppdu_cap
            + self.txop_accounting
            + self.playback
    }

    pub fn is_clean(&self) -> bool {
        self.total() == 0
    }

    fn note(&mut self, msg: impl FnOnce() -> String) {
        if self.first.is_none() {
            self.first = Some(msg());
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub log: RunLog,
    pub violations: Violations,
    pub events_fired: u64,
}

#[derive(Debug)]
enum Ev {
    Generate { flow: usize, tick: u64 },
    Display { flow: usize, tick: u64 },
    Attempt,
    PpduEnd { ampdus: Vec<Ampdu>, bsr: Vec<(DeviceId, usize)> },
    AttemptEnd { devices: Vec<DeviceId>, outcome: TxOutcome },
    TxopPhase { index: usize },
    UlPpduStart { index: usize },
    TxopEnd,
}

struct ActiveTxop {
    plan: TxopPlan,
    start: SimTime,
    payloads: Vec<Vec<u64>>,
}

struct FlowState {
    flow: FlowId,
    trace: Arc<SensorTrace>,
    display: Display,
    records: Vec<SampleRecord>,
    displayed: Vec<crate::traffic::Position>,
    latest_generated: Option<u64>,
    last_delivered: Option<u64>,
    last_shown: Option<u64>,
    in_air: u64,
}

struct Bss<'a> {
    p: &'a SimParams,
    ticks: u64,
    devices: Vec<MacDevice>,
    contending: Vec<bool>,
    contention: Contention,
    attempt_event: Option<(EventHandle, SimTime)>,
    bsr: BsrTable,
    pending_bsr: Vec<usize>,
    txop: Option<ActiveTxop>,
    flows: Vec<FlowState>,
    ampdu_dl: AmpduTally,
    ampdu_ul: AmpduTally,
    attempts: u64,
    collided_attempts: u64,
    ap_txops: u64,
    medium_busy: SimTime,
    v: Violations,
}

/// Runs one simulation with synthetic (or configured CSV) traces.
pub fn run_simulation(p: &SimParams) -> Result<RunOutput> {
    let traces = build_traces(p)?;
    run_simulation_with_traces(p, traces)
}

/// Runs one simulation on caller-provided per-flow traces (DL flows first,
/// then UL flows, each ordered by STA).
pub fn run_simulation_with_traces(
    p: &SimParams,
    traces: Vec<Arc<SensorTrace>>,
) -> Result<RunOutput> {
    if p.n_stas == 0 || p.n_stas >= u16::MAX as usize {
        return Err(p.run_error("STA count out of range"));
    }
    if traces.len() != p.flow_count() {
        return Err(p.run_error("one trace per flow required"));
    }
    let ticks = p.ticks();
    if ticks == 0 || p.warmup >= p.duration {
        return Err(p.run_error("run must be longer than the warmup"));
    }
    if traces.iter().any(|t| t.duration_ticks() < ticks) {
        return Err(p.run_error("trace shorter than the run"));
    }
    let on_air = p.traffic.payload_bytes() + MPDU_OVERHEAD_BYTES;
    if ampdu_cap(on_air, p.phy.tones.data_tones_quarter, &p.phy.budget, &p.phy.mcs) == 0 {
        return Err(p.run_error("a single MPDU does not fit one PPDU on the smallest RU"));
    }

    let n_dev = p.n_stas + 1;
    let devices = (0..n_dev)
        .map(|i| {
            MacDevice::new(
                DeviceId(i as u16),
                p.discipline,
                p.edca,
                RngStream::new(p.seed, i as u64),
            )
        })
        .collect();
    let flows = traces
        .into_iter()
        .enumerate()
        .map(|(i, trace)| FlowState {
            flow: FlowId::from_index(i, p.n_stas),
            trace,
            display: Display::for_discipline(p.discipline),
            records: Vec::with_capacity(ticks as usize),
            displayed: Vec::with_capacity(ticks as usize),
            latest_generated: None,
            last_delivered: None,
            last_shown: None,
            in_air: 0,
        })
        .collect();
    let mut bss = Bss {
        p,
        ticks,
        devices,
        contending: vec![false; n_dev],
        contention: Contention::new(p.edca),
        attempt_event: None,
        bsr: BsrTable::new(),
        pending_bsr: vec![0; n_dev],
        txop: None,
        flows,
        ampdu_dl: AmpduTally::default(),
        ampdu_ul: AmpduTally::default(),
        attempts: 0,
        collided_attempts: 0,
        ap_txops: 0,
        medium_busy: SimTime::ZERO,
        v: Violations::default(),
    };

    let mut sched: Scheduler<Ev> = Scheduler::new();
    for i in 0..p.flow_count() {
        let at = p.traffic.enqueue_time(bss.flows[i].flow, 0);
        sched.schedule(at, Ev::Generate { flow: i, tick: 0 });
        sched.schedule(at, Ev::Display { flow: i, tick: 0 });
    }
    bss.rearm(&mut sched);

    let summary = sched.run_until(p.duration, |s, ev| bss.handle(s, ev.fire_at, ev.payload));
    bss.finish(summary.events_fired)
}

impl Bss<'_> {
    fn flow_index(&self, src: DeviceId, dst: DeviceId) -> usize {
        let flow = if src.is_ap() {
            FlowId::dl(dst)
        } else {
            FlowId::ul(src)
        };
        flow.index(self.p.n_stas)
    }

    fn on_air_bytes(&self) -> u64 {
        self.p.traffic.payload_bytes() + MPDU_OVERHEAD_BYTES
    }

    fn cap_for(&self, tones: u64) -> usize {
        ampdu_cap(self.on_air_bytes(), tones, &self.p.phy.budget, &self.p.phy.mcs)
    }

    fn wants_access(&self, i: usize) -> bool {
        let d = &self.devices[i];
        if d.is_transmitting() {
            return false;
        }
        if i == 0 {
            !d.queue.is_empty()
                || (1..=self.p.n_stas).any(|s| self.bsr.occupancy(DeviceId(s as u16)) > 0)
        } else {
            !d.queue.is_empty()
        }
    }

    /// Updates the contender set and (re)schedules the next attempt.
    fn rearm(&mut self, sched: &mut Scheduler<Ev>) {
        if !self.contention.is_idle() || self.txop.is_some() {
            return;
        }
        let now = sched.now();
        for i in 0..self.devices.len() {
            let wants = self.wants_access(i);
            if wants && !self.contending[i] {
                self.devices[i].draw_backoff();
                self.contention.join(now, &mut self.devices[i].backoff);
                self.contending[i] = true;
            } else if !wants && self.contending[i] {
                self.contending[i] = false;
            }
        }
        let next = self.contention.next_attempt(
            self.devices
                .iter()
                .zip(&self.contending)
                .filter(|(_, &c)| c)
                .map(|(d, _)| &d.backoff),
        );
        let current = self.attempt_event.map(|(_, t)| t);
        if next != current {
            if let Some((h, _)) = self.attempt_event.take() {
                sched.cancel(h);
            }
            if let Some(t) = next {
                self.attempt_event = Some((sched.schedule(t, Ev::Attempt), t));
            }
        }
    }

    fn handle(&mut self, sched: &mut Scheduler<Ev>, now: SimTime, ev: Ev) {
        match ev {
            Ev::Generate { flow, tick } => self.on_generate(sched, now, flow, tick),
            Ev::Display { flow, tick } => self.on_display(sched, now, flow, tick),
            Ev::Attempt => self.on_attempt(sched, now),
            Ev::PpduEnd { ampdus, bsr } => self.on_ppdu_end(now, ampdus, bsr),
            Ev::AttemptEnd { devices, outcome } => self.on_attempt_end(sched, now, devices, outcome),
            Ev::TxopPhase { index } => self.on_txop_phase(sched, now, index),
            Ev::UlPpduStart { index } => self.on_ul_ppdu_start(sched, now, index),
            Ev::TxopEnd => self.on_txop_end(sched, now),
        }
    }

    fn on_generate(&mut self, sched: &mut Scheduler<Ev>, now: SimTime, fi: usize, tick: u64) {
        let f = &mut self.flows[fi];
        let mpdu = message_at_tick(f.flow, tick, &f.trace, &self.p.traffic);
        debug_assert_eq!(mpdu.enqueued_at, now);
        debug_assert_eq!(f.records.len() as u64, tick);
        f.latest_generated = Some(tick);
        f.records.push(SampleRecord {
            seq: tick,
            generated_at: mpdu.generated_at,
            enqueued_at: mpdu.enqueued_at,
            first_attempt_at: None,
            received_at: None,
            displayed_at: None,
            outcome: SampleOutcome::Pending,
        });
        let src = mpdu.src.index();
        let report = self.devices[src].queue.enqueue(mpdu);
        if let Some(old) = report.replaced {
            self.drop_sample(&old, SampleOutcome::ProactiveDrop);
        }
        if self.p.discipline == Discipline::Nobus && self.devices[src].queue.max_depth() > 1 {
            self.v.nobus_depth += 1;
            self.v.note(|| format!("NoBuS depth > 1 at device {src}"));
        }
        let f = &self.flows[fi];
        if tick + 1 < self.ticks {
            let at = self.p.traffic.enqueue_time(f.flow, tick + 1);
            sched.schedule(at, Ev::Generate { flow: fi, tick: tick + 1 });
        }
        self.rearm(sched);
    }

    fn on_display(&mut self, sched: &mut Scheduler<Ev>, now: SimTime, fi: usize, tick: u64) {
        let f = &mut self.flows[fi];
        let (value, popped) = f.display.display_tick();
        debug_assert_eq!(f.displayed.len() as u64, tick);
        f.displayed.push(value);
        if let Some(seq) = popped {
            let r = &mut f.records[seq as usize];
            r.displayed_at = Some(now);
            if r.received_at.is_none_or(|rx| rx > now) {
                self.v.playback += 1;
                self.v.note(|| format!("sample {seq} displayed before reception"));
            }
        }
        let shown = f.display.shown_seq();
        if shown < f.last_shown {
            self.v.playback += 1;
            self.v.note(|| "displayed sequence went backwards".into());
        }
        f.last_shown = shown;
        if tick + 1 < self.ticks {
            let at = self.p.traffic.enqueue_time(f.flow, tick + 1);
            sched.schedule(at, Ev::Display { flow: fi, tick: tick + 1 });
        }
    }

    fn drop_sample(&mut self, m: &Mpdu, outcome: SampleOutcome) {
        let fi = self.flow_index(m.src, m.dst);
        let r = &mut self.flows[fi].records[m.seq as usize];
        if r.outcome != SampleOutcome::Pending {
            self.v.conservation += 1;
            self.v.note(|| format!("sample {} of flow {fi} resolved twice", m.seq));
        }
        r.outcome = outcome;
        r.first_attempt_at = m.first_attempt_at;
    }

    /// Checks every MPDU about to go on the air.
    fn check_frame(&mut self, ampdus: &[Ampdu], now: SimTime, duration: SimTime) {
        if duration > self.p.phy.budget.max_ppdu_duration {
            self.v.ppdu_cap += 1;
            self.v.note(|| format!("PPDU of {duration} exceeds the cap"));
        }
        if self.p.discipline != Discipline::Nobus {
            return;
        }
        let period = self.p.traffic.sample_period();
        for m in ampdus.iter().flat_map(|a| &a.mpdus) {
            let fi = self.flow_index(m.src, m.dst);
            if self.flows[fi].latest_generated != Some(m.seq) {
                self.v.nobus_freshness += 1;
                self.v.note(|| format!("stale NoBuS MPDU {} on flow {fi} at {now}", m.seq));
            }
            let first = m.first_attempt_at.unwrap_or(now);
            if first - m.enqueued_at > period {
                self.v.nobus_queueing += 1;
                self.v.note(|| format!("NoBuS MPDU {} waited {} before its first attempt", m.seq, first - m.enqueued_at));
            }
        }
        for a in ampdus {
            if a.len() != 1 {
                self.v.nobus_depth += 1;
                self.v.note(|| "NoBuS AMPDU with more than one MPDU".into());
            }
        }
    }

    fn stamp(ampdus: &mut [Ampdu], now: SimTime) {
        for m in ampdus.iter_mut().flat_map(|a| a.mpdus.iter_mut()) {
            m.first_attempt_at.get_or_insert(now);
        }
    }

    fn dl_cutoff(&self, plan: &TxopPlan) -> Option<SimTime> {
        match (self.p.discipline, self.p.scheduler.snapshot) {
            (Discipline::Vanilla, SnapshotPolicy::Txop) => Some(plan.snapshot_at),
            _ => None,
        }
    }

    /// Pulls the AMPDUs of one DL group from the AP queue, returning them
    /// with the per-member payload sizes.
    fn take_dl_group(&mut self, index: usize, now: SimTime) -> (Vec<Ampdu>, Vec<u64>, u64) {
        let txop = self.txop.as_ref().expect("active TXOP");
        let cutoff = self.dl_cutoff(&txop.plan);
        let Some(Phase::Dl(group)) = txop.plan.phase(index) else {
            unreachable!("phase {index} is not DL");
        };
        let group = group.clone();
        let cap = self.cap_for(group.ru.tones_per_ru);
        let mut ampdus = Vec::with_capacity(group.members.len());
        let mut payloads = Vec::with_capacity(group.members.len());
        for &sta in &group.members {
            match self.devices[0].queue.build_ampdu(sta, cap, cutoff) {
                Some(a) => {
                    payloads.push(a.payload_bytes());
                    ampdus.push(a);
                }
                None => payloads.push(0),
            }
        }
        Self::stamp(&mut ampdus, now);
        (ampdus, payloads, group.ru.tones_per_ru)
    }

    fn on_attempt(&mut self, sched: &mut Scheduler<Ev>, now: SimTime) {
        self.attempt_event = None;
        let slot = self
            .contention
            .slot_at(now)
            .expect("attempts start on the slot grid");
        let tx: Vec<DeviceId> = (0..self.devices.len())
            .filter(|&i| self.contending[i] && self.devices[i].backoff.tx_slot() == Some(slot))
            .map(|i| DeviceId(i as u16))
            .collect();
        debug_assert!(!tx.is_empty());
        let contending = &self.contending;
        self.contention.set_busy(
            now,
            self.devices
                .iter_mut()
                .zip(contending)
                .filter(|(_, &c)| c)
                .map(|(d, _)| &mut d.backoff),
        );
        for id in &tx {
            self.contending[id.index()] = false;
        }

        let durations: Vec<SimTime> = tx.iter().map(|&id| self.begin_frame(id, now)).collect();
        let outcome = medium_arbitrate(&tx)[0].1;
        self.attempts += tx.len() as u64;

        match outcome {
            TxOutcome::Collision => {
                self.collided_attempts += tx.len() as u64;
                let busy = durations.iter().copied().max().unwrap_or(SimTime::ZERO);
                self.medium_busy += busy;
                self.txop = None;
                sched.schedule(now + busy, Ev::AttemptEnd { devices: tx, outcome });
            }
            TxOutcome::Success => {
                let id = tx[0];
                if id.is_ap() {
                    self.ap_txops += 1;
                    self.start_txop_phase(sched, now, 0);
                } else {
                    let ampdus = self.devices[id.index()].take_in_flight();
                    for a in &ampdus {
                        self.ampdu_ul.add(a.len());
                        self.flow_in_air(a, 1);
                    }
                    let budget = self.p.phy.budget;
                    let end = now + durations[0] + budget.sifs + budget.back_duration;
                    self.medium_busy += end - now;
                    let bsr = vec![(id, self.pending_bsr[id.index()])];
                    sched.schedule(now + durations[0], Ev::PpduEnd { ampdus, bsr });
                    sched.schedule(end, Ev::AttemptEnd { devices: tx, outcome });
                }
            }
        }
    }

    /// Builds the first frame of `id`'s access and returns its duration.
    fn begin_frame(&mut self, id: DeviceId, now: SimTime) -> SimTime {
        let phy = self.p.phy;
        if id.is_ap() {
            let dl: Vec<(DeviceId, usize)> = self.devices[0].queue.occupancies().collect();
            let ul: Vec<(DeviceId, usize)> = (1..=self.p.n_stas)
                .map(|s| {
                    let sta = DeviceId(s as u16);
                    (sta, self.bsr.occupancy(sta))
                })
                .collect();
            let plan = TxopPlan::build(&dl, &ul, now, &phy.tones, &self.p.scheduler);
            assert!(!plan.is_empty(), "AP contended with nothing to schedule");
            let first_is_dl = !plan.dl_groups.is_empty();
            self.txop = Some(ActiveTxop {
                plan,
                start: now,
                payloads: Vec::new(),
            });
            if first_is_dl {
                let (ampdus, payloads, tones) = self.take_dl_group(0, now);
                let dur = ofdma_ppdu_duration(&payloads, tones, &phy.budget, &phy.mcs);
                self.check_frame(&ampdus, now, dur);
                self.devices[0].begin_attempt(ampdus, now);
                self.txop.as_mut().unwrap().payloads.push(payloads);
                dur
            } else {
                self.devices[0].begin_attempt(Vec::new(), now);
                phy.budget.trigger_duration
            }
        } else {
            let cap = self.cap_for(phy.tones.data_tones_full);
            let dev = &mut self.devices[id.index()];
            let ampdu = dev
                .queue
                .build_ampdu(DeviceId::AP, cap, None)
                .expect("contending STA has data");
            self.pending_bsr[id.index()] = ampdu.len() + dev.queue.len_for(DeviceId::AP);
            let dur = phy
                .airtime(ampdu.payload_bytes(), phy.tones.data_tones_full)
                .duration();
            let mut ampdus = vec![ampdu];
            Self::stamp(&mut ampdus, now);
            self.check_frame(&ampdus, now, dur);
            self.devices[id.index()].begin_attempt(ampdus, now);
            dur
        }
    }

    fn flow_in_air(&mut self, a: &Ampdu, delta: i64) {
        for m in &a.mpdus {
            let fi = self.flow_index(m.src, m.dst);
            let f = &mut self.flows[fi];
            f.in_air = (f.in_air as i64 + delta) as u64;
        }
    }

    /// Runs exchange `index` of the AP's TXOP starting at `now`.
    fn start_txop_phase(&mut self, sched: &mut Scheduler<Ev>, now: SimTime, index: usize) {
        let phy = self.p.phy;
        let txop = self.txop.as_ref().expect("active TXOP");
        match txop.plan.phase(index).expect("phase in range") {
            Phase::Dl(group) => {
                let tones = group.ru.tones_per_ru;
                let (ampdus, payloads) = if index == 0 {
                    // Content was pulled when the access began.
                    let payloads = txop.payloads[0].clone();
                    (self.devices[0].take_in_flight(), payloads)
                } else {
                    let (a, p, _) = self.take_dl_group(index, now);
                    (a, p)
                };
                let dur = ofdma_ppdu_duration(&payloads, tones, &phy.budget, &phy.mcs);
                if index > 0 {
                    self.check_frame(&ampdus, now, dur);
                    self.txop.as_mut().unwrap().payloads.push(payloads);
                }
                for a in &ampdus {
                    self.ampdu_dl.add(a.len());
                    self.flow_in_air(a, 1);
                }
                let timing = ExchangeTiming::dl(now, dur, &phy.budget);
                sched.schedule(timing.ppdu_end, Ev::PpduEnd { ampdus, bsr: Vec::new() });
                self.schedule_after_exchange(sched, index, timing.end);
            }
            Phase::Ul(_) => {
                let at = now + phy.budget.trigger_duration + phy.budget.sifs;
                sched.schedule(at, Ev::UlPpduStart { index });
            }
        }
    }

    fn schedule_after_exchange(&mut self, sched: &mut Scheduler<Ev>, index: usize, end: SimTime) {
        let txop = self.txop.as_ref().expect("active TXOP");
        if index + 1 < txop.plan.phase_count() {
            sched.schedule(end + self.p.phy.budget.sifs, Ev::TxopPhase { index: index + 1 });
        } else {
            sched.schedule(end, Ev::TxopEnd);
        }
    }

    fn on_txop_phase(&mut self, sched: &mut Scheduler<Ev>, now: SimTime, index: usize) {
        self.start_txop_phase(sched, now, index);
    }

    fn on_ul_ppdu_start(&mut self, sched: &mut Scheduler<Ev>, now: SimTime, index: usize) {
        let phy = self.p.phy;
        let txop = self.txop.as_ref().expect("active TXOP");
        let Some(Phase::Ul(group)) = txop.plan.phase(index) else {
            unreachable!("phase {index} is not UL");
        };
        let group = group.clone();
        let cap = self.cap_for(group.ru.tones_per_ru);
        let mut ampdus = Vec::new();
        let mut payloads = Vec::new();
        let mut bsr = Vec::new();
        for &sta in &group.members {
            let q = &mut self.devices[sta.index()].queue;
            match q.build_ampdu(DeviceId::AP, cap, None) {
                Some(a) => {
                    bsr.push((sta, a.len() + q.len_for(DeviceId::AP)));
                    payloads.push(a.payload_bytes());
                    ampdus.push(a);
                }
                None => {
                    // QoS Null: reports an empty queue.
                    bsr.push((sta, 0));
                    payloads.push(0);
                }
            }
        }
        Self::stamp(&mut ampdus, now);
        let dur = ofdma_ppdu_duration(&payloads, group.ru.tones_per_ru, &phy.budget, &phy.mcs);
        self.check_frame(&ampdus, now, dur);
        for a in &ampdus {
            self.ampdu_ul.add(a.len());
            self.flow_in_air(a, 1);
        }
        self.txop.as_mut().unwrap().payloads.push(payloads);
        let ppdu_end = now + dur;
        sched.schedule(ppdu_end, Ev::PpduEnd { ampdus, bsr });
        let end = ppdu_end + phy.budget.sifs + phy.budget.back_duration;
        self.schedule_after_exchange(sched, index, end);
    }

    fn on_txop_end(&mut self, sched: &mut Scheduler<Ev>, now: SimTime) {
        let txop = self.txop.take().expect("active TXOP");
        let layout = run_ap_txop(
            &txop.plan,
            txop.start,
            &txop.payloads,
            &self.p.phy.budget,
            &self.p.phy.mcs,
        );
        if layout.last().map(|t| t.end) != Some(now) {
            self.v.txop_accounting += 1;
            self.v.note(|| format!("TXOP from {} ended at {now}, layout says {:?}", txop.start, layout.last()));
        }
        self.medium_busy += now - txop.start;
        self.end_access(sched, now, &[DeviceId::AP], TxOutcome::Success);
    }

    fn on_attempt_end(
        &mut self,
        sched: &mut Scheduler<Ev>,
        now: SimTime,
        devices: Vec<DeviceId>,
        outcome: TxOutcome,
    ) {
        self.end_access(sched, now, &devices, outcome);
    }

    fn end_access(
        &mut self,
        sched: &mut Scheduler<Ev>,
        now: SimTime,
        devices: &[DeviceId],
        outcome: TxOutcome,
    ) {
        for &id in devices {
            let report = self.devices[id.index()].on_tx_end(outcome);
            for m in &report.retry_dropped {
                self.drop_sample(m, SampleOutcome::RetryDrop);
            }
            for m in &report.proactive_dropped {
                self.drop_sample(m, SampleOutcome::ProactiveDrop);
            }
            let cw = self.devices[id.index()].backoff.cw;
            if cw != self.p.edca.cw_min && cw != self.p.edca.cw_max {
                self.v.cw_range += 1;
                self.v.note(|| format!("cw {cw} at {id}"));
            }
        }
        self.contention.set_idle(now);
        self.rearm(sched);
    }

    fn on_ppdu_end(&mut self, now: SimTime, ampdus: Vec<Ampdu>, bsr: Vec<(DeviceId, usize)>) {
        for a in &ampdus {
            self.flow_in_air(a, -1);
            for m in &a.mpdus {
                self.deliver(m, now);
            }
        }
        for (sta, occ) in bsr {
            self.bsr.update_bsr(sta, occ, now);
        }
    }

    fn deliver(&mut self, m: &Mpdu, now: SimTime) {
        let fi = self.flow_index(m.src, m.dst);
        let vanilla = self.p.discipline == Discipline::Vanilla;
        let f = &mut self.flows[fi];
        if vanilla && f.last_delivered.is_some_and(|last| m.seq <= last) {
            self.v.in_order += 1;
            self.v.note(|| format!("flow {fi} delivered {} after {:?}", m.seq, f.last_delivered));
        }
        f.last_delivered = Some(f.last_delivered.map_or(m.seq, |l| l.max(m.seq)));
        let r = &mut f.records[m.seq as usize];
        if r.outcome != SampleOutcome::Pending {
            self.v.conservation += 1;
            self.v.note(|| format!("sample {} of flow {fi} resolved twice", m.seq));
        }
        r.outcome = SampleOutcome::Delivered;
        r.received_at = Some(now);
        r.first_attempt_at = m.first_attempt_at;
        if f.display.on_reception(m.seq, m.sample.position) == ReceptionEffect::Displayed {
            r.displayed_at = Some(now);
        }
    }

    fn finish(mut self, events_fired: u64) -> Result<RunOutput> {
        // Per-flow conservation: every unresolved record must correspond to
        // an MPDU still queued, in a pending attempt, or on the air.
        let mut present = vec![0u64; self.flows.len()];
        for d in &self.devices {
            for m in d.queue.iter().chain(d.in_flight.iter().flat_map(|a| &a.mpdus)) {
                present[self.flow_index(m.src, m.dst)] += 1;
            }
        }
        for (fi, f) in self.flows.iter().enumerate() {
            let pending = f
                .records
                .iter()
                .filter(|r| r.outcome == SampleOutcome::Pending)
                .count() as u64;
            let generated = f.records.len() as u64;
            if generated != self.ticks || pending != present[fi] + f.in_air {
                self.v.conservation += 1;
                let (p, q, a) = (pending, present[fi], f.in_air);
                self.v.note(|| format!("flow {fi}: {p} unresolved vs {q} queued + {a} on air"));
            }
        }

        let log = RunLog {
            discipline: self.p.discipline,
            n_stas: self.p.n_stas,
            seed: self.p.seed,
            warmup: self.p.warmup,
            sample_period: self.p.traffic.sample_period(),
            flows: self
                .flows
                .into_iter()
                .map(|f| FlowLog {
                    flow: f.flow,
                    records: f.records,
                    displayed: f.displayed,
                    source: f.trace,
                })
                .collect(),
            ampdu_dl: self.ampdu_dl,
            ampdu_ul: self.ampdu_ul,
            attempts: self.attempts,
            collided_attempts: self.collided_attempts,
            ap_txops: self.ap_txops,
            medium_busy: self.medium_busy,
            duration: self.p.duration,
        };
        let metrics = summarize(&log)?;
        Ok(RunOutput {
            metrics,
            log,
            violations: self.v,
            events_fired,
        })
    }
}
