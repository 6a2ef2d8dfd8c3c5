//! AP-side multi-user scheduling.
//!
//! When the AP wins contention it snapshots its DL queue and the latest
//! buffer status reports, sorts STAs highest-occupancy first and splits
//! them into groups that share one OFDMA PPDU. All DL groups are served
//! first, then one UL round of trigger-based exchanges.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kernel::SimTime;
use crate::phy::{ppdu_airtime, AirtimeBudget, McsParams, RuAllocation, TonePlan};
use crate::DeviceId;

/// Occupancy assumed for a STA the AP has never heard from.
pub const DEFAULT_OCCUPANCY: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferStatusReport {
    pub sta: DeviceId,
    pub reported_occupancy: usize,
    pub reported_at: SimTime,
}

/// Latest unsolicited buffer status report per STA.
#[derive(Debug, Clone, Default)]
pub struct BsrTable {
    reports: BTreeMap<DeviceId, BufferStatusReport>,
}

impl BsrTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the occupancy carried by a frame received from `sta`.
    pub fn update_bsr(&mut self, sta: DeviceId, occupancy: usize, at: SimTime) {
        self.reports.insert(
            sta,
            BufferStatusReport {
                sta,
                reported_occupancy: occupancy,
                reported_at: at,
            },
        );
    }

    pub fn occupancy(&self, sta: DeviceId) -> usize {
        self.reports
            .get(&sta)
            .map_or(DEFAULT_OCCUPANCY, |r| r.reported_occupancy)
    }

    pub fn report(&self, sta: DeviceId) -> Option<&BufferStatusReport> {
        self.reports.get(&sta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotPolicy {
    /// DL MPDUs enqueued after the AP won the medium wait for its next access.
    #[default]
    Txop,
    /// Each DL PPDU takes whatever is queued when it starts.
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    /// Group size when fewer than `large_group_threshold` STAs have data.
    pub small_group_size: usize,
    pub large_group_size: usize,
    pub large_group_threshold: usize,
    pub snapshot: SnapshotPolicy,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            small_group_size: 2,
            large_group_size: 4,
            large_group_threshold: 4,
            snapshot: SnapshotPolicy::Txop,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=4).contains(&self.small_group_size) || !(1..=4).contains(&self.large_group_size) {
            return Err("group sizes must lie in 1..=4".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleGroup {
    /// Descending occupancy.
    pub members: Vec<DeviceId>,
    pub occupancies: Vec<usize>,
    pub ru: RuAllocation,
}

impl ScheduleGroup {
    pub fn total_occupancy(&self) -> usize {
        self.occupancies.iter().sum()
    }
}

/// Highest-first grouping. STAs with zero occupancy are left out; ties go
/// to the lower device id.
pub fn group_stas(
    occupancies: &[(DeviceId, usize)],
    tones: &TonePlan,
    cfg: &SchedulerConfig,
) -> Vec<ScheduleGroup> {
    let mut active: Vec<(DeviceId, usize)> =
        occupancies.iter().copied().filter(|&(_, o)| o > 0).collect();
    active.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let size = if active.len() < cfg.large_group_threshold {
        cfg.small_group_size
    } else {
        cfg.large_group_size
    };
    active
        .chunks(size.max(1))
        .map(|chunk| {
            let members: Vec<DeviceId> = chunk.iter().map(|c| c.0).collect();
            ScheduleGroup {
                occupancies: chunk.iter().map(|c| c.1).collect(),
                ru: RuAllocation::new(members.clone(), tones),
                members,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxopPlan {
    pub dl_groups: Vec<ScheduleGroup>,
    pub ul_groups: Vec<ScheduleGroup>,
    pub snapshot_at: SimTime,
}

impl TxopPlan {
    pub fn build(
        dl_occupancy: &[(DeviceId, usize)],
        ul_occupancy: &[(DeviceId, usize)],
        snapshot_at: SimTime,
        tones: &TonePlan,
        cfg: &SchedulerConfig,
    ) -> Self {
        TxopPlan {
            dl_groups: group_stas(dl_occupancy, tones, cfg),
            ul_groups: group_stas(ul_occupancy, tones, cfg),
            snapshot_at,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.dl_groups.is_empty() && self.ul_groups.is_empty()
    }

    /// Exchanges in execution order: every DL group, then every UL group.
    pub fn phases(&self) -> impl Iterator<Item = Phase<'_>> {
        self.dl_groups
            .iter()
            .map(Phase::Dl)
            .chain(self.ul_groups.iter().map(Phase::Ul))
    }

    pub fn phase_count(&self) -> usize {
        self.dl_groups.len() + self.ul_groups.len()
    }

    pub fn phase(&self, i: usize) -> Option<Phase<'_>> {
        if i < self.dl_groups.len() {
            Some(Phase::Dl(&self.dl_groups[i]))
        } else {
            self.ul_groups.get(i - self.dl_groups.len()).map(Phase::Ul)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase<'a> {
    Dl(&'a ScheduleGroup),
    Ul(&'a ScheduleGroup),
}

/// Duration of a multi-user PPDU whose RUs carry `payloads` bytes each:
/// the longest RU sets the PPDU length.
pub fn ofdma_ppdu_duration(
    payloads: &[u64],
    tones_per_ru: u64,
    budget: &AirtimeBudget,
    mcs: &McsParams,
) -> SimTime {
    payloads
        .iter()
        .map(|&b| ppdu_airtime(b, tones_per_ru, budget, mcs).duration())
        .max()
        .unwrap_or_else(|| ppdu_airtime(0, tones_per_ru, budget, mcs).duration())
}

/// Timing of one exchange inside an AP TXOP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExchangeTiming {
    pub start: SimTime,
    /// Start of the data PPDU (after the trigger for UL).
    pub ppdu_start: SimTime,
    pub ppdu_end: SimTime,
    /// End of the multi-STA block ack.
    pub end: SimTime,
}

impl ExchangeTiming {
    pub fn dl(start: SimTime, ppdu: SimTime, budget: &AirtimeBudget) -> Self {
        let ppdu_end = start + ppdu;
        ExchangeTiming {
            start,
            ppdu_start: start,
            ppdu_end,
            end: ppdu_end + budget.sifs + budget.back_duration,
        }
    }

    pub fn ul(start: SimTime, ppdu: SimTime, budget: &AirtimeBudget) -> Self {
        let ppdu_start = start + budget.trigger_duration + budget.sifs;
        let ppdu_end = ppdu_start + ppdu;
        ExchangeTiming {
            start,
            ppdu_start,
            ppdu_end,
            end: ppdu_end + budget.sifs + budget.back_duration,
        }
    }
}

/// Lays out a whole TXOP given the bytes each member sends in each phase
/// (`payloads[phase][member]`). Consecutive exchanges are separated by SIFS.
pub fn run_ap_txop(
    plan: &TxopPlan,
    start: SimTime,
    payloads: &[Vec<u64>],
    budget: &AirtimeBudget,
    mcs: &McsParams,
) -> Vec<ExchangeTiming> {
    assert!(!plan.is_empty(), "empty TXOP plan is never executed");
    assert_eq!(payloads.len(), plan.phase_count());
    let mut t = start;
    let mut out = Vec::with_capacity(payloads.len());
    for (phase, bytes) in plan.phases().zip(payloads) {
        let timing = match phase {
            Phase::Dl(g) => ExchangeTiming::dl(
                t,
                ofdma_ppdu_duration(bytes, g.ru.tones_per_ru, budget, mcs),
                budget,
            ),
            Phase::Ul(g) => ExchangeTiming::ul(
                t,
                ofdma_ppdu_duration(bytes, g.ru.tones_per_ru, budget, mcs),
                budget,
            ),
        };
        t = timing.end + budget.sifs;
        out.push(timing);
    }
    out
}
