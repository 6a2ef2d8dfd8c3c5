use std::collections::{BTreeMap, VecDeque};

use super::{Ampdu, Discipline, Mpdu};
use crate::kernel::SimTime;
use crate::DeviceId;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnqueueReport {
    pub replaced: Option<Mpdu>,
}

/// Per-destination transmit queue for the AC_VO access category.
#[derive(Debug, Clone)]
pub struct TxQueue {
    discipline: Discipline,
    per_dst: BTreeMap<DeviceId, VecDeque<Mpdu>>,
    proactive_drop_count: u64,
}

impl TxQueue {
    pub fn new(discipline: Discipline) -> Self {
        TxQueue {
            discipline,
            per_dst: BTreeMap::new(),
            proactive_drop_count: 0,
        }
    }

    pub fn discipline(&self) -> Discipline {
        self.discipline
    }

    pub fn proactive_drop_count(&self) -> u64 {
        self.proactive_drop_count
    }

    pub fn len_for(&self, dst: DeviceId) -> usize {
        self.per_dst.get(&dst).map_or(0, VecDeque::len)
    }

    pub fn total_len(&self) -> usize {
        self.per_dst.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.per_dst.values().all(VecDeque::is_empty)
    }

    /// Destinations with at least one queued MPDU, with their occupancy.
    pub fn occupancies(&self) -> impl Iterator<Item = (DeviceId, usize)> + '_ {
        self.per_dst
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(d, q)| (*d, q.len()))
    }

    /// Occupancy counting only MPDUs enqueued at or before `cutoff`.
    pub fn occupancy_before(&self, dst: DeviceId, cutoff: SimTime) -> usize {
        self.per_dst
            .get(&dst)
            .map_or(0, |q| q.iter().take_while(|m| m.enqueued_at <= cutoff).count())
    }

    pub fn peek(&self, dst: DeviceId) -> Option<&Mpdu> {
        self.per_dst.get(&dst).and_then(VecDeque::front)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mpdu> {
        self.per_dst.values().flat_map(|q| q.iter())
    }

    pub fn enqueue(&mut self, mpdu: Mpdu) -> EnqueueReport {
        let q = self.per_dst.entry(mpdu.dst).or_default();
        let report = match self.discipline {
            Discipline::Vanilla => {
                debug_assert!(q.back().is_none_or(|b| b.seq < mpdu.seq));
                q.push_back(mpdu);
                EnqueueReport::default()
            }
            Discipline::Nobus => {
                let replaced = q.pop_front();
                if replaced.is_some() {
                    self.proactive_drop_count += 1;
                }
                q.push_back(mpdu);
                EnqueueReport { replaced }
            }
        };
        self.check_depth();
        report
    }

    /// Removes up to `cap` MPDUs for `dst`, oldest first. When `cutoff` is
    /// given only MPDUs enqueued at or before it are eligible. NoBuS queues
    /// yield their single resident MPDU regardless of `cap`.
    pub fn build_ampdu(
        &mut self,
        dst: DeviceId,
        cap: usize,
        cutoff: Option<SimTime>,
    ) -> Option<Ampdu> {
        let q = self.per_dst.get_mut(&dst)?;
        let take = match self.discipline {
            Discipline::Vanilla => {
                let eligible = match cutoff {
                    Some(c) => q.iter().take_while(|m| m.enqueued_at <= c).count(),
                    None => q.len(),
                };
                eligible.min(cap)
            }
            Discipline::Nobus => q.len().min(1),
        };
        if take == 0 {
            return None;
        }
        let mpdus: Vec<Mpdu> = q.drain(..take).collect();
        debug_assert!(mpdus.windows(2).all(|w| w[0].seq < w[1].seq));
        Some(Ampdu { dst, mpdus })
    }

    /// Puts MPDUs back at the head of their destination queue after a
    /// failed attempt. For NoBuS the caller must ensure the slot is free.
    pub fn requeue_front(&mut self, dst: DeviceId, mpdus: Vec<Mpdu>) {
        let q = self.per_dst.entry(dst).or_default();
        for m in mpdus.into_iter().rev() {
            debug_assert!(q.front().is_none_or(|f| f.seq > m.seq));
            q.push_front(m);
        }
        self.check_depth();
    }

    /// Counts an MPDU discarded outside of `enqueue` (a NoBuS MPDU whose
    /// failed attempt was overtaken by a newer sample).
    pub fn note_proactive_drop(&mut self) {
        self.proactive_drop_count += 1;
    }

    pub fn max_depth(&self) -> usize {
        self.per_dst.values().map(VecDeque::len).max().unwrap_or(0)
    }

    fn check_depth(&self) {
        if self.discipline == Discipline::Nobus {
            assert!(self.max_depth() <= 1, "NoBuS queue depth exceeded 1");
        }
    }
}
