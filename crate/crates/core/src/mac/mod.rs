//! AC_VO EDCA MAC: transmit queues, backoff, medium arbitration and
//! per-MPDU retransmission.

mod backoff;
mod contention;
mod device;
mod queue;
pub mod saturation;

use serde::{Deserialize, Serialize};

pub use backoff::{BackoffState, EdcaParams};
pub use contention::{medium_arbitrate, Contention, TxOutcome};
pub use device::{MacDevice, TxEndReport};
pub use queue::{EnqueueReport, TxQueue};

use crate::kernel::SimTime;
use crate::phy::{max_ampdu_mpdus, AirtimeBudget, McsParams};
use crate::traffic::TraceSample;
use crate::DeviceId;

/// MAC header (40 B) plus AMPDU delimiter (4 B) added to every payload.
pub const MPDU_OVERHEAD_BYTES: u64 = 44;

/// Transmit-queue discipline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    /// Unbounded FIFO per destination; everything queued is aggregated.
    Vanilla,
    /// Depth-one queue per destination; new samples replace old ones.
    Nobus,
}

impl Discipline {
    pub fn as_str(self) -> &'static str {
        match self {
            Discipline::Vanilla => "vanilla",
            Discipline::Nobus => "nobus",
        }
    }
}

impl std::fmt::Display for Discipline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Discipline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(Discipline::Vanilla),
            "nobus" => Ok(Discipline::Nobus),
            other => Err(format!("unknown discipline {other:?} (expected vanilla|nobus)")),
        }
    }
}

/// One application message on the air.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpdu {
    /// Per-flow sequence number, equal to the sample tick.
    pub seq: u64,
    pub src: DeviceId,
    pub dst: DeviceId,
    pub generated_at: SimTime,
    pub enqueued_at: SimTime,
    pub payload_bytes: u64,
    pub sample: TraceSample,
    pub retry_count: u32,
    pub first_attempt_at: Option<SimTime>,
}

impl Mpdu {
    pub fn on_air_bytes(&self) -> u64 {
        self.payload_bytes + MPDU_OVERHEAD_BYTES
    }
}

/// MPDUs for one destination sent together in one PSDU.
#[derive(Debug, Clone, PartialEq)]
pub struct Ampdu {
    pub dst: DeviceId,
    pub mpdus: Vec<Mpdu>,
}

impl Ampdu {
    pub fn len(&self) -> usize {
        self.mpdus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mpdus.is_empty()
    }

    pub fn payload_bytes(&self) -> u64 {
        self.mpdus.iter().map(Mpdu::on_air_bytes).sum()
    }
}

/// Aggregation cap for MPDUs of `mpdu_on_air_bytes` on an RU of `tones`.
pub fn ampdu_cap(
    mpdu_on_air_bytes: u64,
    tones: u64,
    budget: &AirtimeBudget,
    mcs: &McsParams,
) -> usize {
    max_ampdu_mpdus(mpdu_on_air_bytes, tones, budget, mcs) as usize
}
