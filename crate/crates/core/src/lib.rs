//! Discrete-event simulator of a single WiFi-7 BSS carrying Tactile
//! Internet (haptic teleoperation) traffic.
//!
//! Two MAC queue disciplines are modeled side by side:
//!
//! * **vanilla**: EDCA contention with AMPDU aggregation of everything
//!   queued for a destination, DL/UL-OFDMA at the AP, and a receiver-side
//!   jitter buffer that plays samples back serially at 1 kHz;
//! * **NoBuS** (non-buffered scheme): a per-destination transmit queue of
//!   depth one in which every new sample replaces the previous one, and a
//!   receiver that displays the latest sample immediately (zero-order hold).
//!
//! The crate is organized bottom-up: [`kernel`] (event engine and RNG),
//! [`phy`] (airtime arithmetic), [`mac`] (queues, EDCA backoff, medium),
//! [`ofdma`] (AP scheduling), [`traffic`] (1 kHz sample generation),
//! [`playback`] and [`metrics`] (receiver models and statistics), [`sim`]
//! (one BSS run) and [`experiment`] (config, sweeps, CSV output).

pub mod error;
pub mod experiment;
pub mod kernel;
pub mod mac;
pub mod metrics;
pub mod ofdma;
pub mod phy;
pub mod playback;
pub mod sim;
pub mod traffic;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use experiment::{Discipline, ExperimentConfig};
pub use kernel::{RngStream, Scheduler, SimTime};
pub use metrics::RunMetrics;
pub use sim::{run_simulation, RunOutput, SimParams};

/// Device index within the BSS. The AP is always device 0; STAs are 1..=N.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct DeviceId(pub u16);

impl DeviceId {
    pub const AP: DeviceId = DeviceId(0);

    pub fn is_ap(self) -> bool {
        self == Self::AP
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ap() {
            f.write_str("ap")
        } else {
            write!(f, "sta{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// AP to STA (operator commands towards the teleoperator).
    Dl,
    /// STA to AP.
    Ul,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Dl => "dl",
            Direction::Ul => "ul",
        })
    }
}

/// One periodic sample stream between the AP and a STA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId {
    pub direction: Direction,
    pub sta: DeviceId,
}

impl FlowId {
    pub fn dl(sta: DeviceId) -> Self {
        FlowId {
            direction: Direction::Dl,
            sta,
        }
    }

    pub fn ul(sta: DeviceId) -> Self {
        FlowId {
            direction: Direction::Ul,
            sta,
        }
    }

    pub fn src(&self) -> DeviceId {
        match self.direction {
            Direction::Dl => DeviceId::AP,
            Direction::Ul => self.sta,
        }
    }

    pub fn dst(&self) -> DeviceId {
        match self.direction {
            Direction::Dl => self.sta,
            Direction::Ul => DeviceId::AP,
        }
    }

    /// Dense index: DL flows first, then UL flows, each ordered by STA.
    pub fn index(&self, n_stas: usize) -> usize {
        let k = self.sta.index() - 1;
        match self.direction {
            Direction::Dl => k,
            Direction::Ul => n_stas + k,
        }
    }

    pub fn from_index(i: usize, n_stas: usize) -> Self {
        if i < n_stas {
            FlowId::dl(DeviceId(i as u16 + 1))
        } else {
            FlowId::ul(DeviceId((i - n_stas) as u16 + 1))
        }
    }
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.direction, self.sta)
    }
}
