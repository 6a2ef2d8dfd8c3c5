//! Idealized 802.11be PHY: MCS-9 rates, PPDU airtime and aggregation caps.
//!
//! There is no channel model. A PPDU is lost only when it overlaps another
//! transmission, which the MAC decides; everything here is pure arithmetic.
//! Bits per symbol are kept as an exact rational so that `ceil` never
//! suffers from the 5/6 coding rate being inexact in floating point.

use serde::{Deserialize, Serialize};

use crate::kernel::SimTime;
use crate::DeviceId;

/// SERVICE field bits prepended to every PSDU.
pub const SERVICE_BITS: u64 = 16;
/// BCC tail bits appended to every PSDU.
pub const TAIL_BITS: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McsParams {
    pub bits_per_subcarrier: u64,
    pub coding_rate_num: u64,
    pub coding_rate_den: u64,
    pub symbol_duration: SimTime,
    pub guard_interval: SimTime,
}

impl McsParams {
    /// MCS-9: 256-QAM, rate 5/6, 12.8 µs symbol (78.125 kHz spacing), 0.8 µs GI.
    pub const MCS9: McsParams = McsParams {
        bits_per_subcarrier: 8,
        coding_rate_num: 5,
        coding_rate_den: 6,
        symbol_duration: SimTime::from_tenth_micros(128),
        guard_interval: SimTime::from_tenth_micros(8),
    };

    pub fn symbol_with_gi(&self) -> SimTime {
        self.symbol_duration + self.guard_interval
    }

    /// Data bits carried by one OFDM symbol over `tones`, as `(num, den)`.
    pub fn bits_per_symbol(&self, tones: u64) -> (u64, u64) {
        (
            tones * self.bits_per_subcarrier * self.coding_rate_num,
            self.coding_rate_den,
        )
    }
}

impl Default for McsParams {
    fn default() -> Self {
        Self::MCS9
    }
}

/// Data-tone counts for the RU sizes used by the scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TonePlan {
    pub channel_width_mhz: u32,
    pub data_tones_full: u64,
    pub data_tones_half: u64,
    pub data_tones_quarter: u64,
}

impl TonePlan {
    pub const BW320: TonePlan = TonePlan {
        channel_width_mhz: 320,
        data_tones_full: 3920,
        data_tones_half: 1960,
        data_tones_quarter: 980,
    };

    /// Tones per RU when the band is split among `ru_count` stations.
    /// One station gets the full band, two get halves, three or four get
    /// quarters (with one quarter idle for three).
    pub fn tones_for(&self, ru_count: usize) -> u64 {
        match ru_count {
            0 | 1 => self.data_tones_full,
            2 => self.data_tones_half,
            _ => self.data_tones_quarter,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.data_tones_quarter == 0 {
            return Err("tone counts must be positive".into());
        }
        if !(self.data_tones_quarter <= self.data_tones_half
            && self.data_tones_half <= self.data_tones_full)
        {
            return Err("tone plan must satisfy quarter <= half <= full".into());
        }
        Ok(())
    }
}

impl Default for TonePlan {
    fn default() -> Self {
        Self::BW320
    }
}

/// RU assignment for one multi-user PPDU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuAllocation {
    pub stations: Vec<DeviceId>,
    pub tones_per_ru: u64,
    pub ru_count: usize,
}

impl RuAllocation {
    pub fn new(stations: Vec<DeviceId>, plan: &TonePlan) -> Self {
        let ru_count = stations.len();
        RuAllocation {
            tones_per_ru: plan.tones_for(ru_count),
            ru_count,
            stations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AirtimeBudget {
    pub max_ppdu_duration: SimTime,
    pub preamble: SimTime,
    pub sifs: SimTime,
    pub back_duration: SimTime,
    pub trigger_duration: SimTime,
}

impl AirtimeBudget {
    pub const DEFAULT: AirtimeBudget = AirtimeBudget {
        max_ppdu_duration: SimTime::from_tenth_micros(54_000),
        preamble: SimTime::from_micros(48),
        sifs: SimTime::from_micros(16),
        back_duration: SimTime::from_micros(32),
        trigger_duration: SimTime::from_micros(48),
    };

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.max_ppdu_duration,
            self.preamble,
            self.sifs,
            self.back_duration,
            self.trigger_duration,
        ];
        if all.contains(&SimTime::ZERO) {
            return Err("airtime budget durations must be positive".into());
        }
        if self.preamble >= self.max_ppdu_duration {
            return Err("preamble must be shorter than the PPDU cap".into());
        }
        Ok(())
    }
}

impl Default for AirtimeBudget {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// All PHY constants of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhyConfig {
    pub mcs: McsParams,
    pub tones: TonePlan,
    pub budget: AirtimeBudget,
}

impl PhyConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.tones.validate()?;
        self.budget.validate()?;
        if self.mcs.coding_rate_num == 0
            || self.mcs.coding_rate_den == 0
            || self.mcs.bits_per_subcarrier == 0
            || self.mcs.symbol_with_gi() == SimTime::ZERO
        {
            return Err("MCS parameters must be positive".into());
        }
        Ok(())
    }

    pub fn airtime(&self, payload_bytes: u64, tones: u64) -> Airtime {
        ppdu_airtime(payload_bytes, tones, &self.budget, &self.mcs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Airtime {
    Fits(SimTime),
    /// The PPDU would last this long, beyond the cap.
    OverBudget(SimTime),
}

impl Airtime {
    pub fn fits(self) -> Option<SimTime> {
        match self {
            Airtime::Fits(t) => Some(t),
            Airtime::OverBudget(_) => None,
        }
    }

    pub fn duration(self) -> SimTime {
        match self {
            Airtime::Fits(t) | Airtime::OverBudget(t) => t,
        }
    }
}

/// PHY data rate in bit/s over `tones`, truncated to an integer.
pub fn data_rate(tones: u64, mcs: &McsParams) -> u64 {
    assert!(tones > 0, "data_rate: tones must be positive");
    let (num, den) = mcs.bits_per_symbol(tones);
    let sym_ns = mcs.symbol_with_gi().as_nanos();
    ((num as u128 * 1_000_000_000) / (den as u128 * sym_ns as u128)) as u64
}

/// OFDM symbols needed for a PSDU of `payload_bytes` over `tones`.
pub fn symbol_count(payload_bytes: u64, tones: u64, mcs: &McsParams) -> u64 {
    assert!(tones > 0, "symbol_count: tones must be positive");
    let bits = SERVICE_BITS + 8 * payload_bytes + TAIL_BITS;
    let (num, den) = mcs.bits_per_symbol(tones);
    (bits * den).div_ceil(num)
}

/// Duration of a PPDU carrying `payload_bytes`, checked against the cap.
pub fn ppdu_airtime(
    payload_bytes: u64,
    tones: u64,
    budget: &AirtimeBudget,
    mcs: &McsParams,
) -> Airtime {
    let n = symbol_count(payload_bytes, tones, mcs);
    let t = budget.preamble + mcs.symbol_with_gi().mul(n);
    if t <= budget.max_ppdu_duration {
        Airtime::Fits(t)
    } else {
        Airtime::OverBudget(t)
    }
}

/// Largest number of MPDUs of `mpdu_on_air_bytes` that fit one PPDU on
/// `tones`. Zero means not even a single MPDU fits.
pub fn max_ampdu_mpdus(
    mpdu_on_air_bytes: u64,
    tones: u64,
    budget: &AirtimeBudget,
    mcs: &McsParams,
) -> u64 {
    assert!(mpdu_on_air_bytes > 0, "max_ampdu_mpdus: empty MPDU");
    let sym = mcs.symbol_with_gi().as_nanos();
    let Some(room) = budget.max_ppdu_duration.checked_sub(budget.preamble) else {
        return 0;
    };
    let max_symbols = room.as_nanos() / sym;
    // bits that fit: floor(max_symbols * num / den); subtract service+tail.
    let (num, den) = mcs.bits_per_symbol(tones);
    let capacity_bits = max_symbols * num / den;
    let overhead = SERVICE_BITS + TAIL_BITS;
    if capacity_bits < overhead {
        return 0;
    }
    (capacity_bits - overhead) / (8 * mpdu_on_air_bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: AirtimeBudget = AirtimeBudget::DEFAULT;
    const M: McsParams = McsParams::MCS9;

    #[test]
    fn mcs9_symbol_is_13_6_us() {
        assert_eq!(M.symbol_with_gi(), SimTime::from_tenth_micros(136));
    }

    #[test]
    fn rate_full_band() {
        // 3920 * 8 * 5/6 / 13.6e-6 = 1_921_568_627.45...
        assert_eq!(data_rate(3920, &M), 1_921_568_627);
        // 980 tones -> 480_392_156.86...
        assert_eq!(data_rate(980, &M), 480_392_156);
    }

    #[test]
    fn rate_unit() {
        let unit = McsParams {
            bits_per_subcarrier: 1,
            coding_rate_num: 1,
            coding_rate_den: 1,
            symbol_duration: SimTime::from_secs(1),
            guard_interval: SimTime::ZERO,
        };
        assert_eq!(data_rate(1, &unit), 1);
    }

    #[test]
    fn rate_doubles_with_tones() {
        for tones in [980u64, 1960, 123, 4000] {
            let a = data_rate(tones, &M);
            let b = data_rate(2 * tones, &M);
            assert!(b.abs_diff(2 * a) <= 1);
        }
    }

    #[test]
    #[should_panic]
    fn zero_tones_rejected() {
        data_rate(0, &M);
    }

    #[test]
    fn empty_payload_costs_one_symbol() {
        assert_eq!(
            ppdu_airtime(0, 3920, &B, &M),
            Airtime::Fits(SimTime::from_tenth_micros(480 + 136))
        );
    }

    #[test]
    fn quarter_band_single_mpdu() {
        // ceil(20374 / 6533.33) = 4 symbols -> 48 + 54.4 = 102.4 µs
        assert_eq!(
            ppdu_airtime(2544, 980, &B, &M),
            Airtime::Fits(SimTime::from_tenth_micros(1024))
        );
    }

    #[test]
    fn over_budget_detected() {
        let r = ppdu_airtime(10_000_000, 980, &B, &M);
        assert!(matches!(r, Airtime::OverBudget(t) if t > B.max_ppdu_duration));
    }

    #[test]
    fn max_ampdu_matches_brute_force() {
        for tones in [980u64, 1960, 3920] {
            for size in [100u64, 1044, 2544, 9000] {
                let k = max_ampdu_mpdus(size, tones, &B, &M);
                let mut brute = 0;
                while ppdu_airtime((brute + 1) * size, tones, &B, &M).fits().is_some() {
                    brute += 1;
                }
                assert_eq!(k, brute, "tones={tones} size={size}");
            }
        }
    }

    #[test]
    fn max_ampdu_boundaries() {
        // One MPDU that only just fits.
        let room_symbols = (B.max_ppdu_duration - B.preamble).as_nanos() / 13_600;
        let bits = room_symbols * 3920 * 8 * 5 / 6 - 22;
        let one = bits / 8;
        assert_eq!(max_ampdu_mpdus(one, 3920, &B, &M), 1);
        assert_eq!(max_ampdu_mpdus(one * 3, 3920, &B, &M), 0);
        let full = max_ampdu_mpdus(2544, 3920, &B, &M);
        let quarter = max_ampdu_mpdus(2544, 980, &B, &M);
        assert!((100..1000).contains(&full), "{full}");
        assert!(full >= quarter);
    }

    #[test]
    fn ru_tones() {
        let p = TonePlan::BW320;
        assert_eq!(p.tones_for(1), 3920);
        assert_eq!(p.tones_for(2), 1960);
        assert_eq!(p.tones_for(3), 980);
        assert_eq!(p.tones_for(4), 980);
        assert!(p.validate().is_ok());
        let bad = TonePlan {
            data_tones_half: 5000,
            ..p
        };
        assert!(bad.validate().is_err());
    }
}
