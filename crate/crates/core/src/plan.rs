//! WDM channel plan: bands, the fixed frequency grid, and the three-channel
//! sliding test band used when measuring a channel under test.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::freq_to_wavelength_nm;

/// Telecom band identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandId {
    O,
    E,
    S,
    C,
    L,
}

impl BandId {
    pub const ALL: [BandId; 5] = [BandId::O, BandId::E, BandId::S, BandId::C, BandId::L];

    pub fn as_str(self) -> &'static str {
        match self {
            BandId::O => "O",
            BandId::E => "E",
            BandId::S => "S",
            BandId::C => "C",
            BandId::L => "L",
        }
    }
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "O" | "o" => Ok(BandId::O),
            "E" | "e" => Ok(BandId::E),
            "S" | "s" => Ok(BandId::S),
            "C" | "c" => Ok(BandId::C),
            "L" | "l" => Ok(BandId::L),
            other => Err(Error::InvalidArgument(format!("unknown band `{other}`"))),
        }
    }
}

/// Transmission direction over the shared span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "FW")]
    Forward,
    #[serde(rename = "BW")]
    Backward,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    pub fn index(self) -> u64 {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "FW",
            Direction::Backward => "BW",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grid spacing kept as an exact ratio `numerator_hz / denominator` so that
/// 100/3 GHz does not accumulate rounding across a thousand slots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpacing {
    Ratio { numerator_hz: u64, denominator: u64 },
    Hz(f64),
}

impl GridSpacing {
    pub const fn ratio(numerator_hz: u64, denominator: u64) -> Self {
        GridSpacing::Ratio {
            numerator_hz,
            denominator,
        }
    }

    pub fn hz(&self) -> f64 {
        match *self {
            GridSpacing::Ratio {
                numerator_hz,
                denominator,
            } => numerator_hz as f64 / denominator as f64,
            GridSpacing::Hz(hz) => hz,
        }
    }

    /// `k / 2` grid slots, in Hz, with a single rounding step.
    fn half_slots(&self, k: u64) -> f64 {
        match *self {
            GridSpacing::Ratio {
                numerator_hz,
                denominator,
            } => (k as u128 * numerator_hz as u128) as f64 / (2 * denominator) as f64,
            GridSpacing::Hz(hz) => k as f64 * hz / 2.0,
        }
    }

    /// Whole slots that fit into `bandwidth_hz`.
    fn slots_in(&self, bandwidth_hz: f64) -> usize {
        let slots = match *self {
            GridSpacing::Ratio {
                numerator_hz,
                denominator,
            } => bandwidth_hz * denominator as f64 / numerator_hz as f64,
            GridSpacing::Hz(hz) => bandwidth_hz / hz,
        };
        (slots + 1e-9).floor().max(0.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: BandId,
    pub start_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub channel_count: usize,
    /// Band-total launch power, forward direction.
    pub launch_power_fw_dbm: f64,
    /// Band-total launch power, backward direction.
    pub launch_power_bw_dbm: f64,
}

impl BandSpec {
    pub fn launch_power_dbm(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Forward => self.launch_power_fw_dbm,
            Direction::Backward => self.launch_power_bw_dbm,
        }
    }

    /// Soft checks that do not stop a plan from being built.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let diff = (self.launch_power_fw_dbm - self.launch_power_bw_dbm).abs();
        if diff >= 1.0 {
            out.push(format!(
                "band {}: FW/BW launch powers differ by {diff:.2} dB (>= 1 dB)",
                self.name
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel {
    pub id: usize,
    pub band: BandId,
    /// Position of the band in [`ChannelPlan::bands`].
    pub band_index: usize,
    /// Index inside the band, 0 at the band's low-frequency edge.
    pub index_in_band: usize,
    pub frequency_hz: f64,
}

impl Channel {
    pub fn wavelength_nm(&self) -> f64 {
        freq_to_wavelength_nm(self.frequency_hz)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelPlan {
    pub grid_spacing: GridSpacing,
    pub symbol_rate_baud: f64,
    pub guard_band_hz: f64,
    pub rolloff: f64,
    /// Bands in ascending frequency order.
    pub bands: Vec<BandSpec>,
    pub excluded_channels: BTreeSet<usize>,
    channels: Vec<Channel>,
    band_offsets: Vec<usize>,
}

pub const DEFAULT_GUARD_BAND_HZ: f64 = 1.33e9;
pub const DEFAULT_ROLLOFF: f64 = 0.01;

impl ChannelPlan {
    /// Lays every band out on the grid. Channel ids run over the whole plan in
    /// ascending frequency.
    pub fn build(
        bands: Vec<BandSpec>,
        grid_spacing: GridSpacing,
        symbol_rate_baud: f64,
    ) -> Result<Self> {
        let grid_hz = grid_spacing.hz();
        if !(grid_hz > 0.0) || !(symbol_rate_baud > 0.0) {
            return Err(Error::InvalidArgument(
                "grid spacing and symbol rate must be positive".into(),
            ));
        }
        if grid_hz < symbol_rate_baud * (1.0 + DEFAULT_ROLLOFF) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing {grid_hz} Hz is narrower than the signal bandwidth"
            )));
        }

        let mut bands = bands;
        bands.sort_by(|a, b| a.start_frequency_hz.total_cmp(&b.start_frequency_hz));

        for band in &bands {
            if band.channel_count == 0 {
                return Err(Error::InvalidArgument(format!(
                    "band {} has no channels",
                    band.name
                )));
            }
            let slots = grid_spacing.slots_in(band.bandwidth_hz);
            if slots.abs_diff(band.channel_count) > 1 {
                return Err(Error::PlanInconsistent {
                    band: band.name.to_string(),
                    count: band.channel_count,
                    bandwidth_hz: band.bandwidth_hz,
                    slots,
                });
            }
        }
        for pair in bands.windows(2) {
            let (lo, hi) = (&pair[0], &pair[1]);
            let lo_end = lo.start_frequency_hz
                + grid_spacing.half_slots(2 * lo.channel_count as u64).max(lo.bandwidth_hz);
            if lo_end > hi.start_frequency_hz + 1e-3 || lo.name == hi.name {
                return Err(Error::PlanOverlap(lo.name.to_string(), hi.name.to_string()));
            }
        }

        let mut channels = Vec::with_capacity(bands.iter().map(|b| b.channel_count).sum());
        let mut band_offsets = Vec::with_capacity(bands.len());
        for (band_index, band) in bands.iter().enumerate() {
            band_offsets.push(channels.len());
            for k in 0..band.channel_count {
                channels.push(Channel {
                    id: channels.len(),
                    band: band.name,
                    band_index,
                    index_in_band: k,
                    frequency_hz: band.start_frequency_hz
                        + grid_spacing.half_slots(2 * k as u64 + 1),
                });
            }
        }

        Ok(ChannelPlan {
            grid_spacing,
            symbol_rate_baud,
            guard_band_hz: DEFAULT_GUARD_BAND_HZ,
            rolloff: DEFAULT_ROLLOFF,
            bands,
            excluded_channels: BTreeSet::new(),
            channels,
            band_offsets,
        })
    }

    pub fn with_rolloff(mut self, rolloff: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rolloff) {
            return Err(Error::InvalidArgument(format!("roll-off {rolloff}")));
        }
        if self.grid_spacing.hz() < self.symbol_rate_baud * (1.0 + rolloff) {
            return Err(Error::InvalidArgument(
                "signal bandwidth exceeds the grid spacing".into(),
            ));
        }
        self.rolloff = rolloff;
        Ok(self)
    }

    pub fn with_guard_band(mut self, guard_band_hz: f64) -> Self {
        self.guard_band_hz = guard_band_hz;
        self
    }

    pub fn with_excluded<I: IntoIterator<Item = usize>>(mut self, ids: I) -> Result<Self> {
        for id in ids {
            if id >= self.channels.len() {
                return Err(Error::NotFound(format!("excluded channel {id}")));
            }
            self.excluded_channels.insert(id);
        }
        Ok(self)
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channel(&self, channel_id: usize) -> Result<&Channel> {
        self.channels
            .get(channel_id)
            .ok_or_else(|| Error::NotFound(format!("channel {channel_id}")))
    }

    pub fn channel_frequency(&self, channel_id: usize) -> Result<f64> {
        self.channel(channel_id).map(|c| c.frequency_hz)
    }

    pub fn is_excluded(&self, channel_id: usize) -> bool {
        self.excluded_channels.contains(&channel_id)
    }

    pub fn band(&self, id: BandId) -> Option<&BandSpec> {
        self.bands.iter().find(|b| b.name == id)
    }

    pub fn band_of(&self, channel_id: usize) -> Result<&BandSpec> {
        let ch = self.channel(channel_id)?;
        Ok(&self.bands[ch.band_index])
    }

    /// Channels of one band in frequency order.
    pub fn band_channels(&self, id: BandId) -> &[Channel] {
        match self.bands.iter().position(|b| b.name == id) {
            Some(i) => {
                let start = self.band_offsets[i];
                &self.channels[start..start + self.bands[i].channel_count]
            }
            None => &[],
        }
    }

    pub fn total_bandwidth_hz(&self) -> f64 {
        self.bands.iter().map(|b| b.bandwidth_hz).sum()
    }

    /// The channel under test plus its two neighbours, shifted inward at a
    /// band edge so all three stay in the same band. Bands with fewer than
    /// three channels return what they have.
    pub fn sliding_test_band(&self, cut_id: usize) -> Result<Vec<usize>> {
        let ch = self.channel(cut_id)?;
        let band = &self.bands[ch.band_index];
        let offset = self.band_offsets[ch.band_index];
        let n = band.channel_count;
        if n < 3 {
            return Ok((offset..offset + n).collect());
        }
        let first = ch.index_in_band.saturating_sub(1).min(n - 3);
        Ok((offset + first..offset + first + 3).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn grid() -> GridSpacing {
        GridSpacing::ratio(100_000_000_000, 3)
    }

    fn band(name: BandId, start: f64, bw: f64, n: usize) -> BandSpec {
        BandSpec {
            name,
            start_frequency_hz: start,
            bandwidth_hz: bw,
            channel_count: n,
            launch_power_fw_dbm: 10.0,
            launch_power_bw_dbm: 10.5,
        }
    }

    #[test]
    fn single_slot_band_is_centered() {
        let g = grid();
        let plan = ChannelPlan::build(vec![band(BandId::C, 193e12, g.hz(), 1)], g, 32e9).unwrap();
        assert_eq!(plan.len(), 1);
        let f = plan.channel_frequency(0).unwrap();
        assert!((f - (193e12 + g.hz() / 2.0)).abs() < 1e-3);
    }

    #[test]
    fn slot_count_is_integer_division() {
        // 16.6 THz / (100/3 GHz) = 498 exactly
        assert_eq!(16_600_000_000_000u64 * 3 / 100_000_000_000, 498);
        assert_eq!(grid().slots_in(16.6e12), 498);
        assert_eq!(grid().slots_in(8.6e12), 258);
    }

    #[test]
    fn consecutive_channels_one_grid_apart() {
        let g = grid();
        let plan = ChannelPlan::build(vec![band(BandId::S, 196e12, 1e12, 30)], g, 32e9).unwrap();
        for w in plan.channels().windows(2) {
            let d = w[1].frequency_hz - w[0].frequency_hz;
            // exact up to one rounding of each absolute frequency
            assert!((d - g.hz()).abs() <= 2.0 * f64::EPSILON * w[1].frequency_hz, "{d}");
        }
    }

    #[test]
    fn overlap_is_rejected() {
        let g = grid();
        let err = ChannelPlan::build(
            vec![
                band(BandId::C, 193e12, 1e12, 30),
                band(BandId::L, 193.5e12, 1e12, 30),
            ],
            g,
            32e9,
        )
        .unwrap_err();
        assert!(matches!(err, Error::PlanOverlap(..)));
    }

    #[test]
    fn inconsistent_count_is_rejected() {
        let err =
            ChannelPlan::build(vec![band(BandId::C, 193e12, 1e12, 40)], grid(), 32e9).unwrap_err();
        assert!(matches!(err, Error::PlanInconsistent { slots: 30, .. }));
        // off by one slot is tolerated
        assert!(ChannelPlan::build(vec![band(BandId::C, 193e12, 1e12, 31)], grid(), 32e9).is_ok());
    }

    #[test]
    fn unknown_channel_is_not_found() {
        let plan = ChannelPlan::build(vec![band(BandId::C, 193e12, 1e12, 30)], grid(), 32e9).unwrap();
        assert!(matches!(plan.channel_frequency(30), Err(Error::NotFound(_))));
        assert!(matches!(plan.sliding_test_band(99), Err(Error::NotFound(_))));
        assert!(plan.clone().with_excluded([30]).is_err());
    }

    #[test]
    fn sliding_band_clips_at_edges() {
        let plan = ChannelPlan::build(
            vec![
                band(BandId::C, 193e12, 1e12, 30),
                band(BandId::L, 190e12, 1e12, 30),
            ],
            grid(),
            32e9,
        )
        .unwrap();
        // L is lower in frequency, so it owns ids 0..30.
        assert_eq!(plan.sliding_test_band(10).unwrap(), vec![9, 10, 11]);
        assert_eq!(plan.sliding_test_band(0).unwrap(), vec![0, 1, 2]);
        assert_eq!(plan.sliding_test_band(29).unwrap(), vec![27, 28, 29]);
        assert_eq!(plan.sliding_test_band(30).unwrap(), vec![30, 31, 32]);
    }

    #[test]
    fn exclusion_does_not_move_channels() {
        let plan = ChannelPlan::build(vec![band(BandId::C, 193e12, 1e12, 30)], grid(), 32e9).unwrap();
        let before: Vec<f64> = plan.channels().iter().map(|c| c.frequency_hz).collect();
        let plan = plan.with_excluded([0, 5]).unwrap();
        let after: Vec<f64> = plan.channels().iter().map(|c| c.frequency_hz).collect();
        assert_eq!(before, after);
        assert!(plan.is_excluded(5));
    }

    #[test]
    fn launch_power_warning() {
        let mut b = band(BandId::C, 193e12, 1e12, 30);
        assert!(b.warnings().is_empty());
        b.launch_power_bw_dbm = 12.0;
        assert_eq!(b.warnings().len(), 1);
    }
}
