//! GMI to decoded-rate mapping with a punctured code-rate threshold model,
//! and throughput aggregation.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::budget::SnrBreakdown;
use crate::error::{Error, Result};
use crate::plan::{BandId, Channel, Direction};

/// Threshold FEC abstraction: code rate `R` decodes iff `NGMI >= R + ngmi_gap`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FecModel {
    pub rate_granularity: f64,
    pub min_rate: f64,
    pub max_rate: f64,
    pub ngmi_gap: f64,
}

impl Default for FecModel {
    fn default() -> Self {
        FecModel {
            rate_granularity: 0.01,
            min_rate: 0.50,
            max_rate: 0.95,
            ngmi_gap: 0.02,
        }
    }
}

impl FecModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_rate > 0.0
            && self.min_rate <= self.max_rate
            && self.max_rate < 1.0
            && self.rate_granularity > 0.0
            && self.ngmi_gap >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config("fec", format!("invalid FEC model {self:?}")))
        }
    }

    pub fn with_gap(self, ngmi_gap: f64) -> Self {
        FecModel { ngmi_gap, ..self }
    }
}

/// Normalised GMI, `1 - (m - GMI) / m`, clamped to `[0, 1]`.
pub fn ngmi(gmi: f64, bits: u32) -> f64 {
    if bits == 0 {
        return 0.0;
    }
    let m = bits as f64;
    (1.0 - (m - gmi) / m).clamp(0.0, 1.0)
}

/// Largest punctured rate on the `min_rate + k·granularity` grid that the
/// threshold model accepts; 0 when none does.
pub fn max_code_rate(ngmi: f64, fec: &FecModel) -> f64 {
    let ceiling = (ngmi - fec.ngmi_gap).min(fec.max_rate);
    if ceiling < fec.min_rate {
        return 0.0;
    }
    let k = ((ceiling - fec.min_rate) / fec.rate_granularity + 1e-9).floor();
    fec.min_rate + k * fec.rate_granularity
}

/// Net rate estimated from GMI for a dual-polarisation channel, bit/s.
pub fn gmi_data_rate(symbol_rate_baud: f64, gmi_2d: f64, pilot_overhead: f64) -> f64 {
    2.0 * symbol_rate_baud * gmi_2d * (1.0 - pilot_overhead)
}

/// Net rate after decoding at `code_rate`, bit/s.
pub fn decoded_data_rate(symbol_rate_baud: f64, bits: u32, code_rate: f64, pilot_overhead: f64) -> f64 {
    2.0 * symbol_rate_baud * bits as f64 * code_rate * (1.0 - pilot_overhead)
}

/// Picks the format with the highest decoded rate given each format's bits
/// per 2D symbol and GMI. Ties go to the smaller format. Returns the index
/// into `candidates` and the chosen code rate.
pub fn select_by_decoded_rate(candidates: &[(u32, f64)], fec: &FecModel) -> Option<(usize, f64)> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| candidates[i].0);
    let mut best: Option<(usize, f64, f64)> = None;
    for i in order {
        let (bits, gmi) = candidates[i];
        let r = max_code_rate(ngmi(gmi, bits), fec);
        let net = bits as f64 * r;
        match best {
            Some((_, _, b)) if net <= b + 1e-12 => {}
            _ => best = Some((i, r, net)),
        }
    }
    best.map(|(i, r, _)| (i, r))
}

/// Outcome for one channel in one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelResult {
    pub channel_id: usize,
    pub direction: Direction,
    pub band: BandId,
    pub frequency_hz: f64,
    pub snr: SnrBreakdown,
    /// Cardinality of the chosen constellation, when rates were assigned.
    pub format: Option<usize>,
    pub gmi_2d: f64,
    pub code_rate: f64,
    pub gmi_rate_bps: f64,
    pub decoded_rate_bps: f64,
    pub excluded: bool,
}

impl ChannelResult {
    pub fn from_snr(ch: &Channel, direction: Direction, snr: SnrBreakdown, excluded: bool) -> Self {
        ChannelResult {
            channel_id: ch.id,
            direction,
            band: ch.band,
            frequency_hz: ch.frequency_hz,
            snr,
            format: None,
            gmi_2d: 0.0,
            code_rate: 0.0,
            gmi_rate_bps: 0.0,
            decoded_rate_bps: 0.0,
            excluded,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Band,
    Direction,
    Total,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub gmi_tbps: f64,
    pub decoded_tbps: f64,
    pub channels: usize,
}

impl Throughput {
    fn add(&mut self, r: &ChannelResult) {
        self.gmi_tbps += r.gmi_rate_bps * 1e-12;
        self.decoded_tbps += r.decoded_rate_bps * 1e-12;
        self.channels += 1;
    }
}

/// Aggregated throughputs; band rows sum both directions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThroughputTable {
    pub per_band: BTreeMap<BandId, Throughput>,
    pub per_band_direction: BTreeMap<BandId, BTreeMap<Direction, Throughput>>,
    pub per_direction: BTreeMap<Direction, Throughput>,
    pub total: Throughput,
}

impl ThroughputTable {
    pub fn rows(&self, grouping: Grouping) -> Vec<(String, Throughput)> {
        match grouping {
            Grouping::Band => self
                .per_band
                .iter()
                .map(|(b, t)| (b.to_string(), *t))
                .collect(),
            Grouping::Direction => self
                .per_direction
                .iter()
                .map(|(d, t)| (d.to_string(), *t))
                .collect(),
            Grouping::Total => vec![("total".to_string(), self.total)],
        }
    }
}

/// Sums rates of non-excluded channels. The fold runs in (channel, direction)
/// order so the result does not depend on the input order.
pub fn aggregate(results: &[ChannelResult]) -> Result<ThroughputTable> {
    let mut seen: HashMap<(usize, Direction), ()> = HashMap::with_capacity(results.len());
    let mut freq_of: HashMap<usize, f64> = HashMap::new();
    for r in results {
        if seen.insert((r.channel_id, r.direction), ()).is_some() {
            return Err(Error::config(
                "results",
                format!("channel {} {} appears twice", r.channel_id, r.direction),
            ));
        }
        if let Some(f) = freq_of.insert(r.channel_id, r.frequency_hz) {
            if f != r.frequency_hz {
                return Err(Error::config(
                    "results",
                    format!("channel {} has inconsistent frequencies", r.channel_id),
                ));
            }
        }
    }

    let mut sorted: Vec<&ChannelResult> = results.iter().filter(|r| !r.excluded).collect();
    sorted.sort_by_key(|r| (r.channel_id, r.direction));

    let mut table = ThroughputTable::default();
    for r in sorted {
        table.per_band.entry(r.band).or_default().add(r);
        table
            .per_band_direction
            .entry(r.band)
            .or_default()
            .entry(r.direction)
            .or_default()
            .add(r);
        table.per_direction.entry(r.direction).or_default().add(r);
        table.total.add(r);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn code_rate_examples() {
        let fec = FecModel::default();
        assert!((max_code_rate(1.0, &fec) - 0.95).abs() < 1e-12);
        assert!((max_code_rate(0.90, &fec) - 0.88).abs() < 1e-12);
        assert_eq!(max_code_rate(fec.min_rate + fec.ngmi_gap - 1e-6, &fec), 0.0);
        assert!((max_code_rate(fec.min_rate + fec.ngmi_gap, &fec) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ngmi_examples() {
        assert_eq!(ngmi(4.0, 4), 1.0);
        assert_eq!(ngmi(0.0, 4), 0.0);
        assert!((ngmi(8.8, 10) - 0.88).abs() < 1e-12);
    }

    #[test]
    fn rate_formulas() {
        assert!((gmi_data_rate(32e9, 5.5, 0.04) - 337.92e9).abs() < 1.0);
        assert_eq!(gmi_data_rate(32e9, 0.0, 0.04), 0.0);
        let ratio = gmi_data_rate(32e9, 5.5, 0.0) / gmi_data_rate(32e9, 5.5, 0.04);
        assert!((ratio - 1.0 / 0.96).abs() < 1e-12);

        assert!((decoded_data_rate(32e9, 10, 0.88, 0.04) - 540.672e9).abs() < 1.0);
        assert_eq!(decoded_data_rate(32e9, 10, 0.0, 0.04), 0.0);
        let identity = decoded_data_rate(32e9, 8, 0.75, 0.04) - gmi_data_rate(32e9, 6.0, 0.04);
        assert!(identity.abs() < 1e-3);
    }

    #[test]
    fn selection_prefers_smaller_format_on_tie() {
        let fec = FecModel::default();
        // 256-ary at R = 0.6 and 64-ary at R = 0.8 both carry 4.8 bits
        let cands = [(8, 8.0 * 0.62), (6, 6.0 * 0.82)];
        let (i, r) = select_by_decoded_rate(&cands, &fec).unwrap();
        assert_eq!(cands[i].0, 6);
        assert!((r - 0.8).abs() < 1e-12);
        assert!(select_by_decoded_rate(&[], &fec).is_none());
    }

    fn result(id: usize, dir: Direction, band: BandId, gmi: f64, dec: f64, excluded: bool) -> ChannelResult {
        ChannelResult {
            channel_id: id,
            direction: dir,
            band,
            frequency_hz: 1e14 + id as f64,
            snr: SnrBreakdown::from_terms(20.0, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY),
            format: Some(64),
            gmi_2d: 0.0,
            code_rate: 0.0,
            gmi_rate_bps: gmi,
            decoded_rate_bps: dec,
            excluded,
        }
    }

    #[test]
    fn aggregate_examples() {
        let empty = aggregate(&[]).unwrap();
        assert_eq!(empty.total, Throughput::default());

        let rs = vec![
            result(0, Direction::Forward, BandId::C, 100e9, 90e9, false),
            result(1, Direction::Forward, BandId::C, 50e9, 45e9, false),
            result(2, Direction::Forward, BandId::C, 70e9, 60e9, true),
        ];
        let t = aggregate(&rs).unwrap();
        assert!((t.total.gmi_tbps - 0.150).abs() < 1e-12);
        assert_eq!(t.total.channels, 2);
        assert_eq!(t.rows(Grouping::Band).len(), 1);
        assert_eq!(t.rows(Grouping::Direction)[0].0, "FW");
    }

    #[test]
    fn aggregate_rejects_mixed_results() {
        let rs = vec![
            result(0, Direction::Forward, BandId::C, 1.0, 1.0, false),
            result(0, Direction::Forward, BandId::C, 1.0, 1.0, false),
        ];
        assert!(aggregate(&rs).is_err());
        let mut other = result(0, Direction::Backward, BandId::C, 1.0, 1.0, false);
        other.frequency_hz += 5.0;
        assert!(aggregate(&[result(0, Direction::Forward, BandId::C, 1.0, 1.0, false), other]).is_err());
    }

    proptest! {
        #[test]
        fn code_rate_monotone_and_fine_grained(a in 0.0f64..1.0, d in 0.0f64..0.01) {
            let fec = FecModel::default();
            let r0 = max_code_rate(a, &fec);
            let r1 = max_code_rate((a + d).min(1.0), &fec);
            prop_assert!(r1 >= r0);
            if r0 > 0.0 {
                prop_assert!(r1 - r0 <= fec.rate_granularity + 1e-9);
                prop_assert!(r0 + fec.ngmi_gap <= a + 1e-9);
            }
        }

        #[test]
        fn decoded_never_exceeds_gmi(bits in prop::sample::select(vec![2u32, 4, 6, 8, 10]), frac in 0.0f64..1.0, gap in 0.0f64..0.1) {
            let fec = FecModel::default().with_gap(gap);
            let gmi = frac * bits as f64;
            let r = max_code_rate(ngmi(gmi, bits), &fec);
            prop_assert!(decoded_data_rate(32e9, bits, r, 0.04) <= gmi_data_rate(32e9, gmi, 0.04) + 1e-3);
        }

        #[test]
        fn aggregate_parts_sum_to_total(rates in prop::collection::vec((1e9f64..5e11, 0.5f64..1.0, any::<bool>(), 0usize..5), 0..60)) {
            let rs: Vec<ChannelResult> = rates.iter().enumerate().map(|(i, &(g, f, dir, b))| {
                let d = if dir { Direction::Forward } else { Direction::Backward };
                result(i, d, BandId::ALL[b], g, g * f, false)
            }).collect();
            let t = aggregate(&rs).unwrap();
            let band_sum: f64 = t.per_band.values().map(|x| x.gmi_tbps).sum();
            let dir_sum: f64 = t.per_direction.values().map(|x| x.gmi_tbps).sum();
            let scale = t.total.gmi_tbps.max(1e-12);
            prop_assert!(((band_sum - t.total.gmi_tbps) / scale).abs() < 1e-6);
            prop_assert!(((dir_sum - t.total.gmi_tbps) / scale).abs() < 1e-6);

            let mut rev = rs.clone();
            rev.reverse();
            prop_assert_eq!(aggregate(&rev).unwrap(), t);
        }
    }
}
