//! Per-channel, per-direction SNR budget.
//!
//! Every channel's SNR is built from independent Gaussian-equivalent terms
//! that add as inverse linear SNRs:
//!
//! ```text
//! 1/SNR_total = 1/SNR_trx + 1/SNR_ase + 1/SNR_rb + 1/SNR_leak + 1/SNR_nli
//! ```
//!
//! The transceiver term is a per-band back-to-back value (usually fitted with
//! [`calibrate_trx_snr`]). The preamplifier ahead of each receiver is the only
//! ASE source. Backscatter and circulator leakage both originate from the
//! counter-direction transmitter that sits at the receiving end, so both are
//! referenced to the same fibre-output plane as the signal; the extra passive
//! loss (coupler split, circulator insertion) only matters for ASE.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{rb_interference_power, FiberProfile};
use crate::plan::{BandId, BandSpec, Channel, ChannelPlan, Direction};
use crate::rate::ChannelResult;
use crate::units::{combine_snr_db, db_to_lin, dbm_to_watt, lin_to_db, photon_energy};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainMode {
    #[default]
    FixedOutputPower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplifierSpec {
    pub noise_figure_db: f64,
    pub max_output_power_dbm: f64,
    #[serde(default)]
    pub gain_mode: GainMode,
}

impl AmplifierSpec {
    pub fn warnings(&self, band: BandId) -> Vec<String> {
        let mut out = Vec::new();
        if self.noise_figure_db < 3.0 {
            out.push(format!(
                "amplifier {band}: noise figure {} dB is below the 3 dB high-gain limit",
                self.noise_figure_db
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    #[default]
    Bidi,
    Unidi,
}

impl fmt::Display for LinkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkMode::Bidi => "bidi",
            LinkMode::Unidi => "unidi",
        })
    }
}

/// SNR contributions of one channel in one direction, all in dB. A term that
/// is absent is `+inf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrBreakdown {
    pub snr_trx: f64,
    pub snr_ase: f64,
    pub snr_rb: f64,
    pub snr_leak: f64,
    pub snr_nli: f64,
    pub snr_total: f64,
}

impl SnrBreakdown {
    pub fn from_terms(snr_trx: f64, snr_ase: f64, snr_rb: f64, snr_leak: f64, snr_nli: f64) -> Self {
        SnrBreakdown {
            snr_trx,
            snr_ase,
            snr_rb,
            snr_leak,
            snr_nli,
            snr_total: combine_snr_db([snr_trx, snr_ase, snr_rb, snr_leak, snr_nli]),
        }
    }

    pub fn components(&self) -> [f64; 5] {
        [self.snr_trx, self.snr_ase, self.snr_rb, self.snr_leak, self.snr_nli]
    }

    /// Same breakdown with the counter-direction terms removed.
    pub fn without_bidi_terms(&self) -> Self {
        Self::from_terms(self.snr_trx, self.snr_ase, f64::INFINITY, f64::INFINITY, self.snr_nli)
    }
}

/// Extra per-channel SNR term (dB) for nonlinear what-ifs; `+inf` means none.
pub type NliHook = Arc<dyn Fn(&Channel, Direction) -> f64 + Send + Sync>;

/// Both directions of one span: plan, fibre, amplifiers and transceivers.
#[derive(Clone)]
pub struct LinkScenario {
    pub plan: ChannelPlan,
    pub fiber: FiberProfile,
    pub amplifiers: BTreeMap<BandId, AmplifierSpec>,
    pub trx_snr_db: BTreeMap<BandId, f64>,
    pub circulator_directivity_db: f64,
    pub extras_loss_db: f64,
    /// ASE noise bandwidth; `None` uses the symbol rate.
    pub noise_bandwidth_hz: Option<f64>,
    pub nli_hook: Option<NliHook>,
}

impl fmt::Debug for LinkScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinkScenario")
            .field("channels", &self.plan.len())
            .field("span_km", &self.fiber.length_km)
            .field("trx_snr_db", &self.trx_snr_db)
            .field("circulator_directivity_db", &self.circulator_directivity_db)
            .field("extras_loss_db", &self.extras_loss_db)
            .finish_non_exhaustive()
    }
}

/// One direction of a [`LinkScenario`].
#[derive(Clone, Copy, Debug)]
pub struct DirectionalScenario<'a> {
    pub link: &'a LinkScenario,
    pub direction: Direction,
}

/// Flat per-channel launch power, dBm.
pub fn per_channel_launch_power(band: &BandSpec, direction: Direction) -> f64 {
    band.launch_power_dbm(direction) - lin_to_db(band.channel_count.max(1) as f64)
}

/// Receiver-preamplifier ASE limited SNR in dB for high gain: the noise
/// referred to the amplifier input is `h·ν·NF·B`.
pub fn ase_snr(
    rx_power_dbm: f64,
    noise_figure_db: f64,
    photon_energy_j: f64,
    noise_bandwidth_hz: f64,
) -> Result<f64> {
    if !(noise_bandwidth_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise bandwidth {noise_bandwidth_hz} Hz"
        )));
    }
    let noise_w = photon_energy_j * db_to_lin(noise_figure_db) * noise_bandwidth_hz;
    Ok(lin_to_db(dbm_to_watt(rx_power_dbm) / noise_w))
}

/// Power leaking from the co-located transmitter into the receiver port.
pub fn leakage_interference(tx_power_dbm: f64, directivity_db: f64) -> f64 {
    tx_power_dbm - directivity_db
}

impl LinkScenario {
    pub fn direction(&self, direction: Direction) -> DirectionalScenario<'_> {
        DirectionalScenario {
            link: self,
            direction,
        }
    }

    pub fn noise_bandwidth(&self) -> f64 {
        self.noise_bandwidth_hz.unwrap_or(self.plan.symbol_rate_baud)
    }

    /// Checks every band has an amplifier and a transceiver term.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for band in &self.plan.bands {
            if !self.amplifiers.contains_key(&band.name) {
                problems.push(format!("amplifiers.{}: missing", band.name));
            }
            if !self.trx_snr_db.contains_key(&band.name) {
                problems.push(format!("trx_snr.{}: missing", band.name));
            }
        }
        if !(self.circulator_directivity_db > 0.0) {
            problems.push("circulator_directivity_db: must be > 0".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; "), "incomplete link configuration"))
        }
    }

    /// SNR breakdown of a channel regardless of its exclusion flag.
    pub fn breakdown(
        &self,
        channel_id: usize,
        direction: Direction,
        mode: LinkMode,
    ) -> Result<SnrBreakdown> {
        let ch = self.plan.channel(channel_id)?;
        let band = &self.plan.bands[ch.band_index];
        let amp = self
            .amplifiers
            .get(&band.name)
            .ok_or_else(|| Error::config(format!("amplifiers.{}", band.name), "missing"))?;
        let snr_trx = *self
            .trx_snr_db
            .get(&band.name)
            .ok_or_else(|| Error::config(format!("trx_snr.{}", band.name), "missing"))?;

        let wavelength = ch.wavelength_nm();
        let launch = per_channel_launch_power(band, direction);
        let fibre_out = launch - self.fiber.link_loss(wavelength)?;
        let preamp_in = fibre_out - self.extras_loss_db;
        let snr_ase = ase_snr(
            preamp_in,
            amp.noise_figure_db,
            photon_energy(ch.frequency_hz),
            self.noise_bandwidth(),
        )?;

        let (snr_rb, snr_leak) = match mode {
            LinkMode::Unidi => (f64::INFINITY, f64::INFINITY),
            LinkMode::Bidi => {
                let counter = per_channel_launch_power(band, direction.opposite());
                let rb = rb_interference_power(
                    counter,
                    self.fiber.rb_coefficient(band.name),
                    self.fiber.attenuation_at(wavelength)?,
                    self.fiber.length_km,
                )?;
                let leak = leakage_interference(counter, self.circulator_directivity_db);
                (fibre_out - rb, fibre_out - leak)
            }
        };
        let snr_nli = self
            .nli_hook
            .as_ref()
            .map_or(f64::INFINITY, |hook| hook(ch, direction));

        Ok(SnrBreakdown::from_terms(snr_trx, snr_ase, snr_rb, snr_leak, snr_nli))
    }

    pub fn evaluate_channel(
        &self,
        channel_id: usize,
        direction: Direction,
        mode: LinkMode,
    ) -> Result<SnrBreakdown> {
        if self.plan.is_excluded(channel_id) {
            return Err(Error::ExcludedChannel(channel_id));
        }
        self.breakdown(channel_id, direction, mode)
    }

    /// Uni-directional minus bi-directional total SNR, dB.
    pub fn bidi_penalty(&self, channel_id: usize, direction: Direction) -> Result<f64> {
        let bidi = self.evaluate_channel(channel_id, direction, LinkMode::Bidi)?;
        let unidi = bidi.without_bidi_terms();
        Ok((unidi.snr_total - bidi.snr_total).max(0.0))
    }

    /// One result per (channel, direction), channel-major. Uni-directional
    /// mode only carries the forward direction. Excluded channels are
    /// evaluated and flagged.
    pub fn evaluate(&self, mode: LinkMode) -> Result<Vec<ChannelResult>> {
        let directions: &[Direction] = match mode {
            LinkMode::Bidi => &Direction::BOTH,
            LinkMode::Unidi => &[Direction::Forward],
        };
        let jobs: Vec<(usize, Direction)> = (0..self.plan.len())
            .flat_map(|id| directions.iter().map(move |&d| (id, d)))
            .collect();
        jobs.par_iter()
            .map(|&(id, direction)| {
                let ch = self.plan.channels()[id];
                let snr = self.breakdown(id, direction, mode)?;
                Ok(ChannelResult::from_snr(&ch, direction, snr, self.plan.is_excluded(id)))
            })
            .collect()
    }
}

/// Evaluates a forward/backward pair that must describe the same plan.
pub fn evaluate_scenario(
    forward: DirectionalScenario<'_>,
    backward: DirectionalScenario<'_>,
    mode: LinkMode,
) -> Result<Vec<ChannelResult>> {
    if forward.direction != Direction::Forward || backward.direction != Direction::Backward {
        return Err(Error::config("direction", "expected a FW and a BW scenario"));
    }
    if !std::ptr::eq(forward.link, backward.link) && forward.link.plan != backward.link.plan {
        return Err(Error::config("plan", "forward and backward plans differ"));
    }
    forward.link.evaluate(mode)
}

/// Mean of the per-channel bi-directional penalty over included channels in
/// both directions, and its maximum.
pub fn penalty_stats(link: &LinkScenario) -> Result<(f64, f64)> {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut n = 0usize;
    for ch in link.plan.channels() {
        if link.plan.is_excluded(ch.id) {
            continue;
        }
        for d in Direction::BOTH {
            let p = link.bidi_penalty(ch.id, d)?;
            sum += p;
            max = max.max(p);
            n += 1;
        }
    }
    Ok((if n == 0 { 0.0 } else { sum / n as f64 }, max))
}

/// Mean total SNR (dB average) of a band's included channels over the given
/// directions.
pub fn band_mean_snr(
    link: &LinkScenario,
    band: BandId,
    directions: &[Direction],
    mode: LinkMode,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ch in link.plan.band_channels(band) {
        if link.plan.is_excluded(ch.id) {
            continue;
        }
        for &d in directions {
            sum += link.breakdown(ch.id, d, mode)?.snr_total;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::config(format!("plan.bands.{band}"), "no included channels"));
    }
    Ok(sum / n as f64)
}

/// Search range for the transceiver term, dB.
pub const TRX_SEARCH_DB: (f64, f64) = (-20.0, 80.0);
/// Relative agreement required between the modelled and target metric.
pub const CALIBRATION_REL_TOL: f64 = 0.005;

/// Finds the transceiver SNR of one band that makes a metric increasing in
/// that SNR hit `target`. `metric(f64::INFINITY)` must be defined (the
/// transceiver-free limit); the target is infeasible when that limit does not
/// exceed it.
pub fn calibrate_band<F>(band: BandId, target: f64, mut metric: F, limiting_term: &str) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let ceiling = metric(f64::INFINITY)?;
    if !(ceiling > target) {
        return Err(Error::CalibrationInfeasible {
            band: band.to_string(),
            limiting_term: limiting_term.to_string(),
        });
    }
    let (mut lo, mut hi) = TRX_SEARCH_DB;
    let at_lo = metric(lo)?;
    if at_lo > target {
        return Err(Error::CalibrationInfeasible {
            band: band.to_string(),
            limiting_term: "trx (target below search range)".to_string(),
        });
    }
    if metric(hi)? < target {
        // Reachable only as trx -> inf.
        return Err(Error::CalibrationInfeasible {
            band: band.to_string(),
            limiting_term: limiting_term.to_string(),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if metric(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    // `hi` is the smallest value reaching the target; for a metric with
    // jumps pick whichever side lands closer.
    let (m_lo, m_hi) = (metric(lo)?, metric(hi)?);
    Ok(if (m_lo - target).abs() < (m_hi - target).abs() {
        lo
    } else {
        hi
    })
}

/// Name of the smallest non-transceiver term averaged over a band, used to
/// explain an infeasible target.
pub fn limiting_term(link: &LinkScenario, band: BandId, mode: LinkMode) -> Result<String> {
    let mut sums = [0.0f64; 4];
    for ch in link.plan.band_channels(band) {
        for d in Direction::BOTH {
            let b = link.breakdown(ch.id, d, mode)?;
            for (s, v) in sums.iter_mut().zip([b.snr_ase, b.snr_rb, b.snr_leak, b.snr_nli]) {
                *s += 1.0 / db_to_lin(v);
            }
        }
    }
    let names = ["ase", "rb", "leak", "nli"];
    let worst = sums
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| names[i])
        .unwrap_or("ase");
    Ok(worst.to_string())
}

/// Fits per-band transceiver SNRs so that each band's mean total SNR (both
/// directions) matches its target.
pub fn calibrate_trx_snr(
    link: &LinkScenario,
    targets: &BTreeMap<BandId, f64>,
    mode: LinkMode,
) -> Result<BTreeMap<BandId, f64>> {
    let directions: &[Direction] = match mode {
        LinkMode::Bidi => &Direction::BOTH,
        LinkMode::Unidi => &[Direction::Forward],
    };
    let mut fitted = link.trx_snr_db.clone();
    for (&band, &target) in targets {
        let mut trial = link.clone();
        let term = limiting_term(link, band, mode)?;
        let value = calibrate_band(
            band,
            target,
            |trx| {
                trial.trx_snr_db.insert(band, trx);
                band_mean_snr(&trial, band, directions, mode)
            },
            &term,
        )?;
        fitted.insert(band, value);
    }
    Ok(fitted)
}
