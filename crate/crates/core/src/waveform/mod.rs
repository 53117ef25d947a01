//! Single-channel dual-polarisation waveform simulation with a pilot-aided
//! coherent receiver. Frames are periodic, so every filter is circular.

mod dsp;
mod pulse;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{gmi_monte_carlo, Constellation};
use crate::error::{Error, Result};
use crate::fiber::{gas_loss_db_at, GasLine};
use crate::seed::{mix, rng, Rng};
use crate::units::db_to_lin;

pub use dsp::{
    apply_frequency_offset, carrier_phase_recovery, data_aided_snr, estimate_frequency_offset, gla_compensate,
    gla_lines_overlap, mimo_equalize, CprOutput, EqualizerOutput,
};
pub use pulse::{raised_cosine, rrc_taps};

/// Two polarisation tributaries.
pub type DualPol = [Vec<Complex64>; 2];

pub const MAX_MIMO_TAPS: usize = 163;
pub const MAX_CPR_WINDOW: usize = 46;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PulseShaping {
    /// Exact root-raised-cosine spectrum applied over the whole frame.
    #[default]
    Spectral,
    /// Truncated FIR taps of `rrc_span` symbols.
    Fir,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub samples_per_symbol: usize,
    pub symbol_rate_baud: f64,
    pub rrc_rolloff: f64,
    pub rrc_span: usize,
    pub pulse_shaping: PulseShaping,
    pub pilot_ratio: f64,
    pub mimo_taps: usize,
    pub mimo_step: f64,
    pub cpr_window: usize,
    pub gla_enabled: bool,
    /// Regularisation of the gas-line inverse; `None` uses 1/SNR.
    pub gla_regularization: Option<f64>,
    pub n_symbols: usize,
    /// Pilots per block in the frequency-offset estimator.
    pub fo_block_pilots: usize,
    /// Symbols per entry of the equaliser's MSE trace.
    pub mse_block: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            samples_per_symbol: 2,
            symbol_rate_baud: 32e9,
            rrc_rolloff: 0.01,
            rrc_span: 256,
            pulse_shaping: PulseShaping::Spectral,
            pilot_ratio: 0.04,
            mimo_taps: 31,
            mimo_step: 1e-3,
            cpr_window: 46,
            gla_enabled: false,
            gla_regularization: None,
            n_symbols: 1 << 16,
            fo_block_pilots: 8,
            mse_block: 1024,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.samples_per_symbol < 2 {
            errs.push("samples_per_symbol must be >= 2".to_string());
        }
        if !(self.symbol_rate_baud > 0.0) {
            errs.push("symbol_rate_baud must be > 0".into());
        }
        if !(self.rrc_rolloff > 0.0 && self.rrc_rolloff <= 1.0) {
            errs.push("rrc_rolloff must be in (0, 1]".into());
        }
        if !(self.pilot_ratio > 0.0 && self.pilot_ratio < 1.0) {
            errs.push("pilot_ratio must be in (0, 1)".into());
        }
        if self.mimo_taps == 0 || self.mimo_taps % 2 == 0 || self.mimo_taps > MAX_MIMO_TAPS {
            errs.push(format!("mimo_taps must be odd and in 1..={MAX_MIMO_TAPS}"));
        }
        if !(self.mimo_step >= 0.0 && self.mimo_step.is_finite()) {
            errs.push("mimo_step must be finite and >= 0".into());
        }
        if self.cpr_window == 0 || self.cpr_window > MAX_CPR_WINDOW {
            errs.push(format!("cpr_window must be in 1..={MAX_CPR_WINDOW}"));
        }
        if let Some(r) = self.gla_regularization {
            if !(r >= 0.0) {
                errs.push("gla_regularization must be >= 0".into());
            }
        }
        if self.pilot_ratio > 0.0 && (self.n_symbols as f64) < 1.0 / self.pilot_ratio {
            errs.push("n_symbols must be at least 1/pilot_ratio".into());
        }
        if self.fo_block_pilots == 0 || self.mse_block == 0 {
            errs.push("fo_block_pilots and mse_block must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn pilot_stride(&self) -> usize {
        (1.0 / self.pilot_ratio).round().max(1.0) as usize
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.symbol_rate_baud * self.samples_per_symbol as f64
    }

    fn fir_span(&self) -> Option<usize> {
        match self.pulse_shaping {
            PulseShaping::Spectral => None,
            PulseShaping::Fir => Some(self.rrc_span),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ImpairmentSpec {
    /// In-band SNR of the added white noise; `None` disables it.
    pub snr_awgn_db: Option<f64>,
    pub laser_linewidth_hz: f64,
    pub polarization_rotation_rad: f64,
    pub frequency_offset_hz: f64,
    /// Absorption lines relative to the channel centre.
    pub gla_lines: Vec<GasLine>,
}

impl ImpairmentSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Some(s) = self.snr_awgn_db {
            if !s.is_finite() {
                errs.push("snr_awgn_db must be finite".to_string());
            }
        }
        if !(self.laser_linewidth_hz >= 0.0 && self.laser_linewidth_hz.is_finite()) {
            errs.push("laser_linewidth_hz must be finite and >= 0".into());
        }
        if !self.polarization_rotation_rad.is_finite() || !self.frequency_offset_hz.is_finite() {
            errs.push("rotation and frequency offset must be finite".into());
        }
        for l in &self.gla_lines {
            if GasLine::new(l.center_hz, l.fwhm_hz, l.peak_loss_db).is_err() {
                errs.push(format!("invalid gas line {l:?}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Per-sample variance of the Wiener phase increments.
    pub fn phase_increment_variance(&self, sample_rate_hz: f64) -> f64 {
        2.0 * std::f64::consts::PI * self.laser_linewidth_hz / sample_rate_hz
    }
}

/// Symbol frame for both polarisations with pilots at a fixed stride.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub symbols: DualPol,
    /// Point index of each payload symbol; `None` at pilot positions.
    pub payload: [Vec<Option<usize>>; 2],
    pub pilot_positions: Vec<usize>,
    pub pilot_stride: usize,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.symbols[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols[0].is_empty()
    }

    pub fn is_pilot(&self, n: usize) -> bool {
        n % self.pilot_stride == 0
    }
}

const PILOT_SEED: u64 = 0x5049_4c4f_5453;

/// Pilots are a fixed QPSK sequence (independent of `seed`) at every
/// `round(1/pilot_ratio)`-th symbol; payload is uniform over `c`.
pub fn generate_frame(c: &Constellation, cfg: &DspConfig, seed: u64) -> Result<Frame> {
    cfg.validate()?;
    let n = cfg.n_symbols;
    let stride = cfg.pilot_stride();
    let pilot_positions: Vec<usize> = (0..n).step_by(stride).collect();
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let mut symbols: DualPol = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut payload: [Vec<Option<usize>>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for pol in 0..2 {
        let mut pilot_rng: Rng = rng(mix(PILOT_SEED, pol as u64));
        let mut data_rng: Rng = rng(mix(seed, pol as u64));
        for i in 0..n {
            if i % stride == 0 {
                let q: u8 = pilot_rng.random_range(0..4);
                let re = if q & 1 == 0 { a } else { -a };
                let im = if q & 2 == 0 { a } else { -a };
                symbols[pol].push(Complex64::new(re, im));
                payload[pol].push(None);
            } else {
                let k = data_rng.random_range(0..c.cardinality());
                symbols[pol].push(c.points()[k]);
                payload[pol].push(Some(k));
            }
        }
    }
    Ok(Frame {
        symbols,
        payload,
        pilot_positions,
        pilot_stride: stride,
    })
}

/// Pulse-shapes a frame to `samples_per_symbol`; each polarisation carries
/// mean sample power 1/sps.
pub fn transmit(frame: &Frame, cfg: &DspConfig) -> Result<DualPol> {
    let sps = cfg.samples_per_symbol;
    let resp = pulse::shaping_response(frame.len() * sps, sps, cfg.rrc_rolloff, cfg.fir_span())?;
    Ok([
        pulse::shape(&frame.symbols[0], sps, &resp),
        pulse::shape(&frame.symbols[1], sps, &resp),
    ])
}

/// Receiver matched filter, still at `samples_per_symbol`.
pub fn matched_filter(x: &DualPol, cfg: &DspConfig) -> Result<DualPol> {
    let n = x[0].len();
    let resp = pulse::shaping_response(n, cfg.samples_per_symbol, cfg.rrc_rolloff, cfg.fir_span())?;
    let mut out = x.clone();
    for pol in out.iter_mut() {
        pulse::filter_freq(pol, &resp);
    }
    Ok(out)
}

/// Gas-line magnitude response, polarisation rotation, frequency offset,
/// Wiener phase noise and white noise, in that order. Disabled stages are
/// skipped entirely, so an all-off spec returns the input unchanged.
pub fn apply_impairments(x: &DualPol, spec: &ImpairmentSpec, cfg: &DspConfig, seed: u64) -> Result<DualPol> {
    spec.validate()?;
    let fs = cfg.sample_rate_hz();
    let n = x[0].len();
    let mut y = x.clone();

    if !spec.gla_lines.is_empty() {
        let resp: Vec<Complex64> = (0..n)
            .map(|k| {
                let f = pulse::bin_freq(k, n, fs);
                Complex64::new(db_to_lin(-gas_loss_db_at(&spec.gla_lines, f) / 2.0), 0.0)
            })
            .collect();
        for pol in y.iter_mut() {
            pulse::filter_freq(pol, &resp);
        }
    }

    if spec.polarization_rotation_rad != 0.0 {
        let (s, c) = spec.polarization_rotation_rad.sin_cos();
        let (a, b) = (&y[0], &y[1]);
        let rotated: DualPol = [
            a.iter().zip(b).map(|(p, q)| p * c - q * s).collect(),
            a.iter().zip(b).map(|(p, q)| p * s + q * c).collect(),
        ];
        y = rotated;
    }

    if spec.frequency_offset_hz != 0.0 {
        apply_frequency_offset(&mut y, spec.frequency_offset_hz, fs);
    }

    if spec.laser_linewidth_hz > 0.0 {
        let sd = spec.phase_increment_variance(fs).sqrt();
        let mut r: Rng = rng(mix(seed, 0x5048));
        let mut phase = 0.0f64;
        for m in 0..n {
            let d: f64 = r.sample(StandardNormal);
            phase += sd * d;
            let rot = Complex64::from_polar(1.0, phase);
            y[0][m] *= rot;
            y[1][m] *= rot;
        }
    }

    if let Some(snr_db) = spec.snr_awgn_db {
        let p_sig = (y[0].iter().chain(&y[1]).map(|v| v.norm_sqr()).sum::<f64>()) / (2 * n) as f64;
        // noise referenced to the symbol-rate bandwidth: σ² = P·sps/SNR per complex sample
        let var = p_sig * cfg.samples_per_symbol as f64 / db_to_lin(snr_db);
        let sd = (var / 2.0).sqrt();
        let mut r: Rng = rng(mix(seed, 0x4157));
        for pol in y.iter_mut() {
            for v in pol.iter_mut() {
                let a: f64 = r.sample(StandardNormal);
                let b: f64 = r.sample(StandardNormal);
                *v += Complex64::new(a * sd, b * sd);
            }
        }
    }
    Ok(y)
}

/// Takes every `sps`-th sample.
pub fn symbol_instants(x: &DualPol, sps: usize) -> DualPol {
    [
        x[0].iter().step_by(sps).copied().collect(),
        x[1].iter().step_by(sps).copied().collect(),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub seed: u64,
    pub diverged: bool,
    pub frequency_offset_estimate_hz: f64,
    /// Data-aided SNR after matched filtering and offset removal.
    pub snr_pre_equalizer_db: f64,
    pub snr_post_equalizer_db: f64,
    /// Final SNR after carrier phase recovery.
    pub snr_db: f64,
    pub mse_trace: Vec<f64>,
}

/// Full transmit-impair-receive chain for one seed. Equaliser divergence is
/// reported in the trace rather than as an error.
pub fn run_trace(cfg: &DspConfig, spec: &ImpairmentSpec, c: &Constellation, seed: u64) -> Result<TraceReport> {
    cfg.validate()?;
    let frame = generate_frame(c, cfg, mix(seed, 1))?;
    let tx = transmit(&frame, cfg)?;
    let mut rx = apply_impairments(&tx, spec, cfg, mix(seed, 2))?;
    if cfg.gla_enabled {
        let lambda = cfg
            .gla_regularization
            .unwrap_or_else(|| spec.snr_awgn_db.map(|s| db_to_lin(-s)).unwrap_or(1e-3));
        gla_compensate(&mut rx, &spec.gla_lines, cfg, lambda);
    }
    let mut mf = matched_filter(&rx, cfg)?;
    let fo = estimate_frequency_offset(&symbol_instants(&mf, cfg.samples_per_symbol), &frame, cfg);
    if fo != 0.0 {
        apply_frequency_offset(&mut mf, -fo, cfg.sample_rate_hz());
    }
    let snr_pre = data_aided_snr(&symbol_instants(&mf, cfg.samples_per_symbol), &frame);
    let eq = match mimo_equalize(&mf, &frame, c, cfg) {
        Ok(eq) => eq,
        Err(Error::EqualizerDiverged { .. }) => {
            return Ok(TraceReport {
                seed,
                diverged: true,
                frequency_offset_estimate_hz: fo,
                snr_pre_equalizer_db: snr_pre,
                snr_post_equalizer_db: f64::NAN,
                snr_db: f64::NAN,
                mse_trace: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let snr_post_eq = data_aided_snr(&eq.symbols, &frame);
    let cpr = carrier_phase_recovery(&eq.symbols, &frame, cfg.cpr_window)?;
    let snr = data_aided_snr(&cpr.symbols, &frame);
    Ok(TraceReport {
        seed,
        diverged: false,
        frequency_offset_estimate_hz: fo,
        snr_pre_equalizer_db: snr_pre,
        snr_post_equalizer_db: snr_post_eq,
        snr_db: snr,
        mse_trace: eq.mse_trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelMeasurement {
    /// Mean SNR of the best three valid traces.
    pub snr_db: f64,
    pub gmi: f64,
    pub traces: Vec<TraceReport>,
    /// Indices of the traces that entered the average.
    pub used: Vec<usize>,
}

pub const GMI_SAMPLES: usize = 100_000;

/// Runs `n_traces` chains with seeds `seed + t`, averages the SNR of the
/// best three non-diverged traces and reports GMI at that SNR.
pub fn measure_channel(
    cfg: &DspConfig,
    spec: &ImpairmentSpec,
    c: &Constellation,
    n_traces: usize,
    seed: u64,
) -> Result<ChannelMeasurement> {
    if n_traces < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 traces, got {n_traces}")));
    }
    cfg.validate()?;
    spec.validate()?;
    let traces: Vec<TraceReport> = (0..n_traces)
        .into_par_iter()
        .map(|t| run_trace(cfg, spec, c, seed.wrapping_add(t as u64)))
        .collect::<Result<_>>()?;
    let mut valid: Vec<usize> = (0..n_traces)
        .filter(|&t| !traces[t].diverged && traces[t].snr_db.is_finite())
        .collect();
    if valid.len() < 3 {
        return Err(Error::MeasurementFailed {
            valid: valid.len(),
            total: n_traces,
        });
    }
    valid.sort_by(|&a, &b| traces[b].snr_db.total_cmp(&traces[a].snr_db).then(a.cmp(&b)));
    valid.truncate(3);
    let snr_db = valid.iter().map(|&t| traces[t].snr_db).sum::<f64>() / 3.0;
    let gmi = gmi_monte_carlo(c, snr_db.min(80.0), GMI_SAMPLES, mix(seed, 0x474d49))?.gmi;
    Ok(ChannelMeasurement {
        snr_db,
        gmi,
        traces,
        used: valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> DspConfig {
        DspConfig {
            n_symbols: 1 << 13,
            ..Default::default()
        }
    }

    #[test]
    fn frame_pilot_layout() {
        let c = Constellation::square_qam(4).unwrap();
        let cfg = DspConfig {
            n_symbols: 1000,
            ..Default::default()
        };
        let f = generate_frame(&c, &cfg, 3).unwrap();
        assert_eq!(f.pilot_stride, 25);
        assert_eq!(f.pilot_positions.len(), 40);
        assert_eq!(f, generate_frame(&c, &cfg, 3).unwrap());
        let g = generate_frame(&c, &cfg, 4).unwrap();
        for &p in &f.pilot_positions {
            assert_eq!(f.symbols[0][p], g.symbols[0][p]);
            assert!((f.symbols[0][p].norm() - 1.0).abs() < 1e-12);
        }
        assert_ne!(f.symbols, g.symbols);
    }

    #[test]
    fn rejects_short_frames() {
        let c = Constellation::square_qam(4).unwrap();
        let cfg = DspConfig {
            n_symbols: 20,
            ..Default::default()
        };
        assert!(generate_frame(&c, &cfg, 0).is_err());
    }

    #[test]
    fn all_off_impairments_are_identity() {
        let c = Constellation::square_qam(4).unwrap();
        let cfg = small_cfg();
        let tx = transmit(&generate_frame(&c, &cfg, 1).unwrap(), &cfg).unwrap();
        let rx = apply_impairments(&tx, &ImpairmentSpec::default(), &cfg, 9).unwrap();
        assert_eq!(tx, rx);
    }

    #[test]
    fn phase_increment_variance_value() {
        let spec = ImpairmentSpec {
            laser_linewidth_hz: 200e3,
            ..Default::default()
        };
        let v = spec.phase_increment_variance(64e9);
        assert!((v - 1.9635e-5).abs() < 1e-8, "{v}");
    }

    #[test]
    fn clean_chain_is_transparent() {
        let c = Constellation::square_qam(6).unwrap();
        let cfg = small_cfg();
        let t = run_trace(&cfg, &ImpairmentSpec::default(), &c, 5).unwrap();
        assert!(!t.diverged);
        assert!(t.snr_db > 40.0, "{t:?}");
    }

    #[test]
    fn config_validation() {
        let bad = DspConfig {
            mimo_taps: 164,
            cpr_window: 47,
            ..Default::default()
        };
        match bad.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
