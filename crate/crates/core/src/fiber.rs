//! Span model: wavelength-dependent attenuation, Rayleigh backscatter and
//! narrow gas/water absorption lines.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::BandId;
use crate::units::{lin_to_db, wavelength_nm_to_freq, DB_TO_NATURAL};

/// A single Lorentzian absorption line. `peak_loss_db` is the loss over the
/// whole span at line centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasLine {
    pub center_hz: f64,
    pub fwhm_hz: f64,
    pub peak_loss_db: f64,
}

impl GasLine {
    pub fn new(center_hz: f64, fwhm_hz: f64, peak_loss_db: f64) -> Result<Self> {
        if !(fwhm_hz > 0.0) || !(peak_loss_db >= 0.0) || !center_hz.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gas line at {center_hz} Hz: fwhm must be > 0 and peak loss >= 0"
            )));
        }
        Ok(GasLine {
            center_hz,
            fwhm_hz,
            peak_loss_db,
        })
    }

    #[inline]
    pub fn loss_db_at(&self, freq_hz: f64) -> f64 {
        let x = 2.0 * (freq_hz - self.center_hz) / self.fwhm_hz;
        self.peak_loss_db / (1.0 + x * x)
    }

    /// The same line re-expressed relative to a carrier, for baseband use.
    pub fn to_baseband(&self, carrier_hz: f64) -> GasLine {
        GasLine {
            center_hz: self.center_hz - carrier_hz,
            ..*self
        }
    }
}

/// Summed absorption of all lines at one frequency, in dB.
pub fn gas_loss_db_at(lines: &[GasLine], freq_hz: f64) -> f64 {
    lines.iter().map(|l| l.loss_db_at(freq_hz)).sum()
}

/// Absorption (dB, positive = loss) sampled at `n_points` evenly spaced
/// frequencies spanning `bandwidth_hz` around `channel_center_hz`, edges
/// included.
pub fn gas_absorption_response(
    lines: &[GasLine],
    channel_center_hz: f64,
    bandwidth_hz: f64,
    n_points: usize,
) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::InvalidArgument("n_points must be >= 2".into()));
    }
    let step = bandwidth_hz / (n_points - 1) as f64;
    let start = channel_center_hz - bandwidth_hz / 2.0;
    Ok((0..n_points)
        .map(|i| gas_loss_db_at(lines, start + i as f64 * step))
        .collect())
}

/// `∫₀ᴸ exp(-2αz) dz` in km, with `alpha_db_per_km` converted to a natural
/// power attenuation coefficient.
pub fn effective_backscatter_length(alpha_db_per_km: f64, length_km: f64) -> Result<f64> {
    if !(alpha_db_per_km >= 0.0) || !(length_km >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha_db_per_km} dB/km, length = {length_km} km"
        )));
    }
    let two_alpha = 2.0 * alpha_db_per_km * DB_TO_NATURAL;
    if two_alpha * length_km < 1e-12 {
        return Ok(length_km);
    }
    Ok(-(-two_alpha * length_km).exp_m1() / two_alpha)
}

/// Rayleigh-backscattered power of the counter-propagating channel that lands
/// on the receiver at the same wavelength.
pub fn rb_interference_power(
    counter_launch_dbm: f64,
    rb_coefficient_db_per_km: f64,
    alpha_db_per_km: f64,
    length_km: f64,
) -> Result<f64> {
    let l_eff = effective_backscatter_length(alpha_db_per_km, length_km)?;
    if rb_coefficient_db_per_km == f64::NEG_INFINITY || l_eff == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(counter_launch_dbm + rb_coefficient_db_per_km + lin_to_db(l_eff))
}

/// Backscatter coefficients for the fibre under test and a silica reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbCoefficients {
    pub hcf_db_per_km: f64,
    pub smf_db_per_km: f64,
}

/// Which column of the RB table a profile uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RbColumn {
    #[default]
    Hcf,
    Smf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberProfile {
    pub length_km: f64,
    /// `(wavelength nm, attenuation dB/km)`, strictly increasing wavelength.
    attenuation: Vec<(f64, f64)>,
    pub rb_table: BTreeMap<BandId, RbCoefficients>,
    pub rb_column: RbColumn,
    pub gas_lines: Vec<GasLine>,
}

impl FiberProfile {
    pub fn new(
        length_km: f64,
        attenuation: Vec<(f64, f64)>,
        rb_table: BTreeMap<BandId, RbCoefficients>,
        gas_lines: Vec<GasLine>,
    ) -> Result<Self> {
        if !(length_km >= 0.0) {
            return Err(Error::InvalidArgument(format!("span length {length_km} km")));
        }
        if attenuation.len() < 2 {
            return Err(Error::InvalidArgument(
                "attenuation curve needs at least two samples".into(),
            ));
        }
        for w in attenuation.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidArgument(format!(
                    "attenuation wavelengths not strictly increasing at {} nm",
                    w[1].0
                )));
            }
        }
        if let Some(&(wl, a)) = attenuation.iter().find(|(_, a)| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "attenuation {a} dB/km at {wl} nm outside (0, 1)"
            )));
        }
        Ok(FiberProfile {
            length_km,
            attenuation,
            rb_table,
            rb_column: RbColumn::Hcf,
            gas_lines,
        })
    }

    pub fn with_rb_column(mut self, column: RbColumn) -> Self {
        self.rb_column = column;
        self
    }

    pub fn with_length(mut self, length_km: f64) -> Self {
        self.length_km = length_km;
        self
    }

    /// Same profile with every attenuation sample multiplied by `factor`.
    pub fn scaled_attenuation(&self, factor: f64) -> Result<Self> {
        let curve = self.attenuation.iter().map(|&(w, a)| (w, a * factor)).collect();
        let mut out = FiberProfile::new(self.length_km, curve, self.rb_table.clone(), self.gas_lines.clone())?;
        out.rb_column = self.rb_column;
        Ok(out)
    }

    pub fn attenuation_curve(&self) -> &[(f64, f64)] {
        &self.attenuation
    }

    pub fn wavelength_range_nm(&self) -> (f64, f64) {
        (self.attenuation[0].0, self.attenuation[self.attenuation.len() - 1].0)
    }

    /// Piecewise-linear interpolation of the attenuation samples.
    pub fn attenuation_at(&self, wavelength_nm: f64) -> Result<f64> {
        let (lo, hi) = self.wavelength_range_nm();
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(Error::OutOfRange {
                what: "wavelength_nm",
                value: wavelength_nm,
                min: lo,
                max: hi,
            });
        }
        let idx = self
            .attenuation
            .partition_point(|&(wl, _)| wl <= wavelength_nm)
            .clamp(1, self.attenuation.len() - 1);
        let (x0, y0) = self.attenuation[idx - 1];
        let (x1, y1) = self.attenuation[idx];
        let t = (wavelength_nm - x0) / (x1 - x0);
        Ok(y0 + t * (y1 - y0))
    }

    /// Span loss at one wavelength, including absorption lines.
    pub fn link_loss(&self, wavelength_nm: f64) -> Result<f64> {
        let base = self.attenuation_at(wavelength_nm)? * self.length_km;
        Ok(base + gas_loss_db_at(&self.gas_lines, wavelength_nm_to_freq(wavelength_nm)))
    }

    /// Active RB coefficient for a band; -inf when the band has no entry.
    pub fn rb_coefficient(&self, band: BandId) -> f64 {
        match (self.rb_table.get(&band), self.rb_column) {
            (Some(c), RbColumn::Hcf) => c.hcf_db_per_km,
            (Some(c), RbColumn::Smf) => c.smf_db_per_km,
            (None, _) => f64::NEG_INFINITY,
        }
    }

    /// Bands where the fibre's backscatter is less than `min_gap_db` below
    /// the silica reference.
    pub fn rb_gap_violations(&self, min_gap_db: f64) -> Vec<BandId> {
        self.rb_table
            .iter()
            .filter(|(_, c)| c.smf_db_per_km - c.hcf_db_per_km < min_gap_db)
            .map(|(b, _)| *b)
            .collect()
    }

    /// Whether a frequency sits within `halfwidths` FWHMs of any declared line.
    pub fn near_gas_line(&self, freq_hz: f64, halfwidths: f64) -> bool {
        self.gas_lines
            .iter()
            .any(|l| (freq_hz - l.center_hz).abs() <= halfwidths * l.fwhm_hz)
    }

    pub fn load(
        length_km: f64,
        attenuation_csv: &Path,
        rb_csv: &Path,
        gas_lines_csv: Option<&Path>,
    ) -> Result<Self> {
        let attenuation = read_attenuation_csv(attenuation_csv)?;
        let rb = read_rb_csv(rb_csv)?;
        let gas = match gas_lines_csv {
            Some(p) => read_gas_lines_csv(p)?,
            None => Vec::new(),
        };
        FiberProfile::new(length_km, attenuation, rb, gas)
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct AttenuationRow {
    wavelength_nm: f64,
    attenuation_db_per_km: f64,
}

#[derive(Deserialize)]
struct RbRow {
    band: String,
    beta_hcf_db_per_km: f64,
    beta_smf_db_per_km: f64,
}

#[derive(Deserialize)]
struct GasRow {
    center_hz: f64,
    fwhm_hz: f64,
    peak_loss_db: f64,
}

pub fn read_attenuation_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    parse_attenuation_csv(&read_text(path)?, path)
}

pub fn read_rb_csv(path: &Path) -> Result<BTreeMap<BandId, RbCoefficients>> {
    parse_rb_csv(&read_text(path)?, path)
}

pub fn read_gas_lines_csv(path: &Path) -> Result<Vec<GasLine>> {
    parse_gas_lines_csv(&read_text(path)?, path)
}

/// `origin` only labels errors.
pub fn parse_attenuation_csv(text: &str, origin: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    csv_reader(text)
        .deserialize::<AttenuationRow>()
        .map(|r| {
            r.map(|r| (r.wavelength_nm, r.attenuation_db_per_km))
                .map_err(|e| Error::parse(&origin, e))
        })
        .collect()
}

pub fn parse_rb_csv(text: &str, origin: impl AsRef<Path>) -> Result<BTreeMap<BandId, RbCoefficients>> {
    let mut out = BTreeMap::new();
    for row in csv_reader(text).deserialize::<RbRow>() {
        let row = row.map_err(|e| Error::parse(&origin, e))?;
        let band: BandId = row.band.parse().map_err(|e| Error::parse(&origin, e))?;
        out.insert(
            band,
            RbCoefficients {
                hcf_db_per_km: row.beta_hcf_db_per_km,
                smf_db_per_km: row.beta_smf_db_per_km,
            },
        );
    }
    Ok(out)
}

pub fn parse_gas_lines_csv(text: &str, origin: impl AsRef<Path>) -> Result<Vec<GasLine>> {
    csv_reader(text)
        .deserialize::<GasRow>()
        .map(|r| {
            let r = r.map_err(|e| Error::parse(&origin, e))?;
            GasLine::new(r.center_hz, r.fwhm_hz, r.peak_loss_db).map_err(|e| Error::parse(&origin, e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(curve: Vec<(f64, f64)>) -> FiberProfile {
        FiberProfile::new(60.0, curve, BTreeMap::new(), Vec::new()).unwrap()
    }

    /// Trapezoid rule with a million panels.
    fn integrate_backscatter(alpha_db: f64, length: f64) -> f64 {
        let a = 2.0 * alpha_db * std::f64::consts::LN_10 / 10.0;
        let n = 1_000_000;
        let h = length / n as f64;
        let mut s = 0.5 * (1.0 + (-a * length).exp());
        for i in 1..n {
            s += (-a * i as f64 * h).exp();
        }
        s * h
    }

    #[test]
    fn interpolation_hits_samples_and_midpoints() {
        let p = profile(vec![(1500.0, 0.20), (1600.0, 0.30)]);
        assert_eq!(p.attenuation_at(1500.0).unwrap(), 0.20);
        assert_eq!(p.attenuation_at(1600.0).unwrap(), 0.30);
        assert!((p.attenuation_at(1550.0).unwrap() - 0.25).abs() < 1e-12);
        assert!(matches!(p.attenuation_at(1499.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(p.link_loss(1700.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn link_loss_is_attenuation_times_length() {
        let p = profile(vec![(1500.0, 0.25), (1600.0, 0.25)]);
        assert!((p.link_loss(1550.0).unwrap() - 15.0).abs() < 1e-12);
        let p = profile(vec![(1500.0, 0.2333), (1600.0, 0.2333)]);
        assert!((p.link_loss(1550.0).unwrap() - 13.998).abs() < 1e-9);
    }

    #[test]
    fn gas_line_adds_peak_loss_at_centre() {
        let mut p = profile(vec![(1500.0, 0.25), (1600.0, 0.25)]);
        let f = wavelength_nm_to_freq(1550.0);
        p.gas_lines.push(GasLine::new(f, 2e9, 3.0).unwrap());
        assert!((p.link_loss(1550.0).unwrap() - 18.0).abs() < 1e-9);
    }

    #[test]
    fn profile_rejects_bad_curves() {
        assert!(FiberProfile::new(60.0, vec![(1600.0, 0.2), (1500.0, 0.2)], BTreeMap::new(), vec![]).is_err());
        assert!(FiberProfile::new(60.0, vec![(1500.0, 0.2), (1600.0, 1.2)], BTreeMap::new(), vec![]).is_err());
        assert!(FiberProfile::new(-1.0, vec![(1500.0, 0.2), (1600.0, 0.2)], BTreeMap::new(), vec![]).is_err());
        assert!(GasLine::new(1e14, 0.0, 1.0).is_err());
        assert!(GasLine::new(1e14, 1e9, -1.0).is_err());
    }

    #[test]
    fn effective_length_limits() {
        assert_eq!(effective_backscatter_length(0.0, 60.0).unwrap(), 60.0);
        assert_eq!(effective_backscatter_length(0.25, 0.0).unwrap(), 0.0);
        assert!(effective_backscatter_length(-0.1, 60.0).is_err());
        assert!(effective_backscatter_length(0.1, -60.0).is_err());
    }

    #[test]
    fn effective_length_matches_numeric_integral() {
        let oracle = integrate_backscatter(0.25, 60.0);
        assert!((oracle - 8.68).abs() < 0.005, "{oracle}");
        let closed = effective_backscatter_length(0.25, 60.0).unwrap();
        assert!(((closed - oracle) / oracle).abs() < 1e-6);
    }

    #[test]
    fn rb_power_closed_form_against_integral() {
        let oracle = -11.5 - 56.0 + lin_to_db(integrate_backscatter(0.25, 60.0));
        let p = rb_interference_power(-11.5, -56.0, 0.25, 60.0).unwrap();
        assert!((p - oracle).abs() < 1e-6);
        assert!((p - (-58.1)).abs() < 0.05, "{p}");
        let smf = rb_interference_power(-11.5, -42.0, 0.25, 60.0).unwrap();
        assert!((smf - p - 14.0).abs() < 1e-9);
        assert_eq!(
            rb_interference_power(-11.5, f64::NEG_INFINITY, 0.25, 60.0).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn absorption_response_shapes() {
        let empty = gas_absorption_response(&[], 193e12, 32e9, 65).unwrap();
        assert!(empty.iter().all(|&v| v == 0.0));

        let line = GasLine::new(193e12, 0.5e9, 3.0).unwrap();
        let r = gas_absorption_response(&[line], 193e12, 32e9, 65).unwrap();
        let max = r.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, 3.0);
        assert_eq!(r[32], 3.0);

        // 10 FWHM beyond the channel edge: Lorentzian tail 1/(1+20^2) < 1/100
        let fwhm = 0.5e9;
        let outside = GasLine::new(193e12 + 16e9 + 10.0 * fwhm, fwhm, 3.0).unwrap();
        let r = gas_absorption_response(&[outside], 193e12, 32e9, 65).unwrap();
        let max = r.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max < 3.0 / 100.0, "{max}");
        assert!((max - 3.0 / 401.0).abs() < 1e-12);

        assert!(gas_absorption_response(&[line], 193e12, 32e9, 1).is_err());
    }

    #[test]
    fn baseband_mapping_keeps_shape() {
        let line = GasLine::new(193.01e12, 1e9, 2.0).unwrap();
        let bb = line.to_baseband(193e12);
        assert!((bb.center_hz - 10e9).abs() < 1.0);
        assert_eq!(bb.loss_db_at(10e9), 2.0);
    }
}
