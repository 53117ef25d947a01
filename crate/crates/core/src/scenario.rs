//! Scenario files.
//!
//! A scenario is a JSON document whose data-file references are resolved
//! relative to the document itself. Loading gathers every problem it can find
//! before failing, each tagged with its field path.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::budget::{AmplifierSpec, LinkMode, LinkScenario};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::fiber::{parse_attenuation_csv, parse_gas_lines_csv, parse_rb_csv, FiberProfile, RbColumn};
use crate::plan::{BandId, BandSpec, ChannelPlan, GridSpacing, DEFAULT_GUARD_BAND_HZ, DEFAULT_ROLLOFF};
use crate::rate::FecModel;

/// Where referenced data files come from.
pub trait DataSource {
    fn read(&self, relative: &str) -> Result<String>;
}

/// Files next to the scenario document.
pub struct DirSource(pub PathBuf);

impl DataSource for DirSource {
    fn read(&self, relative: &str) -> Result<String> {
        let path = self.0.join(relative);
        std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    }
}

/// In-memory files, e.g. compiled in with `include_str!`.
#[derive(Default)]
pub struct MemSource(pub HashMap<String, String>);

impl DataSource for MemSource {
    fn read(&self, relative: &str) -> Result<String> {
        self.0
            .get(relative)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("embedded file {relative}")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub grid_spacing_hz: GridSpacing,
    pub symbol_rate_baud: f64,
    #[serde(default = "default_guard")]
    pub guard_band_hz: f64,
    #[serde(default = "default_rolloff")]
    pub rolloff: f64,
    pub bands: Vec<BandSpec>,
    #[serde(default)]
    pub excluded_channels: Vec<usize>,
}

fn default_guard() -> f64 {
    DEFAULT_GUARD_BAND_HZ
}

fn default_rolloff() -> f64 {
    DEFAULT_ROLLOFF
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSection {
    pub length_km: f64,
    pub attenuation_csv: String,
    pub rb_csv: String,
    #[serde(default)]
    pub gas_lines_csv: Option<String>,
    #[serde(default)]
    pub rb_column: RbColumn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FormatSource {
    File { file: String },
    SquareQam { square_qam: u32 },
}

impl FormatSource {
    pub fn label(&self) -> String {
        match self {
            FormatSource::File { file } => file.clone(),
            FormatSource::SquareQam { square_qam } => format!("square-{}", 1u64 << square_qam),
        }
    }
}

/// SNR grid for the per-format GMI tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmiGrid {
    pub samples: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub snr_step_db: f64,
}

impl Default for GmiGrid {
    fn default() -> Self {
        GmiGrid {
            samples: 100_000,
            snr_min_db: -5.0,
            snr_max_db: 35.0,
            snr_step_db: 1.0,
        }
    }
}

impl GmiGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.snr_max_db - self.snr_min_db) / self.snr_step_db + 1e-9).floor() as usize;
        (0..=n).map(|i| self.snr_min_db + i as f64 * self.snr_step_db).collect()
    }
}

/// Fit the transceiver terms (and optionally the FEC gap) to a reference
/// table before evaluating.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub reference: String,
    #[serde(default = "yes")]
    pub fit_ngmi_gap: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub mode: LinkMode,
    #[serde(default)]
    pub seed: u64,
    pub plan: PlanSection,
    pub fiber: FiberSection,
    #[serde(default)]
    pub amplifiers: BTreeMap<String, AmplifierSpec>,
    #[serde(default)]
    pub trx_snr: BTreeMap<String, f64>,
    #[serde(default = "default_directivity")]
    pub circulator_directivity_db: f64,
    #[serde(default = "default_extras")]
    pub extras_loss_db: f64,
    #[serde(default)]
    pub noise_bandwidth_hz: Option<f64>,
    #[serde(default)]
    pub fec: FecModel,
    #[serde(default = "default_pilot_overhead")]
    pub pilot_overhead: f64,
    #[serde(default = "default_formats")]
    pub formats: Vec<FormatSource>,
    #[serde(default)]
    pub gmi: GmiGrid,
    #[serde(default)]
    pub calibration: Option<CalibrationSection>,
}

fn default_directivity() -> f64 {
    50.0
}

fn default_extras() -> f64 {
    4.0
}

fn default_pilot_overhead() -> f64 {
    0.04
}

fn default_formats() -> Vec<FormatSource> {
    [4, 6, 8, 10]
        .into_iter()
        .map(|square_qam| FormatSource::SquareQam { square_qam })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Format {
    pub label: String,
    pub constellation: Constellation,
}

/// Reference aggregates, Tb/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceTable {
    #[serde(default, rename = "_note", skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub bands: BTreeMap<BandId, ReferenceCell>,
    #[serde(default)]
    pub directions: BTreeMap<crate::plan::Direction, ReferenceCell>,
    #[serde(default)]
    pub penalty_bound_db: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceCell {
    pub gmi_tbps: f64,
    pub decoded_tbps: f64,
}

impl ReferenceTable {
    pub fn from_json_str(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    pub fn gmi_total_tbps(&self) -> f64 {
        self.bands.values().map(|c| c.gmi_tbps).sum()
    }

    pub fn decoded_total_tbps(&self) -> f64 {
        self.bands.values().map(|c| c.decoded_tbps).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub mode: LinkMode,
    pub seed: u64,
    pub link: LinkScenario,
    pub fec: FecModel,
    pub pilot_overhead: f64,
    pub formats: Vec<Format>,
    pub gmi: GmiGrid,
    pub reference: Option<ReferenceTable>,
    pub fit_ngmi_gap: bool,
    /// SHA-256 over the document and every file it pulled in.
    pub config_sha256: String,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn symbol_rate_baud(&self) -> f64 {
        self.link.plan.symbol_rate_baud
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    load_scenario_str(&text, &DirSource(base))
}

/// Parses and validates a scenario document, reading referenced files from
/// `source`.
pub fn load_scenario_str(text: &str, source: &dyn DataSource) -> Result<Scenario> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| Error::Validation(vec![format!("scenario: {e}")]))?;
    build_scenario(file, text, source)
}

fn band_key(key: &str, section: &str, errors: &mut Vec<String>) -> Option<BandId> {
    match key.parse::<BandId>() {
        Ok(b) => Some(b),
        Err(_) => {
            errors.push(format!("{section}.{key}: unknown band"));
            None
        }
    }
}

pub fn build_scenario(file: ScenarioFile, text: &str, source: &dyn DataSource) -> Result<Scenario> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let mut read = |rel: &str, field: &str, errors: &mut Vec<String>| -> Option<String> {
        match source.read(rel) {
            Ok(t) => {
                hasher.update(rel.as_bytes());
                hasher.update([0u8]);
                hasher.update(t.as_bytes());
                Some(t)
            }
            Err(e) => {
                errors.push(format!("{field}: {e}"));
                None
            }
        }
    };

    // plan
    let p = &file.plan;
    for (i, b) in p.bands.iter().enumerate() {
        if !(b.bandwidth_hz > 0.0) {
            errors.push(format!("plan.bands[{i}].bandwidth_hz: must be > 0"));
        }
        if b.channel_count == 0 {
            errors.push(format!("plan.bands[{i}].channel_count: must be >= 1"));
        }
        warnings.extend(b.warnings());
    }
    if !(p.symbol_rate_baud > 0.0) {
        errors.push("plan.symbol_rate_baud: must be > 0".into());
    }
    if !(p.guard_band_hz >= 0.0) {
        errors.push("plan.guard_band_hz: must be >= 0".into());
    }
    let plan = if errors.is_empty() {
        match ChannelPlan::build(p.bands.clone(), p.grid_spacing_hz, p.symbol_rate_baud)
            .and_then(|plan| plan.with_rolloff(p.rolloff))
            .map(|plan| plan.with_guard_band(p.guard_band_hz))
            .and_then(|plan| plan.with_excluded(p.excluded_channels.iter().copied()))
        {
            Ok(plan) => Some(plan),
            Err(e) => {
                errors.push(format!("plan: {e}"));
                None
            }
        }
    } else {
        None
    };

    // fibre
    let f = &file.fiber;
    if !(f.length_km >= 0.0) {
        errors.push(format!("fiber.length_km: must be >= 0, got {}", f.length_km));
    }
    let attenuation = read(&f.attenuation_csv, "fiber.attenuation_csv", &mut errors)
        .and_then(|t| parse_attenuation_csv(&t, &f.attenuation_csv).map_err(|e| errors.push(format!("fiber.attenuation_csv: {e}"))).ok());
    let rb = read(&f.rb_csv, "fiber.rb_csv", &mut errors)
        .and_then(|t| parse_rb_csv(&t, &f.rb_csv).map_err(|e| errors.push(format!("fiber.rb_csv: {e}"))).ok());
    let gas = match &f.gas_lines_csv {
        Some(rel) => read(rel, "fiber.gas_lines_csv", &mut errors)
            .and_then(|t| parse_gas_lines_csv(&t, rel).map_err(|e| errors.push(format!("fiber.gas_lines_csv: {e}"))).ok()),
        None => Some(Vec::new()),
    };
    let fiber = match (attenuation, rb, gas) {
        (Some(a), Some(rb), Some(g)) if f.length_km >= 0.0 => match FiberProfile::new(f.length_km, a, rb, g) {
            Ok(fp) => Some(fp.with_rb_column(f.rb_column)),
            Err(e) => {
                errors.push(format!("fiber: {e}"));
                None
            }
        },
        _ => None,
    };

    // per-band maps
    let mut amplifiers = BTreeMap::new();
    for (k, a) in &file.amplifiers {
        if let Some(b) = band_key(k, "amplifiers", &mut errors) {
            if !a.noise_figure_db.is_finite() {
                errors.push(format!("amplifiers.{k}.noise_figure_db: must be finite"));
            }
            warnings.extend(a.warnings(b));
            amplifiers.insert(b, a.clone());
        }
    }
    let mut trx_snr_db = BTreeMap::new();
    for (k, &v) in &file.trx_snr {
        if let Some(b) = band_key(k, "trx_snr", &mut errors) {
            if v.is_nan() {
                errors.push(format!("trx_snr.{k}: not a number"));
            }
            trx_snr_db.insert(b, v);
        }
    }
    for b in &file.plan.bands {
        if !amplifiers.contains_key(&b.name) {
            errors.push(format!("amplifiers.{}: missing", b.name));
        } else if let Some(a) = amplifiers.get(&b.name) {
            let band_power = b.launch_power_fw_dbm.max(b.launch_power_bw_dbm);
            if band_power > a.max_output_power_dbm {
                warnings.push(format!(
                    "amplifiers.{}: launch {band_power} dBm exceeds the {} dBm rating",
                    b.name, a.max_output_power_dbm
                ));
            }
        }
        if !trx_snr_db.contains_key(&b.name) {
            if file.calibration.is_some() {
                // starting point for the fit
                trx_snr_db.insert(b.name, 20.0);
            } else {
                errors.push(format!("trx_snr.{}: missing", b.name));
            }
        }
    }
    if !(file.circulator_directivity_db > 0.0) {
        errors.push("circulator_directivity_db: must be > 0".into());
    }
    if !(file.extras_loss_db >= 0.0) {
        errors.push("extras_loss_db: must be >= 0".into());
    }
    if let Some(bw) = file.noise_bandwidth_hz {
        if !(bw > 0.0) {
            errors.push("noise_bandwidth_hz: must be > 0".into());
        }
    }
    if let Err(e) = file.fec.validate() {
        errors.push(format!("fec: {e}"));
    }
    if !(0.0..1.0).contains(&file.pilot_overhead) {
        errors.push("pilot_overhead: must be in [0, 1)".into());
    }

    // formats
    let mut formats = Vec::new();
    if file.formats.is_empty() {
        errors.push("formats: at least one constellation is required".into());
    }
    for (i, fs) in file.formats.iter().enumerate() {
        let field = format!("formats[{i}]");
        let c = match fs {
            FormatSource::File { file } => read(file, &field, &mut errors)
                .and_then(|t| Constellation::from_csv_str(&t).map_err(|e| errors.push(format!("{field}: {e}"))).ok()),
            FormatSource::SquareQam { square_qam } => Constellation::square_qam(*square_qam)
                .map_err(|e| errors.push(format!("{field}: {e}")))
                .ok(),
        };
        if let Some(constellation) = c {
            formats.push(Format {
                label: fs.label(),
                constellation,
            });
        }
    }

    let g = &file.gmi;
    if g.samples < crate::constellation::MIN_SAMPLES {
        errors.push(format!("gmi.samples: need at least {}", crate::constellation::MIN_SAMPLES));
    }
    if !(g.snr_step_db > 0.0) || !(g.snr_max_db > g.snr_min_db) {
        errors.push("gmi: need snr_max_db > snr_min_db and snr_step_db > 0".into());
    }

    let (reference, fit_ngmi_gap) = match &file.calibration {
        Some(c) => {
            let r = read(&c.reference, "calibration.reference", &mut errors).and_then(|t| {
                ReferenceTable::from_json_str(&t, &c.reference)
                    .map_err(|e| errors.push(format!("calibration.reference: {e}")))
                    .ok()
            });
            if let Some(r) = &r {
                for b in r.bands.keys() {
                    if !file.plan.bands.iter().any(|s| s.name == *b) {
                        errors.push(format!("calibration.reference: band {b} is not in the plan"));
                    }
                }
            }
            (r, c.fit_ngmi_gap)
        }
        None => (None, false),
    };

    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    let link = LinkScenario {
        plan: plan.expect("validated"),
        fiber: fiber.expect("validated"),
        amplifiers,
        trx_snr_db,
        circulator_directivity_db: file.circulator_directivity_db,
        extras_loss_db: file.extras_loss_db,
        noise_bandwidth_hz: file.noise_bandwidth_hz,
        nli_hook: None,
    };
    Ok(Scenario {
        name: file.name,
        mode: file.mode,
        seed: file.seed,
        link,
        fec: file.fec,
        pilot_overhead: file.pilot_overhead,
        formats,
        gmi: file.gmi,
        reference,
        fit_ngmi_gap,
        config_sha256: hex(&hasher.finalize()),
        warnings,
    })
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem() -> MemSource {
        let mut m = HashMap::new();
        m.insert(
            "att.csv".to_string(),
            "wavelength_nm,attenuation_db_per_km\n1500,0.25\n1600,0.25\n".to_string(),
        );
        m.insert(
            "rb.csv".to_string(),
            "band,beta_hcf_db_per_km,beta_smf_db_per_km\nC,-56,-35\n".to_string(),
        );
        MemSource(m)
    }

    fn doc(extra: &str, length: f64) -> String {
        format!(
            r#"{{
  "plan": {{
    "grid_spacing_hz": {{"numerator_hz": 100000000000, "denominator": 3}},
    "symbol_rate_baud": 32e9,
    "bands": [{{"name": "C", "start_frequency_hz": 191e12, "bandwidth_hz": 1e11,
               "channel_count": 3, "launch_power_fw_dbm": 5, "launch_power_bw_dbm": 5}}]
  }},
  "fiber": {{"length_km": {length}, "attenuation_csv": "att.csv", "rb_csv": "rb.csv"}},
  {extra}
  "trx_snr": {{"C": 20}}
}}"#
        )
    }

    #[test]
    fn minimal_scenario_loads() {
        let s = load_scenario_str(
            &doc(r#""amplifiers": {"C": {"noise_figure_db": 5, "max_output_power_dbm": 23}},"#, 60.0),
            &mem(),
        )
        .unwrap();
        assert_eq!(s.link.plan.len(), 3);
        assert_eq!(s.formats.len(), 4);
        assert_eq!(s.config_sha256.len(), 64);
    }

    #[test]
    fn all_problems_are_reported() {
        let err = load_scenario_str(&doc(r#""amplifiers": {"X": {"noise_figure_db": 5, "max_output_power_dbm": 23}},"#, -1.0), &mem())
            .unwrap_err();
        let Error::Validation(list) = err else { panic!("{err}") };
        let joined = list.join("\n");
        assert!(joined.contains("amplifiers.X: unknown band"), "{joined}");
        assert!(joined.contains("amplifiers.C: missing"), "{joined}");
        assert!(joined.contains("fiber.length_km"), "{joined}");
    }

    #[test]
    fn missing_file_names_the_field() {
        let mut src = mem();
        src.0.remove("rb.csv");
        let err = load_scenario_str(&doc(r#""amplifiers": {"C": {"noise_figure_db": 5, "max_output_power_dbm": 23}},"#, 60.0), &src)
            .unwrap_err();
        assert!(err.to_string().contains("fiber.rb_csv"), "{err}");
    }

    #[test]
    fn hash_tracks_data_files() {
        let text = doc(r#""amplifiers": {"C": {"noise_figure_db": 5, "max_output_power_dbm": 23}},"#, 60.0);
        let a = load_scenario_str(&text, &mem()).unwrap();
        let mut src = mem();
        src.0.insert(
            "att.csv".into(),
            "wavelength_nm,attenuation_db_per_km\n1500,0.25\n1600,0.26\n".into(),
        );
        let b = load_scenario_str(&text, &src).unwrap();
        assert_ne!(a.config_sha256, b.config_sha256);
    }

    #[test]
    fn grid_points_cover_range() {
        let g = GmiGrid::default();
        let p = g.points();
        assert_eq!(p.first(), Some(&-5.0));
        assert_eq!(p.last(), Some(&35.0));
        assert_eq!(p.len(), 41);
    }
}
