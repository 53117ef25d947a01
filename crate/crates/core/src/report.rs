//! Run orchestration and result files.
//!
//! A run builds one GMI-versus-SNR table per constellation, optionally fits
//! the per-band transceiver terms and the FEC gap to a reference table, then
//! assigns every channel the format with the best decoded rate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::budget::{calibrate_band, limiting_term, penalty_stats, LinkMode, LinkScenario};
use crate::constellation::GmiTable;
use crate::error::{Error, Result};
use crate::plan::{BandId, Direction};
use crate::rate::{
    aggregate, decoded_data_rate, gmi_data_rate, select_by_decoded_rate, ChannelResult, FecModel, Throughput,
    ThroughputTable,
};
use crate::scenario::{hex, ReferenceTable, Scenario};
use crate::seed::mix;
use crate::units::db_to_lin;

pub const RESULTS_CSV: &str = "results.csv";
pub const BREAKDOWN_CSV: &str = "snr_breakdown.csv";
pub const AGGREGATE_JSON: &str = "aggregate.json";
pub const MANIFEST_JSON: &str = "manifest.json";

const TABLE_TAG: u64 = 0x474d_4900;

/// One table per scenario format, each from its own seed stream.
pub fn build_gmi_tables(s: &Scenario) -> Result<Vec<GmiTable>> {
    let grid = s.gmi.points();
    s.formats
        .iter()
        .enumerate()
        .map(|(i, f)| GmiTable::build(&f.constellation, &grid, s.gmi.samples, mix(s.seed, TABLE_TAG + i as u64)))
        .collect()
}

/// SNR → (format, code rate, rates) for one channel.
#[derive(Clone, Copy, Debug)]
pub struct RateModel<'a> {
    pub tables: &'a [GmiTable],
    pub fec: FecModel,
    pub symbol_rate_baud: f64,
    pub pilot_overhead: f64,
}

impl RateModel<'_> {
    /// (gmi rate, decoded rate) in bit/s plus the chosen table index and code rate.
    pub fn rates(&self, snr_db: f64) -> Option<(usize, f64, f64, f64, f64)> {
        let candidates: Vec<(u32, f64)> = self.tables.iter().map(|t| (t.bits, t.gmi_at(snr_db))).collect();
        let (i, r) = select_by_decoded_rate(&candidates, &self.fec)?;
        let (bits, gmi) = candidates[i];
        Some((
            i,
            gmi,
            r,
            gmi_data_rate(self.symbol_rate_baud, gmi, self.pilot_overhead),
            decoded_data_rate(self.symbol_rate_baud, bits, r, self.pilot_overhead),
        ))
    }

    pub fn assign(&self, res: &mut ChannelResult) {
        if res.excluded {
            return;
        }
        if let Some((i, gmi, r, g, d)) = self.rates(res.snr.snr_total) {
            res.format = Some(1usize << self.tables[i].bits);
            res.gmi_2d = gmi;
            res.code_rate = r;
            res.gmi_rate_bps = g;
            res.decoded_rate_bps = d;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub trx_snr_db: BTreeMap<BandId, f64>,
    pub ngmi_gap: f64,
    pub rounds: usize,
}

fn directions(mode: LinkMode) -> &'static [Direction] {
    match mode {
        LinkMode::Bidi => &Direction::BOTH,
        LinkMode::Unidi => &[Direction::Forward],
    }
}

/// Inverse linear SNR of everything but the transceiver, per included
/// channel of a band.
fn non_trx_inverse(link: &LinkScenario, band: BandId, mode: LinkMode) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for ch in link.plan.band_channels(band) {
        if link.plan.is_excluded(ch.id) {
            continue;
        }
        for &d in directions(mode) {
            let b = link.breakdown(ch.id, d, mode)?;
            out.push([b.snr_ase, b.snr_rb, b.snr_leak, b.snr_nli].iter().map(|v| 1.0 / db_to_lin(*v)).sum());
        }
    }
    Ok(out)
}

fn total_snr_db(trx_db: f64, other_inv: f64) -> f64 {
    -10.0 * (1.0 / db_to_lin(trx_db) + other_inv).log10()
}

/// Fits per-band transceiver SNRs to the reference GMI aggregates and, when
/// asked, one global NGMI gap to the decoded grand total. The two depend on
/// each other through format selection, so they are refitted alternately.
pub fn calibrate_to_reference(
    link: &LinkScenario,
    mode: LinkMode,
    model: RateModel<'_>,
    reference: &ReferenceTable,
    fit_gap: bool,
) -> Result<Calibration> {
    let per_dir_scale = if mode == LinkMode::Unidi { 0.5 } else { 1.0 };
    let mut others = BTreeMap::new();
    for &band in reference.bands.keys() {
        others.insert(band, non_trx_inverse(link, band, mode)?);
    }
    let mut fec = model.fec;
    let mut trx = link.trx_snr_db.clone();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let m = RateModel { fec, ..model };
        for (&band, cell) in &reference.bands {
            let inv = &others[&band];
            let target = cell.gmi_tbps * 1e12 * per_dir_scale;
            let term = limiting_term(link, band, mode)?;
            let value = calibrate_band(
                band,
                target,
                |t| Ok(inv.iter().map(|o| m.rates(total_snr_db(t, *o)).map_or(0.0, |r| r.3)).sum()),
                &term,
            )?;
            trx.insert(band, value);
        }
        if !fit_gap {
            break;
        }
        let target = reference.decoded_total_tbps() * 1e12 * per_dir_scale;
        let decoded = |gap: f64| -> f64 {
            let m = RateModel { fec: fec.with_gap(gap), ..model };
            others
                .iter()
                .map(|(b, inv)| inv.iter().map(|o| m.rates(total_snr_db(trx[b], *o)).map_or(0.0, |r| r.4)).sum::<f64>())
                .sum()
        };
        let gap = fit_decreasing(decoded, target, 0.0, 0.5);
        let moved = (gap - fec.ngmi_gap).abs();
        fec = fec.with_gap(gap);
        if moved < 1e-6 || rounds >= 6 {
            break;
        }
    }
    Ok(Calibration {
        trx_snr_db: trx,
        ngmi_gap: fec.ngmi_gap,
        rounds,
    })
}

/// Bisection for a non-increasing, possibly stepped `f`; returns whichever
/// bracket end lands closer to the target.
fn fit_decreasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    if f(lo) <= target {
        return lo;
    }
    if f(hi) >= target {
        return hi;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (f(lo) - target).abs() <= (f(hi) - target).abs() {
        lo
    } else {
        hi
    }
}

/// Everything a run produces, before it is written out.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub results: Vec<ChannelResult>,
    pub table: ThroughputTable,
    pub aggregate: Aggregate,
    pub tables: Vec<GmiTable>,
    pub calibration: Option<Calibration>,
}

/// Evaluates a scenario in memory.
pub fn evaluate(s: &Scenario) -> Result<Evaluation> {
    let mut link = s.link.clone();
    let mut fec = s.fec;
    if link.plan.is_empty() {
        let table = ThroughputTable::default();
        let aggregate = Aggregate::new(s, &table, None, None);
        return Ok(Evaluation {
            results: Vec::new(),
            table,
            aggregate,
            tables: Vec::new(),
            calibration: None,
        });
    }
    let tables = build_gmi_tables(s)?;
    let model = RateModel {
        tables: &tables,
        fec,
        symbol_rate_baud: s.symbol_rate_baud(),
        pilot_overhead: s.pilot_overhead,
    };
    let calibration = match &s.reference {
        Some(reference) => {
            let c = calibrate_to_reference(&link, s.mode, model, reference, s.fit_ngmi_gap)?;
            link.trx_snr_db = c.trx_snr_db.clone();
            fec = fec.with_gap(c.ngmi_gap);
            Some(c)
        }
        None => None,
    };
    let model = RateModel { fec, ..model };
    let mut results = link.evaluate(s.mode)?;
    results.par_iter_mut().for_each(|r| model.assign(r));
    let table = aggregate(&results)?;
    let penalty = match s.mode {
        LinkMode::Bidi => Some(penalty_stats(&link)?),
        LinkMode::Unidi => None,
    };
    let aggregate = Aggregate::new(s, &table, penalty, calibration.as_ref());
    Ok(Evaluation {
        results,
        table,
        aggregate,
        tables,
        calibration,
    })
}

/// Evaluates and writes the result files into `out_dir`.
pub fn run(s: &Scenario, out_dir: &Path) -> Result<Evaluation> {
    let ev = evaluate(s)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = [
        (RESULTS_CSV, results_csv(&ev.results)),
        (BREAKDOWN_CSV, breakdown_csv(&ev.results)),
        (AGGREGATE_JSON, to_json(&ev.aggregate)?),
    ];
    let mut outputs = BTreeMap::new();
    for (name, body) in &files {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        outputs.insert(name.to_string(), sha256_hex(body.as_bytes()));
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: s.name.clone(),
        config_sha256: s.config_sha256.clone(),
        seed: s.seed,
        mode: s.mode,
        formats: s.formats.iter().map(|f| f.label.clone()).collect(),
        gmi_samples: s.gmi.samples,
        outputs,
    };
    let path = out_dir.join(MANIFEST_JSON);
    std::fs::write(&path, to_json(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(ev)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub config_sha256: String,
    pub seed: u64,
    pub mode: LinkMode,
    pub formats: Vec<String>,
    pub gmi_samples: usize,
    /// SHA-256 of each written file.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub gmi_tbps: f64,
    pub decoded_tbps: f64,
    pub channels: usize,
}

impl From<&Throughput> for Cell {
    fn from(t: &Throughput) -> Self {
        Cell {
            gmi_tbps: t.gmi_tbps,
            decoded_tbps: t.decoded_tbps,
            channels: t.channels,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BandCell {
    #[serde(flatten)]
    pub both: Cell,
    #[serde(default)]
    pub directions: BTreeMap<Direction, Cell>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySummary {
    pub mean_db: f64,
    pub max_db: f64,
}

/// Aggregate file: per band (with direction split), per direction, total.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub mode: LinkMode,
    pub seed: u64,
    pub bands: BTreeMap<BandId, BandCell>,
    pub directions: BTreeMap<Direction, Cell>,
    pub total: Cell,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bidi_penalty: Option<PenaltySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

impl Aggregate {
    pub fn new(s: &Scenario, t: &ThroughputTable, penalty: Option<(f64, f64)>, cal: Option<&Calibration>) -> Self {
        let bands = s
            .link
            .plan
            .bands
            .iter()
            .map(|b| {
                let both = t.per_band.get(&b.name).map(Cell::from).unwrap_or_default();
                let directions = t
                    .per_band_direction
                    .get(&b.name)
                    .map(|m| m.iter().map(|(d, v)| (*d, Cell::from(v))).collect())
                    .unwrap_or_default();
                (b.name, BandCell { both, directions })
            })
            .collect();
        Aggregate {
            scenario: s.name.clone(),
            mode: s.mode,
            seed: s.seed,
            bands,
            directions: t.per_direction.iter().map(|(d, v)| (*d, Cell::from(v))).collect(),
            total: Cell::from(&t.total),
            bidi_penalty: penalty.map(|(mean_db, max_db)| PenaltySummary { mean_db, max_db }),
            calibration: cal.cloned(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub gmi_rel: f64,
    pub decoded_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gmi_rel: 0.02,
            decoded_rel: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub cell: String,
    pub expected: f64,
    pub actual: f64,
    pub rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CompareRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<14} expected {:>10.3} actual {:>10.3} rel {:>8.4} tol {:.4}  {}",
                r.cell,
                r.expected,
                r.actual,
                r.rel_error,
                r.tolerance,
                if r.pass { "pass" } else { "FAIL" }
            );
        }
        out
    }
}

/// |a − b| / max(|a|, |b|): the same whichever side is the reference.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn row(cell: String, expected: f64, actual: f64, tolerance: f64) -> CompareRow {
    let rel_error = relative_error(actual, expected);
    CompareRow {
        cell,
        expected,
        actual,
        rel_error,
        tolerance,
        pass: rel_error <= tolerance,
    }
}

/// Cell-by-cell comparison. The band sets must match exactly.
pub fn compare(results: &Aggregate, reference: &ReferenceTable, tol: Tolerances) -> Result<CompareReport> {
    let have: Vec<BandId> = results.bands.keys().copied().collect();
    let want: Vec<BandId> = reference.bands.keys().copied().collect();
    if have != want {
        return Err(Error::config(
            "reference.bands",
            format!("results cover {have:?} but the reference covers {want:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (band, r) in &reference.bands {
        let a = &results.bands[band].both;
        rows.push(row(format!("{band}.gmi"), r.gmi_tbps, a.gmi_tbps, tol.gmi_rel));
        rows.push(row(format!("{band}.decoded"), r.decoded_tbps, a.decoded_tbps, tol.decoded_rel));
    }
    for (dir, r) in &reference.directions {
        let a = results.directions.get(dir).copied().unwrap_or_default();
        rows.push(row(format!("{dir}.gmi"), r.gmi_tbps, a.gmi_tbps, tol.gmi_rel));
        rows.push(row(format!("{dir}.decoded"), r.decoded_tbps, a.decoded_tbps, tol.decoded_rel));
    }
    if let (Some(bound), Some(p)) = (reference.penalty_bound_db, results.bidi_penalty) {
        rows.push(CompareRow {
            cell: "penalty.mean".into(),
            expected: bound,
            actual: p.mean_db,
            rel_error: 0.0,
            tolerance: 0.0,
            pass: p.mean_db < bound,
        });
    }
    Ok(CompareReport { rows })
}

/// C-style `%g` with six significant digits. Locale-free.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    const P: i32 = 6;
    // exponent after rounding to P significant digits
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= P {
        let mant = strip_zeros(mant);
        format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn sorted(results: &[ChannelResult]) -> Vec<&ChannelResult> {
    let mut v: Vec<&ChannelResult> = results.iter().collect();
    v.sort_by_key(|r| (r.channel_id, r.direction));
    v
}

pub fn results_csv(results: &[ChannelResult]) -> String {
    let mut out = String::from("channel_id,direction,band,freq_hz,snr_db,format,code_rate,gmi_gbps,decoded_gbps,excluded\n");
    for r in sorted(results) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.channel_id,
            r.direction,
            r.band,
            fmt_g(r.frequency_hz),
            fmt_g(r.snr.snr_total),
            r.format.map(|f| f.to_string()).unwrap_or_default(),
            fmt_g(r.code_rate),
            fmt_g(r.gmi_rate_bps / 1e9),
            fmt_g(r.decoded_rate_bps / 1e9),
            r.excluded
        );
    }
    out
}

/// Per-term SNRs; disabled terms print as `inf`.
pub fn breakdown_csv(results: &[ChannelResult]) -> String {
    let mut out = String::from("channel_id,direction,snr_trx_db,snr_ase_db,snr_rb_db,snr_leak_db,snr_nli_db,snr_total_db\n");
    for r in sorted(results) {
        let s = &r.snr;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.channel_id,
            r.direction,
            fmt_g(s.snr_trx),
            fmt_g(s.snr_ase),
            fmt_g(s.snr_rb),
            fmt_g(s.snr_leak),
            fmt_g(s.snr_nli),
            fmt_g(s.snr_total)
        );
    }
    out
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}
