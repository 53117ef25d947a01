//! wasm-bindgen front end for the bundled OESCL scenario. Every export
//! returns a JSON string so the page stays framework-free.

use std::collections::HashMap;

use hcflink::budget::{penalty_stats, LinkMode};
use hcflink::constellation::quadrature::gmi_quadrature;
use hcflink::constellation::{gmi_monte_carlo, Constellation};
use hcflink::fiber::RbColumn;
use hcflink::plan::Direction;
use hcflink::scenario::{load_scenario_str, MemSource, Scenario};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SCENARIO: &str = include_str!("../../core/data/oescl_60km.json");

fn embedded() -> MemSource {
    let files = [
        ("hcf_attenuation.csv", include_str!("../../core/data/hcf_attenuation.csv")),
        ("rb_coefficients.csv", include_str!("../../core/data/rb_coefficients.csv")),
        ("gas_lines.csv", include_str!("../../core/data/gas_lines.csv")),
        ("reference.json", include_str!("../../core/data/reference.json")),
        ("constellations/gs16.csv", include_str!("../../core/data/constellations/gs16.csv")),
        ("constellations/gs64.csv", include_str!("../../core/data/constellations/gs64.csv")),
        ("constellations/gs256.csv", include_str!("../../core/data/constellations/gs256.csv")),
        ("constellations/gs1024.csv", include_str!("../../core/data/constellations/gs1024.csv")),
    ];
    MemSource(files.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<HashMap<_, _>>())
}

fn scenario() -> Result<Scenario, String> {
    load_scenario_str(SCENARIO, &embedded()).map_err(|e| e.to_string())
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct BandRow {
    band: String,
    channels: usize,
    first_thz: f64,
    last_thz: f64,
    /// Budget SNR of the middle channel, forward direction.
    mid_snr_db: f64,
    mid_penalty_db: f64,
}

/// Per-band summary of the bundled plan with the mid-band link budget.
pub fn plan_summary() -> Result<String, String> {
    let s = scenario()?;
    let link = &s.link;
    let mut rows = Vec::new();
    for b in &link.plan.bands {
        let ch = link.plan.band_channels(b.name);
        let mid = ch[ch.len() / 2];
        let snr = link
            .breakdown(mid.id, Direction::Forward, LinkMode::Bidi)
            .map_err(|e| e.to_string())?;
        rows.push(BandRow {
            band: b.name.to_string(),
            channels: ch.len(),
            first_thz: ch[0].frequency_hz / 1e12,
            last_thz: ch[ch.len() - 1].frequency_hz / 1e12,
            mid_snr_db: snr.snr_total,
            mid_penalty_db: snr.without_bidi_terms().snr_total - snr.snr_total,
        });
    }
    json(&rows)
}

#[derive(Serialize)]
struct GmiPoint {
    snr_db: f64,
    gmi: f64,
    std_error: f64,
    quadrature: Option<f64>,
}

/// Monte-Carlo GMI of Gray square QAM; the quadrature value is added for
/// up to 64 points, where it is cheap.
pub fn square_qam_gmi(bits: u32, snr_db: f64, samples: usize, seed: u64) -> Result<String, String> {
    let c = Constellation::square_qam(bits).map_err(|e| e.to_string())?;
    let e = gmi_monte_carlo(&c, snr_db, samples.max(1000), seed).map_err(|e| e.to_string())?;
    let quadrature = if bits <= 6 { gmi_quadrature(&c, snr_db, 16).ok() } else { None };
    json(&GmiPoint {
        snr_db,
        gmi: e.gmi,
        std_error: e.std_error,
        quadrature,
    })
}

#[derive(Serialize)]
struct Penalty {
    mean_db: f64,
    max_db: f64,
}

/// Mean and max bi-directional penalty over the bundled plan with a uniform
/// backscatter coefficient and circulator directivity. `smf` switches to
/// the silica reference column and ignores `beta_db_per_km`.
pub fn bidi_penalty(beta_db_per_km: f64, directivity_db: f64, smf: bool) -> Result<String, String> {
    let mut link = scenario()?.link;
    if smf {
        link.fiber.rb_column = RbColumn::Smf;
    } else {
        for c in link.fiber.rb_table.values_mut() {
            c.hcf_db_per_km = beta_db_per_km;
        }
    }
    link.circulator_directivity_db = directivity_db;
    let (mean_db, max_db) = penalty_stats(&link).map_err(|e| e.to_string())?;
    json(&Penalty { mean_db, max_db })
}

// JS entry points. `seed` is an f64 because JS numbers are.

#[wasm_bindgen(js_name = planSummary)]
pub fn js_plan_summary() -> Result<String, JsError> {
    plan_summary().map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = squareQamGmi)]
pub fn js_square_qam_gmi(bits: u32, snr_db: f64, samples: u32, seed: f64) -> Result<String, JsError> {
    square_qam_gmi(bits, snr_db, samples as usize, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = bidiPenalty)]
pub fn js_bidi_penalty(beta_db_per_km: f64, directivity_db: f64, smf: bool) -> Result<String, JsError> {
    bidi_penalty(beta_db_per_km, directivity_db, smf).map_err(|e| JsError::new(&e))
}
