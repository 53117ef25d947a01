use std::path::PathBuf;

use hcflink::fiber::RbColumn;
use hcflink::plan::BandId;
use hcflink::scenario::load_scenario;

fn bundled() -> hcflink::scenario::Scenario {
    load_scenario(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/oescl_60km.json")).unwrap()
}

#[test]
fn bundled_scenario_loads() {
    let s = bundled();
    assert_eq!(s.link.plan.len(), 1275);
    assert_eq!(s.link.plan.excluded_channels.len(), 9);
    let bits: Vec<u32> = s.formats.iter().map(|f| f.constellation.bits()).collect();
    assert_eq!(bits, [4, 6, 8, 10]);
    for f in &s.formats {
        assert!((f.constellation.mean_energy() - 1.0).abs() < 1e-9);
    }
    let r = s.reference.as_ref().expect("reference table");
    assert!((r.gmi_total_tbps() - 850.2).abs() < 0.5);
    assert_eq!(s.config_sha256.len(), 64);
}

#[test]
fn bundled_fibre_keeps_backscatter_gap() {
    let s = bundled();
    assert!(s.link.fiber.rb_gap_violations(20.0).is_empty());
    let smf = s.link.fiber.clone().with_rb_column(RbColumn::Smf);
    for b in BandId::ALL {
        assert!(smf.rb_coefficient(b) - s.link.fiber.rb_coefficient(b) >= 20.0);
    }
}

#[test]
fn bundled_gas_lines_fall_in_l_and_e_bands() {
    let s = bundled();
    let plan = &s.link.plan;
    for line in &s.link.fiber.gas_lines {
        let band = plan
            .bands
            .iter()
            .find(|b| (b.start_frequency_hz..b.start_frequency_hz + b.bandwidth_hz).contains(&line.center_hz))
            .map(|b| b.name);
        assert!(matches!(band, Some(BandId::L) | Some(BandId::E)), "{line:?}");
    }
}
