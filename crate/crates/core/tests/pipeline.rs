use wgmsim_core::emit::{emit, to_csv, Format};
use wgmsim_core::params::Preset;
use wgmsim_core::scan::{run_scan, Axis, Method, ScanSpec};

fn weak_coupling_scan() -> ScanSpec {
    let mut base = Preset::BadCavity.params::<f64>();
    base.g0_1 = 3.0;
    base.g0_2 = 3.0;
    base.atom_detuning_2 = -5.0;
    let axis: Axis = "Delta_1:-20:20:5".parse().unwrap();
    ScanSpec::new(Method::Both, base, vec![axis])
}

#[test]
fn methods_agree_deep_in_the_bad_cavity_regime() {
    let table = run_scan(&weak_coupling_scan()).unwrap();
    let th = table.columns.iter().position(|c| c == "TH_F_a1").unwrap();
    let ae = table.columns.iter().position(|c| c == "AE_F_a1").unwrap();
    let peak = table.rows.iter().map(|r| r.values[th]).fold(0.0, f64::max);
    assert!(peak > 0.0);
    for row in &table.rows {
        assert!(row.is_ok(), "{}", row.status);
        let dev = (row.values[th] - row.values[ae]).abs() / peak;
        assert!(dev < 1e-2, "deviation {dev:e} at {:?}", row.coords);
    }
}

#[test]
fn scan_round_trips_through_files() {
    let table = run_scan(&weak_coupling_scan()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit(&table, &dir.path().join("scan"), &[Format::Csv, Format::Json]).unwrap();
    assert_eq!(written.len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert_eq!(csv, to_csv(&table));
    assert_eq!(csv.lines().count(), 2 + table.rows.len());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("scan.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 9);
}
