use qolattice::report::{Mode, Residual};
use qolattice::suite::{self, Check, Report, SuiteConfig};
use qolattice::transfer::{self, LayerOrder, MirrorLattice, TorusLattice};
use qolattice::DeformParam;

#[test]
fn tetra_all_is_three_passing_exact_records() {
    let cfg = SuiteConfig { all: true, ..Default::default() };
    let recs = suite::run_check(Check::Tetra, &cfg).unwrap();
    let names: Vec<_> = recs.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["eq.tetra_ml", "eq.tetra_nn", "eq.tetra_torus"]);
    assert!(recs.iter().all(|r| r.pass && r.residual == Residual::ExactZero));
    assert!(recs.iter().all(|r| r.details.contains_key("control")));
}

#[test]
fn statement23_n1_symbolic() {
    let cfg = SuiteConfig { n: Some(1), ..Default::default() };
    let recs = suite::run_check(Check::Statement23, &cfg).unwrap();
    let main = recs.iter().find(|r| r.name == "transfer.statement23").unwrap();
    assert!(main.pass);
    assert_eq!(main.residual, Residual::ExactZero);
    assert!(recs.iter().any(|r| r.name == "transfer.fold_vs_direct" && r.pass));
}

#[test]
fn halfplane_support_and_orders_at_n1() {
    let lat = MirrorLattice::new(1);
    let uv = lat.halfplane(LayerOrder::UV).unwrap();
    let vu = lat.halfplane(LayerOrder::VU).unwrap();
    assert!(uv.differences(&vu).is_empty());
    let max = uv.support().iter().map(|&(n, m)| n.max(m)).max().unwrap();
    assert_eq!(max, 2, "boundary factors extend the support to N+1");
}

#[test]
fn torus_transfer_json_shape() {
    let lat = TorusLattice::new(2, 2, DeformParam::Q2);
    let t = lat.transfer().unwrap();
    let v = t.to_json(&lat.alg);
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), t.len());
    assert_eq!(rows[0][0], serde_json::json!([0, 0]));
    assert!(rows[0][1].is_string());
}

#[test]
fn n2_halfplane_statements_are_recorded_as_failing() {
    let r = transfer::check_statement_2_3(2, Mode::Fock, 2, 0.6);
    let v = r[0].residual.value().unwrap();
    assert!(!r[0].pass && v > 1e-3, "N=2 commutator residual {v}");
}

#[test]
fn report_is_deterministic_modulo_timings() {
    let run = || {
        let mut v = suite::run_check(Check::SolveK, &SuiteConfig::default()).unwrap();
        v.extend(suite::run_check(Check::Genus, &SuiteConfig { all: true, ..Default::default() }).unwrap());
        suite::without_timings(&Report::new(v)).to_json()
    };
    let a = run();
    assert_eq!(a, run());
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["schema"], 1);
    let names: Vec<_> = v["records"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap().to_string()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}

#[test]
fn invalid_configurations_are_rejected() {
    let fock_sign = SuiteConfig { mode: Mode::Fock, ..Default::default() };
    assert!(suite::run_check(Check::Sign311, &fock_sign).is_err());
    let bad_q = SuiteConfig { q: -1.2, ..Default::default() };
    assert!(suite::run_check(Check::Tetra, &bad_q).is_err());
    let big = SuiteConfig { n: Some(3), ..Default::default() };
    assert!(suite::run_check(Check::Statement22, &big).is_err());
}
