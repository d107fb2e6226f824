use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qolattice")).args(args).output().expect("binary runs")
}

fn json_of(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn strip_times(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("wall_time_ms");
            m.values_mut().for_each(strip_times);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_times),
        _ => {}
    }
}

#[test]
fn tetra_all() {
    let o = run(&["check", "tetra", "--all"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json_of(&o);
    assert_eq!(v["schema"], 1);
    let recs = v["records"].as_array().unwrap();
    assert_eq!(recs.len(), 3);
    for r in recs {
        for key in ["name", "params", "mode", "residual", "pass", "wall_time_ms"] {
            assert!(r.get(key).is_some(), "missing {key}");
        }
        assert_eq!(r["pass"], true);
    }
}

#[test]
fn statement23_symbolic_n1() {
    let o = run(&["check", "statement23", "--n", "1", "--mode", "symbolic"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json_of(&o);
    let main = v["records"].as_array().unwrap().iter().find(|r| r["name"] == "transfer.statement23").unwrap();
    assert_eq!(main["residual"], "exact-zero");
}

#[test]
fn mirror_involution() {
    let o = run(&["classical", "involution", "--n", "2", "--m", "2", "--mirror"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn failing_check_exits_one() {
    let o = run(&["check", "statement23", "--n", "2", "--mode", "fock", "--dim", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json_of(&o)["pass"], false);
}

#[test]
fn invalid_flags_give_no_report() {
    for args in [
        vec!["check", "tetra", "--q", "1.5"],
        vec!["check", "sign311", "--mode", "fock"],
        vec!["check", "nonsense"],
        vec!["report", "--n", "2"],
        vec!["solve", "r", "--dim", "9"],
        vec!["check", "tetra", "--mirror"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(o.stdout.is_empty(), "{args:?} printed a partial report");
    }
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_qolattice"))
        .args(["check", "tetra"])
        .env("QOLATTICE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_identical_modulo_timings() {
    let args = ["classical", "genus", "--all", "--seed", "3"];
    let (mut a, mut b) = (json_of(&run(&args)), json_of(&run(&args)));
    strip_times(&mut a);
    strip_times(&mut b);
    assert_eq!(a, b);
}

#[test]
fn json_flag_writes_file() {
    let path = std::env::temp_dir().join(format!("qolattice-cli-{}.json", std::process::id()));
    let o = run(&["check", "reflection", "--json", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["records"][0]["name"], "eq.reflection");
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS eq.reflection"));
}

#[test]
fn solve_k_exports_solution() {
    let o = run(&["solve", "k"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json_of(&o);
    let s = &v["solution"];
    assert_eq!(s["D"], 2);
    assert_eq!(s["q"], 0.6);
    assert_eq!(s["shape"], serde_json::json!([16, 16]));
    assert!(s["normalization"].is_string());
}

#[test]
fn transfer_build_mirror_n1() {
    let o = run(&["transfer", "build", "--mirror", "--n", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json_of(&o);
    assert_eq!(v["geometry"], "halfplane");
    assert!(!v["coefficients"].as_array().unwrap().is_empty());
}
