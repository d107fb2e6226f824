use qolattice_web::{newton_polygon_json, relation_residual_json, solve_r_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn newton_polygon_interior_matches_genus() {
    for (n, m) in [(2, 2), (2, 3)] {
        let v = parse(newton_polygon_json(n, m, 1).unwrap());
        assert_eq!(v["interior"], v["expected_interior"]);
    }
    assert!(newton_polygon_json(0, 2, 1).is_err());
}

#[test]
fn relation_defect_lives_on_the_edge() {
    let v = parse(relation_residual_json("q2", 4, &[0.3, 0.6, 2.0]).unwrap());
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2, "out-of-range q is skipped");
    for r in rows {
        assert!(r["safe"].as_f64().unwrap() < 1e-14);
        assert!(r["edge"].as_f64().unwrap() > 1e-3);
    }
    assert!(relation_residual_json("x", 4, &[0.5]).is_err());
}

#[test]
fn small_r_solve() {
    let v = parse(solve_r_json(0.6).unwrap());
    assert_eq!(v["nullity"], 1);
    assert!(v["residual"].as_f64().unwrap() < 1e-12);
    assert!(solve_r_json(1.5).is_err());
}
