//! Browser bindings: Newton polygons, Fock relation residuals and the small
//! R solve, each returned as a JSON string.

use qolattice::classical::{convex_hull, interior_points, newton_polygon};
use qolattice::coeffring::DeformParam;
use qolattice::focknum;
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_TORUS: usize = 4;
const MAX_DIM: usize = 24;

/// Support, hull and interior count of the spectral curve of an N x M torus.
pub fn newton_polygon_json(n: usize, m: usize, seed: u64) -> Result<String, String> {
    if n == 0 || m == 0 || n > MAX_TORUS || m > MAX_TORUS {
        return Err(format!("N and M must lie in 1..={MAX_TORUS}"));
    }
    let pts = newton_polygon(n, m, seed);
    let hull = convex_hull(&pts);
    Ok(json!({
        "n": n,
        "m": m,
        "seed": seed,
        "support": pts,
        "hull": hull,
        "interior": interior_points(&pts),
        "expected_interior": (n - 1) * (m - 1),
    })
    .to_string())
}

fn parse_param(s: &str) -> Result<DeformParam, String> {
    match s {
        "q" => Ok(DeformParam::Q),
        "-q" => Ok(DeformParam::NEG_Q),
        "q2" | "q^2" => Ok(DeformParam::Q2),
        _ => Err(format!("unknown deformation parameter {s:?} (use q, -q or q2)")),
    }
}

/// Defect of `a- a+ = 1 + p k k'` away from and at the truncation edge, for
/// every `q` in `qs`.
pub fn relation_residual_json(param: &str, dim: usize, qs: &[f64]) -> Result<String, String> {
    let p = parse_param(param)?;
    if !(2..=MAX_DIM).contains(&dim) {
        return Err(format!("D must lie in 2..={MAX_DIM}"));
    }
    let rows: Vec<_> = qs
        .iter()
        .filter(|q| q.is_finite() && q.abs() < 1.0 && **q != 0.0)
        .map(|&q| {
            let (safe, edge) = focknum::relation_defects(p, dim, q);
            json!({"q": q, "safe": safe, "edge": edge})
        })
        .collect();
    Ok(json!({"param": param, "dim": dim, "rows": rows}).to_string())
}

/// The R intertwiner at D = 2.
pub fn solve_r_json(q: f64) -> Result<String, String> {
    if !q.is_finite() || q == 0.0 || q.abs() >= 1.0 {
        return Err("q must satisfy 0 < |q| < 1".into());
    }
    let s = focknum::solve_r(2, q, true).map_err(|e| e.to_string())?;
    let mut v = s.r.to_json();
    v["l_form_residual"] = json!(s.l_form_residual);
    Ok(v.to_string())
}

#[wasm_bindgen(js_name = newtonPolygon)]
pub fn newton_polygon_js(n: usize, m: usize, seed: u32) -> Result<String, JsValue> {
    newton_polygon_json(n, m, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = relationResidual)]
pub fn relation_residual_js(param: &str, dim: usize, qs: Vec<f64>) -> Result<String, JsValue> {
    relation_residual_json(param, dim, &qs).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = solveR)]
pub fn solve_r_js(q: f64) -> Result<String, JsValue> {
    solve_r_json(q).map_err(|e| JsValue::from_str(&e))
}
