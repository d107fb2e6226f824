//! Check reports shared by every verifier and serialized by the suite runner.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Symbolic,
    Fock,
    Numeric,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Symbolic => "symbolic",
            Mode::Fock => "fock",
            Mode::Numeric => "numeric",
        })
    }
}

/// Outcome measure of a check.
#[derive(Debug, Clone, PartialEq)]
pub enum Residual {
    /// Symbolic difference is literally the zero element.
    ExactZero,
    /// Symbolic difference has `entries` nonzero entries; `witness` shows one.
    Nonzero { entries: usize, witness: String },
    /// Max-abs (possibly relative) numeric residual.
    Value(f64),
    /// Integer-valued outcome compared against an expected count.
    Count { observed: i64, expected: i64 },
}

impl Residual {
    pub fn is_exact_zero(&self) -> bool {
        matches!(self, Residual::ExactZero)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Residual::Value(v) => Some(*v),
            _ => None,
        }
    }
}

impl Serialize for Residual {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Residual::ExactZero => s.serialize_str("exact-zero"),
            Residual::Value(v) => s.serialize_f64(*v),
            Residual::Nonzero { entries, witness } => {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("nonzero_entries", entries)?;
                m.serialize_entry("witness", witness)?;
                m.end()
            }
            Residual::Count { observed, expected } => {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("observed", observed)?;
                m.serialize_entry("expected", expected)?;
                m.end()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub params: BTreeMap<String, Value>,
    pub mode: Mode,
    pub residual: Residual,
    pub pass: bool,
    pub wall_time_ms: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, Value>,
}

impl CheckReport {
    pub fn new(name: &str, mode: Mode, residual: Residual, pass: bool) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
            mode,
            residual,
            pass,
            wall_time_ms: 0.0,
            details: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), v.into());
        self
    }

    pub fn detail(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.details.insert(key.to_string(), v.into());
        self
    }

    /// Pass iff the residual is an exact symbolic zero.
    pub fn exact(name: &str, residual: Residual) -> Self {
        let pass = residual.is_exact_zero();
        Self::new(name, Mode::Symbolic, residual, pass)
    }

    /// Pass iff the residual value is below `tol`.
    pub fn numeric(name: &str, mode: Mode, value: f64, tol: f64) -> Self {
        Self::new(name, mode, Residual::Value(value), value.is_finite() && value < tol).detail("tolerance", tol)
    }

    /// Negative control: pass iff the residual shows a genuine violation.
    pub fn control(name: &str, residual: Residual, numeric_floor: f64) -> Self {
        let violated = match &residual {
            Residual::ExactZero => false,
            Residual::Nonzero { .. } => true,
            Residual::Value(v) => !v.is_finite() || *v > numeric_floor,
            Residual::Count { observed, expected } => observed != expected,
        };
        let mode = if matches!(residual, Residual::Value(_)) { Mode::Fock } else { Mode::Symbolic };
        Self::new(name, mode, residual, violated).detail("expect", "violation")
    }

    /// Run `f`, stamping the wall time on the returned report.
    pub fn timed(f: impl FnOnce() -> CheckReport) -> CheckReport {
        let t0 = Instant::now();
        let mut r = f();
        r.wall_time_ms = (t0.elapsed().as_secs_f64() * 1e3 * 1000.0).round() / 1000.0;
        r
    }
}

/// Helper to turn a list of `(key, value)` pairs into JSON params.
pub fn params<const N: usize>(kv: [(&str, Value); N]) -> BTreeMap<String, Value> {
    kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
