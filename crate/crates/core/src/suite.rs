//! Named check groups, run configuration and the versioned JSON report.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::report::{CheckReport, Mode};
use crate::{classical, eqverify, focknum, oscalgebra, transfer};

pub const SCHEMA: u32 = 1;
pub const DEFAULT_Q: f64 = 0.6;
pub const DEFAULT_DIM: usize = 3;
pub const DEFAULT_SOLVER_DIM: usize = 2;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_X: u32 = 1;
pub const CONFLUENCE_WORDS: usize = 500;
pub const REFACTOR_POINTS: usize = 20;
/// q used by the similarity check in the full report.
pub const SIMILARITY_Q: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SuiteError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub type SuiteResult<T> = Result<T, SuiteError>;

/// Every runnable group of checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    Tetra,
    MlExchange,
    Reflection,
    Cform,
    Statement22,
    Statement23,
    Sign311,
    Similarity224,
    Involution,
    Genus,
    Refactor,
    Statements,
    Demo,
    SolveR,
    SolveK,
}

impl Check {
    pub fn supports_fock(self) -> bool {
        matches!(
            self,
            Check::Tetra | Check::MlExchange | Check::Reflection | Check::Cform | Check::Statement22 | Check::Statement23
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub mode: Mode,
    pub dim: Option<usize>,
    pub q: f64,
    pub seed: u64,
    pub x: u32,
    pub all: bool,
    pub mirror: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            n: None,
            m: None,
            mode: Mode::Symbolic,
            dim: None,
            q: DEFAULT_Q,
            seed: DEFAULT_SEED,
            x: DEFAULT_X,
            all: false,
            mirror: false,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self, check: Option<Check>) -> SuiteResult<()> {
        let bad = |s: String| Err(SuiteError::Invalid(s));
        if !self.q.is_finite() || self.q == 0.0 || self.q.abs() >= 1.0 {
            return bad(format!("--q must satisfy 0 < |q| < 1, got {}", self.q));
        }
        if let Some(d) = self.dim {
            if !(2..=12).contains(&d) {
                return bad(format!("--dim must be in 2..=12, got {d}"));
            }
        }
        if self.n == Some(0) || self.m == Some(0) {
            return bad("--n and --m must be positive".into());
        }
        if self.x == 0 {
            return bad("--x must be positive".into());
        }
        if !matches!(self.mode, Mode::Symbolic | Mode::Fock) {
            return bad("--mode must be symbolic or fock".into());
        }
        let Some(c) = check else { return Ok(()) };
        if self.mode == Mode::Fock && !c.supports_fock() {
            return bad(format!("{c:?} has no fock mode"));
        }
        if self.mirror && c != Check::Involution {
            return bad("--mirror applies to classical involution only".into());
        }
        if self.m.is_some() && !matches!(c, Check::Involution | Check::Genus) {
            return bad("--m applies to classical involution and genus only".into());
        }
        let n = self.n.unwrap_or(1);
        match c {
            Check::Statement22 | Check::Statement23 if self.mode == Mode::Symbolic && n > 2 => {
                bad("symbolic half-plane checks are limited to --n <= 2".into())
            }
            Check::Statement22 | Check::Statement23 if n > 3 => bad("half-plane checks are limited to --n <= 3".into()),
            Check::Sign311 if n > 2 => bad("sign311 is limited to --n <= 2".into()),
            Check::Involution if n.max(self.m.unwrap_or(2)) > 3 => bad("involution is limited to sizes <= 3".into()),
            Check::Genus if n.max(self.m.unwrap_or(2)) > 4 => bad("genus is limited to sizes <= 4".into()),
            _ => Ok(()),
        }
    }

    fn dim_or(&self, d: usize) -> usize {
        self.dim.unwrap_or(d)
    }
}

/// Smallest trace truncation `>= 48` at which `|q|^D` is below `1e-14`.
pub fn similarity_trace_dim(q: f64) -> usize {
    let need = (1e-14f64.ln() / q.abs().ln()).ceil() as usize;
    need.max(48)
}

fn eq_group(names: &[&str], cfg: &SuiteConfig) -> Vec<CheckReport> {
    match cfg.mode {
        Mode::Fock => {
            let dim = cfg.dim_or(DEFAULT_DIM);
            names
                .iter()
                .flat_map(|n| [n.to_string(), format!("{n}_control")])
                .filter_map(|n| focknum::fock_check(&n, dim, cfg.q))
                .collect()
        }
        _ => names
            .iter()
            .flat_map(|n| match *n {
                "tetra_ml" => eqverify::check_tetra_ml(),
                "tetra_nn" => eqverify::check_tetra_nn(),
                "tetra_torus" => eqverify::check_tetra_torus(),
                "ml_exchange" => eqverify::check_ml_exchange(),
                "reflection" => eqverify::check_boundary_reflection(),
                "cform" => eqverify::check_cform_equivalence(),
                _ => Vec::new(),
            })
            .collect(),
    }
}

/// Raw reports of one group, controls still separate.
pub fn run_raw(check: Check, cfg: &SuiteConfig) -> SuiteResult<Vec<CheckReport>> {
    cfg.validate(Some(check))?;
    let n = cfg.n.unwrap_or(1);
    Ok(match check {
        Check::Tetra if cfg.all => eq_group(&["tetra_ml", "tetra_nn", "tetra_torus"], cfg),
        Check::Tetra => eq_group(&["tetra_ml"], cfg),
        Check::MlExchange => eq_group(&["ml_exchange"], cfg),
        Check::Reflection => eq_group(&["reflection"], cfg),
        Check::Cform => eq_group(&["cform"], cfg),
        Check::Statement22 => transfer::check_statement_2_2(n, cfg.mode, cfg.dim_or(DEFAULT_DIM), cfg.q),
        Check::Statement23 => {
            let mut v = transfer::check_statement_2_3(n, cfg.mode, cfg.dim_or(DEFAULT_DIM), cfg.q);
            if n == 1 {
                v.push(transfer::check_fold_vs_direct());
            }
            v
        }
        Check::Sign311 => vec![transfer::check_sign_relation_3_11(cfg.n.unwrap_or(2))],
        Check::Similarity224 => {
            let xs: Vec<u32> = if cfg.all { vec![1, 2] } else { vec![cfg.x] };
            transfer::check_similarity_2_24(cfg.q, similarity_trace_dim(cfg.q), &xs, cfg.dim_or(DEFAULT_DIM))
        }
        Check::Involution => {
            let (n, m) = (cfg.n.unwrap_or(2), cfg.m.unwrap_or(2));
            if cfg.all {
                vec![
                    classical::check_involution(n, m, false),
                    classical::check_involution(n, m, true),
                    classical::check_involution_control(n),
                ]
            } else if cfg.mirror {
                vec![classical::check_involution(n, m, true), classical::check_involution_control(n)]
            } else {
                vec![classical::check_involution(n, m, false)]
            }
        }
        Check::Genus => {
            if cfg.all {
                [(2, 2), (2, 3), (3, 3)].iter().map(|&(a, b)| classical::genus_check(a, b, cfg.seed)).collect()
            } else {
                vec![classical::genus_check(cfg.n.unwrap_or(2), cfg.m.unwrap_or(2), cfg.seed)]
            }
        }
        Check::Refactor => vec![classical::check_refactorize(REFACTOR_POINTS, cfg.seed)],
        Check::Statements => {
            let mut v = classical::check_statement_3_1(REFACTOR_POINTS, cfg.seed);
            v.extend(classical::check_statement_3_2(REFACTOR_POINTS, cfg.seed));
            v
        }
        Check::Demo => vec![classical::check_variable_change_demo()],
        Check::SolveR => vec![focknum::check_solve_r(cfg.dim_or(DEFAULT_SOLVER_DIM), cfg.q)],
        Check::SolveK => focknum::check_solve_k(cfg.dim_or(DEFAULT_SOLVER_DIM), cfg.q),
    })
}

fn is_control(r: &CheckReport) -> bool {
    r.name.ends_with("_control")
}

/// Folds each negative control into the main record it guards: the control
/// outcome becomes a `control` detail and the main record passes only if the
/// control does. A control attaches to the main record whose name is the
/// longest prefix of the control name with `_control` stripped.
pub fn merge_controls(reports: Vec<CheckReport>) -> Vec<CheckReport> {
    let (controls, mut mains): (Vec<_>, Vec<_>) = reports.into_iter().partition(is_control);
    for c in controls {
        let stem = c.name.trim_end_matches("_control");
        let target = mains
            .iter()
            .enumerate()
            .filter(|(_, m)| stem.starts_with(m.name.as_str()))
            .max_by_key(|(_, m)| m.name.len())
            .map(|(i, _)| i);
        match target {
            Some(i) => {
                let main = &mut mains[i];
                let entry = json!({
                    "name": c.name,
                    "params": c.params,
                    "residual": c.residual,
                    "pass": c.pass,
                    "expect": "violation",
                });
                main.pass &= c.pass;
                main.wall_time_ms += c.wall_time_ms;
                match main.details.get_mut("control") {
                    Some(Value::Array(a)) => a.push(entry),
                    _ => {
                        main.details.insert("control".into(), Value::Array(vec![entry]));
                    }
                }
            }
            None => mains.push(c),
        }
    }
    mains
}

fn params_key(r: &CheckReport) -> String {
    serde_json::to_string(&r.params).unwrap_or_default()
}

/// Deterministic record order: by name, then by serialized params.
pub fn sort_records(v: &mut [CheckReport]) {
    v.sort_by(|a, b| a.name.cmp(&b.name).then_with(|| params_key(a).cmp(&params_key(b))));
}

/// One group, controls merged, sorted.
pub fn run_check(check: Check, cfg: &SuiteConfig) -> SuiteResult<Vec<CheckReport>> {
    let mut v = merge_controls(run_raw(check, cfg)?);
    sort_records(&mut v);
    Ok(v)
}

/// Every unit of the acceptance run, each producing an independent group.
fn acceptance_jobs(seed: u64) -> Vec<Box<dyn Fn() -> Vec<CheckReport> + Send + Sync>> {
    let q = DEFAULT_Q;
    let d = DEFAULT_DIM;
    let mut jobs: Vec<Box<dyn Fn() -> Vec<CheckReport> + Send + Sync>> = vec![
        Box::new(eqverify::check_tetra_ml),
        Box::new(eqverify::check_tetra_nn),
        Box::new(eqverify::check_tetra_torus),
        Box::new(eqverify::check_ml_exchange),
        Box::new(eqverify::check_boundary_reflection),
        Box::new(eqverify::check_cform_equivalence),
        Box::new(move || transfer::check_statement_2_2(1, Mode::Symbolic, d, q)),
        Box::new(move || transfer::check_statement_2_2(2, Mode::Fock, d, q)),
        Box::new(move || transfer::check_statement_2_3(1, Mode::Symbolic, d, q)),
        Box::new(move || transfer::check_statement_2_3(2, Mode::Fock, d, q)),
        Box::new(|| vec![transfer::check_fold_vs_direct()]),
        Box::new(move || vec![transfer::check_completeness(1, d, q)]),
        Box::new(move || vec![transfer::check_completeness(2, d, q)]),
        Box::new(|| transfer::check_similarity_2_24(SIMILARITY_Q, similarity_trace_dim(SIMILARITY_Q), &[1, 2], DEFAULT_DIM)),
        Box::new(|| vec![transfer::check_sign_relation_3_11(2)]),
        Box::new(|| vec![transfer::check_torus_commutativity(2, 2)]),
        Box::new(|| vec![classical::check_involution(2, 2, false)]),
        Box::new(|| vec![classical::check_involution(2, 2, true), classical::check_involution_control(2)]),
        Box::new(move || [(2, 2), (2, 3), (3, 3)].iter().map(|&(a, b)| classical::genus_check(a, b, seed)).collect()),
        Box::new(move || vec![classical::check_refactorize(REFACTOR_POINTS, seed)]),
        Box::new(move || classical::check_statement_3_1(REFACTOR_POINTS, seed)),
        Box::new(move || classical::check_statement_3_2(REFACTOR_POINTS, seed)),
        Box::new(|| vec![classical::check_variable_change_demo()]),
        Box::new(|| vec![classical::check_brackets()]),
        Box::new(move || vec![oscalgebra::check_confluence(CONFLUENCE_WORDS, seed)]),
        Box::new(move || vec![focknum::check_solve_r(3, q)]),
        Box::new(move || focknum::check_solve_k(DEFAULT_SOLVER_DIM, q)),
    ];
    for name in eqverify::IDENTITY_NAMES.iter().filter(|n| !n.ends_with("_control")) {
        let main = name.to_string();
        jobs.push(Box::new(move || {
            [main.clone(), format!("{main}_control")].iter().filter_map(|n| focknum::fock_check(n, d, q)).collect()
        }));
    }
    jobs
}

/// The full acceptance set, run concurrently; ordering is by name.
pub fn full_report(seed: u64) -> Vec<CheckReport> {
    let groups: Vec<Vec<CheckReport>> = acceptance_jobs(seed).par_iter().map(|job| merge_controls(job())).collect();
    let mut all: Vec<CheckReport> = groups.into_iter().flatten().collect();
    sort_records(&mut all);
    all
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: u32,
    pub pass: bool,
    pub records: Vec<CheckReport>,
}

impl Report {
    pub fn new(mut records: Vec<CheckReport>) -> Self {
        sort_records(&mut records);
        let pass = records.iter().all(|r| r.pass);
        Self { schema: SCHEMA, pass, records }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Report with every `wall_time_ms` zeroed, for rerun comparisons.
pub fn without_timings(r: &Report) -> Report {
    let mut r = r.clone();
    for rec in &mut r.records {
        rec.wall_time_ms = 0.0;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Residual;

    #[test]
    fn controls_attach_to_longest_prefix() {
        let v = vec![
            CheckReport::exact("a.x", Residual::ExactZero),
            CheckReport::exact("a.xy", Residual::ExactZero),
            CheckReport::control("a.xy_control", Residual::ExactZero, 0.0),
            CheckReport::control("a.x_wrong_control", Residual::Value(1.0), 1e-6),
        ];
        let mut m = merge_controls(v);
        sort_records(&mut m);
        assert_eq!(m.len(), 2);
        assert!(m[0].pass && m[0].details.contains_key("control"));
        assert!(!m[1].pass, "a control that does not bite fails its main record");
    }

    #[test]
    fn validation() {
        let mut c = SuiteConfig::default();
        assert!(c.validate(Some(Check::Tetra)).is_ok());
        c.q = 1.0;
        assert!(c.validate(None).is_err());
        let c = SuiteConfig { mode: Mode::Fock, ..Default::default() };
        assert!(c.validate(Some(Check::Sign311)).is_err());
        let c = SuiteConfig { mirror: true, ..Default::default() };
        assert!(c.validate(Some(Check::Tetra)).is_err());
        assert_eq!(similarity_trace_dim(0.5), 48);
        assert_eq!(similarity_trace_dim(0.6), 64);
    }

    #[test]
    fn tetra_all_gives_three_passing_records() {
        let c = SuiteConfig { all: true, ..Default::default() };
        let v = run_check(Check::Tetra, &c).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|r| r.pass));
    }
}
