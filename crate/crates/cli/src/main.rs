use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use qolattice::coeffring::DeformParam;
use qolattice::focknum;
use qolattice::report::Mode;
use qolattice::suite::{self, Check, Report, SuiteConfig, SCHEMA};
use qolattice::transfer::{LayerOrder, MirrorLattice, TorusLattice};

/// Environment variable setting the worker thread count.
const THREADS_ENV: &str = "QOLATTICE_THREADS";

#[derive(Parser)]
#[command(name = "qolattice", version, about = "Exact and Fock-space checks for the q-oscillator lattice model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Clone)]
struct Flags {
    /// Lattice size N
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Second lattice size M (torus and classical checks)
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Fock truncation D (default 3, solvers 2)
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    q: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Regulator exponent of the traced similarity matrix
    #[arg(long, global = true)]
    x: Option<u32>,
    /// Write the JSON document to PATH instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Run every variant of the selected check
    #[arg(long, global = true)]
    all: bool,
    /// Use the mirror (half-plane) geometry
    #[arg(long, global = true)]
    mirror: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Symbolic,
    Fock,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact identities and transfer-matrix statements
    Check {
        #[arg(value_enum)]
        which: CheckArg,
    },
    /// Build transfer matrices
    Transfer {
        #[arg(value_enum)]
        action: TransferArg,
    },
    /// Classical limit checks
    Classical {
        #[arg(value_enum)]
        which: ClassicalArg,
    },
    /// Numeric intertwiner solvers
    Solve {
        #[arg(value_enum)]
        which: SolveArg,
    },
    /// Full acceptance report
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    Tetra,
    MlExchange,
    Reflection,
    Cform,
    Statement22,
    Statement23,
    Sign311,
    Similarity224,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransferArg {
    Build,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassicalArg {
    Involution,
    Genus,
    Refactor,
    Statements,
    Demo,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveArg {
    R,
    K,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Flags {
    fn config(&self) -> SuiteConfig {
        let d = SuiteConfig::default();
        SuiteConfig {
            n: self.n,
            m: self.m,
            mode: match self.mode {
                Some(ModeArg::Fock) => Mode::Fock,
                _ => Mode::Symbolic,
            },
            dim: self.dim,
            q: self.q.unwrap_or(d.q),
            seed: self.seed.unwrap_or(d.seed),
            x: self.x.unwrap_or(d.x),
            all: self.all,
            mirror: self.mirror,
        }
    }

    /// Names of flags that were given, for rejecting ones a command ignores.
    fn given(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let pairs: [(&str, bool); 9] = [
            ("--n", self.n.is_some()),
            ("--m", self.m.is_some()),
            ("--mode", self.mode.is_some()),
            ("--dim", self.dim.is_some()),
            ("--q", self.q.is_some()),
            ("--seed", self.seed.is_some()),
            ("--x", self.x.is_some()),
            ("--all", self.all),
            ("--mirror", self.mirror),
        ];
        for (name, on) in pairs {
            if on {
                v.push(name);
            }
        }
        v
    }

    fn only(&self, allowed: &[&str], cmd: &str) -> Result<(), Failure> {
        match self.given().into_iter().find(|f| !allowed.contains(f)) {
            Some(f) => Err(Failure::Usage(format!("{f} is not accepted by `{cmd}`"))),
            None => Ok(()),
        }
    }
}

fn check_of(c: CheckArg) -> Check {
    match c {
        CheckArg::Tetra => Check::Tetra,
        CheckArg::MlExchange => Check::MlExchange,
        CheckArg::Reflection => Check::Reflection,
        CheckArg::Cform => Check::Cform,
        CheckArg::Statement22 => Check::Statement22,
        CheckArg::Statement23 => Check::Statement23,
        CheckArg::Sign311 => Check::Sign311,
        CheckArg::Similarity224 => Check::Similarity224,
    }
}

fn classical_of(c: ClassicalArg) -> Check {
    match c {
        ClassicalArg::Involution => Check::Involution,
        ClassicalArg::Genus => Check::Genus,
        ClassicalArg::Refactor => Check::Refactor,
        ClassicalArg::Statements => Check::Statements,
        ClassicalArg::Demo => Check::Demo,
    }
}

fn run_group(check: Check, flags: &Flags) -> Result<(Value, bool), Failure> {
    let cfg = flags.config();
    let records = suite::run_check(check, &cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let report = Report::new(records);
    let pass = report.pass;
    Ok((serde_json::to_value(&report).expect("report serializes"), pass))
}

fn transfer_build(flags: &Flags) -> Result<(Value, bool), Failure> {
    flags.only(&["--n", "--m", "--mirror"], "transfer build")?;
    if flags.mirror {
        if flags.m.is_some() {
            return Err(Failure::Usage("--m does not apply to the mirror geometry".into()));
        }
        let n = flags.n.unwrap_or(1);
        if n > 3 {
            return Err(Failure::Usage("mirror transfer build is limited to --n <= 3".into()));
        }
        let lat = MirrorLattice::new(n);
        let t = lat.halfplane(LayerOrder::UV).map_err(|e| Failure::Runtime(e.to_string()))?;
        let doc = json!({
            "schema": SCHEMA,
            "geometry": "halfplane",
            "n": n,
            "order": "UV",
            "coefficients": t.to_json(&lat.alg),
        });
        Ok((doc, true))
    } else {
        let (n, m) = (flags.n.unwrap_or(2), flags.m.unwrap_or(2));
        if n * m > 9 {
            return Err(Failure::Usage("torus transfer build is limited to N*M <= 9".into()));
        }
        let lat = TorusLattice::new(n, m, DeformParam::Q2);
        let t = lat.transfer().map_err(|e| Failure::Runtime(e.to_string()))?;
        let doc = json!({
            "schema": SCHEMA,
            "geometry": "torus",
            "n": n,
            "m": m,
            "coefficients": t.to_json(&lat.alg),
        });
        Ok((doc, true))
    }
}

fn solve(which: SolveArg, flags: &Flags) -> Result<(Value, bool), Failure> {
    flags.only(&["--dim", "--q"], "solve")?;
    let cfg = flags.config();
    cfg.validate(None).map_err(|e| Failure::Usage(e.to_string()))?;
    let dim = cfg.dim.unwrap_or(suite::DEFAULT_SOLVER_DIM);
    if dim > 3 {
        return Err(Failure::Usage("solvers are limited to --dim <= 3".into()));
    }
    let (check, solution) = match which {
        SolveArg::R => (Check::SolveR, focknum::solve_r(dim, cfg.q, true).map(|s| s.r.to_json())),
        SolveArg::K => (Check::SolveK, focknum::solve_k(dim, cfg.q, false).map(|k| k.to_json())),
    };
    let (mut doc, pass) = run_group(check, flags)?;
    doc["solution"] = solution.unwrap_or(Value::Null);
    Ok((doc, pass))
}

fn dispatch(cli: &Cli) -> Result<(Value, bool), Failure> {
    let f = &cli.flags;
    match &cli.cmd {
        Cmd::Check { which } => {
            if f.mode.is_some() && !check_of(*which).supports_fock() {
                return Err(Failure::Usage("--mode applies to the identity and statement checks only".into()));
            }
            run_group(check_of(*which), f)
        }
        Cmd::Classical { which } => {
            f.only(&["--n", "--m", "--seed", "--all", "--mirror"], "classical")?;
            run_group(classical_of(*which), f)
        }
        Cmd::Transfer { action: TransferArg::Build } => transfer_build(f),
        Cmd::Solve { which } => solve(*which, f),
        Cmd::Report => {
            f.only(&["--seed"], "report")?;
            let report = Report::new(suite::full_report(f.seed.unwrap_or(suite::DEFAULT_SEED)));
            let pass = report.pass;
            Ok((serde_json::to_value(&report).expect("report serializes"), pass))
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Runtime(e.to_string()))
}

fn summary(doc: &Value) -> String {
    let mut out = String::new();
    if let Some(recs) = doc["records"].as_array() {
        for r in recs {
            let verdict = if r["pass"].as_bool() == Some(true) { "PASS" } else { "FAIL" };
            out.push_str(&format!("{verdict} {} {} residual={}\n", r["name"].as_str().unwrap_or("?"), r["params"], r["residual"]));
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|_| dispatch(&cli));
    match outcome {
        Ok((doc, pass)) => {
            let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
            text.push('\n');
            match &cli.flags.json {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, &text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                    print!("{}", summary(&doc));
                }
                None => print!("{text}"),
            }
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
