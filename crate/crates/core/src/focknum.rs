//! Fock representations, numeric evaluation and intertwiner solvers.
//!
//! Site generators act on `|n>` as
//!
//! ```text
//! a+|n> = |n+1>    a-|n> = (1 - p^2n)|n-1>    k|n> = p^n|n>    k'|n> = -p^(n+1)|n>
//! ```
//!
//! so `k'/k = -p` is central. Two evaluation paths are provided: dense
//! `D x D` truncations ([`FockRep`], [`evaluate`]) and an exact lazy action on
//! the unbounded occupation basis ([`LazyOp`]). Identity checks use the lazy
//! action on a box of input states, which needs no truncation margins.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use smallvec::SmallVec;
use thiserror::Error;

use crate::coeffring::DeformParam;
use crate::linalg;
use crate::opmatrix::OpMatrix;
use crate::oscalgebra::{AlgElem, Algebra, Gen, SiteId, SiteMonomial, TensorMonomial};
use crate::report::{CheckReport, Mode, Residual};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("no representation for site #{0}")]
    MissingRep(u16),
    #[error("boundary symbol present but no site pair attached")]
    NoKPair,
    #[error("nullspace is empty; smallest relative singular values {0:?}")]
    EmptyNullspace(Vec<f64>),
    #[error("nullspace has dimension {dim}; smallest relative singular values {tail:?}")]
    NotUnique { dim: usize, tail: Vec<f64> },
    #[error("normalizing element vanishes")]
    BadNormalization,
}

pub type FockResult<T> = Result<T, FockError>;

/// Default numeric deformation parameter.
pub const DEFAULT_Q: f64 = 0.6;

/// Dense truncation of the Fock representation of one site algebra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockRep {
    pub param: DeformParam,
    pub dim: usize,
    pub q: f64,
}

impl FockRep {
    pub fn new(param: DeformParam, dim: usize, q: f64) -> Self {
        Self { param, dim, q }
    }

    pub fn p(&self) -> f64 {
        self.param.value(self.q)
    }

    /// Central ratio `k'/k`.
    pub fn central_ratio(&self) -> f64 {
        -self.p()
    }

    pub fn k(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| if i == j { self.p().powi(i as i32) } else { 0.0 })
    }

    pub fn kp(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| if i == j { -self.p().powi(i as i32 + 1) } else { 0.0 })
    }

    pub fn ap(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| if i == j + 1 { 1.0 } else { 0.0 })
    }

    pub fn am(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(self.dim, self.dim, |i, j| if j == i + 1 { 1.0 - p.powi(2 * j as i32) } else { 0.0 })
    }

    pub fn gen(&self, g: Gen) -> DMatrix<f64> {
        self.mono(g.monomial())
    }

    /// `a+^m k^r k'^s a-^n`; negative powers of the invertible `k`, `k'` are allowed.
    pub fn mono(&self, m: SiteMonomial) -> DMatrix<f64> {
        let p = self.p();
        let diag = DMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i == j {
                p.powi(m.r * i as i32) * (-p.powi(i as i32 + 1)).powi(m.s)
            } else {
                0.0
            }
        });
        self.ap().pow(m.m) * diag * self.am().pow(m.n)
    }
}

/// Representation assignment for the sites of an algebra.
#[derive(Debug, Clone)]
pub struct RepMap {
    pub q: f64,
    pub dim: usize,
    params: BTreeMap<SiteId, DeformParam>,
    kpair: Option<(SiteId, SiteId)>,
}

impl RepMap {
    /// Every site of `alg` in its own Fock representation of dimension `dim`.
    pub fn for_algebra(alg: &Algebra, dim: usize, q: f64) -> Self {
        Self {
            q,
            dim,
            params: alg.site_ids().map(|s| (s, alg.param(s))).collect(),
            kpair: alg.k_pair(),
        }
    }

    pub fn rep(&self, s: SiteId) -> FockResult<FockRep> {
        self.params.get(&s).map(|&p| FockRep::new(p, self.dim, self.q)).ok_or(FockError::MissingRep(s.0))
    }

    /// Scalar by which the boundary symbol rescales `a+` of the first site:
    /// `q` times the central ratio of the second site.
    fn k_base(&self) -> FockResult<(SiteId, f64)> {
        let (s1, s2) = self.kpair.ok_or(FockError::NoKPair)?;
        Ok((s1, self.q * self.rep(s2)?.central_ratio()))
    }
}

/// Dense evaluation on `⊗_{s in sites} C^D`, first site slowest.
pub fn evaluate(x: &AlgElem, sites: &[SiteId], reps: &RepMap) -> FockResult<DMatrix<f64>> {
    let d = reps.dim;
    let total = d.pow(sites.len() as u32);
    let mut out = DMatrix::zeros(total, total);
    for (t, c) in x.terms() {
        let coeff = c.eval_real(reps.q).unwrap_or(f64::NAN);
        let mut m = DMatrix::from_element(1, 1, coeff);
        for &s in sites {
            m = m.kronecker(&reps.rep(s)?.mono(t.get(s)));
        }
        if t.has_k() {
            let (s1, base) = reps.k_base()?;
            let pos = sites.iter().position(|&s| s == s1).ok_or(FockError::MissingRep(s1.0))?;
            let stride = d.pow((sites.len() - pos - 1) as u32);
            for col in 0..total {
                let n = (col / stride) % d;
                let f = base.powi(n as i32);
                m.column_mut(col).scale_mut(f);
            }
        }
        for &s in t.sites().map(|(s, _)| s).collect::<Vec<_>>().iter() {
            if !sites.contains(&s) {
                return Err(FockError::MissingRep(s.0));
            }
        }
        out += m;
    }
    Ok(out)
}

/// Occupation numbers, indexed by site id.
pub type State = SmallVec<[u8; 8]>;

/// Sparse vector over occupation states, deterministic iteration order.
pub type SparseVec = BTreeMap<State, f64>;

#[derive(Debug, Clone)]
struct CompiledTerm {
    coeff: f64,
    sites: SmallVec<[(usize, SiteMonomial); 6]>,
    k: bool,
}

/// Exact action of an element on the unbounded occupation basis.
#[derive(Debug, Clone)]
pub struct LazyOp {
    terms: Vec<CompiledTerm>,
    p: Vec<f64>,
    k_base: Option<(usize, f64)>,
    cache: HashMap<State, Vec<(State, f64)>>,
}

impl LazyOp {
    pub fn new(x: &AlgElem, reps: &RepMap) -> FockResult<Self> {
        let n_sites = reps.params.len();
        let mut p = vec![0.0; n_sites];
        for &s in reps.params.keys() {
            p[s.0 as usize] = reps.rep(s)?.p();
        }
        let terms = x
            .terms()
            .map(|(t, c)| CompiledTerm {
                coeff: c.eval_real(reps.q).unwrap_or(f64::NAN),
                sites: t.sites().map(|(s, m)| (s.0 as usize, m)).collect(),
                k: t.has_k(),
            })
            .collect::<Vec<_>>();
        let k_base = if terms.iter().any(|t| t.k) {
            let (s1, b) = reps.k_base()?;
            Some((s1.0 as usize, b))
        } else {
            None
        };
        Ok(Self { terms, p, k_base, cache: HashMap::new() })
    }

    fn act_term(&self, t: &CompiledTerm, state: &State) -> Option<(State, f64)> {
        let mut amp = t.coeff;
        let mut st = state.clone();
        if t.k {
            let (s1, base) = self.k_base.expect("compiled with a K pair");
            amp *= base.powi(st[s1] as i32);
        }
        for &(i, m) in &t.sites {
            let n = st[i] as u32;
            if m.n > n {
                return None;
            }
            let p = self.p[i];
            for j in 0..m.n {
                amp *= 1.0 - p.powi(2 * (n - j) as i32);
            }
            let n2 = n - m.n;
            amp *= p.powi(m.r * n2 as i32) * (-p.powi(n2 as i32 + 1)).powi(m.s);
            st[i] = (n2 + m.m) as u8;
        }
        (amp != 0.0).then_some((st, amp))
    }

    /// Image of one basis state, memoized.
    pub fn image(&mut self, state: &State) -> &[(State, f64)] {
        if !self.cache.contains_key(state) {
            let mut acc: SparseVec = BTreeMap::new();
            for t in &self.terms {
                if let Some((s, a)) = self.act_term(t, state) {
                    *acc.entry(s).or_insert(0.0) += a;
                }
            }
            self.cache.insert(state.clone(), acc.into_iter().filter(|(_, a)| *a != 0.0).collect());
        }
        &self.cache[state]
    }

    pub fn apply(&mut self, v: &SparseVec) -> SparseVec {
        let mut out: SparseVec = BTreeMap::new();
        for (s, a) in v {
            for (t, b) in self.image(s).to_vec() {
                *out.entry(t).or_insert(0.0) += a * b;
            }
        }
        out
    }
}

/// All states with occupation `< dim` on `sites` and zero elsewhere.
pub fn box_states(n_sites: usize, sites: &[SiteId], dim: usize) -> Vec<State> {
    let mut out = vec![State::from_elem(0, n_sites)];
    for &s in sites {
        let mut next = Vec::with_capacity(out.len() * dim);
        for st in &out {
            for n in 0..dim {
                let mut x = st.clone();
                x[s.0 as usize] = n as u8;
                next.push(x);
            }
        }
        out = next;
    }
    out
}

pub fn basis(s: &State) -> SparseVec {
    BTreeMap::from([(s.clone(), 1.0)])
}

/// Max-abs of `u - v`.
pub fn max_diff(u: &SparseVec, v: &SparseVec) -> f64 {
    let keys: BTreeSet<&State> = u.keys().chain(v.keys()).collect();
    keys.into_iter()
        .map(|k| (u.get(k).copied().unwrap_or(0.0) - v.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(u: &SparseVec) -> f64 {
    u.values().fold(0.0, |m, x| m.max(x.abs()))
}

/// Operator-valued vector: auxiliary index to Fock vector.
pub type AuxVec = BTreeMap<usize, SparseVec>;

fn add_into(acc: &mut SparseVec, v: &SparseVec, scale: f64) {
    for (s, a) in v {
        *acc.entry(s.clone()).or_insert(0.0) += scale * a;
    }
}

/// Lazily evaluated operator matrix.
pub struct LazyMatrix {
    dim: usize,
    entries: BTreeMap<(usize, usize), LazyOp>,
}

impl LazyMatrix {
    pub fn new(m: &OpMatrix, reps: &RepMap) -> FockResult<Self> {
        let mut entries = BTreeMap::new();
        for (&(r, c), x) in m.entries() {
            entries.insert((r, c), LazyOp::new(x, reps)?);
        }
        Ok(Self { dim: m.dim(), entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(A v)_r = Σ_c A_{r c} v_c`.
    pub fn apply(&mut self, v: &AuxVec) -> AuxVec {
        let mut out = AuxVec::new();
        for (&(r, c), op) in self.entries.iter_mut() {
            if let Some(x) = v.get(&c) {
                let w = op.apply(x);
                add_into(out.entry(r).or_default(), &w, 1.0);
            }
        }
        out
    }
}

/// Product of lazily evaluated factors, applied right to left.
pub struct LazyChain {
    factors: Vec<LazyMatrix>,
}

impl LazyChain {
    pub fn new(factors: &[OpMatrix], reps: &RepMap) -> FockResult<Self> {
        Ok(Self { factors: factors.iter().map(|f| LazyMatrix::new(f, reps)).collect::<FockResult<_>>()? })
    }

    pub fn apply(&mut self, v: &AuxVec) -> AuxVec {
        let mut cur = v.clone();
        for f in self.factors.iter_mut().rev() {
            cur = f.apply(&cur);
        }
        cur
    }
}

/// Max-abs of `(lhs - rhs)` over auxiliary basis vectors times box states of
/// occupation `< dim`, and the scale `max(|lhs|, |rhs|)`.
pub fn compare_chains(
    lhs: &[OpMatrix],
    rhs: &[OpMatrix],
    alg: &Algebra,
    dim: usize,
    q: f64,
) -> FockResult<(f64, f64)> {
    let reps = RepMap::for_algebra(alg, dim, q);
    let sites: Vec<SiteId> = alg.site_ids().collect();
    let states = box_states(sites.len(), &sites, dim);
    let aux = lhs.first().or(rhs.first()).map(|m| m.dim()).unwrap_or(1);
    let mut l = LazyChain::new(lhs, &reps)?;
    let mut r = LazyChain::new(rhs, &reps)?;
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    let empty = SparseVec::new();
    for c in 0..aux {
        for s in &states {
            let v = AuxVec::from([(c, basis(s))]);
            let a = l.apply(&v);
            let b = r.apply(&v);
            let keys: BTreeSet<&usize> = a.keys().chain(b.keys()).collect();
            for k in keys {
                let (x, y) = (a.get(k).unwrap_or(&empty), b.get(k).unwrap_or(&empty));
                worst = worst.max(max_diff(x, y));
                scale = scale.max(max_abs(x)).max(max_abs(y));
            }
        }
    }
    Ok((worst, scale))
}

/// Relative Fock residual of `Π lhs = Π rhs`.
pub fn relative_residual(lhs: &[OpMatrix], rhs: &[OpMatrix], alg: &Algebra, dim: usize, q: f64) -> f64 {
    match compare_chains(lhs, rhs, alg, dim, q) {
        Ok((w, s)) => w / s.max(f64::MIN_POSITIVE),
        Err(_) => f64::INFINITY,
    }
}

/// Numeric mirror of one of the exact identities: factors are applied one
/// at a time, so the check is independent of normal ordering.
pub fn fock_check(name: &str, dim: usize, q: f64) -> Option<CheckReport> {
    let (sides, control) = crate::eqverify::identity_sides(name)?;
    Some(CheckReport::timed(|| {
        let r = sides
            .iter()
            .map(|s| relative_residual(&s.lhs, &s.rhs, &s.alg, dim, q))
            .fold(0.0, f64::max);
        let full = format!("fock.{name}");
        let rep = if control {
            CheckReport::control(&full, Residual::Value(r), 1e-6)
        } else {
            CheckReport::numeric(&full, Mode::Fock, r, 1e-10)
        };
        rep.param("dim", dim).param("q", q)
    }))
}

/// `(a+ a- or a- a+) - rhs` evaluated densely: the relation holds on all
/// columns but the truncation edge for `a- a+`.
pub fn edge_defect(param: DeformParam, dim: usize, q: f64) -> Vec<f64> {
    let r = FockRep::new(param, dim, q);
    let p = r.p();
    let one = DMatrix::<f64>::identity(dim, dim);
    let lhs = r.am() * r.ap();
    let rhs = &one + (r.k() * r.kp()) * p;
    let d = lhs - rhs;
    (0..dim).map(|c| d.column(c).amax()).collect()
}

// ---------------------------------------------------------------------------
// Intertwiner solvers

/// Operator-valued `n x n` matrix with dense numeric entries.
pub type NumOpMatrix = Vec<Vec<DMatrix<f64>>>;

/// Multi-site Fock space: one truncated representation per site.
#[derive(Debug, Clone)]
pub struct MultiSite {
    pub reps: Vec<FockRep>,
}

impl MultiSite {
    pub fn dim(&self) -> usize {
        self.reps.iter().map(|r| r.dim).product()
    }

    fn op(&self, site: usize, g: Gen) -> DMatrix<f64> {
        let mut m = DMatrix::from_element(1, 1, 1.0);
        for (i, r) in self.reps.iter().enumerate() {
            let f = if i == site { r.gen(g) } else { DMatrix::identity(r.dim, r.dim) };
            m = m.kronecker(&f);
        }
        m
    }

    pub fn states(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for r in &self.reps {
            out = out
                .into_iter()
                .flat_map(|s| {
                    (0..r.dim).map(move |n| {
                        let mut t = s.clone();
                        t.push(n);
                        t
                    })
                })
                .collect();
        }
        out
    }

    /// `X` of `site` placed on slots `(a, b)` of an `n`-dimensional direct sum.
    pub fn x_sum(&self, site: usize, a: usize, b: usize, n: usize) -> NumOpMatrix {
        let d = self.dim();
        let mut m: NumOpMatrix =
            (0..n).map(|r| (0..n).map(|c| if r == c { DMatrix::identity(d, d) } else { DMatrix::zeros(d, d) }).collect()).collect();
        m[a][a] = self.op(site, Gen::K);
        m[a][b] = self.op(site, Gen::Ap);
        m[b][a] = self.op(site, Gen::Am);
        m[b][b] = self.op(site, Gen::Kp);
        m
    }

    /// `L` of `site` on the spaces `(u, v)` of `n_aux` two-dimensional spaces.
    pub fn l_tensor(&self, site: usize, u: usize, v: usize, n_aux: usize) -> NumOpMatrix {
        let d = self.dim();
        let dim_aux = 1 << n_aux;
        let bit = |x: usize, k: usize| (x >> (n_aux - 1 - k)) & 1;
        let local = |i: (usize, usize), o: (usize, usize)| -> Option<DMatrix<f64>> {
            match (i, o) {
                ((0, 0), (0, 0)) | ((1, 1), (1, 1)) => Some(DMatrix::identity(d, d)),
                ((1, 0), (1, 0)) => Some(self.op(site, Gen::K)),
                ((1, 0), (0, 1)) => Some(self.op(site, Gen::Ap)),
                ((0, 1), (1, 0)) => Some(self.op(site, Gen::Am)),
                ((0, 1), (0, 1)) => Some(self.op(site, Gen::Kp)),
                _ => None,
            }
        };
        (0..dim_aux)
            .map(|r| {
                (0..dim_aux)
                    .map(|c| {
                        let others_equal = (0..n_aux).filter(|&k| k != u && k != v).all(|k| bit(r, k) == bit(c, k));
                        if !others_equal {
                            return DMatrix::zeros(d, d);
                        }
                        local((bit(r, u), bit(r, v)), (bit(c, u), bit(c, v))).unwrap_or_else(|| DMatrix::zeros(d, d))
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn num_matmul(a: &NumOpMatrix, b: &NumOpMatrix) -> NumOpMatrix {
    let n = a.len();
    let d = a[0][0].nrows();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut acc = DMatrix::zeros(d, d);
                    for k in 0..n {
                        if a[i][k].iter().any(|x| *x != 0.0) && b[k][j].iter().any(|x| *x != 0.0) {
                            acc += &a[i][k] * &b[k][j];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn num_chain(factors: &[NumOpMatrix]) -> NumOpMatrix {
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = num_matmul(&acc, f);
    }
    acc
}

/// Integer gradings conserved by every entry of the given matrices, derived
/// from the occupation shifts between nonzero matrix elements.
pub fn conserved_gradings(ms: &MultiSite, mats: &[&NumOpMatrix]) -> Vec<Vec<i64>> {
    let states = ms.states();
    let ns = ms.reps.len();
    let mut diffs: Vec<Vec<i64>> = Vec::new();
    for m in mats {
        for row in m.iter() {
            for e in row {
                let mut shifts: BTreeSet<Vec<i64>> = BTreeSet::new();
                for (i, si) in states.iter().enumerate() {
                    for (o, so) in states.iter().enumerate() {
                        if e[(o, i)].abs() > 1e-14 {
                            shifts.insert((0..ns).map(|k| so[k] as i64 - si[k] as i64).collect());
                        }
                    }
                }
                let shifts: Vec<_> = shifts.into_iter().collect();
                for s in shifts.iter().skip(1) {
                    diffs.push((0..ns).map(|k| s[k] - shifts[0][k]).collect());
                }
            }
        }
    }
    diffs.sort();
    diffs.dedup();
    linalg::integer_nullspace(&diffs, ns)
}

/// Result of an intertwiner solve `Z · S_L = S_R · Z`.
#[derive(Debug, Clone, Serialize)]
pub struct Intertwiner {
    pub dim: usize,
    pub q: f64,
    pub sites: usize,
    pub nullity: usize,
    pub unknowns: usize,
    pub equations: usize,
    pub gradings: Vec<Vec<i64>>,
    pub tail_singular_values: Vec<f64>,
    /// Sparse entries `(out state, in state, value)`, normalized so that the
    /// vacuum-to-vacuum element is 1.
    pub entries: Vec<(Vec<usize>, Vec<usize>, f64)>,
    pub residual: f64,
}

impl Intertwiner {
    pub fn to_json(&self) -> serde_json::Value {
        let total = self.dim.pow(self.sites as u32);
        serde_json::json!({
            "shape": [total, total],
            "D": self.dim,
            "q": self.q,
            "normalization": "vacuum-to-vacuum element = 1",
            "nullity": self.nullity,
            "residual": self.residual,
            "gradings": self.gradings,
            "entries": self.entries.iter().map(|(o, i, v)| serde_json::json!([o, i, v])).collect::<Vec<_>>(),
        })
    }
}

/// Linear system for an intertwiner restricted to grading sectors that fit
/// inside the truncation.
pub struct IntertwinerSystem {
    states: Vec<Vec<usize>>,
    unknowns: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    sector: Vec<Vec<i64>>,
    fits: Vec<bool>,
    pub gradings: Vec<Vec<i64>>,
    blocked: bool,
}

impl IntertwinerSystem {
    /// With `blocked`, unknowns are restricted to pairs in the same sector.
    pub fn new(ms: &MultiSite, gradings: Vec<Vec<i64>>, blocked: bool) -> Self {
        let states = ms.states();
        let dmax = ms.reps.iter().map(|r| r.dim).max().unwrap_or(1);
        let grade = |s: &[usize]| -> Vec<i64> {
            gradings.iter().map(|g| g.iter().zip(s).map(|(a, &b)| a * b as i64).sum()).collect()
        };
        let sector: Vec<Vec<i64>> = states.iter().map(|s| grade(s)).collect();
        // a sector fits when no state of that grading leaves the truncation box
        let ns = ms.reps.len();
        let bound = 3 * dmax + 2;
        let mut outside: BTreeSet<Vec<i64>> = BTreeSet::new();
        let mut st = vec![0usize; ns];
        loop {
            if st.iter().zip(&ms.reps).any(|(&n, r)| n > r.dim - 1) {
                outside.insert(grade(&st));
            }
            let mut k = 0;
            while k < ns {
                st[k] += 1;
                if st[k] < bound {
                    break;
                }
                st[k] = 0;
                k += 1;
            }
            if k == ns {
                break;
            }
        }
        let fits: Vec<bool> = sector.iter().map(|s| !outside.contains(s)).collect();
        let mut unknowns = Vec::new();
        for o in 0..states.len() {
            for i in 0..states.len() {
                let same = !blocked || sector[o] == sector[i];
                if same && fits[o] && fits[i] {
                    unknowns.push((o, i));
                }
            }
        }
        let index = unknowns.iter().enumerate().map(|(k, &u)| (u, k)).collect();
        Self { states, unknowns, index, sector, fits, gradings, blocked }
    }

    /// Rows of `Σ Z[o,m] S_L[m,i] - Σ S_R[o,m] Z[m,i] = 0`; equations touching
    /// an excluded unknown of the same sector are dropped.
    pub fn equations(&self, sl: &NumOpMatrix, sr: &NumOpMatrix) -> DMatrix<f64> {
        let n = self.states.len();
        let related = |a: usize, b: usize| !self.blocked || self.sector[a] == self.sector[b];
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        for (a, row) in sl.iter().enumerate() {
            for (b, l) in row.iter().enumerate() {
                let r = &sr[a][b];
                for i in (0..n).filter(|&i| self.fits[i]) {
                    for o in (0..n).filter(|&o| self.fits[o]) {
                        let mut eq: BTreeMap<usize, f64> = BTreeMap::new();
                        let mut ok = true;
                        for m in 0..n {
                            let x = l[(m, i)];
                            if x != 0.0 {
                                match self.index.get(&(o, m)) {
                                    Some(&k) => *eq.entry(k).or_insert(0.0) += x,
                                    None if related(o, m) => ok = false,
                                    None => {}
                                }
                            }
                            let y = r[(o, m)];
                            if y != 0.0 {
                                match self.index.get(&(m, i)) {
                                    Some(&k) => *eq.entry(k).or_insert(0.0) -= y,
                                    None if related(m, i) => ok = false,
                                    None => {}
                                }
                            }
                        }
                        if ok && eq.values().any(|v| v.abs() > 1e-15) {
                            rows.push(eq.into_iter().collect());
                        }
                    }
                }
            }
        }
        let mut a = DMatrix::zeros(rows.len(), self.unknowns.len());
        for (r, eq) in rows.iter().enumerate() {
            for &(k, v) in eq {
                a[(r, k)] = v;
            }
        }
        a
    }

    pub fn unknown_count(&self) -> usize {
        self.unknowns.len()
    }

    /// Solve for a unique (up to scale) intertwiner.
    pub fn solve(&self, a: &DMatrix<f64>, ms: &MultiSite, q: f64) -> FockResult<Intertwiner> {
        let ns = linalg::nullspace(a, 1e-8);
        let tail = ns.tail(4);
        match ns.dim() {
            0 => return Err(FockError::EmptyNullspace(tail)),
            1 => {}
            d => return Err(FockError::NotUnique { dim: d, tail }),
        }
        let v = &ns.basis[0];
        let vac = *self.index.get(&(0, 0)).ok_or(FockError::BadNormalization)?;
        if v[vac].abs() < 1e-12 {
            return Err(FockError::BadNormalization);
        }
        let z: DVector<f64> = v / v[vac];
        let residual = linalg::max_abs(&(a * &z));
        let entries = self
            .unknowns
            .iter()
            .zip(z.iter())
            .filter(|(_, x)| x.abs() > 1e-13)
            .map(|(&(o, i), &x)| (self.states[o].clone(), self.states[i].clone(), x))
            .collect();
        Ok(Intertwiner {
            dim: ms.reps[0].dim,
            q,
            sites: ms.reps.len(),
            nullity: 1,
            unknowns: self.unknowns.len(),
            equations: a.nrows(),
            gradings: self.gradings.clone(),
            tail_singular_values: tail,
            entries,
            residual,
        })
    }

    /// Residual of a solved intertwiner in another equation system.
    pub fn residual_in(&self, sol: &Intertwiner, a: &DMatrix<f64>) -> f64 {
        let pos: HashMap<(&[usize], &[usize]), f64> =
            sol.entries.iter().map(|(o, i, x)| ((o.as_slice(), i.as_slice()), *x)).collect();
        let z = DVector::from_iterator(
            self.unknowns.len(),
            self.unknowns.iter().map(|&(o, i)| {
                pos.get(&(self.states[o].as_slice(), self.states[i].as_slice())).copied().unwrap_or(0.0)
            }),
        );
        linalg::max_abs(&(a * z))
    }
}

/// Three `A_{q^2}` sites with `X` products on a 3-dimensional direct sum:
/// `S_L = X1_{01} X2_{02} X3_{12}`, `S_R = X3_{12} X2_{02} X1_{01}`.
fn r_setup(dim: usize, q: f64) -> (MultiSite, NumOpMatrix, NumOpMatrix) {
    let ms = MultiSite { reps: vec![FockRep::new(DeformParam::Q2, dim, q); 3] };
    let sl = num_chain(&[ms.x_sum(0, 0, 1, 3), ms.x_sum(1, 0, 2, 3), ms.x_sum(2, 1, 2, 3)]);
    let sr = num_chain(&[ms.x_sum(2, 1, 2, 3), ms.x_sum(1, 0, 2, 3), ms.x_sum(0, 0, 1, 3)]);
    (ms, sl, sr)
}

/// Solved `R` and its residual in the `L`-form relation on three
/// two-dimensional spaces.
#[derive(Debug, Clone, Serialize)]
pub struct RSolution {
    pub r: Intertwiner,
    pub l_form_residual: f64,
}

pub fn solve_r(dim: usize, q: f64, blocked: bool) -> FockResult<RSolution> {
    let (ms, sl, sr) = r_setup(dim, q);
    let gradings = conserved_gradings(&ms, &[&sl, &sr]);
    let sys = IntertwinerSystem::new(&ms, gradings, blocked);
    let a = sys.equations(&sl, &sr);
    let r = sys.solve(&a, &ms, q)?;
    let tl = num_chain(&[ms.l_tensor(0, 0, 1, 3), ms.l_tensor(1, 0, 2, 3), ms.l_tensor(2, 1, 2, 3)]);
    let tr = num_chain(&[ms.l_tensor(2, 1, 2, 3), ms.l_tensor(1, 0, 2, 3), ms.l_tensor(0, 0, 1, 3)]);
    let b = sys.equations(&tl, &tr);
    let l_form_residual = sys.residual_in(&r, &b);
    Ok(RSolution { r, l_form_residual })
}

/// Sites `1, 2, a, b` (in this order) and the products
/// `s̃_L = X2_{βγ} Xb_{βδ} Xb_{αγ} X1_{αδ} Xa_{αβ} Xa_{γδ}` and
/// `s̃_R = Xa_{αβ} Xa_{γδ} X1_{αδ} Xb_{βδ} Xb_{αγ} X2_{βγ}`.
fn k_setup(dim: usize, q: f64, wrong_algebra: bool) -> (MultiSite, NumOpMatrix, NumOpMatrix) {
    let ab = if wrong_algebra { DeformParam::Q2 } else { DeformParam::Q };
    let ms = MultiSite {
        reps: vec![
            FockRep::new(DeformParam::Q2, dim, q),
            FockRep::new(DeformParam::Q2, dim, q),
            FockRep::new(ab, dim, q),
            FockRep::new(ab, dim, q),
        ],
    };
    let (s1, s2, sa, sb) = (0, 1, 2, 3);
    let (al, be, ga, de) = (0, 1, 2, 3);
    let x = |s, i, j| ms.x_sum(s, i, j, 4);
    let sl = num_chain(&[x(s2, be, ga), x(sb, be, de), x(sb, al, ga), x(s1, al, de), x(sa, al, be), x(sa, ga, de)]);
    let sr = num_chain(&[x(sa, al, be), x(sa, ga, de), x(s1, al, de), x(sb, be, de), x(sb, al, ga), x(s2, be, ga)]);
    (ms, sl, sr)
}

pub fn solve_k(dim: usize, q: f64, wrong_algebra: bool) -> FockResult<Intertwiner> {
    let (ms, sl, sr) = k_setup(dim, q, wrong_algebra);
    let gradings = conserved_gradings(&ms, &[&sl, &sr]);
    let sys = IntertwinerSystem::new(&ms, gradings, true);
    let a = sys.equations(&sl, &sr);
    sys.solve(&a, &ms, q)
}

pub fn check_solve_r(dim: usize, q: f64) -> CheckReport {
    CheckReport::timed(|| match solve_r(dim, q, true) {
        Ok(s) => {
            let pass = s.r.nullity == 1 && s.r.residual < 1e-12 && s.l_form_residual < 1e-9;
            CheckReport::new("focknum.solve_r", Mode::Fock, Residual::Value(s.r.residual), pass)
                .param("dim", dim)
                .param("q", q)
                .detail("nullity", s.r.nullity)
                .detail("unknowns", s.r.unknowns)
                .detail("l_form_residual", s.l_form_residual)
                .detail("gradings", serde_json::to_value(&s.r.gradings).unwrap_or_default())
                .detail("tail_singular_values", serde_json::to_value(&s.r.tail_singular_values).unwrap_or_default())
        }
        Err(e) => CheckReport::new("focknum.solve_r", Mode::Fock, Residual::Value(f64::INFINITY), false)
            .param("dim", dim)
            .param("q", q)
            .detail("error", e.to_string()),
    })
}

pub fn check_solve_k(dim: usize, q: f64) -> Vec<CheckReport> {
    let main = CheckReport::timed(|| match solve_k(dim, q, false) {
        Ok(k) => {
            let pass = k.nullity == 1 && k.residual < 1e-10;
            CheckReport::new("focknum.solve_k", Mode::Fock, Residual::Value(k.residual), pass)
                .param("dim", dim)
                .param("q", q)
                .detail("nullity", k.nullity)
                .detail("unknowns", k.unknowns)
                .detail("gradings", serde_json::to_value(&k.gradings).unwrap_or_default())
        }
        Err(e) => CheckReport::new("focknum.solve_k", Mode::Fock, Residual::Value(f64::INFINITY), false)
            .param("dim", dim)
            .param("q", q)
            .detail("error", e.to_string()),
    });
    let control = CheckReport::timed(|| {
        let (observed, note) = match solve_k(dim, q, true) {
            Ok(_) => (1, "unique solution".to_string()),
            Err(FockError::EmptyNullspace(_)) => (0, "empty nullspace".to_string()),
            Err(FockError::NotUnique { dim, .. }) => (dim as i64, "not unique".to_string()),
            Err(e) => (-1, e.to_string()),
        };
        CheckReport::control(
            "focknum.solve_k_wrong_algebra_control",
            Residual::Count { observed, expected: 1 },
            0.0,
        )
        .param("dim", dim)
        .param("a_b_param", "q^2")
        .detail("outcome", note)
    });
    vec![main, control]
}

/// Fock-space relation defects of a single site: max over safe columns and
/// the edge column.
pub fn relation_defects(param: DeformParam, dim: usize, q: f64) -> (f64, f64) {
    let d = edge_defect(param, dim, q);
    let safe = d[..dim - 1].iter().cloned().fold(0.0, f64::max);
    (safe, d[dim - 1])
}

/// Identity `evaluate(1)` and a lookup helper used by tests.
pub fn eval_one(alg: &Algebra, dim: usize, q: f64) -> FockResult<DMatrix<f64>> {
    let sites: Vec<SiteId> = alg.site_ids().collect();
    evaluate(&AlgElem::one(), &sites, &RepMap::for_algebra(alg, dim, q))
}

/// Monomial with `K` only, handy for building test elements.
pub fn k_symbol() -> AlgElem {
    AlgElem::term(TensorMonomial::boundary(), crate::coeffring::LaurentPoly::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscalgebra::Letter;

    #[test]
    fn relations_hold_except_at_edge() {
        for p in DeformParam::ALL {
            let (safe, edge) = relation_defects(p, 5, 0.6);
            assert!(safe < 1e-14, "{p}: {safe}");
            assert!(edge > 1e-3, "{p}: edge defect missing");
        }
    }

    #[test]
    fn kk_prime_eigenvalues() {
        let r = FockRep::new(DeformParam::NEG_Q, 4, 0.6);
        let kk = r.k() * r.kp();
        let p = r.p();
        for n in 0..4 {
            assert!((kk[(n, n)] + p.powi(2 * n as i32 + 1)).abs() < 1e-15);
        }
    }

    #[test]
    fn evaluate_one_is_identity() {
        let mut alg = Algebra::new();
        alg.declare("a", DeformParam::Q).unwrap();
        alg.declare("b", DeformParam::NEG_Q2).unwrap();
        let m = eval_one(&alg, 3, 0.6).unwrap();
        assert_eq!(m, DMatrix::identity(9, 9));
    }

    #[test]
    fn lazy_matches_dense_on_safe_columns() {
        let mut alg = Algebra::new();
        let a = alg.declare("a", DeformParam::Q).unwrap();
        let b = alg.declare("b", DeformParam::NEG_Q).unwrap();
        let w = alg.parse_word("a.am a.ap b.k a.kp b.ap b.am a.am").unwrap();
        let x = alg.normalize_word(&w).unwrap();
        let reps = RepMap::for_algebra(&alg, 6, 0.6);
        let dense = evaluate(&x, &[a, b], &reps).unwrap();
        let mut lazy = LazyOp::new(&x, &reps).unwrap();
        for na in 0..3u8 {
            for nb in 0..3u8 {
                let s: State = SmallVec::from_slice(&[na, nb]);
                let col = na as usize * 6 + nb as usize;
                for (t, v) in lazy.image(&s).to_vec() {
                    let row = t[0] as usize * 6 + t[1] as usize;
                    assert!((dense[(row, col)] - v).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn evaluation_respects_normal_ordering() {
        let mut alg = Algebra::new();
        let a = alg.declare("a", DeformParam::Q2).unwrap();
        let reps = RepMap::for_algebra(&alg, 8, 0.6);
        let word = [Gen::Am, Gen::K, Gen::Ap, Gen::Ap, Gen::Am, Gen::Kp];
        let letters: Vec<Letter> = word.iter().map(|&g| Letter::G(a, g)).collect();
        let x = alg.normalize_word(&letters).unwrap();
        let nf = evaluate(&x, &[a], &reps).unwrap();
        let rep = reps.rep(a).unwrap();
        let mut direct = DMatrix::identity(8, 8);
        for g in word {
            direct *= rep.gen(g);
        }
        // truncation affects only the top two columns
        for c in 0..6 {
            assert!((nf.column(c) - direct.column(c)).amax() < 1e-13);
        }
    }

    #[test]
    fn k_symbol_acts_as_scaling() {
        let mut alg = Algebra::new();
        let s1 = alg.declare("s1", DeformParam::NEG_Q).unwrap();
        let s2 = alg.declare("s2", DeformParam::NEG_Q).unwrap();
        alg.set_k_pair(s1, s2);
        let ap = AlgElem::gen(s1, Gen::Ap);
        let lhs = alg.mul(&k_symbol(), &ap).unwrap();
        let rhs = alg.mul(&ap, &k_symbol()).unwrap();
        let reps = RepMap::for_algebra(&alg, 5, 0.6);
        let l = evaluate(&lhs, &[s1, s2], &reps).unwrap();
        let r = evaluate(&rhs, &[s1, s2], &reps).unwrap();
        let kmat = evaluate(&k_symbol(), &[s1, s2], &reps).unwrap();
        let apm = evaluate(&ap, &[s1, s2], &reps).unwrap();
        // the normal forms agree with the matrix products
        assert!((l - &kmat * &apm).amax() < 1e-13);
        assert!((r - &apm * &kmat).amax() < 1e-13);
    }

    #[test]
    fn r_solution_is_unique_at_d3() {
        let s = solve_r(3, 0.6, true).unwrap();
        assert_eq!(s.r.nullity, 1);
        assert!(s.r.residual < 1e-12);
        assert!(s.l_form_residual < 1e-9, "{}", s.l_form_residual);
    }

    #[test]
    fn blocked_matches_unblocked_at_d2() {
        let blocked = solve_r(2, 0.6, true).unwrap();
        let unblocked = solve_r(2, 0.6, false).unwrap();
        let get = |s: &Intertwiner| -> BTreeMap<(Vec<usize>, Vec<usize>), f64> {
            s.entries.iter().map(|(o, i, v)| ((o.clone(), i.clone()), *v)).collect()
        };
        let (a, b) = (get(&blocked.r), get(&unblocked.r));
        for (k, v) in &b {
            assert!((a.get(k).copied().unwrap_or(0.0) - v).abs() < 1e-10, "{k:?}");
        }
        assert!(blocked.r.residual < 1e-12);
    }

    #[test]
    fn k_solution_unique_and_control_fails() {
        let k = solve_k(2, 0.6, false).unwrap();
        assert_eq!(k.nullity, 1);
        assert!(k.residual < 1e-10);
        assert!(solve_k(2, 0.6, true).is_err());
    }

    #[test]
    fn fock_mirrors_of_identities() {
        for name in crate::eqverify::IDENTITY_NAMES {
            let r = fock_check(name, 3, 0.6).unwrap();
            assert!(r.pass, "{name}: {:?}", r.residual);
        }
    }
}
