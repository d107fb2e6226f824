//! Torus and half-plane transfer matrices and the checks built on them.
//!
//! A transfer matrix is the aux-traced product of embedded `L` factors,
//! weighted by `E(λ)` on every `i` space and `E(μ)` on every `j` space. Its
//! coefficient of `λ^n μ^m` is `T_{n,m}`.
//!
//! The half-plane model of size `N` is obtained from the `(N+1) x (N+1)`
//! mirror torus: diagonal sites carry `A_{q^2}`, the off-diagonal sites
//! `u_{ab}` (`a < b`) and `l_{ab}` (`a > b`) carry `A_q`. Folding identifies
//! `u_{ab}` and `l_{ab}` with one bulk site `b_{ab}`, keeping the factors of
//! each torus monomial ordered either upper-left or lower-left.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::classical::{self, CGen, CPoly, CVar, Geometry};
use crate::coeffring::{DeformParam, LaurentPoly};
use crate::eqverify::l_matrix;
use crate::focknum::{self, basis, box_states, max_abs, max_diff, AuxVec, FockRep, LazyMatrix, LazyOp, RepMap, SparseVec};
use crate::linalg;
use crate::opmatrix::{AuxShape, OpMatrix, OpResult};
use crate::oscalgebra::{classical_image, AlgElem, Algebra, SiteId, TensorMonomial};
use crate::report::{CheckReport, Mode, Residual};

/// Coefficients `T_{n,m}` of `λ^n μ^m`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransferPoly {
    pub n_max: usize,
    pub m_max: usize,
    pub coeffs: BTreeMap<(usize, usize), AlgElem>,
}

impl TransferPoly {
    pub fn get(&self, n: usize, m: usize) -> AlgElem {
        self.coeffs.get(&(n, m)).cloned().unwrap_or_else(AlgElem::zero)
    }

    pub fn support(&self) -> Vec<(usize, usize)> {
        self.coeffs.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `((n, m), text)` records, ordered by `(n, m)`.
    pub fn records(&self, alg: &Algebra) -> Vec<((usize, usize), String)> {
        self.coeffs.iter().map(|(&k, x)| (k, alg.format(x))).collect()
    }

    pub fn to_json(&self, alg: &Algebra) -> Value {
        Value::Array(self.records(alg).into_iter().map(|((n, m), t)| json!([[n, m], t])).collect())
    }

    /// Indices whose coefficients differ, with the number of differing terms.
    pub fn differences(&self, other: &TransferPoly) -> Vec<((usize, usize), usize)> {
        let keys: std::collections::BTreeSet<_> = self.coeffs.keys().chain(other.coeffs.keys()).copied().collect();
        keys.into_iter()
            .filter_map(|(n, m)| {
                let d = self.get(n, m).sub(&other.get(n, m));
                (!d.is_zero()).then(|| ((n, m), d.len()))
            })
            .collect()
    }

    fn insert_add(&mut self, key: (usize, usize), x: &AlgElem) {
        let e = self.coeffs.entry(key).or_insert_with(AlgElem::zero);
        e.add_assign(x);
        if e.is_zero() {
            self.coeffs.remove(&key);
        }
    }
}

fn aux_labels(n: usize, m: usize) -> (Vec<String>, Vec<String>) {
    ((0..n).map(|a| format!("i{a}")).collect(), (0..m).map(|b| format!("j{b}")).collect())
}

/// Shape `[i0 .. i{n-1}, j0 .. j{m-1}]`.
pub fn torus_shape(n: usize, m: usize) -> AuxShape {
    let (i, j) = aux_labels(n, m);
    AuxShape::qubits(&i.iter().chain(j.iter()).collect::<Vec<_>>())
}

/// Trace of an operator matrix over `[i.., j..]`, weighted by `λ^(Σ i) μ^(Σ j)`.
pub fn weighted_trace(p: &OpMatrix, n: usize, m: usize) -> TransferPoly {
    let shape = p.shape().clone();
    let mut t = TransferPoly { n_max: n, m_max: m, coeffs: BTreeMap::new() };
    for (&(r, c), x) in p.entries() {
        if r == c {
            let d = shape.digits(r);
            let key = (d[..n].iter().sum(), d[n..].iter().sum());
            t.insert_add(key, x);
        }
    }
    t
}

/// Row-major product of `L(site(a, b))` on `(i_a, j_b)`.
pub fn torus_monodromy(
    alg: &Algebra,
    n: usize,
    m: usize,
    site: impl Fn(usize, usize) -> Option<SiteId>,
) -> OpResult<OpMatrix> {
    let shape = torus_shape(n, m);
    let (i, j) = aux_labels(n, m);
    let mut factors = Vec::new();
    for a in 0..n {
        for b in 0..m {
            if let Some(s) = site(a, b) {
                factors.push(l_matrix(s).embed(&[&i[a], &j[b]], &shape)?);
            }
        }
    }
    if factors.is_empty() {
        return Ok(OpMatrix::identity(shape));
    }
    OpMatrix::product(&factors, alg)
}

/// Plain `N x M` torus with one site per vertex, declared row-major so that
/// site ids match [`classical::site_of`] for [`Geometry::Torus`].
#[derive(Debug, Clone)]
pub struct TorusLattice {
    pub n: usize,
    pub m: usize,
    pub alg: Algebra,
    pub sites: Vec<SiteId>,
}

impl TorusLattice {
    pub fn new(n: usize, m: usize, param: DeformParam) -> Self {
        let mut alg = Algebra::new();
        let mut sites = Vec::new();
        for a in 0..n {
            for b in 0..m {
                sites.push(alg.declare(&format!("t{a}{b}"), param).expect("fresh label"));
            }
        }
        Self { n, m, alg, sites }
    }

    pub fn transfer(&self) -> OpResult<TransferPoly> {
        let p = torus_monodromy(&self.alg, self.n, self.m, |a, b| Some(self.sites[a * self.m + b]))?;
        Ok(weighted_trace(&p, self.n, self.m))
    }
}

/// Generic torus transfer matrix with an arbitrary site assignment.
pub fn build_torus_transfer(
    alg: &Algebra,
    n: usize,
    m: usize,
    site: impl Fn(usize, usize) -> Option<SiteId>,
) -> OpResult<TransferPoly> {
    Ok(weighted_trace(&torus_monodromy(alg, n, m, site)?, n, m))
}

/// Order of the two mirror-identified factors in the half-plane model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerOrder {
    /// Upper (`a < b`, the `U` vertex) factor to the left.
    UV,
    /// Lower (`a > b`, the `V` vertex) factor to the left.
    VU,
}

impl LayerOrder {
    pub fn name(self) -> &'static str {
        match self {
            LayerOrder::UV => "UV",
            LayerOrder::VU => "VU",
        }
    }
}

/// Mirror torus of size `(N+1) x (N+1)` and its folded half-plane sites.
#[derive(Debug, Clone)]
pub struct MirrorLattice {
    pub n: usize,
    pub alg: Algebra,
    pub diag: Vec<SiteId>,
    pub upper: BTreeMap<(usize, usize), SiteId>,
    pub lower: BTreeMap<(usize, usize), SiteId>,
    pub bulk: BTreeMap<(usize, usize), SiteId>,
}

impl MirrorLattice {
    pub fn new(n: usize) -> Self {
        Self::with_params(n, &vec![DeformParam::Q2; n + 1], DeformParam::Q)
    }

    /// `diag[a]` is the algebra of boundary site `a`.
    pub fn with_params(n: usize, diag: &[DeformParam], bulk: DeformParam) -> Self {
        let mut alg = Algebra::new();
        let d = (0..=n).map(|a| alg.declare(&format!("d{a}"), diag[a]).expect("fresh label")).collect();
        let (mut upper, mut lower, mut bulk_sites) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
        for a in 0..=n {
            for b in a + 1..=n {
                upper.insert((a, b), alg.declare(&format!("u{a}{b}"), bulk).expect("fresh label"));
                lower.insert((a, b), alg.declare(&format!("l{a}{b}"), bulk).expect("fresh label"));
                bulk_sites.insert((a, b), alg.declare(&format!("b{a}{b}"), bulk).expect("fresh label"));
            }
        }
        Self { n, alg, diag: d, upper, lower, bulk: bulk_sites }
    }

    /// Site of torus vertex `(a, b)`.
    pub fn torus_site(&self, a: usize, b: usize) -> SiteId {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => self.diag[a],
            std::cmp::Ordering::Less => self.upper[&(a, b)],
            std::cmp::Ordering::Greater => self.lower[&(b, a)],
        }
    }

    /// Sites that survive folding: boundary then bulk.
    pub fn folded_sites(&self) -> Vec<SiteId> {
        self.diag.iter().chain(self.bulk.values()).copied().collect()
    }

    /// Mirror-torus transfer matrix; without `with_boundary` the diagonal
    /// factors are left out.
    pub fn torus(&self, with_boundary: bool) -> OpResult<TransferPoly> {
        let s = self.n + 1;
        build_torus_transfer(&self.alg, s, s, |a, b| (with_boundary || a != b).then(|| self.torus_site(a, b)))
    }

    fn fold_site(&self, s: SiteId) -> (SiteId, bool) {
        for (k, &u) in &self.upper {
            if u == s {
                return (self.bulk[k], false);
            }
        }
        for (k, &l) in &self.lower {
            if l == s {
                return (self.bulk[k], true);
            }
        }
        (s, false)
    }

    /// Fold a mirror-torus transfer matrix onto the half-plane sites.
    pub fn fold(&self, t: &TransferPoly, order: LayerOrder) -> OpResult<TransferPoly> {
        let mut out = TransferPoly { n_max: t.n_max, m_max: t.m_max, coeffs: BTreeMap::new() };
        for (&key, x) in &t.coeffs {
            let mut acc = AlgElem::zero();
            for (mono, c) in x.terms() {
                let (mut up, mut lo) = (TensorMonomial::one(), TensorMonomial::one());
                for (s, m) in mono.sites() {
                    match self.fold_site(s) {
                        (b, true) => lo.set(b, m),
                        (b, false) => up.set(b, m),
                    }
                }
                let a = AlgElem::term(up, c.clone());
                let b = AlgElem::term(lo, LaurentPoly::one());
                let prod = match order {
                    LayerOrder::UV => self.alg.mul(&a, &b)?,
                    LayerOrder::VU => self.alg.mul(&b, &a)?,
                };
                acc.add_assign(&prod);
            }
            if !acc.is_zero() {
                out.coeffs.insert(key, acc);
            }
        }
        Ok(out)
    }

    pub fn halfplane(&self, order: LayerOrder) -> OpResult<TransferPoly> {
        self.fold(&self.torus(true)?, order)
    }
}

/// Half-plane transfer matrix of size `N` via the mirror fold.
pub fn build_halfplane_transfer_folded(n: usize, order: LayerOrder) -> OpResult<(MirrorLattice, TransferPoly)> {
    let lat = MirrorLattice::new(n);
    let t = lat.halfplane(order)?;
    Ok((lat, t))
}

/// Direct `N = 1` monodromy on `[i0, i1, j0, j1]`:
/// `d0 · U · V · d1` for [`LayerOrder::UV`] and `d0 · V · U · d1` otherwise,
/// with `U = L(b01)` on `(i0, j1)`, `V = L(b01)` on `(i1, j0)`.
pub fn direct_n1_monodromy(lat: &MirrorLattice, order: LayerOrder) -> OpResult<OpMatrix> {
    assert_eq!(lat.n, 1, "direct construction is for N = 1");
    let shape = torus_shape(2, 2);
    let b = lat.bulk[&(0, 1)];
    let u = l_matrix(b).embed(&["i0", "j1"], &shape)?;
    let v = l_matrix(b).embed(&["i1", "j0"], &shape)?;
    let d0 = l_matrix(lat.diag[0]).embed(&["i0", "j0"], &shape)?;
    let d1 = l_matrix(lat.diag[1]).embed(&["i1", "j1"], &shape)?;
    let mid = match order {
        LayerOrder::UV => [u, v],
        LayerOrder::VU => [v, u],
    };
    OpMatrix::product(&[d0, mid[0].clone(), mid[1].clone(), d1], &lat.alg)
}

pub fn build_halfplane_transfer_direct_n1(lat: &MirrorLattice, order: LayerOrder) -> OpResult<TransferPoly> {
    Ok(weighted_trace(&direct_n1_monodromy(lat, order)?, 2, 2))
}

fn exact_residual(diffs: &[((usize, usize), usize)], first: Option<String>) -> Residual {
    if diffs.is_empty() {
        Residual::ExactZero
    } else {
        Residual::Nonzero { entries: diffs.len(), witness: first.unwrap_or_default() }
    }
}

fn witness_of(a: &TransferPoly, b: &TransferPoly, alg: &Algebra) -> Option<String> {
    a.differences(b).first().map(|&((n, m), _)| format!("T_{n}{m}: {}", alg.format(&a.get(n, m).sub(&b.get(n, m)))))
}

/// Folded `N = 1` half-plane transfer matrix equals the direct construction,
/// for both layer orders.
pub fn check_fold_vs_direct() -> CheckReport {
    CheckReport::timed(|| {
        let run = || -> OpResult<(Residual, Vec<(usize, usize)>)> {
            let lat = MirrorLattice::new(1);
            let torus = lat.torus(true)?;
            let mut diffs = Vec::new();
            let mut witness = None;
            for order in [LayerOrder::UV, LayerOrder::VU] {
                let f = lat.fold(&torus, order)?;
                let d = build_halfplane_transfer_direct_n1(&lat, order)?;
                diffs.extend(f.differences(&d));
                witness = witness.or_else(|| witness_of(&f, &d, &lat.alg));
            }
            Ok((exact_residual(&diffs, witness), lat.fold(&torus, LayerOrder::UV)?.support()))
        };
        match run() {
            Ok((r, support)) => CheckReport::exact("transfer.fold_vs_direct", r)
                .param("n", 1)
                .detail("support", json!(support)),
            Err(e) => error_report("transfer.fold_vs_direct", Mode::Symbolic, e),
        }
    })
}

fn error_report(name: &str, mode: Mode, e: impl std::fmt::Display) -> CheckReport {
    CheckReport::new(name, mode, Residual::Nonzero { entries: 0, witness: format!("error: {e}") }, false)
}

/// Max relative difference of two transfer polynomials in the Fock
/// representation, over box states of occupation `< dim`.
pub fn fock_difference(a: &TransferPoly, b: &TransferPoly, alg: &Algebra, sites: &[SiteId], dim: usize, q: f64) -> f64 {
    let reps = RepMap::for_algebra(alg, dim, q);
    let states = box_states(alg.site_ids().count(), sites, dim);
    let keys: std::collections::BTreeSet<_> = a.coeffs.keys().chain(b.coeffs.keys()).copied().collect();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for (n, m) in keys {
        let (Ok(mut x), Ok(mut y)) = (LazyOp::new(&a.get(n, m), &reps), LazyOp::new(&b.get(n, m), &reps)) else {
            return f64::INFINITY;
        };
        for s in &states {
            let (u, v) = (x.apply(&basis(s)), y.apply(&basis(s)));
            worst = worst.max(max_diff(&u, &v));
            scale = scale.max(max_abs(&u)).max(max_abs(&v));
        }
    }
    worst / scale.max(f64::MIN_POSITIVE)
}

/// The two layer orders give the same half-plane transfer matrix.
/// The control drops the boundary factors, at size at least 2.
pub fn check_statement_2_2(n: usize, mode: Mode, dim: usize, q: f64) -> Vec<CheckReport> {
    let compare = |with_boundary: bool| -> OpResult<(TransferPoly, TransferPoly, MirrorLattice)> {
        // at N = 1 the two bulk factors sit on disjoint aux spaces once the
        // boundary is gone, so the control needs N >= 2 to bite
        let size = if with_boundary { n } else { n.max(2) };
        let lat = MirrorLattice::new(size);
        let torus = lat.torus(with_boundary)?;
        let a = lat.fold(&torus, LayerOrder::UV)?;
        let b = lat.fold(&torus, LayerOrder::VU)?;
        Ok((a, b, lat))
    };
    let one = |name: &str, with_boundary: bool, is_control: bool| -> CheckReport {
        CheckReport::timed(|| {
            let (a, b, lat) = match compare(with_boundary) {
                Ok(x) => x,
                Err(e) => return error_report(name, mode, e),
            };
            let rep = match mode {
                Mode::Symbolic => {
                    let r = exact_residual(&a.differences(&b), witness_of(&a, &b, &lat.alg));
                    if is_control {
                        CheckReport::control(name, r, 0.0)
                    } else {
                        CheckReport::exact(name, r)
                    }
                }
                _ => {
                    let r = fock_difference(&a, &b, &lat.alg, &lat.folded_sites(), dim, q);
                    let rep = if is_control {
                        CheckReport::control(name, Residual::Value(r), 1e-6)
                    } else {
                        CheckReport::numeric(name, Mode::Fock, r, 1e-9)
                    };
                    rep.param("dim", dim).param("q", q)
                }
            };
            rep.param("n", lat.n).detail("coefficients", a.len())
        })
    };
    vec![one("transfer.statement22", true, false), one("transfer.statement22_control", false, true)]
}

/// Exact commutators among all coefficients; returns the nonzero pairs.
pub fn symbolic_commutators(t: &TransferPoly, alg: &Algebra) -> OpResult<Vec<((usize, usize), (usize, usize), usize)>> {
    let keys = t.support();
    let pairs: Vec<_> = keys.iter().enumerate().flat_map(|(i, &a)| keys[i + 1..].iter().map(move |&b| (a, b))).collect();
    let results: Vec<OpResult<Option<_>>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let c = alg.commutator(&t.get(a.0, a.1), &t.get(b.0, b.1))?;
            Ok((!c.is_zero()).then(|| (a, b, c.len())))
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        if let Some(x) = r? {
            out.push(x);
        }
    }
    Ok(out)
}

/// Max over box states and index pairs of `|[T_a, T_b] s|`, relative to the
/// largest `|T_a T_b s|`.
pub fn fock_commutators(t: &TransferPoly, alg: &Algebra, sites: &[SiteId], dim: usize, q: f64) -> f64 {
    let reps = RepMap::for_algebra(alg, dim, q);
    let ops: Vec<LazyOp> = match t.coeffs.values().map(|x| LazyOp::new(x, &reps)).collect() {
        Ok(v) => v,
        Err(_) => return f64::INFINITY,
    };
    let states = box_states(alg.site_ids().count(), sites, dim);
    let (worst, scale) = states
        .par_iter()
        .map_init(
            || ops.clone(),
            |ops, s| {
                let v = basis(s);
                let single: Vec<SparseVec> = ops.iter_mut().map(|o| o.apply(&v)).collect();
                let (mut w, mut sc) = (0.0f64, 0.0f64);
                for a in 0..ops.len() {
                    for b in a + 1..ops.len() {
                        let ab = ops[a].apply(&single[b]);
                        let ba = ops[b].apply(&single[a]);
                        w = w.max(max_diff(&ab, &ba));
                        sc = sc.max(max_abs(&ab)).max(max_abs(&ba));
                    }
                }
                (w, sc)
            },
        )
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));
    worst / scale.max(f64::MIN_POSITIVE)
}

/// All half-plane coefficients commute. The control replaces boundary
/// site 0 by an `A_q` site.
pub fn check_statement_2_3(n: usize, mode: Mode, dim: usize, q: f64) -> Vec<CheckReport> {
    let one = |name: &str, control: bool| -> CheckReport {
        CheckReport::timed(|| {
            let mut diag = vec![DeformParam::Q2; n + 1];
            if control {
                diag[0] = DeformParam::Q;
            }
            let lat = MirrorLattice::with_params(n, &diag, DeformParam::Q);
            let t = match lat.halfplane(LayerOrder::UV) {
                Ok(t) => t,
                Err(e) => return error_report(name, mode, e),
            };
            let k = t.len();
            let rep = match mode {
                Mode::Symbolic => match symbolic_commutators(&t, &lat.alg) {
                    Ok(bad) => {
                        let r = match bad.first() {
                            None => Residual::ExactZero,
                            Some(&(a, b, terms)) => Residual::Nonzero {
                                entries: bad.len(),
                                witness: format!("[T_{}{}, T_{}{}] has {terms} terms", a.0, a.1, b.0, b.1),
                            },
                        };
                        if control {
                            CheckReport::control(name, r, 0.0)
                        } else {
                            CheckReport::exact(name, r)
                        }
                    }
                    Err(e) => error_report(name, mode, e),
                },
                _ => {
                    let r = fock_commutators(&t, &lat.alg, &lat.folded_sites(), dim, q);
                    let rep = if control {
                        CheckReport::control(name, Residual::Value(r), 1e-6)
                    } else {
                        CheckReport::numeric(name, Mode::Fock, r, 1e-9)
                    };
                    rep.param("dim", dim).param("q", q)
                }
            };
            rep.param("n", n)
                .detail("pairs", k * k.saturating_sub(1) / 2)
                .detail("contraction", "E(lambda) on every i space, E(mu) on every j space")
        })
    };
    vec![one("transfer.statement23", false), one("transfer.statement23_control", true)]
}

/// Matrix of `T` on box states of occupation `< dim`, restricted to the box.
pub fn fock_matrix(x: &AlgElem, alg: &Algebra, sites: &[SiteId], dim: usize, q: f64) -> Option<DMatrix<f64>> {
    let reps = RepMap::for_algebra(alg, dim, q);
    let mut op = LazyOp::new(x, &reps).ok()?;
    let states = box_states(alg.site_ids().count(), sites, dim);
    let index: BTreeMap<_, _> = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let mut m = DMatrix::zeros(states.len(), states.len());
    for (c, s) in states.iter().enumerate() {
        for (t, v) in op.image(s) {
            if let Some(&r) = index.get(t) {
                m[(r, c)] = *v;
            }
        }
    }
    Some(m)
}

/// Number of linearly independent non-identity coefficients:
/// `rank {1, T_{n,m}} - 1`, with the relative singular-value tail.
pub fn count_independent(t: &TransferPoly, alg: &Algebra, sites: &[SiteId], dim: usize, q: f64) -> (usize, Vec<f64>) {
    let mats: Vec<DMatrix<f64>> =
        t.coeffs.values().filter_map(|x| fock_matrix(x, alg, sites, dim, q)).collect();
    let size = mats.first().map(|m| m.len()).unwrap_or(1);
    let n = mats.first().map(|m| m.nrows()).unwrap_or(1);
    let mut v = DMatrix::zeros(size, mats.len() + 1);
    v.column_mut(0).copy_from(&DMatrix::<f64>::identity(n, n).reshape_generic(nalgebra::Dyn(size), nalgebra::Dyn(1)));
    for (k, m) in mats.iter().enumerate() {
        v.column_mut(k + 1).copy_from(&m.clone().reshape_generic(nalgebra::Dyn(size), nalgebra::Dyn(1)));
    }
    // QR first: the column count is small, the row count is not
    let r = v.qr().r();
    let sv = linalg::singular_values(&r);
    let top = sv.first().copied().unwrap_or(1.0);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * top).count();
    let tail = sv.iter().rev().take(3).map(|s| s / top).collect();
    (rank.saturating_sub(1), tail)
}

/// Rank of the Jacobian of the classical images of the coefficients at a
/// random point of the surface `k' = c k`, `a+ a- = 1 + k k'`.
pub fn functional_rank(t: &TransferPoly, sites: &[SiteId], c: f64, seed: u64) -> usize {
    let polys: Vec<CPoly> = t.coeffs.values().map(classical_image).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point: BTreeMap<u16, (f64, f64)> =
        sites.iter().map(|s| (s.0, (rng.random_range(0.2..0.9), rng.random_range(0.5..1.5)))).collect();
    let value = |v: CVar| -> f64 {
        match v {
            CVar::Site(s, g) => {
                let (k, ap) = point.get(&s).copied().unwrap_or((0.0, 1.0));
                match g {
                    CGen::K => k,
                    CGen::Kp => c * k,
                    CGen::Ap => ap,
                    CGen::Am => (1.0 + c * k * k) / ap,
                }
            }
            _ => 0.0,
        }
    };
    let mut jac = DMatrix::zeros(polys.len(), 2 * sites.len());
    for (r, f) in polys.iter().enumerate() {
        for (j, s) in sites.iter().enumerate() {
            let (k, ap) = point[&s.0];
            let d = |g| f.derivative(CVar::Site(s.0, g)).eval_f64(value);
            let am = (1.0 + c * k * k) / ap;
            jac[(r, 2 * j)] = d(CGen::K) + c * d(CGen::Kp) + d(CGen::Am) * (2.0 * c * k / ap);
            jac[(r, 2 * j + 1)] = d(CGen::Ap) - d(CGen::Am) * am / ap;
        }
    }
    linalg::rank(&jac, 1e-9)
}

/// Completeness: independent coefficients against `(N+1)(N+2)/2`.
pub fn check_completeness(n: usize, dim: usize, q: f64) -> CheckReport {
    CheckReport::timed(|| {
        let lat = MirrorLattice::new(n);
        let t = match lat.halfplane(LayerOrder::UV) {
            Ok(t) => t,
            Err(e) => return error_report("transfer.completeness", Mode::Fock, e),
        };
        let sites = lat.folded_sites();
        let (count, tail) = count_independent(&t, &lat.alg, &sites, dim, q);
        let expected = ((n + 1) * (n + 2) / 2) as i64;
        let residual = Residual::Count { observed: count as i64, expected };
        CheckReport::new("transfer.completeness", Mode::Fock, residual, count as i64 == expected)
            .param("n", n)
            .param("dim", dim)
            .param("q", q)
            .detail("coefficients", t.len())
            .detail("functional_rank", functional_rank(&t, &sites, -1.0, 1))
            .detail("singular_tail", json!(tail))
    })
}

/// `𝐌 = Tr(k^x M(i_{o0}, j_{o0}) M(i_{o1}, j_{o1}))` over one `A_{-q}` Fock
/// space of dimension `dim_m`, on `[i0, i1, j0, j1]`; `order` lists the
/// vertex index of each `M` factor from left to right.
pub fn build_m_trace(order: [usize; 2], q: f64, x: u32, dim_m: usize) -> DMatrix<f64> {
    let rep = FockRep::new(DeformParam::NEG_Q, dim_m, q);
    let one = DMatrix::<f64>::identity(dim_m, dim_m);
    let local = |r: (usize, usize), c: (usize, usize)| -> Option<DMatrix<f64>> {
        match (r, c) {
            ((0, 0), (0, 0)) => Some(rep.k()),
            ((0, 0), (1, 1)) => Some(rep.am()),
            ((1, 1), (0, 0)) => Some(rep.ap()),
            ((1, 1), (1, 1)) => Some(rep.kp()),
            ((1, 0), (1, 0)) | ((0, 1), (0, 1)) => Some(one.clone()),
            _ => None,
        }
    };
    let kx = rep.k().pow(x);
    let shape = torus_shape(2, 2);
    let mut out = DMatrix::zeros(16, 16);
    for r in 0..16 {
        let dr = shape.digits(r);
        for c in 0..16 {
            let dc = shape.digits(c);
            let mut op = kx.clone();
            let mut nonzero = true;
            for &v in &order {
                match local((dr[v], dr[2 + v]), (dc[v], dc[2 + v])) {
                    Some(m) => op *= m,
                    None => {
                        nonzero = false;
                        break;
                    }
                }
            }
            if nonzero {
                out[(r, c)] = op.trace();
            }
        }
    }
    out
}

/// `max |[𝐌, E(λ) ⊗ E(μ)]| / max |𝐌|` at generic `λ`, `μ`.
pub fn e_commutator(m: &DMatrix<f64>) -> f64 {
    let shape = torus_shape(2, 2);
    let (lam, mu) = (0.37f64, 0.61f64);
    let w = |i: usize| {
        let d = shape.digits(i);
        lam.powi((d[0] + d[1]) as i32) * mu.powi((d[2] + d[3]) as i32)
    };
    let mut worst = 0.0f64;
    for r in 0..16 {
        for c in 0..16 {
            worst = worst.max((m[(r, c)] * (w(c) - w(r))).abs());
        }
    }
    worst / m.amax().max(f64::MIN_POSITIVE)
}

fn scalar_left(s: &DMatrix<f64>, v: &AuxVec) -> AuxVec {
    let mut out = AuxVec::new();
    for (&b, x) in v {
        for a in 0..s.nrows() {
            let f = s[(a, b)];
            if f != 0.0 {
                let e = out.entry(a).or_default();
                for (st, amp) in x {
                    *e.entry(st.clone()).or_insert(0.0) += f * amp;
                }
            }
        }
    }
    out
}

/// Max relative difference of two aux-vector maps over aux basis vectors
/// times box states.
fn residual_over(states: &[focknum::State], mut f: impl FnMut(&AuxVec) -> (AuxVec, AuxVec)) -> f64 {
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    let empty = SparseVec::new();
    for c in 0..16 {
        for s in states {
            let (lhs, rhs) = f(&AuxVec::from([(c, basis(s))]));
            for k in 0..16 {
                let (x, y) = (lhs.get(&k).unwrap_or(&empty), rhs.get(&k).unwrap_or(&empty));
                worst = worst.max(max_diff(x, y));
                scale = scale.max(max_abs(x)).max(max_abs(y));
            }
        }
    }
    worst / scale.max(f64::MIN_POSITIVE)
}

/// Residuals of `𝐌_Y T_VU = T_UV 𝐌_X` and `T_VU 𝐌_Y = 𝐌_X T_UV`, where
/// `𝐌_Y` places the `(i1, j1)` factor first and `𝐌_X` the `(i0, j0)` one.
/// With `same_order`, `𝐌_Y` is used on both sides (the control).
pub fn similarity_residuals(q: f64, x: u32, dim_m: usize, dim: usize, same_order: bool) -> OpResult<(f64, f64)> {
    let lat = MirrorLattice::new(1);
    let reps = RepMap::for_algebra(&lat.alg, dim, q);
    let lazy = |order| -> OpResult<LazyMatrix> {
        let m = direct_n1_monodromy(&lat, order)?;
        Ok(LazyMatrix::new(&m, &reps).expect("entries are K-free"))
    };
    let (mut uv, mut vu) = (lazy(LayerOrder::UV)?, lazy(LayerOrder::VU)?);
    let my = build_m_trace([1, 0], q, x, dim_m);
    let mx = if same_order { my.clone() } else { build_m_trace([0, 1], q, x, dim_m) };
    let states = box_states(lat.alg.site_ids().count(), &lat.folded_sites(), dim);
    let r1 = residual_over(&states, |v| (scalar_left(&my, &vu.apply(v)), uv.apply(&scalar_left(&mx, v))));
    let r2 = residual_over(&states, |v| (vu.apply(&scalar_left(&my, v)), scalar_left(&mx, &uv.apply(v))));
    Ok((r1, r2))
}

/// Similarity of the two `N = 1` monodromies through the traced `M` product.
pub fn check_similarity_2_24(q: f64, dim_m: usize, xs: &[u32], dim: usize) -> Vec<CheckReport> {
    let main = CheckReport::timed(|| {
        let mut worst = 0.0f64;
        let mut per_x = serde_json::Map::new();
        let mut e_comm = 0.0f64;
        let mut tail = 0.0f64;
        for &x in xs {
            match similarity_residuals(q, x, dim_m, dim, false) {
                Ok((a, b)) => {
                    worst = worst.max(a).max(b);
                    per_x.insert(format!("x{x}"), json!([a, b]));
                }
                Err(e) => return error_report("transfer.similarity224", Mode::Fock, e),
            }
            for order in [[1, 0], [0, 1]] {
                let m = build_m_trace(order, q, x, dim_m);
                e_comm = e_comm.max(e_commutator(&m));
                tail = tail.max((build_m_trace(order, q, x, 2 * dim_m) - &m).amax());
            }
        }
        let pass = worst < 1e-8 && e_comm < 1e-10 && tail < 1e-12;
        CheckReport::new("transfer.similarity224", Mode::Fock, Residual::Value(worst), pass)
            .param("q", q)
            .param("dim_m", dim_m)
            .param("dim", dim)
            .param("x", json!(xs))
            .detail("per_x", Value::Object(per_x))
            .detail("e_commutator", e_comm)
            .detail("trace_tail", tail)
    });
    let control = CheckReport::timed(|| {
        let x = xs.first().copied().unwrap_or(1);
        let r = similarity_residuals(q, x, dim_m, dim, true).map(|(a, b)| a.min(b)).unwrap_or(f64::INFINITY);
        CheckReport::control("transfer.similarity224_control", Residual::Value(r), 1e-6)
            .param("q", q)
            .param("x", x)
            .detail("perturbation", "same M ordering on both sides")
    });
    vec![main, control]
}

/// `T_{n,m} = (-1)^(nm + n + m) J_{n,m}` on the `N x M` torus after reducing
/// both sides by the site constraint; returns the mismatching indices.
pub fn sign_relation_mismatches(n: usize, m: usize) -> OpResult<Vec<(usize, usize)>> {
    let lat = TorusLattice::new(n, m, DeformParam::Q2);
    let t = lat.transfer()?;
    let j = classical::korepanov_det(n, m, Geometry::Torus);
    let mut keys: std::collections::BTreeSet<(usize, usize)> = t.coeffs.keys().copied().collect();
    keys.extend(j.keys().map(|&(a, b)| (a as usize, b as usize)));
    let mut bad = Vec::new();
    for (a, b) in keys {
        let lhs = classical_image(&t.get(a, b)).reduce_constraint();
        let sign = if (a * b + a + b) % 2 == 0 { 1 } else { -1 };
        let rhs = j.get(&(a as u32, b as u32)).cloned().unwrap_or_default().scale_int(sign).reduce_constraint();
        if !lhs.sub(&rhs).is_zero() {
            bad.push((a, b));
        }
    }
    Ok(bad)
}

pub fn check_sign_relation_3_11(max_n: usize) -> CheckReport {
    CheckReport::timed(|| {
        let mut bad = Vec::new();
        let mut checked = Vec::new();
        for n in 1..=max_n {
            match sign_relation_mismatches(n, n) {
                Ok(b) => bad.extend(b.into_iter().map(|k| (n, k))),
                Err(e) => return error_report("transfer.sign311", Mode::Symbolic, e),
            }
            checked.push(n);
        }
        let r = match bad.first() {
            None => Residual::ExactZero,
            Some(&(n, (a, b))) => Residual::Nonzero { entries: bad.len(), witness: format!("N=M={n}: (n,m)=({a},{b})") },
        };
        CheckReport::exact("transfer.sign311", r)
            .param("n_max", max_n)
            .detail("sizes", json!(checked))
            .detail("reduction", "site constraint a+ a- = 1 + k k'")
    })
}

/// Exact commutativity of the plain torus transfer coefficients.
pub fn check_torus_commutativity(n: usize, m: usize) -> CheckReport {
    CheckReport::timed(|| {
        let lat = TorusLattice::new(n, m, DeformParam::Q2);
        let r = lat.transfer().and_then(|t| symbolic_commutators(&t, &lat.alg));
        match r {
            Ok(bad) => CheckReport::exact(
                "transfer.torus_commutativity",
                match bad.len() {
                    0 => Residual::ExactZero,
                    k => Residual::Nonzero { entries: k, witness: format!("{:?}", bad[0]) },
                },
            )
            .param("n", n)
            .param("m", m),
            Err(e) => error_report("transfer.torus_commutativity", Mode::Symbolic, e),
        }
    })
}

/// Weighted trace of `Π L(site)` on `(i_a, j_b)` in the listed order.
pub fn transfer_from_factors(alg: &Algebra, size: usize, factors: &[(SiteId, usize, usize)]) -> OpResult<TransferPoly> {
    let shape = torus_shape(size, size);
    let (i, j) = aux_labels(size, size);
    let mats = factors
        .iter()
        .map(|&(s, a, b)| l_matrix(s).embed(&[&i[a], &j[b]], &shape))
        .collect::<OpResult<Vec<_>>>()?;
    Ok(weighted_trace(&OpMatrix::product(&mats, alg)?, size, size))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t00_is_one() {
        let lat = TorusLattice::new(1, 1, DeformParam::Q2);
        assert!(lat.transfer().unwrap().get(0, 0).is_one());
        let (_, t) = build_halfplane_transfer_folded(1, LayerOrder::UV).unwrap();
        assert!(t.get(0, 0).is_one());
        let lat = MirrorLattice::new(1);
        assert!(build_halfplane_transfer_direct_n1(&lat, LayerOrder::VU).unwrap().get(0, 0).is_one());
    }

    #[test]
    fn one_site_torus_by_hand() {
        // trace of L over two spaces: 1 + λ k + μ k' + λ μ
        let lat = TorusLattice::new(1, 1, DeformParam::Q2);
        let t = lat.transfer().unwrap();
        let s = lat.sites[0];
        assert_eq!(t.get(1, 0), AlgElem::gen(s, crate::oscalgebra::Gen::K));
        assert_eq!(t.get(0, 1), AlgElem::gen(s, crate::oscalgebra::Gen::Kp));
        assert!(t.get(1, 1).is_one());
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn folded_matches_direct() {
        assert!(check_fold_vs_direct().pass);
    }

    #[test]
    fn folded_support_is_zero_to_n_plus_one() {
        let (_, t) = build_halfplane_transfer_folded(1, LayerOrder::UV).unwrap();
        assert!(t.support().iter().all(|&(n, m)| n <= 2 && m <= 2));
        assert!(t.coeffs.contains_key(&(2, 2)));
    }

    #[test]
    fn statements_at_n1() {
        for r in check_statement_2_2(1, Mode::Symbolic, 3, 0.6) {
            assert!(r.pass, "{}: {:?}", r.name, r.residual);
        }
        for r in check_statement_2_3(1, Mode::Symbolic, 3, 0.6) {
            assert!(r.pass, "{}: {:?}", r.name, r.residual);
        }
    }

    #[test]
    fn n1_count_is_three() {
        let lat = MirrorLattice::new(1);
        let t = lat.halfplane(LayerOrder::UV).unwrap();
        assert_eq!(count_independent(&t, &lat.alg, &lat.folded_sites(), 4, 0.6).0, 3);
    }

    #[test]
    fn m_trace_commutes_with_spectral_weights() {
        let m = build_m_trace([1, 0], 0.5, 1, 48);
        assert!(e_commutator(&m) < 1e-12);
        assert!(m.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn similarity_holds_and_control_fails() {
        for r in check_similarity_2_24(0.5, 48, &[1, 2], 2) {
            assert!(r.pass, "{}: {:?} {:?}", r.name, r.residual, r.details);
        }
    }

    #[test]
    fn sign_relation_small() {
        assert!(sign_relation_mismatches(1, 1).unwrap().is_empty());
        assert!(check_sign_relation_3_11(2).pass);
    }

    #[test]
    fn torus_transfer_commutes() {
        assert!(check_torus_commutativity(2, 2).pass);
    }

    #[test]
    fn records_are_ordered() {
        let lat = TorusLattice::new(1, 1, DeformParam::Q2);
        let t = lat.transfer().unwrap();
        let r = t.records(&lat.alg);
        assert_eq!(r.first().unwrap().0, (0, 0));
        assert_eq!(r.len(), 4);
    }
}
