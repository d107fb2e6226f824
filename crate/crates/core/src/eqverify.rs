//! Named operator matrices and exact checks of the finite matrix identities.
//!
//! Every identity is checked as `LHS - RHS == 0` in the normal-ordered
//! algebra. Each check comes with a negative control that perturbs one
//! ingredient and must produce a nonzero difference.

use crate::coeffring::{DeformParam, LaurentPoly};
use crate::opmatrix::{AuxShape, OpMatrix, OpResult};
use crate::oscalgebra::{AlgElem, Algebra, Gen, SiteId};
use crate::report::{CheckReport, Residual};

/// Direct-sum slots of the four-dimensional auxiliary space.
pub const ALPHA: usize = 0;
pub const BETA: usize = 1;
pub const GAMMA: usize = 2;
pub const DELTA: usize = 3;

const SUM_LABEL: &str = "d";

fn g(s: SiteId, x: Gen) -> AlgElem {
    AlgElem::gen(s, x)
}

/// Flat index of a two-space state `(i, j)`.
fn ij(i: usize, j: usize) -> usize {
    2 * i + j
}

fn two_spaces() -> AuxShape {
    AuxShape::qubits(&["x", "y"])
}

/// Free-fermion type `L`: block diagonal in the total occupation `i + j`.
pub fn l_matrix(s: SiteId) -> OpMatrix {
    OpMatrix::from_entries(
        two_spaces(),
        [
            (ij(0, 0), ij(0, 0), AlgElem::one()),
            (ij(1, 0), ij(1, 0), g(s, Gen::K)),
            (ij(1, 0), ij(0, 1), g(s, Gen::Ap)),
            (ij(0, 1), ij(1, 0), g(s, Gen::Am)),
            (ij(0, 1), ij(0, 1), g(s, Gen::Kp)),
            (ij(1, 1), ij(1, 1), AlgElem::one()),
        ],
    )
}

/// `L` with `a+` and `a-` exchanged, used as a negative control.
pub fn l_matrix_swapped(s: SiteId) -> OpMatrix {
    let mut m = l_matrix(s);
    m.set(ij(1, 0), ij(0, 1), g(s, Gen::Am));
    m.set(ij(0, 1), ij(1, 0), g(s, Gen::Ap));
    m
}

/// `M`: couples `00` with `11`, unit on the mixed states.
pub fn m_matrix(s: SiteId) -> OpMatrix {
    OpMatrix::from_entries(
        two_spaces(),
        [
            (ij(0, 0), ij(0, 0), g(s, Gen::K)),
            (ij(0, 0), ij(1, 1), g(s, Gen::Am)),
            (ij(1, 1), ij(0, 0), g(s, Gen::Ap)),
            (ij(1, 1), ij(1, 1), g(s, Gen::Kp)),
            (ij(1, 0), ij(1, 0), AlgElem::one()),
            (ij(0, 1), ij(0, 1), AlgElem::one()),
        ],
    )
}

/// `X = [[k, a+], [a-, k']]` on one two-dimensional space.
pub fn x_matrix(s: SiteId) -> OpMatrix {
    OpMatrix::from_entries(
        AuxShape::qubits(&["x"]),
        [(0, 0, g(s, Gen::K)), (0, 1, g(s, Gen::Ap)), (1, 0, g(s, Gen::Am)), (1, 1, g(s, Gen::Kp))],
    )
}

/// `Y = [[a-, k'], [k, a+]]` on one two-dimensional space.
pub fn y_matrix(s: SiteId) -> OpMatrix {
    OpMatrix::from_entries(
        AuxShape::qubits(&["x"]),
        [(0, 0, g(s, Gen::Am)), (0, 1, g(s, Gen::Kp)), (1, 0, g(s, Gen::K)), (1, 1, g(s, Gen::Ap))],
    )
}

/// `X` placed on slots `(i, j)` of the direct sum, identity elsewhere.
pub fn x_sum(s: SiteId, i: usize, j: usize) -> OpMatrix {
    let mut m = OpMatrix::identity(AuxShape::direct_sum(SUM_LABEL, 4));
    m.set(i, i, g(s, Gen::K));
    m.set(i, j, g(s, Gen::Ap));
    m.set(j, i, g(s, Gen::Am));
    m.set(j, j, g(s, Gen::Kp));
    m
}

/// Permutation of two direct-sum slots.
pub fn p_sum(i: usize, j: usize) -> OpMatrix {
    OpMatrix::transposition(SUM_LABEL, 4, i, j)
}

/// `E(λ) = diag(1, λ)`.
pub fn e_matrix(label: &str, lambda: LaurentPoly) -> OpMatrix {
    OpMatrix::spectral(label, lambda)
}

/// `Y^(a) = X_{δβ} X_{γα} P_{αγ} P_{βδ}` for the identified `a` site.
pub fn y_a(alg: &Algebra, a: SiteId) -> OpResult<OpMatrix> {
    OpMatrix::product(&[x_sum(a, DELTA, BETA), x_sum(a, GAMMA, ALPHA), p_sum(ALPHA, GAMMA), p_sum(BETA, DELTA)], alg)
}

/// `Y^(b) = X_{δγ} X_{βα} P_{αβ} P_{γδ}` for the identified `b` site.
pub fn y_b(alg: &Algebra, b: SiteId) -> OpResult<OpMatrix> {
    OpMatrix::product(&[x_sum(b, DELTA, GAMMA), x_sum(b, BETA, ALPHA), p_sum(ALPHA, BETA), p_sum(GAMMA, DELTA)], alg)
}

/// Outcome of `diff == 0` as a residual.
pub fn residual_of(diff: &OpMatrix, alg: &Algebra) -> Residual {
    match diff.witness(alg) {
        None => Residual::ExactZero,
        Some(w) => Residual::Nonzero { entries: diff.nonzero_count(), witness: w },
    }
}

fn failed(e: impl std::fmt::Display) -> Residual {
    Residual::Nonzero { entries: 0, witness: format!("error: {e}") }
}

/// Both sides of an identity as ordered factor lists over one algebra.
#[derive(Debug, Clone)]
pub struct Sides {
    pub alg: Algebra,
    pub lhs: Vec<OpMatrix>,
    pub rhs: Vec<OpMatrix>,
}

impl Sides {
    fn new(alg: Algebra, lhs: Vec<OpMatrix>, rhs: Vec<OpMatrix>) -> Self {
        Self { alg, lhs, rhs }
    }

    pub fn residual(&self) -> Residual {
        difference(&self.alg, &self.lhs, &self.rhs)
    }
}

fn difference(alg: &Algebra, lhs: &[OpMatrix], rhs: &[OpMatrix]) -> Residual {
    let run = || -> OpResult<OpMatrix> {
        let l = OpMatrix::product(lhs, alg)?;
        let r = OpMatrix::product(rhs, alg)?;
        l.sub(&r)
    };
    match run() {
        Ok(d) => residual_of(&d, alg),
        Err(e) => failed(e),
    }
}

/// Labels and declaration order used to build a check. Renaming the
/// auxiliary spaces or the sites must not change any outcome.
#[derive(Debug, Clone)]
pub struct Naming {
    /// Order of `i1, i2, j1, j2` in the auxiliary shape.
    pub aux: [&'static str; 4],
    pub site_prefix: String,
    /// Declare sites in reverse order, which changes the internal site ids.
    pub reverse_declaration: bool,
}

impl Default for Naming {
    fn default() -> Self {
        Self { aux: ["i1", "i2", "j1", "j2"], site_prefix: String::new(), reverse_declaration: false }
    }
}

impl Naming {
    pub fn permuted() -> Self {
        Self { aux: ["j2", "i1", "j1", "i2"], site_prefix: "z".into(), reverse_declaration: true }
    }

    fn shape(&self) -> AuxShape {
        AuxShape::qubits(&self.aux)
    }

    fn algebra(&self, sites: &[(&str, DeformParam)]) -> (Algebra, Vec<SiteId>) {
        let mut alg = Algebra::new();
        let mut order: Vec<usize> = (0..sites.len()).collect();
        if self.reverse_declaration {
            order.reverse();
        }
        let mut ids = vec![SiteId(0); sites.len()];
        for k in order {
            let (label, p) = sites[k];
            ids[k] = alg.declare(&format!("{}{label}", self.site_prefix), p).expect("fresh labels");
        }
        (alg, ids)
    }
}

fn at(local: &OpMatrix, a: &str, b: &str, full: &AuxShape) -> OpMatrix {
    local.embed(&[a, b], full).expect("labels belong to the shape")
}

fn symbolic(name: &str, residual: Residual) -> CheckReport {
    CheckReport::exact(name, residual)
}

fn control(name: &str, residual: Residual) -> CheckReport {
    CheckReport::control(name, residual, 0.0)
}

/// Tetrahedron relation between `L` and `M`:
/// `M(i1,j2) M(i2,j1) L(i1,j1) L(i2,j2) = L(i2,j2) L(i1,j1) M(i2,j1) M(i1,j2)`.
pub fn tetra_ml_sides(m_param: DeformParam, naming: &Naming) -> Sides {
    let (alg, ids) = naming.algebra(&[("L", DeformParam::Q), ("M", m_param)]);
    let full = naming.shape();
    let (l, m) = (l_matrix(ids[0]), m_matrix(ids[1]));
    Sides::new(
        alg,
        vec![at(&m, "i1", "j2", &full), at(&m, "i2", "j1", &full), at(&l, "i1", "j1", &full), at(&l, "i2", "j2", &full)],
        vec![at(&l, "i2", "j2", &full), at(&l, "i1", "j1", &full), at(&m, "i2", "j1", &full), at(&m, "i1", "j2", &full)],
    )
}

pub fn tetra_ml_residual(m_param: DeformParam, naming: &Naming) -> Residual {
    tetra_ml_sides(m_param, naming).residual()
}

pub fn check_tetra_ml() -> Vec<CheckReport> {
    vec![
        CheckReport::timed(|| {
            symbolic("eq.tetra_ml", tetra_ml_residual(DeformParam::NEG_Q, &Naming::default()))
                .param("l_param", "q")
                .param("m_param", "-q")
        }),
        CheckReport::timed(|| {
            control("eq.tetra_ml_control", tetra_ml_residual(DeformParam::Q, &Naming::default())).param("m_param", "q")
        }),
    ]
}

/// The `N N L L` pattern shared by the half-plane and torus tetrahedron
/// relations: `N(i1,i2) N(j1,j2) L(i1,j1) L(i2,j2) = L(i2,j2) L(i1,j1) N(j1,j2) N(i1,i2)`.
pub fn tetra_nn_sides(n_param: DeformParam, l_param: DeformParam, swap_one: bool, naming: &Naming) -> Sides {
    let (alg, ids) = naming.algebra(&[("L", l_param), ("N", n_param)]);
    let full = naming.shape();
    let l = l_matrix(ids[0]);
    let n = l_matrix(ids[1]);
    let n_first = if swap_one { l_matrix_swapped(ids[1]) } else { n.clone() };
    Sides::new(
        alg,
        vec![at(&n_first, "i1", "i2", &full), at(&n, "j1", "j2", &full), at(&l, "i1", "j1", &full), at(&l, "i2", "j2", &full)],
        vec![at(&l, "i2", "j2", &full), at(&l, "i1", "j1", &full), at(&n, "j1", "j2", &full), at(&n_first, "i1", "i2", &full)],
    )
}

pub fn tetra_nn_residual(n_param: DeformParam, l_param: DeformParam, swap_one: bool, naming: &Naming) -> Residual {
    tetra_nn_sides(n_param, l_param, swap_one, naming).residual()
}

pub fn check_tetra_nn() -> Vec<CheckReport> {
    let n = Naming::default();
    vec![
        CheckReport::timed(|| {
            symbolic("eq.tetra_nn", tetra_nn_residual(DeformParam::NEG_Q, DeformParam::Q, false, &n))
                .param("l_param", "q")
                .param("n_param", "-q")
        }),
        CheckReport::timed(|| {
            control("eq.tetra_nn_control", tetra_nn_residual(DeformParam::NEG_Q, DeformParam::Q, true, &n))
                .param("perturbation", "a+ <-> a- in N(i1,i2)")
        }),
    ]
}

pub fn check_tetra_torus() -> Vec<CheckReport> {
    let n = Naming::default();
    vec![
        CheckReport::timed(|| {
            symbolic("eq.tetra_torus", tetra_nn_residual(DeformParam::NEG_Q2, DeformParam::Q2, false, &n))
                .param("l_param", "q^2")
                .param("n_param", "-q^2")
        }),
        CheckReport::timed(|| {
            control("eq.tetra_torus_control", tetra_nn_residual(DeformParam::Q2, DeformParam::Q2, false, &n))
                .param("n_param", "q^2")
        }),
    ]
}

/// `M L = L M` on the same pair of spaces, `M` on `A_{-q}`, `L` on `A_{q^2}`.
/// With `y_control`, `L` is replaced by `Y ⊗ 1`.
pub fn ml_exchange_sides(y_control: bool, naming: &Naming) -> Sides {
    let (alg, ids) = naming.algebra(&[("M", DeformParam::NEG_Q), ("L", DeformParam::Q2)]);
    let full = naming.shape();
    let m = at(&m_matrix(ids[0]), "i1", "j1", &full);
    let l = if y_control {
        y_matrix(ids[1]).embed(&["i1"], &full).expect("label in shape")
    } else {
        at(&l_matrix(ids[1]), "i1", "j1", &full)
    };
    Sides::new(alg, vec![m.clone(), l.clone()], vec![l, m])
}

pub fn ml_exchange_residual(y_control: bool, naming: &Naming) -> Residual {
    ml_exchange_sides(y_control, naming).residual()
}

pub fn check_ml_exchange() -> Vec<CheckReport> {
    let n = Naming::default();
    vec![
        CheckReport::timed(|| symbolic("eq.ml_exchange", ml_exchange_residual(false, &n))),
        CheckReport::timed(|| {
            control("eq.ml_exchange_control", ml_exchange_residual(true, &n)).param("perturbation", "L -> Y (x) 1")
        }),
    ]
}

/// Reflection relation with the boundary symbol `K` on the pair `(s1, s2)`:
///
/// ```text
/// M(i1,j2) N(i1,i2) K N(j1,j2) M(i2,j1) B(i1,j1) B(i2,j2)
///   = B(i2,j2) B(i1,j1) M(i2,j1) N(j1,j2) K N(i1,i2) M(i1,j2)
/// ```
///
/// with `N = L` on `s1`, `M` on `s2` (both `A_{-q}`) and `B = L` on the
/// `A_{q^2}` site `s0`. With `drop_k` the symbol is replaced by 1.
pub fn reflection_sides(drop_k: bool, naming: &Naming) -> Sides {
    let (mut alg, ids) =
        naming.algebra(&[("s1", DeformParam::NEG_Q), ("s2", DeformParam::NEG_Q), ("s0", DeformParam::Q2)]);
    alg.set_k_pair(ids[0], ids[1]);
    let full = naming.shape();
    let n = l_matrix(ids[0]);
    let m = m_matrix(ids[1]);
    let b = l_matrix(ids[2]);
    let k = if drop_k {
        OpMatrix::identity(full.clone())
    } else {
        OpMatrix::scalar_diag(full.clone(), AlgElem::boundary())
    };
    Sides::new(
        alg,
        vec![
            at(&m, "i1", "j2", &full),
            at(&n, "i1", "i2", &full),
            k.clone(),
            at(&n, "j1", "j2", &full),
            at(&m, "i2", "j1", &full),
            at(&b, "i1", "j1", &full),
            at(&b, "i2", "j2", &full),
        ],
        vec![
            at(&b, "i2", "j2", &full),
            at(&b, "i1", "j1", &full),
            at(&m, "i2", "j1", &full),
            at(&n, "j1", "j2", &full),
            k,
            at(&n, "i1", "i2", &full),
            at(&m, "i1", "j2", &full),
        ],
    )
}

pub fn reflection_residual(drop_k: bool, naming: &Naming) -> Residual {
    reflection_sides(drop_k, naming).residual()
}

pub fn check_boundary_reflection() -> Vec<CheckReport> {
    let n = Naming::default();
    vec![
        CheckReport::timed(|| symbolic("eq.reflection", reflection_residual(false, &n))),
        CheckReport::timed(|| {
            control("eq.reflection_control", reflection_residual(true, &n)).param("perturbation", "K -> 1")
        }),
    ]
}

/// Algebra and site ids for the six-site refactorization configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub alg: Algebra,
    pub s1: SiteId,
    pub s2: SiteId,
    pub a: SiteId,
    pub b: SiteId,
    pub a_prime: SiteId,
    pub b_prime: SiteId,
}

impl Config {
    /// Sites `1, 2` on `A_{q^2}`, sites `a, b` (and `a', b'`) on `A_q`; with
    /// `identified`, `a'` is `a` and `b'` is `b`.
    pub fn new(identified: bool) -> Self {
        let mut alg = Algebra::new();
        let s1 = alg.declare("1", DeformParam::Q2).expect("fresh");
        let s2 = alg.declare("2", DeformParam::Q2).expect("fresh");
        let a = alg.declare("a", DeformParam::Q).expect("fresh");
        let b = alg.declare("b", DeformParam::Q).expect("fresh");
        let (a_prime, b_prime) = if identified {
            (a, b)
        } else {
            (alg.declare("a'", DeformParam::Q).expect("fresh"), alg.declare("b'", DeformParam::Q).expect("fresh"))
        };
        Self { alg, s1, s2, a, b, a_prime, b_prime }
    }
}

/// `s_L = X2_{βγ} Xb_{βδ} Xb'_{αγ} X1_{αδ} Xa_{αβ} Xa'_{γδ}` and
/// `s_R = Xa_{αβ} Xa'_{γδ} X1_{αδ} Xb_{βδ} Xb'_{αγ} X2_{βγ}`.
pub fn build_config_sl_sr(identified: bool) -> OpResult<(Config, OpMatrix, OpMatrix)> {
    let c = Config::new(identified);
    let sl = OpMatrix::product(
        &[
            x_sum(c.s2, BETA, GAMMA),
            x_sum(c.b, BETA, DELTA),
            x_sum(c.b_prime, ALPHA, GAMMA),
            x_sum(c.s1, ALPHA, DELTA),
            x_sum(c.a, ALPHA, BETA),
            x_sum(c.a_prime, GAMMA, DELTA),
        ],
        &c.alg,
    )?;
    let sr = OpMatrix::product(
        &[
            x_sum(c.a, ALPHA, BETA),
            x_sum(c.a_prime, GAMMA, DELTA),
            x_sum(c.s1, ALPHA, DELTA),
            x_sum(c.b, BETA, DELTA),
            x_sum(c.b_prime, ALPHA, GAMMA),
            x_sum(c.s2, BETA, GAMMA),
        ],
        &c.alg,
    )?;
    Ok((c, sl, sr))
}

/// C-form: `P_{αδ} s P_{αδ} P_{αβ} P_{γδ} P_{αγ} P_{βδ}` against
/// `X2_{βγ} Y^(b) X1_{γβ} Y^(a)` for `s_L` and `Y^(a) X1_{βγ} Y^(b) X2_{γβ}`
/// for `s_R`. With `drop_prefix` the leading `P_{αδ}` is omitted.
pub fn cform_residual(drop_prefix: bool) -> Residual {
    let run = || -> OpResult<Residual> {
        let (c, sl, sr) = build_config_sl_sr(true)?;
        let alg = &c.alg;
        let ya = y_a(alg, c.a)?;
        let yb = y_b(alg, c.b)?;
        let tail = OpMatrix::product(
            &[p_sum(ALPHA, DELTA), p_sum(ALPHA, BETA), p_sum(GAMMA, DELTA), p_sum(ALPHA, GAMMA), p_sum(BETA, DELTA)],
            alg,
        )?;
        let c_l = OpMatrix::product(&[x_sum(c.s2, BETA, GAMMA), yb.clone(), x_sum(c.s1, GAMMA, BETA), ya.clone()], alg)?;
        let c_r = OpMatrix::product(&[ya, x_sum(c.s1, BETA, GAMMA), yb, x_sum(c.s2, GAMMA, BETA)], alg)?;
        let mut total = 0;
        let mut witness = None;
        for (s, target) in [(sl, c_l), (sr, c_r)] {
            let lhs = if drop_prefix {
                s.matmul(&tail, alg)?
            } else {
                OpMatrix::product(&[p_sum(ALPHA, DELTA), s, tail.clone()], alg)?
            };
            let d = lhs.sub(&target)?;
            total += d.nonzero_count();
            witness = witness.or_else(|| d.witness(alg));
        }
        Ok(match witness {
            None => Residual::ExactZero,
            Some(w) => Residual::Nonzero { entries: total, witness: w },
        })
    };
    run().unwrap_or_else(failed)
}

/// Unexpanded factor lists of the two C-form identities, for numeric mirrors.
pub fn cform_sides(drop_prefix: bool) -> OpResult<Vec<Sides>> {
    let c = Config::new(true);
    let alg = &c.alg;
    let ya = y_a(alg, c.a)?;
    let yb = y_b(alg, c.b)?;
    let tail = [p_sum(ALPHA, DELTA), p_sum(ALPHA, BETA), p_sum(GAMMA, DELTA), p_sum(ALPHA, GAMMA), p_sum(BETA, DELTA)];
    let sl = [
        x_sum(c.s2, BETA, GAMMA),
        x_sum(c.b, BETA, DELTA),
        x_sum(c.b_prime, ALPHA, GAMMA),
        x_sum(c.s1, ALPHA, DELTA),
        x_sum(c.a, ALPHA, BETA),
        x_sum(c.a_prime, GAMMA, DELTA),
    ];
    let sr = [
        x_sum(c.a, ALPHA, BETA),
        x_sum(c.a_prime, GAMMA, DELTA),
        x_sum(c.s1, ALPHA, DELTA),
        x_sum(c.b, BETA, DELTA),
        x_sum(c.b_prime, ALPHA, GAMMA),
        x_sum(c.s2, BETA, GAMMA),
    ];
    let c_l = vec![x_sum(c.s2, BETA, GAMMA), yb.clone(), x_sum(c.s1, GAMMA, BETA), ya.clone()];
    let c_r = vec![ya, x_sum(c.s1, BETA, GAMMA), yb, x_sum(c.s2, GAMMA, BETA)];
    Ok([(sl, c_l), (sr, c_r)]
        .into_iter()
        .map(|(s, target)| {
            let mut lhs = Vec::new();
            if !drop_prefix {
                lhs.push(p_sum(ALPHA, DELTA));
            }
            lhs.extend(s);
            lhs.extend(tail.iter().cloned());
            Sides::new(c.alg.clone(), lhs, target)
        })
        .collect())
}

/// Factor lists of a named identity or control and whether it is a control.
pub fn identity_sides(name: &str) -> Option<(Vec<Sides>, bool)> {
    let n = Naming::default();
    let (sides, control) = match name {
        "tetra_ml" => (vec![tetra_ml_sides(DeformParam::NEG_Q, &n)], false),
        "tetra_ml_control" => (vec![tetra_ml_sides(DeformParam::Q, &n)], true),
        "tetra_nn" => (vec![tetra_nn_sides(DeformParam::NEG_Q, DeformParam::Q, false, &n)], false),
        "tetra_nn_control" => (vec![tetra_nn_sides(DeformParam::NEG_Q, DeformParam::Q, true, &n)], true),
        "tetra_torus" => (vec![tetra_nn_sides(DeformParam::NEG_Q2, DeformParam::Q2, false, &n)], false),
        "tetra_torus_control" => (vec![tetra_nn_sides(DeformParam::Q2, DeformParam::Q2, false, &n)], true),
        "ml_exchange" => (vec![ml_exchange_sides(false, &n)], false),
        "ml_exchange_control" => (vec![ml_exchange_sides(true, &n)], true),
        "reflection" => (vec![reflection_sides(false, &n)], false),
        "reflection_control" => (vec![reflection_sides(true, &n)], true),
        "cform" => (cform_sides(false).ok()?, false),
        "cform_control" => (cform_sides(true).ok()?, true),
        _ => return None,
    };
    Some((sides, control))
}

/// Names accepted by [`identity_sides`].
pub const IDENTITY_NAMES: [&str; 12] = [
    "tetra_ml",
    "tetra_ml_control",
    "tetra_nn",
    "tetra_nn_control",
    "tetra_torus",
    "tetra_torus_control",
    "ml_exchange",
    "ml_exchange_control",
    "reflection",
    "reflection_control",
    "cform",
    "cform_control",
];

/// `X_{βγ}[A]` of the direct sum reshaped to `2 ⊗ 2` equals `L[A]`.
pub fn reshape_matches_l() -> bool {
    let c = Config::new(true);
    let reshaped = x_sum(c.a, BETA, GAMMA).reshape_sum_to_tensor("x", "y");
    reshaped.is_ok_and(|m| m == l_matrix(c.a))
}

pub fn check_cform_equivalence() -> Vec<CheckReport> {
    vec![
        CheckReport::timed(|| {
            symbolic("eq.cform", cform_residual(false)).detail("reshape_x_to_l", reshape_matches_l())
        }),
        CheckReport::timed(|| {
            control("eq.cform_control", cform_residual(true)).param("perturbation", "leading permutation dropped")
        }),
    ]
}

/// All exact identity checks with their controls.
pub fn all_checks() -> Vec<CheckReport> {
    let mut out = Vec::new();
    out.extend(check_tetra_ml());
    out.extend(check_tetra_nn());
    out.extend(check_tetra_torus());
    out.extend(check_ml_exchange());
    out.extend(check_boundary_reflection());
    out.extend(check_cform_equivalence());
    out
}

/// Every entry of `m` lies on the block pattern `allowed(row, col)`.
pub fn follows_pattern(m: &OpMatrix, allowed: impl Fn(usize, usize) -> bool) -> bool {
    m.entries().all(|(&(r, c), _)| allowed(r, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occupation(flat: usize) -> usize {
        (flat >> 1) + (flat & 1)
    }

    #[test]
    fn identities_hold_and_controls_fail() {
        for r in all_checks() {
            assert!(r.pass, "{} failed: {:?}", r.name, r.residual);
        }
    }

    #[test]
    fn renaming_does_not_change_outcomes() {
        let p = Naming::permuted();
        assert!(tetra_ml_residual(DeformParam::NEG_Q, &p).is_exact_zero());
        assert!(!tetra_ml_residual(DeformParam::Q, &p).is_exact_zero());
        assert!(tetra_nn_residual(DeformParam::NEG_Q, DeformParam::Q, false, &p).is_exact_zero());
        assert!(tetra_nn_residual(DeformParam::NEG_Q2, DeformParam::Q2, false, &p).is_exact_zero());
        assert!(ml_exchange_residual(false, &p).is_exact_zero());
        assert!(reflection_residual(false, &p).is_exact_zero());
        assert!(!reflection_residual(true, &p).is_exact_zero());
    }

    #[test]
    fn l_and_m_selection_rules() {
        let mut alg = Algebra::new();
        let s = alg.declare("s", DeformParam::Q).unwrap();
        let l = l_matrix(s);
        let m = m_matrix(s);
        assert!(follows_pattern(&l, |r, c| occupation(r) == occupation(c)));
        assert!(follows_pattern(&m, |r, c| occupation(r) % 2 == occupation(c) % 2));
        assert!(!follows_pattern(&m, |r, c| occupation(r) == occupation(c)));
        assert_eq!(l.nonzero_count(), 6);
        assert_eq!(m.nonzero_count(), 6);
    }

    #[test]
    fn vacuum_component_of_tetra_ml() {
        let mut alg = Algebra::new();
        let ls = alg.declare("L", DeformParam::Q).unwrap();
        let ms = alg.declare("M", DeformParam::NEG_Q).unwrap();
        let full = AuxShape::qubits(&["i1", "i2", "j1", "j2"]);
        let (l, m) = (l_matrix(ls), m_matrix(ms));
        let lhs = OpMatrix::product(
            &[at(&m, "i1", "j2", &full), at(&m, "i2", "j1", &full), at(&l, "i1", "j1", &full), at(&l, "i2", "j2", &full)],
            &alg,
        )
        .unwrap();
        let k2 = alg.mul(&AlgElem::gen(ms, Gen::K), &AlgElem::gen(ms, Gen::K)).unwrap();
        assert_eq!(lhs.get(0, 0), k2);
    }

    #[test]
    fn config_shapes() {
        let (c, sl, _) = build_config_sl_sr(false).unwrap();
        assert_eq!(c.alg.descriptors().len(), 6);
        assert!(!sl.is_zero());
        let (c, _, _) = build_config_sl_sr(true).unwrap();
        assert_eq!(c.alg.descriptors().len(), 4);
        assert_eq!(c.a, c.a_prime);
    }

    #[test]
    fn identified_factors_commute() {
        let c = Config::new(true);
        let x = x_sum(c.a, ALPHA, BETA);
        let y = x_sum(c.a, GAMMA, DELTA);
        assert_eq!(x.matmul(&y, &c.alg).unwrap(), y.matmul(&x, &c.alg).unwrap());
    }

    #[test]
    fn y_a_reshapes_to_one_times_y() {
        let c = Config::new(true);
        let ya = y_a(&c.alg, c.a).unwrap().reshape_sum_to_tensor("x", "y").unwrap();
        let one = OpMatrix::identity(AuxShape::qubits(&["x"]));
        let yy = OpMatrix::from_entries(AuxShape::qubits(&["y"]), y_matrix(c.a).entries().map(|(&(r, cc), x)| (r, cc, x.clone())));
        assert_eq!(ya, one.kron(&yy, &c.alg).unwrap());
    }

    #[test]
    fn x_reshapes_to_l() {
        assert!(reshape_matches_l());
    }
}
