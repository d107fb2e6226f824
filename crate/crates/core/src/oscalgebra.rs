//! Normal ordering in tensor products of q-oscillator site algebras.
//!
//! Each site carries generators `k, k', a+, a-` with deformation parameter
//! `p` and the relations
//!
//! ```text
//! k a+ = p a+ k      k' a+ = p a+ k'      a- k = p k a-      a- k' = p k' a-
//! a- a+ = 1 + p k k'                      a+ a- = 1 + p^-1 k k'
//! ```
//!
//! Elements are stored in the PBW basis `a+^m k^r k'^s a-^n` with `m*n = 0`.
//! A single boundary symbol `K` may appear; it is always kept rightmost and
//! acts on everything to its right by the automorphism
//! `a1+ -> q a1+ k2^-1 k2'`, `a1- -> q^-1 a1- k2 k2'^-1`.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::classical::{CGen, CPoly, CVar};
use crate::coeffring::{DeformParam, LaurentPoly};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("unknown site label `{0}`")]
    UnknownSite(String),
    #[error("site `{label}` already declared with parameter {existing}, not {requested}")]
    ConflictingParam { label: String, existing: DeformParam, requested: DeformParam },
    #[error("two boundary symbols K in one monomial")]
    DoubleK,
    #[error("boundary symbol K used but no site pair is attached to it")]
    NoKPair,
    #[error("no classical limit: commutator does not vanish at q = 1")]
    NoClassicalLimit,
    #[error("cannot parse algebra element: {0}")]
    Parse(String),
}

pub type AlgResult<T> = Result<T, AlgebraError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteId(pub u16);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteDescriptor {
    pub label: String,
    pub param: DeformParam,
}

/// Letters of site words. `KInv` and `KpInv` are the inverses of `k`, `k'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gen {
    K,
    KInv,
    Kp,
    KpInv,
    Ap,
    Am,
}

impl Gen {
    pub const ALL: [Gen; 6] = [Gen::K, Gen::KInv, Gen::Kp, Gen::KpInv, Gen::Ap, Gen::Am];

    pub fn monomial(self) -> SiteMonomial {
        match self {
            Gen::K => SiteMonomial::new(0, 1, 0, 0),
            Gen::KInv => SiteMonomial::new(0, -1, 0, 0),
            Gen::Kp => SiteMonomial::new(0, 0, 1, 0),
            Gen::KpInv => SiteMonomial::new(0, 0, -1, 0),
            Gen::Ap => SiteMonomial::new(1, 0, 0, 0),
            Gen::Am => SiteMonomial::new(0, 0, 0, 1),
        }
    }
}

/// PBW monomial `a+^m k^r k'^s a-^n`, with `m * n == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteMonomial {
    pub m: u32,
    pub r: i32,
    pub s: i32,
    pub n: u32,
}

impl SiteMonomial {
    pub const ONE: SiteMonomial = SiteMonomial { m: 0, r: 0, s: 0, n: 0 };

    pub fn new(m: u32, r: i32, s: i32, n: u32) -> Self {
        debug_assert!(m == 0 || n == 0, "PBW monomial with both a+ and a-");
        Self { m, r, s, n }
    }

    pub fn is_one(&self) -> bool {
        *self == Self::ONE
    }

    /// Net occupation shift `m - n` produced on a Fock state.
    pub fn shift(&self) -> i32 {
        self.m as i32 - self.n as i32
    }

    /// Letters whose ordered product is this monomial.
    pub fn letters(&self) -> Vec<Gen> {
        let mut w = vec![Gen::Ap; self.m as usize];
        let kr = if self.r >= 0 { Gen::K } else { Gen::KInv };
        w.extend(std::iter::repeat_n(kr, self.r.unsigned_abs() as usize));
        let ks = if self.s >= 0 { Gen::Kp } else { Gen::KpInv };
        w.extend(std::iter::repeat_n(ks, self.s.unsigned_abs() as usize));
        w.extend(std::iter::repeat_n(Gen::Am, self.n as usize));
        w
    }
}

type Terms = SmallVec<[(LaurentPoly, SiteMonomial); 4]>;

/// Right multiplication of a single-site monomial by `k^r' k'^s'`.
fn times_kk(mono: SiteMonomial, p: DeformParam, dr: i32, ds: i32) -> (LaurentPoly, SiteMonomial) {
    let c = p.pow(mono.n as i64 * (dr as i64 + ds as i64));
    (c, SiteMonomial { r: mono.r + dr, s: mono.s + ds, ..mono })
}

fn times_ap(mono: SiteMonomial, p: DeformParam) -> Terms {
    let SiteMonomial { m, r, s, n } = mono;
    let mut out = Terms::new();
    if n == 0 {
        out.push((p.pow(r as i64 + s as i64), SiteMonomial::new(m + 1, r, s, 0)));
    } else {
        out.push((LaurentPoly::one(), SiteMonomial::new(0, r, s, n - 1)));
        out.push((p.pow(2 * n as i64 - 1), SiteMonomial::new(0, r + 1, s + 1, n - 1)));
    }
    out
}

fn times_am(mono: SiteMonomial, p: DeformParam) -> Terms {
    let SiteMonomial { m, r, s, n } = mono;
    let mut out = Terms::new();
    if m == 0 {
        out.push((LaurentPoly::one(), SiteMonomial::new(0, r, s, n + 1)));
    } else {
        let c = p.pow(-(r as i64 + s as i64));
        out.push((c.clone(), SiteMonomial::new(m - 1, r, s, 0)));
        out.push((&c * &p.pow(-1), SiteMonomial::new(m - 1, r + 1, s + 1, 0)));
    }
    out
}

fn push_term(acc: &mut Terms, c: LaurentPoly, mono: SiteMonomial) {
    if c.is_zero() {
        return;
    }
    if let Some(slot) = acc.iter_mut().find(|(_, m)| *m == mono) {
        slot.0 += &c;
    } else {
        acc.push((c, mono));
    }
}

/// Normal-ordered product of two single-site PBW monomials.
pub fn site_mul(a: SiteMonomial, b: SiteMonomial, p: DeformParam) -> Vec<(LaurentPoly, SiteMonomial)> {
    let mut cur: Terms = smallvec::smallvec![(LaurentPoly::one(), a)];
    for _ in 0..b.m {
        let mut next = Terms::new();
        for (c, mono) in cur {
            for (c2, m2) in times_ap(mono, p) {
                push_term(&mut next, &c * &c2, m2);
            }
        }
        cur = next;
    }
    if b.r != 0 || b.s != 0 {
        cur = cur
            .into_iter()
            .map(|(c, mono)| {
                let (c2, m2) = times_kk(mono, p, b.r, b.s);
                (&c * &c2, m2)
            })
            .collect();
    }
    for _ in 0..b.n {
        let mut next = Terms::new();
        for (c, mono) in cur {
            for (c2, m2) in times_am(mono, p) {
                push_term(&mut next, &c * &c2, m2);
            }
        }
        cur = next;
    }
    cur.into_iter().filter(|(c, _)| !c.is_zero()).collect()
}

/// Tensor product of site monomials; absent sites are the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TensorMonomial {
    sites: SmallVec<[(SiteId, SiteMonomial); 4]>,
    k: bool,
}

impl TensorMonomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn boundary() -> Self {
        Self { sites: SmallVec::new(), k: true }
    }

    pub fn single(site: SiteId, mono: SiteMonomial) -> Self {
        let mut t = Self::one();
        t.set(site, mono);
        t
    }

    pub fn sites(&self) -> impl Iterator<Item = (SiteId, SiteMonomial)> + '_ {
        self.sites.iter().copied()
    }

    pub fn get(&self, site: SiteId) -> SiteMonomial {
        self.sites
            .iter()
            .find(|(s, _)| *s == site)
            .map(|(_, m)| *m)
            .unwrap_or(SiteMonomial::ONE)
    }

    pub fn set(&mut self, site: SiteId, mono: SiteMonomial) {
        match self.sites.binary_search_by_key(&site, |(s, _)| *s) {
            Ok(i) if mono.is_one() => {
                self.sites.remove(i);
            }
            Ok(i) => self.sites[i].1 = mono,
            Err(_) if mono.is_one() => {}
            Err(i) => self.sites.insert(i, (site, mono)),
        }
    }

    pub fn has_k(&self) -> bool {
        self.k
    }

    pub fn with_k(mut self, k: bool) -> Self {
        self.k = k;
        self
    }

    pub fn is_one(&self) -> bool {
        self.sites.is_empty() && !self.k
    }
}

/// Normal-ordered element: a finite sum of tensor monomials with Laurent
/// polynomial coefficients.
#[derive(Clone, PartialEq, Eq, Default, PartialOrd, Ord, Hash)]
pub struct AlgElem {
    terms: BTreeMap<TensorMonomial, LaurentPoly>,
}

impl AlgElem {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::term(TensorMonomial::one(), LaurentPoly::one())
    }

    pub fn scalar(c: LaurentPoly) -> Self {
        Self::term(TensorMonomial::one(), c)
    }

    pub fn term(t: TensorMonomial, c: LaurentPoly) -> Self {
        let mut e = Self::zero();
        e.add_term(t, c);
        e
    }

    /// A single generator at a site.
    pub fn gen(site: SiteId, g: Gen) -> Self {
        Self::term(TensorMonomial::single(site, g.monomial()), LaurentPoly::one())
    }

    pub fn mono(site: SiteId, mono: SiteMonomial) -> Self {
        Self::term(TensorMonomial::single(site, mono), LaurentPoly::one())
    }

    /// The bare boundary symbol `K`.
    pub fn boundary() -> Self {
        Self::term(TensorMonomial::boundary(), LaurentPoly::one())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.get(&TensorMonomial::one()).is_some_and(|c| c.is_one())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TensorMonomial, &LaurentPoly)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, t: TensorMonomial, c: LaurentPoly) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(t) {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += &c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn add_assign(&mut self, other: &AlgElem) {
        for (t, c) in &other.terms {
            self.add_term(t.clone(), c.clone());
        }
    }

    pub fn add(&self, other: &AlgElem) -> AlgElem {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &AlgElem) -> AlgElem {
        let mut out = self.clone();
        for (t, c) in &other.terms {
            out.add_term(t.clone(), -c);
        }
        out
    }

    pub fn neg(&self) -> AlgElem {
        AlgElem { terms: self.terms.iter().map(|(t, c)| (t.clone(), -c)).collect() }
    }

    pub fn scale(&self, s: &LaurentPoly) -> AlgElem {
        let mut out = AlgElem::zero();
        for (t, c) in &self.terms {
            out.add_term(t.clone(), c * s);
        }
        out
    }

    pub fn has_k(&self) -> bool {
        self.terms.keys().any(|t| t.k)
    }

    /// Sites touched by any monomial, ascending.
    pub fn support(&self) -> Vec<SiteId> {
        let mut s: Vec<SiteId> = self.terms.keys().flat_map(|t| t.sites.iter().map(|(s, _)| *s)).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Largest number of `a+` factors any monomial places at `site`.
    pub fn max_raise(&self, site: SiteId) -> u32 {
        self.terms.keys().map(|t| t.get(site).m).max().unwrap_or(0)
    }

    /// Rename sites through `f`; the caller guarantees parameters agree.
    pub fn relabel(&self, f: impl Fn(SiteId) -> SiteId) -> AlgElem {
        let mut out = AlgElem::zero();
        for (t, c) in &self.terms {
            let mut nt = TensorMonomial::one().with_k(t.k);
            for (s, m) in t.sites() {
                nt.set(f(s), m);
            }
            out.add_term(nt, c.clone());
        }
        out
    }
}

impl fmt::Debug for AlgElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (t, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c}) *")?;
            if t.sites.is_empty() && !t.k {
                write!(f, " 1")?;
            }
            for (s, m) in &t.sites {
                write!(f, " #{}{{ap^{} k^{} kp^{} am^{}}}", s.0, m.m, m.r, m.s, m.n)?;
            }
            if t.k {
                write!(f, " K")?;
            }
        }
        Ok(())
    }
}

/// One letter of a word: a site generator or the boundary symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    G(SiteId, Gen),
    K,
}

/// Site registry and multiplication context.
#[derive(Debug, Clone, Default)]
pub struct Algebra {
    sites: Vec<SiteDescriptor>,
    by_label: BTreeMap<String, SiteId>,
    kpair: Option<(SiteId, SiteId)>,
}

impl Algebra {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declare a site; redeclaring with the same parameter returns the old id.
    pub fn declare(&mut self, label: &str, param: DeformParam) -> AlgResult<SiteId> {
        if let Some(&id) = self.by_label.get(label) {
            let existing = self.sites[id.0 as usize].param;
            if existing != param {
                return Err(AlgebraError::ConflictingParam { label: label.to_string(), existing, requested: param });
            }
            return Ok(id);
        }
        let id = SiteId(self.sites.len() as u16);
        self.sites.push(SiteDescriptor { label: label.to_string(), param });
        self.by_label.insert(label.to_string(), id);
        Ok(id)
    }

    pub fn site(&self, label: &str) -> AlgResult<SiteId> {
        self.by_label.get(label).copied().ok_or_else(|| AlgebraError::UnknownSite(label.to_string()))
    }

    pub fn param(&self, id: SiteId) -> DeformParam {
        self.sites[id.0 as usize].param
    }

    pub fn label(&self, id: SiteId) -> &str {
        &self.sites[id.0 as usize].label
    }

    pub fn descriptors(&self) -> &[SiteDescriptor] {
        &self.sites
    }

    pub fn site_ids(&self) -> impl Iterator<Item = SiteId> {
        (0..self.sites.len() as u16).map(SiteId)
    }

    /// Attach the boundary symbol to the ordered site pair `(1, 2)`.
    pub fn set_k_pair(&mut self, s1: SiteId, s2: SiteId) {
        self.kpair = Some((s1, s2));
    }

    pub fn k_pair(&self) -> Option<(SiteId, SiteId)> {
        self.kpair
    }

    fn mono_mul(&self, a: &TensorMonomial, b: &TensorMonomial, coeff: &LaurentPoly, out: &mut AlgElem) {
        // cartesian expansion over sites present in both factors
        let mut partial: Vec<(LaurentPoly, TensorMonomial)> =
            vec![(coeff.clone(), a.clone().with_k(a.k || b.k))];
        for &(site, mb) in &b.sites {
            let ma = a.get(site);
            if ma.is_one() {
                for (_, t) in partial.iter_mut() {
                    t.set(site, mb);
                }
                continue;
            }
            let prod = site_mul(ma, mb, self.param(site));
            if prod.len() == 1 {
                let (c, m) = &prod[0];
                for (pc, t) in partial.iter_mut() {
                    *pc = &*pc * c;
                    t.set(site, *m);
                }
                continue;
            }
            let mut next = Vec::with_capacity(partial.len() * prod.len());
            for (pc, t) in &partial {
                for (c, m) in &prod {
                    let mut nt = t.clone();
                    nt.set(site, *m);
                    next.push((pc * c, nt));
                }
            }
            partial = next;
        }
        for (c, t) in partial {
            out.add_term(t, c);
        }
    }

    /// Image of a K-free monomial under the boundary automorphism.
    fn k_image(&self, t: &TensorMonomial) -> AlgResult<(LaurentPoly, TensorMonomial)> {
        let (s1, s2) = self.kpair.ok_or(AlgebraError::NoKPair)?;
        let e = t.get(s1).shift() as i64;
        if e == 0 {
            return Ok((LaurentPoly::one(), t.clone()));
        }
        // k2'/k2 is central in its site, so the ratio can be appended on the right
        let m2 = t.get(s2);
        let mut nt = t.clone();
        nt.set(s2, SiteMonomial { r: m2.r - e as i32, s: m2.s + e as i32, ..m2 });
        Ok((LaurentPoly::monomial(1, e), nt))
    }

    /// Apply the boundary automorphism to an element without `K`.
    pub fn k_conjugate(&self, x: &AlgElem) -> AlgResult<AlgElem> {
        let mut out = AlgElem::zero();
        for (t, c) in x.terms() {
            if t.k {
                return Err(AlgebraError::DoubleK);
            }
            let (f, nt) = self.k_image(t)?;
            out.add_term(nt, c * &f);
        }
        Ok(out)
    }

    /// Normal-ordered product `a * b`.
    pub fn mul(&self, a: &AlgElem, b: &AlgElem) -> AlgResult<AlgElem> {
        let mut out = AlgElem::zero();
        for (ta, ca) in a.terms() {
            for (tb, cb) in b.terms() {
                if ta.k && tb.k {
                    return Err(AlgebraError::DoubleK);
                }
                let coeff = ca * cb;
                if ta.k {
                    let (f, tb2) = self.k_image(tb)?;
                    self.mono_mul(ta, &tb2, &(&coeff * &f), &mut out);
                } else {
                    self.mono_mul(ta, tb, &coeff, &mut out);
                }
            }
        }
        Ok(out)
    }

    pub fn mul_all<'a>(&self, factors: impl IntoIterator<Item = &'a AlgElem>) -> AlgResult<AlgElem> {
        let mut acc = AlgElem::one();
        for f in factors {
            acc = self.mul(&acc, f)?;
        }
        Ok(acc)
    }

    pub fn commutator(&self, a: &AlgElem, b: &AlgElem) -> AlgResult<AlgElem> {
        Ok(self.mul(a, b)?.sub(&self.mul(b, a)?))
    }

    /// `before * K * after`, with `K` pushed to the right end.
    pub fn push_k_right(&self, before: &AlgElem, after: &AlgElem) -> AlgResult<AlgElem> {
        let bk = self.mul(before, &AlgElem::boundary())?;
        self.mul(&bk, after)
    }

    /// Normal form of an ordered word of generators.
    pub fn normalize_word(&self, word: &[Letter]) -> AlgResult<AlgElem> {
        let mut acc = AlgElem::one();
        for l in word {
            let x = match *l {
                Letter::G(s, g) => {
                    self.check_site(s)?;
                    AlgElem::gen(s, g)
                }
                Letter::K => AlgElem::boundary(),
            };
            acc = self.mul(&acc, &x)?;
        }
        Ok(acc)
    }

    fn check_site(&self, s: SiteId) -> AlgResult<()> {
        if (s.0 as usize) < self.sites.len() {
            Ok(())
        } else {
            Err(AlgebraError::UnknownSite(format!("#{}", s.0)))
        }
    }

    /// Parse a word such as `L.am L.k L.ap M.kpinv K`.
    pub fn parse_word(&self, text: &str) -> AlgResult<Vec<Letter>> {
        text.split_whitespace()
            .map(|tok| {
                if tok == "K" {
                    return Ok(Letter::K);
                }
                let (site, g) = tok.rsplit_once('.').ok_or_else(|| AlgebraError::Parse(tok.to_string()))?;
                let g = match g {
                    "k" => Gen::K,
                    "kinv" => Gen::KInv,
                    "kp" => Gen::Kp,
                    "kpinv" => Gen::KpInv,
                    "ap" => Gen::Ap,
                    "am" => Gen::Am,
                    _ => return Err(AlgebraError::Parse(tok.to_string())),
                };
                Ok(Letter::G(self.site(site)?, g))
            })
            .collect()
    }

    /// Canonical text: `(coeff) * site{ap^m k^r kp^s am^n} ... [K]` terms
    /// joined by ` + `; the zero element is `0`.
    pub fn format(&self, x: &AlgElem) -> String {
        if x.is_zero() {
            return "0".to_string();
        }
        let mut parts = Vec::with_capacity(x.len());
        for (t, c) in x.terms() {
            let mut s = format!("({c}) *");
            if t.sites.is_empty() && !t.k {
                s.push_str(" 1");
            }
            for (site, m) in &t.sites {
                s.push_str(&format!(" {}{{ap^{} k^{} kp^{} am^{}}}", self.label(*site), m.m, m.r, m.s, m.n));
            }
            if t.k {
                s.push_str(" K");
            }
            parts.push(s);
        }
        parts.join(" + ")
    }

    /// Inverse of [`Algebra::format`].
    pub fn parse(&self, text: &str) -> AlgResult<AlgElem> {
        let text = text.trim();
        if text == "0" {
            return Ok(AlgElem::zero());
        }
        let err = |m: &str| AlgebraError::Parse(m.to_string());
        let mut out = AlgElem::zero();
        let mut rest = text;
        loop {
            rest = rest.trim_start();
            let body = rest.strip_prefix('(').ok_or_else(|| err(rest))?;
            let close = body.find(')').ok_or_else(|| err(rest))?;
            let coeff: LaurentPoly = body[..close].parse().map_err(|_| err(&body[..close]))?;
            let after = body[close + 1..].trim_start().strip_prefix('*').ok_or_else(|| err(rest))?;
            // the term ends at the next " + (" outside braces
            let end = after.find(" + (").unwrap_or(after.len());
            let term_txt = after[..end].trim();
            let mut t = TensorMonomial::one();
            let mut toks = term_txt;
            while !toks.is_empty() {
                toks = toks.trim_start();
                if toks.is_empty() {
                    break;
                }
                if let Some(r) = toks.strip_prefix('K') {
                    if r.is_empty() || r.starts_with(' ') {
                        t.k = true;
                        toks = r;
                        continue;
                    }
                }
                if let Some(r) = toks.strip_prefix('1') {
                    if r.is_empty() || r.starts_with(' ') {
                        toks = r;
                        continue;
                    }
                }
                let open = toks.find('{').ok_or_else(|| err(toks))?;
                let close = toks.find('}').ok_or_else(|| err(toks))?;
                let site = self.site(&toks[..open])?;
                let nums: Vec<i64> = toks[open + 1..close]
                    .split_whitespace()
                    .map(|f| f.split_once('^').and_then(|(_, v)| v.parse().ok()).ok_or_else(|| err(f)))
                    .collect::<AlgResult<_>>()?;
                if nums.len() != 4 || nums[0] < 0 || nums[3] < 0 || (nums[0] > 0 && nums[3] > 0) {
                    return Err(err(&toks[..=close]));
                }
                t.set(site, SiteMonomial::new(nums[0] as u32, nums[1] as i32, nums[2] as i32, nums[3] as u32));
                toks = &toks[close + 1..];
            }
            out.add_term(t, coeff);
            if end == after.len() {
                break;
            }
            rest = &after[end + 3..];
        }
        Ok(out)
    }

    /// First-order coefficient in `ε` (with `q = e^ε`) of `[g1, g2]` at a
    /// single site of parameter `param`, as a classical polynomial in the
    /// generators of site `SiteId(0)`.
    pub fn classical_bracket_of_generators(param: DeformParam, g1: Gen, g2: Gen) -> AlgResult<CPoly> {
        let mut alg = Algebra::new();
        let s = alg.declare("x", param)?;
        let c = alg.commutator(&AlgElem::gen(s, g1), &AlgElem::gen(s, g2))?;
        let mut out = CPoly::zero();
        for (t, coeff) in c.terms() {
            if !coeff.at_one().is_zero() {
                return Err(AlgebraError::NoClassicalLimit);
            }
            let lin = coeff.eps_linear();
            if lin.is_zero() {
                continue;
            }
            let mono = classical_monomial(t);
            out = out.add(&mono.scale(&BigRational::from_integer(lin)));
        }
        Ok(out)
    }
}

/// Commuting image of a K-free PBW monomial; `k^r` with `r < 0` is not
/// representable and panics, since the classical module works with
/// polynomial entries only.
pub fn classical_monomial(t: &TensorMonomial) -> CPoly {
    let mut p = CPoly::one();
    for (s, m) in t.sites() {
        assert!(m.r >= 0 && m.s >= 0, "negative k power has no polynomial image");
        let v = |g| CVar::Site(s.0, g);
        p = p.mul(&CPoly::var_pow(v(CGen::Ap), m.m));
        p = p.mul(&CPoly::var_pow(v(CGen::K), m.r as u32));
        p = p.mul(&CPoly::var_pow(v(CGen::Kp), m.s as u32));
        p = p.mul(&CPoly::var_pow(v(CGen::Am), m.n));
    }
    p
}

/// Commuting specialization `q -> 1` of a K-free element.
pub fn classical_image(x: &AlgElem) -> CPoly {
    let mut out = CPoly::zero();
    for (t, c) in x.terms() {
        let v = c.at_one();
        if v.is_zero() {
            continue;
        }
        out = out.add(&classical_monomial(t).scale(&BigRational::from_integer(v)));
    }
    out
}

/// Reference word-rewriting engine, independent of [`Algebra::mul`].
///
/// Words are rewritten with adjacent-pair rules until none applies; the
/// normal words are ordered per site as `k^r k'^s a^±...`, sites ascending,
/// `K` last. The redex is picked leftmost or rightmost, so comparing the two
/// strategies tests confluence of the rule system.
pub mod rewrite {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Strategy {
        Leftmost,
        Rightmost,
    }

    type Word = Vec<Letter>;

    fn rank(g: Gen) -> u8 {
        match g {
            Gen::K | Gen::KInv => 0,
            Gen::Kp | Gen::KpInv => 1,
            Gen::Ap | Gen::Am => 2,
        }
    }

    /// Replacement for the adjacent pair `(x, y)`, or `None` if it is normal.
    fn rule(alg: &Algebra, x: Letter, y: Letter) -> AlgResult<Option<Vec<(LaurentPoly, Word)>>> {
        use Gen::*;
        let one = LaurentPoly::one;
        Ok(match (x, y) {
            (Letter::K, Letter::K) => return Err(AlgebraError::DoubleK),
            (Letter::G(..), Letter::K) => None,
            (Letter::K, Letter::G(s, g)) => {
                let (s1, s2) = alg.kpair.ok_or(AlgebraError::NoKPair)?;
                if s == s1 && g == Ap {
                    Some(vec![(
                        LaurentPoly::monomial(1, 1),
                        vec![Letter::G(s, Ap), Letter::G(s2, KInv), Letter::G(s2, Kp), Letter::K],
                    )])
                } else if s == s1 && g == Am {
                    Some(vec![(
                        LaurentPoly::monomial(1, -1),
                        vec![Letter::G(s, Am), Letter::G(s2, K), Letter::G(s2, KpInv), Letter::K],
                    )])
                } else {
                    Some(vec![(one(), vec![y, Letter::K])])
                }
            }
            (Letter::G(s, g), Letter::G(t, h)) if s != t => {
                if s > t {
                    Some(vec![(one(), vec![Letter::G(t, h), Letter::G(s, g)])])
                } else {
                    None
                }
            }
            (Letter::G(s, g), Letter::G(_, h)) => {
                let p = alg.param(s);
                let w = |gs: &[Gen]| gs.iter().map(|&g| Letter::G(s, g)).collect::<Word>();
                match (g, h) {
                    (K, KInv) | (KInv, K) | (Kp, KpInv) | (KpInv, Kp) => Some(vec![(one(), vec![])]),
                    _ if rank(g) == 1 && rank(h) == 0 => Some(vec![(one(), w(&[h, g]))]),
                    (Ap, K) | (Ap, Kp) => Some(vec![(p.pow(-1), w(&[h, Ap]))]),
                    (Ap, KInv) | (Ap, KpInv) => Some(vec![(p.pow(1), w(&[h, Ap]))]),
                    (Am, K) | (Am, Kp) => Some(vec![(p.pow(1), w(&[h, Am]))]),
                    (Am, KInv) | (Am, KpInv) => Some(vec![(p.pow(-1), w(&[h, Am]))]),
                    (Am, Ap) => Some(vec![(one(), vec![]), (p.pow(1), w(&[K, Kp]))]),
                    (Ap, Am) => Some(vec![(one(), vec![]), (p.pow(-1), w(&[K, Kp]))]),
                    _ => None,
                }
            }
        })
    }

    fn find_redex(alg: &Algebra, w: &Word, strat: Strategy) -> AlgResult<Option<(usize, Vec<(LaurentPoly, Word)>)>> {
        let n = w.len();
        if n < 2 {
            return Ok(None);
        }
        let positions: Box<dyn Iterator<Item = usize>> = match strat {
            Strategy::Leftmost => Box::new(0..n - 1),
            Strategy::Rightmost => Box::new((0..n - 1).rev()),
        };
        for i in positions {
            if let Some(rep) = rule(alg, w[i], w[i + 1])? {
                return Ok(Some((i, rep)));
            }
        }
        Ok(None)
    }

    /// Outcome of a rewriting run.
    #[derive(Debug, Clone)]
    pub struct Rewritten {
        pub normal: BTreeMap<Word, LaurentPoly>,
        pub steps: usize,
    }

    /// Rewrite `word` to normal words, failing if more than `max_steps`
    /// single-redex steps are needed.
    pub fn rewrite(alg: &Algebra, word: &[Letter], strat: Strategy, max_steps: usize) -> AlgResult<Rewritten> {
        let mut work: Vec<(LaurentPoly, Word)> = vec![(LaurentPoly::one(), word.to_vec())];
        let mut normal: BTreeMap<Word, LaurentPoly> = BTreeMap::new();
        let mut steps = 0usize;
        while let Some((c, w)) = work.pop() {
            match find_redex(alg, &w, strat)? {
                None => {
                    let slot = normal.entry(w).or_default();
                    *slot += &c;
                }
                Some((i, rep)) => {
                    steps += 1;
                    if steps > max_steps {
                        return Err(AlgebraError::Parse(format!("rewriting exceeded {max_steps} steps")));
                    }
                    for (rc, rw) in rep {
                        let mut nw = Vec::with_capacity(w.len() + rw.len());
                        nw.extend_from_slice(&w[..i]);
                        nw.extend(rw);
                        nw.extend_from_slice(&w[i + 2..]);
                        work.push((&c * &rc, nw));
                    }
                }
            }
        }
        normal.retain(|_, c| !c.is_zero());
        Ok(Rewritten { normal, steps })
    }

    /// Convert normal words (`k^r k'^s a^...` per site) to the PBW basis.
    pub fn to_pbw(alg: &Algebra, words: &BTreeMap<Word, LaurentPoly>) -> AlgElem {
        let mut out = AlgElem::zero();
        for (w, c) in words {
            let mut t = TensorMonomial::one();
            let mut coeff = c.clone();
            for l in w {
                match *l {
                    Letter::K => t.k = true,
                    Letter::G(s, g) => {
                        let mut m = t.get(s);
                        match g {
                            Gen::K => m.r += 1,
                            Gen::KInv => m.r -= 1,
                            Gen::Kp => m.s += 1,
                            Gen::KpInv => m.s -= 1,
                            Gen::Ap => m.m += 1,
                            Gen::Am => m.n += 1,
                        }
                        t.set(s, m);
                    }
                }
            }
            // k^r k'^s a+^m = p^{m(r+s)} a+^m k^r k'^s
            for (s, m) in t.sites() {
                if m.m > 0 {
                    coeff = &coeff * &alg.param(s).pow(m.m as i64 * (m.r as i64 + m.s as i64));
                }
            }
            out.add_term(t, coeff);
        }
        out
    }

    /// Upper bound on rewriting steps for a word of length `n`: boundary
    /// pushes at most triple the length, each contraction at most doubles
    /// the number of words, and each word needs at most `len^2` swaps.
    pub fn step_bound(n: usize) -> usize {
        let l = 3 * n;
        l * l * (1usize << (l / 2).min(40)) + 16
    }
}

/// Random words over three sites (two of them carrying the boundary pair)
/// are normalized by [`Algebra::normalize_word`] and by the reference
/// rewriting engine with both redex strategies; all three must agree.
pub fn check_confluence(words: usize, seed: u64) -> crate::report::CheckReport {
    use rand::{Rng, SeedableRng};
    use rewrite::{rewrite, step_bound, to_pbw, Strategy};
    crate::report::CheckReport::timed(|| {
        let mut alg = Algebra::new();
        let s1 = alg.declare("s1", DeformParam::NEG_Q).expect("fresh");
        let s2 = alg.declare("s2", DeformParam::NEG_Q).expect("fresh");
        let s0 = alg.declare("s0", DeformParam::Q2).expect("fresh");
        alg.set_k_pair(s1, s2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut bad = 0usize;
        let mut witness = None;
        let mut max_len = 0;
        for _ in 0..words {
            let len = rng.random_range(1..=6);
            // words carry at most one boundary symbol
            let mut word: Vec<Letter> = (0..len)
                .map(|_| {
                    let pick = rng.random_range(0..18);
                    Letter::G([s1, s2, s0][pick / 6], Gen::ALL[pick % 6])
                })
                .collect();
            if rng.random_bool(0.5) {
                let at = rng.random_range(0..=len);
                word.insert(at, Letter::K);
            }
            max_len = max_len.max(word.len());
            let outcome = (|| -> AlgResult<bool> {
                let direct = alg.normalize_word(&word)?;
                let left = to_pbw(&alg, &rewrite(&alg, &word, Strategy::Leftmost, step_bound(word.len()))?.normal);
                let right = to_pbw(&alg, &rewrite(&alg, &word, Strategy::Rightmost, step_bound(word.len()))?.normal);
                Ok(direct == left && left == right)
            })();
            if !matches!(outcome, Ok(true)) {
                bad += 1;
                witness.get_or_insert_with(|| format!("{word:?}"));
            }
        }
        let residual = match witness {
            None => crate::report::Residual::ExactZero,
            Some(w) => crate::report::Residual::Nonzero { entries: bad, witness: w },
        };
        crate::report::CheckReport::exact("oscalgebra.confluence", residual)
            .param("words", words)
            .param("seed", seed)
            .detail("max_length", max_len)
    })
}

/// Constant (identity-monomial) coefficient of `x`.
pub fn constant_term(x: &AlgElem) -> LaurentPoly {
    x.terms().find(|(t, _)| t.is_one()).map(|(_, c)| c.clone()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::rewrite::{rewrite, to_pbw, Strategy};
    use super::*;

    fn one_site(p: DeformParam) -> (Algebra, SiteId) {
        let mut a = Algebra::new();
        let s = a.declare("s", p).unwrap();
        (a, s)
    }

    #[test]
    fn defining_relations() {
        let (alg, s) = one_site(DeformParam::Q);
        let am_ap = alg.normalize_word(&[Letter::G(s, Gen::Am), Letter::G(s, Gen::Ap)]).unwrap();
        let mut expect = AlgElem::one();
        expect.add_term(TensorMonomial::single(s, SiteMonomial::new(0, 1, 1, 0)), LaurentPoly::monomial(1, 1));
        assert_eq!(am_ap, expect);
        let ap_am = alg.normalize_word(&[Letter::G(s, Gen::Ap), Letter::G(s, Gen::Am)]).unwrap();
        let mut expect = AlgElem::one();
        expect.add_term(TensorMonomial::single(s, SiteMonomial::new(0, 1, 1, 0)), LaurentPoly::monomial(1, -1));
        assert_eq!(ap_am, expect);
    }

    #[test]
    fn am_k_ap_both_orders() {
        let (alg, s) = one_site(DeformParam::Q);
        let x = alg.normalize_word(&alg.parse_word("s.am s.k s.ap").unwrap()).unwrap();
        let mut expect = AlgElem::zero();
        expect.add_term(TensorMonomial::single(s, SiteMonomial::new(0, 1, 0, 0)), LaurentPoly::monomial(1, 1));
        expect.add_term(TensorMonomial::single(s, SiteMonomial::new(0, 2, 1, 0)), LaurentPoly::monomial(1, 2));
        assert_eq!(x, expect);
        for strat in [Strategy::Leftmost, Strategy::Rightmost] {
            let w = alg.parse_word("s.am s.k s.ap").unwrap();
            let r = rewrite(&alg, &w, strat, 1000).unwrap();
            assert_eq!(to_pbw(&alg, &r.normal), expect);
        }
    }

    #[test]
    fn empty_word_is_one() {
        let (alg, _) = one_site(DeformParam::Q);
        assert!(alg.normalize_word(&[]).unwrap().is_one());
    }

    #[test]
    fn k_kp_commute() {
        let (alg, s) = one_site(DeformParam::NEG_Q2);
        let a = alg.mul(&AlgElem::gen(s, Gen::K), &AlgElem::gen(s, Gen::Kp)).unwrap();
        assert_eq!(a, AlgElem::mono(s, SiteMonomial::new(0, 1, 1, 0)));
        assert!(alg.commutator(&AlgElem::gen(s, Gen::K), &AlgElem::gen(s, Gen::Kp)).unwrap().is_zero());
    }

    #[test]
    fn commutator_am_ap() {
        let (alg, s) = one_site(DeformParam::Q);
        let c = alg.commutator(&AlgElem::gen(s, Gen::Am), &AlgElem::gen(s, Gen::Ap)).unwrap();
        let expect = AlgElem::term(
            TensorMonomial::single(s, SiteMonomial::new(0, 1, 1, 0)),
            LaurentPoly::from_terms([(1, 1), (-1, -1)]),
        );
        assert_eq!(c, expect);
    }

    #[test]
    fn relations_vanish_for_every_param() {
        for p in DeformParam::ALL {
            let (alg, s) = one_site(p);
            let kk = AlgElem::mono(s, SiteMonomial::new(0, 1, 1, 0));
            let a = alg.mul(&AlgElem::gen(s, Gen::Am), &AlgElem::gen(s, Gen::Ap)).unwrap();
            let rel = a.sub(&AlgElem::one()).sub(&kk.scale(&p.pow(1)));
            assert!(rel.is_zero(), "{p}");
            let b = alg.mul(&AlgElem::gen(s, Gen::Ap), &AlgElem::gen(s, Gen::Am)).unwrap();
            let rel = b.sub(&AlgElem::one()).sub(&kk.scale(&p.pow(-1)));
            assert!(rel.is_zero(), "{p}");
            for (g, ex) in [(Gen::K, 1), (Gen::Kp, 1)] {
                let lhs = alg.mul(&AlgElem::gen(s, g), &AlgElem::gen(s, Gen::Ap)).unwrap();
                let rhs = alg.mul(&AlgElem::gen(s, Gen::Ap), &AlgElem::gen(s, g)).unwrap().scale(&p.pow(ex));
                assert_eq!(lhs, rhs);
                let lhs = alg.mul(&AlgElem::gen(s, Gen::Am), &AlgElem::gen(s, g)).unwrap();
                let rhs = alg.mul(&AlgElem::gen(s, g), &AlgElem::gen(s, Gen::Am)).unwrap().scale(&p.pow(ex));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn boundary_pushes() {
        let mut alg = Algebra::new();
        let s1 = alg.declare("1", DeformParam::NEG_Q).unwrap();
        let s2 = alg.declare("2", DeformParam::NEG_Q).unwrap();
        alg.set_k_pair(s1, s2);
        let x = alg.push_k_right(&AlgElem::one(), &AlgElem::gen(s1, Gen::Ap)).unwrap();
        let mut t = TensorMonomial::single(s1, SiteMonomial::new(1, 0, 0, 0));
        t.set(s2, SiteMonomial::new(0, -1, 1, 0));
        assert_eq!(x, AlgElem::term(t.with_k(true), LaurentPoly::monomial(1, 1)));
        let y = alg.push_k_right(&AlgElem::one(), &AlgElem::gen(s1, Gen::K)).unwrap();
        assert_eq!(y, AlgElem::term(TensorMonomial::single(s1, Gen::K.monomial()).with_k(true), LaurentPoly::one()));
        let apam = alg.mul(&AlgElem::gen(s1, Gen::Ap), &AlgElem::gen(s1, Gen::Am)).unwrap();
        let z = alg.push_k_right(&AlgElem::one(), &apam).unwrap();
        let expect = alg.mul(&apam, &AlgElem::boundary()).unwrap();
        assert_eq!(z, expect);
        assert!(alg.mul(&AlgElem::boundary(), &AlgElem::boundary()).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut alg = Algebra::new();
        let s1 = alg.declare("L", DeformParam::Q).unwrap();
        let s2 = alg.declare("M", DeformParam::NEG_Q).unwrap();
        alg.set_k_pair(s1, s2);
        let w = alg.parse_word("L.am M.ap L.ap M.kinv K L.ap").unwrap();
        let x = alg.normalize_word(&w).unwrap();
        let txt = alg.format(&x);
        assert_eq!(alg.parse(&txt).unwrap(), x);
        assert_eq!(alg.parse("0").unwrap(), AlgElem::zero());
        assert_eq!(alg.parse(&alg.format(&AlgElem::one())).unwrap(), AlgElem::one());
    }

    #[test]
    fn conflicting_declaration() {
        let mut alg = Algebra::new();
        alg.declare("x", DeformParam::Q).unwrap();
        assert!(alg.declare("x", DeformParam::Q).is_ok());
        assert!(matches!(alg.declare("x", DeformParam::Q2), Err(AlgebraError::ConflictingParam { .. })));
        assert!(alg.parse_word("y.k").is_err());
    }

    #[test]
    fn classical_generator_brackets() {
        use crate::classical::{CGen, CPoly, CVar};
        let v = |g| CPoly::var(CVar::Site(0, g));
        let b = Algebra::classical_bracket_of_generators(DeformParam::Q, Gen::K, Gen::Ap).unwrap();
        assert_eq!(b, v(CGen::K).mul(&v(CGen::Ap)));
        let b = Algebra::classical_bracket_of_generators(DeformParam::Q, Gen::K, Gen::Kp).unwrap();
        assert!(b.is_zero());
        let b = Algebra::classical_bracket_of_generators(DeformParam::Q2, Gen::Ap, Gen::Am).unwrap();
        assert_eq!(b, v(CGen::K).mul(&v(CGen::Kp)).scale_int(-4));
        assert_eq!(
            Algebra::classical_bracket_of_generators(DeformParam::NEG_Q, Gen::K, Gen::Ap),
            Err(AlgebraError::NoClassicalLimit)
        );
    }
}
