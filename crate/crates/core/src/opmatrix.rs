//! Sparse matrices with algebra-valued entries over labelled auxiliary spaces.
//!
//! Index convention: for an entry `(row, col)` the row is the incoming
//! (lower) multi-index and the column the outgoing (upper) one, so that the
//! product `C = A B` reads `C_i^k = sum_j A_i^j B_j^k` with `A` on the left.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::coeffring::LaurentPoly;
use crate::oscalgebra::{AlgElem, Algebra, AlgebraError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpError {
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(String, String),
    #[error("auxiliary space `{0}` not in shape")]
    UnknownLabel(String),
    #[error("wrong dimension: expected {expected}, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

pub type OpResult<T> = Result<T, OpError>;

/// Ordered auxiliary spaces; the first label varies slowest in flat indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AuxShape {
    spaces: Vec<(String, usize)>,
}

impl AuxShape {
    /// Tensor product of two-dimensional spaces.
    pub fn qubits<S: AsRef<str>>(labels: &[S]) -> Self {
        Self { spaces: labels.iter().map(|l| (l.as_ref().to_string(), 2)).collect() }
    }

    /// A single direct-sum space of dimension `d`.
    pub fn direct_sum(label: &str, d: usize) -> Self {
        Self { spaces: vec![(label.to_string(), d)] }
    }

    pub fn from_spaces(spaces: Vec<(String, usize)>) -> Self {
        Self { spaces }
    }

    pub fn dim(&self) -> usize {
        self.spaces.iter().map(|(_, d)| d).product()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.spaces.iter().map(|(l, _)| l.as_str())
    }

    pub fn len(&self) -> usize {
        self.spaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spaces.is_empty()
    }

    pub fn position(&self, label: &str) -> OpResult<usize> {
        self.spaces.iter().position(|(l, _)| l == label).ok_or_else(|| OpError::UnknownLabel(label.to_string()))
    }

    /// Concatenation, used by [`OpMatrix::kron`].
    pub fn concat(&self, other: &AuxShape) -> AuxShape {
        let mut spaces = self.spaces.clone();
        spaces.extend(other.spaces.iter().cloned());
        AuxShape { spaces }
    }

    /// Split a flat index into per-space digits.
    pub fn digits(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.spaces.len()];
        for (k, (_, d)) in self.spaces.iter().enumerate().rev() {
            out[k] = flat % d;
            flat /= d;
        }
        out
    }

    pub fn flat(&self, digits: &[usize]) -> usize {
        self.spaces.iter().zip(digits).fold(0, |acc, ((_, d), &x)| acc * d + x)
    }
}

impl std::fmt::Display for AuxShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.spaces.iter().map(|(l, d)| format!("{l}:{d}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Square operator matrix; absent entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OpMatrix {
    shape: AuxShape,
    entries: BTreeMap<(usize, usize), AlgElem>,
}

impl OpMatrix {
    pub fn zero(shape: AuxShape) -> Self {
        Self { shape, entries: BTreeMap::new() }
    }

    pub fn identity(shape: AuxShape) -> Self {
        Self::scalar_diag(shape, AlgElem::one())
    }

    /// `x` times the identity.
    pub fn scalar_diag(shape: AuxShape, x: AlgElem) -> Self {
        let mut m = Self::zero(shape);
        for i in 0..m.dim() {
            m.set(i, i, x.clone());
        }
        m
    }

    /// Build from `(row, col, entry)` triples; zero entries are dropped.
    pub fn from_entries(shape: AuxShape, it: impl IntoIterator<Item = (usize, usize, AlgElem)>) -> Self {
        let mut m = Self::zero(shape);
        for (r, c, x) in it {
            m.set(r, c, x);
        }
        m
    }

    /// `diag(1, λ)` on one two-dimensional space.
    pub fn spectral(label: &str, lambda: LaurentPoly) -> Self {
        Self::from_entries(
            AuxShape::qubits(&[label]),
            [(0, 0, AlgElem::one()), (1, 1, AlgElem::scalar(lambda))],
        )
    }

    /// Permutation matrix exchanging basis vectors `i` and `j` of a
    /// direct-sum space of dimension `d`.
    pub fn transposition(label: &str, d: usize, i: usize, j: usize) -> Self {
        let mut m = Self::identity(AuxShape::direct_sum(label, d));
        m.entries.remove(&(i, i));
        m.entries.remove(&(j, j));
        m.set(i, j, AlgElem::one());
        m.set(j, i, AlgElem::one());
        m
    }

    pub fn shape(&self) -> &AuxShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn get(&self, r: usize, c: usize) -> AlgElem {
        self.entries.get(&(r, c)).cloned().unwrap_or_default()
    }

    pub fn entry(&self, r: usize, c: usize) -> Option<&AlgElem> {
        self.entries.get(&(r, c))
    }

    pub fn set(&mut self, r: usize, c: usize, x: AlgElem) {
        if x.is_zero() {
            self.entries.remove(&(r, c));
        } else {
            self.entries.insert((r, c), x);
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize), &AlgElem)> {
        self.entries.iter()
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    fn require_same_shape(&self, other: &OpMatrix) -> OpResult<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(OpError::ShapeMismatch(self.shape.to_string(), other.shape.to_string()))
        }
    }

    /// Exact product with `self` on the left.
    pub fn matmul(&self, other: &OpMatrix, alg: &Algebra) -> OpResult<OpMatrix> {
        self.require_same_shape(other)?;
        let mut by_row: BTreeMap<usize, Vec<(usize, &AlgElem)>> = BTreeMap::new();
        for (&(r, c), x) in &other.entries {
            by_row.entry(r).or_default().push((c, x));
        }
        let mut acc: BTreeMap<(usize, usize), AlgElem> = BTreeMap::new();
        for (&(r, mid), x) in &self.entries {
            let Some(row) = by_row.get(&mid) else { continue };
            for &(c, y) in row {
                let p = alg.mul(x, y)?;
                acc.entry((r, c)).or_default().add_assign(&p);
            }
        }
        acc.retain(|_, v| !v.is_zero());
        Ok(OpMatrix { shape: self.shape.clone(), entries: acc })
    }

    /// Left-to-right product of a nonempty chain.
    pub fn product<'a>(factors: impl IntoIterator<Item = &'a OpMatrix>, alg: &Algebra) -> OpResult<OpMatrix> {
        let mut it = factors.into_iter();
        let first = it.next().expect("product of an empty chain").clone();
        it.try_fold(first, |acc, m| acc.matmul(m, alg))
    }

    pub fn sub(&self, other: &OpMatrix) -> OpResult<OpMatrix> {
        self.require_same_shape(other)?;
        let mut out = self.clone();
        for (&(r, c), y) in &other.entries {
            let v = out.get(r, c).sub(y);
            out.set(r, c, v);
        }
        Ok(out)
    }

    /// Kronecker product; entries multiply with `self`'s factor on the left.
    pub fn kron(&self, other: &OpMatrix, alg: &Algebra) -> OpResult<OpMatrix> {
        let d2 = other.dim();
        let mut out = OpMatrix::zero(self.shape.concat(&other.shape));
        for (&(r1, c1), x) in &self.entries {
            for (&(r2, c2), y) in &other.entries {
                out.set(r1 * d2 + r2, c1 * d2 + c2, alg.mul(x, y)?);
            }
        }
        Ok(out)
    }

    /// Place `self` on the spaces `targets` of `full`, acting as the
    /// identity on the remaining spaces.
    pub fn embed<S: AsRef<str>>(&self, targets: &[S], full: &AuxShape) -> OpResult<OpMatrix> {
        let pos: Vec<usize> = targets.iter().map(|t| full.position(t.as_ref())).collect::<OpResult<_>>()?;
        let local_shape = AuxShape::from_spaces(pos.iter().map(|&p| full.spaces[p].clone()).collect());
        if local_shape.dim() != self.dim() {
            return Err(OpError::WrongDimension { expected: local_shape.dim(), got: self.dim() });
        }
        let others: Vec<usize> = (0..full.len()).filter(|k| !pos.contains(k)).collect();
        let rest = AuxShape::from_spaces(others.iter().map(|&p| full.spaces[p].clone()).collect());
        let mut out = OpMatrix::zero(full.clone());
        let mut rd = vec![0; full.len()];
        let mut cd = vec![0; full.len()];
        for (&(r, c), x) in &self.entries {
            let (lr, lc) = (local_shape.digits(r), local_shape.digits(c));
            for o in 0..rest.dim() {
                let od = rest.digits(o);
                for (k, &p) in pos.iter().enumerate() {
                    rd[p] = lr[k];
                    cd[p] = lc[k];
                }
                for (k, &p) in others.iter().enumerate() {
                    rd[p] = od[k];
                    cd[p] = od[k];
                }
                out.set(full.flat(&rd), full.flat(&cd), x.clone());
            }
        }
        Ok(out)
    }

    /// Reinterpret a 4-dimensional direct sum as `a ⊗ b`, with direct-sum
    /// index `d = i_a + 2 i_b` sent to tensor digits `(i_a, i_b)`.
    pub fn reshape_sum_to_tensor(&self, a: &str, b: &str) -> OpResult<OpMatrix> {
        if self.shape.len() != 1 || self.dim() != 4 {
            return Err(OpError::WrongDimension { expected: 4, got: self.dim() });
        }
        let shape = AuxShape::qubits(&[a, b]);
        let map = |d: usize| shape.flat(&[d % 2, d / 2]);
        Ok(OpMatrix::from_entries(
            shape.clone(),
            self.entries.iter().map(|(&(r, c), x)| (map(r), map(c), x.clone())),
        ))
    }

    /// Apply `f` to every entry.
    pub fn map_entries(&self, mut f: impl FnMut(&AlgElem) -> OpResult<AlgElem>) -> OpResult<OpMatrix> {
        let mut out = OpMatrix::zero(self.shape.clone());
        for (&(r, c), x) in &self.entries {
            out.set(r, c, f(x)?);
        }
        Ok(out)
    }

    /// Human-readable first nonzero entry, or `None` for the zero matrix.
    pub fn witness(&self, alg: &Algebra) -> Option<String> {
        self.entries.iter().next().map(|(&(r, c), x)| {
            let (rd, cd) = (self.shape.digits(r), self.shape.digits(c));
            format!("{rd:?}->{cd:?}: {}", alg.format(x))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffring::DeformParam;
    use crate::oscalgebra::Gen;

    fn l_local(alg: &Algebra, site: &str) -> OpMatrix {
        let s = alg.site(site).unwrap();
        OpMatrix::from_entries(
            AuxShape::qubits(&["x", "y"]),
            [
                (0, 0, AlgElem::one()),
                (2, 2, AlgElem::gen(s, Gen::K)),
                (2, 1, AlgElem::gen(s, Gen::Ap)),
                (1, 2, AlgElem::gen(s, Gen::Am)),
                (1, 1, AlgElem::gen(s, Gen::Kp)),
                (3, 3, AlgElem::one()),
            ],
        )
    }

    #[test]
    fn identity_is_neutral() {
        let mut alg = Algebra::new();
        alg.declare("A", DeformParam::Q).unwrap();
        let l = l_local(&alg, "A");
        let i = OpMatrix::identity(l.shape().clone());
        assert_eq!(l.matmul(&i, &alg).unwrap(), l);
        assert_eq!(i.matmul(&l, &alg).unwrap(), l);
    }

    #[test]
    fn spectral_diagonals_multiply() {
        let alg = Algebra::new();
        let e = OpMatrix::spectral("x", LaurentPoly::monomial(2, 0));
        let f = OpMatrix::spectral("x", LaurentPoly::monomial(3, 0));
        let p = e.matmul(&f, &alg).unwrap();
        assert_eq!(p.get(1, 1), AlgElem::scalar(LaurentPoly::monomial(6, 0)));
        let k = e.kron(&e, &alg).unwrap();
        assert_eq!(k.nonzero_count(), 4);
        assert_eq!(k.get(3, 3), AlgElem::scalar(LaurentPoly::monomial(4, 0)));
    }

    #[test]
    fn embed_identity_everywhere() {
        let full = AuxShape::qubits(&["a", "b", "c"]);
        let id = OpMatrix::identity(AuxShape::qubits(&["z"]));
        for t in ["a", "b", "c"] {
            assert_eq!(id.embed(&[t], &full).unwrap(), OpMatrix::identity(full.clone()));
        }
        assert!(matches!(id.embed(&["nope"], &full), Err(OpError::UnknownLabel(_))));
    }

    #[test]
    fn embed_sparsity_bookkeeping() {
        let mut alg = Algebra::new();
        alg.declare("A", DeformParam::Q).unwrap();
        let l = l_local(&alg, "A");
        let full = AuxShape::qubits(&["1", "2", "3", "4"]);
        let e = l.embed(&["1", "3"], &full).unwrap();
        assert_eq!(e.nonzero_count(), l.nonzero_count() * 4);
    }

    #[test]
    fn disjoint_embeddings_commute() {
        let mut alg = Algebra::new();
        alg.declare("A", DeformParam::Q).unwrap();
        alg.declare("B", DeformParam::NEG_Q).unwrap();
        let full = AuxShape::qubits(&["1", "2", "3", "4"]);
        let x = l_local(&alg, "A").embed(&["1", "2"], &full).unwrap();
        let y = l_local(&alg, "B").embed(&["3", "4"], &full).unwrap();
        assert_eq!(x.matmul(&y, &alg).unwrap(), y.matmul(&x, &alg).unwrap());
    }

    #[test]
    fn transpositions_square_to_identity_and_commute() {
        let alg = Algebra::new();
        let p = OpMatrix::transposition("d", 4, 0, 3);
        let q = OpMatrix::transposition("d", 4, 1, 2);
        let id = OpMatrix::identity(AuxShape::direct_sum("d", 4));
        assert_eq!(p.matmul(&p, &alg).unwrap(), id);
        assert_eq!(p.matmul(&q, &alg).unwrap(), q.matmul(&p, &alg).unwrap());
    }

    #[test]
    fn reshape_identity_and_index_map() {
        let id = OpMatrix::identity(AuxShape::direct_sum("d", 4));
        assert_eq!(id.reshape_sum_to_tensor("a", "b").unwrap(), OpMatrix::identity(AuxShape::qubits(&["a", "b"])));
        let p = OpMatrix::transposition("d", 4, 1, 3);
        let t = p.reshape_sum_to_tensor("a", "b").unwrap();
        // d = 1 is (1, 0) -> flat 2; d = 3 is (1, 1) -> flat 3
        assert!(t.get(2, 3).is_one());
        assert!(OpMatrix::identity(AuxShape::direct_sum("d", 3)).reshape_sum_to_tensor("a", "b").is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let alg = Algebra::new();
        let a = OpMatrix::identity(AuxShape::qubits(&["x"]));
        let b = OpMatrix::identity(AuxShape::qubits(&["y"]));
        assert!(matches!(a.matmul(&b, &alg), Err(OpError::ShapeMismatch(..))));
    }
}
