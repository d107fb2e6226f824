//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Singular values, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&x| x > rel_tol * top).count(),
        _ => 0,
    }
}

/// Result of a rank-revealing nullspace computation.
#[derive(Debug, Clone)]
pub struct Nullspace {
    /// Orthonormal basis of the numerical nullspace.
    pub basis: Vec<DVector<f64>>,
    /// All singular values, descending, padded with zeros to the column count.
    pub singular_values: Vec<f64>,
}

impl Nullspace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// The smallest few singular values relative to the largest.
    pub fn tail(&self, k: usize) -> Vec<f64> {
        let top = self.singular_values.first().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
        let n = self.singular_values.len();
        self.singular_values[n.saturating_sub(k)..].iter().map(|s| s / top).collect()
    }
}

/// Nullspace of `a` via SVD; rows are zero-padded so that the full right
/// singular basis is available for wide systems.
pub fn nullspace(a: &DMatrix<f64>, rel_tol: f64) -> Nullspace {
    let n = a.ncols();
    if n == 0 {
        return Nullspace { basis: Vec::new(), singular_values: Vec::new() };
    }
    let m = a.nrows().max(n);
    let mut padded = DMatrix::<f64>::zeros(m, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let mut basis = Vec::new();
    for &i in &order {
        if sv[i] <= rel_tol * top || top == 0.0 {
            basis.push(vt.row(i).transpose());
        }
    }
    let mut sorted: Vec<f64> = order.iter().map(|&i| sv[i]).collect();
    sorted.resize(n, 0.0);
    Nullspace { basis, singular_values: sorted }
}

/// Integer basis of the rational nullspace of an integer matrix.
pub fn integer_nullspace(rows: &[Vec<i64>], ncols: usize) -> Vec<Vec<i64>> {
    let mut m: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| BigRational::from_integer(BigInt::from(x))).collect())
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..ncols {
        let Some(p) = (row..m.len()).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(row, p);
        let inv = m[row][col].recip();
        for x in m[row].iter_mut() {
            *x = &*x * &inv;
        }
        for r in 0..m.len() {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..ncols {
                    let d = &f * &m[row][c];
                    m[r][c] = &m[r][c] - &d;
                }
            }
        }
        pivots.push(col);
        row += 1;
        if row == m.len() {
            break;
        }
    }
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    let mut out = Vec::new();
    for &f in &free {
        let mut v = vec![BigRational::zero(); ncols];
        v[f] = BigRational::one();
        for (i, &pc) in pivots.iter().enumerate() {
            v[pc] = -m[i][f].clone();
        }
        let lcm = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
        let ints: Vec<BigInt> = v.iter().map(|x| (x * BigRational::from_integer(lcm.clone())).to_integer()).collect();
        let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
        let g = if g.is_zero() { BigInt::one() } else { g };
        let sign = if ints.iter().find(|x| !x.is_zero()).is_some_and(|x| x.is_negative()) { -1 } else { 1 };
        out.push(ints.iter().map(|x| (x / &g).to_i64().unwrap_or(0) * sign).collect());
    }
    out
}

/// Max-abs entry of a vector.
pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_of_wide_matrix() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = nullspace(&a, 1e-10);
        assert_eq!(ns.dim(), 2);
        for v in &ns.basis {
            assert!(max_abs(&(&a * v)) < 1e-12);
        }
    }

    #[test]
    fn integer_kernel() {
        let k = integer_nullspace(&[vec![1, -1, 0], vec![0, 1, -1]], 3);
        assert_eq!(k, vec![vec![1, 1, 1]]);
        let k = integer_nullspace(&[], 2);
        assert_eq!(k.len(), 2);
    }

    #[test]
    fn rank_of_diag() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3, 1e-14]));
        assert_eq!(rank(&a, 1e-10), 2);
    }
}
