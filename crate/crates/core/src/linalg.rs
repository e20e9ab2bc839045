//! Dense real vectors and matrices sized for MAP/PH descriptors.
//!
//! Everything here is row-vector oriented: probability vectors multiply
//! matrices from the left (`x.mul_mat(&q)` is `xQ`). Matrices never grow
//! beyond a few dozen rows, so storage is a flat row-major `Vec<f64>`.

use std::fmt;
use std::ops::Index;

use crate::error::{Error, Result};

/// Tolerance for structural checks (generator row sums, sign patterns).
pub const STRUCTURAL_TOL: f64 = 1e-9;
/// Tolerance for linear-solve residuals.
pub const SOLVE_TOL: f64 = 1e-12;

/// A dense row vector.
#[derive(Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Checked constructor: non-empty and finite.
    pub fn try_new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Structural(
                "vector must have at least one entry".into(),
            ));
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("vector entry {i} is not finite")));
        }
        Ok(Vector(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn ones(len: usize) -> Self {
        Vector(vec![1.0; len])
    }

    /// The `i`-th unit vector of length `len`.
    pub fn unit(i: usize, len: usize) -> Self {
        let mut v = vec![0.0; len];
        v[i] = 1.0;
        Vector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `v e`, the sum of entries.
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|x| x * s).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// In-place `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Vector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
    }

    /// Entrywise product.
    pub fn hadamard(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    /// Row vector times matrix: `x M`.
    pub fn mul_mat(&self, m: &Matrix) -> Vector {
        assert_eq!(
            self.len(),
            m.rows,
            "row vector length must match matrix rows"
        );
        let mut out = vec![0.0; m.cols];
        for (i, &x) in self.0.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &m.data[i * m.cols..(i + 1) * m.cols];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += x * a;
            }
        }
        Vector(out)
    }

    /// Max-norm.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

/// A dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Structural("matrix must be at least 1x1".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Structural(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(p) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "matrix entry ({}, {}) is not finite",
                p / cols,
                p % cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::Structural(format!(
                    "row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(nrows, ncols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// A 1×n matrix holding a row vector.
    pub fn row_matrix(v: &Vector) -> Self {
        Matrix {
            rows: 1,
            cols: v.len(),
            data: v.as_slice().to_vec(),
        }
    }

    /// An n×1 matrix holding a column vector.
    pub fn column_matrix(v: &Vector) -> Self {
        Matrix {
            rows: v.len(),
            cols: 1,
            data: v.as_slice().to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Matrix times column vector: `M v`.
    pub fn mul_vec(&self, v: &Vector) -> Vector {
        assert_eq!(
            self.cols,
            v.len(),
            "column vector length must match matrix cols"
        );
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
            .collect::<Vec<_>>()
            .into()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j);
            }
        }
        out
    }

    /// `M e`.
    pub fn row_sums(&self) -> Vector {
        (0..self.rows)
            .map(|i| self.row(i).iter().sum())
            .collect::<Vec<_>>()
            .into()
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries((0..self.rows).map(|i| self.row(i)))
            .finish()
    }
}

/// Kronecker product: block `(i, j)` of the result is `a[i][j] * b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a.get(i, j);
            if aij == 0.0 {
                continue;
            }
            for p in 0..b.rows {
                for q in 0..b.cols {
                    out.data[(i * b.rows + p) * cols + j * b.cols + q] = aij * b.get(p, q);
                }
            }
        }
    }
    out
}

/// Kronecker product of two row vectors.
pub fn kron_vec(a: &Vector, b: &Vector) -> Vector {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a.iter() {
        out.extend(b.iter().map(|y| x * y));
    }
    out.into()
}

/// Kronecker sum `A ⊗ I + I ⊗ B` of two square matrices.
pub fn kron_sum(a: &Matrix, b: &Matrix) -> Matrix {
    assert!(
        a.is_square() && b.is_square(),
        "kronecker sum needs square operands"
    );
    kron(a, &Matrix::identity(b.rows)).add(&kron(&Matrix::identity(a.rows), b))
}

/// Entrywise `d`-th power.
pub fn hadamard_power(v: &Vector, d: u32) -> Vector {
    assert!(d >= 1, "hadamard power needs d >= 1");
    match d {
        1 => v.clone(),
        2 => v.iter().map(|x| x * x).collect::<Vec<_>>().into(),
        _ => v
            .iter()
            .map(|x| x.powi(d as i32))
            .collect::<Vec<_>>()
            .into(),
    }
}

/// Entrywise `d`-th root; entries must be nonnegative.
pub fn hadamard_root(v: &Vector, d: u32) -> Result<Vector> {
    if d == 0 {
        return Err(Error::Validation("hadamard root needs d >= 1".into()));
    }
    if let Some(i) = v.iter().position(|&x| x < 0.0) {
        return Err(Error::Validation(format!(
            "hadamard root of negative entry {} at index {i}",
            v[i]
        )));
    }
    let root = |x: f64| match d {
        1 => x,
        2 => x.sqrt(),
        3 => x.cbrt(),
        _ => x.powf(1.0 / d as f64),
    };
    Ok(v.iter().map(|&x| root(x)).collect::<Vec<_>>().into())
}

/// Strong connectivity of the directed graph with an edge `i -> j` wherever
/// `q[i][j] > 0`, `i != j`.
#[allow(clippy::needless_range_loop)]
pub fn is_irreducible(q: &Matrix) -> bool {
    let n = q.rows;
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { q.get(i, j) } else { q.get(j, i) };
                if i != j && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Checks the sign and row-sum pattern of an infinitesimal generator.
pub fn validate_generator(q: &Matrix, name: &str) -> Result<()> {
    if !q.is_square() {
        return Err(Error::Structural(format!(
            "{name} must be square, got {}x{}",
            q.rows, q.cols
        )));
    }
    let scale = q.max_abs().max(1.0);
    for i in 0..q.rows {
        for j in 0..q.cols {
            if i != j && q.get(i, j) < 0.0 {
                return Err(Error::Validation(format!(
                    "{name} has negative off-diagonal entry ({i}, {j}) = {}",
                    q.get(i, j)
                )));
            }
        }
        let s: f64 = q.row(i).iter().sum();
        if s.abs() > STRUCTURAL_TOL * scale {
            return Err(Error::Validation(format!(
                "{name} row {i} sums to {s}, expected 0"
            )));
        }
    }
    Ok(())
}

/// Stationary probability vector `x` of an irreducible generator:
/// `xQ = 0`, `xe = 1`, `x > 0`.
///
/// Solves the overdetermined system `x [Q | e] = [0 | 1]` by Householder
/// least squares on the transposed system.
pub fn stationary_vector(q: &Matrix) -> Result<Vector> {
    validate_generator(q, "generator")?;
    if !is_irreducible(q) {
        return Err(Error::Structural("generator is reducible".into()));
    }
    let n = q.rows;
    // A^T is (n+1) x n: rows of Q^T followed by a row of ones.
    let mut at = q.transpose().to_rows();
    at.push(vec![1.0; n]);
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = 1.0;
    let x = householder_least_squares(at, rhs)?;

    let x = Vector(x);
    let residual = x.mul_mat(q).max_abs();
    if residual > SOLVE_TOL * q.norm_inf().max(1.0) {
        return Err(Error::Numeric(format!(
            "stationary residual {residual:e} too large"
        )));
    }
    if let Some(i) = x.iter().position(|&v| v <= 0.0) {
        return Err(Error::Numeric(format!(
            "stationary vector entry {i} is {} (expected > 0)",
            x[i]
        )));
    }
    Ok(x)
}

/// Least-squares solution of `A x = b` for a tall full-rank `A` (rows given).
#[allow(clippy::needless_range_loop)]
fn householder_least_squares(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let m = a.len();
    let n = a[0].len();
    for k in 0..n {
        let norm: f64 = (k..m).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Numeric("rank-deficient least-squares system".into()));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let s: f64 = (k..m).map(|i| v[i - k] * a[i][j]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                a[i][j] -= s * v[i - k];
            }
        }
        let s: f64 = (k..m).map(|i| v[i - k] * b[i]).sum::<f64>() * 2.0 / vnorm2;
        for i in k..m {
            b[i] -= s * v[i - k];
        }
    }
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        if a[i][i].abs() <= 1e-14 * scale {
            return Err(Error::Numeric("rank-deficient least-squares system".into()));
        }
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Ok(x)
}

/// LU factorisation with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Structural("LU needs a square matrix".into()));
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| lu[i * n + k].abs().total_cmp(&lu[j * n + k].abs()))
                .unwrap();
            if lu[p * n + k].abs() <= 1e-14 * scale || scale == 0.0 {
                return Err(Error::Numeric("matrix is singular".into()));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    /// Solves `A x = b` for a column vector `b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                y[i] -= self.lu[i * n + j] * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] -= self.lu[i * n + j] * y[j];
            }
            y[i] /= self.lu[i * n + i];
        }
        y
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        for j in 0..n {
            let col = self.solve(&Vector::unit(j, n).0);
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        inv
    }
}

/// Checks the sign pattern of a PH subgenerator.
pub fn validate_subgenerator(t: &Matrix) -> Result<()> {
    if !t.is_square() {
        return Err(Error::Structural(format!(
            "subgenerator must be square, got {}x{}",
            t.rows, t.cols
        )));
    }
    let scale = t.max_abs().max(1.0);
    for i in 0..t.rows {
        if t.get(i, i) >= 0.0 {
            return Err(Error::Validation(format!(
                "subgenerator diagonal entry ({i}, {i}) = {} must be negative",
                t.get(i, i)
            )));
        }
        for j in 0..t.cols {
            if i != j && t.get(i, j) < 0.0 {
                return Err(Error::Validation(format!(
                    "subgenerator off-diagonal entry ({i}, {j}) = {} is negative",
                    t.get(i, j)
                )));
            }
        }
        let s: f64 = t.row(i).iter().sum();
        if s > STRUCTURAL_TOL * scale {
            return Err(Error::Validation(format!(
                "subgenerator row {i} sums to {s} > 0"
            )));
        }
    }
    Ok(())
}

/// `(-T)^{-1}` for a PH subgenerator `T`; the result is entrywise nonnegative.
pub fn neg_inverse(t: &Matrix) -> Result<Matrix> {
    validate_subgenerator(t)?;
    let neg = t.scale(-1.0);
    let inv = Lu::factor(&neg)?.inverse();

    let residual = neg.mul(&inv).sub(&Matrix::identity(t.rows)).max_abs();
    let bound = SOLVE_TOL * (neg.norm_inf() * inv.norm_inf()).max(1.0);
    if residual > bound {
        return Err(Error::Numeric(format!(
            "(-T)^-1 residual {residual:e} exceeds {bound:e}; T is numerically singular"
        )));
    }
    let floor = -SOLVE_TOL * inv.max_abs();
    let mut inv = inv;
    for v in inv.data.iter_mut() {
        if *v < floor {
            return Err(Error::Numeric(format!("(-T)^-1 has negative entry {v}")));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn kron_identity_and_scalar() {
        let b = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(kron(&Matrix::identity(1), &b), b);
        let two = m(&[&[2.0]]);
        assert_eq!(
            kron(&two, &Matrix::identity(2)),
            m(&[&[2.0, 0.0], &[0.0, 2.0]])
        );
    }

    #[test]
    fn kron_matrix_with_row_vector() {
        // Expanded by hand: row i of D ⊗ α is (d_i1 α, d_i2 α).
        let d = m(&[&[1.0, 2.0], &[3.0, 2.0]]);
        let alpha = m(&[&[0.25, 0.75]]);
        let expected = m(&[&[0.25, 0.75, 0.5, 1.5], &[0.75, 2.25, 0.5, 1.5]]);
        let got = kron(&d, &alpha);
        assert_eq!((got.rows(), got.cols()), (2, 4));
        assert_eq!(got, expected);
    }

    #[test]
    fn kron_sum_matches_definition() {
        let a = m(&[&[-1.0, 1.0], &[2.0, -2.0]]);
        let b = m(&[&[-3.0]]);
        assert_eq!(kron_sum(&a, &b), m(&[&[-4.0, 1.0], &[2.0, -5.0]]));
    }

    #[test]
    fn hadamard_basics() {
        let v = Vector::from(vec![0.5, 0.5]);
        assert_eq!(hadamard_power(&v, 2).as_slice(), &[0.25, 0.25]);
        assert_eq!(hadamard_power(&v, 1), v);
        let r = hadamard_root(&Vector::from(vec![0.25, 0.25]), 2).unwrap();
        assert_eq!(r.as_slice(), &[0.5, 0.5]);
        let e1 = Vector::unit(0, 4);
        assert_eq!(hadamard_root(&e1, 3).unwrap(), e1);
    }

    #[test]
    fn hadamard_root_of_example_gamma() {
        let r = hadamard_root(&Vector::from(vec![7.0 / 16.0, 9.0 / 16.0]), 2).unwrap();
        assert!((r[0] - (7.0f64).sqrt() / 4.0).abs() < 1e-15);
        assert!((r[0] - 0.661_437_827_766_147_8).abs() < 1e-15);
        assert_eq!(r[1], 0.75);
    }

    #[test]
    fn hadamard_root_rejects_negative() {
        let err = hadamard_root(&Vector::from(vec![0.1, -0.1]), 2).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn stationary_of_example_map() {
        let c = m(&[&[-10.0, 7.0], &[4.0, -9.0]]);
        let d = m(&[&[1.0, 2.0], &[3.0, 2.0]]);
        let x = stationary_vector(&c.add(&d)).unwrap();
        // 2-state balance: 9 x1 = 7 x2.
        assert!((x[0] - 7.0 / 16.0).abs() < 1e-14);
        assert!((x[1] - 9.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn stationary_of_symmetric_chain() {
        let eta = 3.7;
        let x = stationary_vector(&m(&[&[-eta, eta], &[eta, -eta]])).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stationary_of_erlang_cycle_is_uniform() {
        for order in 2..=6 {
            let eta = 2.5;
            let mut q = Matrix::zeros(order, order);
            for i in 0..order {
                q.set(i, i, -eta);
                q.set(i, (i + 1) % order, eta);
            }
            let x = stationary_vector(&q).unwrap();
            for &v in x.iter() {
                assert!((v - 1.0 / order as f64).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stationary_rejects_bad_generators() {
        let not_gen = m(&[&[-1.0, 0.5], &[1.0, -1.0]]);
        assert!(matches!(
            stationary_vector(&not_gen),
            Err(Error::Validation(_))
        ));
        let reducible = m(&[&[-1.0, 1.0, 0.0], &[1.0, -1.0, 0.0], &[0.0, 1.0, -1.0]]);
        assert!(matches!(
            stationary_vector(&reducible),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn neg_inverse_cases() {
        let mu = 4.0;
        let inv = neg_inverse(&m(&[&[-mu]])).unwrap();
        assert!((inv.get(0, 0) - 0.25).abs() < 1e-16);

        let eta = 2.0;
        let inv = neg_inverse(&m(&[&[-eta, eta], &[0.0, -eta]])).unwrap();
        let expect = m(&[&[0.5, 0.5], &[0.0, 0.5]]);
        assert!(inv.sub(&expect).max_abs() < 1e-15);

        // α (-T)^-1 e = 1/μ for Erlang-2: mean 2/η.
        let alpha = Vector::from(vec![1.0, 0.0]);
        assert!((alpha.mul_mat(&inv).sum() - 2.0 / eta).abs() < 1e-15);
    }

    #[test]
    fn neg_inverse_rejects_singular_and_malformed() {
        // A valid-sign but singular subgenerator: T e = 0 with no exit.
        let t = m(&[&[-1.0, 1.0], &[1.0, -1.0]]);
        assert!(matches!(neg_inverse(&t), Err(Error::Numeric(_))));
        let t = m(&[&[1.0]]);
        assert!(matches!(neg_inverse(&t), Err(Error::Validation(_))));
    }

    #[test]
    fn neg_inverse_times_exit_vector_is_ones() {
        let t = m(&[&[-3.0, 1.0, 0.5], &[0.0, -2.0, 2.0], &[0.2, 0.0, -1.0]]);
        let t0 = t.row_sums().scale(-1.0);
        let inv = neg_inverse(&t).unwrap();
        let ones = inv.mul_vec(&t0);
        for &v in ones.iter() {
            assert!((v - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn matrix_constructor_errors() {
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(Matrix::new(0, 1, vec![]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Vector::try_new(vec![]).is_err());
    }
}
