//! Dense linear algebra for the small problems this crate deals with.
//!
//! Storage is row-major `f64`. Nothing here is tuned for size; every
//! problem in the crate has at most a few hundred unknowns.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{dim_check, Error, Result};

pub type Vector = Vec<f64>;

/// Off-diagonal Frobenius threshold at which Jacobi sweeps stop.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        dim_check(data.len() == rows * cols, || {
            format!("{} entries for a {rows}x{cols} matrix", data.len())
        })?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            dim_check(r.len() == cols, || format!("row {i} has {} entries, expected {cols}", r.len()))?;
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    /// Column vector from a slice.
    pub fn column(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        dim_check(self.cols == other.rows, || {
            format!("{}x{} times {}x{}", self.rows, self.cols, other.rows, other.cols)
        })?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                for (o, b) in out.row_mut(i).iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vector> {
        dim_check(self.cols == v.len(), || {
            format!("{}x{} times vector of length {}", self.rows, self.cols, v.len())
        })?;
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ · v` without forming the transpose.
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vector> {
        dim_check(self.rows == v.len(), || {
            format!("({}x{})ᵀ times vector of length {}", self.rows, self.cols, v.len())
        })?;
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            axpy(*vi, self.row(i), &mut out);
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        dim_check(self.rows == other.rows && self.cols == other.cols, || {
            format!("{}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols)
        })?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Copy of the rows with the given indices, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows == 0 {
            return Ok(other.clone());
        }
        if other.rows == 0 {
            return Ok(self.clone());
        }
        dim_check(self.cols == other.cols, || format!("vstack {} vs {} columns", self.cols, other.cols))?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix { rows: self.rows + other.rows, cols: self.cols, data })
    }

    /// Writes `block` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    /// Symmetric part `(A + Aᵀ)/2`.
    pub fn symmetrize(&self) -> Matrix {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a·x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        dim_check(a.is_square(), || format!("cholesky of {}x{}", a.rows, a.cols))?;
        let n = a.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 1e-12) {
                return Err(Error::NotPositiveDefinite { row: j, pivot: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vector> {
        let n = self.l.rows;
        dim_check(b.len() == n, || format!("rhs length {} for {n}x{n} system", b.len()))?;
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        Ok(y)
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let x = self.solve(&b.col(j))?;
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.solve_matrix(&Matrix::identity(self.dim()))
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn cholesky_solve(a: &Matrix, b: &[f64]) -> Result<Vector> {
    if !a.is_symmetric(1e-10) {
        return Err(Error::InvalidInput("cholesky_solve needs a symmetric matrix".into()));
    }
    Cholesky::new(a)?.solve(b)
}

/// Minimizes `‖A x − b‖₂` for a tall, full-column-rank `A` by Householder QR.
pub fn least_squares(a: &Matrix, b: &[f64]) -> Result<Vector> {
    let (m, n) = (a.rows, a.cols);
    dim_check(m >= n, || format!("least squares needs rows >= cols, got {m}x{n}"))?;
    dim_check(b.len() == m, || format!("rhs length {} for {m} rows", b.len()))?;
    let mut r = a.clone();
    let mut y = b.to_vec();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let mut norm = 0.0;
        for i in k..m {
            norm += r[(i, k)] * r[(i, k)];
        }
        let norm = norm.sqrt();
        if norm <= 1e-10 * scale {
            return Err(Error::RankDeficient { column: k });
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 > 0.0 {
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
                for i in k..m {
                    r[(i, j)] -= s * v[i - k];
                }
            }
            let s: f64 = (k..m).map(|i| v[i - k] * y[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                y[i] -= s * v[i - k];
            }
        }
        if r[(k, k)].abs() <= 1e-10 * scale {
            return Err(Error::RankDeficient { column: k });
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    Ok(x)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order; eigenvector `i` is column `i`
/// of the returned matrix.
pub fn sym_eig(a: &Matrix) -> Result<(Vector, Matrix)> {
    if !a.is_square() || !a.is_symmetric(1e-10) {
        return Err(Error::InvalidInput("sym_eig needs a symmetric matrix".into()));
    }
    let n = a.rows;
    let mut w = a.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[(i, j)] * w[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(JACOBI_MAX_SWEEPS));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]));
    let values = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new)] = v[(k, old)];
        }
    }
    Ok((values, vectors))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &Matrix) -> Result<f64> {
    if a.rows() == 0 {
        return Ok(f64::INFINITY);
    }
    let (vals, _) = sym_eig(a)?;
    Ok(*vals.last().unwrap())
}

/// LU factorization with partial pivoting; used for determinants and
/// general square solves.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    pub fn new(a: &Matrix) -> Result<Self> {
        dim_check(a.is_square(), || format!("LU of {}x{}", a.rows, a.cols))?;
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| lu[(i, k)].abs().total_cmp(&lu[(j, k)].abs())).unwrap();
            if lu[(p, k)] == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            for i in k + 1..n {
                let f = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = f;
                for j in k + 1..n {
                    lu[(i, j)] -= f * lu[(k, j)];
                }
            }
        }
        Ok(Self { lu, perm, sign, singular })
    }

    pub fn determinant(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        (0..self.lu.rows).fold(self.sign, |d, i| d * self.lu[(i, i)])
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vector> {
        let n = self.lu.rows;
        dim_check(b.len() == n, || format!("rhs length {} for {n}x{n} system", b.len()))?;
        if self.singular {
            return Err(Error::NonInvertible("singular matrix in LU solve".into()));
        }
        let mut y: Vector = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.lu[(i, k)] * y[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.lu[(i, k)] * y[k];
            }
            y[i] /= self.lu[(i, i)];
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        let data = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_row_major(r, c, data).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let m = random_matrix(rng, n, n);
        m.transpose().matmul(&m).unwrap().add(&Matrix::identity(n).scale(0.5)).unwrap()
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let x = cholesky_solve(&Matrix::identity(2), &[3.0, 4.0]).unwrap();
        assert_eq!(x, vec![3.0, 4.0]);
        let a = Matrix::from_rows(&[[4.0, 0.0], [0.0, 9.0]]).unwrap();
        let x = cholesky_solve(&a, &[8.0, 27.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn cholesky_random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_spd(&mut rng, 5);
            let b: Vector = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let x = cholesky_solve(&a, &b).unwrap();
            let r = sub(&a.matvec(&x).unwrap(), &b);
            assert!(norm_inf(&r) <= 1e-8 * (1.0 + norm_inf(&b)));
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky_solve(&a, &[1.0, 1.0]), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn least_squares_small_cases() {
        let a = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let x = least_squares(&a, &[1.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
        let b = [0.3, -1.2, 7.0];
        let x = least_squares(&Matrix::identity(3), &b).unwrap();
        for (xi, bi) in x.iter().zip(b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 12, 4);
            let b: Vector = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = least_squares(&a, &b).unwrap();
            // independent route: AᵀA x = Aᵀb by Gauss elimination
            let ata = a.transpose().matmul(&a).unwrap();
            let atb = a.tr_matvec(&b).unwrap();
            let oracle = Lu::new(&ata).unwrap().solve(&atb).unwrap();
            for (u, v) in x.iter().zip(&oracle) {
                assert!((u - v).abs() < 1e-9, "{u} vs {v}");
            }
            let resid = sub(&a.matvec(&x).unwrap(), &b);
            assert!(norm_inf(&a.tr_matvec(&resid).unwrap()) <= 1e-7);
        }
    }

    #[test]
    fn least_squares_rank_deficient() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(least_squares(&a, &[1.0, 2.0, 3.0]), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn sym_eig_small_cases() {
        let (l, v) = sym_eig(&Matrix::from_diag(&[3.0, 1.0])).unwrap();
        assert_eq!(l, vec![3.0, 1.0]);
        assert!((v[(0, 0)].abs() - 1.0).abs() < 1e-12 && (v[(1, 1)].abs() - 1.0).abs() < 1e-12);
        let (l, _) = sym_eig(&Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
        assert!((l[0] - 1.0).abs() < 1e-12 && (l[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eig_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 4, 4).symmetrize();
            let (l, v) = sym_eig(&a).unwrap();
            assert!(l.windows(2).all(|w| w[0] >= w[1]));
            let recon = v.matmul(&Matrix::from_diag(&l)).unwrap().matmul(&v.transpose()).unwrap();
            assert!(recon.sub(&a).unwrap().max_abs() <= 1e-7 * a.norm_inf().max(1.0));
            let vtv = v.transpose().matmul(&v).unwrap();
            assert!(vtv.sub(&Matrix::identity(4)).unwrap().max_abs() <= 1e-7);
            for i in 0..4 {
                let vi = v.col(i);
                let r = sub(&a.matvec(&vi).unwrap(), &vi.iter().map(|x| x * l[i]).collect::<Vec<_>>());
                assert!(norm_inf(&r) <= 1e-7 * a.norm_inf());
            }
        }
    }

    #[test]
    fn lu_determinant() {
        let a = Matrix::from_rows(&[[0.0, 2.0], [3.0, 1.0]]).unwrap();
        assert!((Lu::new(&a).unwrap().determinant() + 6.0).abs() < 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn cholesky_roundtrip(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..7);
            let a = random_spd(&mut rng, n);
            let x: Vector = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let b = a.matvec(&x).unwrap();
            let y = cholesky_solve(&a, &b).unwrap();
            proptest::prop_assert!(norm_inf(&sub(&x, &y)) <= 1e-7);
        }
    }
}
