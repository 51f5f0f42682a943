//! Polynomial controllers on the full tensor monomial basis
//! `x₁^{i₁}⋯x_n^{i_n}`, `0 ≤ i_j ≤ p`.

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::mpc::Dataset;
use crate::numerics::{least_squares, Matrix, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub degree: usize,
    pub n_x: usize,
    pub n_u: usize,
    /// One row per output. Column `Σ_j i_j (p+1)^j` holds the coefficient of
    /// the monomial with exponents `(i_1, …, i_n)`, first variable fastest.
    pub coefficients: Vec<Vector>,
}

pub fn n_monomials(n_x: usize, degree: usize) -> usize {
    (degree + 1).pow(n_x as u32)
}

/// All monomials of `x` in coefficient order.
pub fn monomials(x: &[f64], degree: usize) -> Vector {
    let p1 = degree + 1;
    let powers: Vec<Vector> = x
        .iter()
        .map(|v| {
            let mut pw = vec![1.0; p1];
            for k in 1..p1 {
                pw[k] = pw[k - 1] * v;
            }
            pw
        })
        .collect();
    let total = n_monomials(x.len(), degree);
    (0..total)
        .map(|mut idx| {
            let mut m = 1.0;
            for pw in &powers {
                m *= pw[idx % p1];
                idx /= p1;
            }
            m
        })
        .collect()
}

impl Polynomial {
    pub fn new(degree: usize, n_x: usize, coefficients: Vec<Vector>) -> Result<Self> {
        let n = n_monomials(n_x, degree);
        dim_check(!coefficients.is_empty() && coefficients.iter().all(|c| c.len() == n), || format!("each output needs {n} coefficients"))?;
        Ok(Self { degree, n_x, n_u: coefficients.len(), coefficients })
    }

    pub fn coefficient_count(&self) -> usize {
        self.n_u * n_monomials(self.n_x, self.degree)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vector> {
        dim_check(x.len() == self.n_x, || format!("input has length {}, expected {}", x.len(), self.n_x))?;
        let basis = monomials(x, self.degree);
        Ok(self.coefficients.iter().map(|c| c.iter().zip(&basis).map(|(a, b)| a * b).sum()).collect())
    }
}

pub fn poly_eval(p: &Polynomial, x: &[f64]) -> Result<Vector> {
    p.eval(x)
}

/// `α · n_u · (p+1)^{n_x}` bytes.
pub fn memory_footprint_poly(p: &Polynomial, alpha_bit: usize) -> usize {
    alpha_bit * p.coefficient_count()
}

/// Least-squares fit per output. Design columns are scaled to unit norm
/// before the QR solve and the coefficients unscaled afterwards.
pub fn fit_polynomial(data: &Dataset, degree: usize) -> Result<Polynomial> {
    let n = n_monomials(data.n_x, degree);
    if data.len() < n {
        return Err(Error::RankDeficient { column: data.len() });
    }
    let mut design = Matrix::zeros(data.len(), n);
    for (i, (x, _)) in data.points.iter().enumerate() {
        design.row_mut(i).copy_from_slice(&monomials(x, degree));
    }
    let scale: Vector = (0..n)
        .map(|j| {
            let s = (0..data.len()).map(|i| design[(i, j)] * design[(i, j)]).sum::<f64>().sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    for i in 0..data.len() {
        for (v, s) in design.row_mut(i).iter_mut().zip(&scale) {
            *v /= s;
        }
    }
    let coefficients = (0..data.n_u)
        .map(|k| {
            let rhs: Vector = data.points.iter().map(|(_, u)| u[k]).collect();
            let c = least_squares(&design, &rhs)?;
            Ok(c.iter().zip(&scale).map(|(c, s)| c / s).collect())
        })
        .collect::<Result<Vec<Vector>>>()?;
    Polynomial::new(degree, data.n_x, coefficients)
}
