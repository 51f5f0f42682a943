//! Ellipsoidal safe sets `{x : xᵀEx ≤ 1}` from
//!
//! ```text
//!     minimize    tr(E)
//!     subject to  E ⪰ floor·I,   xᵢᵀ E xᵢ ≥ 1 + ε  for every unsafe xᵢ
//! ```
//!
//! solved with a log-barrier interior-point method over the entries of E.

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::numerics::{dot, Cholesky, Matrix, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidSafeSet {
    #[serde(rename = "E")]
    pub e: Matrix,
    pub epsilon: f64,
    pub floor: f64,
}

impl EllipsoidSafeSet {
    pub fn contains(&self, x: &[f64]) -> bool {
        ellipsoid_contains(self, x)
    }
}

pub fn ellipsoid_contains(s: &EllipsoidSafeSet, x: &[f64]) -> bool {
    let ex = s.e.matvec(x).expect("dimension of safe set");
    dot(x, &ex) <= 1.0
}

/// Index pairs `(j, l)`, `j ≤ l`, of the free entries of a symmetric matrix.
fn sym_basis(n: usize) -> Vec<(usize, usize)> {
    let mut b: Vec<(usize, usize)> = (0..n).map(|j| (j, j)).collect();
    for j in 0..n {
        for l in j + 1..n {
            b.push((j, l));
        }
    }
    b
}

fn assemble(n: usize, basis: &[(usize, usize)], e: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for (k, &(j, l)) in basis.iter().enumerate() {
        m[(j, l)] = e[k];
        m[(l, j)] = e[k];
    }
    m
}

/// `xᵀ B_k x` for every basis element.
fn quad_features(x: &[f64], basis: &[(usize, usize)]) -> Vector {
    basis.iter().map(|&(j, l)| if j == l { x[j] * x[j] } else { 2.0 * x[j] * x[l] }).collect()
}

struct Barrier<'a> {
    n: usize,
    basis: &'a [(usize, usize)],
    feats: &'a [Vector],
    floor: f64,
    rhs: f64,
}

impl Barrier<'_> {
    /// Barrier objective, or `None` outside the domain.
    fn value(&self, e: &[f64], t: f64) -> Option<f64> {
        let shifted = assemble(self.n, self.basis, e).sub(&Matrix::identity(self.n).scale(self.floor)).ok()?;
        let chol = Cholesky::new(&shifted).ok()?;
        let logdet: f64 = (0..self.n).map(|i| 2.0 * chol.factor()[(i, i)].ln()).sum();
        let mut v = t * (0..self.n).map(|i| e[i]).sum::<f64>() - logdet;
        for q in self.feats {
            let s = dot(q, e) - self.rhs;
            if !(s > 0.0) {
                return None;
            }
            v -= s.ln();
        }
        Some(v)
    }

    fn gradient_hessian(&self, e: &[f64], t: f64) -> Result<(Vector, Matrix)> {
        let p = self.basis.len();
        let shifted = assemble(self.n, self.basis, e).sub(&Matrix::identity(self.n).scale(self.floor))?;
        let w = Cholesky::new(&shifted)?.inverse()?;
        let mut g = vec![0.0; p];
        let mut h = Matrix::zeros(p, p);
        // ⟨W, B_k⟩ and tr(W B_k W B_l)
        let inner = |m: &Matrix, (j, l): (usize, usize)| if j == l { m[(j, j)] } else { m[(j, l)] + m[(l, j)] };
        for (k, &bk) in self.basis.iter().enumerate() {
            g[k] = if bk.0 == bk.1 { t } else { 0.0 } - inner(&w, bk);
            // W B_k W = w_{·j} w_{l·} (+ transpose for off-diagonal)
            let (j, l) = bk;
            let mut wbw = Matrix::zeros(self.n, self.n);
            for a in 0..self.n {
                for b in 0..self.n {
                    wbw[(a, b)] = w[(a, j)] * w[(l, b)] + if j != l { w[(a, l)] * w[(j, b)] } else { 0.0 };
                }
            }
            for (m, &bm) in self.basis.iter().enumerate() {
                h[(k, m)] = inner(&wbw, bm);
            }
        }
        for q in self.feats {
            let s = dot(q, e) - self.rhs;
            for k in 0..p {
                g[k] -= q[k] / s;
                let qk = q[k] / (s * s);
                if qk == 0.0 {
                    continue;
                }
                for m in 0..p {
                    h[(k, m)] += qk * q[m];
                }
            }
        }
        Ok((g, h.symmetrize()))
    }
}

/// Minimum-trace ellipsoid excluding every point of `invalid` with margin
/// `epsilon`, with `E ⪰ floor·I`.
pub fn fit_ellipsoid(invalid: &[Vector], epsilon: f64, floor: f64, n_x: usize) -> Result<EllipsoidSafeSet> {
    if !(epsilon >= 0.0) || !(floor >= 0.0) {
        return Err(Error::PreconditionViolated("epsilon and floor must be nonnegative".into()));
    }
    for x in invalid {
        dim_check(x.len() == n_x, || format!("point has length {}, expected {n_x}", x.len()))?;
    }
    let rhs = 1.0 + epsilon;
    let min_sq = invalid.iter().map(|x| dot(x, x)).fold(f64::INFINITY, f64::min);
    if invalid.iter().any(|x| x.iter().all(|v| *v == 0.0)) || min_sq <= 0.0 {
        return Err(Error::InfeasibleMargin);
    }
    if invalid.is_empty() && floor == 0.0 {
        return Ok(EllipsoidSafeSet { e: Matrix::zeros(n_x, n_x), epsilon, floor });
    }
    let basis = sym_basis(n_x);
    let feats: Vec<Vector> = invalid.iter().map(|x| quad_features(x, &basis)).collect();
    let bar = Barrier { n: n_x, basis: &basis, feats: &feats, floor, rhs };
    let start = floor + if invalid.is_empty() { 1.0 } else { 2.0 * rhs / min_sq };
    let mut e: Vector = basis.iter().map(|&(j, l)| if j == l { start } else { 0.0 }).collect();
    let barrier_terms = (n_x + invalid.len()) as f64;
    let mut t = 1.0;
    loop {
        for _ in 0..200 {
            let (g, h) = bar.gradient_hessian(&e, t)?;
            let step = match Cholesky::new(&h) {
                Ok(c) => c.solve(&g)?,
                Err(_) => {
                    let reg = h.add(&Matrix::identity(h.rows()).scale(1e-12 * h.max_abs().max(1.0)))?;
                    Cholesky::new(&reg)?.solve(&g)?
                }
            };
            let decrement = dot(&g, &step);
            if decrement / 2.0 <= 1e-12 {
                break;
            }
            let f0 = bar.value(&e, t).ok_or(Error::NoConvergence(0))?;
            let mut alpha = 1.0;
            loop {
                let cand: Vector = e.iter().zip(&step).map(|(a, d)| a - alpha * d).collect();
                if let Some(f1) = bar.value(&cand, t) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        e = cand;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-20 {
                    break;
                }
            }
            if alpha < 1e-20 {
                break;
            }
        }
        let trace: f64 = e[..n_x].iter().sum();
        if barrier_terms / t <= 1e-9 * trace.max(1.0) {
            break;
        }
        t *= 10.0;
        if t > 1e20 {
            return Err(Error::NoConvergence(0));
        }
    }
    Ok(EllipsoidSafeSet { e: assemble(n_x, &basis, &e), epsilon, floor })
}
