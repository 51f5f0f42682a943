//! Dense convex quadratic programs
//!
//! ```text
//!     minimize    zᵀ H z + qᵀ z
//!     subject to  A z ≤ b
//! ```
//!
//! solved by a dual active-set method (Goldfarb–Idnani): start from the
//! unconstrained minimizer, add the most violated constraint, and drop
//! active constraints whose multipliers would turn negative. The final
//! working set is exact, so the equality-constrained KKT system on it is
//! re-solved at the end to polish `z` and the multipliers.

use crate::error::{dim_check, Error, Result};
use crate::numerics::{axpy, dot, min_eigenvalue, norm_inf, Cholesky, Matrix, Vector};

pub const DEFAULT_TOL: f64 = 1e-8;
/// Added to a singular (but PSD) quadratic term before factorization.
pub const SEMIDEFINITE_REG: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct QpProblem {
    pub h: Matrix,
    pub q: Vector,
    pub a_ineq: Matrix,
    pub b_ineq: Vector,
}

impl QpProblem {
    pub fn new(h: Matrix, q: Vector, a_ineq: Matrix, b_ineq: Vector) -> Result<Self> {
        let n = h.rows();
        dim_check(h.is_square(), || format!("H is {}x{}", h.rows(), h.cols()))?;
        dim_check(q.len() == n, || format!("q has length {}, H is {n}x{n}", q.len()))?;
        dim_check(a_ineq.rows() == b_ineq.len(), || format!("A has {} rows, b has {}", a_ineq.rows(), b_ineq.len()))?;
        dim_check(a_ineq.rows() == 0 || a_ineq.cols() == n, || format!("A has {} columns, expected {n}", a_ineq.cols()))?;
        Ok(Self { h, q, a_ineq, b_ineq })
    }

    /// Problem without inequality rows.
    pub fn unconstrained(h: Matrix, q: Vector) -> Result<Self> {
        let n = h.rows();
        Self::new(h, q, Matrix::zeros(0, n), vec![])
    }

    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    pub fn n_constraints(&self) -> usize {
        self.b_ineq.len()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let hz = self.h.matvec(z).expect("dimension checked at construction");
        dot(z, &hz) + dot(&self.q, z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub z: Vector,
    pub duals: Vector,
    pub status: QpStatus,
    pub kkt_residual: f64,
    /// Working set at termination, sorted.
    pub active_set: Vec<usize>,
    /// Diagonal shift added to `H` (zero unless `H` was singular).
    pub regularization: f64,
    pub iterations: usize,
}

impl QpSolution {
    /// Turns a non-optimal status into the matching error.
    pub fn optimal(self) -> Result<Self> {
        match self.status {
            QpStatus::Optimal => Ok(self),
            QpStatus::Infeasible => Err(Error::Infeasible),
            QpStatus::MaxIter => Err(Error::MaxIter(self.iterations)),
        }
    }
}

/// A quadratic term factored once and reused across many linear terms and
/// constraint sets (the implicit MPC controller solves thousands of these).
#[derive(Clone, Debug)]
pub struct PreparedQp {
    h: Matrix,
    chol: Cholesky,
    regularization: f64,
}

impl PreparedQp {
    pub fn new(h: &Matrix) -> Result<Self> {
        dim_check(h.is_square(), || format!("H is {}x{}", h.rows(), h.cols()))?;
        if !h.is_symmetric(1e-10) {
            return Err(Error::InvalidInput("H is not symmetric".into()));
        }
        let g = h.scale(2.0);
        let (chol, regularization) = match Cholesky::new(&g) {
            Ok(c) => (c, 0.0),
            Err(_) => {
                let lmin = min_eigenvalue(h)?;
                if lmin < -1e-8 {
                    return Err(Error::NonConvex(lmin));
                }
                let reg = SEMIDEFINITE_REG;
                let shifted = h.add(&Matrix::identity(h.rows()).scale(reg))?.scale(2.0);
                (Cholesky::new(&shifted)?, reg)
            }
        };
        Ok(Self { h: h.clone(), chol, regularization })
    }

    pub fn solve(&self, q: &[f64], a: &Matrix, b: &[f64], tol: f64, max_iter: Option<usize>) -> Result<QpSolution> {
        let n = self.h.rows();
        dim_check(q.len() == n, || format!("q has length {}, expected {n}", q.len()))?;
        dim_check(a.rows() == b.len(), || format!("A has {} rows, b has {}", a.rows(), b.len()))?;
        dim_check(a.rows() == 0 || a.cols() == n, || format!("A has {} columns, expected {n}", a.cols()))?;
        let m = b.len();
        let max_iter = max_iter.unwrap_or(50 * (n + m)).max(1);
        let add_tol = 1e-3 * tol;

        let neg_q: Vector = q.iter().map(|v| -v).collect();
        let mut z = self.chol.solve(&neg_q)?;
        let mut work: Vec<usize> = Vec::new();
        let mut lam: Vec<f64> = Vec::new();
        let mut iterations = 0;

        let finish = |z: Vector, work: Vec<usize>, lam: Vec<f64>, status: QpStatus, iterations: usize| -> Result<QpSolution> {
            let mut duals = vec![0.0; m];
            for (w, l) in work.iter().zip(&lam) {
                duals[*w] = *l;
            }
            let mut active_set = work;
            active_set.sort_unstable();
            let kkt_residual = kkt_residual_raw(&self.h, q, a, b, &z, &duals);
            Ok(QpSolution { z, duals, status, kkt_residual, active_set, regularization: self.regularization, iterations })
        };

        loop {
            // most violated constraint, lowest index on ties
            let mut pick: Option<(usize, f64)> = None;
            for i in 0..m {
                if work.contains(&i) {
                    continue;
                }
                let s = dot(a.row(i), &z) - b[i];
                if s > add_tol && pick.map_or(true, |(_, best)| s > best) {
                    pick = Some((i, s));
                }
            }
            let Some((p, _)) = pick else {
                let (z, lam) = self.polish(q, a, b, &work, z, lam)?;
                return finish(z, work, lam, QpStatus::Optimal, iterations);
            };
            let ap = a.row(p);
            let g_inv_ap = self.chol.solve(ap)?;
            let ap_scale = dot(ap, &g_inv_ap);
            let mut lam_p = 0.0;
            loop {
                iterations += 1;
                if iterations > max_iter {
                    return finish(z, work, lam, QpStatus::MaxIter, iterations);
                }
                let (d, r) = self.directions(a, &work, &g_inv_ap)?;
                let curvature = -dot(ap, &d);
                let s_p = dot(ap, &z) - b[p];
                let full = if curvature > 1e-12 * ap_scale { s_p.max(0.0) / curvature } else { f64::INFINITY };
                let mut partial = f64::INFINITY;
                let mut block = None;
                for (k, rk) in r.iter().enumerate() {
                    if *rk < 0.0 {
                        let t = lam[k] / -rk;
                        if t < partial || (t == partial && block.map_or(false, |bk: usize| work[k] < work[bk])) {
                            partial = t;
                            block = Some(k);
                        }
                    }
                }
                let t = full.min(partial);
                if !t.is_finite() {
                    return finish(z, work, lam, QpStatus::Infeasible, iterations);
                }
                if full.is_finite() {
                    axpy(t, &d, &mut z);
                }
                for (l, rk) in lam.iter_mut().zip(&r) {
                    *l += t * rk;
                }
                lam_p += t;
                if full <= partial {
                    work.push(p);
                    lam.push(lam_p);
                    break;
                }
                let k = block.expect("finite partial step has a blocking constraint");
                work.remove(k);
                lam.remove(k);
            }
        }
    }

    /// Primal step `d` and multiplier step `r` per unit increase of the
    /// multiplier of the constraint being added.
    fn directions(&self, a: &Matrix, work: &[usize], g_inv_ap: &[f64]) -> Result<(Vector, Vector)> {
        if work.is_empty() {
            return Ok((g_inv_ap.iter().map(|v| -v).collect(), vec![]));
        }
        let aw = a.select_rows(work);
        let g_inv_awt = self.chol.solve_matrix(&aw.transpose())?;
        let s = aw.matmul(&g_inv_awt)?;
        let rhs: Vector = aw.matvec(g_inv_ap)?.iter().map(|v| -v).collect();
        let r = Cholesky::new(&s.symmetrize())?.solve(&rhs)?;
        let mut d: Vector = g_inv_ap.iter().map(|v| -v).collect();
        let corr = g_inv_awt.matvec(&r)?;
        for (di, c) in d.iter_mut().zip(corr) {
            *di -= c;
        }
        Ok((d, r))
    }

    /// Re-solves the KKT system with the working set held as equalities.
    fn polish(&self, q: &[f64], a: &Matrix, b: &[f64], work: &[usize], z: Vector, lam: Vec<f64>) -> Result<(Vector, Vec<f64>)> {
        let neg_q: Vector = q.iter().map(|v| -v).collect();
        if work.is_empty() {
            return Ok((self.chol.solve(&neg_q)?, lam));
        }
        let aw = a.select_rows(work);
        let g_inv_awt = self.chol.solve_matrix(&aw.transpose())?;
        let s = aw.matmul(&g_inv_awt)?.symmetrize();
        let z0 = self.chol.solve(&neg_q)?;
        let rhs: Vector = aw.matvec(&z0)?.iter().zip(work).map(|(v, &w)| v - b[w]).collect();
        let Ok(chol) = Cholesky::new(&s) else {
            return Ok((z, lam));
        };
        let l = chol.solve(&rhs)?;
        let mut zp = z0;
        let corr = g_inv_awt.matvec(&l)?;
        for (zi, c) in zp.iter_mut().zip(corr) {
            *zi -= c;
        }
        if l.iter().all(|v| *v >= -1e-12) {
            let l = l.into_iter().map(|v| v.max(0.0)).collect();
            Ok((zp, l))
        } else {
            Ok((z, lam))
        }
    }
}

/// Solves `p` with default iteration cap `50·(n+m)` when `max_iter` is `None`.
pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: Option<usize>) -> Result<QpSolution> {
    PreparedQp::new(&p.h)?.solve(&p.q, &p.a_ineq, &p.b_ineq, tol, max_iter)
}

/// Largest violation among stationarity, primal feasibility, dual sign and
/// complementary slackness.
pub fn check_kkt(p: &QpProblem, z: &[f64], duals: &[f64]) -> Result<f64> {
    dim_check(z.len() == p.dim(), || format!("z has length {}, expected {}", z.len(), p.dim()))?;
    dim_check(duals.len() == p.n_constraints(), || format!("{} duals for {} constraints", duals.len(), p.n_constraints()))?;
    Ok(kkt_residual_raw(&p.h, &p.q, &p.a_ineq, &p.b_ineq, z, duals))
}

fn kkt_residual_raw(h: &Matrix, q: &[f64], a: &Matrix, b: &[f64], z: &[f64], duals: &[f64]) -> f64 {
    let mut grad = h.matvec(z).expect("checked");
    grad.iter_mut().zip(q).for_each(|(g, qi)| *g = 2.0 * *g + qi);
    for (i, l) in duals.iter().enumerate() {
        axpy(*l, a.row(i), &mut grad);
    }
    let mut res = norm_inf(&grad);
    for (i, l) in duals.iter().enumerate() {
        let s = dot(a.row(i), z) - b[i];
        res = res.max(s).max(-l).max((l * s).abs());
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(h: f64, q: f64, rows: &[(f64, f64)]) -> QpProblem {
        let a = Matrix::from_row_major(rows.len(), 1, rows.iter().map(|r| r.0).collect()).unwrap();
        QpProblem::new(Matrix::from_rows(&[[h]]).unwrap(), vec![q], a, rows.iter().map(|r| r.1).collect()).unwrap()
    }

    #[test]
    fn clipped_scalar() {
        // (z-1)^2 = z^2 - 2z + 1
        let sol = solve_qp(&scalar(1.0, -2.0, &[(1.0, 0.5)]), DEFAULT_TOL, None).unwrap().optimal().unwrap();
        assert!((sol.z[0] - 0.5).abs() < 1e-12);
        assert!((sol.duals[0] - 1.0).abs() < 1e-12);
        assert!(sol.kkt_residual <= DEFAULT_TOL);
    }

    #[test]
    fn unconstrained_origin() {
        let p = QpProblem::unconstrained(Matrix::identity(3), vec![0.0; 3]).unwrap();
        let sol = solve_qp(&p, DEFAULT_TOL, None).unwrap();
        assert_eq!(sol.z, vec![0.0; 3]);
    }

    #[test]
    fn simplex_corner() {
        // (z1-2)^2 + (z2-2)^2, z1+z2 <= 2, z >= 0
        let a = Matrix::from_rows(&[[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]).unwrap();
        let p = QpProblem::new(Matrix::identity(2), vec![-4.0, -4.0], a, vec![2.0, 0.0, 0.0]).unwrap();
        let sol = solve_qp(&p, DEFAULT_TOL, None).unwrap().optimal().unwrap();
        // brute-force grid oracle at step 1e-3
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=2000 {
            for j in 0..=(2000 - i) {
                let (x, y) = (i as f64 * 1e-3, j as f64 * 1e-3);
                let f = (x - 2.0).powi(2) + (y - 2.0).powi(2);
                if f < best.0 {
                    best = (f, x, y);
                }
            }
        }
        assert!((best.1 - 1.0).abs() < 1e-9 && (best.2 - 1.0).abs() < 1e-9);
        assert!((sol.z[0] - 1.0).abs() < 1e-10 && (sol.z[1] - 1.0).abs() < 1e-10);
        assert_eq!(sol.active_set, vec![0]);
    }

    #[test]
    fn infeasible_detected() {
        let p = scalar(1.0, 0.0, &[(1.0, -1.0), (-1.0, -1.0)]);
        assert_eq!(solve_qp(&p, DEFAULT_TOL, None).unwrap().status, QpStatus::Infeasible);
        // violated zero row
        let p = scalar(1.0, 0.0, &[(0.0, -1.0)]);
        assert!(matches!(solve_qp(&p, DEFAULT_TOL, None).unwrap().optimal(), Err(Error::Infeasible)));
    }

    #[test]
    fn nonconvex_rejected() {
        let p = QpProblem::unconstrained(Matrix::from_diag(&[1.0, -1.0]), vec![0.0, 0.0]).unwrap();
        assert!(matches!(solve_qp(&p, DEFAULT_TOL, None), Err(Error::NonConvex(_))));
    }

    #[test]
    fn semidefinite_regularized() {
        // min z1^2 s.t. z2 <= 1, -z2 <= 1 : z2 free within bounds
        let a = Matrix::from_rows(&[[0.0, 1.0], [0.0, -1.0]]).unwrap();
        let p = QpProblem::new(Matrix::from_diag(&[1.0, 0.0]), vec![0.0, 0.0], a, vec![1.0, 1.0]).unwrap();
        let sol = solve_qp(&p, DEFAULT_TOL, None).unwrap().optimal().unwrap();
        assert_eq!(sol.regularization, SEMIDEFINITE_REG);
        assert!(sol.z[0].abs() < 1e-12);
    }

    #[test]
    fn kkt_hand_values() {
        let p = QpProblem::unconstrained(Matrix::from_rows(&[[1.0]]).unwrap(), vec![-2.0]).unwrap();
        assert_eq!(check_kkt(&p, &[0.0], &[]).unwrap(), 2.0);
        let p = scalar(1.0, -2.0, &[(1.0, 0.5)]);
        let sol = solve_qp(&p, DEFAULT_TOL, None).unwrap();
        assert!(check_kkt(&p, &sol.z, &sol.duals).unwrap() <= DEFAULT_TOL);
        assert!(check_kkt(&p, &[sol.z[0] + 0.1], &sol.duals).unwrap() > DEFAULT_TOL);
        assert!(matches!(check_kkt(&p, &[0.0, 1.0], &sol.duals), Err(Error::DimensionMismatch(_))));
    }

    fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
        let l = Matrix::from_row_major(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let h = l.transpose().matmul(&l).unwrap().add(&Matrix::identity(n).scale(0.1)).unwrap();
        let q = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let a = Matrix::from_row_major(m, n, (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let b = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        QpProblem::new(h, q, a, b).unwrap()
    }

    #[test]
    fn deterministic_and_row_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let p = random_qp(&mut rng, 4, 8);
            let s1 = solve_qp(&p, DEFAULT_TOL, None).unwrap().optimal().unwrap();
            let s2 = solve_qp(&p, DEFAULT_TOL, None).unwrap().optimal().unwrap();
            assert_eq!(s1.z, s2.z);
            let mut scaled = p.clone();
            for i in 0..scaled.n_constraints() {
                let c = rng.gen_range(0.2..5.0);
                scaled.a_ineq.row_mut(i).iter_mut().for_each(|v| *v *= c);
                scaled.b_ineq[i] *= c;
            }
            let s3 = solve_qp(&scaled, DEFAULT_TOL, None).unwrap().optimal().unwrap();
            for (x, y) in s1.z.iter().zip(&s3.z) {
                assert!((x - y).abs() <= 10.0 * DEFAULT_TOL);
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn random_qps_satisfy_kkt(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(0..=12);
            let p = random_qp(&mut rng, n, m);
            let sol = solve_qp(&p, DEFAULT_TOL, None).unwrap().optimal().unwrap();
            proptest::prop_assert!(sol.kkt_residual <= DEFAULT_TOL, "residual {}", sol.kkt_residual);
        }
    }
}
