//! Condensed (dense) MPC: the finite-horizon problem with the states
//! eliminated, the implicit controller built on it, and labeled datasets.
//!
//! The condensed problem in the stacked input sequence `ũ = (u₀,…,u_{N−1})` is
//!
//! ```text
//!     minimize    ũᵀ F ũ + xᵀ G ũ + xᵀ H x
//!     subject to  C_c ũ ≤ T x + c_c
//! ```
//!
//! State constraints are imposed on every predicted state `x₀,…,x_N`; the
//! rows for `x₀` do not involve `ũ` and only restrict the parameter.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Controller, SampleBox, Scenario};
use crate::error::{dim_check, Error, Result};
use crate::numerics::{dot, Matrix, Vector};
use crate::qp::{PreparedQp, QpSolution, QpStatus, DEFAULT_TOL};

/// Where a condensed constraint row comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    State { step: usize },
    Input { step: usize },
    Terminal,
}

#[derive(Clone, Debug)]
pub struct CondensedMpc {
    pub f: Matrix,
    pub g: Matrix,
    pub h: Matrix,
    pub cc: Matrix,
    pub t: Matrix,
    pub c: Vector,
    pub row_kinds: Vec<RowKind>,
    pub n_x: usize,
    pub n_u: usize,
    pub horizon: usize,
    qp: PreparedQp,
}

/// Stacks `x_k = Φ_k x + Γ_k ũ` for `k = 0..=N`.
fn prediction_matrices(s: &Scenario) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    let (a, b) = (&s.system.a, &s.system.b);
    let (nx, nu, n) = (s.n_x(), s.n_u(), s.horizon);
    let mut phi = vec![Matrix::identity(nx)];
    let mut gamma = vec![Matrix::zeros(nx, n * nu)];
    for k in 1..=n {
        let next_phi = a.matmul(&phi[k - 1])?;
        let mut next_gamma = a.matmul(&gamma[k - 1])?;
        next_gamma.set_block(0, (k - 1) * nu, b);
        phi.push(next_phi);
        gamma.push(next_gamma);
    }
    Ok((phi, gamma))
}

pub fn condense(s: &Scenario) -> Result<CondensedMpc> {
    s.validate()?;
    let (nx, nu, n) = (s.n_x(), s.n_u(), s.horizon);
    let nz = n * nu;
    let (phi, gamma) = prediction_matrices(s)?;

    let mut f = Matrix::zeros(nz, nz);
    for k in 0..n {
        f.set_block(k * nu, k * nu, &s.r);
    }
    let mut g = Matrix::zeros(nx, nz);
    let mut h = Matrix::zeros(nx, nx);
    for k in 0..=n {
        let w = if k < n { &s.q } else { &s.p };
        let wg = w.matmul(&gamma[k])?;
        let wp = w.matmul(&phi[k])?;
        f = f.add(&gamma[k].transpose().matmul(&wg)?)?;
        g = g.add(&phi[k].transpose().matmul(&wg)?.scale(2.0))?;
        h = h.add(&phi[k].transpose().matmul(&wp)?)?;
    }
    let f = f.symmetrize();
    let h = h.symmetrize();

    let mut cc_rows: Vec<Vector> = Vec::new();
    let mut t_rows: Vec<Vector> = Vec::new();
    let mut c = Vec::new();
    let mut row_kinds = Vec::new();
    let mut push_state_rows = |poly: &crate::polytope::Polytope, k: usize, kind: RowKind| -> Result<()> {
        let cg = poly.a.matmul(&gamma[k])?;
        let cp = poly.a.matmul(&phi[k])?;
        for i in 0..poly.n_rows() {
            cc_rows.push(cg.row(i).to_vec());
            t_rows.push(cp.row(i).iter().map(|v| -v).collect());
            c.push(poly.b[i]);
            row_kinds.push(kind);
        }
        Ok(())
    };
    for k in 0..=n {
        push_state_rows(&s.state_set, k, RowKind::State { step: k })?;
        if k == n {
            if let Some(xf) = &s.terminal_set {
                push_state_rows(xf, k, RowKind::Terminal)?;
            }
        }
    }
    for k in 0..n {
        let u = &s.input_set;
        for i in 0..u.n_rows() {
            let mut row = vec![0.0; nz];
            row[k * nu..(k + 1) * nu].copy_from_slice(u.a.row(i));
            cc_rows.push(row);
            t_rows.push(vec![0.0; nx]);
            c.push(u.b[i]);
            row_kinds.push(RowKind::Input { step: k });
        }
    }
    let cc = Matrix::from_rows(&cc_rows)?;
    let t = Matrix::from_rows(&t_rows)?;
    let qp = PreparedQp::new(&f)?;
    Ok(CondensedMpc { f, g, h, cc, t, c, row_kinds, n_x: nx, n_u: nu, horizon: n, qp })
}

impl CondensedMpc {
    pub fn n_constraints(&self) -> usize {
        self.c.len()
    }

    /// `T x + c_c`
    pub fn rhs(&self, x: &[f64]) -> Result<Vector> {
        let mut b = self.t.matvec(x)?;
        b.iter_mut().zip(&self.c).for_each(|(bi, ci)| *bi += ci);
        Ok(b)
    }

    /// Linear term of the QP in `ũ` at parameter `x`: `Gᵀ x`.
    pub fn linear_term(&self, x: &[f64]) -> Result<Vector> {
        self.g.tr_matvec(x)
    }

    pub fn objective(&self, x: &[f64], u_seq: &[f64]) -> Result<f64> {
        let fu = self.f.matvec(u_seq)?;
        let hx = self.h.matvec(x)?;
        Ok(dot(u_seq, &fu) + dot(&self.linear_term(x)?, u_seq) + dot(x, &hx))
    }

    /// Rows of `C_c` that are identically zero: pure parameter constraints.
    pub fn parameter_rows(&self) -> Vec<usize> {
        (0..self.n_constraints()).filter(|&i| self.cc.row(i).iter().all(|v| *v == 0.0)).collect()
    }

    /// Full QP solution at `x`, whatever its status.
    pub fn solve_at(&self, x: &[f64]) -> Result<QpSolution> {
        dim_check(x.len() == self.n_x, || format!("state has length {}, expected {}", x.len(), self.n_x))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite state".into()));
        }
        self.qp.solve(&self.linear_term(x)?, &self.cc, &self.rhs(x)?, DEFAULT_TOL, None)
    }

    /// Optimal input sequence at `x`.
    pub fn optimal_sequence(&self, x: &[f64]) -> Result<Vector> {
        let sol = self.solve_at(x)?;
        match sol.status {
            QpStatus::Optimal => Ok(sol.z),
            QpStatus::Infeasible => Err(Error::Infeasible),
            QpStatus::MaxIter => Err(Error::MaxIter(sol.iterations)),
        }
    }

    /// First input of the optimal sequence: the implicit MPC law.
    pub fn mpc_control(&self, x: &[f64]) -> Result<Vector> {
        let mut z = self.optimal_sequence(x)?;
        z.truncate(self.n_u);
        Ok(z)
    }
}

impl Controller for CondensedMpc {
    fn control(&self, x: &[f64]) -> Result<Vector> {
        self.mpc_control(x)
    }
}

/// Labeled `(state, optimal first input)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_x: usize,
    pub n_u: usize,
    pub points: Vec<(Vector, Vector)>,
    pub seed: u64,
    pub fingerprint: String,
}

/// Metadata written next to a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n_x: usize,
    pub n_u: usize,
    pub n_tr: usize,
    pub seed: u64,
    pub fingerprint: String,
    pub draws: usize,
}

/// Per-draw cap before sampling is declared exhausted.
const MAX_DRAWS: usize = 1_000_000;
const MIN_ACCEPTANCE: f64 = 1e-3;

/// Independent random stream for item `index` of a seeded family.
pub fn index_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `n_tr` feasible states uniformly from `sample_box` (rejecting
/// infeasible draws) and labels each with the implicit MPC input. Item `i`
/// uses its own stream, so the result does not depend on evaluation order.
pub fn generate_dataset(m: &CondensedMpc, n_tr: usize, seed: u64, sample_box: &SampleBox, fingerprint: &str) -> Result<(Dataset, DatasetMeta)> {
    if n_tr == 0 {
        return Err(Error::PreconditionViolated("n_tr must be at least 1".into()));
    }
    dim_check(sample_box.dim() == m.n_x, || "sample box dimension".into())?;
    let total_draws = AtomicUsize::new(0);
    let points: Vec<Result<(Vector, Vector)>> = (0..n_tr)
        .into_par_iter()
        .map(|i| {
            let mut rng = index_rng(seed, i as u64);
            for draw in 1..=MAX_DRAWS {
                let x = sample_box.sample(&mut rng);
                match m.mpc_control(&x) {
                    Ok(u) => {
                        total_draws.fetch_add(draw, Ordering::Relaxed);
                        return Ok((x, u));
                    }
                    Err(Error::Infeasible) => {}
                    Err(e) => return Err(e),
                }
                if draw % 1000 == 0 {
                    let seen = total_draws.load(Ordering::Relaxed) + draw;
                    if seen >= MAX_DRAWS && (i as f64) / (seen as f64) < MIN_ACCEPTANCE {
                        return Err(Error::SamplingExhausted { accepted: i, draws: seen });
                    }
                }
            }
            Err(Error::SamplingExhausted { accepted: 0, draws: MAX_DRAWS })
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let draws = total_draws.into_inner();
    let meta = DatasetMeta { n_x: m.n_x, n_u: m.n_u, n_tr, seed, fingerprint: fingerprint.to_string(), draws };
    Ok((Dataset { n_x: m.n_x, n_u: m.n_u, points, seed, fingerprint: fingerprint.to_string() }, meta))
}

/// Labeled states visited by the implicit MPC in closed loop. Initial
/// states are drawn as in [`generate_dataset`]; each trajectory contributes
/// its states up to and including the first one within `settle_tol` of the
/// origin (or all `k_end` steps), in index order, until `n_tr` pairs exist.
pub fn generate_trajectory_dataset(
    m: &CondensedMpc,
    sys: &crate::dynamics::LtiSystem,
    n_tr: usize,
    seed: u64,
    sample_box: &SampleBox,
    settle_tol: f64,
    k_end: usize,
    fingerprint: &str,
) -> Result<(Dataset, DatasetMeta)> {
    if n_tr == 0 {
        return Err(Error::PreconditionViolated("n_tr must be at least 1".into()));
    }
    let chunk = 64;
    let mut points = Vec::with_capacity(n_tr);
    let mut draws = 0;
    let mut next_index = 0u64;
    while points.len() < n_tr {
        let batch: Vec<Result<(Vec<(Vector, Vector)>, usize)>> = (next_index..next_index + chunk)
            .into_par_iter()
            .map(|i| {
                let mut rng = index_rng(seed, i);
                for draw in 1..=MAX_DRAWS {
                    let x0 = sample_box.sample(&mut rng);
                    if m.mpc_control(&x0).is_err() {
                        continue;
                    }
                    let mut pairs = Vec::new();
                    let mut x = x0;
                    for _ in 0..k_end {
                        let Ok(u) = m.mpc_control(&x) else { break };
                        let next = sys.step(&x, &u)?;
                        let settled = x.iter().all(|v| v.abs() <= settle_tol);
                        pairs.push((x, u));
                        if settled {
                            break;
                        }
                        x = next;
                    }
                    return Ok((pairs, draw));
                }
                Err(Error::SamplingExhausted { accepted: 0, draws: MAX_DRAWS })
            })
            .collect();
        for item in batch {
            let (pairs, d) = item?;
            draws += d;
            for p in pairs {
                if points.len() < n_tr {
                    points.push(p);
                }
            }
        }
        next_index += chunk;
    }
    let meta = DatasetMeta { n_x: m.n_x, n_u: m.n_u, n_tr, seed, fingerprint: fingerprint.to_string(), draws };
    Ok((Dataset { n_x: m.n_x, n_u: m.n_u, points, seed, fingerprint: fingerprint.to_string() }, meta))
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let header: Vec<String> = (0..self.n_x).map(|i| format!("x{i}")).chain((0..self.n_u).map(|i| format!("u{i}"))).collect();
        wr.write_record(&header)?;
        for (x, u) in &self.points {
            wr.write_record(x.iter().chain(u).map(|v| fmt_real(*v)))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`Dataset::write_csv`]. Seed and
    /// fingerprint are not part of the CSV and come from the caller.
    pub fn read_csv<R: Read>(r: R, seed: u64, fingerprint: &str) -> Result<Dataset> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let n_x = header.iter().filter(|h| h.starts_with('x')).count();
        let n_u = header.iter().filter(|h| h.starts_with('u')).count();
        dim_check(n_x + n_u == header.len() && n_x > 0 && n_u > 0, || "dataset header must be x0..,u0..".into())?;
        let mut points = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            dim_check(vals.len() == n_x + n_u, || "ragged dataset row".into())?;
            points.push((vals[..n_x].to_vec(), vals[n_x..].to_vec()));
        }
        Ok(Dataset { n_x, n_u, points, seed, fingerprint: fingerprint.to_string() })
    }
}
