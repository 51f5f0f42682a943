//! Explicit MPC by enumeration of optimal active sets of the condensed
//! multi-parametric QP.
//!
//! For a fixed active set `𝒜` the KKT conditions are linear in the
//! parameter, so the optimizer and the multipliers are affine in `x`:
//! `ũ(x) = K̃ x + g̃`, `λ(x) = Λ x + μ`. The set where this active set is
//! optimal is the polytope `{x : Λx + μ ≥ 0, C_𝒩(K̃x + g̃) ≤ T_𝒩 x + c_𝒩}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::CondensedMpc;
use crate::numerics::{Cholesky, Matrix, Vector};
use crate::polytope::{canonical_hyperplane, Polytope};
use crate::pwa::{PwaFunction, PwaRegion};

pub const DEFAULT_CHEBY_TOL: f64 = 1e-7;
pub const DEFAULT_DEDUP_TOL: f64 = 1e-6;
/// Largest number of candidate active sets that will be examined.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

#[derive(Clone, Debug)]
pub struct CriticalRegion {
    pub active_set: Vec<usize>,
    /// Gains of the whole optimal sequence.
    pub k: Matrix,
    pub g: Vector,
    pub region: Polytope,
    /// Chebyshev center and radius of `region`.
    pub center: Vector,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct EnumerationOptions {
    /// Defaults to `N·n_u`.
    pub max_active_set_size: Option<usize>,
    pub cheby_tol: f64,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self { max_active_set_size: None, cheby_tol: DEFAULT_CHEBY_TOL }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.checked_mul((n - i) as u128).map_or(u128::MAX, |v| v / (i + 1) as u128))
}

/// All subsets of `items` with at most `max` elements, lexicographic within
/// each size.
fn subsets(items: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier: Vec<(Vec<usize>, usize)> = vec![(vec![], 0)];
    for _ in 0..max {
        let mut next = Vec::new();
        for (set, start) in &frontier {
            for (pos, &it) in items.iter().enumerate().skip(*start) {
                let mut s = set.clone();
                s.push(it);
                out.push(s.clone());
                next.push((s, pos + 1));
            }
        }
        frontier = next;
    }
    out
}

/// Affine optimizer and multipliers for one active set, or `None` when the
/// active constraint gradients are linearly dependent.
fn active_set_solution(m: &CondensedMpc, active: &[usize], g2_inv: &Cholesky) -> Result<Option<(Matrix, Vector, Matrix, Vector)>> {
    let nx = m.n_x;
    let gt = m.g.transpose();
    let g_inv_gt = g2_inv.solve_matrix(&gt)?;
    if active.is_empty() {
        let k = g_inv_gt.scale(-1.0);
        let g = vec![0.0; k.rows()];
        return Ok(Some((k, g, Matrix::zeros(0, nx), vec![])));
    }
    let ca = m.cc.select_rows(active);
    let ta = m.t.select_rows(active);
    let ca_t = ca.transpose();
    let g_inv_cat = g2_inv.solve_matrix(&ca_t)?;
    let s = ca.matmul(&g_inv_cat)?.symmetrize();
    let scale = s.max_abs().max(1.0);
    let Ok(s_chol) = Cholesky::new(&s) else { return Ok(None) };
    let min_pivot = (0..s.rows()).map(|i| s_chol.factor()[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot * min_pivot <= 1e-10 * scale {
        return Ok(None);
    }
    let ca_ginv_gt = ca.matmul(&g_inv_gt)?;
    let lam_mat = s_chol.solve_matrix(&ta.add(&ca_ginv_gt)?)?.scale(-1.0);
    let c_a: Vector = active.iter().map(|&i| m.c[i]).collect();
    let mu: Vector = s_chol.solve(&c_a)?.iter().map(|v| -v).collect();
    let k = g_inv_gt.add(&g_inv_cat.matmul(&lam_mat)?)?.scale(-1.0);
    let g: Vector = g_inv_cat.matvec(&mu)?.iter().map(|v| -v).collect();
    Ok(Some((k, g, lam_mat, mu)))
}

fn critical_region(m: &CondensedMpc, active: &[usize], g2_inv: &Cholesky, cheby_tol: f64) -> Result<Option<CriticalRegion>> {
    let Some((k, g, lam_mat, mu)) = active_set_solution(m, active, g2_inv)? else {
        log::warn!("active set {active:?} violates LICQ; skipped");
        return Ok(None);
    };
    let nx = m.n_x;
    let mut rows: Vec<Vector> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for i in 0..active.len() {
        rows.push(lam_mat.row(i).iter().map(|v| -v).collect());
        rhs.push(mu[i]);
    }
    let ck = m.cc.matmul(&k)?;
    let cg = m.cc.matvec(&g)?;
    for i in 0..m.n_constraints() {
        if active.contains(&i) {
            continue;
        }
        let row: Vector = ck.row(i).iter().zip(m.t.row(i)).map(|(a, t)| a - t).collect();
        let b = m.c[i] - cg[i];
        if row.iter().all(|v| v.abs() <= 1e-14) {
            if b < -1e-12 {
                return Ok(None);
            }
            continue;
        }
        rows.push(row);
        rhs.push(b);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("critical region is unbounded; the state set must be bounded".into()));
    }
    let poly = Polytope::new(Matrix::from_rows(&rows)?, rhs)?;
    let Some((_, radius)) = poly.chebyshev()? else { return Ok(None) };
    if radius <= cheby_tol {
        return Ok(None);
    }
    let region = poly.remove_redundant(1e-9)?;
    let (center, radius) = region.chebyshev()?.ok_or(Error::EmptySet)?;
    debug_assert_eq!(region.dim(), nx);
    Ok(Some(CriticalRegion { active_set: active.to_vec(), k, g, region, center, radius }))
}

/// All critical regions of `m`, sorted by active set.
pub fn enumerate_regions(m: &CondensedMpc, opts: &EnumerationOptions) -> Result<Vec<CriticalRegion>> {
    let nz = m.f.rows();
    let max = opts.max_active_set_size.unwrap_or(nz).min(nz);
    // rows free of the decision variable can never be part of a regular active set
    let candidates: Vec<usize> = (0..m.n_constraints()).filter(|&i| m.cc.row(i).iter().any(|v| *v != 0.0)).collect();
    let count = (0..=max).fold(0u128, |acc, k| acc.saturating_add(binomial(candidates.len(), k)));
    if count > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudgetExceeded(count));
    }
    let g2_inv = Cholesky::new(&m.f.scale(2.0))?;
    let sets = subsets(&candidates, max);
    let found: Vec<Result<Option<CriticalRegion>>> = sets.par_iter().map(|a| critical_region(m, a, &g2_inv, opts.cheby_tol)).collect();
    let mut regions = found.into_iter().filter_map(|r| r.transpose()).collect::<Result<Vec<_>>>()?;
    regions.sort_by(|a, b| a.active_set.cmp(&b.active_set));
    Ok(regions)
}

/// Explicit control law: the first `n_u` rows of each region's gains.
pub fn explicit_law(m: &CondensedMpc, regions: &[CriticalRegion]) -> Result<PwaFunction> {
    let nu = m.n_u;
    let law = regions
        .iter()
        .map(|r| PwaRegion::new(r.region.clone(), r.k.block(0, 0, nu, m.n_x), r.g[..nu].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    PwaFunction::new(law)
}

pub fn enumerate_explicit(m: &CondensedMpc, opts: &EnumerationOptions) -> Result<PwaFunction> {
    let regions = enumerate_regions(m, opts)?;
    if regions.is_empty() {
        return Err(Error::EmptySet);
    }
    explicit_law(m, &regions)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PwaMemory {
    pub n_r: usize,
    pub n_h: usize,
    pub n_f: usize,
    pub bytes: usize,
}

/// Storage for an explicit law: unique hyperplanes (normalized to unit
/// norm with a canonical sign) plus unique affine feedback laws.
pub fn memory_footprint_pwa(f: &PwaFunction, alpha_bit: usize, dedup_tol: f64) -> PwaMemory {
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(p, q)| (p - q).abs() <= dedup_tol);
    let mut planes: Vec<Vector> = Vec::new();
    let mut laws: Vec<Vector> = Vec::new();
    for r in f.regions() {
        for i in 0..r.z_vec.len() {
            let row = r.z_mat.row(i);
            if row.iter().all(|v| *v == 0.0) {
                continue;
            }
            let (mut a, b, _) = canonical_hyperplane(row, r.z_vec[i]);
            a.push(b);
            if !planes.iter().any(|p| close(p, &a)) {
                planes.push(a);
            }
        }
        let mut law: Vector = r.k.as_slice().to_vec();
        law.extend_from_slice(&r.g);
        if !laws.iter().any(|l| close(l, &law)) {
            laws.push(law);
        }
    }
    let (nx, nu) = (f.n_x(), f.n_u());
    let (n_h, n_f) = (planes.len(), laws.len());
    PwaMemory { n_r: f.n_regions(), n_h, n_f, bytes: alpha_bit * (n_h * (nx + 1) + n_f * (nx * nu + nu)) }
}
