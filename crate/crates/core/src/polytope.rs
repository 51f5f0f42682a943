//! H-representation polytopes `{x : C x ≤ c}` and the handful of linear
//! programs run over them: Chebyshev balls, support values and redundancy
//! elimination.

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::numerics::{dot, norm2, Matrix, Vector};

/// Radius cap that keeps the Chebyshev LP bounded on unbounded sets.
const RADIUS_CAP: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    #[serde(rename = "C")]
    pub a: Matrix,
    #[serde(rename = "c")]
    pub b: Vector,
}

impl Polytope {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        dim_check(a.rows() == b.len(), || format!("{} rows vs {} offsets", a.rows(), b.len()))?;
        if a.rows() == 0 {
            return Err(Error::InvalidInput("polytope needs at least one row".into()));
        }
        if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("polytope entries must be finite".into()));
        }
        Ok(Self { a, b })
    }

    /// The axis-aligned box `lo ≤ x ≤ hi`, rows ordered `x_i ≤ hi_i`, `−x_i ≤ −lo_i`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        dim_check(lo.len() == hi.len(), || "box bounds differ in length".into())?;
        let d = lo.len();
        let mut a = Matrix::zeros(2 * d, d);
        let mut b = vec![0.0; 2 * d];
        for i in 0..d {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = hi[i];
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lo[i];
        }
        Self::new(a, b)
    }

    /// Symmetric box `|x_i| ≤ bound_i`.
    pub fn symmetric_box(bounds: &[f64]) -> Result<Self> {
        let lo: Vec<f64> = bounds.iter().map(|v| -v).collect();
        Self::from_box(&lo, bounds)
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn n_rows(&self) -> usize {
        self.a.rows()
    }

    /// Largest value of `C x − c` over the rows.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.n_rows())
            .map(|i| dot(self.a.row(i), x) - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        self.max_violation(x) <= slack
    }

    /// Recognizes an axis-aligned box: every row a signed multiple of a unit
    /// vector, both sides bounded in each coordinate. Returns `(lo, hi)`.
    pub fn as_box(&self) -> Option<(Vector, Vector)> {
        let d = self.dim();
        let mut lo = vec![f64::NEG_INFINITY; d];
        let mut hi = vec![f64::INFINITY; d];
        for i in 0..self.n_rows() {
            let row = self.a.row(i);
            let nz: Vec<usize> = (0..d).filter(|&j| row[j] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let j = nz[0];
            let bound = self.b[i] / row[j];
            if row[j] > 0.0 {
                hi[j] = hi[j].min(bound);
            } else {
                lo[j] = lo[j].max(bound);
            }
        }
        if lo.iter().chain(&hi).all(|v| v.is_finite()) {
            Some((lo, hi))
        } else {
            None
        }
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        let mut b = self.b.clone();
        b.extend_from_slice(&other.b);
        Polytope::new(self.a.vstack(&other.a)?, b)
    }

    /// Center and radius of the largest inscribed ball, or `None` when the
    /// set is empty. The radius is capped for unbounded sets.
    pub fn chebyshev(&self) -> Result<Option<(Vector, f64)>> {
        self.chebyshev_on_hyperplane(None)
    }

    /// Chebyshev ball of the polytope intersected with the hyperplane
    /// `normal · x = offset`, measured inside that hyperplane.
    pub fn facet_chebyshev(&self, normal: &[f64], offset: f64) -> Result<Option<(Vector, f64)>> {
        self.chebyshev_on_hyperplane(Some((normal, offset)))
    }

    fn chebyshev_on_hyperplane(&self, plane: Option<(&[f64], f64)>) -> Result<Option<(Vector, f64)>> {
        let d = self.dim();
        let unit = plane.map(|(n, _)| {
            let nn = norm2(n);
            n.iter().map(|v| v / nn).collect::<Vec<_>>()
        });
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let xs: Vec<_> = (0..d).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
        let r = lp.add_var(1.0, (0.0, RADIUS_CAP));
        for i in 0..self.n_rows() {
            let row = self.a.row(i);
            let weight = match &unit {
                Some(u) => {
                    let p = dot(row, u);
                    norm2(&row.iter().zip(u).map(|(a, ui)| a - p * ui).collect::<Vec<_>>())
                }
                None => norm2(row),
            };
            let mut e = LinearExpr::empty();
            for (j, x) in xs.iter().enumerate() {
                if row[j] != 0.0 {
                    e.add(*x, row[j]);
                }
            }
            if weight > 1e-14 {
                e.add(r, weight);
            }
            lp.add_constraint(e, ComparisonOp::Le, self.b[i]);
        }
        if let Some((n, off)) = plane {
            let mut e = LinearExpr::empty();
            for (j, x) in xs.iter().enumerate() {
                e.add(*x, n[j]);
            }
            lp.add_constraint(e, ComparisonOp::Eq, off);
        }
        match lp.solve() {
            Ok(sol) => Ok(Some((xs.iter().map(|x| *sol.var_value(*x)).collect(), sol.objective()))),
            Err(minilp::Error::Infeasible) => Ok(None),
            Err(e) => Err(Error::Lp(e.to_string())),
        }
    }

    /// `max dir · x` over the polytope; `None` if empty, `+∞` if unbounded.
    pub fn support(&self, dir: &[f64]) -> Result<Option<f64>> {
        let d = self.dim();
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let xs: Vec<_> = (0..d).map(|j| lp.add_var(dir[j], (f64::NEG_INFINITY, f64::INFINITY))).collect();
        for i in 0..self.n_rows() {
            let row = self.a.row(i);
            let mut e = LinearExpr::empty();
            for (j, x) in xs.iter().enumerate() {
                if row[j] != 0.0 {
                    e.add(*x, row[j]);
                }
            }
            lp.add_constraint(e, ComparisonOp::Le, self.b[i]);
        }
        match lp.solve() {
            Ok(sol) => Ok(Some(sol.objective())),
            Err(minilp::Error::Infeasible) => Ok(None),
            Err(minilp::Error::Unbounded) => Ok(Some(f64::INFINITY)),
        }
    }

    /// Drops rows implied by the others (and duplicate or trivially
    /// satisfied rows). Row order of the survivors is preserved.
    pub fn remove_redundant(&self, tol: f64) -> Result<Polytope> {
        let d = self.dim();
        let mut keep: Vec<usize> = Vec::new();
        let mut seen: Vec<(Vector, f64)> = Vec::new();
        for i in 0..self.n_rows() {
            let row = self.a.row(i);
            let nrm = norm2(row);
            if nrm <= 1e-12 {
                if self.b[i] < -tol {
                    // empty set; keep the contradiction visible
                    keep.push(i);
                }
                continue;
            }
            let (u, o) = (row.iter().map(|v| v / nrm).collect::<Vec<_>>(), self.b[i] / nrm);
            if let Some(k) = seen.iter().position(|(su, _)| su.iter().zip(&u).all(|(p, q)| (p - q).abs() <= 1e-9)) {
                // parallel duplicate: keep the tighter one
                if o < seen[k].1 {
                    seen[k].1 = o;
                    keep[k] = i;
                }
                continue;
            }
            seen.push((u, o));
            keep.push(i);
        }
        let candidates = keep;
        let mut kept: Vec<usize> = candidates.clone();
        for &i in &candidates {
            let others: Vec<usize> = kept.iter().copied().filter(|&j| j != i).collect();
            if others.is_empty() {
                continue;
            }
            let row = self.a.row(i);
            // relax row i by one unit so the LP stays bounded in its direction
            let mut a = self.a.select_rows(&others);
            a = a.vstack(&Matrix::from_row_major(1, d, row.to_vec())?)?;
            let mut b: Vector = others.iter().map(|&j| self.b[j]).collect();
            b.push(self.b[i] + 1.0);
            let relaxed = Polytope { a, b };
            if let Some(v) = relaxed.support(row)? {
                if v <= self.b[i] + tol * norm2(row).max(1.0) {
                    kept.retain(|&j| j != i);
                }
            }
        }
        let a = self.a.select_rows(&kept);
        let b = kept.iter().map(|&j| self.b[j]).collect();
        Polytope::new(a, b)
    }
}

/// Unit-norm version of the half-space `a·x ≤ b` with a canonical sign
/// (first nonzero coefficient positive). Returns the normalized pair and
/// whether the sign was flipped.
pub fn canonical_hyperplane(a: &[f64], b: f64) -> (Vector, f64, bool) {
    let n = norm2(a);
    let mut u: Vector = a.iter().map(|v| v / n).collect();
    let mut o = b / n;
    let first = u.iter().find(|v| v.abs() > 1e-12).copied().unwrap_or(1.0);
    let flipped = first < 0.0;
    if flipped {
        u.iter_mut().for_each(|v| *v = -*v);
        o = -o;
    }
    (u, o, flipped)
}
