//! Piecewise affine functions on polyhedral partitions: point location,
//! affine normalization of domain and range, and the split of a continuous
//! scalar PWA function into a difference of two convex max-of-affine
//! functions.

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::numerics::{dot, Lu, Matrix, Vector};
use crate::polytope::{canonical_hyperplane, Polytope};

/// Point-location slack for region membership.
pub const MEMBERSHIP_SLACK: f64 = 1e-9;
/// Chebyshev radius above which two regions count as sharing a facet.
pub const FACET_TOL: f64 = 1e-7;
/// Continuity tolerance across a shared facet.
pub const CONTINUITY_TOL: f64 = 1e-6;
const RAMP_MARGIN: f64 = 1e-9;
const CELL_TOL: f64 = 1e-9;

/// One affine piece `u = K x + g` valid on `{x : Z x ≤ z}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwaRegion {
    #[serde(rename = "Z")]
    pub z_mat: Matrix,
    #[serde(rename = "z")]
    pub z_vec: Vector,
    #[serde(rename = "K")]
    pub k: Matrix,
    pub g: Vector,
}

impl PwaRegion {
    pub fn new(region: Polytope, k: Matrix, g: Vector) -> Result<Self> {
        dim_check(k.cols() == region.dim(), || format!("gain has {} columns, region is {}-dimensional", k.cols(), region.dim()))?;
        dim_check(k.rows() == g.len(), || format!("gain has {} rows, offset has {}", k.rows(), g.len()))?;
        Ok(Self { z_mat: region.a, z_vec: region.b, k, g })
    }

    pub fn polytope(&self) -> Polytope {
        Polytope { a: self.z_mat.clone(), b: self.z_vec.clone() }
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        (0..self.z_vec.len()).all(|i| dot(self.z_mat.row(i), x) - self.z_vec[i] <= slack)
    }

    pub fn eval(&self, x: &[f64]) -> Vector {
        let mut u = self.k.matvec(x).expect("dimensions checked at construction");
        u.iter_mut().zip(&self.g).for_each(|(ui, gi)| *ui += gi);
        u
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PwaJson", into = "PwaJson")]
pub struct PwaFunction {
    regions: Vec<PwaRegion>,
}

#[derive(Serialize, Deserialize)]
struct PwaJson {
    regions: Vec<PwaRegion>,
}

impl TryFrom<PwaJson> for PwaFunction {
    type Error = Error;
    fn try_from(j: PwaJson) -> Result<Self> {
        PwaFunction::new(j.regions)
    }
}

impl From<PwaFunction> for PwaJson {
    fn from(f: PwaFunction) -> Self {
        PwaJson { regions: f.regions }
    }
}

impl PwaFunction {
    pub fn new(regions: Vec<PwaRegion>) -> Result<Self> {
        let first = regions.first().ok_or_else(|| Error::InvalidInput("PWA function needs at least one region".into()))?;
        let (nx, nu) = (first.k.cols(), first.k.rows());
        for r in &regions {
            dim_check(r.k.cols() == nx && r.k.rows() == nu && r.g.len() == nu, || "regions disagree on gain dimensions".into())?;
            dim_check(r.z_mat.cols() == nx && r.z_mat.rows() == r.z_vec.len(), || "region polytope dimensions".into())?;
        }
        Ok(Self { regions })
    }

    pub fn regions(&self) -> &[PwaRegion] {
        &self.regions
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_x(&self) -> usize {
        self.regions[0].k.cols()
    }

    pub fn n_u(&self) -> usize {
        self.regions[0].k.rows()
    }

    /// Index of the lowest-numbered region containing `x`.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(x, MEMBERSHIP_SLACK))
    }

    /// The scalar function formed by output `row`.
    pub fn output(&self, row: usize) -> Result<PwaFunction> {
        dim_check(row < self.n_u(), || format!("output {row} of {}", self.n_u()))?;
        let regions = self
            .regions
            .iter()
            .map(|r| PwaRegion {
                z_mat: r.z_mat.clone(),
                z_vec: r.z_vec.clone(),
                k: Matrix::from_row_major(1, r.k.cols(), r.k.row(row).to_vec()).expect("row slice"),
                g: vec![r.g[row]],
            })
            .collect();
        PwaFunction::new(regions)
    }
}

pub fn eval_pwa(f: &PwaFunction, x: &[f64]) -> Result<Vector> {
    dim_check(x.len() == f.n_x(), || format!("point has length {}, expected {}", x.len(), f.n_x()))?;
    f.locate(x).map(|i| f.regions[i].eval(x)).ok_or(Error::OutsidePartition)
}

/// `v ↦ S v + t`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    #[serde(rename = "S")]
    pub s: Matrix,
    pub t: Vector,
}

impl AffineTransform {
    pub fn new(s: Matrix, t: Vector) -> Result<Self> {
        dim_check(s.is_square() && s.rows() == t.len(), || "affine transform dimensions".into())?;
        let det = Lu::new(&s).map(|lu| lu.determinant()).unwrap_or(0.0);
        if det.abs() <= 1e-12 {
            return Err(Error::NonInvertible(format!("determinant {det:e}")));
        }
        Ok(Self { s, t })
    }

    pub fn identity(n: usize) -> Self {
        Self { s: Matrix::identity(n), t: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.t.len()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vector> {
        let mut out = self.s.matvec(v)?;
        out.iter_mut().zip(&self.t).for_each(|(o, t)| *o += t);
        Ok(out)
    }

    pub fn apply_inverse(&self, w: &[f64]) -> Result<Vector> {
        let rhs: Vector = w.iter().zip(&self.t).map(|(wi, ti)| wi - ti).collect();
        Lu::new(&self.s)?.solve(&rhs)
    }
}

#[derive(Clone, Debug)]
pub struct NormalizedPwa {
    pub ax: AffineTransform,
    pub au: AffineTransform,
    pub f_hat: PwaFunction,
}

/// Rewrites `f` on the unit cube with nonnegative outputs: `Ax` maps the
/// state box diagonally onto `[0,1]^{n_x}` and `Au` shifts each output by
/// its lower bound, so that `f = Au⁻¹ ∘ f̂ ∘ Ax`.
pub fn normalize_domain(f: &PwaFunction, state_box: &Polytope, input_ranges: &[(f64, f64)]) -> Result<NormalizedPwa> {
    let (lo, hi) = state_box.as_box().ok_or_else(|| Error::InvalidInput("state set is not an axis-aligned box".into()))?;
    dim_check(lo.len() == f.n_x(), || "state box dimension".into())?;
    dim_check(input_ranges.len() == f.n_u(), || format!("{} input ranges for {} outputs", input_ranges.len(), f.n_u()))?;
    let width: Vector = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
    if let Some(j) = width.iter().position(|w| !(*w > 0.0)) {
        return Err(Error::NonInvertible(format!("state box side {j} has zero width")));
    }
    let ax = AffineTransform::new(Matrix::from_diag(&width.iter().map(|w| 1.0 / w).collect::<Vec<_>>()), lo.iter().zip(&width).map(|(l, w)| -l / w).collect())?;
    let u_lo: Vector = input_ranges.iter().map(|r| r.0).collect();
    let au = AffineTransform::new(Matrix::identity(f.n_u()), u_lo.iter().map(|v| -v).collect())?;

    let d_inv = Matrix::from_diag(&width);
    let regions = f
        .regions
        .iter()
        .map(|r| {
            // x = lo + D⁻¹ x̂
            let z_mat = r.z_mat.matmul(&d_inv)?;
            let z_lo = r.z_mat.matvec(&lo)?;
            let z_vec = r.z_vec.iter().zip(&z_lo).map(|(z, zl)| z - zl).collect();
            let k = r.k.matmul(&d_inv)?;
            let k_lo = r.k.matvec(&lo)?;
            let g = r.g.iter().zip(&k_lo).zip(&u_lo).map(|((g, kl), ul)| g + kl - ul).collect();
            Ok(PwaRegion { z_mat, z_vec, k, g })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalizedPwa { ax, au, f_hat: PwaFunction::new(regions)? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub a: Vector,
    pub b: f64,
}

impl AffinePiece {
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) + self.b
    }
}

/// `x ↦ maxᵢ (aᵢ·x + bᵢ)`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConvexPwa {
    pub pieces: Vec<AffinePiece>,
}

impl ConvexPwa {
    pub fn new(pieces: Vec<AffinePiece>) -> Result<Self> {
        let first = pieces.first().ok_or(Error::EmptyPieces)?;
        let n = first.a.len();
        dim_check(pieces.iter().all(|p| p.a.len() == n), || "pieces disagree on dimension".into())?;
        Ok(Self { pieces })
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].a.len()
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.eval(x)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Affine pieces closer than this (relative) are merged.
const PIECE_DEDUP_TOL: f64 = 1e-8;

/// A partition hyperplane in canonical form.
#[derive(Clone, Debug)]
struct Hyperplane {
    a: Vector,
    b: f64,
}

fn find_hyperplane(planes: &[Hyperplane], a: &[f64], b: f64, tol: f64) -> Option<usize> {
    planes.iter().position(|h| (h.b - b).abs() <= tol && h.a.iter().zip(a).all(|(p, q)| (p - q).abs() <= tol))
}

/// For each region, the hyperplanes it is bounded by and on which side
/// (`true` for the `a·x ≥ b` side).
fn region_hyperplanes(f: &PwaFunction, planes: &mut Vec<Hyperplane>, tol: f64) -> Vec<Vec<(usize, bool)>> {
    f.regions
        .iter()
        .map(|r| {
            let mut own = Vec::new();
            for i in 0..r.z_vec.len() {
                let row = r.z_mat.row(i);
                if row.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let (a, b, flipped) = canonical_hyperplane(row, r.z_vec[i]);
                let k = match find_hyperplane(planes, &a, b, tol) {
                    Some(k) => k,
                    None => {
                        planes.push(Hyperplane { a, b });
                        planes.len() - 1
                    }
                };
                if !own.iter().any(|(j, _)| *j == k) {
                    own.push((k, flipped));
                }
            }
            own
        })
        .collect()
}

/// Difference-of-convex split `f = γ − η` of a continuous scalar PWA function.
///
/// Every interior facet of the partition lies on some hyperplane `a·x = b`.
/// Where `f` is concave across such a hyperplane, a ramp
/// `λ·max(0, a·x − b)` large enough to undo the worst concave kink is
/// added to `f`; `η` is the sum of all ramps and `γ = f + η`. Both are
/// written out as maxima of their affine pieces over the cells of the
/// hyperplane arrangement inside the partition.
pub fn dc_decompose(f: &PwaFunction) -> Result<(ConvexPwa, ConvexPwa)> {
    dim_check(f.n_u() == 1, || format!("expected a scalar function, got {} outputs", f.n_u()))?;
    let nx = f.n_x();
    let tol = 1e-6;
    let mut planes = Vec::new();
    let sides = region_hyperplanes(f, &mut planes, tol);

    // smallest gradient jump across each hyperplane, towards its + side
    let mut min_jump: Vec<Option<f64>> = vec![None; planes.len()];
    for i in 0..f.n_regions() {
        for j in 0..f.n_regions() {
            if i == j {
                continue;
            }
            for &(k, plus_i) in &sides[i] {
                if plus_i || !sides[j].contains(&(k, true)) {
                    continue;
                }
                let (ri, rj) = (&f.regions[i], &f.regions[j]);
                let both = ri.polytope().intersect(&rj.polytope())?;
                let h = &planes[k];
                let Some((center, radius)) = both.facet_chebyshev(&h.a, h.b)? else { continue };
                if radius <= FACET_TOL {
                    continue;
                }
                let gap = (ri.eval(&center)[0] - rj.eval(&center)[0]).abs();
                let diff: Vector = rj.k.row(0).iter().zip(ri.k.row(0)).map(|(p, q)| p - q).collect();
                let mu = dot(&diff, &h.a);
                let off_normal = diff.iter().zip(&h.a).map(|(d, a)| (d - mu * a).abs()).fold(0.0, f64::max);
                if gap > CONTINUITY_TOL || off_normal > CONTINUITY_TOL * (1.0 + mu.abs()) {
                    return Err(Error::DiscontinuousInput(gap.max(off_normal)));
                }
                min_jump[k] = Some(min_jump[k].map_or(mu, |m: f64| m.min(mu)));
            }
        }
    }
    let ramps: Vec<(usize, f64)> = min_jump
        .iter()
        .enumerate()
        .filter_map(|(k, m)| m.filter(|mu| *mu < 0.0).map(|mu| (k, -mu + RAMP_MARGIN)))
        .collect();

    // arrangement cells: each region split by the ramp hyperplanes crossing it
    struct Cell {
        poly: Polytope,
        region: usize,
        active: Vec<bool>,
    }
    let mut cells: Vec<Cell> = f
        .regions
        .iter()
        .enumerate()
        .map(|(i, r)| Cell { poly: r.polytope(), region: i, active: Vec::with_capacity(ramps.len()) })
        .collect();
    for &(k, _) in &ramps {
        let h = &planes[k];
        let neg_a: Vector = h.a.iter().map(|v| -v).collect();
        let mut next = Vec::with_capacity(cells.len());
        for cell in cells {
            let plus = cell.poly.intersect(&Polytope::new(Matrix::from_row_major(1, nx, neg_a.clone())?, vec![-h.b])?)?;
            let minus = cell.poly.intersect(&Polytope::new(Matrix::from_row_major(1, nx, h.a.clone())?, vec![h.b])?)?;
            let has_plus = plus.chebyshev()?.is_some_and(|(_, r)| r > CELL_TOL);
            let has_minus = minus.chebyshev()?.is_some_and(|(_, r)| r > CELL_TOL);
            match (has_minus, has_plus) {
                (true, true) => {
                    let mut a = cell.active.clone();
                    a.push(false);
                    next.push(Cell { poly: minus, region: cell.region, active: a });
                    let mut a = cell.active;
                    a.push(true);
                    next.push(Cell { poly: plus, region: cell.region, active: a });
                }
                (true, false) | (false, true) => {
                    let mut a = cell.active;
                    a.push(has_plus);
                    next.push(Cell { poly: cell.poly, region: cell.region, active: a });
                }
                (false, false) => {}
            }
        }
        cells = next;
    }

    let mut gamma: Vec<AffinePiece> = Vec::new();
    let mut eta: Vec<AffinePiece> = Vec::new();
    let push_unique = |set: &mut Vec<AffinePiece>, p: AffinePiece| {
        let close = |x: f64, y: f64| (x - y).abs() <= PIECE_DEDUP_TOL * (1.0 + x.abs().max(y.abs()));
        let same = |q: &AffinePiece| close(q.b, p.b) && q.a.iter().zip(&p.a).all(|(x, y)| close(*x, *y));
        if !set.iter().any(same) {
            set.push(p);
        }
    };
    for cell in &cells {
        let mut e = AffinePiece { a: vec![0.0; nx], b: 0.0 };
        for (&(k, lam), on) in ramps.iter().zip(&cell.active) {
            if *on {
                e.a.iter_mut().zip(&planes[k].a).for_each(|(ea, a)| *ea += lam * a);
                e.b -= lam * planes[k].b;
            }
        }
        let r = &f.regions[cell.region];
        let gp = AffinePiece { a: r.k.row(0).iter().zip(&e.a).map(|(k, ea)| k + ea).collect(), b: r.g[0] + e.b };
        push_unique(&mut gamma, gp);
        push_unique(&mut eta, e);
    }
    if gamma.is_empty() {
        return Err(Error::EmptyPieces);
    }
    Ok((ConvexPwa::new(gamma)?, ConvexPwa::new(eta)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval(lo: f64, hi: f64) -> Polytope {
        Polytope::from_box(&[lo], &[hi]).unwrap()
    }

    fn scalar_region(p: Polytope, k: &[f64], g: f64) -> PwaRegion {
        PwaRegion::new(p, Matrix::from_row_major(1, k.len(), k.to_vec()).unwrap(), vec![g]).unwrap()
    }

    /// |x| on [−1, 1]
    fn abs_fn() -> PwaFunction {
        PwaFunction::new(vec![scalar_region(interval(-1.0, 0.0), &[-1.0], 0.0), scalar_region(interval(0.0, 1.0), &[1.0], 0.0)]).unwrap()
    }

    /// −|x| on [−1, 1], plus a concave kink at 0.5
    fn concave_fn() -> PwaFunction {
        PwaFunction::new(vec![
            scalar_region(interval(-1.0, 0.0), &[1.0], 0.0),
            scalar_region(interval(0.0, 0.5), &[-1.0], 0.0),
            scalar_region(interval(0.5, 1.0), &[-3.0], 1.0),
        ])
        .unwrap()
    }

    /// Independent piecewise evaluation of the 2-D tent `1 − |x₁| − |x₂|` on the
    /// four quadrants of [−1,1]².
    fn tent() -> PwaFunction {
        let mut regions = Vec::new();
        for (s1, s2) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
            let lo = [if s1 > 0.0 { 0.0 } else { -1.0 }, if s2 > 0.0 { 0.0 } else { -1.0 }];
            let hi = [lo[0] + 1.0, lo[1] + 1.0];
            regions.push(scalar_region(Polytope::from_box(&lo, &hi).unwrap(), &[-s1, -s2], 1.0));
        }
        PwaFunction::new(regions).unwrap()
    }

    #[test]
    fn identity_region() {
        let r = PwaRegion::new(Polytope::symmetric_box(&[1.0, 1.0]).unwrap(), Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        let f = PwaFunction::new(vec![r]).unwrap();
        assert_eq!(eval_pwa(&f, &[0.3, -0.2]).unwrap(), vec![0.3, -0.2]);
        assert!(matches!(eval_pwa(&f, &[2.0, 0.0]), Err(Error::OutsidePartition)));
    }

    #[test]
    fn lowest_region_wins_on_facets() {
        let f = abs_fn();
        assert_eq!(f.locate(&[0.0]), Some(0));
        assert_eq!(eval_pwa(&f, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn json_layout() {
        let s = serde_json::to_string(&abs_fn()).unwrap();
        assert!(s.starts_with("{\"regions\":[{\"Z\":"));
        assert!(s.contains("\"K\"") && s.contains("\"g\""));
        let back: PwaFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, abs_fn());
        assert!(serde_json::from_str::<PwaFunction>("{\"regions\":[]}").is_err());
        let c = ConvexPwa::new(vec![AffinePiece { a: vec![1.0], b: 0.5 }]).unwrap();
        assert_eq!(serde_json::to_string(&c).unwrap(), "[{\"a\":[1.0],\"b\":0.5}]");
    }

    #[test]
    fn normalization_round_trip() {
        let f = tent();
        let n = normalize_domain(&f, &Polytope::symmetric_box(&[1.0, 1.0]).unwrap(), &[(-1.0, 1.0)]).unwrap();
        assert_eq!(n.ax.apply(&[-1.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(n.au.apply(&[-1.0]).unwrap(), vec![0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x: Vector = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xh = n.ax.apply(&x).unwrap();
            assert!(xh.iter().all(|v| (0.0..=1.0).contains(v)));
            let uh = eval_pwa(&n.f_hat, &xh).unwrap();
            assert!(uh[0] >= -1e-12);
            let u = n.au.apply_inverse(&uh).unwrap();
            assert!((u[0] - eval_pwa(&f, &x).unwrap()[0]).abs() <= 1e-9);
        }
    }

    #[test]
    fn normalization_identity_and_constant() {
        let r = PwaRegion::new(Polytope::from_box(&[0.0], &[1.0]).unwrap(), Matrix::zeros(1, 1), vec![-1.0]).unwrap();
        let f = PwaFunction::new(vec![r]).unwrap();
        let n = normalize_domain(&f, &Polytope::from_box(&[0.0], &[1.0]).unwrap(), &[(-1.0, 1.0)]).unwrap();
        assert_eq!(n.ax, AffineTransform::identity(1));
        assert_eq!(eval_pwa(&n.f_hat, &[0.4]).unwrap(), vec![0.0]);
        let flat = Polytope::from_box(&[0.0], &[0.0]).unwrap();
        assert!(matches!(normalize_domain(&f, &flat, &[(-1.0, 1.0)]), Err(Error::NonInvertible(_))));
    }

    #[test]
    fn singular_transform_rejected() {
        assert!(matches!(AffineTransform::new(Matrix::zeros(2, 2), vec![0.0; 2]), Err(Error::NonInvertible(_))));
    }

    fn check_dc(f: &PwaFunction, samples: usize, seed: u64) -> (ConvexPwa, ConvexPwa) {
        let (gamma, eta) = dc_decompose(f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nx = f.n_x();
        let mut checked = 0;
        while checked < samples {
            let x: Vector = (0..nx).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let Ok(v) = eval_pwa(f, &x) else { continue };
            let d = gamma.value(&x) - eta.value(&x);
            assert!((d - v[0]).abs() <= 1e-7, "at {x:?}: {d} vs {}", v[0]);
            checked += 1;
        }
        (gamma, eta)
    }

    #[test]
    fn dc_of_affine_and_convex() {
        let aff = PwaFunction::new(vec![scalar_region(interval(-1.0, 1.0), &[2.0], 1.0)]).unwrap();
        let (g, e) = check_dc(&aff, 100, 1);
        assert_eq!((g.len(), e.len()), (1, 1));
        assert_eq!(e.pieces[0], AffinePiece { a: vec![0.0], b: 0.0 });
        let (_, e) = check_dc(&abs_fn(), 1000, 2);
        assert_eq!(e.len(), 1);
    }

    #[test]
    fn dc_of_concave_functions() {
        check_dc(&concave_fn(), 10_000, 3);
        // tent + 2·max(0,x₁) + 2·max(0,x₂) is 1 + x₁ + x₂ everywhere
        let (g, e) = check_dc(&tent(), 10_000, 4);
        assert_eq!((g.len(), e.len()), (1, 4));
    }

    #[test]
    fn dc_rejects_jumps() {
        let f = PwaFunction::new(vec![scalar_region(interval(-1.0, 0.0), &[0.0], 0.0), scalar_region(interval(0.0, 1.0), &[0.0], 1.0)]).unwrap();
        assert!(matches!(dc_decompose(&f), Err(Error::DiscontinuousInput(_))));
    }

    proptest::proptest! {
        #[test]
        fn convex_pwa_midpoint(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pieces = (0..rng.gen_range(1..6)).map(|_| AffinePiece { a: (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect(), b: rng.gen_range(-1.0..1.0) }).collect();
            let c = ConvexPwa::new(pieces).unwrap();
            let x: Vector = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let y: Vector = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let m: Vector = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            proptest::prop_assert!(c.value(&m) <= 0.5 * (c.value(&x) + c.value(&y)) + 1e-9);
        }
    }
}
