//! Gain refitting for a fixed polyhedral partition, and projection of
//! candidate inputs onto the admissible set.

use crate::dynamics::LtiSystem;
use crate::error::{dim_check, Error, Result};
use crate::mpc::Dataset;
use crate::numerics::{least_squares, Matrix, Vector};
use crate::polytope::Polytope;
use crate::pwa::{PwaFunction, PwaRegion};
use crate::qp::{PreparedQp, QpStatus, DEFAULT_TOL};

/// `Σ ‖uᵢ − f(xᵢ)‖²` over the samples inside the partition.
pub fn pwa_fit_objective(f: &PwaFunction, data: &Dataset) -> f64 {
    data.points
        .iter()
        .filter_map(|(x, u)| f.locate(x).map(|r| (r, x, u)))
        .map(|(r, x, u)| f.regions()[r].eval(x).iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

/// Replaces each region's affine law by the least-squares fit to the
/// samples located in it. Regions with fewer than `n_x + 1` samples, or
/// whose samples do not determine an affine law, keep their gains.
pub fn fit_pwa_gains(partition: &PwaFunction, data: &Dataset) -> Result<PwaFunction> {
    let (nx, nu) = (partition.n_x(), partition.n_u());
    dim_check(data.n_x == nx && data.n_u == nu, || "dataset dimensions differ from the partition".into())?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); partition.n_regions()];
    for (i, (x, _)) in data.points.iter().enumerate() {
        if let Some(r) = partition.locate(x) {
            members[r].push(i);
        }
    }
    let mut regions = Vec::with_capacity(partition.n_regions());
    for (r, region) in partition.regions().iter().enumerate() {
        let idx = &members[r];
        if idx.len() < nx + 1 {
            log::warn!("region {r} holds {} samples; gains kept", idx.len());
            regions.push(region.clone());
            continue;
        }
        let mut design = Matrix::zeros(idx.len(), nx + 1);
        for (row, &i) in idx.iter().enumerate() {
            design.row_mut(row)[..nx].copy_from_slice(&data.points[i].0);
            design[(row, nx)] = 1.0;
        }
        let mut k = Matrix::zeros(nu, nx);
        let mut g = vec![0.0; nu];
        let mut ok = true;
        for out in 0..nu {
            let rhs: Vector = idx.iter().map(|&i| data.points[i].1[out]).collect();
            match least_squares(&design, &rhs) {
                Ok(c) => {
                    k.row_mut(out).copy_from_slice(&c[..nx]);
                    g[out] = c[nx];
                }
                Err(Error::RankDeficient { .. }) => ok = false,
                Err(e) => return Err(e),
            }
        }
        if ok {
            regions.push(PwaRegion::new(region.polytope(), k, g)?);
        } else {
            log::warn!("region {r} samples are degenerate; gains kept");
            regions.push(region.clone());
        }
    }
    PwaFunction::new(regions)
}

/// Closest input to `u_raw` in `U` (and, with `cinv`, keeping the successor
/// state in `cinv`). A box `U` without `cinv` is a componentwise clamp.
pub fn project_feasible(u_raw: &[f64], x: &[f64], sys: &LtiSystem, u_set: &Polytope, cinv: Option<&Polytope>) -> Result<Vector> {
    let nu = sys.n_u();
    dim_check(u_raw.len() == nu && x.len() == sys.n_x(), || "projection dimensions".into())?;
    if cinv.is_none() {
        if let Some((lo, hi)) = u_set.as_box() {
            return Ok(u_raw.iter().zip(lo.iter().zip(&hi)).map(|(u, (l, h))| u.clamp(*l, *h)).collect());
        }
    }
    project_qp(u_raw, x, sys, u_set, cinv)
}

/// The QP route of [`project_feasible`], also used for boxes when asked.
pub fn project_qp(u_raw: &[f64], x: &[f64], sys: &LtiSystem, u_set: &Polytope, cinv: Option<&Polytope>) -> Result<Vector> {
    let nu = sys.n_u();
    let mut a = u_set.a.clone();
    let mut b = u_set.b.clone();
    if let Some(c) = cinv {
        if !c.contains(x, 1e-9) {
            return Err(Error::ProjectionInfeasible);
        }
        let ax = sys.a.matvec(x)?;
        let cax = c.a.matvec(&ax)?;
        a = a.vstack(&c.a.matmul(&sys.b)?)?;
        b.extend(c.b.iter().zip(&cax).map(|(ci, v)| ci - v));
    }
    let q: Vector = u_raw.iter().map(|v| -2.0 * v).collect();
    let sol = PreparedQp::new(&Matrix::identity(nu))?.solve(&q, &a, &b, DEFAULT_TOL, None)?;
    match sol.status {
        QpStatus::Optimal => Ok(sol.z),
        QpStatus::Infeasible => Err(Error::ProjectionInfeasible),
        QpStatus::MaxIter => Err(Error::MaxIter(sol.iterations)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin_scenario;
    use crate::mpc::{condense, generate_dataset};
    use crate::mpqp::{enumerate_explicit, EnumerationOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_sys() -> LtiSystem {
        LtiSystem::new(Matrix::identity(1), Matrix::identity(1)).unwrap()
    }

    #[test]
    fn clamp_examples() {
        let u = Polytope::symmetric_box(&[0.5]).unwrap();
        assert_eq!(project_feasible(&[0.7], &[0.0], &scalar_sys(), &u, None).unwrap(), vec![0.5]);
        assert_eq!(project_feasible(&[0.2], &[0.0], &scalar_sys(), &u, None).unwrap(), vec![0.2]);
    }

    #[test]
    fn clamp_and_qp_agree() {
        let sys = LtiSystem::new(Matrix::identity(2), Matrix::identity(2)).unwrap();
        let u = Polytope::from_box(&[-1.0, -0.2], &[0.5, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let raw = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let a = project_feasible(&raw, &[0.0, 0.0], &sys, &u, None).unwrap();
            let b = project_qp(&raw, &[0.0, 0.0], &sys, &u, None).unwrap();
            assert!((a[0] - b[0]).abs() <= 1e-8 && (a[1] - b[1]).abs() <= 1e-8);
        }
    }

    #[test]
    fn simplex_projection_matches_grid() {
        let sys = LtiSystem::new(Matrix::identity(2), Matrix::identity(2)).unwrap();
        let a = Matrix::from_rows(&[[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]).unwrap();
        let u = Polytope::new(a, vec![1.0, 0.0, 0.0]).unwrap();
        let raw = [1.2, 0.9];
        let p = project_feasible(&raw, &[0.0, 0.0], &sys, &u, None).unwrap();
        assert!(u.contains(&p, 1e-8));
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=1000 {
            for j in 0..=(1000 - i) {
                let (x, y) = (i as f64 * 1e-3, j as f64 * 1e-3);
                let d = (x - raw[0]).powi(2) + (y - raw[1]).powi(2);
                if d < best.0 {
                    best = (d, x, y);
                }
            }
        }
        let dp = (p[0] - raw[0]).powi(2) + (p[1] - raw[1]).powi(2);
        assert!(dp <= best.0 + 1e-12);
        assert!((p[0] - best.1).abs() <= 1e-3 && (p[1] - best.2).abs() <= 1e-3);
    }

    #[test]
    fn invariant_set_restricts_input() {
        let sys = scalar_sys();
        let u = Polytope::symmetric_box(&[1.0]).unwrap();
        let cinv = Polytope::symmetric_box(&[1.0]).unwrap();
        // x = 0.8: successor 0.8 + u ≤ 1 → u ≤ 0.2
        let p = project_feasible(&[0.9], &[0.8], &sys, &u, Some(&cinv)).unwrap();
        assert!((p[0] - 0.2).abs() <= 1e-8);
        assert!(matches!(project_feasible(&[0.0], &[3.0], &sys, &u, Some(&cinv)), Err(Error::ProjectionInfeasible)));
    }

    #[test]
    fn refit_recovers_own_law() {
        let s = builtin_scenario("oscillator").unwrap();
        let m = condense(&s).unwrap();
        let law = enumerate_explicit(&m, &EnumerationOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points = (0..3000)
            .filter_map(|_| {
                let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                crate::pwa::eval_pwa(&law, &x).ok().map(|u| (x, u))
            })
            .collect();
        let data = Dataset { n_x: 2, n_u: 1, points, seed: 0, fingerprint: String::new() };
        let refit = fit_pwa_gains(&law, &data).unwrap();
        for (a, b) in law.regions().iter().zip(refit.regions()) {
            assert!(a.k.sub(&b.k).unwrap().max_abs() <= 1e-7);
            assert!((a.g[0] - b.g[0]).abs() <= 1e-7);
        }
    }

    #[test]
    fn refit_single_region_is_global_fit() {
        let r = PwaRegion::new(Polytope::symmetric_box(&[1.0]).unwrap(), Matrix::zeros(1, 1), vec![0.0]).unwrap();
        let f = PwaFunction::new(vec![r]).unwrap();
        let points = vec![(vec![-1.0], vec![0.0]), (vec![0.0], vec![1.0]), (vec![1.0], vec![1.0])];
        let data = Dataset { n_x: 1, n_u: 1, points, seed: 0, fingerprint: String::new() };
        let refit = fit_pwa_gains(&f, &data).unwrap();
        // least squares line through (−1,0), (0,1), (1,1): slope 1/2, offset 2/3
        assert!((refit.regions()[0].k[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((refit.regions()[0].g[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn refit_lowers_objective_against_longer_horizon() {
        let s = builtin_scenario("oscillator").unwrap();
        let law = enumerate_explicit(&condense(&s).unwrap(), &EnumerationOptions::default()).unwrap();
        let long = condense(&s.with_horizon(3)).unwrap();
        let (data, _) = generate_dataset(&long, 800, 5, &s.sample_box, "").unwrap();
        let refit = fit_pwa_gains(&law, &data).unwrap();
        assert!(pwa_fit_objective(&refit, &data) <= pwa_fit_objective(&law, &data));
    }

    #[test]
    fn underpopulated_region_keeps_gains() {
        let r = PwaRegion::new(Polytope::symmetric_box(&[1.0]).unwrap(), Matrix::from_rows(&[[2.0]]).unwrap(), vec![0.5]).unwrap();
        let f = PwaFunction::new(vec![r]).unwrap();
        let data = Dataset { n_x: 1, n_u: 1, points: vec![(vec![0.1], vec![0.0])], seed: 0, fingerprint: String::new() };
        assert_eq!(fit_pwa_gains(&f, &data).unwrap(), f);
    }
}
