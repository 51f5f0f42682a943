//! Polynomial and refitted piecewise-affine approximations of the
//! oscillating-masses MPC.

use deepmpc::dynamics::builtin_scenario;
use deepmpc::learn::{fit_polynomial, fit_pwa_gains, memory_footprint_poly, pwa_fit_objective};
use deepmpc::mpc::{condense, generate_dataset};
use deepmpc::mpqp::{enumerate_explicit, memory_footprint_pwa, EnumerationOptions, DEFAULT_DEDUP_TOL};

fn main() -> deepmpc::Result<()> {
    let s = builtin_scenario("oscillating_masses")?;
    let (data, _) = generate_dataset(&condense(&s)?, 3000, 1, &s.sample_box, "")?;
    for p in 1..=3 {
        let poly = fit_polynomial(&data, p)?;
        let err: f64 = data.points.iter().map(|(x, u)| (poly.eval(x).unwrap()[0] - u[0]).powi(2)).sum::<f64>() / data.len() as f64;
        println!("P_{p}: mse {err:.3e}, {} B", memory_footprint_poly(&poly, 8));
    }
    for n in 1..=2 {
        let partition = enumerate_explicit(&condense(&s.with_horizon(n))?, &EnumerationOptions::default())?;
        let refit = fit_pwa_gains(&partition, &data)?;
        println!(
            "L_{n}: {} regions, fit objective {:.3e} -> {:.3e}, {} B",
            partition.n_regions(),
            pwa_fit_objective(&partition, &data),
            pwa_fit_objective(&refit, &data),
            memory_footprint_pwa(&refit, 8, DEFAULT_DEDUP_TOL).bytes
        );
    }
    Ok(())
}
