//! Split the normalized oscillator law into a difference of two convex
//! max-of-affine functions and check it on a grid.

use deepmpc::dynamics::builtin_scenario;
use deepmpc::mpc::condense;
use deepmpc::mpqp::{enumerate_explicit, EnumerationOptions};
use deepmpc::pwa::{dc_decompose, eval_pwa, normalize_domain};
use deepmpc::relunet::unit_cube_grid;

fn main() -> deepmpc::Result<()> {
    let s = builtin_scenario("oscillator")?;
    let law = enumerate_explicit(&condense(&s)?, &EnumerationOptions::default())?;
    let norm = normalize_domain(&law, &s.state_set, &[(-1.0, 1.0)])?;
    let (gamma, eta) = dc_decompose(&norm.f_hat)?;
    println!("gamma: {} pieces", gamma.len());
    for p in &gamma.pieces {
        println!("  {:+.4?} · x {:+.4}", p.a, p.b);
    }
    println!("eta: {} pieces", eta.len());
    for p in &eta.pieces {
        println!("  {:+.4?} · x {:+.4}", p.a, p.b);
    }
    let mut worst: f64 = 0.0;
    for x in unit_cube_grid(2000, 2)? {
        if let Ok(u) = eval_pwa(&norm.f_hat, &x) {
            worst = worst.max((u[0] - (gamma.value(&x) - eta.value(&x))).abs());
        }
    }
    println!("max |f - (gamma - eta)| = {worst:e}");
    Ok(())
}
