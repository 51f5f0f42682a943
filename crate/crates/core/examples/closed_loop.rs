//! Implicit MPC in closed loop on the oscillating masses.

use deepmpc::dynamics::{builtin_scenario, rollout, settling_time};
use deepmpc::mpc::condense;

fn main() -> deepmpc::Result<()> {
    let s = builtin_scenario("oscillating_masses")?;
    let m = condense(&s)?;
    println!("N = {}, {} inequality rows in the condensed QP", s.horizon, m.n_constraints());
    let x0 = [1.0, -2.0, 0.5, 1.0];
    let t = rollout(&s.system, &m, &x0, s.k_end)?;
    for (k, (x, u)) in t.states.iter().zip(&t.inputs).enumerate().step_by(10) {
        println!("k={k:3}  x={:+.3?}  u={:+.4}", x, u[0]);
    }
    match settling_time(&t, s.settle_tol) {
        Some(k) => println!("settled at step {k}"),
        None => println!("not settled within {} steps", s.k_end),
    }
    Ok(())
}
