//! Critical regions of the oscillator MPC and the storage of its explicit law.

use deepmpc::dynamics::builtin_scenario;
use deepmpc::mpc::condense;
use deepmpc::mpqp::{enumerate_regions, explicit_law, memory_footprint_pwa, EnumerationOptions, DEFAULT_DEDUP_TOL};
use deepmpc::pwa::eval_pwa;

fn main() -> deepmpc::Result<()> {
    let s = builtin_scenario("oscillator")?;
    let m = condense(&s)?;
    let regions = enumerate_regions(&m, &EnumerationOptions::default())?;
    for r in &regions {
        println!(
            "active {:?}  u = {:+.4} x1 {:+.4} x2 {:+.4}  center {:+.3?}",
            r.active_set, r.k[(0, 0)], r.k[(0, 1)], r.g[0], r.center
        );
    }
    let law = explicit_law(&m, &regions)?;
    println!("{} regions", law.n_regions());
    let x = [0.95, 0.45];
    println!("u({x:?}) explicit {:?}, implicit {:?}", eval_pwa(&law, &x)?, m.mpc_control(&x)?);
    let mem = memory_footprint_pwa(&law, 8, DEFAULT_DEDUP_TOL);
    println!("n_h = {}, n_f = {}, {} bytes", mem.n_h, mem.n_f, mem.bytes);
    Ok(())
}
