//! Build the exact ReLU representation of the oscillator law, no training.

use deepmpc::dynamics::builtin_scenario;
use deepmpc::mpc::condense;
use deepmpc::mpqp::{enumerate_explicit, EnumerationOptions};
use deepmpc::relunet::{exact_mpc_network, max_sampled_error, memory_footprint_net};

fn main() -> deepmpc::Result<()> {
    let s = builtin_scenario("oscillator")?;
    let law = enumerate_explicit(&condense(&s)?, &EnumerationOptions::default())?;
    let exact = exact_mpc_network(&law, &s.state_set, &[(-1.0, 1.0)])?;
    for (i, (g, e)) in exact.pairs.iter().enumerate() {
        println!(
            "output {i}: gamma width {} depth {} ({} B), eta width {} depth {} ({} B)",
            g.width(),
            g.depth(),
            memory_footprint_net(g, 8),
            e.width(),
            e.depth(),
            memory_footprint_net(e, 8)
        );
    }
    let (err, n) = max_sampled_error(&law, |x| exact.eval(x), &s.state_set, 10_000)?;
    println!("e_prox = {err:e} over {n} points");
    Ok(())
}
