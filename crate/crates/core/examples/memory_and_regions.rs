//! Memory footprints of networks and polynomials, and the lower bound on
//! the number of linear regions of a deep ReLU network.

use deepmpc::learn::{n_monomials, Polynomial};
use deepmpc::learn::memory_footprint_poly;
use deepmpc::relunet::{memory_footprint_net, region_lower_bound, ReluNetwork};

fn main() -> deepmpc::Result<()> {
    println!("network      params   kB");
    for (m, l) in [(6, 6), (43, 1), (10, 6), (120, 1)] {
        let net = ReluNetwork::zeros(4, 1, m, l)?;
        let bytes = memory_footprint_net(&net, 8);
        println!("N_{{{m},{l}}}   {:8} {:6.2}", net.param_count(), bytes as f64 / 1024.0);
    }
    let p = Polynomial::new(3, 4, vec![vec![0.0; n_monomials(4, 3)]])?;
    println!("P_3          {:8} {:6.2}", p.coefficient_count(), memory_footprint_poly(&p, 8) as f64 / 1024.0);
    println!();
    println!("regions of a width-10 network on R^2:");
    for l in [1, 2, 3, 5, 10, 20] {
        println!("  L = {l:2}: at least {}", region_lower_bound(2, 10, l)?);
    }
    Ok(())
}
