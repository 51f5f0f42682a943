//! Statistical verification of an oscillator controller over five steps:
//! labeled initial states, ellipsoidal and SVM safe sets, and their metrics.

use deepmpc::dynamics::{builtin_scenario, Controller};
use deepmpc::mpc::condense;
use deepmpc::numerics::Vector;
use deepmpc::verify::{generate_labeled_sets, label_initial_states, verify, SetKind, SetSizes, VerifyParams};

/// A weak linear feedback.
struct Gain;

impl Controller for Gain {
    fn control(&self, x: &[f64]) -> deepmpc::Result<Vector> {
        Ok(vec![(-0.3 * (x[0] + x[1])).clamp(-1.0, 1.0)])
    }
}

fn main() -> deepmpc::Result<()> {
    let mut s = builtin_scenario("oscillator")?;
    s.k_end = 5;
    let sizes = SetSizes { g: 2000, t: 1000, v: 20000 };
    let sets = generate_labeled_sets(&Gain, &s, sizes, 3, "gain")?;
    let t_ref = label_initial_states(&condense(&s)?, &s, SetKind::Test, sizes.t, 3, "implicit")?;
    println!("fitting set: {} safe of {}", sets.g.n_positive(), sets.g.len());
    let out = verify(&sets, &t_ref, &VerifyParams::defaults(2))?;
    println!("E = {:?}", out.ellipsoid.e);
    println!("{} support vectors", out.svm.support_vectors.len());
    println!("{}", serde_json::to_string_pretty(&out.report)?);
    Ok(())
}
