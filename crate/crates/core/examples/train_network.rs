//! Train a small ReLU network on oscillator MPC samples.

use deepmpc::dynamics::builtin_scenario;
use deepmpc::learn::{train_mlp, TrainConfig};
use deepmpc::mpc::{condense, generate_dataset};
use deepmpc::mpqp::{enumerate_explicit, EnumerationOptions};
use deepmpc::relunet::max_sampled_error;

fn main() -> deepmpc::Result<()> {
    let s = builtin_scenario("oscillator")?;
    let m = condense(&s)?;
    let (data, meta) = generate_dataset(&m, 2000, 1, &s.sample_box, &s.fingerprint())?;
    println!("{} samples from {} draws", data.len(), meta.draws);
    let mut cfg = TrainConfig::new(6, 3, 300, 7);
    cfg.learning_rate = 1e-2;
    cfg.final_learning_rate = Some(1e-4);
    let r = train_mlp(&data, &cfg)?;
    for (e, l) in r.loss_history.iter().enumerate().step_by(50) {
        println!("epoch {e:4}  mse {l:.3e}");
    }
    println!("final mse {:.3e}", r.final_mse);
    let law = enumerate_explicit(&m, &EnumerationOptions::default())?;
    let (err, _) = max_sampled_error(&law, |x| r.net.eval(x), &s.state_set, 10_000)?;
    println!("max error against the explicit law {err:.3e}");
    Ok(())
}
