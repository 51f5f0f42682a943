//! The oscillating-masses benchmark end to end: trajectory data, a trained
//! N_{6,6}, a cubic polynomial, closed-loop comparison and verification.
//!
//! Usage: `cargo run --release --example om_benchmark [config] [out-dir]`

use std::path::PathBuf;

use deepmpc::cli::{cmd_report, render_markdown, run_pipeline, ExperimentConfig};

fn main() -> deepmpc::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let args: Vec<String> = std::env::args().collect();
    let config = args.get(1).map(PathBuf::from).unwrap_or_else(|| root.join("configs/oscillating_masses.json"));
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(out) = args.get(2) {
        cfg.out = PathBuf::from(out);
    }
    run_pipeline(&cfg, false)?;
    print!("{}", render_markdown(&cmd_report(&cfg)?));
    Ok(())
}
