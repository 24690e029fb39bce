//! Readout error against measurement time for TAB and RIFE features on a
//! reduced dataset.
//!
//! cargo run --release --example readout_vs_time -- [n_per_class]

use kerr_readout::orchestrator::{classify_dataset, generate, ExperimentConfig};

fn main() -> kerr_readout::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let mut cfg = ExperimentConfig {
        n_per_class: n,
        t_max: 6.0,
        ..Default::default()
    };
    cfg.features.t_f = vec![1.0, 2.0, 4.0, 6.0];
    cfg.learner.reps = 5;
    let ds = generate(&cfg)?;
    println!("classifier,t_f,tau,error,std");
    for (row, _) in classify_dataset(&ds, &cfg)? {
        println!("{},{},{},{:.4},{:.4}", row.classifier, row.t_f, row.tau, row.error, row.std);
    }
    Ok(())
}
