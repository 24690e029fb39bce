//! Readout error over a small (epsilon, omega) grid around the critical
//! detuning.

use kerr_readout::hilbert::critical_frequency;
use kerr_readout::orchestrator::{scan, ExperimentConfig};

fn main() -> kerr_readout::Result<()> {
    let mut cfg = ExperimentConfig::default();
    let w_c = critical_frequency(cfg.params.epsilon, cfg.params.gamma)?;
    cfg.scan.epsilon = vec![1.4, 1.67];
    cfg.scan.omega = vec![w_c - 0.6, w_c, w_c + 0.6];
    cfg.scan.n_per_class = 50;
    cfg.learner.reps = 3;
    for r in scan(&cfg)? {
        match r.outcome {
            Ok((err, std)) => println!(
                "eps {:.2} omega {:.3}: error {err:.3} +- {std:.3}{}",
                r.epsilon,
                r.omega,
                if r.best { "  <- best" } else { "" }
            ),
            Err(msg) => println!("eps {:.2} omega {:.3}: failed ({msg})", r.epsilon, r.omega),
        }
    }
    Ok(())
}
