//! Master-equation photon number for both qubit states at the reference
//! point, printed once per unit time.

use kerr_readout::hilbert::Qubit;
use kerr_readout::orchestrator::{averaged_dynamics, ExperimentConfig};

fn main() -> kerr_readout::Result<()> {
    let cfg = ExperimentConfig {
        output_stride: 1000,
        ..Default::default()
    };
    let avg = averaged_dynamics(&cfg)?;
    println!("{:>5} {:>10} {:>10}", "t", "n_down", "n_up");
    for (i, t) in avg.times.iter().enumerate() {
        println!(
            "{t:>5.1} {:>10.4} {:>10.4}",
            avg.n_mean[Qubit::Down.label() as usize][i],
            avg.n_mean[Qubit::Up.label() as usize][i]
        );
    }
    Ok(())
}
