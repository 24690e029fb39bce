//! One homodyne shot per qubit state; prints the conditional photon number
//! and quadrature every 0.5 time units.

use kerr_readout::hilbert::{Model, Qubit, SystemParams};
use kerr_readout::trajectory::{derive_seed, simulate_trajectory};

fn main() -> kerr_readout::Result<()> {
    let p = SystemParams::reference();
    let dt = 1e-3;
    for q in Qubit::BOTH {
        let rec = simulate_trajectory(&p, Model::Dispersive, q, 6.0, dt, derive_seed(7, q.label(), 0))?;
        println!("qubit {q:?}");
        for k in (0..rec.len()).step_by(500) {
            println!("  t = {:>4.1}  n = {:>7.3}  x = {:>7.3}", rec.time(k), rec.n_mean[k], rec.x_mean[k]);
        }
    }
    Ok(())
}
