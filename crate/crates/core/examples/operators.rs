//! Truncated operators, the reference parameters and the critical pump
//! detuning.

use kerr_readout::hilbert::{critical_frequency, Model, OpenSystem, Qubit, Space, SystemParams};
use kerr_readout::master::{expect, DensityMatrix};

fn main() -> kerr_readout::Result<()> {
    let p = SystemParams::reference();
    println!("reference point: {p:?}");
    println!("critical omega for eps = {}: {:.5}", p.epsilon, critical_frequency(p.epsilon, p.gamma)?);

    let space = Space::resonator(6);
    let a = space.annihilation()?;
    let n = space.number()?;
    // a|3> = sqrt(3)|2>
    println!("<2|a|3> = {:.6}", a.matrix()[(2, 3)].re);
    for k in 0..4 {
        let rho = DensityMatrix::basis(space.dim(), k);
        println!("<{k}|n|{k}> = {}", expect(&n, &rho)?.re);
    }

    for model in [Model::Dispersive, Model::Full] {
        let sys = OpenSystem::for_model(&p, model, Qubit::Up)?;
        println!("{model}: dim {}, initial index for |up> {}", sys.dim(), sys.initial_index(Qubit::Up));
    }
    Ok(())
}
