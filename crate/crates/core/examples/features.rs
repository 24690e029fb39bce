//! TAB and RIFE feature matrices from a small simulated dataset.

use kerr_readout::hilbert::{Model, SystemParams};
use kerr_readout::signal::{default_stride, rife_features, tab_features, Channel};
use kerr_readout::trajectory::generate_dataset;

fn main() -> kerr_readout::Result<()> {
    let ds = generate_dataset(&SystemParams::reference(), Model::Dispersive, 20, 4.0, 1e-3, 3)?;
    let t_f = 4.0;
    let tab = tab_features(&ds, Channel::XMean, t_f, 1e-1, default_stride(ds.dt, t_f))?;
    let rife = rife_features(&ds, Channel::XMean, t_f, 1e-1, 10, 5)?;
    for fm in [&tab, &rife] {
        println!("{}: {} samples x {} features", fm.spec().kind.name(), fm.n_samples(), fm.n_features());
        let head: Vec<String> = fm.row(0).iter().take(6).map(|v| format!("{v:.3}")).collect();
        println!("  first row: {} ...", head.join(" "));
    }
    Ok(())
}
