//! RBF support vector classifier on a noisy XOR pattern.

use kerr_readout::learner::{repeated_cv, train_svc, KernelGamma, SvcParams};
use kerr_readout::signal::FeatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> kerr_readout::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..200 {
        let x: f64 = rng.random_range(-1.0..1.0);
        let y: f64 = rng.random_range(-1.0..1.0);
        rows.push(vec![x, y]);
        labels.push(u8::from((x > 0.0) != (y > 0.0)));
    }
    let data = FeatureMatrix::from_rows(&rows, labels)?;
    let params = SvcParams::new(10.0, KernelGamma::Fixed(2.0));
    let model = train_svc(&data, &params)?;
    println!("support vectors: {} of {}", model.n_support(), data.n_samples());
    println!("training accuracy: {:.3}", model.accuracy(&data)?);
    for x in [[0.5, 0.5], [-0.5, 0.5], [0.5, -0.5], [-0.5, -0.5]] {
        println!("predict {x:?} -> {}", kerr_readout::learner::predict(&model, &x)?);
    }
    let cv = repeated_cv(&data, 5, 5, &params, 1)?;
    println!("5x5 CV error: {:.3} (std {:.3})", cv.error, cv.std_accuracy);
    Ok(())
}
