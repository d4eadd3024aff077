//! Trains every posterior approximation on the same data and reports test
//! accuracy and stored network counts.

use bayesmal::data::{self, SynthConfig};
use bayesmal::inference::{accuracy, fit, Method, TrainConfig};
use bayesmal::MlpArchitecture;

fn main() -> bayesmal::Result<()> {
    let mut benign = vec![0.03; 24];
    let mut malware = vec![0.03; 24];
    benign[..4].fill(0.5);
    malware[8..16].fill(0.4);
    let d = data::synth_generate(&SynthConfig {
        dim: 24,
        n_benign: 300,
        n_malware: 150,
        benign_probs: benign,
        malware_probs: malware,
        seed: 3,
    })?;
    let (train, test) = data::split(&d, 0.7, 0)?;
    let arch = MlpArchitecture::new(24, vec![16, 8])?;
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 32,
        learning_rate: 0.1,
        n_particles: 5,
        n_inference: 5,
        ..TrainConfig::default()
    };
    for m in Method::ALL {
        let fitted = fit(m, &train, &arch, &cfg)?;
        let acc = accuracy(&fitted.posterior, &test, cfg.n_inference, 0)?;
        println!(
            "{m:<9} test accuracy {acc:.3}  final loss {:.4}  stored networks {}",
            fitted.epoch_losses.last().copied().unwrap_or(f64::NAN),
            fitted.posterior.particles().len()
        );
    }
    Ok(())
}
