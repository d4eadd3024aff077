//! Predictive entropy and mutual information for hand-built predictive
//! samples and for a trained ensemble.

use bayesmal::data::{self, SynthConfig};
use bayesmal::inference::{train_ensemble, TrainConfig};
use bayesmal::uncertainty::{mutual_information, predictive_entropy, score_dataset, PredictiveSample};
use bayesmal::MlpArchitecture;

fn main() -> bayesmal::Result<()> {
    let agree = PredictiveSample::new(vec![[0.5, 0.5]; 4])?;
    let disagree = PredictiveSample::new(vec![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])?;
    for (name, s) in [("agreeing coin flips", &agree), ("confident disagreement", &disagree)] {
        println!(
            "{name:<24} PE {:.4}  MI {:.4}",
            predictive_entropy(s),
            mutual_information(s)
        );
    }

    let mut benign = vec![0.05; 16];
    let mut malware = vec![0.05; 16];
    benign[..4].fill(0.6);
    malware[4..8].fill(0.6);
    let d = data::synth_generate(&SynthConfig {
        dim: 16,
        n_benign: 120,
        n_malware: 120,
        benign_probs: benign,
        malware_probs: malware,
        seed: 1,
    })?;
    let arch = MlpArchitecture::new(16, vec![8])?;
    let post = train_ensemble(&d, &arch, &TrainConfig { epochs: 60, batch_size: 16, learning_rate: 0.1, n_particles: 5, ..TrainConfig::default() })?;
    let scores = score_dataset(&post, &d, 5, 0)?;
    for line in scores.to_csv().lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
