//! Runs each evasion attack family against a trained network and reports
//! evasion rates and perturbation sizes.

use bayesmal::attacks::{batch_attack, true_positive_malware, AttackFamily, AttackSpec};
use bayesmal::data::{self, SynthConfig};
use bayesmal::inference::{train_map, TrainConfig};
use bayesmal::MlpArchitecture;

fn main() -> bayesmal::Result<()> {
    let mut benign = vec![0.02; 40];
    let mut malware = vec![0.02; 40];
    benign[..6].fill(0.4);
    malware[20..30].fill(0.5);
    let d = data::synth_generate(&SynthConfig {
        dim: 40,
        n_benign: 300,
        n_malware: 150,
        benign_probs: benign,
        malware_probs: malware,
        seed: 5,
    })?;
    let (train, test) = data::split(&d, 0.7, 0)?;
    let arch = MlpArchitecture::new(40, vec![16])?;
    let post = train_map(&train, &arch, &TrainConfig { epochs: 15, ..TrainConfig::default() })?;
    let targets = true_positive_malware(&post, &test, 1, 0)?;
    println!("{} correctly detected malware samples", targets.len());

    for (family, eps) in [
        (AttackFamily::PgdL1, 5.0),
        (AttackFamily::Bca, 5.0),
        (AttackFamily::Grosse, 5.0),
        (AttackFamily::UnboundedGradient, 20.0),
    ] {
        let ba = batch_attack(&post, &targets, &AttackSpec::new(family, eps))?;
        let mean_l1 = ba.results.iter().map(|r| r.l1_cost).sum::<f64>() / ba.results.len().max(1) as f64;
        println!(
            "{:<20} eps {eps:>4}: evaded {}/{}  mean L1 {mean_l1:.2}",
            family.tag(),
            ba.summary.evaded,
            ba.summary.attempted
        );
    }
    Ok(())
}
