//! Uses uncertainty to separate adversarial malware from clean benign
//! samples and prints ROC AUCs for a point estimate and an SVGD posterior.

use bayesmal::attacks::{batch_attack, true_positive_malware, AttackFamily, AttackSpec};
use bayesmal::data::{self, SynthConfig};
use bayesmal::eval::roc_auc;
use bayesmal::inference::{train_map, train_svgd, TrainConfig};
use bayesmal::uncertainty::score_dataset;
use bayesmal::{Label, MlpArchitecture};

fn main() -> bayesmal::Result<()> {
    let mut benign = vec![0.01; 64];
    let mut malware = vec![0.01; 64];
    benign[..4].fill(0.3);
    malware[16..32].fill(0.4);
    let d = data::synth_generate(&SynthConfig {
        dim: 64,
        n_benign: 800,
        n_malware: 200,
        benign_probs: benign,
        malware_probs: malware,
        seed: 11,
    })?;
    let (train, test) = data::split(&d, 0.7, 0)?;
    let arch = MlpArchitecture::new(64, vec![32])?;
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 32,
        learning_rate: 0.1,
        n_particles: 8,
        n_inference: 8,
        ..TrainConfig::default()
    };
    let map = train_map(&train, &arch, &cfg)?;
    let svgd = train_svgd(&train, &arch, &cfg)?;

    let targets = true_positive_malware(&map, &test, 1, 0)?;
    let adv = batch_attack(&map, &targets, &AttackSpec::new(AttackFamily::PgdL1, 8.0))?.adversarial;
    let benign_test = test.filter_label(Label::Benign);

    for post in [&map, &svgd] {
        let neg = score_dataset(post, &benign_test, cfg.n_inference, 0)?;
        let pos = score_dataset(post, &adv, cfg.n_inference, 0)?;
        let pe = roc_auc(&neg.pe(), &pos.pe())?.auc;
        let mi = roc_auc(&neg.mi(), &pos.mi())?.auc;
        println!("{:<5} PE-AUC {pe:.3}  MI-AUC {mi:.3}", post.method());
    }
    Ok(())
}
