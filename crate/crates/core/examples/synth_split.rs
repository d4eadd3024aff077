//! Generates a synthetic binary dataset, splits it stratified and writes
//! both halves in the sparse text format.

use bayesmal::data::{self, SynthConfig};
use bayesmal::{Label, Profile};

fn main() -> bayesmal::Result<()> {
    let dim = 32;
    let mut benign = vec![0.02; dim];
    let mut malware = vec![0.02; dim];
    benign[..6].fill(0.4);
    malware[16..24].fill(0.5);
    let full = data::synth_generate(&SynthConfig {
        dim,
        n_benign: 400,
        n_malware: 100,
        benign_probs: benign,
        malware_probs: malware,
        seed: 7,
    })?;
    let (train, test) = data::split(&full, 0.7, 1)?;
    for (name, d) in [("train", &train), ("test", &test)] {
        println!(
            "{name}: {} samples, {} benign / {} malware",
            d.len(),
            d.count(Label::Benign),
            d.count(Label::Malware)
        );
    }

    let dir = std::env::temp_dir().join("bayesmal-example");
    let path = dir.join("train.svm");
    std::fs::create_dir_all(&dir).ok();
    train.save(&path)?;
    let back = data::load_dataset(&path, Profile::Binary)?;
    assert_eq!(back.samples(), train.samples());
    println!("round-tripped {}", path.display());
    Ok(())
}
