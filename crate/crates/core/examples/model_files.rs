//! Saves a trained posterior, reloads it and shows how a damaged file is
//! rejected.

use bayesmal::data::{self, SynthConfig};
use bayesmal::inference::{train_vi, TrainConfig};
use bayesmal::model_io::{decode_posterior, encode_posterior};
use bayesmal::{load_posterior, save_posterior, MlpArchitecture};

fn main() -> bayesmal::Result<()> {
    let d = data::synth_generate(&SynthConfig {
        dim: 8,
        n_benign: 50,
        n_malware: 50,
        benign_probs: vec![0.7, 0.7, 0.1, 0.1, 0.2, 0.2, 0.2, 0.2],
        malware_probs: vec![0.1, 0.1, 0.7, 0.7, 0.2, 0.2, 0.2, 0.2],
        seed: 4,
    })?;
    let arch = MlpArchitecture::new(8, vec![6])?;
    let post = train_vi(&d, &arch, &TrainConfig { epochs: 5, ..TrainConfig::default() })?;

    let path = std::env::temp_dir().join("bayesmal-example-vi.bmal");
    save_posterior(&post, &path)?;
    let back = load_posterior(&path)?;
    assert_eq!(back, post);
    println!("{} bytes written, reloaded {} posterior", encode_posterior(&post).len(), back.method());

    let mut bytes = std::fs::read(&path).map_err(|e| bayesmal::Error::Io {
        context: format!("reading {}", path.display()),
        source: e,
    })?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    match decode_posterior(&bytes) {
        Err(e) => println!("corrupted copy rejected: {e}"),
        Ok(_) => unreachable!("checksum should catch a flipped bit"),
    }
    Ok(())
}
