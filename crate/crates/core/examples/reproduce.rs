//! Runs a full experiment from a config file and writes every report.
//!
//! ```text
//! cargo run --release --example reproduce -- configs/reference.toml out/
//! ```

use std::path::PathBuf;

use bayesmal::experiment::{self, ExperimentConfig};

fn main() -> bayesmal::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map(PathBuf::from).unwrap_or_else(|| "configs/reference.toml".into());
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| "out".into());

    let cfg = ExperimentConfig::load(&config)?;
    let exp = experiment::run(&cfg)?;
    let written = experiment::write_outputs(&exp, &out)?;
    print!("{}", exp.report.render());
    if let Some(d) = &exp.drift {
        println!("drift_flag {}", d.drift_flag);
    }
    println!("{} files written to {}", written.len(), out.display());
    Ok(())
}
