//! Approximate-Bayesian feed-forward malware classifiers with epistemic
//! uncertainty scoring, feature-space evasion attacks and detection metrics.
//!
//! The crate trains five posterior approximations over the same network
//! family (a point estimate, Monte Carlo dropout, mean-field variational
//! inference, deep ensembles and Stein variational gradient descent), scores
//! inputs by predictive entropy and mutual information, and measures how well
//! those scores separate adversarial or drifted malware from clean benign
//! samples.
//!
//! ```no_run
//! use bayesmal::{data, inference, network::MlpArchitecture, uncertainty};
//!
//! let d = data::load_dataset("train.svm", data::Profile::Binary)?;
//! let arch = MlpArchitecture::new(d.dim(), vec![64, 32])?;
//! let cfg = inference::TrainConfig::default();
//! let post = inference::train_svgd(&d, &arch, &cfg)?;
//! let scores = uncertainty::score_dataset(&post, &d, 10, 0)?;
//! println!("{}", scores.to_csv());
//! # Ok::<(), bayesmal::Error>(())
//! ```

pub mod attacks;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod inference;
pub mod model_io;
pub mod network;
pub mod rng;
pub mod uncertainty;

pub use attacks::{AttackFamily, AttackSpec, PerturbationResult};
pub use data::{Dataset, FeatureVector, Label, Profile};
pub use error::{Error, Result};
pub use eval::{DetectionReport, DiversityReport, DriftReport, RocCurve};
pub use experiment::ExperimentConfig;
pub use inference::{Method, Posterior, TrainConfig};
pub use model_io::{load_posterior, save_posterior, ModelFileError};
pub use network::{MlpArchitecture, ParameterParticle};
pub use uncertainty::{PredictiveSample, UncertaintyScores};
