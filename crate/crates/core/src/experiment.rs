//! Declarative experiments: data, training, attacks, detection, diversity
//! and drift, with every seed derived from one global seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{batch_attack, true_positive_malware, AttackFamily, AttackSpec, AttackSummary};
use crate::data::{self, Dataset, DriftConfig, Label, NovelBlock, Profile, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{
    classification_metrics, diversity, drift_report, roc_auc, CleanPerformance, DetectionCell,
    DetectionReport, DiversityEntry, DiversityReport, DriftReport, RocCurve, ScoreKind,
};
use crate::inference::{fit, Method, Posterior, TrainConfig};
use crate::model_io::save_posterior;
use crate::network::{MlpArchitecture, DEFAULT_HIDDEN};
use crate::rng;
use crate::uncertainty::{score_dataset, UncertaintyScores};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Features `[start, start + len)` fire with a class-specific probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureBlock {
    pub start: usize,
    pub len: usize,
    pub benign_prob: f64,
    pub malware_prob: f64,
}

/// Bernoulli dataset described by blocks over a background rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub dim: usize,
    pub n_benign: usize,
    pub n_malware: usize,
    #[serde(default)]
    pub background_prob: f64,
    #[serde(default)]
    pub blocks: Vec<FeatureBlock>,
}

impl SyntheticData {
    pub fn to_synth_config(&self, seed: u64) -> Result<SynthConfig> {
        let mut benign = vec![self.background_prob; self.dim];
        let mut malware = vec![self.background_prob; self.dim];
        for b in &self.blocks {
            if b.start + b.len > self.dim {
                return Err(Error::Config(format!(
                    "feature block [{}, {}) exceeds dim {}",
                    b.start,
                    b.start + b.len,
                    self.dim
                )));
            }
            benign[b.start..b.start + b.len].fill(b.benign_prob);
            malware[b.start..b.start + b.len].fill(b.malware_prob);
        }
        let cfg = SynthConfig {
            dim: self.dim,
            n_benign: self.n_benign,
            n_malware: self.n_malware,
            benign_probs: benign,
            malware_probs: malware,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticData),
    /// A dataset in the sparse text format; relative paths resolve against
    /// the config file's directory.
    File {
        path: PathBuf,
        #[serde(default = "binary")]
        profile: Profile,
    },
}

fn binary() -> Profile {
    Profile::Binary
}

fn default_train_fraction() -> f64 {
    0.7
}

fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_quantile() -> f64 {
    0.95
}

fn default_drift_method() -> Method {
    Method::Svgd
}

/// Whose gradients craft the adversarial malware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AttackTarget {
    /// Attack the true positives of one method and score every method on
    /// that shared adversarial set.
    Shared(Method),
    /// Attack each method's own true positives with its own gradients.
    Adaptive,
}

impl Default for AttackTarget {
    fn default() -> Self {
        AttackTarget::Shared(Method::Map)
    }
}

impl TryFrom<String> for AttackTarget {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s == "adaptive" {
            Ok(AttackTarget::Adaptive)
        } else {
            s.parse().map(AttackTarget::Shared)
        }
    }
}

impl From<AttackTarget> for String {
    fn from(t: AttackTarget) -> String {
        match t {
            AttackTarget::Shared(m) => m.tag().to_string(),
            AttackTarget::Adaptive => "adaptive".to_string(),
        }
    }
}

/// One attack family swept over a list of budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackGrid {
    pub family: AttackFamily,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub n_particles_for_gradient: Option<usize>,
}

impl AttackGrid {
    pub fn spec(&self, epsilon: f64, seed: u64) -> AttackSpec {
        let mut s = AttackSpec::new(self.family, epsilon);
        if let Some(v) = self.step_size {
            s.step_size = v;
        }
        if let Some(v) = self.iterations {
            s.iterations = v;
        }
        s.n_particles_for_gradient = self.n_particles_for_gradient;
        s.seed = seed;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSettings {
    #[serde(default)]
    pub flip_rate: f64,
    #[serde(default)]
    pub novel_block: Option<NovelBlock>,
    #[serde(default = "default_drift_method")]
    pub method: Method,
    #[serde(default = "default_quantile")]
    pub threshold_quantile: f64,
}

/// Where the adversarial set for diversity comes from. Defaults to the
/// first attack grid at its largest budget, run against the attack target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiversitySettings {
    #[serde(default)]
    pub attack: Option<AttackFamily>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub against: Option<Method>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_hidden")]
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Monte Carlo samples for scoring; defaults to `train.n_inference`.
    #[serde(default)]
    pub n_eval: Option<usize>,
    #[serde(default)]
    pub attack_target: AttackTarget,
    #[serde(default)]
    pub attacks: Vec<AttackGrid>,
    #[serde(default)]
    pub drift: Option<DriftSettings>,
    #[serde(default)]
    pub diversity: Option<DiversitySettings>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Seeds handed to each stage, all derived from the global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub synth: u64,
    pub split: u64,
    pub train: u64,
    pub eval: u64,
    pub attack: u64,
    pub drift: u64,
}

impl Seeds {
    pub fn from_global(seed: u64) -> Self {
        Seeds {
            synth: rng::derive(seed, 0),
            split: rng::derive(seed, 1),
            train: rng::derive(seed, 2),
            eval: rng::derive(seed, 3),
            attack: rng::derive(seed, 4),
            drift: rng::derive(seed, 5),
        }
    }
}

/// Contents of `run.json`: enough to rerun the experiment exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub toolkit_version: String,
    pub seeds: Seeds,
    pub config: ExperimentConfig,
}

impl ExperimentConfig {
    /// Reads TOML (`.toml`) or JSON (anything else). A `run.json` written by
    /// [`run_experiment`] is accepted as well.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml(&text)?
        } else {
            Self::from_json(&text)?
        };
        if let DataSource::File { path: p, .. } = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let value = match value {
            serde_json::Value::Object(mut m) if m.contains_key("toolkit_version") => {
                m.remove("config").unwrap_or_default()
            }
            v => v,
        };
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1)".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        self.train.validate()?;
        if self.n_eval == Some(0) {
            return Err(Error::Config("n_eval must be at least 1".into()));
        }
        for g in &self.attacks {
            if g.epsilons.is_empty() {
                return Err(Error::Config(format!("attack {} has no budgets", g.family)));
            }
            for &e in &g.epsilons {
                g.spec(e, 0).validate()?;
            }
        }
        if let AttackTarget::Shared(m) = self.attack_target {
            if !self.attacks.is_empty() && !self.methods.contains(&m) {
                return Err(Error::Config(format!("attack target {m} is not in the method list")));
            }
        }
        if let Some(d) = &self.drift {
            if !(0.0..=1.0).contains(&d.threshold_quantile) {
                return Err(Error::Config("drift threshold quantile must be in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_global(self.seed)
    }

    pub fn n_eval(&self) -> usize {
        self.n_eval.unwrap_or(self.train.n_inference)
    }

    /// Training configuration with the derived training seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds().train,
            ..self.train.clone()
        }
    }

    pub fn record(&self) -> RunRecord {
        RunRecord {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            seeds: self.seeds(),
            config: self.clone(),
        }
    }

    pub fn load_data(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Synthetic(s) => data::synth_generate(&s.to_synth_config(self.seeds().synth)?),
            DataSource::File { path, profile } => data::load_dataset(path, *profile),
        }
    }

    pub fn drift_config(&self) -> Option<DriftConfig> {
        self.drift.as_ref().map(|d| DriftConfig {
            flip_rate: d.flip_rate,
            novel_block: d.novel_block,
            seed: self.seeds().drift,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedMethod {
    pub method: Method,
    pub posterior: Posterior,
    pub epoch_losses: Vec<f64>,
    pub test_scores: UncertaintyScores,
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub method: Method,
    pub family: AttackFamily,
    pub epsilon: f64,
    pub adversarial: Dataset,
    pub summary: AttackSummary,
    pub pe: RocCurve,
    pub mi: RocCurve,
}

/// Everything an experiment produced, in memory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub methods: Vec<TrainedMethod>,
    pub attacks: Vec<AttackOutcome>,
    pub report: DetectionReport,
    pub diversity: Option<DiversityReport>,
    pub drift: Option<DriftReport>,
    /// Drift report with the reference set compared against itself.
    pub drift_identity: Option<DriftReport>,
}

impl Experiment {
    pub fn posterior(&self, method: Method) -> Option<&Posterior> {
        self.methods.iter().find(|m| m.method == method).map(|m| &m.posterior)
    }
}

fn roc_for(
    benign: &UncertaintyScores,
    adv: &UncertaintyScores,
    score: ScoreKind,
) -> Result<Option<RocCurve>> {
    if adv.records.is_empty() {
        return Ok(None);
    }
    let pick = |s: &UncertaintyScores| match score {
        ScoreKind::Pe => s.pe(),
        ScoreKind::Mi => s.mi(),
        ScoreKind::PredProb => s.malware_prob(),
    };
    Ok(Some(roc_auc(&pick(benign), &pick(adv))?.named(score)))
}

/// Runs the full pipeline in memory.
pub fn run(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let seeds = cfg.seeds();
    let n_eval = cfg.n_eval();

    let full = cfg.load_data()?;
    let (train, test) = data::split(&full, cfg.train_fraction, seeds.split)?;
    let train = train.with_provenance("train");
    let test = test.with_provenance("test");
    let arch = MlpArchitecture::new(full.dim(), cfg.hidden_sizes.clone())?;
    let tcfg = cfg.train_config();

    let benign_test = test.filter_label(Label::Benign);
    let mut report = DetectionReport::new();
    let mut methods = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let fitted = fit(m, &train, &arch, &tcfg)?;
        let scores = score_dataset(&fitted.posterior, &test, n_eval, seeds.eval)?;
        let cm = classification_metrics(&scores.malware_prob(), test.labels(), 0.5)?;
        report.clean.push(CleanPerformance {
            method: m,
            f1: cm.f1,
            precision: cm.precision,
            recall: cm.recall,
            auc: cm.auc,
        });
        methods.push(TrainedMethod {
            method: m,
            posterior: fitted.posterior,
            epoch_losses: fitted.epoch_losses,
            test_scores: scores,
        });
    }

    let benign_scores = methods
        .iter()
        .map(|tm| score_dataset(&tm.posterior, &benign_test, n_eval, seeds.eval))
        .collect::<Result<Vec<_>>>()?;
    let trained = |m: Method| {
        methods
            .iter()
            .position(|t| t.method == m)
            .ok_or_else(|| Error::Config(format!("method {m} is used but not trained")))
    };

    // adversarial sets keyed by (attacked method, grid index, budget index)
    let mut adversarial: BTreeMap<(usize, usize, usize), (Dataset, AttackSummary)> = BTreeMap::new();
    let attacked: Vec<usize> = match cfg.attack_target {
        AttackTarget::Shared(m) => vec![trained(m)?],
        AttackTarget::Adaptive => (0..methods.len()).collect(),
    };
    for &t in &attacked {
        let post = &methods[t].posterior;
        let victims = true_positive_malware(post, &test, n_eval, seeds.eval)?;
        for (gi, grid) in cfg.attacks.iter().enumerate() {
            for (ei, &eps) in grid.epsilons.iter().enumerate() {
                let ba = batch_attack(post, &victims, &grid.spec(eps, seeds.attack))?;
                adversarial.insert((t, gi, ei), (ba.adversarial, ba.summary));
            }
        }
    }

    let mut attacks = Vec::new();
    for (mi, tm) in methods.iter().enumerate() {
        let source = match cfg.attack_target {
            AttackTarget::Shared(_) => attacked[0],
            AttackTarget::Adaptive => mi,
        };
        for (gi, grid) in cfg.attacks.iter().enumerate() {
            for (ei, &eps) in grid.epsilons.iter().enumerate() {
                let (adv, summary) = &adversarial[&(source, gi, ei)];
                let adv_scores = score_dataset(&tm.posterior, adv, n_eval, seeds.eval)?;
                let mut curves = Vec::new();
                for score in [ScoreKind::Pe, ScoreKind::Mi] {
                    let roc = roc_for(&benign_scores[mi], &adv_scores, score)?;
                    report.cells.push(DetectionCell {
                        method: tm.method,
                        attack: grid.family,
                        epsilon: eps,
                        score,
                        auc: roc.as_ref().map(|r| r.auc),
                        n_negative: benign_test.len(),
                        n_positive: adv.len(),
                        evasion_rate: summary.evasion_rate,
                    });
                    curves.push(roc);
                }
                if let (Some(pe), Some(mi_curve)) = (curves[0].take(), curves[1].take()) {
                    attacks.push(AttackOutcome {
                        method: tm.method,
                        family: grid.family,
                        epsilon: eps,
                        adversarial: adv.clone(),
                        summary: *summary,
                        pe,
                        mi: mi_curve,
                    });
                }
            }
        }
    }

    let diversity_report = match (&cfg.diversity, cfg.attacks.first()) {
        (Some(ds), Some(first)) => {
            let family = ds.attack.unwrap_or(first.family);
            let gi = cfg
                .attacks
                .iter()
                .position(|g| g.family == family)
                .ok_or_else(|| Error::Config(format!("diversity attack {family} is not in the attack grid")))?;
            let grid = &cfg.attacks[gi];
            let eps = ds
                .epsilon
                .unwrap_or_else(|| grid.epsilons.iter().copied().fold(f64::MIN, f64::max));
            let against = ds.against.unwrap_or(match cfg.attack_target {
                AttackTarget::Shared(m) => m,
                AttackTarget::Adaptive => cfg.methods[0],
            });
            let t = trained(against)?;
            let cached = grid
                .epsilons
                .iter()
                .position(|&e| e == eps)
                .and_then(|ei| adversarial.get(&(t, gi, ei)));
            let adv = match cached {
                Some((d, _)) => d.clone(),
                None => {
                    let post = &methods[t].posterior;
                    let victims = true_positive_malware(post, &test, n_eval, seeds.eval)?;
                    batch_attack(post, &victims, &grid.spec(eps, seeds.attack))?.adversarial
                }
            };
            if adv.is_empty() {
                None
            } else {
                let entries = methods
                    .iter()
                    .map(|t| {
                        Ok(DiversityEntry {
                            method: t.method,
                            diversity: diversity(&t.posterior, &adv, n_eval, seeds.eval)?,
                            n: t.posterior.particle_set(n_eval, seeds.eval)?.len(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(DiversityReport {
                    dataset: format!("{} against {against}", adv.provenance()),
                    n_samples: adv.len(),
                    entries,
                })
            }
        }
        _ => None,
    };

    let (drift, drift_identity) = match (&cfg.drift, cfg.drift_config()) {
        (Some(ds), Some(dc)) => {
            let post = &methods
                .iter()
                .find(|t| t.method == ds.method)
                .ok_or_else(|| Error::Config(format!("drift method {} was not trained", ds.method)))?
                .posterior;
            let reference = test.filter_label(Label::Malware).with_provenance("reference");
            let drifted = data::drift_shift(&reference, &dc)?.with_provenance("drifted");
            let q = ds.threshold_quantile;
            (
                Some(drift_report(post, &reference, &drifted, n_eval, seeds.eval, q)?),
                Some(drift_report(post, &reference, &reference, n_eval, seeds.eval, q)?),
            )
        }
        _ => (None, None),
    };

    Ok(Experiment {
        config: cfg.clone(),
        train,
        test,
        methods,
        attacks,
        report,
        diversity: diversity_report,
        drift,
        drift_identity,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

/// `roc_<method>_<attack>_<eps>_<score>.csv`
pub fn roc_file_name(method: Method, family: AttackFamily, epsilon: f64, score: ScoreKind) -> String {
    format!("roc_{method}_{family}_{epsilon}_{score}.csv")
}

/// Writes every artifact of `exp` under `out`. Files are a pure function of
/// the configuration.
pub fn write_outputs(exp: &Experiment, out: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut written = BTreeMap::new();
    for sub in ["", "models", "data"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(format!("creating {}", d.display()), e))?;
    }
    let mut put = |name: String, contents: String| -> Result<()> {
        let p = out.join(&name);
        write(&p, contents)?;
        written.insert(name, p);
        Ok(())
    };
    put("run.json".into(), to_json(&exp.config.record()))?;
    put("detection_report.json".into(), to_json(&exp.report))?;
    put("data/train.svm".into(), exp.train.to_text())?;
    put("data/test.svm".into(), exp.test.to_text())?;
    for a in &exp.attacks {
        for roc in [&a.pe, &a.mi] {
            let score = roc.score_name.unwrap_or(ScoreKind::Pe);
            put(roc_file_name(a.method, a.family, a.epsilon, score), roc.to_csv())?;
        }
    }
    if let Some(d) = &exp.diversity {
        put("diversity.json".into(), to_json(d))?;
    }
    if let Some(d) = &exp.drift {
        put("drift_report.json".into(), to_json(d))?;
        for s in &d.scores {
            put(format!("drift_hist_{}.csv", s.score), s.drifted_hist.to_csv())?;
            put(format!("reference_hist_{}.csv", s.score), s.reference_hist.to_csv())?;
        }
    }
    for tm in &exp.methods {
        let name = format!("models/{}.bmal", tm.method);
        let p = out.join(&name);
        save_posterior(&tm.posterior, &p)?;
        written.insert(name, p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
seed = 3
hidden_sizes = [8]
methods = ["map", "svgd"]

[data]
source = "synthetic"
dim = 12
n_benign = 60
n_malware = 30
background_prob = 0.05

[[data.blocks]]
start = 0
len = 4
benign_prob = 0.7
malware_prob = 0.05

[[data.blocks]]
start = 4
len = 4
benign_prob = 0.05
malware_prob = 0.7

[train]
epochs = 5
n_particles = 3
n_inference = 3

[[attacks]]
family = "pgd_l1"
epsilons = [1.0, 3.0]
iterations = 10

[drift]
novel_block = { start = 8, len = 4, prob = 0.9 }

[diversity]
"#;

    #[test]
    fn parses_toml_and_round_trips_run_record() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.methods, vec![Method::Map, Method::Svgd]);
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        let back = ExperimentConfig::from_json(&to_json(&cfg.record())).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml(&format!("{SMALL}\nbogus = 1\n")).is_err());
        let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        cfg.train_fraction = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn small_run_has_every_cell() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        let exp = run(&cfg).unwrap();
        assert_eq!(exp.report.cells.len(), 2 * 2 * 2);
        assert_eq!(exp.report.clean.len(), 2);
        assert!(exp.drift.is_some() && exp.diversity.is_some());
        assert!(!exp.drift_identity.as_ref().unwrap().drift_flag);
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(&exp, dir.path()).unwrap();
        assert!(files.contains_key("run.json"));
        assert!(files.contains_key("drift_hist_pe.csv"));
        assert!(files.contains_key("models/svgd.bmal"));
    }
}
