//! Detection and classification metrics, particle diversity and drift
//! reports.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::AttackFamily;
use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::inference::{Method, Posterior};
use crate::uncertainty::{kl_divergence, score_dataset};

pub const DETECTION_SCHEMA_VERSION: u32 = 1;
pub const DRIFT_HIST_BINS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Pe,
    Mi,
    PredProb,
}

impl ScoreKind {
    pub fn tag(self) -> &'static str {
        match self {
            ScoreKind::Pe => "pe",
            ScoreKind::Mi => "mi",
            ScoreKind::PredProb => "pred_prob",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub score_name: Option<ScoreKind>,
}

impl RocCurve {
    pub fn named(mut self, score: ScoreKind) -> Self {
        self.score_name = Some(score);
        self
    }

    /// `fpr,tpr` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            out.push_str(&format!("{f},{t}\n"));
        }
        out
    }
}

/// ROC curve with higher scores meaning "more likely positive".
///
/// The threshold sweeps the distinct scores from high to low; tied scores
/// move together, so the trapezoidal area equals the Mann-Whitney statistic
/// with half credit for ties.
pub fn roc_auc(neg_scores: &[f64], pos_scores: &[f64]) -> Result<RocCurve> {
    if neg_scores.is_empty() || pos_scores.is_empty() {
        return Err(Error::precondition(format!(
            "ROC needs both classes, got {} negatives and {} positives",
            neg_scores.len(),
            pos_scores.len()
        )));
    }
    if neg_scores.iter().chain(pos_scores).any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score passed to roc_auc".into()));
    }
    let mut all: Vec<(f64, bool)> = neg_scores
        .iter()
        .map(|&s| (s, false))
        .chain(pos_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_neg = neg_scores.len() as f64;
    let n_pos = pos_scores.len() as f64;
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg, tp as f64 / n_pos));
    }
    let auc = trapezoid(&points);
    Ok(RocCurve {
        points,
        auc,
        score_name: None,
    })
}

pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// `None` unless both classes are present.
    pub auc: Option<f64>,
}

/// Malware is the positive class; a sample is predicted malware when its
/// probability is at least `threshold`. Precision and recall are 0 when
/// their denominators are.
pub fn classification_metrics(
    pred_malware_prob: &[f64],
    labels: &[Label],
    threshold: f64,
) -> Result<ClassificationMetrics> {
    Error::check_dim(labels.len(), pred_malware_prob.len())?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &y) in pred_malware_prob.iter().zip(labels) {
        match (p >= threshold, y) {
            (true, Label::Malware) => tp += 1,
            (true, Label::Benign) => fp += 1,
            (false, Label::Malware) => fneg += 1,
            (false, Label::Benign) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let neg: Vec<f64> = pick(pred_malware_prob, labels, Label::Benign);
    let pos: Vec<f64> = pick(pred_malware_prob, labels, Label::Malware);
    let auc = if neg.is_empty() || pos.is_empty() {
        None
    } else {
        Some(roc_auc(&neg, &pos)?.auc)
    };
    Ok(ClassificationMetrics {
        f1,
        precision,
        recall,
        auc,
    })
}

fn pick(v: &[f64], labels: &[Label], which: Label) -> Vec<f64> {
    v.iter()
        .zip(labels)
        .filter(|(_, &l)| l == which)
        .map(|(&s, _)| s)
        .collect()
}

/// Mean over samples and drawn networks of `KL(p(y | x, theta_j) || p_MC(y | x))`.
pub fn diversity(post: &Posterior, adv: &Dataset, n: usize, seed: u64) -> Result<f64> {
    if adv.is_empty() {
        return Err(Error::precondition("diversity needs at least one sample"));
    }
    Error::check_dim(post.arch.input_dim, adv.dim())?;
    let set = post.particle_set(n, seed)?;
    let per_sample = adv
        .samples()
        .par_iter()
        .map(|x| {
            let s = set.predict(x)?;
            let m = s.mean();
            let total: f64 = s.rows().iter().map(|r| kl_divergence(r, &m)).sum();
            Ok(total / s.n() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_sample.iter().sum::<f64>() / per_sample.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityEntry {
    pub method: Method,
    pub diversity: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    /// What the diversity was measured on, e.g. the attack that produced it.
    pub dataset: String,
    pub n_samples: usize,
    pub entries: Vec<DiversityEntry>,
}

impl DiversityReport {
    pub fn get(&self, method: Method) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.method == method)
            .map(|e| e.diversity)
    }
}

/// Normalised histogram over fixed, equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub mass: Vec<f64>,
}

impl Histogram {
    /// Values outside `[lo, hi]` are clamped into the edge bins.
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0usize; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let b = ((v - lo) / width).floor();
            let b = if b.is_nan() { 0 } else { (b.max(0.0) as usize).min(bins - 1) };
            counts[b] += 1;
        }
        let n = values.len().max(1) as f64;
        Histogram {
            lo,
            hi,
            mass: counts.iter().map(|&c| c as f64 / n).collect(),
        }
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let span = self.hi - self.lo;
        let n = self.mass.len() as f64;
        (
            self.lo + span * bin as f64 / n,
            self.lo + span * (bin + 1) as f64 / n,
        )
    }

    /// `bin_left,bin_right,mass` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,mass\n");
        for (i, m) in self.mass.iter().enumerate() {
            let (l, r) = self.edges(i);
            out.push_str(&format!("{l},{r},{m}\n"));
        }
        out
    }
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftScore {
    pub score: ScoreKind,
    pub reference_hist: Histogram,
    pub drifted_hist: Histogram,
    pub reference_mean: f64,
    pub drifted_mean: f64,
    pub mean_shift: f64,
    /// Reference quantile the drifted mean is compared against.
    pub threshold: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub method: Method,
    pub threshold_quantile: f64,
    pub scores: Vec<DriftScore>,
    /// Predictive-entropy flag: the drifted set's mean PE exceeds the
    /// reference PE quantile.
    pub drift_flag: bool,
}

impl DriftReport {
    pub fn score(&self, kind: ScoreKind) -> Option<&DriftScore> {
        self.scores.iter().find(|s| s.score == kind)
    }
}

/// Compares uncertainty on a reference set with uncertainty on a possibly
/// drifted set, both scored with the same draw of networks.
pub fn drift_report(
    post: &Posterior,
    reference: &Dataset,
    drifted: &Dataset,
    n: usize,
    seed: u64,
    threshold_quantile: f64,
) -> Result<DriftReport> {
    if reference.is_empty() || drifted.is_empty() {
        return Err(Error::precondition("drift report needs non-empty reference and drift sets"));
    }
    let r = score_dataset(post, reference, n, seed)?;
    let d = score_dataset(post, drifted, n, seed)?;
    let hi = std::f64::consts::LN_2;
    let scores: Vec<DriftScore> = [(ScoreKind::Pe, r.pe(), d.pe()), (ScoreKind::Mi, r.mi(), d.mi())]
        .into_iter()
        .map(|(kind, rv, dv)| {
            let threshold = quantile(&rv, threshold_quantile);
            let (rm, dm) = (mean(&rv), mean(&dv));
            DriftScore {
                score: kind,
                reference_hist: Histogram::new(&rv, 0.0, hi, DRIFT_HIST_BINS),
                drifted_hist: Histogram::new(&dv, 0.0, hi, DRIFT_HIST_BINS),
                reference_mean: rm,
                drifted_mean: dm,
                mean_shift: dm - rm,
                threshold,
                flagged: dm > threshold,
            }
        })
        .collect();
    Ok(DriftReport {
        method: post.method(),
        threshold_quantile,
        drift_flag: scores[0].flagged,
        scores,
    })
}

/// One `(method, attack, epsilon, score)` detection result. Negatives are
/// clean benign test samples, positives the adversarial malware.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCell {
    pub method: Method,
    pub attack: AttackFamily,
    pub epsilon: f64,
    pub score: ScoreKind,
    /// `None` when the attack produced no positives.
    pub auc: Option<f64>,
    pub n_negative: usize,
    pub n_positive: usize,
    pub evasion_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanPerformance {
    pub method: Method,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub schema_version: u32,
    pub clean: Vec<CleanPerformance>,
    pub cells: Vec<DetectionCell>,
}

impl DetectionReport {
    pub fn new() -> Self {
        DetectionReport {
            schema_version: DETECTION_SCHEMA_VERSION,
            clean: Vec::new(),
            cells: Vec::new(),
        }
    }

    pub fn cell(
        &self,
        method: Method,
        attack: AttackFamily,
        epsilon: f64,
        score: ScoreKind,
    ) -> Option<&DetectionCell> {
        self.cells.iter().find(|c| {
            c.method == method && c.attack == attack && c.epsilon == epsilon && c.score == score
        })
    }

    pub fn clean(&self, method: Method) -> Option<&CleanPerformance> {
        self.clean.iter().find(|c| c.method == method)
    }

    /// Plain-text table; MI for the deterministic baseline prints as `n/a`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("method    F1      P       R       AUC\n");
        for c in &self.clean {
            out.push_str(&format!(
                "{:<9} {:.4}  {:.4}  {:.4}  {}\n",
                c.method.tag(),
                c.f1,
                c.precision,
                c.recall,
                c.auc.map_or("n/a".to_string(), |a| format!("{a:.4}"))
            ));
        }
        out.push('\n');
        out.push_str("method    attack              eps      score  AUC     evasion\n");
        for c in &self.cells {
            let auc = match (c.method, c.score, c.auc) {
                (Method::Map, ScoreKind::Mi, _) | (_, _, None) => "n/a".to_string(),
                (_, _, Some(a)) => format!("{a:.4}"),
            };
            out.push_str(&format!(
                "{:<9} {:<19} {:<8} {:<6} {:<7} {}\n",
                c.method.tag(),
                c.attack.tag(),
                c.epsilon,
                c.score.tag(),
                auc,
                c.evasion_rate.map_or("n/a".to_string(), |r| format!("{r:.3}"))
            ));
        }
        out
    }
}

impl Default for DetectionReport {
    fn default() -> Self {
        Self::new()
    }
}
