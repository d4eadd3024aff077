//! Predictive entropy and mutual information from Monte Carlo predictive
//! samples. All quantities are in nats.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::inference::{Method, Posterior};
use crate::network::N_CLASSES;

const ROW_TOLERANCE: f64 = 1e-12;

/// `n x 2` matrix of per-network class probabilities for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSample {
    rows: Vec<[f64; N_CLASSES]>,
}

impl PredictiveSample {
    pub fn new(rows: Vec<[f64; N_CLASSES]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::precondition("a predictive sample needs at least one row"));
        }
        for r in &rows {
            if r.iter().any(|v| !(0.0..=1.0).contains(v)) || (r[0] + r[1] - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Numeric(format!("row {r:?} is not a probability distribution")));
            }
        }
        Ok(PredictiveSample { rows })
    }

    pub fn rows(&self) -> &[[f64; N_CLASSES]] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    fn all_identical(&self) -> bool {
        self.rows.iter().all(|r| *r == self.rows[0])
    }

    /// Column means. Identical rows return the first row exactly.
    pub fn mean(&self) -> [f64; N_CLASSES] {
        if self.all_identical() {
            return self.rows[0];
        }
        let n = self.rows.len() as f64;
        let mut m = [0.0; N_CLASSES];
        for r in &self.rows {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.map(|v| v / n)
    }

    /// Average entropy of the individual rows.
    pub fn mean_row_entropy(&self) -> f64 {
        if self.all_identical() {
            return entropy(&self.rows[0]);
        }
        self.rows.iter().map(|r| entropy(r)).sum::<f64>() / self.rows.len() as f64
    }
}

/// Shannon entropy with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// `KL(p || q)` with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

pub fn predictive_mean(s: &PredictiveSample) -> [f64; N_CLASSES] {
    s.mean()
}

/// Entropy of the Monte Carlo mean prediction.
pub fn predictive_entropy(s: &PredictiveSample) -> f64 {
    entropy(&s.mean())
}

/// `H[mean] - mean(H[row])` before clamping. Exposed for the decomposition
/// identity; use [`mutual_information`] for scoring.
pub fn mutual_information_raw(s: &PredictiveSample) -> f64 {
    predictive_entropy(s) - s.mean_row_entropy()
}

/// Mutual information between the label and the weights, clamped to
/// `[0, predictive_entropy]`.
pub fn mutual_information(s: &PredictiveSample) -> f64 {
    let pe = predictive_entropy(s);
    (pe - s.mean_row_entropy()).clamp(0.0, pe)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub malware_prob: f64,
    pub pe: f64,
    pub mi: f64,
}

impl ScoreRecord {
    pub fn from_sample(s: &PredictiveSample) -> Self {
        let pe = predictive_entropy(s);
        ScoreRecord {
            malware_prob: s.mean()[Label::Malware.index()],
            pe,
            mi: (pe - s.mean_row_entropy()).clamp(0.0, pe),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScores {
    pub method: Method,
    pub n: usize,
    pub records: Vec<ScoreRecord>,
}

impl UncertaintyScores {
    pub fn pe(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.pe).collect()
    }

    pub fn mi(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mi).collect()
    }

    pub fn malware_prob(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.malware_prob).collect()
    }

    /// CSV with columns `malware_prob,pe,mi`; MI is written as `n/a` for the
    /// deterministic baseline.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("malware_prob,pe,mi\n");
        for r in &self.records {
            if self.method == Method::Map {
                out.push_str(&format!("{},{},n/a\n", r.malware_prob, r.pe));
            } else {
                out.push_str(&format!("{},{},{}\n", r.malware_prob, r.pe, r.mi));
            }
        }
        out
    }
}

/// Scores every sample with the same `n` networks drawn from `seed`, so each
/// record depends only on its own input.
pub fn score_dataset(post: &Posterior, d: &Dataset, n: usize, seed: u64) -> Result<UncertaintyScores> {
    Error::check_dim(post.arch.input_dim, d.dim())?;
    let set = post.particle_set(n, seed)?;
    let records = d
        .samples()
        .par_iter()
        .map(|x| set.predict(x).map(|s| ScoreRecord::from_sample(&s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(UncertaintyScores {
        method: post.method(),
        n: set.len(),
        records,
    })
}
