//! Sparse labelled datasets: the on-disk text format, synthetic generation,
//! stratified splitting and simulated concept drift.
//!
//! The text format is libsvm-like with a mandatory dimension header:
//!
//! ```text
//! #dim 4
//! #provenance synth
//! 1 1:1 3:1
//! 0 2:1
//! ```
//!
//! Labels are `0` (benign) or `1` (malware). Feature indices are 1-based on
//! disk and 0-based in memory. Blank lines are ignored and `\r\n` line endings
//! are accepted.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malware,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Malware => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Benign),
            1 => Some(Label::Malware),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Every stored entry is 1.0 (DREBIN / EMBER-style indicator features).
    Binary,
    Continuous,
}

/// A sparse feature vector. Entries are kept sorted by index and zero values
/// are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    /// Builds a vector from `(index, value)` pairs in any order. Duplicate or
    /// out-of-range indices are rejected; zero values are dropped.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::precondition("feature dimension must be positive"));
        }
        entries.sort_by_key(|&(i, _)| i);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::precondition(format!(
                    "duplicate feature index {}",
                    w[0].0
                )));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i >= dim {
                return Err(Error::precondition(format!(
                    "feature index {i} out of range for dim {dim}"
                )));
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        Ok(FeatureVector { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Binary vector with the given indices set to 1.
    pub fn from_indices(dim: usize, indices: &[usize]) -> Result<Self> {
        Self::new(dim, indices.iter().map(|&i| (i, 1.0)).collect())
    }

    pub fn from_dense(values: &[f64]) -> Self {
        FeatureVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn is_binary(&self) -> bool {
        self.entries.iter().all(|&(_, v)| v == 1.0)
    }

    /// L1 distance to another vector of the same dimension.
    pub fn l1_distance(&self, other: &FeatureVector) -> f64 {
        let a = self.to_dense();
        let b = other.to_dense();
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    samples: Vec<FeatureVector>,
    labels: Vec<Label>,
    profile: Profile,
    provenance: String,
}

impl Dataset {
    pub fn new(
        dim: usize,
        samples: Vec<FeatureVector>,
        labels: Vec<Label>,
        profile: Profile,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::precondition("dataset dimension must be positive"));
        }
        if samples.len() != labels.len() {
            return Err(Error::precondition(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        for s in &samples {
            Error::check_dim(dim, s.dim())?;
            if profile == Profile::Binary && !s.is_binary() {
                return Err(Error::precondition(
                    "binary profile requires every stored value to be 1",
                ));
            }
        }
        Ok(Dataset {
            dim,
            samples,
            labels,
            profile,
            provenance: provenance.into(),
        })
    }

    pub fn empty(dim: usize, profile: Profile, provenance: impl Into<String>) -> Self {
        Dataset {
            dim,
            samples: Vec::new(),
            labels: Vec::new(),
            profile,
            provenance: provenance.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[FeatureVector] {
        &self.samples
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, tag: impl Into<String>) -> Self {
        self.provenance = tag.into();
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureVector, Label)> {
        self.samples.iter().zip(self.labels.iter().copied())
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Errors unless both classes are present, as training requires.
    pub fn require_both_classes(&self) -> Result<()> {
        let benign = self.count(Label::Benign);
        let malware = self.count(Label::Malware);
        if benign == 0 || malware == 0 {
            return Err(Error::precondition(format!(
                "training requires both classes, found {benign} benign and {malware} malware samples"
            )));
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            profile: self.profile,
            provenance: self.provenance.clone(),
        }
    }

    pub fn filter_label(&self, label: Label) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
        self.subset(&idx)
    }

    /// Appends the samples of `other`, which must share dimension and profile.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        Error::check_dim(self.dim, other.dim)?;
        if self.profile != other.profile {
            return Err(Error::precondition("cannot concatenate datasets of different profiles"));
        }
        let mut out = self.clone();
        out.samples.extend(other.samples.iter().cloned());
        out.labels.extend(other.labels.iter().copied());
        Ok(out)
    }

    /// Serialises to the text format read by [`load_dataset`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "#dim {}", self.dim).unwrap();
        if !self.provenance.is_empty() {
            writeln!(out, "#provenance {}", self.provenance).unwrap();
        }
        for (x, y) in self.iter() {
            write!(out, "{}", y.index()).unwrap();
            for &(i, v) in x.entries() {
                write!(out, " {}:{}", i + 1, v).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text())
            .map_err(|e| Error::io(format!("writing dataset {}", path.display()), e))
    }
}

/// Reads a dataset file.
pub fn load_dataset(path: impl AsRef<Path>, profile: Profile) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading dataset {}", path.display()), e))?;
    parse_dataset(&text, profile, path)
}

/// Parses dataset text; `origin` is only used in error messages.
pub fn parse_dataset(text: &str, profile: Profile, origin: &Path) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(origin),
        line,
        message,
    };

    let mut dim: Option<usize> = None;
    let mut provenance = String::new();
    let mut samples = Vec::new();
    let mut labels = Vec::new();

    for (lineno, raw) in text.split('\n').enumerate() {
        let lineno = lineno + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if let Some(v) = rest.strip_prefix("dim") {
                if dim.is_some() {
                    return Err(err(lineno, "repeated #dim header".into()));
                }
                let n: usize = v
                    .trim()
                    .parse()
                    .map_err(|_| err(lineno, format!("bad #dim value {:?}", v.trim())))?;
                if n == 0 {
                    return Err(err(lineno, "#dim must be positive".into()));
                }
                dim = Some(n);
            } else if let Some(v) = rest.strip_prefix("provenance") {
                provenance = v.trim().to_string();
            }
            continue;
        }

        let dim = dim.ok_or_else(|| err(lineno, "missing #dim header before first sample".into()))?;
        let mut fields = line.split_ascii_whitespace();
        let label = match fields.next() {
            Some("0") => Label::Benign,
            Some("1") => Label::Malware,
            Some(other) => return Err(err(lineno, format!("bad label {other:?}, expected 0 or 1"))),
            None => unreachable!(),
        };
        let mut entries = Vec::new();
        for field in fields {
            let (idx, val) = field
                .split_once(':')
                .ok_or_else(|| err(lineno, format!("malformed entry {field:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(lineno, format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(err(lineno, "feature indices are 1-based".into()));
            }
            if idx > dim {
                return Err(err(
                    lineno,
                    format!("feature index {idx} out of range for dim {dim}"),
                ));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(lineno, format!("bad feature value {val:?}")))?;
            if !val.is_finite() {
                return Err(err(lineno, format!("non-finite feature value {val}")));
            }
            if profile == Profile::Binary && val != 0.0 && val != 1.0 {
                return Err(err(
                    lineno,
                    format!("binary profile requires values in {{0,1}}, got {val}"),
                ));
            }
            entries.push((idx - 1, val));
        }
        let fv = FeatureVector::new(dim, entries).map_err(|e| err(lineno, e.to_string()))?;
        samples.push(fv);
        labels.push(label);
    }

    let dim = dim.ok_or_else(|| err(1, "missing #dim header".into()))?;
    Dataset::new(dim, samples, labels, profile, provenance)
}

/// Bernoulli feature model for synthetic datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dim: usize,
    pub n_benign: usize,
    pub n_malware: usize,
    pub benign_probs: Vec<f64>,
    pub malware_probs: Vec<f64>,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("synthetic dim must be positive".into()));
        }
        for (name, probs) in [("benign", &self.benign_probs), ("malware", &self.malware_probs)] {
            if probs.len() != self.dim {
                return Err(Error::Config(format!(
                    "{name} activation probabilities have length {}, expected {}",
                    probs.len(),
                    self.dim
                )));
            }
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Config(format!(
                    "{name} activation probabilities must lie in [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Draws benign samples followed by malware samples, each feature an
/// independent Bernoulli with its class's activation probability.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed, stream::SYNTH);
    let mut samples = Vec::with_capacity(cfg.n_benign + cfg.n_malware);
    let mut labels = Vec::with_capacity(samples.capacity());
    for (label, count, probs) in [
        (Label::Benign, cfg.n_benign, &cfg.benign_probs),
        (Label::Malware, cfg.n_malware, &cfg.malware_probs),
    ] {
        for _ in 0..count {
            let entries = probs
                .iter()
                .enumerate()
                .filter(|&(_, &p)| rng.random::<f64>() < p)
                .map(|(j, _)| (j, 1.0))
                .collect();
            samples.push(FeatureVector {
                dim: cfg.dim,
                entries,
            });
            labels.push(label);
        }
    }
    Dataset::new(cfg.dim, samples, labels, Profile::Binary, "synth")
}

/// Stratified split into (train, test).
///
/// The train size is `round(train_fraction * n)`. Each class first receives
/// `floor(train_fraction * n_class)` train slots; leftover slots go to the
/// classes with the largest fractional remainders (benign first on ties).
/// Within a class the samples are shuffled with the seed before allocation.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if d.is_empty() {
        return Err(Error::precondition("cannot split an empty dataset"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::precondition(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = rng::seeded(seed, stream::SPLIT);
    let classes = [Label::Benign, Label::Malware];
    let mut members: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| (0..d.len()).filter(|&i| d.labels[i] == c).collect())
        .collect();
    for m in members.iter_mut() {
        m.shuffle(&mut rng);
    }

    let total_train = (train_fraction * d.len() as f64).round() as usize;
    let ideal: Vec<f64> = members.iter().map(|m| train_fraction * m.len() as f64).collect();
    let mut take: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut leftover = total_train.saturating_sub(take.iter().sum());
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in &order {
        if leftover == 0 {
            break;
        }
        if take[c] < members[c].len() {
            take[c] += 1;
            leftover -= 1;
        }
    }

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (m, &t) in members.iter().zip(&take) {
        train_idx.extend_from_slice(&m[..t]);
        test_idx.extend_from_slice(&m[t..]);
    }
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::precondition(format!(
            "train fraction {train_fraction} leaves an empty {} side for {} samples",
            if train_idx.is_empty() { "train" } else { "test" },
            d.len()
        )));
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((d.subset(&train_idx), d.subset(&test_idx)))
}

/// A block of feature indices that malware starts using after the shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NovelBlock {
    pub start: usize,
    pub len: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub flip_rate: f64,
    #[serde(default)]
    pub novel_block: Option<NovelBlock>,
    pub seed: u64,
}

/// Simulates malware evolution on a binary dataset: each malware feature bit
/// flips with probability `flip_rate`, then every index in the novel block is
/// switched on with the block's probability. Benign samples pass through.
pub fn drift_shift(d: &Dataset, cfg: &DriftConfig) -> Result<Dataset> {
    if d.profile != Profile::Binary {
        return Err(Error::precondition("drift_shift requires a binary dataset"));
    }
    if !(0.0..=1.0).contains(&cfg.flip_rate) {
        return Err(Error::Config(format!(
            "flip rate must be in [0, 1], got {}",
            cfg.flip_rate
        )));
    }
    if let Some(b) = cfg.novel_block {
        if b.start + b.len > d.dim {
            return Err(Error::precondition(format!(
                "novel block [{}, {}) exceeds dim {}",
                b.start,
                b.start + b.len,
                d.dim
            )));
        }
        if !(0.0..=1.0).contains(&b.prob) {
            return Err(Error::Config("novel block probability must be in [0, 1]".into()));
        }
    }

    let mut rng = rng::seeded(cfg.seed, stream::DRIFT);
    let mut out = d.clone();
    for (x, &label) in out.samples.iter_mut().zip(&d.labels) {
        if label != Label::Malware {
            continue;
        }
        let mut bits = x.to_dense();
        if cfg.flip_rate > 0.0 {
            for b in bits.iter_mut() {
                if rng.random::<f64>() < cfg.flip_rate {
                    *b = 1.0 - *b;
                }
            }
        }
        if let Some(block) = cfg.novel_block {
            for b in &mut bits[block.start..block.start + block.len] {
                if rng.random::<f64>() < block.prob {
                    *b = 1.0;
                }
            }
        }
        *x = FeatureVector::from_dense(&bits);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, profile: Profile) -> Result<Dataset> {
        parse_dataset(text, profile, Path::new("fixture"))
    }

    fn balanced(n_each: usize, dim: usize) -> Dataset {
        let cfg = SynthConfig {
            dim,
            n_benign: n_each,
            n_malware: n_each,
            benign_probs: vec![0.3; dim],
            malware_probs: vec![0.6; dim],
            seed: 11,
        };
        synth_generate(&cfg).unwrap()
    }

    #[test]
    fn parses_fixture() {
        let d = parse("#dim 4\n1 1:1 3:1", Profile::Binary).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels(), &[Label::Malware]);
        let idx: Vec<usize> = d.samples()[0].entries().iter().map(|e| e.0).collect();
        assert_eq!(idx, vec![0, 2]);
    }

    #[test]
    fn header_only_is_empty() {
        let d = parse("#dim 4\n", Profile::Binary).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.dim(), 4);
    }

    #[test]
    fn crlf_and_blank_lines() {
        let d = parse("#dim 3\r\n\r\n0 2:1\r\n1 1:1 3:1\r\n", Profile::Binary).unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        let e = parse("#dim 4\n1 5:1", Profile::Binary).unwrap_err();
        assert!(e.to_string().contains("out of range"), "{e}");
        assert!(matches!(e, Error::Parse { line: 2, .. }));

        assert!(matches!(
            parse("1 1:1", Profile::Binary),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse("", Profile::Binary).is_err());
        assert!(parse("#dim 4\n1 2:0.5", Profile::Binary).is_err());
        assert!(parse("#dim 4\n1 2:0.5", Profile::Continuous).is_ok());
        assert!(parse("#dim 4\n1 2:1 2:1", Profile::Binary).is_err());
        assert!(parse("#dim 4\n2 2:1", Profile::Binary).is_err());
        assert!(parse("#dim 4\n1 0:1", Profile::Binary).is_err());
        assert!(parse("#dim 4\n1 x", Profile::Binary).is_err());
    }

    #[test]
    fn synth_degenerate_probabilities() {
        let mut cfg = SynthConfig {
            dim: 5,
            n_benign: 3,
            n_malware: 2,
            benign_probs: vec![0.0; 5],
            malware_probs: vec![0.0; 5],
            seed: 1,
        };
        let d = synth_generate(&cfg).unwrap();
        assert!(d.samples().iter().all(|x| x.nnz() == 0));
        cfg.benign_probs = vec![1.0; 5];
        cfg.malware_probs = vec![1.0; 5];
        let d = synth_generate(&cfg).unwrap();
        assert!(d.samples().iter().all(|x| x.to_dense() == vec![1.0; 5]));
        assert_eq!(d.count(Label::Benign), 3);
        assert_eq!(d.count(Label::Malware), 2);
    }

    #[test]
    fn synth_is_deterministic() {
        assert_eq!(balanced(20, 16), balanced(20, 16));
    }

    #[test]
    fn synth_rejects_bad_probabilities() {
        let cfg = SynthConfig {
            dim: 2,
            n_benign: 1,
            n_malware: 1,
            benign_probs: vec![0.5, 1.5],
            malware_probs: vec![0.5, 0.5],
            seed: 0,
        };
        assert!(synth_generate(&cfg).is_err());
    }

    #[test]
    fn split_counts() {
        let d = balanced(5, 8);
        let (train, test) = split(&d, 0.8, 3).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(train.count(Label::Benign), 4);
        assert_eq!(train.count(Label::Malware), 4);
        assert_eq!(test.len(), 2);

        let d = balanced(1, 4);
        let (train, test) = split(&d, 0.5, 3).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));

        assert!(split(&d, 0.99, 3).is_err());
        assert!(split(&Dataset::empty(3, Profile::Binary, ""), 0.5, 0).is_err());
    }

    #[test]
    fn drift_identity_and_full_flip() {
        let d = balanced(6, 10);
        let same = drift_shift(
            &d,
            &DriftConfig {
                flip_rate: 0.0,
                novel_block: None,
                seed: 5,
            },
        )
        .unwrap();
        assert_eq!(same, d);

        let flipped = drift_shift(
            &d,
            &DriftConfig {
                flip_rate: 1.0,
                novel_block: None,
                seed: 5,
            },
        )
        .unwrap();
        for ((a, b), l) in d.samples().iter().zip(flipped.samples()).zip(d.labels()) {
            let (a, b) = (a.to_dense(), b.to_dense());
            match l {
                Label::Benign => assert_eq!(a, b),
                Label::Malware => assert!(a.iter().zip(&b).all(|(x, y)| x + y == 1.0)),
            }
        }
    }

    #[test]
    fn drift_novel_block() {
        let d = balanced(4, 6);
        let cfg = DriftConfig {
            flip_rate: 0.0,
            novel_block: Some(NovelBlock {
                start: 0,
                len: 2,
                prob: 1.0,
            }),
            seed: 9,
        };
        let out = drift_shift(&d, &cfg).unwrap();
        for ((before, after), l) in d.samples().iter().zip(out.samples()).zip(d.labels()) {
            if *l == Label::Malware {
                assert_eq!(after.get(0), 1.0);
                assert_eq!(after.get(1), 1.0);
                for j in 2..6 {
                    assert_eq!(after.get(j), before.get(j));
                }
            } else {
                assert_eq!(before, after);
            }
        }
        let bad = DriftConfig {
            novel_block: Some(NovelBlock {
                start: 5,
                len: 2,
                prob: 1.0,
            }),
            ..cfg
        };
        assert!(drift_shift(&d, &bad).is_err());
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        (1usize..20).prop_flat_map(|dim| {
            prop::collection::vec(
                (prop::collection::btree_set(0..dim, 0..dim), any::<bool>()),
                0..15,
            )
            .prop_map(move |rows| {
                let (samples, labels) = rows
                    .into_iter()
                    .map(|(set, m)| {
                        let idx: Vec<usize> = set.into_iter().collect();
                        (
                            FeatureVector::from_indices(dim, &idx).unwrap(),
                            if m { Label::Malware } else { Label::Benign },
                        )
                    })
                    .unzip();
                Dataset::new(dim, samples, labels, Profile::Binary, "prop").unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(d in arb_dataset()) {
            let text = d.to_text();
            let back = parse(&text, Profile::Binary).unwrap();
            prop_assert_eq!(&back, &d);
            prop_assert_eq!(back.to_text(), text);
        }

        #[test]
        fn split_is_partition(seed in any::<u64>(), frac in 0.2f64..0.8) {
            let d = balanced(7, 5);
            let (a, b) = split(&d, frac, seed).unwrap();
            let mut all: Vec<String> = a.iter().chain(b.iter())
                .map(|(x, l)| format!("{:?}{:?}", x, l)).collect();
            let mut orig: Vec<String> = d.iter().map(|(x, l)| format!("{:?}{:?}", x, l)).collect();
            all.sort();
            orig.sort();
            prop_assert_eq!(all, orig);
        }
    }
}
