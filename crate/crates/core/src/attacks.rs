//! Feature-space evasion attacks by a perfect-knowledge attacker.
//!
//! Every attack pushes a malware sample towards the benign class by following
//! the input gradient of the particle-averaged model, subject to per-feature
//! perturbation bounds `lower <= delta <= upper`:
//!
//! * `pgd_l1` - projected gradient descent on a continuous relaxation inside
//!   the L1 ball of radius `epsilon`, rounded back to binary features at each
//!   iterate; the best rounded iterate is kept;
//! * `bca` - bit coordinate ascent, one feature addition per round chosen by
//!   the gradient of the benign log-probability;
//! * `grosse` - one feature addition per round chosen by the forward
//!   derivative of the benign probability;
//! * `unbounded_gradient` - box-clipped gradient descent for `epsilon`
//!   iterations with no L1 budget.
//!
//! `bca` and `grosse` add at most `floor(epsilon)` features and stop as soon as
//! the sample is classified benign.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureVector, Label, Profile};
use crate::error::{Error, Result};
use crate::inference::{Approximation, ParticleSet, Posterior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackFamily {
    PgdL1,
    Bca,
    Grosse,
    UnboundedGradient,
}

impl AttackFamily {
    pub const ALL: [AttackFamily; 4] = [
        AttackFamily::PgdL1,
        AttackFamily::Bca,
        AttackFamily::Grosse,
        AttackFamily::UnboundedGradient,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AttackFamily::PgdL1 => "pgd_l1",
            AttackFamily::Bca => "bca",
            AttackFamily::Grosse => "grosse",
            AttackFamily::UnboundedGradient => "unbounded_gradient",
        }
    }
}

impl fmt::Display for AttackFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AttackFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackFamily::ALL
            .into_iter()
            .find(|a| a.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown attack {s:?}, expected one of pgd_l1, bca, grosse, unbounded_gradient"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Features may only be switched on / increased.
    #[default]
    AddOnly,
    /// Any change within the per-feature bounds.
    Box,
}

/// Caller-supplied per-feature bounds on the perturbation. They are
/// intersected with the feature range `[0, 1]` and the direction constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub family: AttackFamily,
    /// L1 budget for `pgd_l1`, maximum additions for `bca` / `grosse`,
    /// iteration count for `unbounded_gradient`.
    pub epsilon: f64,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub bounds: Option<PerturbationBounds>,
    /// Networks averaged for the attacker's gradient. `None` uses every
    /// stored particle, or `n_inference` draws for dropout / VI.
    #[serde(default)]
    pub n_particles_for_gradient: Option<usize>,
    #[serde(default = "default_domain")]
    pub domain: Profile,
    #[serde(default)]
    pub seed: u64,
}

fn default_step() -> f64 {
    1.0
}

fn default_iterations() -> usize {
    50
}

fn default_domain() -> Profile {
    Profile::Binary
}

impl AttackSpec {
    pub fn new(family: AttackFamily, epsilon: f64) -> Self {
        AttackSpec {
            family,
            epsilon,
            step_size: default_step(),
            iterations: default_iterations(),
            direction: match family {
                AttackFamily::UnboundedGradient => Direction::Box,
                _ => Direction::AddOnly,
            },
            bounds: None,
            n_particles_for_gradient: None,
            domain: Profile::Binary,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "attack epsilon must be a finite non-negative number, got {}",
                self.epsilon
            )));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::Config("attack step size must be positive".into()));
        }
        if let Some(b) = &self.bounds {
            Error::check_dim(b.lower.len(), b.upper.len())?;
            for (&lo, &hi) in b.lower.iter().zip(&b.upper) {
                if lo > 0.0 || hi < 0.0 {
                    return Err(Error::Config("bounds must satisfy lower <= 0 <= upper".into()));
                }
                if self.direction == Direction::AddOnly && lo < 0.0 {
                    return Err(Error::Config(
                        "negative lower bounds are only allowed in box mode".into(),
                    ));
                }
            }
        }
        match self.family {
            AttackFamily::Bca | AttackFamily::Grosse if self.direction != Direction::AddOnly => {
                return Err(Error::Config(format!("{} only adds features", self.family)));
            }
            AttackFamily::UnboundedGradient if self.direction != Direction::Box => {
                return Err(Error::Config(format!("{} requires box mode", self.family)));
            }
            AttackFamily::PgdL1 | AttackFamily::Bca | AttackFamily::Grosse
                if self.domain != Profile::Binary =>
            {
                return Err(Error::Config(format!("{} requires binary features", self.family)));
            }
            _ => {}
        }
        Ok(())
    }

    /// Effective per-feature bounds for input `x`.
    fn bounds_for(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut lower: Vec<f64> = match self.direction {
            Direction::AddOnly => vec![0.0; x.len()],
            Direction::Box => x.iter().map(|v| -v).collect(),
        };
        let mut upper: Vec<f64> = x.iter().map(|v| (1.0 - v).max(0.0)).collect();
        if let Some(b) = &self.bounds {
            Error::check_dim(x.len(), b.lower.len())?;
            for j in 0..x.len() {
                lower[j] = lower[j].max(b.lower[j]).min(0.0);
                upper[j] = upper[j].min(b.upper[j]).max(0.0);
            }
        }
        Ok((lower, upper))
    }

    /// `attack:<family>:<epsilon>`
    pub fn provenance(&self) -> String {
        format!("attack:{}:{}", self.family, self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationResult {
    pub original: FeatureVector,
    pub adversarial: FeatureVector,
    /// Indices whose value changed, ascending.
    pub flipped_indices: Vec<usize>,
    pub l1_cost: f64,
    /// The particle-averaged prediction of the adversarial sample is benign.
    pub evaded: bool,
    pub malware_prob: f64,
    pub iterations: usize,
}

/// Particle set the attacker differentiates through.
pub fn attacker_view(post: &Posterior, spec: &AttackSpec) -> Result<ParticleSet> {
    let n = spec.n_particles_for_gradient.unwrap_or(match &post.approx {
        Approximation::Map(_) => 1,
        Approximation::Ensemble(ps) | Approximation::Svgd(ps) => ps.len(),
        Approximation::Dropout { .. } | Approximation::Vi(_) => post.n_inference,
    });
    post.particle_set(n, spec.seed)
}

/// Runs the attack named by `spec.family` against `post`.
pub fn attack(post: &Posterior, x: &FeatureVector, spec: &AttackSpec) -> Result<PerturbationResult> {
    spec.validate()?;
    let view = attacker_view(post, spec)?;
    attack_with(&view, x, spec)
}

pub fn attack_pgd_l1(post: &Posterior, x: &FeatureVector, spec: &AttackSpec) -> Result<PerturbationResult> {
    expect_family(spec, AttackFamily::PgdL1)?;
    attack(post, x, spec)
}

pub fn attack_bca(post: &Posterior, x: &FeatureVector, spec: &AttackSpec) -> Result<PerturbationResult> {
    expect_family(spec, AttackFamily::Bca)?;
    attack(post, x, spec)
}

pub fn attack_grosse(post: &Posterior, x: &FeatureVector, spec: &AttackSpec) -> Result<PerturbationResult> {
    expect_family(spec, AttackFamily::Grosse)?;
    attack(post, x, spec)
}

pub fn attack_unbounded_gradient(
    post: &Posterior,
    x: &FeatureVector,
    spec: &AttackSpec,
) -> Result<PerturbationResult> {
    expect_family(spec, AttackFamily::UnboundedGradient)?;
    attack(post, x, spec)
}

fn expect_family(spec: &AttackSpec, family: AttackFamily) -> Result<()> {
    if spec.family == family {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "attack spec is for {}, not {family}",
            spec.family
        )))
    }
}

/// Attack against an explicit particle set.
pub fn attack_with(view: &ParticleSet, x: &FeatureVector, spec: &AttackSpec) -> Result<PerturbationResult> {
    let dim = view
        .particles
        .first()
        .map(|p| p.arch().input_dim)
        .unwrap_or(x.dim());
    Error::check_dim(dim, x.dim())?;
    if spec.domain == Profile::Binary && !x.is_binary() {
        return Err(Error::precondition("binary attacks need a binary input"));
    }
    match spec.family {
        AttackFamily::PgdL1 => pgd_l1(view, x, spec),
        AttackFamily::Bca => greedy_additions(view, x, spec, Selection::LogProbGradient),
        AttackFamily::Grosse => greedy_additions(view, x, spec, Selection::ProbJacobian),
        AttackFamily::UnboundedGradient => unbounded(view, x, spec),
    }
}

fn finish(view: &ParticleSet, x: &FeatureVector, adv: Vec<f64>, iterations: usize) -> Result<PerturbationResult> {
    let adversarial = FeatureVector::from_dense(&adv);
    let orig = x.to_dense();
    let flipped_indices: Vec<usize> = (0..orig.len()).filter(|&j| orig[j] != adv[j]).collect();
    let l1_cost = orig.iter().zip(&adv).map(|(a, b)| (a - b).abs()).sum();
    let malware_prob = view.malware_prob(&adversarial)?;
    Ok(PerturbationResult {
        original: x.clone(),
        adversarial,
        flipped_indices,
        l1_cost,
        evaded: malware_prob < 0.5,
        malware_prob,
        iterations,
    })
}

#[derive(Clone, Copy)]
enum Selection {
    /// Gradient of the mean benign log-probability (BCA).
    LogProbGradient,
    /// Forward derivative of the mean benign probability (Grosse et al.).
    ProbJacobian,
}

fn greedy_additions(
    view: &ParticleSet,
    x: &FeatureVector,
    spec: &AttackSpec,
    selection: Selection,
) -> Result<PerturbationResult> {
    let mut cur = x.to_dense();
    let (_, upper) = spec.bounds_for(&cur)?;
    let max_flips = spec.epsilon.floor() as usize;
    let mut rounds = 0;
    while rounds < max_flips {
        let fv = FeatureVector::from_dense(&cur);
        if view.malware_prob(&fv)? < 0.5 {
            break;
        }
        let score: Vec<f64> = match selection {
            Selection::LogProbGradient => view
                .mean_loss_grad_input(&fv, Label::Benign)?
                .into_iter()
                .map(|g| -g)
                .collect(),
            Selection::ProbJacobian => view.mean_prob_grad_input(&fv, Label::Benign)?,
        };
        let best = (0..cur.len())
            .filter(|&j| cur[j] == 0.0 && upper[j] >= 1.0)
            .filter(|&j| score[j] > 0.0)
            .fold(None, |acc: Option<usize>, j| match acc {
                Some(b) if score[b] >= score[j] => Some(b),
                _ => Some(j),
            });
        let Some(j) = best else { break };
        cur[j] = 1.0;
        rounds += 1;
    }
    finish(view, x, cur, rounds)
}

/// Euclidean projection of `v` onto `{lower <= d <= upper, ||d||_1 <= radius}`
/// for bounds with `lower <= 0 <= upper`.
///
/// The solution is `clip(soft_threshold(v, tau), lower, upper)` with the
/// smallest `tau >= 0` meeting the budget, found by bisection.
pub fn project_l1_box(v: &[f64], lower: &[f64], upper: &[f64], radius: f64) -> Vec<f64> {
    let shrink = |tau: f64| -> Vec<f64> {
        v.iter()
            .zip(lower.iter().zip(upper))
            .map(|(&x, (&lo, &hi))| {
                let s = (x.abs() - tau).max(0.0) * x.signum();
                s.clamp(lo, hi)
            })
            .collect()
    };
    let l1 = |d: &[f64]| d.iter().map(|x| x.abs()).sum::<f64>();

    let d0 = shrink(0.0);
    if l1(&d0) <= radius {
        return d0;
    }
    let mut lo = 0.0;
    let mut hi = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if l1(&shrink(mid)) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    shrink(hi)
}

/// Rounds a relaxed perturbation to binary features: among coordinates with
/// `|delta_j| > 0.5`, the `budget` largest (ties to the lower index) are
/// flipped.
pub fn binarize(x: &[f64], delta: &[f64], budget: usize) -> Vec<f64> {
    let mut cand: Vec<usize> = (0..x.len()).filter(|&j| delta[j].abs() > 0.5).collect();
    cand.sort_by(|&a, &b| {
        delta[b]
            .abs()
            .partial_cmp(&delta[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut out = x.to_vec();
    for &j in cand.iter().take(budget) {
        out[j] = if delta[j] > 0.0 { 1.0 } else { 0.0 };
    }
    out
}

fn unit(mut g: Vec<f64>) -> Option<Vec<f64>> {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    g.iter_mut().for_each(|v| *v /= norm);
    Some(g)
}

fn pgd_l1(view: &ParticleSet, x: &FeatureVector, spec: &AttackSpec) -> Result<PerturbationResult> {
    let orig = x.to_dense();
    if spec.epsilon == 0.0 {
        return finish(view, x, orig, 0);
    }
    let (lower, upper) = spec.bounds_for(&orig)?;
    let budget = spec.epsilon.floor() as usize;
    let mut delta = vec![0.0; orig.len()];
    let mut best = orig.clone();
    let mut best_prob = view.malware_prob(x)?;
    let mut used = 0;

    for it in 0..spec.iterations {
        let point: Vec<f64> = orig.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let g = view.mean_loss_grad_input(&FeatureVector::from_dense(&point), Label::Benign)?;
        let Some(dir) = unit(g) else { break };
        let stepped: Vec<f64> = delta
            .iter()
            .zip(&dir)
            .map(|(d, g)| d - spec.step_size * g)
            .collect();
        delta = project_l1_box(&stepped, &lower, &upper, spec.epsilon);
        used = it + 1;

        let cand = match spec.domain {
            Profile::Binary => binarize(&orig, &delta, budget),
            Profile::Continuous => orig.iter().zip(&delta).map(|(a, b)| a + b).collect(),
        };
        let p = view.malware_prob(&FeatureVector::from_dense(&cand))?;
        if p < best_prob {
            best_prob = p;
            best = cand;
        }
    }
    finish(view, x, best, used)
}

fn unbounded(view: &ParticleSet, x: &FeatureVector, spec: &AttackSpec) -> Result<PerturbationResult> {
    let orig = x.to_dense();
    let (lower, upper) = spec.bounds_for(&orig)?;
    let iterations = spec.epsilon.floor() as usize;
    let round = |d: &[f64]| -> Vec<f64> {
        orig.iter()
            .zip(d)
            .map(|(a, b)| match spec.domain {
                Profile::Binary => {
                    if a + b >= 0.5 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Profile::Continuous => a + b,
            })
            .collect()
    };
    let mut delta = vec![0.0; orig.len()];
    let mut used = 0;
    for _ in 0..iterations {
        if view.malware_prob(&FeatureVector::from_dense(&round(&delta)))? < 0.5 {
            break;
        }
        let point: Vec<f64> = orig.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let g = view.mean_loss_grad_input(&FeatureVector::from_dense(&point), Label::Benign)?;
        let Some(dir) = unit(g) else { break };
        for j in 0..delta.len() {
            delta[j] = (delta[j] - spec.step_size * dir[j]).clamp(lower[j], upper[j]);
        }
        used += 1;
    }
    finish(view, x, round(&delta), used)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attempted: usize,
    pub evaded: usize,
    /// `None` when nothing was attacked (0/0).
    pub evasion_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchAttack {
    /// Adversarial samples, all labelled malware, tagged
    /// `attack:<family>:<epsilon>`.
    pub adversarial: Dataset,
    pub results: Vec<PerturbationResult>,
    pub summary: AttackSummary,
}

/// Attacks every malware sample of `d` (benign samples are ignored). Callers
/// reproducing detection experiments pass only true positives, see
/// [`true_positive_malware`].
pub fn batch_attack(post: &Posterior, d: &Dataset, spec: &AttackSpec) -> Result<BatchAttack> {
    let spec = AttackSpec {
        domain: d.profile(),
        ..spec.clone()
    };
    spec.validate()?;
    Error::check_dim(post.arch.input_dim, d.dim())?;
    let view = attacker_view(post, &spec)?;
    let malware = d.filter_label(Label::Malware);
    let results = malware
        .samples()
        .par_iter()
        .map(|x| attack_with(&view, x, &spec))
        .collect::<Result<Vec<_>>>()?;
    let evaded = results.iter().filter(|r| r.evaded).count();
    let summary = AttackSummary {
        attempted: results.len(),
        evaded,
        evasion_rate: (!results.is_empty()).then(|| evaded as f64 / results.len() as f64),
    };
    let adversarial = Dataset::new(
        d.dim(),
        results.iter().map(|r| r.adversarial.clone()).collect(),
        vec![Label::Malware; results.len()],
        d.profile(),
        spec.provenance(),
    )?;
    Ok(BatchAttack {
        adversarial,
        results,
        summary,
    })
}

/// Malware samples the posterior's mean prediction already flags as malware.
pub fn true_positive_malware(post: &Posterior, d: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let set = post.particle_set(n, seed)?;
    let mut keep = Vec::new();
    for (i, (x, y)) in d.iter().enumerate() {
        if y == Label::Malware && set.malware_prob(x)? >= 0.5 {
            keep.push(i);
        }
    }
    Ok(d.subset(&keep))
}
