//! Posterior approximations over network weights and Monte Carlo prediction.
//!
//! Five approximations are supported:
//!
//! * `map` - a single point estimate, the deterministic baseline;
//! * `dropout` - one network whose hidden units are randomly dropped both in
//!   training and at prediction time;
//! * `vi` - a mean-field Gaussian over the weights trained on the ELBO with
//!   the reparameterisation trick;
//! * `ensemble` - independently trained networks that differ only in seed;
//! * `svgd` - particles trained jointly with Stein variational gradient
//!   descent, whose kernel term pushes particles apart.
//!
//! All training is plain mini-batch SGD with a fixed learning rate and is
//! bit-reproducible from `TrainConfig::seed`.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureVector, Label};
use crate::error::{Error, Result};
use crate::network::{
    self, init_params, DropoutMask, Example, MlpArchitecture, ParameterParticle,
};
use crate::rng::{self, stream};
use crate::uncertainty::PredictiveSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Map,
    Dropout,
    Vi,
    Ensemble,
    Svgd,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Map,
        Method::Dropout,
        Method::Vi,
        Method::Ensemble,
        Method::Svgd,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Map => "map",
            Method::Dropout => "dropout",
            Method::Vi => "vi",
            Method::Ensemble => "ensemble",
            Method::Svgd => "svgd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?}, expected one of map, dropout, vi, ensemble, svgd"
                ))
            })
    }
}

/// Which parameters the variational posterior treats as random.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationalScope {
    #[default]
    Full,
    /// Only the output layer is Gaussian; earlier layers are point estimates.
    LastLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Precision of the isotropic Gaussian prior on the weights.
    pub prior_precision: f64,
    /// Weight of the SVGD repulsive term.
    pub svgd_gamma: f64,
    pub dropout_rate: f64,
    pub n_particles: usize,
    pub vi_kl_weight: f64,
    pub vi_mc_samples: usize,
    pub vi_scope: VariationalScope,
    /// Initial standard deviation of every variational factor; the default
    /// corresponds to `rho = -3`.
    pub vi_init_sigma: f64,
    /// Monte Carlo samples used at prediction time.
    pub n_inference: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.05,
            seed: 0,
            prior_precision: 1e-4,
            svgd_gamma: 1.0,
            dropout_rate: 0.5,
            n_particles: 10,
            vi_kl_weight: 1.0,
            vi_mc_samples: 1,
            vi_scope: VariationalScope::Full,
            vi_init_sigma: softplus(-3.0),
            n_inference: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.n_particles == 0 {
            return bad("n_particles must be at least 1");
        }
        if self.n_inference == 0 {
            return bad("n_inference must be at least 1");
        }
        if !(self.prior_precision >= 0.0) {
            return bad("prior_precision must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if self.vi_mc_samples == 0 {
            return bad("vi_mc_samples must be at least 1");
        }
        if !(self.vi_init_sigma > 0.0) {
            return bad("vi_init_sigma must be positive");
        }
        Ok(())
    }
}

/// Mean-field Gaussian over the flattened weights, `sigma = softplus(rho)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianVariationalParams {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    /// Parameters before this index are deterministic (`sigma` ignored).
    pub stochastic_from: usize,
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`softplus`] for positive inputs.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

impl GaussianVariationalParams {
    pub fn new(mu: Vec<f64>, rho: Vec<f64>, stochastic_from: usize) -> Result<Self> {
        Error::check_dim(mu.len(), rho.len())?;
        if stochastic_from > mu.len() {
            return Err(Error::precondition("stochastic_from exceeds parameter count"));
        }
        Ok(GaussianVariationalParams {
            mu,
            rho,
            stochastic_from,
        })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| softplus(r)).collect()
    }

    /// `theta = mu + sigma * eps` on the stochastic block, `mu` elsewhere.
    pub fn reparameterise(&self, eps: &[f64]) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.rho)
            .zip(eps)
            .enumerate()
            .map(|(k, ((&m, &r), &e))| {
                if k < self.stochastic_from {
                    m
                } else {
                    m + softplus(r) * e
                }
            })
            .collect()
    }

    fn draw_noise(&self, rng: &mut rng::Rng) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                if k < self.stochastic_from {
                    0.0
                } else {
                    StandardNormal.sample(rng)
                }
            })
            .collect()
    }

    /// `KL(q || N(0, 1/prior_precision I))` summed over the stochastic block.
    pub fn kl_to_prior(&self, prior_precision: f64) -> f64 {
        let half_log_prec = 0.5 * prior_precision.ln();
        (self.stochastic_from..self.len())
            .map(|k| {
                let s = softplus(self.rho[k]);
                let m = self.mu[k];
                -s.ln() - half_log_prec + 0.5 * prior_precision * (s * s + m * m) - 0.5
            })
            .sum()
    }
}

/// Closed-form `KL(N(mu, sigma^2) || N(0, 1/precision))` for one coordinate.
pub fn gaussian_kl(mu: f64, sigma: f64, precision: f64) -> f64 {
    -sigma.ln() - 0.5 * precision.ln() + 0.5 * precision * (sigma * sigma + mu * mu) - 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub enum Approximation {
    Map(ParameterParticle),
    Dropout { particle: ParameterParticle, rate: f64 },
    Vi(GaussianVariationalParams),
    Ensemble(Vec<ParameterParticle>),
    Svgd(Vec<ParameterParticle>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub arch: MlpArchitecture,
    pub approx: Approximation,
    pub n_inference: usize,
}

impl Posterior {
    pub fn method(&self) -> Method {
        match self.approx {
            Approximation::Map(_) => Method::Map,
            Approximation::Dropout { .. } => Method::Dropout,
            Approximation::Vi(_) => Method::Vi,
            Approximation::Ensemble(_) => Method::Ensemble,
            Approximation::Svgd(_) => Method::Svgd,
        }
    }

    /// Stored particles for particle-based methods; the single network for
    /// MAP and dropout; empty for VI.
    pub fn particles(&self) -> &[ParameterParticle] {
        match &self.approx {
            Approximation::Map(p) => std::slice::from_ref(p),
            Approximation::Dropout { particle, .. } => std::slice::from_ref(particle),
            Approximation::Vi(_) => &[],
            Approximation::Ensemble(ps) | Approximation::Svgd(ps) => ps,
        }
    }

    /// Draws `k` concrete networks. MAP always yields its single particle;
    /// dropout yields thinned copies under `k` random masks; VI yields `k`
    /// reparameterised draws; ensemble and SVGD yield their first `k` stored
    /// particles.
    pub fn sample_particles(&self, k: usize, seed: u64) -> Result<Vec<ParameterParticle>> {
        if k == 0 {
            return Err(Error::precondition("at least one posterior sample is required"));
        }
        let mut rng = rng::seeded(seed, stream::SAMPLE);
        match &self.approx {
            Approximation::Map(p) => Ok(vec![p.clone()]),
            Approximation::Dropout { particle, rate } => (0..k)
                .map(|_| {
                    let mask = DropoutMask::sample(&self.arch, *rate, &mut rng);
                    particle.apply_mask(&mask)
                })
                .collect(),
            Approximation::Vi(vp) => (0..k)
                .map(|_| {
                    let eps = vp.draw_noise(&mut rng);
                    ParameterParticle::from_flat(&self.arch, vp.reparameterise(&eps))
                })
                .collect(),
            Approximation::Ensemble(ps) | Approximation::Svgd(ps) => {
                if k > ps.len() {
                    return Err(Error::precondition(format!(
                        "requested {k} samples but the posterior stores {} particles",
                        ps.len()
                    )));
                }
                Ok(ps[..k].to_vec())
            }
        }
    }

    /// Particle set for repeated prediction with one draw.
    pub fn particle_set(&self, k: usize, seed: u64) -> Result<ParticleSet> {
        Ok(ParticleSet {
            particles: self.sample_particles(k, seed)?,
        })
    }
}

/// A fixed draw of networks used for Monte Carlo prediction and for the
/// attacker's expected-loss gradient.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    pub particles: Vec<ParameterParticle>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<PredictiveSample> {
        let rows = self
            .particles
            .iter()
            .map(|p| network::forward(p, x, None))
            .collect::<Result<Vec<_>>>()?;
        PredictiveSample::new(rows)
    }

    /// Mean malware probability across the set.
    pub fn malware_prob(&self, x: &FeatureVector) -> Result<f64> {
        Ok(self.predict(x)?.mean()[Label::Malware.index()])
    }

    /// Particle-averaged input gradient of `-log p(target | x)`.
    pub fn mean_loss_grad_input(&self, x: &FeatureVector, target: Label) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; x.dim()];
        for p in &self.particles {
            let g = network::loss_grad_input(p, x, target)?;
            acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let n = self.particles.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// Input gradient of the particle-averaged probability of `class`.
    pub fn mean_prob_grad_input(&self, x: &FeatureVector, class: Label) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; x.dim()];
        for p in &self.particles {
            // d p_c / dx = -p_c * d(-log p_c)/dx
            let (probs, g) = network::input_gradient(p, x, class)?;
            let pc = probs[class.index()];
            acc.iter_mut().zip(&g).for_each(|(a, b)| *a -= pc * b);
        }
        let n = self.particles.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

/// Monte Carlo predictive sample: one probability row per drawn network.
/// MAP always produces exactly one row.
pub fn posterior_predict(
    post: &Posterior,
    x: &FeatureVector,
    n: usize,
    seed: u64,
) -> Result<PredictiveSample> {
    post.particle_set(n, seed)?.predict(x)
}

/// Expected-loss input gradient a perfect-knowledge attacker uses against a
/// posterior: the mean of the per-network gradients over `n` drawn networks.
pub fn posterior_grad_input(
    post: &Posterior,
    x: &FeatureVector,
    target: Label,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    post.particle_set(n, seed)?.mean_loss_grad_input(x, target)
}

/// RBF kernel matrix over a particle set with the median-distance bandwidth.
#[derive(Debug, Clone)]
pub struct SvgdKernel {
    /// `k[i][j] = exp(-||theta_i - theta_j||^2 / (2 h^2))`
    pub k: Vec<Vec<f64>>,
    pub bandwidth: f64,
    /// `repulsion[i] = sum_j grad_{theta_j} k(theta_j, theta_i)`
    pub repulsion: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Kernel, bandwidth and summed kernel gradients for one SVGD iteration.
///
/// The bandwidth is the median of the `n(n-1)/2` pairwise Euclidean
/// distances; it falls back to 1 for a single particle or when every
/// distance is zero.
pub fn svgd_kernel<V: AsRef<[f64]>>(particles: &[V]) -> Result<SvgdKernel> {
    let n = particles.len();
    if n == 0 {
        return Err(Error::precondition("svgd_kernel needs at least one particle"));
    }
    let d = particles[0].as_ref().len();
    for p in particles {
        Error::check_dim(d, p.as_ref().len())?;
    }

    let mut sq = vec![vec![0.0; n]; n];
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let s = sq_dist(particles[i].as_ref(), particles[j].as_ref());
            sq[i][j] = s;
            sq[j][i] = s;
            dists.push(s.sqrt());
        }
    }
    let mut h = if dists.is_empty() { 0.0 } else { median(dists) };
    if !(h > 0.0) {
        h = 1.0;
    }
    let h2 = h * h;
    let k: Vec<Vec<f64>> = sq
        .iter()
        .map(|row| row.iter().map(|&s| (-s / (2.0 * h2)).exp()).collect())
        .collect();

    // grad_{theta_j} k(theta_j, theta_i) = -k_ji (theta_j - theta_i) / h^2
    let repulsion = (0..n)
        .map(|i| {
            let ti = particles[i].as_ref();
            let mut r = vec![0.0; d];
            for j in (0..n).filter(|&j| j != i) {
                let c = -k[j][i] / h2;
                for ((rv, &a), &b) in r.iter_mut().zip(particles[j].as_ref()).zip(ti) {
                    *rv += c * (a - b);
                }
            }
            r
        })
        .collect();

    Ok(SvgdKernel {
        k,
        bandwidth: h,
        repulsion,
    })
}

/// Mean Euclidean distance over particle pairs (0 for fewer than two).
pub fn mean_pairwise_distance(particles: &[ParameterParticle]) -> f64 {
    let n = particles.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += sq_dist(particles[i].as_slice(), particles[j].as_slice()).sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Shuffled sample order for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(rng::derive(seed, epoch as u64), stream::SHUFFLE));
    idx
}

/// Mini-batches of one epoch as example slices.
pub fn epoch_batches<'a>(
    d: &'a Dataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<Example<'a>>> {
    let order = epoch_order(d.len(), seed, epoch);
    order
        .chunks(batch_size)
        .map(|c| c.iter().map(|&i| (&d.samples()[i], d.labels()[i])).collect())
        .collect()
}

fn check_finite(loss: f64, what: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite {what} loss ({loss})")))
    }
}

/// One SGD step on the regularised loss. Returns the batch loss.
pub fn sgd_step(
    p: &mut ParameterParticle,
    batch: &[Example<'_>],
    mask_seed: Option<u64>,
    learning_rate: f64,
    prior_precision: f64,
) -> Result<f64> {
    let (loss, grad) = network::loss_grad_params(p, batch, mask_seed, prior_precision)?;
    check_finite(loss, "training")?;
    for (t, g) in p.as_mut_slice().iter_mut().zip(&grad) {
        *t -= learning_rate * g;
    }
    Ok(loss)
}

/// One joint SVGD update of all particles on a shared batch:
///
/// `theta_i -= lr / n * sum_j [k(theta_j, theta_i) grad l(theta_j) - gamma grad_{theta_j} k(theta_j, theta_i)]`
///
/// Returns the mean particle loss and the bandwidth used.
pub fn svgd_step(
    particles: &mut [ParameterParticle],
    batch: &[Example<'_>],
    learning_rate: f64,
    gamma: f64,
    prior_precision: f64,
) -> Result<(f64, f64)> {
    let n = particles.len();
    let grads = particles
        .par_iter()
        .map(|p| network::loss_grad_params(p, batch, None, prior_precision))
        .collect::<Result<Vec<_>>>()?;
    let kernel = svgd_kernel(&particles.iter().map(|p| p.as_slice()).collect::<Vec<_>>())?;
    let step = learning_rate / n as f64;

    particles.par_iter_mut().enumerate().for_each(|(i, p)| {
        let d = p.len();
        let mut phi = vec![0.0; d];
        for (j, (_, g)) in grads.iter().enumerate() {
            let kji = kernel.k[j][i];
            for (f, &gv) in phi.iter_mut().zip(g) {
                *f += kji * gv;
            }
        }
        for ((t, f), r) in p.as_mut_slice().iter_mut().zip(&phi).zip(&kernel.repulsion[i]) {
            *t -= step * (f - gamma * r);
        }
    });

    let mut mean_loss = 0.0;
    for (l, _) in &grads {
        check_finite(*l, "svgd particle")?;
        mean_loss += l;
    }
    Ok((mean_loss / n as f64, kernel.bandwidth))
}

/// ELBO objective per training example for a fixed set of noise draws, and
/// its gradients with respect to `mu` and `rho`.
///
/// `loss = mean_s CE(mu + sigma * eps_s) + kl_scale * KL(q || prior)`; the
/// deterministic block (if any) gets the matching Gaussian log-prior penalty
/// instead of a KL term.
pub fn elbo_loss_grad(
    vp: &GaussianVariationalParams,
    arch: &MlpArchitecture,
    batch: &[Example<'_>],
    noise: &[Vec<f64>],
    prior_precision: f64,
    kl_scale: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if noise.is_empty() {
        return Err(Error::precondition("at least one noise draw is required"));
    }
    if !(prior_precision > 0.0) {
        return Err(Error::Config(
            "variational inference needs a positive prior precision".into(),
        ));
    }
    let d = vp.len();
    let s = noise.len() as f64;
    let mut g_mu = vec![0.0; d];
    let mut g_rho = vec![0.0; d];
    let mut nll = 0.0;
    for eps in noise {
        Error::check_dim(d, eps.len())?;
        let p = ParameterParticle::from_flat(arch, vp.reparameterise(eps))?;
        let (l, g) = network::loss_grad_params(&p, batch, None, 0.0)?;
        nll += l;
        for k in 0..d {
            g_mu[k] += g[k] / s;
            if k >= vp.stochastic_from {
                g_rho[k] += g[k] * eps[k] * sigmoid(vp.rho[k]) / s;
            }
        }
    }
    let mut loss = nll / s + kl_scale * vp.kl_to_prior(prior_precision);
    for k in 0..d {
        let m = vp.mu[k];
        g_mu[k] += kl_scale * prior_precision * m;
        if k < vp.stochastic_from {
            loss += kl_scale * 0.5 * prior_precision * m * m;
        } else {
            let sig = softplus(vp.rho[k]);
            g_rho[k] += kl_scale * (-1.0 / sig + prior_precision * sig) * sigmoid(vp.rho[k]);
        }
    }
    Ok((loss, g_mu, g_rho))
}

/// A trained posterior together with its mean training loss per epoch.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub posterior: Posterior,
    pub epoch_losses: Vec<f64>,
}

fn check_training_input(d: &Dataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<()> {
    arch.validate()?;
    cfg.validate()?;
    Error::check_dim(arch.input_dim, d.dim())?;
    d.require_both_classes()
}

fn run_sgd(
    d: &Dataset,
    p: &mut ParameterParticle,
    cfg: &TrainConfig,
    dropout: bool,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(d, cfg.batch_size, cfg.seed, epoch);
        let mut total = 0.0;
        for batch in &batches {
            let mask_seed = dropout.then(|| rng::derive(cfg.seed, step));
            total += sgd_step(p, batch, mask_seed, cfg.learning_rate, cfg.prior_precision)?;
            step += 1;
        }
        losses.push(total / batches.len() as f64);
    }
    Ok(losses)
}

fn fit_map(d: &Dataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<(ParameterParticle, Vec<f64>)> {
    let mut p = init_params(arch, cfg.seed);
    let losses = run_sgd(d, &mut p, cfg, false)?;
    Ok((p, losses))
}

/// Trains the requested approximation.
pub fn fit(method: Method, d: &Dataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<Fitted> {
    check_training_input(d, arch, cfg)?;
    let (approx, epoch_losses, arch) = match method {
        Method::Map => {
            let (p, l) = fit_map(d, arch, cfg)?;
            (Approximation::Map(p), l, arch.clone())
        }
        Method::Dropout => {
            let arch = arch.clone().with_dropout(cfg.dropout_rate)?;
            let mut p = init_params(&arch, cfg.seed);
            let l = run_sgd(d, &mut p, cfg, true)?;
            (
                Approximation::Dropout {
                    particle: p,
                    rate: cfg.dropout_rate,
                },
                l,
                arch,
            )
        }
        Method::Ensemble => {
            let members = (0..cfg.n_particles)
                .into_par_iter()
                .map(|i| {
                    let member_cfg = TrainConfig {
                        seed: cfg.seed.wrapping_add(i as u64),
                        ..cfg.clone()
                    };
                    fit_map(d, arch, &member_cfg)
                })
                .collect::<Result<Vec<_>>>()?;
            let n = members.len() as f64;
            let mut losses = vec![0.0; cfg.epochs];
            for (_, l) in &members {
                losses.iter_mut().zip(l).for_each(|(a, b)| *a += b / n);
            }
            (
                Approximation::Ensemble(members.into_iter().map(|m| m.0).collect()),
                losses,
                arch.clone(),
            )
        }
        Method::Svgd => {
            let init = (0..cfg.n_particles)
                .map(|i| init_params(arch, cfg.seed.wrapping_add(i as u64)))
                .collect();
            let (ps, l) = run_svgd(d, init, cfg)?;
            (Approximation::Svgd(ps), l, arch.clone())
        }
        Method::Vi => {
            let (vp, l) = run_vi(d, arch, cfg)?;
            (Approximation::Vi(vp), l, arch.clone())
        }
    };
    Ok(Fitted {
        posterior: Posterior {
            arch,
            approx,
            n_inference: cfg.n_inference,
        },
        epoch_losses,
    })
}

pub fn train_map(d: &Dataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<Posterior> {
    Ok(fit(Method::Map, d, arch, cfg)?.posterior)
}

/// Dropout-trained network; the returned posterior samples masks at
/// `cfg.dropout_rate` when predicting.
pub fn train_dropout(d: &Dataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<Posterior> {
    Ok(fit(Method::Dropout, d, arch, cfg)?.posterior)
}

/// `cfg.n_particles` MAP networks trained with seeds `seed, seed+1, ...`.
pub fn train_ensemble(d: &Dataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<Posterior> {
    Ok(fit(Method::Ensemble, d, arch, cfg)?.posterior)
}

/// SVGD particles initialised with seeds `seed, seed+1, ...`; batches follow
/// the same order as `train_map` with `cfg.seed`.
pub fn train_svgd(d: &Dataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<Posterior> {
    Ok(fit(Method::Svgd, d, arch, cfg)?.posterior)
}

pub fn train_vi(d: &Dataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<Posterior> {
    Ok(fit(Method::Vi, d, arch, cfg)?.posterior)
}

/// SVGD from caller-supplied initial particles.
pub fn train_svgd_from(
    d: &Dataset,
    init: Vec<ParameterParticle>,
    cfg: &TrainConfig,
) -> Result<Posterior> {
    let arch = init
        .first()
        .ok_or_else(|| Error::precondition("at least one initial particle is required"))?
        .arch()
        .clone();
    check_training_input(d, &arch, cfg)?;
    let (ps, _) = run_svgd(d, init, cfg)?;
    Ok(Posterior {
        arch,
        approx: Approximation::Svgd(ps),
        n_inference: cfg.n_inference,
    })
}

fn run_svgd(
    d: &Dataset,
    mut particles: Vec<ParameterParticle>,
    cfg: &TrainConfig,
) -> Result<(Vec<ParameterParticle>, Vec<f64>)> {
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(d, cfg.batch_size, cfg.seed, epoch);
        let mut total = 0.0;
        for batch in &batches {
            total += svgd_step(
                &mut particles,
                batch,
                cfg.learning_rate,
                cfg.svgd_gamma,
                cfg.prior_precision,
            )?
            .0;
        }
        losses.push(total / batches.len() as f64);
    }
    Ok((particles, losses))
}

fn run_vi(
    d: &Dataset,
    arch: &MlpArchitecture,
    cfg: &TrainConfig,
) -> Result<(GaussianVariationalParams, Vec<f64>)> {
    let mu = init_params(arch, cfg.seed).into_flat();
    let n = mu.len();
    let stochastic_from = match cfg.vi_scope {
        VariationalScope::Full => 0,
        VariationalScope::LastLayer => arch.last_layer_offset(),
    };
    let mut vp = GaussianVariationalParams::new(
        mu,
        vec![softplus_inv(cfg.vi_init_sigma); n],
        stochastic_from,
    )?;
    let kl_scale = cfg.vi_kl_weight / d.len() as f64;
    let mut noise_rng = rng::seeded(cfg.seed, stream::VI_NOISE);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(d, cfg.batch_size, cfg.seed, epoch);
        let mut total = 0.0;
        for batch in &batches {
            let noise: Vec<Vec<f64>> = (0..cfg.vi_mc_samples)
                .map(|_| vp.draw_noise(&mut noise_rng))
                .collect();
            let (loss, g_mu, g_rho) =
                elbo_loss_grad(&vp, arch, batch, &noise, cfg.prior_precision, kl_scale)?;
            check_finite(loss, "ELBO")?;
            for k in 0..n {
                vp.mu[k] -= cfg.learning_rate * g_mu[k];
                vp.rho[k] -= cfg.learning_rate * g_rho[k];
            }
            total += loss;
        }
        losses.push(total / batches.len() as f64);
    }
    Ok((vp, losses))
}

/// Fraction of `d` whose mean predicted label matches the true label.
pub fn accuracy(post: &Posterior, d: &Dataset, n: usize, seed: u64) -> Result<f64> {
    let set = post.particle_set(n, seed)?;
    let mut correct = 0usize;
    for (x, y) in d.iter() {
        let pred = if set.malware_prob(x)? >= 0.5 {
            Label::Malware
        } else {
            Label::Benign
        };
        correct += (pred == y) as usize;
    }
    Ok(correct as f64 / d.len().max(1) as f64)
}

/// Deterministic-pass accuracy of a single network.
pub fn particle_accuracy(p: &ParameterParticle, d: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for (x, y) in d.iter() {
        let pr = network::forward(p, x, None)?;
        let pred = if pr[1] >= 0.5 { Label::Malware } else { Label::Benign };
        correct += (pred == y) as usize;
    }
    Ok(correct as f64 / d.len().max(1) as f64)
}
