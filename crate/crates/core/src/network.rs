//! Feed-forward ReLU classifier with two softmax outputs (benign, malware).
//!
//! Parameters live in one flat `f64` buffer. Layer `l` contributes its weight
//! matrix (row-major, `out x in`) followed by its bias vector, layers in order
//! from input to output. Inputs are consumed sparsely: only non-zero features
//! touch the first layer.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureVector, Label};
use crate::error::{Error, Result};
use crate::rng::{self, stream, Rng};

pub const N_CLASSES: usize = 2;

/// Hidden widths used when a configuration does not specify any.
pub const DEFAULT_HIDDEN: [usize; 2] = [512, 256];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    /// Probability of zeroing a hidden unit when a dropout mask is applied.
    #[serde(default)]
    pub dropout_rate: f64,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>) -> Result<Self> {
        let arch = MlpArchitecture {
            input_dim,
            hidden_sizes,
            dropout_rate: 0.0,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        self.dropout_rate = rate;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if self.hidden_sizes.is_empty() {
            return Err(Error::Config("at least one hidden layer is required".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// `[input, hidden.., 2]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.hidden_sizes.len() + 2);
        v.push(self.input_dim);
        v.extend_from_slice(&self.hidden_sizes);
        v.push(N_CLASSES);
        v
    }

    pub fn n_layers(&self) -> usize {
        self.hidden_sizes.len() + 1
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes()
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Start offset of the output layer's parameters in the flat vector.
    pub fn last_layer_offset(&self) -> usize {
        let sizes = self.layer_sizes();
        sizes[..sizes.len() - 1]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn layout(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_sizes()
            .windows(2)
            .map(|w| {
                let l = LayerLayout {
                    n_in: w[0],
                    n_out: w[1],
                    w: offset,
                    b: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                l
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
}

/// One concrete set of network weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterParticle {
    arch: MlpArchitecture,
    params: Vec<f64>,
}

impl ParameterParticle {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        ParameterParticle {
            arch: arch.clone(),
            params: vec![0.0; arch.n_params()],
        }
    }

    pub fn from_flat(arch: &MlpArchitecture, params: Vec<f64>) -> Result<Self> {
        Error::check_dim(arch.n_params(), params.len())?;
        Ok(ParameterParticle {
            arch: arch.clone(),
            params,
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.params
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.params
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Weight matrix (row-major, `out x in`) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let lay = self.arch.layout()[l];
        (
            &self.params[lay.w..lay.b],
            &self.params[lay.b..lay.b + lay.n_out],
        )
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let lay = self.arch.layout()[l];
        let (w, rest) = self.params[lay.w..].split_at_mut(lay.b - lay.w);
        (w, &mut rest[..lay.n_out])
    }

    /// Folds a dropout mask into the following layer's weights, giving the
    /// deterministic thinned network the mask describes.
    pub fn apply_mask(&self, mask: &DropoutMask) -> Result<ParameterParticle> {
        mask.check(&self.arch)?;
        let mut out = self.clone();
        let layout = self.arch.layout();
        for (h, keep) in mask.keep.iter().enumerate() {
            let next = layout[h + 1];
            for (i, &k) in keep.iter().enumerate() {
                let s = if k { mask.scale() } else { 0.0 };
                for o in 0..next.n_out {
                    out.params[next.w + o * next.n_in + i] *= s;
                }
            }
        }
        Ok(out)
    }
}

/// He-style uniform initialisation: weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)),
/// biases zero.
pub fn init_params(arch: &MlpArchitecture, seed: u64) -> ParameterParticle {
    let mut rng = rng::seeded(seed, stream::INIT);
    let mut p = ParameterParticle::zeros(arch);
    for lay in arch.layout() {
        let bound = (6.0 / lay.n_in as f64).sqrt();
        for w in &mut p.params[lay.w..lay.b] {
            *w = rng.random_range(-bound..bound);
        }
    }
    p
}

/// Per-hidden-layer keep flags. Kept units are scaled by `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    keep: Vec<Vec<bool>>,
    rate: f64,
}

impl DropoutMask {
    pub fn new(keep: Vec<Vec<bool>>, rate: f64) -> Self {
        DropoutMask { keep, rate }
    }

    pub fn sample(arch: &MlpArchitecture, rate: f64, rng: &mut Rng) -> Self {
        let keep = arch
            .hidden_sizes
            .iter()
            .map(|&n| (0..n).map(|_| rng.random::<f64>() >= rate).collect())
            .collect();
        DropoutMask { keep, rate }
    }

    pub fn from_seed(arch: &MlpArchitecture, rate: f64, seed: u64) -> Self {
        Self::sample(arch, rate, &mut rng::seeded(seed, stream::DROPOUT))
    }

    pub fn keep(&self) -> &[Vec<bool>] {
        &self.keep
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn scale(&self) -> f64 {
        1.0 / (1.0 - self.rate)
    }

    fn check(&self, arch: &MlpArchitecture) -> Result<()> {
        Error::check_dim(arch.hidden_sizes.len(), self.keep.len())?;
        for (k, &n) in self.keep.iter().zip(&arch.hidden_sizes) {
            Error::check_dim(n, k.len())?;
        }
        Ok(())
    }
}

/// Activations recorded by a forward pass, consumed by backprop.
struct Trace {
    /// Hidden pre-activations per hidden layer.
    pre: Vec<Vec<f64>>,
    /// Hidden outputs after relu and mask.
    post: Vec<Vec<f64>>,
    probs: [f64; N_CLASSES],
    log_norm: f64,
    logits: [f64; N_CLASSES],
}

fn softmax2(z: [f64; 2]) -> ([f64; 2], f64) {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    ([e0 / s, e1 / s], m + s.ln())
}

fn run(p: &ParameterParticle, x: &[(usize, f64)], mask: Option<&DropoutMask>) -> Trace {
    let layout = p.arch.layout();
    let params = &p.params;
    let n_hidden = layout.len() - 1;
    let mut pre = Vec::with_capacity(n_hidden);
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(n_hidden);

    for (l, lay) in layout.iter().enumerate() {
        let w = &params[lay.w..lay.b];
        let mut z = params[lay.b..lay.b + lay.n_out].to_vec();
        if l == 0 {
            for &(j, v) in x {
                for (o, zo) in z.iter_mut().enumerate() {
                    *zo += w[o * lay.n_in + j] * v;
                }
            }
        } else {
            let a = &post[l - 1];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * lay.n_in..(o + 1) * lay.n_in];
                *zo += row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>();
            }
        }
        if l < n_hidden {
            let mut a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            if let Some(m) = mask {
                let s = m.scale();
                for (ai, &k) in a.iter_mut().zip(&m.keep[l]) {
                    *ai = if k { *ai * s } else { 0.0 };
                }
            }
            pre.push(z);
            post.push(a);
        } else {
            let logits = [z[0], z[1]];
            let (probs, log_norm) = softmax2(logits);
            return Trace {
                pre,
                post,
                probs,
                log_norm,
                logits,
            };
        }
    }
    unreachable!("architecture has an output layer")
}

/// Backpropagates `d loss / d logits` through a recorded pass. Parameter
/// gradients are accumulated into `grad` scaled by `scale`; the input
/// gradient is written to `input_grad` when requested.
fn backprop(
    p: &ParameterParticle,
    x: &[(usize, f64)],
    trace: &Trace,
    mask: Option<&DropoutMask>,
    dlogits: [f64; N_CLASSES],
    scale: f64,
    mut grad: Option<&mut [f64]>,
    input_grad: Option<&mut [f64]>,
) {
    let layout = p.arch.layout();
    let params = &p.params;
    let mut delta: Vec<f64> = dlogits.to_vec();

    for l in (0..layout.len()).rev() {
        let lay = layout[l];
        let w = &params[lay.w..lay.b];
        if let Some(g) = grad.as_deref_mut() {
            if l == 0 {
                for (o, &d) in delta.iter().enumerate() {
                    let d = d * scale;
                    for &(j, v) in x {
                        g[lay.w + o * lay.n_in + j] += d * v;
                    }
                    g[lay.b + o] += d;
                }
            } else {
                let a = &trace.post[l - 1];
                for (o, &d) in delta.iter().enumerate() {
                    let d = d * scale;
                    let row = &mut g[lay.w + o * lay.n_in..lay.w + (o + 1) * lay.n_in];
                    for (gi, ai) in row.iter_mut().zip(a) {
                        *gi += d * ai;
                    }
                    g[lay.b + o] += d;
                }
            }
        }
        if l == 0 {
            break;
        }
        // d loss / d (hidden output of layer l-1)
        let mut da = vec![0.0; lay.n_in];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &w[o * lay.n_in..(o + 1) * lay.n_in];
            for (dai, wi) in da.iter_mut().zip(row) {
                *dai += wi * d;
            }
        }
        let h = l - 1;
        let z = &trace.pre[h];
        for (i, dai) in da.iter_mut().enumerate() {
            let mut g = if z[i] > 0.0 { *dai } else { 0.0 };
            if let Some(m) = mask {
                g = if m.keep[h][i] { g * m.scale() } else { 0.0 };
            }
            *dai = g;
        }
        delta = da;
    }

    if let Some(ig) = input_grad {
        let lay = layout[0];
        let w = &params[lay.w..lay.b];
        ig.iter_mut().for_each(|v| *v = 0.0);
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &w[o * lay.n_in..(o + 1) * lay.n_in];
            for (gi, wi) in ig.iter_mut().zip(row) {
                *gi += wi * d;
            }
        }
    }
}

fn check_mask(p: &ParameterParticle, mask: Option<&DropoutMask>) -> Result<()> {
    match mask {
        Some(m) => m.check(&p.arch),
        None => Ok(()),
    }
}

/// Class probabilities `[p(benign), p(malware)]`.
pub fn forward(
    p: &ParameterParticle,
    x: &FeatureVector,
    mask: Option<&DropoutMask>,
) -> Result<[f64; N_CLASSES]> {
    Error::check_dim(p.arch.input_dim, x.dim())?;
    check_mask(p, mask)?;
    Ok(run(p, x.entries(), mask).probs)
}

/// Output-layer logits; mostly useful for inspection and tests.
pub fn logits(
    p: &ParameterParticle,
    x: &FeatureVector,
    mask: Option<&DropoutMask>,
) -> Result<[f64; N_CLASSES]> {
    Error::check_dim(p.arch.input_dim, x.dim())?;
    check_mask(p, mask)?;
    Ok(run(p, x.entries(), mask).logits)
}

pub fn forward_dense(p: &ParameterParticle, x: &[f64]) -> Result<[f64; N_CLASSES]> {
    Error::check_dim(p.arch.input_dim, x.len())?;
    Ok(run(p, &nonzeros(x), None).probs)
}

fn nonzeros(x: &[f64]) -> Vec<(usize, f64)> {
    x.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect()
}

pub type Example<'a> = (&'a FeatureVector, Label);

/// Mean cross-entropy over `batch` plus `(prior_precision / 2) * ||theta||^2`,
/// and its gradient in flattened parameter order.
///
/// With `mask_seed` set, every example gets its own dropout mask drawn at the
/// particle architecture's dropout rate.
pub fn loss_grad_params(
    p: &ParameterParticle,
    batch: &[Example<'_>],
    mask_seed: Option<u64>,
    prior_precision: f64,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::precondition("gradient batch is empty"));
    }
    let mut grad = vec![0.0; p.len()];
    let loss = accumulate_grad(p, batch, mask_seed, &mut grad)?;
    let mut reg = 0.0;
    if prior_precision != 0.0 {
        for (g, &t) in grad.iter_mut().zip(&p.params) {
            *g += prior_precision * t;
            reg += t * t;
        }
    }
    Ok((loss + 0.5 * prior_precision * reg, grad))
}

/// Adds the gradient of the mean cross-entropy to `grad` and returns that
/// mean loss. No prior term.
pub(crate) fn accumulate_grad(
    p: &ParameterParticle,
    batch: &[Example<'_>],
    mask_seed: Option<u64>,
    grad: &mut [f64],
) -> Result<f64> {
    let scale = 1.0 / batch.len() as f64;
    let mut mask_rng = mask_seed.map(|s| rng::seeded(s, stream::DROPOUT));
    let mut loss = 0.0;
    for &(x, y) in batch {
        Error::check_dim(p.arch.input_dim, x.dim())?;
        let mask = mask_rng
            .as_mut()
            .map(|r| DropoutMask::sample(&p.arch, p.arch.dropout_rate, r));
        let trace = run(p, x.entries(), mask.as_ref());
        let t = y.index();
        loss += trace.log_norm - trace.logits[t];
        let mut dl = trace.probs;
        dl[t] -= 1.0;
        backprop(p, x.entries(), &trace, mask.as_ref(), dl, scale, Some(grad), None);
    }
    Ok(loss * scale)
}

/// Gradient of the cross-entropy `-log p(target | x)` with respect to the
/// dense input vector. Deterministic pass, no dropout.
pub fn loss_grad_input(p: &ParameterParticle, x: &FeatureVector, target: Label) -> Result<Vec<f64>> {
    Ok(input_gradient(p, x, target)?.1)
}

/// Class probabilities together with the input gradient of `-log p(target | x)`.
pub fn input_gradient(
    p: &ParameterParticle,
    x: &FeatureVector,
    target: Label,
) -> Result<([f64; N_CLASSES], Vec<f64>)> {
    Error::check_dim(p.arch.input_dim, x.dim())?;
    let trace = run(p, x.entries(), None);
    let t = target.index();
    let mut dl = trace.probs;
    dl[t] -= 1.0;
    let mut ig = vec![0.0; x.dim()];
    backprop(p, x.entries(), &trace, None, dl, 1.0, None, Some(&mut ig));
    Ok((trace.probs, ig))
}

/// Cross-entropy of one example, used by finite-difference checks.
pub fn loss(p: &ParameterParticle, x: &FeatureVector, target: Label) -> Result<f64> {
    Error::check_dim(p.arch.input_dim, x.dim())?;
    let trace = run(p, x.entries(), None);
    Ok(trace.log_norm - trace.logits[target.index()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arch(input: usize, hidden: Vec<usize>) -> MlpArchitecture {
        MlpArchitecture::new(input, hidden).unwrap()
    }

    fn dense_random(dim: usize, seed: u64) -> FeatureVector {
        let mut r = rng::seeded(seed, 99);
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        FeatureVector::from_dense(&v)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn architecture_validation() {
        assert!(MlpArchitecture::new(0, vec![3]).is_err());
        assert!(MlpArchitecture::new(3, vec![]).is_err());
        assert!(MlpArchitecture::new(3, vec![2, 0]).is_err());
        assert!(arch(3, vec![2]).with_dropout(1.0).is_err());
        let a = arch(3, vec![4, 2]);
        assert_eq!(a.n_params(), 3 * 4 + 4 + 4 * 2 + 2 + 2 * 2 + 2);
        assert_eq!(a.last_layer_offset(), 3 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let a = arch(6, vec![5, 4]);
        let p = init_params(&a, 3);
        assert_eq!(p, init_params(&a, 3));
        assert_ne!(p, init_params(&a, 4));
        for l in 0..a.n_layers() {
            assert!(p.layer(l).1.iter().all(|&b| b == 0.0));
            assert!(p.layer(l).0.iter().any(|&w| w != 0.0));
        }
    }

    #[test]
    fn flatten_layout() {
        let a = arch(2, vec![3]);
        let flat: Vec<f64> = (0..a.n_params()).map(|i| i as f64).collect();
        let p = ParameterParticle::from_flat(&a, flat.clone()).unwrap();
        let (w0, b0) = p.layer(0);
        assert_eq!(w0, &flat[0..6]);
        assert_eq!(b0, &flat[6..9]);
        let (w1, b1) = p.layer(1);
        assert_eq!(w1, &flat[9..15]);
        assert_eq!(b1, &flat[15..17]);
        assert_eq!(p.flatten(), flat);
        assert!(ParameterParticle::from_flat(&a, vec![0.0; 3]).is_err());
    }

    #[test]
    fn zero_network_is_uniform() {
        let a = arch(4, vec![3]);
        let p = ParameterParticle::zeros(&a);
        let x = FeatureVector::from_indices(4, &[0, 3]).unwrap();
        assert_eq!(forward(&p, &x, None).unwrap(), [0.5, 0.5]);
        let g = loss_grad_input(&p, &x, Label::Benign).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_evaluated_single_unit() {
        // h = relu(2 * 1 - 0.5) = 1.5; z = (0.5 h + 0.1, -h + 0.2)
        let a = arch(1, vec![1]);
        let p = ParameterParticle::from_flat(&a, vec![2.0, -0.5, 0.5, -1.0, 0.1, 0.2]).unwrap();
        let x = FeatureVector::from_dense(&[1.0]);
        let probs = forward(&p, &x, None).unwrap();
        assert!((probs[1] - 0.10433122311900131).abs() < 1e-15);
        assert!((probs[0] - 0.8956687768809987).abs() < 1e-15);
    }

    #[test]
    fn dropping_every_unit_leaves_output_bias() {
        let a = arch(3, vec![4]).with_dropout(0.5).unwrap();
        let mut p = init_params(&a, 1);
        p.layer_mut(1).1.copy_from_slice(&[0.3, -0.7]);
        let mask = DropoutMask::new(vec![vec![false; 4]], 0.5);
        let x = FeatureVector::from_indices(3, &[0, 1, 2]).unwrap();
        assert_eq!(logits(&p, &x, Some(&mask)).unwrap(), [0.3, -0.7]);
    }

    #[test]
    fn mask_folding_matches_masked_forward() {
        let a = arch(5, vec![6, 4]).with_dropout(0.5).unwrap();
        let p = init_params(&a, 2);
        let mask = DropoutMask::from_seed(&a, 0.5, 17);
        let thin = p.apply_mask(&mask).unwrap();
        let x = dense_random(5, 3);
        let a1 = forward(&p, &x, Some(&mask)).unwrap();
        let a2 = forward(&thin, &x, None).unwrap();
        assert!((a1[0] - a2[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_mask_is_identity() {
        let a = arch(5, vec![6, 4]);
        let p = init_params(&a, 2);
        let mask = DropoutMask::from_seed(&a, 0.0, 17);
        let x = dense_random(5, 3);
        assert_eq!(forward(&p, &x, Some(&mask)).unwrap(), forward(&p, &x, None).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let p = init_params(&arch(4, vec![3]), 0);
        let x = FeatureVector::zeros(5);
        assert!(matches!(
            forward(&p, &x, None),
            Err(Error::DimensionMismatch { expected: 4, got: 5 })
        ));
        assert!(loss_grad_input(&p, &x, Label::Benign).is_err());
        assert!(loss_grad_params(&p, &[(&x, Label::Benign)], None, 0.0).is_err());
        assert!(loss_grad_params(&p, &[], None, 0.0).is_err());
    }

    #[test]
    fn linear_region_input_gradient() {
        // Identity first layer with large biases keeps both relus active, so
        // d loss(benign) / dx = p(malware) * (U[1] - U[0]).
        let a = arch(2, vec![2]);
        let params = vec![1.0, 0.0, 0.0, 1.0, 5.0, 5.0, 0.4, -0.3, 1.2, 0.9, 0.0, 0.0];
        let p = ParameterParticle::from_flat(&a, params).unwrap();
        let x = FeatureVector::from_dense(&[1.0, 0.0]);
        let probs = forward(&p, &x, None).unwrap();
        let g = loss_grad_input(&p, &x, Label::Benign).unwrap();
        let expect = [probs[1] * (1.2 - 0.4), probs[1] * (0.9 + 0.3)];
        assert!((g[0] - expect[0]).abs() < 1e-14);
        assert!((g[1] - expect[1]).abs() < 1e-14);
    }

    #[test]
    fn prior_gradient_vanishes_at_zero() {
        let a = arch(3, vec![2]);
        let p = ParameterParticle::zeros(&a);
        let x = FeatureVector::from_indices(3, &[1]).unwrap();
        let (_, g0) = loss_grad_params(&p, &[(&x, Label::Malware)], None, 0.0).unwrap();
        let (_, g1) = loss_grad_params(&p, &[(&x, Label::Malware)], None, 3.5).unwrap();
        assert_eq!(g0, g1);
    }

    #[test]
    fn duplicated_batch_has_same_mean_gradient() {
        let a = arch(4, vec![5]);
        let p = init_params(&a, 8);
        let x = FeatureVector::from_indices(4, &[0, 2]).unwrap();
        let (l1, g1) = loss_grad_params(&p, &[(&x, Label::Malware)], None, 1e-3).unwrap();
        let (l2, g2) =
            loss_grad_params(&p, &[(&x, Label::Malware), (&x, Label::Malware)], None, 1e-3).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dropout_gradient_matches_finite_differences_with_fixed_masks() {
        let a = arch(4, vec![6, 5]).with_dropout(0.3).unwrap();
        let p = init_params(&a, 4);
        let xs: Vec<FeatureVector> = (0..3).map(|s| dense_random(4, s)).collect();
        let batch: Vec<Example> = xs
            .iter()
            .zip([Label::Benign, Label::Malware, Label::Malware])
            .collect();
        let (_, g) = loss_grad_params(&p, &batch, Some(21), 0.01).unwrap();
        let h = 1e-5;
        for k in 0..p.len() {
            let mut plus = p.clone();
            plus.params[k] += h;
            let mut minus = p.clone();
            minus.params[k] -= h;
            let lp = loss_grad_params(&plus, &batch, Some(21), 0.01).unwrap().0;
            let lm = loss_grad_params(&minus, &batch, Some(21), 0.01).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            assert!(rel_err(g[k], fd) < 1e-5, "param {k}: {} vs {fd}", g[k]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn probabilities_are_distributions(seed in any::<u64>(), xs in 0u64..1000) {
            let a = arch(7, vec![5, 3]);
            let p = init_params(&a, seed);
            let x = dense_random(7, xs);
            let pr = forward(&p, &x, None).unwrap();
            prop_assert!(pr.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            prop_assert!((pr[0] + pr[1] - 1.0).abs() < 1e-12);
        }

        #[test]
        fn unflatten_flatten_identity(v in prop::collection::vec(-10.0f64..10.0, 3 * 2 + 2 + 2 * 2 + 2)) {
            let a = arch(3, vec![2]);
            let p = ParameterParticle::from_flat(&a, v.clone()).unwrap();
            prop_assert_eq!(p.flatten(), v);
        }
    }
}
