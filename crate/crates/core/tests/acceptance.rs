//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bayesmal::attacks::{attack_bca, AttackFamily, AttackSpec};
use bayesmal::data::{synth_generate, SynthConfig};
use bayesmal::eval::{roc_auc, ScoreKind};
use bayesmal::experiment::{self, ExperimentConfig};
use bayesmal::inference::{
    fit, gaussian_kl, mean_pairwise_distance, sgd_step, svgd_step, train_svgd_from, Approximation,
    Method, Posterior, TrainConfig,
};
use bayesmal::model_io::{decode_posterior, encode_posterior, load_posterior, save_posterior, MAGIC};
use bayesmal::network::{self, init_params, Example, MlpArchitecture, ParameterParticle};
use bayesmal::uncertainty::{mutual_information, predictive_entropy, PredictiveSample};
use bayesmal::{Error, FeatureVector, Label, ModelFileError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_MIN_NETS: usize = 100;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(30);
const SVGD_STEP_TOL: f64 = 1e-10;
const SVGD_STEPS: usize = 200;
const UNC_SLACK: f64 = 1e-12;
const UNC_SAMPLES: usize = 10_000;
const AUC_MAX_SIZE: usize = 50;
const BCA_MAX_FEATURES: usize = 12;
const KL_TOL: f64 = 1e-6;
const CLEAN_AUC_MIN: f64 = 0.95;
const CLEAN_F1_MIN: f64 = 0.90;
const REFERENCE_TIME_LIMIT: Duration = Duration::from_secs(300);
const SVGD_MI_AUC_MIN: f64 = 0.85;
const SVGD_MI_OVER_MAP_PE: f64 = 0.10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn reference_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

// ---------------------------------------------------------------- 1

fn random_net(r: &mut ChaCha8Rng) -> ParameterParticle {
    let input = r.random_range(1..=16);
    let hidden = r.random_range(1..=8);
    let arch = MlpArchitecture::new(input, vec![hidden]).unwrap();
    let params = (0..arch.n_params()).map(|_| r.random_range(-1.5..1.5)).collect();
    ParameterParticle::from_flat(&arch, params).unwrap()
}

fn rel_err(fd: f64, an: f64) -> f64 {
    // relative error with a floor for gradients that are numerically zero
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut nets = 0;
    for _ in 0..250 {
        let p = random_net(&mut r);
        let dim = p.arch().input_dim;
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let fvs: Vec<FeatureVector> = xs.iter().map(|x| FeatureVector::from_dense(x)).collect();
        let labels: Vec<Label> = (0..3)
            .map(|_| if r.random_bool(0.5) { Label::Malware } else { Label::Benign })
            .collect();
        let batch: Vec<Example> = fvs.iter().zip(labels.iter().copied()).collect();
        let prior = r.random_range(0.0..0.1);

        let (_, g) = network::loss_grad_params(&p, &batch, None, prior).unwrap();
        let obj = |q: &ParameterParticle| network::loss_grad_params(q, &batch, None, prior).unwrap().0;
        for k in 0..p.len() {
            let mut up = p.clone();
            let mut dn = p.clone();
            up.as_mut_slice()[k] += h;
            dn.as_mut_slice()[k] -= h;
            worst = worst.max(rel_err((obj(&up) - obj(&dn)) / (2.0 * h), g[k]));
        }

        let (x, y) = (&xs[0], labels[0]);
        let gi = network::loss_grad_input(&p, &fvs[0], y).unwrap();
        for j in 0..dim {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[j] += h;
            dn[j] -= h;
            let fu = network::loss(&p, &FeatureVector::from_dense(&up), y).unwrap();
            let fd = network::loss(&p, &FeatureVector::from_dense(&dn), y).unwrap();
            worst = worst.max(rel_err((fu - fd) / (2.0 * h), gi[j]));
        }
        nets += 1;
    }
    let elapsed = start.elapsed();
    outcome(
        worst < GRAD_REL_TOL && nets >= GRAD_MIN_NETS && elapsed < GRAD_TIME_LIMIT,
        format!("{nets} nets, max rel err {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- 2

fn small_data(seed: u64) -> bayesmal::Dataset {
    let mut benign = vec![0.1; 12];
    let mut malware = vec![0.1; 12];
    benign[..4].fill(0.8);
    malware[4..8].fill(0.8);
    synth_generate(&SynthConfig {
        dim: 12,
        n_benign: 60,
        n_malware: 60,
        benign_probs: benign,
        malware_probs: malware,
        seed,
    })
    .unwrap()
}

fn svgd_reductions() -> Outcome {
    let d = small_data(2);
    let arch = MlpArchitecture::new(12, vec![8]).unwrap();
    let examples: Vec<Example> = d.iter().collect();
    let mut map = init_params(&arch, 3);
    let mut svgd = vec![map.clone()];
    let mut worst: f64 = 0.0;
    for step in 0..SVGD_STEPS {
        let lo = (step * 16) % examples.len();
        let batch = &examples[lo..(lo + 16).min(examples.len())];
        sgd_step(&mut map, batch, None, 0.05, 1e-3).unwrap();
        svgd_step(&mut svgd, batch, 0.05, 1.0, 1e-3).unwrap();
        let diff = map
            .as_slice()
            .iter()
            .zip(svgd[0].as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    let n1 = worst <= SVGD_STEP_TOL;

    let cfg = |gamma: f64| TrainConfig {
        epochs: 15,
        batch_size: 16,
        learning_rate: 0.05,
        seed: 4,
        svgd_gamma: gamma,
        ..TrainConfig::default()
    };
    let same = train_svgd_from(&d, vec![init_params(&arch, 5); 4], &cfg(0.0)).unwrap();
    let identical = same.particles().iter().all(|p| p == &same.particles()[0]);

    let init: Vec<_> = (0..4).map(|i| init_params(&arch, 10 + i)).collect();
    let d0 = mean_pairwise_distance(train_svgd_from(&d, init.clone(), &cfg(0.0)).unwrap().particles());
    let d1 = mean_pairwise_distance(train_svgd_from(&d, init, &cfg(1.0)).unwrap().particles());
    outcome(
        n1 && identical && d1 > d0,
        format!(
            "n=1 max step diff {worst:.1e}; gamma=0 identical: {identical}; spread gamma=1 {d1:.4} vs gamma=0 {d0:.4}"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn random_prob(r: &mut ChaCha8Rng) -> f64 {
    match r.random_range(0..6) {
        0 => 0.0,
        1 => 1.0,
        2 => r.random_range(0.0..1e-12),
        3 => 1.0 - r.random_range(0.0..1e-12),
        _ => r.random_range(0.0..1.0),
    }
}

fn uncertainty_identities() -> Outcome {
    let mut r = rng(3);
    let ln2 = std::f64::consts::LN_2;
    let mut worst_identity: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..UNC_SAMPLES {
        let n = r.random_range(1..=30);
        let shared = random_prob(&mut r);
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                let p = if r.random_bool(0.2) { shared } else { random_prob(&mut r) };
                [1.0 - p, p]
            })
            .collect();
        let s = PredictiveSample::new(rows).unwrap();
        let pe = predictive_entropy(&s);
        let mi = mutual_information(&s);
        if !(mi >= 0.0 && mi <= pe + UNC_SLACK && pe <= ln2 + UNC_SLACK) {
            violations += 1;
        }
        worst_identity = worst_identity.max((mi + s.mean_row_entropy() - pe).abs());
    }
    outcome(
        violations == 0 && worst_identity <= UNC_SLACK,
        format!("{UNC_SAMPLES} samples, {violations} bound violations, max identity gap {worst_identity:.1e}"),
    )
}

// ---------------------------------------------------------------- 4

fn brute_auc(neg: &[f64], pos: &[f64]) -> f64 {
    let mut s = 0.0;
    for p in pos {
        for n in neg {
            s += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    s / (neg.len() * pos.len()) as f64
}

/// One hidden layer whose ReLUs stay active on the whole hypercube, so the
/// network is affine in the input and a gradient step ranks single flips
/// exactly as exhaustive search does.
fn affine_regime_net(dim: usize, r: &mut ChaCha8Rng, x: &FeatureVector) -> ParameterParticle {
    let arch = MlpArchitecture::new(dim, vec![4]).unwrap();
    let mut p = init_params(&arch, r.random());
    {
        let (w, b) = p.layer_mut(0);
        for v in w.iter_mut() {
            *v = r.random_range(-1.0..1.0);
        }
        for (o, bo) in b.iter_mut().enumerate() {
            *bo = w[o * dim..(o + 1) * dim].iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        }
    }
    let (w2, _) = p.layer_mut(1);
    for v in w2.iter_mut() {
        *v = r.random_range(-1.0..1.0);
    }
    let z = network::logits(&p, x, None).unwrap();
    p.layer_mut(1).1[1] += 3.0 - (z[1] - z[0]);
    p
}

fn exhaustive_best_flip(p: &ParameterParticle, x: &[f64]) -> Option<usize> {
    let prob = |v: &[f64]| network::forward(p, &FeatureVector::from_dense(v), None).unwrap()[1];
    let base = prob(x);
    (0..x.len())
        .filter(|&j| x[j] == 0.0)
        .map(|j| {
            let mut y = x.to_vec();
            y[j] = 1.0;
            (j, prob(&y))
        })
        .filter(|&(_, q)| q < base)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j)
}

fn simpson_kl(mu: f64, sigma: f64, lambda: f64) -> f64 {
    use std::f64::consts::PI;
    let (lo, hi, n) = (mu - 12.0 * sigma, mu + 12.0 * sigma, 20_000usize);
    let h = (hi - lo) / n as f64;
    let f = |x: f64| {
        let lq = -0.5 * ((x - mu) / sigma).powi(2) - (sigma * (2.0 * PI).sqrt()).ln();
        let lp = 0.5 * (lambda / (2.0 * PI)).ln() - 0.5 * lambda * x * x;
        lq.exp() * (lq - lp)
    };
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn oracle_equivalences() -> Outcome {
    let mut r = rng(4);
    let mut auc_bad = 0;
    for _ in 0..3000 {
        let nn = r.random_range(1..=AUC_MAX_SIZE);
        let np = r.random_range(1..=AUC_MAX_SIZE);
        let levels = r.random_range(1..=20);
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| r.random_range(0..levels) as f64).collect() };
        let (neg, pos) = (draw(nn), draw(np));
        if (roc_auc(&neg, &pos).unwrap().auc - brute_auc(&neg, &pos)).abs() > 1e-12 {
            auc_bad += 1;
        }
    }

    let mut bca_bad = 0;
    let bca_trials = 500;
    for _ in 0..bca_trials {
        let dim = r.random_range(2..=BCA_MAX_FEATURES);
        let bits: Vec<f64> = (0..dim).map(|_| if r.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
        let x = FeatureVector::from_dense(&bits);
        let p = affine_regime_net(dim, &mut r, &x);
        let post = Posterior {
            arch: p.arch().clone(),
            approx: Approximation::Map(p.clone()),
            n_inference: 1,
        };
        let res = attack_bca(&post, &x, &AttackSpec::new(AttackFamily::Bca, 1.0)).unwrap();
        let expect: Vec<usize> = exhaustive_best_flip(&p, &bits).into_iter().collect();
        if res.flipped_indices != expect {
            bca_bad += 1;
        }
    }

    let mut kl_worst: f64 = 0.0;
    for _ in 0..200 {
        let mu = r.random_range(-3.0..3.0);
        let sigma = 10f64.powf(r.random_range(-2.0..0.5));
        let lambda = 10f64.powf(r.random_range(-2.0..1.0));
        kl_worst = kl_worst.max((gaussian_kl(mu, sigma, lambda) - simpson_kl(mu, sigma, lambda)).abs());
    }
    outcome(
        auc_bad == 0 && bca_bad == 0 && kl_worst < KL_TOL,
        format!(
            "auc mismatches {auc_bad}/3000; bca mismatches {bca_bad}/{bca_trials}; max KL err {kl_worst:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 5-8

fn clean_performance(exp: &experiment::Experiment, elapsed: Duration) -> Outcome {
    let mut pass = elapsed < REFERENCE_TIME_LIMIT;
    let mut parts = Vec::new();
    for m in Method::ALL {
        let c = exp.report.clean(m).expect("clean row");
        let auc = c.auc.unwrap_or(f64::NAN);
        pass &= auc >= CLEAN_AUC_MIN && c.f1 >= CLEAN_F1_MIN;
        parts.push(format!("{m} auc {auc:.4} f1 {:.4}", c.f1));
    }
    outcome(pass, format!("{}; {:.1}s", parts.join(", "), elapsed.as_secs_f64()))
}

fn detection_trend(exp: &experiment::Experiment) -> Outcome {
    let grid = &exp.config.attacks[0];
    let mut pass = grid.family == AttackFamily::PgdL1 && grid.epsilons.len() == 3;
    let mut parts = Vec::new();
    for &eps in &grid.epsilons {
        let auc = |m: Method, s: ScoreKind| {
            exp.report
                .cell(m, AttackFamily::PgdL1, eps, s)
                .and_then(|c| c.auc)
                .unwrap_or(f64::NAN)
        };
        let map_pe = auc(Method::Map, ScoreKind::Pe);
        let others_min = Method::ALL[1..]
            .iter()
            .map(|&m| auc(m, ScoreKind::Pe))
            .fold(f64::INFINITY, f64::min);
        let svgd_mi = auc(Method::Svgd, ScoreKind::Mi);
        pass &= map_pe <= others_min
            && svgd_mi >= SVGD_MI_AUC_MIN
            && svgd_mi - map_pe >= SVGD_MI_OVER_MAP_PE;
        parts.push(format!(
            "eps {eps}: map PE {map_pe:.4} <= others {others_min:.4}, svgd MI {svgd_mi:.4}"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn diversity_trend(exp: &experiment::Experiment) -> Outcome {
    let Some(d) = &exp.diversity else {
        return outcome(false, "no diversity report");
    };
    let g = |m| d.get(m).unwrap_or(f64::NAN);
    let (svgd, dropout, vi, map) = (g(Method::Svgd), g(Method::Dropout), g(Method::Vi), g(Method::Map));
    outcome(
        svgd > dropout && svgd > vi && map == 0.0,
        format!("svgd {svgd:.4}, dropout {dropout:.4}, vi {vi:.2e}, map {map}"),
    )
}

fn drift_trend(exp: &experiment::Experiment) -> Outcome {
    let (Some(d), Some(id)) = (&exp.drift, &exp.drift_identity) else {
        return outcome(false, "no drift report");
    };
    let pe = d.score(ScoreKind::Pe).unwrap();
    outcome(
        d.method == Method::Svgd && d.drift_flag && pe.drifted_mean > pe.threshold && !id.drift_flag,
        format!(
            "svgd drifted mean PE {:.4} vs q95 {:.4}: flag {}; identity flag {}",
            pe.drifted_mean, pe.threshold, d.drift_flag, id.drift_flag
        ),
    )
}

// ---------------------------------------------------------------- 9

fn persistence() -> Outcome {
    let d = small_data(9);
    let arch = MlpArchitecture::new(12, vec![6, 4]).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 16,
        n_particles: 3,
        n_inference: 3,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    let mut sample = Vec::new();
    for m in Method::ALL {
        let post = fit(m, &d, &arch, &cfg).unwrap().posterior;
        let path = dir.path().join(format!("{m}.bmal"));
        save_posterior(&post, &path).unwrap();
        let back = load_posterior(&path).unwrap();
        let bits_equal = |a: &Posterior, b: &Posterior| {
            let pa = a.sample_particles(3, 0).unwrap();
            let pb = b.sample_particles(3, 0).unwrap();
            pa.iter().zip(&pb).all(|(x, y)| {
                x.as_slice().iter().map(|v| v.to_bits()).eq(y.as_slice().iter().map(|v| v.to_bits()))
            })
        };
        let ok = back == post && encode_posterior(&back) == fs::read(&path).unwrap() && bits_equal(&post, &back);
        pass &= ok;
        notes.push(format!("{m} {}", if ok { "ok" } else { "MISMATCH" }));
        if m == Method::Svgd {
            sample = fs::read(&path).unwrap();
        }
    }

    let typed = |bytes: Vec<u8>, want: fn(&ModelFileError) -> bool| {
        matches!(decode_posterior(&bytes), Err(Error::ModelFile(ref e)) if want(e))
    };
    let mut magic = sample.clone();
    magic[0] ^= 0xff;
    let mut version = sample.clone();
    version[MAGIC.len()] = 9;
    let mut flipped = sample.clone();
    let mid = sample.len() / 2;
    flipped[mid] ^= 0x01;
    let truncated = sample[..sample.len() - 9].to_vec();
    // valid checksum but a payload one vector short
    let mut short = sample[..sample.len() - 4].to_vec();
    let vec_len = arch.n_params() * 8;
    short.truncate(short.len() - vec_len);
    let crc = crc32fast::hash(&short[MAGIC.len()..]);
    short.extend_from_slice(&crc.to_le_bytes());
    let corrupt = [
        ("magic", typed(magic, |e| matches!(e, ModelFileError::BadMagic))),
        ("version", typed(version, |e| matches!(e, ModelFileError::UnsupportedVersion(9)))),
        ("bitflip", typed(flipped, |e| matches!(e, ModelFileError::ChecksumMismatch { .. }))),
        ("truncated", typed(truncated, |_| true)),
        ("shape", typed(short, |e| matches!(e, ModelFileError::ShapeMismatch(_)))),
    ];
    for (name, ok) in corrupt {
        pass &= ok;
        if !ok {
            notes.push(format!("{name} corruption not rejected"));
        }
    }
    outcome(pass, format!("{}; 5 corruptions checked", notes.join(", ")))
}

// ---------------------------------------------------------------- 10

fn reproduce_once(out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_bayesmal"))
        .arg("reproduce")
        .arg("--config")
        .arg(reference_config())
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&status.stderr).into_owned())
    }
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let runs = std::thread::scope(|s| {
        let ha = s.spawn(|| reproduce_once(&a));
        let hb = s.spawn(|| reproduce_once(&b));
        (ha.join().unwrap(), hb.join().unwrap())
    });
    if let (Err(e), _) | (_, Err(e)) = runs {
        return outcome(false, format!("reproduce failed: {e}"));
    }
    let (ta, tb) = (tree(&a), tree(&b));
    let differing: Vec<_> = ta
        .keys()
        .chain(tb.keys())
        .filter(|k| ta.get(*k) != tb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let has_report = ta.contains_key(Path::new("detection_report.json"));
    outcome(
        differing.is_empty() && has_report,
        format!("{} files compared, {} differ {:?}", ta.len(), differing.len(), differing),
    )
}

// ----------------------------------------------------------------

fn main() {
    // harness-less target: honour `cargo test -- --list` and filters gracefully
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let repro = std::thread::spawn(determinism);

    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 gradient correctness", gradient_correctness()),
        ("2 svgd reductions", svgd_reductions()),
        ("3 uncertainty identities", uncertainty_identities()),
        ("4 oracle equivalences", oracle_equivalences()),
    ];

    let cfg = ExperimentConfig::load(reference_config()).expect("reference config");
    let start = Instant::now();
    let exp = experiment::run(&cfg).expect("reference experiment");
    let elapsed = start.elapsed();
    results.push(("5 clean performance", clean_performance(&exp, elapsed)));
    results.push(("6 detection trend", detection_trend(&exp)));
    results.push(("7 diversity trend", diversity_trend(&exp)));
    results.push(("8 drift", drift_trend(&exp)));
    results.push(("9 persistence", persistence()));
    results.push(("10 end-to-end determinism", repro.join().unwrap()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name:<28} {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
