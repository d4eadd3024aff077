use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bayesmal::attacks::{batch_attack, AttackFamily};
use bayesmal::data::{self, split, Label, Profile};
use bayesmal::eval::{self, roc_auc, ScoreKind};
use bayesmal::experiment::{self, roc_file_name, to_json, ExperimentConfig};
use bayesmal::inference::{fit, Method, TrainConfig};
use bayesmal::network::{MlpArchitecture, DEFAULT_HIDDEN};
use bayesmal::uncertainty::score_dataset;
use bayesmal::{load_posterior, save_posterior, Error, Result};

#[derive(Parser)]
#[command(name = "bayesmal", version, about = "Bayesian malware detectors, evasion attacks and uncertainty-based detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (.toml or .json, including a previous run.json)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's global seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset of a config and its train/test split
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train one posterior approximation and save it as a model file
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: Method,
        /// Hidden widths, comma separated; overrides the config
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
    },
    /// Attack every malware sample of a dataset and write the adversarial set
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        attack: AttackFamily,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Write per-sample malware probability, PE and MI as CSV
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Detection AUCs: a full config grid, or clean benign vs one adversarial set
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires_all = ["data", "adv"])]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        adv: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Compare uncertainty on a reference set and a drifted set
    Drift {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        adv: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0.95)]
        quantile: f64,
    },
    /// Mean KL diversity of each model's networks on a dataset
    Diversity {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long)]
        adv: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run a config end to end and write every report
    Reproduce {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(c: &Common) -> Result<Option<ExperimentConfig>> {
    let Some(path) = &c.config else {
        return Ok(None);
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(Some(cfg))
}

fn require_config(c: &Common) -> Result<ExperimentConfig> {
    load_config(c)?.ok_or_else(|| Error::Config("--config is required".into()))
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> PathBuf {
    c.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            context: format!("creating {}", dir.display()),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io {
        context: format!("writing {}", path.display()),
        source: e,
    })
}

fn emit(out: Option<&Path>, contents: String) -> Result<()> {
    match out {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => {
            let cfg = require_config(&common)?;
            let out = out_dir(&common, &cfg);
            let full = cfg.load_data()?;
            let (train, test) = split(&full, cfg.train_fraction, cfg.seeds().split)?;
            let (train, test) = (train.with_provenance("train"), test.with_provenance("test"));
            write_file(&out.join("full.svm"), full.to_text())?;
            write_file(&out.join("train.svm"), train.to_text())?;
            write_file(&out.join("test.svm"), test.to_text())?;
            eprintln!("wrote {} samples ({} train, {} test) to {}", full.len(), train.len(), test.len(), out.display());
        }
        Command::Train {
            common,
            data: data_path,
            method,
            hidden,
        } => {
            let cfg = load_config(&common)?;
            let d = data::load_dataset(&data_path, Profile::Binary)?;
            let hidden = hidden
                .or_else(|| cfg.as_ref().map(|c| c.hidden_sizes.clone()))
                .unwrap_or_else(|| DEFAULT_HIDDEN.to_vec());
            let mut tcfg = cfg.as_ref().map(|c| c.train_config()).unwrap_or_else(TrainConfig::default);
            if let Some(s) = common.seed {
                tcfg.seed = s;
            }
            let arch = MlpArchitecture::new(d.dim(), hidden)?;
            let fitted = fit(method, &d, &arch, &tcfg)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from(format!("{method}.bmal")));
            save_posterior(&fitted.posterior, &out)?;
            if let Some(last) = fitted.epoch_losses.last() {
                eprintln!("final training loss {last:.6}");
            }
            eprintln!("saved {method} model to {}", out.display());
        }
        Command::Attack {
            common,
            model,
            data: data_path,
            attack,
            epsilon,
            iterations,
        } => {
            let post = load_posterior(&model)?;
            let d = data::load_dataset(&data_path, Profile::Binary)?;
            let mut spec = bayesmal::AttackSpec::new(attack, epsilon);
            spec.seed = common.seed.unwrap_or(0);
            if let Some(it) = iterations {
                spec.iterations = it;
            }
            let ba = batch_attack(&post, &d, &spec)?;
            emit(common.out.as_deref(), ba.adversarial.to_text())?;
            eprintln!(
                "attacked {} malware samples, {} evaded",
                ba.summary.attempted, ba.summary.evaded
            );
        }
        Command::Score {
            common,
            model,
            data: data_path,
            n,
        } => {
            let post = load_posterior(&model)?;
            let d = data::load_dataset(&data_path, Profile::Binary)?;
            let scores = score_dataset(&post, &d, n.unwrap_or(post.n_inference), common.seed.unwrap_or(0))?;
            emit(common.out.as_deref(), scores.to_csv())?;
        }
        Command::Eval {
            common,
            model: Some(model),
            data: Some(data_path),
            adv: Some(adv_path),
            n,
        } => {
            let post = load_posterior(&model)?;
            let n = n.unwrap_or(post.n_inference);
            let seed = common.seed.unwrap_or(0);
            let clean = data::load_dataset(&data_path, Profile::Binary)?.filter_label(Label::Benign);
            let adv = data::load_dataset(&adv_path, Profile::Binary)?;
            let neg = score_dataset(&post, &clean, n, seed)?;
            let pos = score_dataset(&post, &adv, n, seed)?;
            for (kind, a, b) in [(ScoreKind::Pe, neg.pe(), pos.pe()), (ScoreKind::Mi, neg.mi(), pos.mi())] {
                let roc = roc_auc(&a, &b)?;
                println!("{kind} auc {:.6}", roc.auc);
                if let Some(dir) = &common.out {
                    write_file(&dir.join(format!("roc_{}_{kind}.csv", post.method())), roc.to_csv())?;
                }
            }
        }
        Command::Eval { common, .. } => {
            let cfg = require_config(&common)?;
            let out = out_dir(&common, &cfg);
            let exp = experiment::run(&cfg)?;
            write_file(&out.join("detection_report.json"), to_json(&exp.report))?;
            for a in &exp.attacks {
                for roc in [&a.pe, &a.mi] {
                    let score = roc.score_name.unwrap_or(ScoreKind::Pe);
                    write_file(&out.join(roc_file_name(a.method, a.family, a.epsilon, score)), roc.to_csv())?;
                }
            }
            print!("{}", exp.report.render());
        }
        Command::Drift {
            common,
            model,
            data: data_path,
            adv,
            n,
            quantile,
        } => {
            let post = load_posterior(&model)?;
            let reference = data::load_dataset(&data_path, Profile::Binary)?;
            let drifted = data::load_dataset(&adv, Profile::Binary)?;
            let r = eval::drift_report(
                &post,
                &reference,
                &drifted,
                n.unwrap_or(post.n_inference),
                common.seed.unwrap_or(0),
                quantile,
            )?;
            if let Some(dir) = &common.out {
                write_file(&dir.join("drift_report.json"), to_json(&r))?;
                for s in &r.scores {
                    write_file(&dir.join(format!("drift_hist_{}.csv", s.score)), s.drifted_hist.to_csv())?;
                    write_file(&dir.join(format!("reference_hist_{}.csv", s.score)), s.reference_hist.to_csv())?;
                }
            }
            for s in &r.scores {
                println!(
                    "{}: reference mean {:.6}, drifted mean {:.6}, threshold {:.6}, flagged {}",
                    s.score, s.reference_mean, s.drifted_mean, s.threshold, s.flagged
                );
            }
            println!("drift_flag {}", r.drift_flag);
        }
        Command::Diversity { common, model, adv, n } => {
            let adv = data::load_dataset(&adv, Profile::Binary)?;
            let seed = common.seed.unwrap_or(0);
            for path in model {
                let post = load_posterior(&path)?;
                let v = eval::diversity(&post, &adv, n.unwrap_or(post.n_inference), seed)?;
                println!("{} {v:.6}", post.method());
            }
        }
        Command::Reproduce { common } => {
            let cfg = require_config(&common)?;
            let out = out_dir(&common, &cfg);
            let exp = experiment::run(&cfg)?;
            experiment::write_outputs(&exp, &out)?;
            print!("{}", exp.report.render());
            if let Some(d) = &exp.diversity {
                for e in &d.entries {
                    println!("diversity {} {:.6}", e.method, e.diversity);
                }
            }
            if let Some(d) = &exp.drift {
                println!("drift_flag {}", d.drift_flag);
            }
            eprintln!("wrote outputs to {}", out.display());
        }
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("BAYESMAL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| Error::Config(format!("BAYESMAL_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first}");
            return ExitCode::from(1);
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
