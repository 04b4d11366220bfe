//! Command-line interface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use robotransfer_core::dataset::{write_atomic, DemoFrame};
use robotransfer_core::eval::standard_methods;
use robotransfer_core::features::StopWords;
use robotransfer_core::pipeline::{featurize_examples, label, task_vocabulary, train_model, training_pool, Labeling};
use robotransfer_core::synth::Family;
use robotransfer_core::{
    dtw_mt, evaluate, generate_synthetic, make_folds, Checkpoint, Config, Dataset, Featurizer, FoldSplit,
    SyntheticSpec, TaskInstance, Trajectory, Wiring,
};
use serde_json::json;

use crate::service::{router, AppState};

#[derive(Debug, Parser)]
#[command(
    name = "robotransfer",
    version,
    about = "Rank stored manipulation trajectories for new parts and instructions"
)]
pub struct Cli {
    /// TOML configuration; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset directory and optionally rewrite it in canonical form.
    Import { src: PathBuf, dst: Option<PathBuf> },
    /// Write a dataset with demonstrations in the chosen frame.
    Export {
        dataset: PathBuf,
        dst: PathBuf,
        #[arg(long, value_enum, default_value = "part")]
        demo_frame: FrameArg,
    },
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Build the vocabulary and labeled examples for a dataset.
    Featurize {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_noise_handling: bool,
        /// Also write the encoded modalities.
        #[arg(long)]
        vectors: bool,
        #[arg(long)]
        stop_words: Option<PathBuf>,
    },
    /// Train a model checkpoint.
    Train(TrainArgs),
    /// Rank the dataset's trajectories for one task.
    Infer {
        model: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Override the task's instruction.
        #[arg(long)]
        instruction: Option<String>,
        /// Emit the ranked trajectories in the task's world frame.
        #[arg(long)]
        world: bool,
    },
    /// Cross-validate the transfer methods.
    Eval(EvalArgs),
    /// DTW-MT distance between two trajectory files.
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        alpha_t: Option<f64>,
        #[arg(long)]
        alpha_r: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Print the warping path.
        #[arg(long)]
        path: bool,
    },
    /// Serve the editor API.
    Serve {
        dataset: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FrameArg {
    Part,
    World,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WiringArg {
    Multimodal,
    Flat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Knob,
    Handle,
    Lever,
    Switch,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub n_tasks: Option<usize>,
    #[arg(long)]
    pub demos_per_task: Option<usize>,
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    #[arg(long)]
    pub translation_sigma: Option<f64>,
    #[arg(long)]
    pub rotation_sigma: Option<f64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub families: Vec<FamilyArg>,
    #[arg(long)]
    pub points_per_part: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "part")]
    pub demo_frame: FrameArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Leave out the tasks of this fold.
    #[arg(long)]
    pub exclude_fold: Option<usize>,
    #[arg(long)]
    pub no_noise_handling: bool,
    #[arg(long, value_enum)]
    pub wiring: Option<WiringArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    #[arg(long)]
    pub stop_words: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated method names; all by default.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub stop_words: Option<PathBuf>,
}

impl From<FrameArg> for DemoFrame {
    fn from(f: FrameArg) -> Self {
        match f {
            FrameArg::Part => DemoFrame::Part,
            FrameArg::World => DemoFrame::World,
        }
    }
}

impl From<WiringArg> for Wiring {
    fn from(w: WiringArg) -> Self {
        match w {
            WiringArg::Multimodal => Wiring::Multimodal,
            WiringArg::Flat => Wiring::Flat,
        }
    }
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Knob => Family::Knob,
            FamilyArg::Handle => Family::Handle,
            FamilyArg::Lever => Family::Lever,
            FamilyArg::Switch => Family::Switch,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let config = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    Ok(config)
}

fn stop_words(path: Option<&Path>) -> Result<StopWords> {
    Ok(match path {
        Some(p) => StopWords::load(p)?,
        None => StopWords::default(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn folds_for(tasks: &[TaskInstance], config: &Config) -> Result<FoldSplit> {
    Ok(match FoldSplit::recorded(tasks, config.eval.folds) {
        Some(split) => split,
        None => make_folds(tasks, config.eval.folds, config.eval.seed)?,
    })
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Import { src, dst } => {
            let ds = Dataset::import(&src)?;
            print_json(&json!({"name": ds.metadata.name, "counts": ds.counts(), "hash": ds.content_hash()?}))?;
            if let Some(dst) = dst {
                ds.export(&dst)?;
                info!("wrote canonical dataset to {}", dst.display());
            }
        }
        Command::Export {
            dataset,
            dst,
            demo_frame,
        } => {
            let ds = Dataset::import(&dataset)?;
            ds.export_with(&dst, demo_frame.into())?;
            info!("exported {} tasks to {}", ds.tasks.len(), dst.display());
        }
        Command::Synth(args) => synth(args)?,
        Command::Featurize {
            dataset,
            out,
            no_noise_handling,
            vectors,
            stop_words: sw,
        } => {
            config.validate()?;
            let ds = Dataset::import(&dataset)?;
            let tasks: Vec<&TaskInstance> = ds.tasks.iter().collect();
            let pool = training_pool(&tasks);
            let vocab = task_vocabulary(&tasks, &stop_words(sw.as_deref())?)?;
            let labeling = if no_noise_handling {
                Labeling::Trusting
            } else {
                Labeling::NoiseHandled
            };
            let examples = label(&tasks, &pool, &config, labeling)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            vocab.save(&out.join("vocab.txt"))?;
            let mut lines = String::new();
            for e in &examples {
                lines.push_str(&serde_json::to_string(e)?);
                lines.push('\n');
            }
            write_text(&out.join("examples.jsonl"), &lines)?;
            if vectors {
                let featurizer = Featurizer::new(vocab.clone(), config.features);
                let data = featurize_examples(&featurizer, &tasks, &pool, &examples)?;
                let mut lines = String::new();
                for (e, (x, y)) in examples.iter().zip(&data) {
                    let row = json!({"task": e.task_ref, "traj": e.traj_ref, "label": y,
                        "pc": &x.pc[..], "lang": &x.lang[..], "trajectory": &x.traj[..]});
                    lines.push_str(&serde_json::to_string(&row)?);
                    lines.push('\n');
                }
                write_text(&out.join("vectors.jsonl"), &lines)?;
            }
            let positives = examples.iter().filter(|e| e.label == 1).count();
            print_json(
                &json!({"vocab_size": vocab.len(), "vocab_id": vocab.id(), "examples": examples.len(),
                "positives": positives, "negatives": examples.len() - positives}),
            )?;
        }
        Command::Train(args) => train(args, config)?,
        Command::Infer {
            model,
            dataset,
            task,
            top,
            instruction,
            world,
        } => {
            let model = Checkpoint::load(&model)?;
            let ds = Dataset::import(&dataset)?;
            let t = ds.task(&task).with_context(|| format!("unknown task {task:?}"))?;
            let pool = ds.pool();
            let ranked = model.infer(
                &t.part,
                &t.frame,
                instruction.as_deref().unwrap_or(&t.instruction),
                &pool,
            )?;
            let rows: Vec<serde_json::Value> = ranked
                .iter()
                .take(top)
                .enumerate()
                .map(|(k, r)| {
                    let mut row = json!({"rank": k + 1, "id": r.trajectory.id, "score": r.score});
                    if world {
                        row["trajectory"] = serde_json::to_value(ds.to_world(t, r.trajectory)).expect("serializable");
                    }
                    row
                })
                .collect();
            print_json(&json!({"task": task, "ranked": rows}))?;
        }
        Command::Eval(args) => eval(args, config)?,
        Command::Distance {
            a,
            b,
            alpha_t,
            alpha_r,
            beta,
            gamma,
            path,
        } => {
            let p = &mut config.dtw;
            p.alpha_t = alpha_t.unwrap_or(p.alpha_t);
            p.alpha_r = alpha_r.unwrap_or(p.alpha_r);
            p.beta = beta.unwrap_or(p.beta);
            p.gamma = gamma.unwrap_or(p.gamma);
            p.validate()?;
            let read = |f: &Path| -> Result<Trajectory> {
                let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
                Ok(robotransfer_core::dataset::parse_json(f, &text)?)
            };
            let r = dtw_mt(&read(&a)?, &read(&b)?, &config.dtw)?;
            if path {
                print_json(&serde_json::to_value(&r)?)?;
            } else {
                println!("{}", r.distance);
            }
        }
        Command::Serve {
            dataset,
            model,
            host,
            port,
        } => {
            config.validate()?;
            let model = model.map(|p| Checkpoint::load(&p)).transpose()?;
            let state = Arc::new(AppState::load(dataset, model, config)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                info!("listening on {}", listener.local_addr()?);
                axum::serve(listener, router(state)).await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec::default();
    if let Some(v) = args.name {
        spec.name = v;
    }
    spec.n_tasks = args.n_tasks.unwrap_or(spec.n_tasks);
    spec.demos_per_task = args.demos_per_task.unwrap_or(spec.demos_per_task);
    spec.outlier_fraction = args.outlier_fraction.unwrap_or(spec.outlier_fraction);
    spec.translation_sigma = args.translation_sigma.unwrap_or(spec.translation_sigma);
    spec.rotation_sigma = args.rotation_sigma.unwrap_or(spec.rotation_sigma);
    spec.points_per_part = args.points_per_part.unwrap_or(spec.points_per_part);
    spec.rng_seed = args.seed.unwrap_or(spec.rng_seed);
    if !args.families.is_empty() {
        spec.families = args.families.into_iter().map(Family::from).collect();
    }
    spec.validate()?;
    let ds = generate_synthetic(&spec)?;
    ds.export_with(&args.out, args.demo_frame.into())?;
    print_json(&json!({"out": args.out, "counts": ds.counts(), "hash": ds.content_hash()?}))
}

fn train(args: TrainArgs, mut config: Config) -> Result<()> {
    if let Some(w) = args.wiring {
        config.net.wiring = w.into();
    }
    config.net.rng_seed = args.seed.unwrap_or(config.net.rng_seed);
    config.net.epochs_pretrain = args.pretrain_epochs.unwrap_or(config.net.epochs_pretrain);
    config.net.epochs_finetune = args.finetune_epochs.unwrap_or(config.net.epochs_finetune);
    config.validate()?;
    let ds = Dataset::import(&args.dataset)?;
    let tasks: Vec<&TaskInstance> = match args.exclude_fold {
        None => ds.tasks.iter().collect(),
        Some(f) => {
            if f >= config.eval.folds {
                bail!("--exclude-fold {f} is out of range for {} folds", config.eval.folds);
            }
            let split = folds_for(&ds.tasks, &config)?;
            ds.tasks.iter().filter(|t| split.fold_of(&t.id) != Some(f)).collect()
        }
    };
    let labeling = if args.no_noise_handling {
        Labeling::Trusting
    } else {
        Labeling::NoiseHandled
    };
    let (model, log) = train_model(&tasks, &config, labeling, &stop_words(args.stop_words.as_deref())?)?;
    let hash = Checkpoint::save(&model, &args.out)?;
    let mut log_path = args.out.clone().into_os_string();
    log_path.push(".log.json");
    let summary = json!({"checkpoint": args.out, "hash": hash, "config": config, "log": log});
    write_text(Path::new(&log_path), &serde_json::to_string_pretty(&summary)?)?;
    print_json(&json!({"checkpoint": args.out, "hash": hash, "tasks": log.tasks,
        "positives": log.positives, "negatives": log.negatives, "final_nll": log.finetune.epoch_nll.last()}))
}

fn eval(args: EvalArgs, mut config: Config) -> Result<()> {
    config.eval.folds = args.folds.unwrap_or(config.eval.folds);
    config.eval.seed = args.seed.unwrap_or(config.eval.seed);
    config.eval.threshold = args.threshold.unwrap_or(config.eval.threshold);
    config.validate()?;
    let ds = Dataset::import(&args.dataset)?;
    let mut methods = standard_methods(&config, &stop_words(args.stop_words.as_deref())?);
    if !args.methods.is_empty() {
        let known: Vec<String> = methods.iter().map(|m| m.name()).collect();
        for name in &args.methods {
            if !known.contains(name) {
                bail!("unknown method {name:?}; known: {}", known.join(", "));
            }
        }
        methods.retain(|m| args.methods.contains(&m.name()));
    }
    let split = folds_for(&ds.tasks, &config)?;
    let report = evaluate(
        &ds.tasks,
        &split,
        &methods,
        &config.dtw,
        config.eval.threshold,
        config.eval.seed,
    )?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let text = report.to_text();
    write_text(&args.out.join("report.txt"), &text)?;
    write_text(&args.out.join("report.csv"), &report.to_csv())?;
    write_text(&args.out.join("report.json"), &report.to_json()?)?;
    print!("{text}");
    Ok(())
}
