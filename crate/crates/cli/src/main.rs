//! `hazardtm`: config-driven pipeline from raw news records to relevance
//! labels. Each subcommand reads the artifacts of earlier ones from the
//! output directory and writes its own, plus a manifest.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hazardtm::classifier::PartitionRule;
use hazardtm::eval::Split;
use hazardtm::synth::SynthConfig;

use commands::{DumpOptions, Layout, Run, TrainedRule, VARIANT_NAMES};
use config::LoadedConfig;

#[derive(Debug, Parser)]
#[command(name = "hazardtm", version, about = "Keyword-guided topic-model relevance classification")]
struct Cli {
    /// Pipeline config (TOML). Not needed for `synth`.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Hazard to process; optional when the config lists only one.
    #[arg(long, global = true, conflicts_with = "all_hazards")]
    hazard: Option<String>,
    /// Run the subcommand once per hazard in the config.
    #[arg(long, global = true)]
    all_hazards: bool,
    /// Overrides `output_dir` from the config.
    #[arg(long, global = true, env = "HAZARDTM_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true, env = "HAZARDTM_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Normal)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LogLevel {
    Quiet,
    Normal,
    /// Also re-verifies all Gibbs count tables after every sweep.
    Debug,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Strip markup, split concatenated records and apply inclusion filters.
    Ingest,
    /// MinHash signatures and near-duplicate groups of the ingested corpus.
    Dedup,
    /// Feature space over group representatives and count matrix of all documents.
    Featurize,
    /// Fit the model configured under [train].
    Train,
    /// Fit and score the hyperparameter grid on the train split.
    Sweep,
    /// Choose the tm-f1, tm-b and tm-p variants and store their models.
    Select,
    /// Label every ingested document with the selected variants.
    Classify {
        /// Variants to apply; all three by default.
        #[arg(long = "variant", value_name = "NAME")]
        variants: Vec<String>,
        #[command(flatten)]
        trained: TrainedArgs,
    },
    /// Score prediction files against the gold labels, next to the baseline.
    Evaluate {
        /// Prediction CSVs; everything under predictions/ by default.
        #[arg(long = "predictions", value_name = "FILE")]
        predictions: Vec<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Majority vote of three prediction files (the variants by default).
    Ensemble {
        #[arg(long = "input", value_name = "FILE")]
        inputs: Vec<PathBuf>,
    },
    /// Top-term tables, relevant-topic listings and theta-sensitivity data.
    DumpTopics {
        #[arg(long = "variant", value_name = "NAME")]
        variants: Vec<String>,
        #[command(flatten)]
        trained: TrainedArgs,
        /// Export every document's proportion of this topic with its gold label.
        #[arg(long)]
        theta_topic: Option<usize>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Generate a synthetic corpus with a planted hazard topic.
    Synth {
        /// Directory for the corpus, hazard config, gold labels and pipeline config.
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (TOML); defaults otherwise.
        #[arg(long)]
        settings: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        num_docs: Option<usize>,
    },
}

/// Use the model from `train` instead of, or besides, the variants.
#[derive(Debug, Args)]
struct TrainedArgs {
    #[arg(long)]
    trained: bool,
    #[arg(long, requires = "trained")]
    theta: Option<f64>,
    #[arg(long, requires = "trained", conflicts_with = "top_k")]
    gamma: Option<f64>,
    #[arg(long, requires = "trained")]
    top_k: Option<usize>,
}

impl TrainedArgs {
    fn rule(&self) -> Result<Option<PartitionRule>> {
        let rule = match (self.gamma, self.top_k) {
            (Some(gamma), None) => Some(PartitionRule::KeywordProximity { gamma }),
            (None, Some(k)) => Some(PartitionRule::TopTerms { k }),
            _ => None,
        };
        if let Some(r) = &rule {
            r.validate()?;
        }
        Ok(rule)
    }

    fn classify_rule(&self) -> Result<Option<TrainedRule>> {
        if !self.trained {
            return Ok(None);
        }
        let (Some(theta), Some(rule)) = (self.theta, self.rule()?) else {
            bail!("--trained needs --theta and one of --gamma or --top-k");
        };
        if !(0.0..=1.0).contains(&theta) {
            bail!("--theta {theta} outside [0, 1]");
        }
        Ok(Some(TrainedRule { theta, rule }))
    }
}

/// Errors found before any work starts exit with status 2.
struct ConfigError(anyhow::Error);

impl From<anyhow::Error> for ConfigError {
    fn from(e: anyhow::Error) -> Self {
        ConfigError(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.log_level {
        LogLevel::Quiet => log::LevelFilter::Error,
        LogLevel::Normal => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match prepare(&cli) {
        Err(ConfigError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Ok(plan) => match execute(&cli, plan) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}

enum Plan {
    Synth(PathBuf, SynthConfig),
    Pipeline { cfg: LoadedConfig, hazards: Vec<String>, output_root: PathBuf },
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest => "ingest",
        Command::Dedup => "dedup",
        Command::Featurize => "featurize",
        Command::Train => "train",
        Command::Sweep => "sweep",
        Command::Select => "select",
        Command::Classify { .. } => "classify",
        Command::Evaluate { .. } => "evaluate",
        Command::Ensemble { .. } => "ensemble",
        Command::DumpTopics { .. } => "dump-topics",
        Command::Synth { .. } => "synth",
    }
}

fn variant_list(given: &[String]) -> Vec<String> {
    if given.is_empty() {
        VARIANT_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        given.to_vec()
    }
}

/// Loads and validates everything the command needs without doing any work.
fn prepare(cli: &Cli) -> Result<Plan, ConfigError> {
    if let Command::Synth { out, settings, seed, num_docs } = &cli.command {
        let mut cfg = match settings {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => SynthConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = *s;
        }
        if let Some(n) = num_docs {
            cfg.num_docs = *n;
        }
        if cfg.num_docs == 0 || cfg.keywords.is_empty() || !(0.0..=1.0).contains(&cfg.relevant_fraction) {
            return Err(anyhow::anyhow!("synth settings need documents, keywords and a fraction in [0, 1]").into());
        }
        return Ok(Plan::Synth(out.clone(), cfg));
    }

    let Some(path) = &cli.config else {
        return Err(anyhow::anyhow!("--config is required for {}", command_name(&cli.command)).into());
    };
    let cfg = LoadedConfig::load(path)?;
    let hazards: Vec<String> = match (&cli.hazard, cli.all_hazards) {
        (Some(h), _) => {
            cfg.hazard(h)?;
            vec![h.clone()]
        }
        (None, true) => cfg.config.hazards.keys().cloned().collect(),
        (None, false) if cfg.config.hazards.len() == 1 => cfg.config.hazards.keys().cloned().collect(),
        (None, false) => {
            return Err(anyhow::anyhow!("config lists several hazards; pass --hazard NAME or --all-hazards").into())
        }
    };
    let output_root = match &cli.output_dir {
        Some(p) => p.clone(),
        None => cfg.resolve(&cfg.config.output_dir),
    };

    let name = command_name(&cli.command);
    let variants = match &cli.command {
        Command::Classify { variants, trained } | Command::DumpTopics { variants, trained, .. } => {
            if let Command::Classify { .. } = cli.command {
                trained.classify_rule()?;
            } else {
                trained.rule()?;
            }
            if trained.trained && variants.is_empty() {
                Vec::new()
            } else {
                variant_list(variants)
            }
        }
        _ => Vec::new(),
    };
    let needs_gold = match &cli.command {
        Command::Sweep | Command::Select | Command::Evaluate { .. } => true,
        Command::DumpTopics { theta_topic, .. } => theta_topic.is_some(),
        _ => false,
    };
    for h in &hazards {
        let paths = cfg.hazard(h)?;
        let mut required = vec![cfg.resolve(&paths.keywords)];
        if name == "ingest" {
            required.push(cfg.resolve(&paths.corpus));
        }
        if needs_gold {
            match &paths.gold {
                Some(g) => required.push(cfg.resolve(g)),
                None => return Err(anyhow::anyhow!("{name} needs a gold file for hazard {h}").into()),
            }
        }
        if let Some(s) = &cfg.config.stopwords {
            required.push(cfg.resolve(s));
        }
        let layout = Layout { root: output_root.join(h) };
        required.extend(commands::stage_inputs(name, &layout, &variants));
        if let Command::Classify { trained, .. } | Command::DumpTopics { trained, .. } = &cli.command {
            if trained.trained {
                required.extend([layout.features(), layout.model()]);
            }
        }
        if let Some(missing) = required.iter().find(|p| !p.exists()) {
            return Err(anyhow::anyhow!("{h}: {} does not exist", missing.display()).into());
        }
        cfg.hazard_config(h)?;
    }
    Ok(Plan::Pipeline { cfg, hazards, output_root })
}

fn execute(cli: &Cli, plan: Plan) -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (cfg, hazards, output_root) = match plan {
        Plan::Synth(dir, cfg) => return run_synth(&dir, &cfg, args),
        Plan::Pipeline { cfg, hazards, output_root } => (cfg, hazards, output_root),
    };
    let name = command_name(&cli.command);
    let debug = cli.log_level == LogLevel::Debug;
    for h in &hazards {
        let mut run = Run::new(&cfg, h, &output_root, debug, args.clone());
        match &cli.command {
            Command::Ingest => commands::ingest(&mut run)?,
            Command::Dedup => commands::dedup(&mut run)?,
            Command::Featurize => commands::featurize(&mut run)?,
            Command::Train => commands::train(&mut run)?,
            Command::Sweep => commands::run_sweep(&mut run)?,
            Command::Select => commands::select(&mut run)?,
            Command::Classify { variants, trained } => {
                let names = if trained.trained && variants.is_empty() { Vec::new() } else { variant_list(variants) };
                commands::classify_variants(&mut run, &names, trained.classify_rule()?)?
            }
            Command::Evaluate { predictions, split } => {
                for r in commands::evaluate_predictions(&mut run, predictions, *split)? {
                    if cli.log_level != LogLevel::Quiet {
                        println!("{}", r.render());
                    }
                }
            }
            Command::Ensemble { inputs } => commands::ensemble(&mut run, inputs)?,
            Command::DumpTopics { variants, trained, theta_topic, split } => {
                let opts = DumpOptions {
                    variants: if trained.trained && variants.is_empty() { Vec::new() } else { variant_list(variants) },
                    trained: trained.rule()?,
                    include_trained: trained.trained,
                    theta_topic: *theta_topic,
                    split: *split,
                };
                let report = commands::dump_topics(&mut run, &opts)?;
                if cli.log_level != LogLevel::Quiet {
                    print!("{report}");
                }
            }
            Command::Synth { .. } => unreachable!("handled above"),
        }
        run.write_manifest(name).with_context(|| format!("writing the {name} manifest"))?;
    }
    Ok(())
}

fn run_synth(dir: &Path, cfg: &SynthConfig, args: Vec<String>) -> Result<()> {
    let written = commands::synth(dir, cfg)?;
    let files: Vec<serde_json::Value> = written
        .iter()
        .map(|p| {
            Ok(serde_json::json!({
                "path": p.strip_prefix(dir).unwrap_or(p).display().to_string(),
                "sha256": commands::sha256_file(p)?,
            }))
        })
        .collect::<Result<_>>()?;
    let manifest = serde_json::json!({
        "command": "synth",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "settings": cfg,
        "args": args,
        "outputs": files,
    });
    let path = dir.join("manifests/synth.json");
    std::fs::create_dir_all(path.parent().expect("has parent"))?;
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    log::info!("wrote {} files to {}", written.len(), dir.display());
    Ok(())
}
