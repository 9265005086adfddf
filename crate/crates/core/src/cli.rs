//! The `fragscan` command line: generate / train / predict / evaluate / stats.
//!
//! Settings come from an optional JSON `RunConfig` file; flags override it.
//! Every command reads and validates all of its inputs before it writes
//! anything.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use crate::corpus::{compute_stats, generate_synthetic, load_corpus, save_corpus, Document, SyntheticSpec};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_corpus, render_table, AggregationMode, MetricsReport, ReportRow};
use crate::inference::{load_predictions, predict_corpus, save_predictions, DecodeRule, GateConfig};
use crate::model::{load_checkpoint, save_checkpoint, CheckpointMeta, DualHeadParams, EncoderConfig};
use crate::segmenter::{build_vocab, Vocabulary};
use crate::training::{split_holdout, train, TrainConfig};

/// Where each command reads and writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub vocab: PathBuf,
    pub checkpoint: PathBuf,
    pub predictions: PathBuf,
    /// Text report; the JSON report goes next to it with a `.json` extension.
    pub report: PathBuf,
    pub history: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "corpus.jsonl".into(),
            vocab: "vocab.json".into(),
            checkpoint: "model.ckpt".into(),
            predictions: "predictions.jsonl".into(),
            report: "report.txt".into(),
            history: "history.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub gate: GateConfig,
    pub synthetic: SyntheticSpec,
    pub evaluation_mode: AggregationMode,
    pub vocab_max_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            gate: GateConfig::default(),
            synthetic: SyntheticSpec::default(),
            evaluation_mode: AggregationMode::default(),
            vocab_max_size: 4096,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks the nested configs. The train-time gate is taken from `gate`.
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.train.validate()?;
        self.gate.validate()?;
        self.synthetic.validate()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fragscan",
    version,
    about = "Token-level detection of machine-generated fragments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labelled corpus.
    Generate {
        /// Number of documents.
        #[arg(long)]
        n_docs: Option<usize>,
    },
    /// Build the vocabulary and train; writes checkpoint, vocabulary and history.
    Train {
        /// Train once per window length and write a results table instead of a checkpoint.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        sweep: Option<Vec<usize>>,
    },
    /// Label every document of the corpus with a trained checkpoint.
    Predict,
    /// Score predictions against the gold corpus.
    Evaluate {
        /// Row name in the report table.
        #[arg(long, default_value = "Encoder")]
        name: String,
    },
    /// Print per-label span counts and mean lengths.
    Stats,
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON run configuration; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Dropout on the shared hidden vector before the heads.
    #[arg(long, global = true)]
    pub dropout: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub single_head: bool,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<AggregationMode>,
    /// Leave timestamps out of written artifacts.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub predictions: Option<PathBuf>,
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[arg(long, global = true)]
    pub history: Option<PathBuf>,
}

fn parse_mode(s: &str) -> std::result::Result<AggregationMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Overrides {
    /// Applies the flags on top of `config`.
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(w) = self.window {
            config.train.window = w;
        }
        if let Some(tau) = self.tau {
            config.gate.tau = tau;
        }
        if let Some(p) = self.dropout {
            config.encoder.head_dropout_p = p;
        }
        if let Some(seed) = self.seed {
            config.train.seed = seed;
            config.synthetic.seed = seed;
        }
        if let Some(e) = self.epochs {
            config.train.epochs = e;
        }
        if self.single_head {
            config.train.single_head_baseline = true;
        }
        if let Some(m) = self.mode {
            config.evaluation_mode = m;
        }
        let p = &mut config.paths;
        for (flag, slot) in [
            (&self.corpus, &mut p.corpus),
            (&self.vocab, &mut p.vocab),
            (&self.checkpoint, &mut p.checkpoint),
            (&self.predictions, &mut p.predictions),
            (&self.report, &mut p.report),
            (&self.history, &mut p.history),
        ] {
            if let Some(v) = flag {
                *slot = v.clone();
            }
        }
        config.train.eval_gate = config.gate;
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status: 0 success, 1 usage or validation error, 2 runtime error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("FRAGSCAN_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

/// Resolves the configuration and runs one command.
pub fn run(cli: &Cli) -> Result<()> {
    let mut config = match &cli.overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut config);
    config.validate()?;
    let stamp = if cli.overrides.no_timestamp { None } else { Some(now()) };
    match &cli.command {
        Command::Generate { n_docs } => {
            if let Some(n) = n_docs {
                config.synthetic.n_docs = *n;
            }
            cmd_generate(&config)
        }
        Command::Train { sweep: Some(windows) } => cmd_sweep(&config, windows, stamp),
        Command::Train { sweep: None } => cmd_train(&config, stamp),
        Command::Predict => cmd_predict(&config, cli.overrides.window),
        Command::Evaluate { name } => cmd_evaluate(&config, name, stamp),
        Command::Stats => cmd_stats(&config),
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn require_input(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "input file {} does not exist",
            path.display()
        )))
    }
}

fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    require_input(path)?;
    load_corpus(path)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn json_report_path(report: &Path) -> PathBuf {
    report.with_extension("json")
}

fn cmd_generate(config: &RunConfig) -> Result<()> {
    config.synthetic.validate()?;
    let docs = generate_synthetic(&config.synthetic)?;
    save_corpus(&config.paths.corpus, &docs)?;
    info!("wrote {} documents to {}", docs.len(), config.paths.corpus.display());
    Ok(())
}

fn prepare_training(config: &RunConfig) -> Result<(Vec<Document>, Vocabulary)> {
    let docs = read_corpus(&config.paths.corpus)?;
    if docs.is_empty() {
        return Err(Error::Config(format!(
            "corpus {} is empty",
            config.paths.corpus.display()
        )));
    }
    let vocab = build_vocab(&docs, config.vocab_max_size)?;
    Ok((docs, vocab))
}

fn cmd_train(config: &RunConfig, stamp: Option<u64>) -> Result<()> {
    let (docs, vocab) = prepare_training(config)?;
    let (params, history) = train(&docs, &vocab, &config.encoder, &config.train)?;
    let meta = CheckpointMeta {
        single_head: config.train.single_head_baseline,
        window: config.train.window,
        created_at: stamp,
    };
    vocab.save(&config.paths.vocab)?;
    save_checkpoint(&config.paths.checkpoint, &params, &meta)?;
    history.save(&config.paths.history)?;
    if let Some(f1) = history.epochs.last().and_then(|e| e.eval_macro_f1) {
        println!("held-out macro F1 {f1:.4}");
    }
    Ok(())
}

fn run_name(window: usize, single_head: bool) -> String {
    if single_head {
        format!("Single head + {window}")
    } else {
        format!("Encoder + {window}")
    }
}

#[derive(Serialize)]
struct TableReport<'a> {
    rows: &'a [ReportRow],
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<u64>,
}

/// Trains one model per window and scores each on the held-out split.
fn cmd_sweep(config: &RunConfig, windows: &[usize], stamp: Option<u64>) -> Result<()> {
    if windows.contains(&0) {
        return Err(Error::Config("sweep window lengths must be at least 1".into()));
    }
    let (docs, vocab) = prepare_training(config)?;
    let mut rows = Vec::with_capacity(windows.len());
    for &window in windows {
        let t_config = TrainConfig {
            window,
            ..config.train.clone()
        };
        let (params, history) = train(&docs, &vocab, &config.encoder, &t_config)?;
        let (_, held_out) = split_holdout(&docs);
        let eval_docs = if held_out.is_empty() { &docs[..] } else { held_out };
        let report = score(
            &params,
            eval_docs,
            &vocab,
            window,
            &t_config.decode_rule(),
            config.evaluation_mode,
        )?;
        info!(
            "window {window}: {} epochs, macro F1 {:.4}",
            history.epochs.len(),
            report.macro_f1
        );
        rows.push(ReportRow::from_report(
            run_name(window, t_config.single_head_baseline),
            &report,
        ));
    }
    let table = render_table(&rows);
    let json = serde_json::to_string_pretty(&TableReport {
        rows: &rows,
        generated_at: stamp,
    })?;
    write_text(&config.paths.report, &table)?;
    write_text(&json_report_path(&config.paths.report), &(json + "\n"))?;
    print!("{table}");
    Ok(())
}

fn score(
    params: &DualHeadParams,
    docs: &[Document],
    vocab: &Vocabulary,
    window: usize,
    rule: &DecodeRule,
    mode: AggregationMode,
) -> Result<MetricsReport> {
    let preds = predict_corpus(params, docs, vocab, window, rule)?;
    evaluate_corpus(docs, &preds, mode)
}

/// The window comes from `--window` if given, else from the checkpoint.
fn cmd_predict(config: &RunConfig, window_flag: Option<usize>) -> Result<()> {
    let docs = read_corpus(&config.paths.corpus)?;
    require_input(&config.paths.vocab)?;
    require_input(&config.paths.checkpoint)?;
    let vocab = Vocabulary::load(&config.paths.vocab)?;
    let (params, meta) = load_checkpoint(&config.paths.checkpoint)?;
    if params.config.vocab_size != vocab.len() {
        return Err(Error::Validation(format!(
            "checkpoint expects {} vocabulary entries, vocabulary has {}",
            params.config.vocab_size,
            vocab.len()
        )));
    }
    let window = window_flag.unwrap_or(meta.window);
    if window == 0 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    let rule = if meta.single_head || config.train.single_head_baseline {
        DecodeRule::HeadBOnly
    } else {
        DecodeRule::Gated(config.gate)
    };
    let preds = predict_corpus(&params, &docs, &vocab, window, &rule)?;
    save_predictions(&config.paths.predictions, &preds)?;
    info!(
        "wrote {} predictions to {}",
        preds.len(),
        config.paths.predictions.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    name: &'a str,
    #[serde(flatten)]
    report: &'a MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<u64>,
}

fn cmd_evaluate(config: &RunConfig, name: &str, stamp: Option<u64>) -> Result<()> {
    let gold = read_corpus(&config.paths.corpus)?;
    require_input(&config.paths.predictions)?;
    let preds = load_predictions(&config.paths.predictions)?;
    let report = evaluate_corpus(&gold, &preds, config.evaluation_mode)?;
    let text = report.render(name);
    let json = serde_json::to_string_pretty(&EvaluationReport {
        name,
        report: &report,
        generated_at: stamp,
    })?;
    write_text(&config.paths.report, &text)?;
    write_text(&json_report_path(&config.paths.report), &(json + "\n"))?;
    print!("{text}");
    Ok(())
}

fn cmd_stats(config: &RunConfig) -> Result<()> {
    let docs = read_corpus(&config.paths.corpus)?;
    print!("{}", compute_stats(&docs).render_table());
    Ok(())
}
