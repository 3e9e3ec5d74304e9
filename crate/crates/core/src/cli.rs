//! Command-line front end. Every command that writes files writes a
//! `manifest.json` next to its outputs describing the resolved inputs.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::catalog::TechniqueCatalog;
use crate::checkpoint;
use crate::corpus::{article_path, corpus_statistics, format_labels, parse_labels, Corpus, TechniqueCounts};
use crate::error::{Error, Result};
use crate::eval::{confusion_csv, evaluate, score_fragments, ConfusionMatrix, FlcScore, Prf};
use crate::gradcheck::{gradient_check, tiny_problem};
use crate::inference::{predict_corpus, Thresholds};
use crate::losses::Grounding;
use crate::model::{DefinitionEncoderMode, LossOptions, TrainingExample};
use crate::synth::{self, SynthConfig};
use crate::trainer::{self, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "propspan", version, about = "Propaganda technique span detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint with its training report.
    Train(TrainArgs),
    /// Decode a corpus with a trained checkpoint.
    Predict(PredictArgs),
    /// Score predicted fragments, or a checkpoint, against gold labels.
    Score(ScoreArgs),
    /// Per-technique fragment counts of a labels file.
    Stats(StatsArgs),
    /// Finite-difference check of the training gradients on a tiny model.
    Gradcheck(GradcheckArgs),
    /// Generate a seeded synthetic corpus.
    GenSynth(GenSynthArgs),
    /// Paired runs with and without the logic loss, comparing consistency.
    ConsistencyExp(ConsistencyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Write into an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub articles: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Technique catalog JSON; the built-in catalog when omitted.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, requires = "dev_labels")]
    pub dev_articles: Option<PathBuf>,
    #[arg(long, requires = "dev_articles")]
    pub dev_labels: Option<PathBuf>,
    /// Fraction of training documents held out when no dev set is given.
    #[arg(long, default_value_t = 0.1)]
    pub dev_fraction: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    /// TOML training config; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep the logic loss; `false` sets its weight to 0.
    #[arg(long, action = clap::ArgAction::Set, default_value_t = true)]
    pub use_logic: bool,
    /// Keep the definition loss; `false` sets its weight to 0.
    #[arg(long, action = clap::ArgAction::Set, default_value_t = true)]
    pub use_def: bool,
    #[arg(long)]
    pub slc_threshold: Option<f64>,
    #[arg(long)]
    pub flc_threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub articles: PathBuf,
    #[arg(long)]
    pub slc_threshold: Option<f64>,
    #[arg(long)]
    pub flc_threshold: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Gold labels TSV.
    #[arg(long)]
    pub labels: PathBuf,
    /// Article directory; required with `--checkpoint`.
    #[arg(long)]
    pub articles: Option<PathBuf>,
    /// Predicted fragments in labels format.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub predictions: Option<PathBuf>,
    #[arg(long, requires = "articles")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub slc_threshold: Option<f64>,
    #[arg(long)]
    pub flc_threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Validate offsets against these articles.
    #[arg(long)]
    pub articles: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 2)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GenSynthArgs {
    /// TOML generator config; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sentences: Option<usize>,
    #[arg(long, default_value_t = 128)]
    pub dev_sentences: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ConsistencyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4, 5, 6, 7, 8, 9])]
    pub seeds: Vec<u64>,
    /// Logic weight of the second arm.
    #[arg(long, default_value_t = 0.01)]
    pub gamma: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Serialize)]
struct ScoreFiles {
    spans: Prf,
    full: FlcScore,
}

#[derive(Debug, Serialize)]
struct InputDigest {
    role: String,
    path: PathBuf,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    code_version: &'a str,
    seed: Option<u64>,
    config: C,
    inputs: Vec<InputDigest>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digest of every `article*.txt` file (name and content) in id order.
fn sha256_articles(dir: &Path) -> Result<String> {
    let docs = crate::corpus::load_articles(dir)?;
    let mut h = Sha256::new();
    for d in &docs {
        let path = article_path(dir, &d.id);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update(d.id.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn digest(role: &str, path: &Path) -> Result<InputDigest> {
    let sha256 = if path.is_dir() {
        sha256_articles(path)?
    } else {
        sha256_file(path)?
    };
    Ok(InputDigest {
        role: role.to_string(),
        path: path.to_path_buf(),
        sha256,
    })
}

fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && !force {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(dir, name, text)
}

fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    seed: Option<u64>,
    config: C,
    inputs: Vec<InputDigest>,
) -> Result<()> {
    let manifest = Manifest {
        command,
        code_version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
        inputs,
    };
    write_json(dir, "manifest.json", &manifest)
}

fn load_catalog(path: Option<&Path>) -> Result<TechniqueCatalog> {
    match path {
        Some(p) => TechniqueCatalog::load(p),
        None => Ok(TechniqueCatalog::default()),
    }
}

fn resolve_thresholds(base: Thresholds, slc: Option<f64>, flc: Option<f64>) -> Result<Thresholds> {
    let t = Thresholds {
        slc: slc.unwrap_or(base.slc),
        flc: flc.unwrap_or(base.flc),
    };
    for v in [t.slc, t.flc] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("threshold {v} outside [0, 1]")));
        }
    }
    Ok(t)
}

/// Defaults, then the config file, then command-line overrides.
pub fn resolve_train_config(args: &TrainingArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if !args.use_logic {
        config.weights.gamma = 0.0;
    }
    if !args.use_def {
        config.weights.lambda = 0.0;
    }
    config.thresholds = resolve_thresholds(config.thresholds, args.slc_threshold, args.flc_threshold)?;
    config.validate()?;
    Ok(config)
}

/// Split documents into train and dev with a seeded shuffle.
pub fn split_documents(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("dev fraction {fraction} outside (0, 1)")));
    }
    let n = corpus.documents.len();
    if n < 2 {
        return Err(Error::Input("need at least two documents to hold out a dev split".into()));
    }
    let mut ids: Vec<&str> = corpus.documents.iter().map(|d| d.id.as_str()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let dev_ids: std::collections::BTreeSet<&str> = ids[..n_dev].iter().copied().collect();
    let pick = |dev: bool| -> Result<Corpus> {
        Corpus::new(
            corpus
                .documents
                .iter()
                .filter(|d| dev_ids.contains(d.id.as_str()) == dev)
                .cloned()
                .collect(),
            corpus
                .fragments
                .iter()
                .filter(|f| dev_ids.contains(f.doc_id.as_str()) == dev)
                .cloned()
                .collect(),
        )
    };
    Ok((pick(false)?, pick(true)?))
}

struct LoadedData {
    train: Corpus,
    dev: Corpus,
    catalog: TechniqueCatalog,
    inputs: Vec<InputDigest>,
}

fn load_data(data: &DataArgs, seed: u64) -> Result<LoadedData> {
    let corpus = Corpus::load(&data.articles, &data.labels)?;
    let catalog = load_catalog(data.catalog.as_deref())?;
    let mut inputs = vec![digest("articles", &data.articles)?, digest("labels", &data.labels)?];
    if let Some(c) = &data.catalog {
        inputs.push(digest("catalog", c)?);
    }
    let (train, dev) = match (&data.dev_articles, &data.dev_labels) {
        (Some(a), Some(l)) => {
            inputs.push(digest("dev_articles", a)?);
            inputs.push(digest("dev_labels", l)?);
            (corpus, Corpus::load(a, l)?)
        }
        _ => split_documents(&corpus, data.dev_fraction, seed)?,
    };
    Ok(LoadedData {
        train,
        dev,
        catalog,
        inputs,
    })
}

fn cmd_train(args: &TrainArgs) -> Result<String> {
    let config = resolve_train_config(&args.training)?;
    let data = load_data(&args.data, config.seed)?;
    prepare_output(&args.output.out, args.output.force)?;
    let out = &args.output.out;
    let trained = trainer::train(&data.train, &data.dev, &data.catalog, &config)?;
    checkpoint::save(&trained.model, &out.join("model.ckpt"))?;
    write_json(out, "train_report.json", &trained.report)?;
    let table = trained.report.to_table();
    write_file(out, "train_report.txt", &table)?;
    write_file(out, "config.toml", config.to_toml())?;
    write_manifest(out, "train", Some(config.seed), &config, data.inputs)?;
    Ok(table)
}

fn cmd_predict(args: &PredictArgs) -> Result<String> {
    let model = checkpoint::load(&args.checkpoint)?;
    let thresholds = resolve_thresholds(Thresholds::default(), args.slc_threshold, args.flc_threshold)?;
    let docs = crate::corpus::load_articles(&args.articles)?;
    let corpus = Corpus::new(docs, Vec::new())?;
    prepare_output(&args.output.out, args.output.force)?;
    let out = &args.output.out;
    let preds = predict_corpus(&model, &corpus, thresholds)?;
    let fragments = preds.fragments();
    write_file(out, "predictions.tsv", format_labels(&fragments))?;
    let mut slc = String::from("doc_id\tsentence\tbegin\tend\tpropaganda\n");
    for (e, p) in preds.examples.iter().zip(&preds.gated) {
        slc.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", e.doc_id, e.index, e.sent_begin, e.sent_end, p.slc));
    }
    write_file(out, "sentences.tsv", slc)?;
    write_manifest(
        out,
        "predict",
        None,
        thresholds,
        vec![digest("checkpoint", &args.checkpoint)?, digest("articles", &args.articles)?],
    )?;
    Ok(format!("{} fragments in {} sentences\n", fragments.len(), preds.examples.len()))
}

fn confusion_from(rows: &[Vec<usize>]) -> ConfusionMatrix {
    let mut m: ConfusionMatrix = Default::default();
    for (dst, src) in m.iter_mut().zip(rows) {
        dst.copy_from_slice(src);
    }
    m
}

fn cmd_score(args: &ScoreArgs) -> Result<String> {
    let mut inputs = vec![digest("labels", &args.labels)?];
    let no_articles = Path::new("");
    let (table, json, csv, thresholds) = if let Some(ckpt) = &args.checkpoint {
        let articles = args.articles.as_ref().expect("clap requires articles");
        let model = checkpoint::load(ckpt)?;
        let thresholds = resolve_thresholds(Thresholds::default(), args.slc_threshold, args.flc_threshold)?;
        let corpus = Corpus::load(articles, &args.labels)?;
        inputs.push(digest("articles", articles)?);
        inputs.push(digest("checkpoint", ckpt)?);
        let report = evaluate(&predict_corpus(&model, &corpus, thresholds)?, &corpus.fragments);
        let csv = confusion_csv(&confusion_from(&report.confusion));
        (report.to_table(), serde_json::to_value(&report), Some(csv), Some(thresholds))
    } else {
        let pred_path = args.predictions.as_ref().expect("clap requires predictions");
        inputs.push(digest("predictions", pred_path)?);
        let (lens, dir) = match &args.articles {
            Some(a) => (
                crate::corpus::load_articles(a)?
                    .iter()
                    .map(|d| (d.id.clone(), d.char_len()))
                    .collect(),
                a.as_path(),
            ),
            None => (unbounded_lengths(&[&args.labels, pred_path])?, no_articles),
        };
        let read = |p: &Path| -> Result<_> {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_labels(&text, p, &lens, dir)
        };
        let gold = read(&args.labels)?;
        let predicted = read(pred_path)?;
        let (spans, full) = score_fragments(&predicted, &gold);
        let mut table = format!("{:<10} {:>6} {:>6} {:>6}\n", "task", "P", "R", "F1");
        for (name, s) in [("Spans", &spans), ("Full", &full.overall)] {
            table.push_str(&format!(
                "{:<10} {:6.2} {:6.2} {:6.2}\n",
                name,
                100.0 * s.precision,
                100.0 * s.recall,
                100.0 * s.f1
            ));
        }
        let json = serde_json::to_value(ScoreFiles { spans, full });
        (table, json, None, None)
    };
    if let Some(out) = &args.out {
        prepare_output(out, args.force)?;
        write_json(out, "score.json", &json.expect("report serializes"))?;
        write_file(out, "score.txt", &table)?;
        if let Some(csv) = csv {
            write_file(out, "confusion.csv", csv)?;
        }
        write_manifest(out, "score", None, thresholds, inputs)?;
    }
    Ok(table)
}

/// Document lengths that accept any offset, used when no articles are given.
fn unbounded_lengths(files: &[&Path]) -> Result<std::collections::HashMap<String, usize>> {
    let mut lens = std::collections::HashMap::new();
    for p in files {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        for line in text.lines() {
            if let Some((id, _)) = line.split_once('\t') {
                if !line.starts_with('#') {
                    lens.insert(id.trim().to_string(), usize::MAX);
                }
            }
        }
    }
    Ok(lens)
}

fn cmd_stats(args: &StatsArgs) -> Result<String> {
    let fragments = match &args.articles {
        Some(a) => Corpus::load(a, &args.labels)?.fragments,
        None => {
            let lens = unbounded_lengths(&[&args.labels])?;
            let text = std::fs::read_to_string(&args.labels).map_err(|e| Error::io(&args.labels, e))?;
            parse_labels(&text, &args.labels, &lens, Path::new(""))?
        }
    };
    let counts: TechniqueCounts = corpus_statistics(&fragments);
    let table = counts.to_table();
    if let Some(out) = &args.out {
        prepare_output(out, args.force)?;
        write_file(out, "stats.tsv", &table)?;
        let mut inputs = vec![digest("labels", &args.labels)?];
        if let Some(a) = &args.articles {
            inputs.push(digest("articles", a)?);
        }
        write_manifest(out, "stats", None, (), inputs)?;
    }
    Ok(table)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(String, bool)> {
    let mut out = String::new();
    let mut ok = true;
    for seed in args.seed..args.seed + args.seeds.max(1) {
        for grounding in [Grounding::Masked, Grounding::Plain] {
            let (model, batch) = tiny_problem(seed, args.batch_size, DefinitionEncoderMode::Separate);
            let refs: Vec<&TrainingExample> = batch.iter().collect();
            let opts = LossOptions {
                grounding,
                ..LossOptions::default()
            };
            let report = gradient_check(&model, &refs, &opts, args.tolerance)?;
            ok &= report.passed();
            out.push_str(&format!(
                "seed {seed} grounding {grounding:?}: max relative error {:.3e} {}\n",
                report.max_rel_error(),
                if report.passed() { "ok" } else { "FAILED" }
            ));
            if !report.passed() {
                out.push_str(&report.to_table());
            }
        }
    }
    Ok((out, ok))
}

fn cmd_gen_synth(args: &GenSynthArgs) -> Result<String> {
    let mut config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(n) = args.sentences {
        config.sentences = n;
    }
    if !(0.0..=1.0).contains(&config.propaganda_rate)
        || !(0.0..=1.0).contains(&config.ambiguity)
        || !(0.0..=1.0).contains(&config.cue_rate)
        || !(0.0..=1.0).contains(&config.second_fragment_rate)
        || config.min_filler > config.max_filler
        || config.min_fragment == 0
        || config.min_fragment > config.max_fragment
        || config.markers_per_technique == 0
        || config.shared_markers == 0
        || config.filler_words == 0
    {
        return Err(Error::Config("invalid synthetic corpus config".into()));
    }
    prepare_output(&args.output.out, args.output.force)?;
    let split = synth::generate(&config, args.dev_sentences);
    split.write(&args.output.out)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        generator: &'a SynthConfig,
        dev_sentences: usize,
    }
    write_manifest(
        &args.output.out,
        "gen-synth",
        Some(config.seed),
        Resolved {
            generator: &config,
            dev_sentences: args.dev_sentences,
        },
        Vec::new(),
    )?;
    Ok(split.train.counts.to_table())
}

fn cmd_consistency(args: &ConsistencyArgs) -> Result<String> {
    let config = resolve_train_config(&args.training)?;
    let data = load_data(&args.data, config.seed)?;
    prepare_output(&args.output.out, args.output.force)?;
    let exp = trainer::consistency_experiment(&data.train, &data.dev, &data.catalog, &config, args.gamma, &args.seeds)?;
    let table = exp.to_table();
    write_json(&args.output.out, "consistency.json", &exp)?;
    write_file(&args.output.out, "consistency.txt", &table)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        train: &'a TrainConfig,
        seeds: &'a [u64],
        gamma: f64,
    }
    write_manifest(
        &args.output.out,
        "consistency-exp",
        Some(config.seed),
        Resolved {
            train: &config,
            seeds: &args.seeds,
            gamma: args.gamma,
        },
        data.inputs,
    )?;
    Ok(table)
}

/// Run a parsed command. Returns the text for stdout and whether the
/// command's own check succeeded.
pub fn run(cli: &Cli) -> Result<(String, bool)> {
    match &cli.command {
        Command::Train(a) => cmd_train(a).map(|s| (s, true)),
        Command::Predict(a) => cmd_predict(a).map(|s| (s, true)),
        Command::Score(a) => cmd_score(a).map(|s| (s, true)),
        Command::Stats(a) => cmd_stats(a).map(|s| (s, true)),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::GenSynth(a) => cmd_gen_synth(a).map(|s| (s, true)),
        Command::ConsistencyExp(a) => cmd_consistency(a).map(|s| (s, true)),
    }
}

/// One-line failure report.
pub fn error_line(e: &Error) -> String {
    let message = e.to_string().replace(['\n', '\r'], " ");
    format!("error kind={} message={}", e.kind(), message)
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            eprintln!("error kind=usage message={}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match run(&cli) {
        Ok((text, ok)) => {
            print!("{text}");
            if ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("propspan").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn ablation_flags_only_touch_their_weights() {
        let base = TrainConfig::default();
        let mut seen = Vec::new();
        for logic in ["true", "false"] {
            for def in ["true", "false"] {
                let cli = parse(&[
                    "train", "--articles", "a", "--labels", "l", "--out", "o", "--use-logic", logic, "--use-def", def,
                ]);
                let Command::Train(args) = cli.command else { panic!() };
                let c = resolve_train_config(&args.training).unwrap();
                assert_eq!(c.weights.gamma, if logic == "true" { base.weights.gamma } else { 0.0 });
                assert_eq!(c.weights.lambda, if def == "true" { base.weights.lambda } else { 0.0 });
                let mut normalized = c.clone();
                normalized.weights.gamma = base.weights.gamma;
                normalized.weights.lambda = base.weights.lambda;
                assert_eq!(normalized, base);
                seen.push(c);
            }
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn overrides_apply_after_config() {
        let cli = parse(&[
            "train", "--articles", "a", "--labels", "l", "--out", "o", "--seed", "9", "--slc-threshold", "0.6",
        ]);
        let Command::Train(args) = cli.command else { panic!() };
        let c = resolve_train_config(&args.training).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.thresholds.slc, 0.6);
        assert_eq!(c.thresholds.flc, 0.9);
        let cli = parse(&["train", "--articles", "a", "--labels", "l", "--out", "o", "--flc-threshold", "2"]);
        let Command::Train(args) = cli.command else { panic!() };
        assert!(matches!(resolve_train_config(&args.training), Err(Error::Config(_))));
    }

    #[test]
    fn error_line_is_single_line() {
        let e = Error::Input("two\nlines".into());
        let line = error_line(&e);
        assert_eq!(line, "error kind=input message=invalid input: two lines");
        assert_eq!(main_with(["propspan", "bogus"]), 2);
    }
}
