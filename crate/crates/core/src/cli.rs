//! Command-line pipelines: ingest, build-index, quantize, search,
//! mine-negatives, finetune, eval and diagnose.
//!
//! Every command validates its inputs and computes all outputs in memory
//! before touching the output location, prints one JSON document to stdout,
//! and logs to stderr. Flags may also come from a TOML file given with
//! `--config`: top-level keys apply to any command that has that flag, a
//! `[command]` table applies to one command, and explicit flags win.
//!
//! Index directory layout:
//!
//! | file             | contents                                   |
//! |------------------|--------------------------------------------|
//! | `index.json`     | dimension, tau, featurizer, phrase length  |
//! | `vectors.gidx`   | phrase vectors                             |
//! | `phrases.jsonl`  | phrase metadata, one line per vector row   |
//! | `passages.jsonl` | passage text (optional)                    |
//! | `quantizer.gopq` | product quantizer (optional)               |

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{
    apply_filter_scores, featurize, load_corpus, FeaturizerConfig, FilterScoreRow,
    HashingFeaturizer, Passage, Phrase, DEFAULT_BLOCK_WORDS, DEFAULT_MAX_PHRASE_LEN,
};
use crate::error::{GidxError, Result};
use crate::eval::{metrics_report, parse_ks, relevance_lists, Judgment};
use crate::index::{
    build_index, read_vectors, vectors_to_bytes, Granularity, IndexStats, PhraseIndex,
    RetrievalResult, SearchMode,
};
use crate::jsonl;
use crate::lexical::{build_bm25, mine_bm25_negatives, mine_same_phrase_negatives};
use crate::matrix::Matrix;
use crate::quantizer::{memory_footprint, train_opq, train_pq, QuantizerModel};
use crate::training::{
    l_hard, l_topic, query_side_finetune, NegativeScheme, QueryEncoder, TrainConfig,
    TrainingExample, TrainingRecord, DEFAULT_TOP_K,
};

pub const INDEX_META: &str = "index.json";
pub const INGEST_META: &str = "ingest.json";
pub const VECTORS_FILE: &str = "vectors.gidx";
pub const PHRASES_FILE: &str = "phrases.jsonl";
pub const PASSAGES_FILE: &str = "passages.jsonl";
pub const QUANTIZER_FILE: &str = "quantizer.gopq";
pub const ENCODER_FILE: &str = "encoder.json";
pub const LOSS_HISTORY_FILE: &str = "loss_history.json";

#[derive(Debug, Parser)]
#[command(name = "gidx", version, about = "Phrase-vector retrieval pipelines")]
pub struct Cli {
    /// TOML file supplying defaults for command flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment a corpus, enumerate phrases and featurize them.
    Ingest(IngestArgs),
    /// Assemble an index directory from vectors and phrase metadata.
    BuildIndex(BuildIndexArgs),
    /// Train a PQ or OPQ quantizer for an index.
    Quantize(QuantizeArgs),
    /// Search an index with a text query.
    Search(SearchArgs),
    /// Add mined negative passages to training data.
    MineNegatives(MineNegativesArgs),
    /// Fine-tune the query encoder with document supervision.
    Finetune(FinetuneArgs),
    /// Compute retrieval metrics on a test set.
    Eval(EvalArgs),
    /// Report the topical and hard-negative diagnostic losses.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct IngestArgs {
    /// Corpus JSONL with id, title and text.
    pub corpus: PathBuf,
    /// Output directory.
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BLOCK_WORDS)]
    pub block_words: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_PHRASE_LEN)]
    pub max_phrase_len: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, env = "GIDX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Optional JSONL of per-phrase filter scores.
    #[arg(long, value_name = "FILE")]
    pub filter_scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct BuildIndexArgs {
    /// Vector file written by ingest.
    pub vectors: PathBuf,
    /// Phrase metadata JSONL, one line per vector row.
    pub meta: PathBuf,
    /// Output index directory.
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f32,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct QuantizeArgs {
    pub index: PathBuf,
    /// Output index directory (may equal the input).
    pub out: PathBuf,
    /// Number of subspaces.
    #[arg(long = "M", default_value_t = 8)]
    pub m: usize,
    /// Centroids per subspace (power of two).
    #[arg(long = "K", default_value_t = 256)]
    pub k: usize,
    /// Learn a rotation (OPQ).
    #[arg(long)]
    pub opq: bool,
    /// Lloyd iterations per k-means phase.
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    /// OPQ outer iterations.
    #[arg(long, default_value_t = 5)]
    pub opq_iters: usize,
    #[arg(long, env = "GIDX_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Phrase,
    Passage,
    Document,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Quantized,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Phrase => Granularity::Phrase,
            GranularityArg::Passage => Granularity::Passage,
            GranularityArg::Document => Granularity::Document,
        }
    }
}

impl From<ModeArg> for SearchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => SearchMode::Exact,
            ModeArg::Quantized => SearchMode::Quantized,
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SearchArgs {
    pub index: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long, value_enum, default_value_t = GranularityArg::Passage)]
    pub granularity: GranularityArg,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    /// Query encoder JSON; the raw query features are used when absent.
    #[arg(long, value_name = "FILE")]
    pub encoder: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MineScheme {
    Bm25,
    SamePhrase,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct MineNegativesArgs {
    pub corpus: PathBuf,
    pub train: PathBuf,
    /// Output training JSONL.
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub scheme: MineScheme,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_BLOCK_WORDS)]
    pub block_words: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct FinetuneArgs {
    pub index: PathBuf,
    pub train: PathBuf,
    /// Output directory for the encoder and loss history.
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Score with quantizer reconstructions.
    #[arg(long)]
    pub quant_aware: bool,
    #[arg(long, env = "GIDX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Mini-batch size; full batch when absent.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Starting encoder; identity when absent.
    #[arg(long, value_name = "FILE")]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    pub index: PathBuf,
    /// Encoder JSON, or `identity`.
    pub encoder: String,
    pub test: PathBuf,
    #[arg(long, default_value = "1,5,20")]
    pub ks: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct DiagnoseArgs {
    pub index: PathBuf,
    /// Encoder JSON, or `identity`.
    pub encoder: String,
    pub dev: PathBuf,
    #[arg(long, default_value_t = 9)]
    pub num_random: usize,
    #[arg(long, env = "GIDX_SEED", default_value_t = 0)]
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// errors and entry points

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Args(#[from] clap::Error),
    #[error(transparent)]
    Run(#[from] GidxError),
}

impl CliError {
    /// 2 for usage errors, 1 for anything else; clap decides for its own errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Args(e) => e.exit_code(),
            CliError::Run(e) if e.is_usage() => 2,
            CliError::Run(_) => 1,
        }
    }
}

/// Parse `argv` (including the program name), run the command and return its JSON output.
pub fn run<I, T>(argv: I) -> std::result::Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = parse(argv.into_iter().map(Into::into).collect())?;
    Ok(execute(cli)?)
}

/// Process entry point: prints output or error, returns the exit code.
pub fn main() -> i32 {
    match run(std::env::args_os()) {
        Ok(out) => {
            println!("{out}");
            0
        }
        Err(CliError::Args(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse(argv: Vec<OsString>) -> std::result::Result<Cli, CliError> {
    let cli = Cli::try_parse_from(&argv)?;
    let Some(config) = cli.config.clone() else {
        return Ok(cli);
    };
    let text = fs::read_to_string(&config).map_err(|e| GidxError::io(&config, e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| GidxError::Parse {
            path: config.clone(),
            line: 0,
            message: e.to_string(),
        })?;
    let name = command_name(&cli.command);
    let injected = config_tokens(&table, name)?;
    if injected.is_empty() {
        return Ok(cli);
    }
    // argv with the subcommand token replaced by subcommand + config flags
    let mut merged = Vec::with_capacity(argv.len() + injected.len());
    let mut replaced = false;
    let mut skip_value = false;
    for (i, a) in argv.into_iter().enumerate() {
        if i == 0 || replaced || skip_value {
            skip_value = false;
            merged.push(a);
            continue;
        }
        if a == "--config" {
            skip_value = true;
        } else if a == name {
            replaced = true;
            merged.push(a);
            merged.extend(injected.iter().map(OsString::from));
            continue;
        }
        merged.push(a);
    }
    Ok(Cli::try_parse_from(merged)?)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::BuildIndex(_) => "build-index",
        Command::Quantize(_) => "quantize",
        Command::Search(_) => "search",
        Command::MineNegatives(_) => "mine-negatives",
        Command::Finetune(_) => "finetune",
        Command::Eval(_) => "eval",
        Command::Diagnose(_) => "diagnose",
    }
}

fn flags_of(sub: &clap::Command) -> Vec<String> {
    sub.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_owned))
        .filter(|l| l != "config" && l != "help")
        .collect()
}

/// Translate config entries that apply to `name` into `--flag=value` tokens.
fn config_tokens(table: &toml::Table, name: &str) -> Result<Vec<String>> {
    let root = Cli::command();
    let own = root.find_subcommand(name).map(flags_of).unwrap_or_default();
    let mut any_flags: Vec<String> = root.get_subcommands().flat_map(flags_of).collect();
    any_flags.sort();
    let canon = |k: &str| k.replace('_', "-");

    let mut entries: BTreeMap<String, toml::Value> = BTreeMap::new();
    for (key, value) in table {
        if value.is_table() {
            if root.find_subcommand(key).is_none() {
                return Err(GidxError::validation(format!(
                    "unknown config section [{key}]"
                )));
            }
            continue;
        }
        let flag = canon(key);
        if !any_flags.contains(&flag) {
            return Err(GidxError::validation(format!("unknown config key {key:?}")));
        }
        if own.contains(&flag) {
            entries.insert(flag, value.clone());
        }
    }
    if let Some(section) = table.get(name).and_then(toml::Value::as_table) {
        for (key, value) in section {
            let flag = canon(key);
            if !own.contains(&flag) {
                return Err(GidxError::validation(format!(
                    "config key {key:?} is not a flag of {name}"
                )));
            }
            entries.insert(flag, value.clone());
        }
    }
    let mut tokens = Vec::new();
    for (flag, value) in entries {
        let rendered = match value {
            toml::Value::Boolean(true) => {
                tokens.push(format!("--{flag}"));
                continue;
            }
            toml::Value::Boolean(false) => continue,
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => {
                return Err(GidxError::validation(format!(
                    "unsupported config value for {flag}: {other}"
                )))
            }
        };
        tokens.push(format!("--{flag}={rendered}"));
    }
    Ok(tokens)
}

pub fn execute(cli: Cli) -> Result<String> {
    let value = match cli.command {
        Command::Ingest(a) => cmd_ingest(&a)?,
        Command::BuildIndex(a) => cmd_build_index(&a)?,
        Command::Quantize(a) => cmd_quantize(&a)?,
        Command::Search(a) => cmd_search(&a)?,
        Command::MineNegatives(a) => cmd_mine_negatives(&a)?,
        Command::Finetune(a) => cmd_finetune(&a)?,
        Command::Eval(a) => cmd_eval(&a)?,
        Command::Diagnose(a) => cmd_diagnose(&a)?,
    };
    serde_json::to_string_pretty(&value).map_err(|e| GidxError::Format(e.to_string()))
}

// ---------------------------------------------------------------------------
// artifacts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestMeta {
    pub featurizer: FeaturizerConfig,
    pub block_words: usize,
    pub max_phrase_len: usize,
    pub num_documents: usize,
    pub num_passages: usize,
    pub num_phrases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerMeta {
    pub num_subspaces: usize,
    pub num_centroids: usize,
    pub opq: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub dim: usize,
    pub tau: f32,
    pub num_phrases: usize,
    pub featurizer: Option<FeaturizerConfig>,
    pub max_phrase_len: Option<usize>,
    pub quantizer: Option<QuantizerMeta>,
}

/// An index directory loaded into memory.
pub struct IndexDir {
    pub meta: IndexMeta,
    pub index: PhraseIndex,
    pub passages: Option<Vec<Passage>>,
}

impl IndexDir {
    pub fn load(dir: &Path) -> Result<IndexDir> {
        let meta: IndexMeta = read_json(&dir.join(INDEX_META))?;
        let vectors = read_vector_file(&dir.join(VECTORS_FILE))?;
        let phrases: Vec<Phrase> = jsonl::read(&dir.join(PHRASES_FILE))?;
        let mut index = build_index(phrases, vectors, meta.tau)?;
        let qpath = dir.join(QUANTIZER_FILE);
        if qpath.exists() {
            let bytes = fs::read(&qpath).map_err(|e| GidxError::io(&qpath, e))?;
            index = index.attach_quantizer(QuantizerModel::read_from(bytes.as_slice())?)?;
        }
        let ppath = dir.join(PASSAGES_FILE);
        let passages = if ppath.exists() {
            Some(jsonl::read(&ppath)?)
        } else {
            None
        };
        Ok(IndexDir {
            meta,
            index,
            passages,
        })
    }

    fn featurizer(&self) -> Result<FeaturizerConfig> {
        self.meta.featurizer.ok_or_else(|| {
            GidxError::State("index has no featurizer; build it from an ingest directory".into())
        })
    }

    fn passages(&self) -> Result<&[Passage]> {
        self.passages
            .as_deref()
            .ok_or_else(|| GidxError::State(format!("index directory has no {PASSAGES_FILE}")))
    }

    fn features(&self, text: &str) -> Result<Vec<f32>> {
        Ok(featurize(text, &self.featurizer()?))
    }

    fn load_encoder(&self, arg: &str) -> Result<QueryEncoder> {
        let enc = if arg == "identity" {
            QueryEncoder::identity(self.featurizer()?.dim)
        } else {
            let enc: QueryEncoder = read_json(Path::new(arg))?;
            enc.validate()?;
            enc
        };
        if enc.dim_out != self.index.dim() || enc.dim_in != self.featurizer()?.dim {
            return Err(GidxError::validation(format!(
                "encoder maps {} -> {}, index needs {} -> {}",
                enc.dim_in,
                enc.dim_out,
                self.featurizer()?.dim,
                self.index.dim()
            )));
        }
        Ok(enc)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| GidxError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| GidxError::Parse {
        path: path.to_owned(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn read_vector_file(path: &Path) -> Result<Matrix> {
    let file = fs::File::open(path).map_err(|e| GidxError::io(path, e))?;
    read_vectors(std::io::BufReader::new(file))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| GidxError::Format(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Write all `(name, bytes)` pairs into `dir`, creating it if needed.
fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GidxError::io(dir, e))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| GidxError::io(&path, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| GidxError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| GidxError::io(path, e))
}

fn load_records(path: &Path) -> Result<Vec<TrainingRecord>> {
    jsonl::read(path)
}

fn examples(dir: &IndexDir, records: &[TrainingRecord]) -> Result<Vec<TrainingExample>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            TrainingExample::from_record(format!("q{i}"), r, dir.features(&r.query)?, &dir.index)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// commands

pub fn cmd_ingest(a: &IngestArgs) -> Result<serde_json::Value> {
    if a.block_words == 0 {
        return Err(GidxError::validation("--block-words must be >= 1"));
    }
    if a.max_phrase_len == 0 {
        return Err(GidxError::validation("--max-phrase-len must be >= 1"));
    }
    let featurizer = FeaturizerConfig {
        dim: a.dim,
        seed: a.seed,
        ..FeaturizerConfig::default()
    };
    featurizer.validate()?;
    let mut corpus = load_corpus(&a.corpus)?;
    corpus.segment(a.block_words)?;
    let mut phrases = corpus.enumerate_phrases(a.max_phrase_len)?;
    let applied = match &a.filter_scores {
        Some(path) => {
            let rows: Vec<FilterScoreRow> = jsonl::read(path)?;
            apply_filter_scores(&mut phrases, &rows)?
        }
        None => 0,
    };
    info!(
        "ingested {} documents, {} passages, {} phrases",
        corpus.len(),
        corpus.passages.len(),
        phrases.len()
    );
    let encoder = HashingFeaturizer(featurizer);
    let vectors = corpus.embed_phrases(&phrases, &encoder)?;
    let meta = IngestMeta {
        featurizer,
        block_words: a.block_words,
        max_phrase_len: a.max_phrase_len,
        num_documents: corpus.len(),
        num_passages: corpus.passages.len(),
        num_phrases: phrases.len(),
    };
    write_outputs(
        &a.out_dir,
        &[
            (PASSAGES_FILE, jsonl::to_bytes(&corpus.passages)?),
            (PHRASES_FILE, jsonl::to_bytes(&phrases)?),
            (VECTORS_FILE, vectors_to_bytes(&vectors)?),
            (INGEST_META, json_bytes(&meta)?),
        ],
    )?;
    Ok(json!({ "ingest": meta, "filter_scores_applied": applied }))
}

/// Filter thresholds reported by `build-index` in addition to the chosen one.
pub const TAU_SWEEP: [f32; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Serialize)]
struct SweepRow {
    tau: f32,
    #[serde(flatten)]
    stats: IndexStats,
}

pub fn cmd_build_index(a: &BuildIndexArgs) -> Result<serde_json::Value> {
    if !a.tau.is_finite() {
        return Err(GidxError::validation("--tau must be finite"));
    }
    let vectors = read_vector_file(&a.vectors)?;
    let phrases: Vec<Phrase> = jsonl::read(&a.meta)?;
    let index = build_index(phrases, vectors, a.tau)?;

    // sibling ingest artifacts travel with the index when present
    let source = a.vectors.parent().unwrap_or(Path::new("."));
    let ingest_path = source.join(INGEST_META);
    let ingest: Option<IngestMeta> = ingest_path
        .exists()
        .then(|| read_json(&ingest_path))
        .transpose()?;
    if let Some(m) = &ingest {
        if m.featurizer.dim != index.dim() {
            return Err(GidxError::validation(format!(
                "{} says dimension {}, vectors have {}",
                ingest_path.display(),
                m.featurizer.dim,
                index.dim()
            )));
        }
    }
    let passages_path = source.join(PASSAGES_FILE);
    let passages = passages_path
        .exists()
        .then(|| fs::read(&passages_path).map_err(|e| GidxError::io(&passages_path, e)))
        .transpose()?;

    let meta = IndexMeta {
        dim: index.dim(),
        tau: a.tau,
        num_phrases: index.len(),
        featurizer: ingest.as_ref().map(|m| m.featurizer),
        max_phrase_len: ingest.as_ref().map(|m| m.max_phrase_len),
        quantizer: None,
    };
    let sweep: Vec<SweepRow> = TAU_SWEEP
        .iter()
        .map(|&tau| SweepRow {
            tau,
            stats: index.with_tau(tau).stats(),
        })
        .collect();
    let mut files = vec![
        (INDEX_META, json_bytes(&meta)?),
        (VECTORS_FILE, vectors_to_bytes(index.vectors())?),
        (PHRASES_FILE, jsonl::to_bytes(index.phrases())?),
    ];
    if let Some(p) = passages {
        files.push((PASSAGES_FILE, p));
    }
    write_outputs(&a.out, &files)?;
    Ok(json!({ "index": meta, "stats": index.stats(), "sweep": sweep }))
}

pub fn cmd_quantize(a: &QuantizeArgs) -> Result<serde_json::Value> {
    let dir = IndexDir::load(&a.index)?;
    let rows: Vec<usize> = dir.index.active_rows().collect();
    let train = dir.index.vectors().select_rows(&rows);
    let (model, report) = if a.opq {
        train_opq(&train, a.m, a.k, a.opq_iters, a.iters, a.seed)?
    } else {
        train_pq(&train, a.m, a.k, a.iters, a.seed)?
    };
    let index = dir.index.attach_quantizer(model.clone())?;
    let n = dir.index.num_active();
    let meta = IndexMeta {
        quantizer: Some(QuantizerMeta {
            num_subspaces: a.m,
            num_centroids: a.k,
            opq: a.opq,
        }),
        ..dir.meta.clone()
    };
    let mut files = vec![
        (INDEX_META, json_bytes(&meta)?),
        (VECTORS_FILE, vectors_to_bytes(index.vectors())?),
        (PHRASES_FILE, jsonl::to_bytes(index.phrases())?),
        (QUANTIZER_FILE, model.to_bytes()?),
    ];
    if let Some(p) = &dir.passages {
        files.push((PASSAGES_FILE, jsonl::to_bytes(p)?));
    }
    write_outputs(&a.out, &files)?;
    Ok(json!({
        "M": a.m,
        "K": a.k,
        "opq": a.opq,
        "seed": a.seed,
        "num_vectors": n,
        "bytes_before": (n * index.dim() * 4) as u64,
        "bytes_after": memory_footprint(index.dim(), a.m, a.k, a.opq, n),
        "objective": report.final_objective,
        "kmeans_objective": report.kmeans_objective,
        "orthogonality_error": model.orthogonality_error(),
    }))
}

pub fn cmd_search(a: &SearchArgs) -> Result<serde_json::Value> {
    let dir = IndexDir::load(&a.index)?;
    let features = dir.features(&a.query)?;
    let qvec = match &a.encoder {
        Some(path) => dir
            .load_encoder(path.to_str().unwrap_or_default())?
            .encode_f32(&features),
        None => features,
    };
    let result = dir
        .index
        .search("query", &qvec, a.k, a.granularity.into(), a.mode.into())?;
    serde_json::to_value(result).map_err(|e| GidxError::Format(e.to_string()))
}

pub fn cmd_mine_negatives(a: &MineNegativesArgs) -> Result<serde_json::Value> {
    if a.n == 0 {
        return Err(GidxError::validation("--n must be >= 1"));
    }
    let mut corpus = load_corpus(&a.corpus)?;
    corpus.segment(a.block_words)?;
    let mut records = load_records(&a.train)?;
    let (scheme, total) = match a.scheme {
        MineScheme::Bm25 => {
            let bm25 = build_bm25(&corpus.passages)?;
            let mut total = 0;
            for r in &mut records {
                let gold = r.gold_passage_id.as_deref();
                let mined: Vec<String> = mine_bm25_negatives(&bm25, &r.query, &r.answers, a.n + 1)
                    .into_iter()
                    .filter(|pid| Some(pid.as_str()) != gold)
                    .take(a.n)
                    .collect();
                total += mined.len();
                r.negatives
                    .insert(NegativeScheme::Bm25Hard.as_str().into(), mined);
            }
            (NegativeScheme::Bm25Hard, total)
        }
        MineScheme::SamePhrase => {
            let mut total = 0;
            for r in &mut records {
                let gold = r.gold_passage_id.as_deref().unwrap_or("");
                let mut mined: Vec<String> = Vec::new();
                for ans in &r.answers {
                    for pid in mine_same_phrase_negatives(&corpus.passages, ans, gold, a.n) {
                        if mined.len() < a.n && !mined.contains(&pid) {
                            mined.push(pid);
                        }
                    }
                }
                total += mined.len();
                r.negatives
                    .insert(NegativeScheme::SamePhrase.as_str().into(), mined);
            }
            (NegativeScheme::SamePhrase, total)
        }
    };
    write_file(&a.out, &jsonl::to_bytes(&records)?)?;
    Ok(json!({ "scheme": scheme.as_str(), "records": records.len(), "negatives": total }))
}

pub fn cmd_finetune(a: &FinetuneArgs) -> Result<serde_json::Value> {
    let dir = IndexDir::load(&a.index)?;
    if a.quant_aware && dir.index.quantizer().is_none() {
        return Err(GidxError::validation(
            "--quant-aware needs an index with a quantizer; run quantize first",
        ));
    }
    let init = match &a.init {
        Some(p) => dir.load_encoder(p.to_str().unwrap_or_default())?,
        None => dir.load_encoder("identity")?,
    };
    let records = load_records(&a.train)?;
    if records.is_empty() {
        return Err(GidxError::validation("training file is empty"));
    }
    if let Some((i, _)) = records
        .iter()
        .enumerate()
        .find(|(_, r)| r.gold_docs.is_empty())
    {
        return Err(GidxError::validation(format!(
            "training record {} has no gold_docs",
            i + 1
        )));
    }
    let data = examples(&dir, &records)?;
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        top_k: a.top_k,
        quantization_aware: a.quant_aware,
        negative_schemes: Default::default(),
    };
    let report = query_side_finetune(&init, &dir.index, &data, &cfg)?;
    write_outputs(
        &a.out,
        &[
            (ENCODER_FILE, json_bytes(&report.encoder)?),
            (LOSS_HISTORY_FILE, json_bytes(&report.loss_history)?),
        ],
    )?;
    Ok(json!({
        "epochs": a.epochs,
        "loss_history": report.loss_history,
        "skipped": report.skipped,
    }))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<serde_json::Value> {
    let ks = parse_ks(&a.ks)?;
    let dir = IndexDir::load(&a.index)?;
    let encoder = dir.load_encoder(&a.encoder)?;
    let records = load_records(&a.test)?;
    if records.is_empty() {
        return Err(GidxError::validation("test set is empty"));
    }
    let k = ks.iter().copied().max().unwrap_or(1);
    let mode: SearchMode = a.mode.into();
    let mut judgments = Vec::new();
    let mut passage_results = Vec::new();
    let mut doc_results: Vec<RetrievalResult> = Vec::new();
    let mut skipped = 0;
    for (i, r) in records.iter().enumerate() {
        if r.answers.is_empty() && r.gold_docs.is_empty() {
            skipped += 1;
            continue;
        }
        let qid = format!("q{i}");
        let qvec = encoder.encode_f32(&dir.features(&r.query)?);
        passage_results.push(
            dir.index
                .search(&qid, &qvec, k, Granularity::Passage, mode)?,
        );
        if !r.gold_docs.is_empty() {
            doc_results.push(dir.index.search(
                &qid,
                &qvec,
                r.gold_docs.len(),
                Granularity::Document,
                mode,
            )?);
        }
        judgments.push(Judgment {
            query_id: qid,
            answers: r.answers.clone(),
            gold_docs: r.gold_docs.iter().cloned().collect(),
        });
    }
    if judgments.is_empty() {
        return Err(GidxError::validation(
            "no test record has answers or gold_docs",
        ));
    }
    let needs_text = judgments.iter().any(|j| !j.answers.is_empty());
    let texts: HashMap<&str, String> = if needs_text {
        dir.passages()?
            .iter()
            .map(|p| (p.passage_id.as_str(), p.text()))
            .collect()
    } else {
        HashMap::new()
    };
    // passage hits are judged against their document's gold set when a query has no answers
    let doc_of: HashMap<&str, &str> = dir
        .index
        .phrases()
        .iter()
        .map(|p| (p.passage_id.as_str(), p.doc_id.as_str()))
        .collect();
    let passage_judgments: Vec<Judgment> = judgments
        .iter()
        .map(|j| Judgment {
            gold_docs: if j.answers.is_empty() {
                dir.index
                    .passage_ids()
                    .iter()
                    .filter(|p| {
                        doc_of
                            .get(p.as_str())
                            .is_some_and(|d| j.gold_docs.contains(*d))
                    })
                    .cloned()
                    .collect()
            } else {
                j.gold_docs.clone()
            },
            ..j.clone()
        })
        .collect();
    let rel = relevance_lists(&passage_results, &passage_judgments, |id| {
        texts.get(id).cloned()
    })?;
    let report = metrics_report(
        &rel,
        &ks,
        (!doc_results.is_empty()).then_some((doc_results.as_slice(), judgments.as_slice())),
        skipped,
    )?;
    serde_json::to_value(report).map_err(|e| GidxError::Format(e.to_string()))
}

pub fn cmd_diagnose(a: &DiagnoseArgs) -> Result<serde_json::Value> {
    let dir = IndexDir::load(&a.index)?;
    let encoder = dir.load_encoder(&a.encoder)?;
    let max_len = dir.meta.max_phrase_len.ok_or_else(|| {
        GidxError::State("index has no phrase length; build it from an ingest directory".into())
    })?;
    let passages = dir.passages()?;
    let records = load_records(&a.dev)?;
    if records.is_empty() {
        return Err(GidxError::validation("dev set is empty"));
    }
    let dev = examples(&dir, &records)?;
    let topic = l_topic(&encoder, &dir.index, &dev, a.num_random, a.seed)?;
    let featurizer = HashingFeaturizer(dir.featurizer()?);
    let hard = l_hard(&encoder, &dir.index, &dev, passages, &featurizer, max_len)?;
    Ok(json!({
        "l_topic": topic.loss,
        "l_hard": hard.loss,
        "skipped": { "l_topic": topic.skipped, "l_hard": hard.skipped },
        "evaluated": { "l_topic": topic.evaluated, "l_hard": hard.evaluated },
    }))
}
