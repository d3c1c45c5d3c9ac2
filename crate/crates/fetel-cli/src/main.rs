//! `fetel`: fine-grained entity typing with entity-linking type evidence.
//!
//! Subcommands wire the pipeline end to end: `build-kb` turns entity records
//! and anchor counts into a KB snapshot, `make-training-data` weakly labels
//! anchor documents, `train` fits a typing model, and `evaluate` / `predict`
//! / `link` consume a checkpoint. Machine-readable JSON goes to stdout;
//! human-readable summaries go to stderr.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime
//! failure.

mod pipeline_config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fetel_core::corpus::{
    load_anchor_documents, load_dataset, split_dev, write_dataset, EmbeddingTable,
};
use fetel_core::eval::evaluate;
use fetel_core::features::featurize_dataset;
use fetel_core::kb::{load_anchor_pairs, load_entities_jsonl, AnchorStatistics, KnowledgeBase};
use fetel_core::linker::link_in_document;
use fetel_core::model::{
    decode_prediction, load_checkpoint, save_checkpoint, DecodePolicy, ModelConfig,
};
use fetel_core::training::train;
use fetel_core::types::{KbTypeMapping, TypeVocabulary};

use pipeline_config::{merge, PipelineConfig};

#[derive(Parser)]
#[command(name = "fetel", version, about = "Fine-grained entity typing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a KB snapshot from entity records and anchor counts.
    BuildKb(BuildKbArgs),
    /// Generate weakly labeled mention JSONL from anchor documents.
    MakeTrainingData(MakeTrainingDataArgs),
    /// Train a typing model and write a checkpoint directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Add predicted labels to mention records.
    Predict(PredictArgs),
    /// Link mentions to KB entities.
    Link(LinkArgs),
}

#[derive(Args)]
struct BuildKbArgs {
    /// Entity records, JSONL with fields id, title, types.
    #[arg(long)]
    entities: PathBuf,
    /// Anchor occurrences, TSV surface<TAB>entity_id.
    #[arg(long)]
    anchors: PathBuf,
    /// Type vocabulary file.
    #[arg(long)]
    types: PathBuf,
    /// KB type mapping TSV.
    #[arg(long)]
    mapping: PathBuf,
    /// Snapshot output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MakeTrainingDataArgs {
    /// Anchor documents, JSONL with doc_id, tokens, anchors.
    #[arg(long)]
    anchor_docs: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    mapping: PathBuf,
    #[arg(long)]
    types: PathBuf,
    /// Mention JSONL output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON pipeline config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    /// Dev set path; when absent, --dev-size examples are split off.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Dev split size when --dev is absent (default: 10%, capped at 2000).
    #[arg(long)]
    dev_size: Option<usize>,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    types: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Checkpoint output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda_p: Option<f64>,
    #[arg(long)]
    nil_rate: Option<f64>,
    /// Disable the random fine-grained person type added to KB evidence.
    #[arg(long)]
    no_person_noise: bool,
    /// Ablation: zero the KB type vector and link confidence.
    #[arg(long)]
    no_el: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long)]
    model: PathBuf,
    /// Labeled mention JSONL.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Decode policy: multi_path or single_path.
    #[arg(long, default_value = "multi_path")]
    policy: String,
    /// Report output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    /// Mention JSONL; labels optional.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long, default_value = "multi_path")]
    policy: String,
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LinkArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Mention JSONL; labels optional.
    #[arg(long)]
    data: PathBuf,
    /// Output JSONL path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error paired with the process exit code it maps to.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
    fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
    fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<fetel_core::Error> for CliError {
    fn from(err: fetel_core::Error) -> Self {
        use fetel_core::Error::*;
        let code = match &err {
            IoFailure { .. } | NonFiniteLoss { .. } => 3,
            _ => 2,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn require_exists(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{} path does not exist: {}",
            what,
            path.display()
        )))
    }
}

fn required(opt: Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    opt.ok_or_else(|| CliError::usage(format!("missing required --{} (flag or config)", flag)))
}

fn parse_policy(raw: &str) -> CliResult<DecodePolicy> {
    raw.parse::<DecodePolicy>().map_err(|_| {
        CliError::usage(format!(
            "unknown policy {:?}; use multi_path or single_path",
            raw
        ))
    })
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("serialization failed: {}", e)))?;
    match out {
        None => println!("{}", json),
        Some(path) => std::fs::write(path, json + "\n")
            .map_err(|e| CliError::runtime(format!("cannot write {}: {}", path.display(), e)))?,
    }
    Ok(())
}

fn load_config(path: &Option<PathBuf>) -> CliResult<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            require_exists(p, "config")?;
            PipelineConfig::load(p).map_err(|e| CliError::usage(e.to_string()))
        }
    }
}

fn cmd_build_kb(args: BuildKbArgs) -> CliResult<()> {
    for (path, what) in [
        (&args.entities, "entities"),
        (&args.anchors, "anchors"),
        (&args.types, "types"),
        (&args.mapping, "mapping"),
    ] {
        require_exists(path, what)?;
    }
    let vocab = TypeVocabulary::load(&args.types)?;
    let mapping = KbTypeMapping::load(&args.mapping, &vocab)?;
    let (entities, entity_report) = load_entities_jsonl(&args.entities, &mapping, &vocab)?;
    let pairs = load_anchor_pairs(&args.anchors)?;
    let (stats, ingest_report) = AnchorStatistics::ingest(pairs);
    let kb = KnowledgeBase::new(entities, stats);
    kb.save(&args.out)?;

    #[derive(serde::Serialize)]
    struct Summary {
        entities: usize,
        surfaces: usize,
        anchor_pairs: u64,
        skipped_records: u64,
        snapshot: String,
    }
    emit_json(
        &Summary {
            entities: kb.n_entities(),
            surfaces: kb.stats().n_surfaces(),
            anchor_pairs: ingest_report.pairs_ingested,
            skipped_records: ingest_report.skipped_empty_surface
                + ingest_report.skipped_empty_entity
                + entity_report.duplicates_replaced,
            snapshot: args.out.display().to_string(),
        },
        None,
    )?;
    eprintln!(
        "built KB snapshot {} ({} entities, {} surfaces)",
        args.out.display(),
        kb.n_entities(),
        kb.stats().n_surfaces()
    );
    Ok(())
}

fn cmd_make_training_data(args: MakeTrainingDataArgs) -> CliResult<()> {
    for (path, what) in [
        (&args.anchor_docs, "anchor-docs"),
        (&args.kb, "kb"),
        (&args.mapping, "mapping"),
        (&args.types, "types"),
    ] {
        require_exists(path, what)?;
    }
    let vocab = TypeVocabulary::load(&args.types)?;
    let mapping = KbTypeMapping::load(&args.mapping, &vocab)?;
    let kb = KnowledgeBase::load(&args.kb)?;
    let docs = load_anchor_documents(&args.anchor_docs)?;
    let (examples, report) = fetel_core::corpus::generate_weak_labels(&docs, &kb, &mapping, &vocab);
    write_dataset(&args.out, &examples)?;

    #[derive(serde::Serialize)]
    struct Summary {
        #[serde(flatten)]
        report: fetel_core::corpus::WeakLabelReport,
        output: String,
    }
    emit_json(
        &Summary {
            report,
            output: args.out.display().to_string(),
        },
        None,
    )?;
    eprintln!(
        "wrote {} weakly labeled mentions to {}",
        report.mentions_generated,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    let types_path = required(merge(args.types, config.types.as_ref()), "types")?;
    let mapping_path = required(merge(args.mapping, config.mapping.as_ref()), "mapping")?;
    let embeddings_path = required(
        merge(args.embeddings, config.embeddings.as_ref()),
        "embeddings",
    )?;
    let kb_path = required(merge(args.kb, config.kb.as_ref()), "kb")?;
    let train_path = required(merge(args.train, config.train_data.as_ref()), "train")?;
    let dev_path = merge(args.dev, config.dev_data.as_ref());
    let out_dir = required(merge(args.out, config.out.as_ref()), "out")?;

    for (path, what) in [
        (&types_path, "types"),
        (&mapping_path, "mapping"),
        (&embeddings_path, "embeddings"),
        (&kb_path, "kb"),
        (&train_path, "train"),
    ] {
        require_exists(path, what)?;
    }
    if let Some(dev) = &dev_path {
        require_exists(dev, "dev")?;
    }

    let vocab = TypeVocabulary::load(&types_path)?;
    let mapping = KbTypeMapping::load(&mapping_path, &vocab)?;
    let table = EmbeddingTable::load(&embeddings_path)?;
    let kb = KnowledgeBase::load(&kb_path)?;

    let mut model_config = config.model.clone().unwrap_or_else(|| ModelConfig {
        embed_dim: table.dimension(),
        ..ModelConfig::default()
    });
    model_config.embed_dim = table.dimension();
    if args.no_el {
        model_config.use_el_features = false;
    }

    let mut training_config = config.training.clone().unwrap_or_default();
    if let Some(v) = args.lambda_p {
        training_config.lambda_p = v;
    }
    if let Some(v) = args.nil_rate {
        training_config.nil_dropout_rate = v;
    }
    if args.no_person_noise {
        training_config.person_noise_enabled = false;
    }
    if let Some(v) = args.batch_size {
        training_config.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        training_config.learning_rate = v;
    }
    if let Some(v) = args.epochs {
        training_config.max_epochs = v;
    }
    if let Some(v) = args.patience {
        training_config.patience = v;
    }
    if let Some(v) = args.seed.or(config.seed) {
        training_config.seed = v;
    }

    let all_train = load_dataset(&train_path, &vocab)?;
    let (train_set, dev_set) = match dev_path {
        Some(dev) => (all_train, load_dataset(&dev, &vocab)?),
        None => {
            let dev_size = args
                .dev_size
                .unwrap_or_else(|| (all_train.len() / 10).clamp(1, 2000).min(all_train.len()));
            split_dev(all_train, dev_size, training_config.seed)?
        }
    };
    eprintln!(
        "training on {} mentions, {} dev, k = {}",
        train_set.len(),
        dev_set.len(),
        vocab.len()
    );

    let outcome = train(
        &train_set,
        &dev_set,
        &kb,
        &mapping,
        &vocab,
        &table,
        model_config,
        &training_config,
    )?;

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {}", out_dir.display(), e)))?;
    save_checkpoint(&out_dir, &outcome.model, &vocab, &mapping, &table)?;
    let log_path = out_dir.join("train_log.jsonl");
    let log_file = File::create(&log_path)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {}", log_path.display(), e)))?;
    let mut w = BufWriter::new(log_file);
    for entry in &outcome.log {
        let line = serde_json::to_string(entry)
            .map_err(|e| CliError::runtime(format!("log serialization failed: {}", e)))?;
        writeln!(w, "{}", line).map_err(|e| {
            CliError::runtime(format!("cannot write {}: {}", log_path.display(), e))
        })?;
    }
    w.flush()
        .map_err(|e| CliError::runtime(format!("cannot write {}: {}", log_path.display(), e)))?;

    #[derive(serde::Serialize)]
    struct Summary {
        epochs_run: usize,
        best_epoch: usize,
        best_dev_strict: f64,
        checkpoint: String,
        train_log: String,
    }
    emit_json(
        &Summary {
            epochs_run: outcome.log.len(),
            best_epoch: outcome.best_epoch,
            best_dev_strict: outcome.best_dev_strict,
            checkpoint: out_dir.display().to_string(),
            train_log: log_path.display().to_string(),
        },
        None,
    )?;
    eprintln!(
        "trained {} epochs, best dev strict {:.4} at epoch {}",
        outcome.log.len(),
        outcome.best_dev_strict,
        outcome.best_epoch
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    let kb_path = required(merge(args.kb, config.kb.as_ref()), "kb")?;
    require_exists(&args.model, "model")?;
    require_exists(&args.data, "data")?;
    require_exists(&kb_path, "kb")?;
    let policy = parse_policy(&args.policy)?;

    let loaded = load_checkpoint(&args.model)?;
    let kb = KnowledgeBase::load(&kb_path)?;
    let dataset = load_dataset(&args.data, &loaded.vocab)?;
    let report = evaluate(
        &loaded.model,
        &loaded.table,
        &dataset,
        &kb,
        &loaded.mapping,
        &loaded.vocab,
        policy,
    )?;
    eprintln!(
        "strict {:.4}  macro F1 {:.4}  micro F1 {:.4} over {} mentions",
        report.strict_accuracy, report.macro_f1, report.micro_f1, report.n_mentions
    );
    emit_json(&report, args.out.as_deref())
}

fn cmd_predict(args: PredictArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    let kb_path = required(merge(args.kb, config.kb.as_ref()), "kb")?;
    require_exists(&args.model, "model")?;
    require_exists(&args.data, "data")?;
    require_exists(&kb_path, "kb")?;
    let policy = parse_policy(&args.policy)?;

    let loaded = load_checkpoint(&args.model)?;
    let kb = KnowledgeBase::load(&kb_path)?;
    let dataset = load_dataset(&args.data, &loaded.vocab)?;
    let prepared = featurize_dataset(&dataset, &kb, &loaded.mapping, &loaded.vocab, &loaded.table)?;

    // Re-read raw records so unrelated fields pass through untouched.
    let raw_lines: Vec<serde_json::Value> = {
        let text = std::fs::read_to_string(&args.data).map_err(|e| {
            CliError::runtime(format!("cannot read {}: {}", args.data.display(), e))
        })?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::data(format!("bad record in {}: {}", args.data.display(), e)))?
    };

    let out_file = File::create(&args.out)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {}", args.out.display(), e)))?;
    let mut w = BufWriter::new(out_file);
    for (chunk_start, chunk) in prepared.chunks(256).enumerate().map(|(i, c)| (i * 256, c)) {
        let encoded: Vec<_> = chunk
            .iter()
            .map(|p| p.encode_clean(&loaded.vocab))
            .collect::<fetel_core::Result<_>>()?;
        let scores = loaded.model.forward_batch_eval(&loaded.table, &encoded)?;
        for (row, _) in chunk.iter().enumerate() {
            let row_scores = scores.row(row).to_vec();
            let predicted = decode_prediction(&row_scores, &loaded.vocab, policy);
            let mut record = raw_lines[chunk_start + row].clone();
            let obj = record
                .as_object_mut()
                .ok_or_else(|| CliError::data("mention record is not a JSON object".to_string()))?;
            obj.insert(
                "predicted_labels".to_string(),
                serde_json::json!(predicted.iter().map(|t| t.canonical()).collect::<Vec<_>>()),
            );
            let score_map: BTreeMap<String, f64> = loaded
                .vocab
                .types()
                .iter()
                .zip(&row_scores)
                .map(|(t, &s)| (t.canonical(), s))
                .collect();
            obj.insert("label_scores".to_string(), serde_json::json!(score_map));
            writeln!(w, "{}", record).map_err(|e| {
                CliError::runtime(format!("cannot write {}: {}", args.out.display(), e))
            })?;
        }
    }
    w.flush()
        .map_err(|e| CliError::runtime(format!("cannot write {}: {}", args.out.display(), e)))?;
    eprintln!(
        "wrote predictions for {} mentions to {}",
        prepared.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_link(args: LinkArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    let kb_path = required(merge(args.kb, config.kb.as_ref()), "kb")?;
    require_exists(&kb_path, "kb")?;
    require_exists(&args.data, "data")?;

    let kb = KnowledgeBase::load(&kb_path)?;
    // Labels may be absent; parse with an empty vocabulary-free path by
    // reading tokens/span/doc_id only.
    let dataset = load_dataset_lenient(&args.data)?;

    // Group by document in first-appearance order, then restore input order.
    let mut doc_order: Vec<String> = Vec::new();
    let mut by_doc: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, ex) in dataset.iter().enumerate() {
        if !by_doc.contains_key(&ex.doc_id) {
            doc_order.push(ex.doc_id.clone());
        }
        by_doc.entry(ex.doc_id.clone()).or_default().push(i);
    }
    let mut links = vec![None; dataset.len()];
    for doc_id in doc_order {
        let idxs = &by_doc[&doc_id];
        let mentions: Vec<_> = idxs.iter().map(|&i| dataset[i].clone()).collect();
        for (&i, link) in idxs.iter().zip(link_in_document(&kb, &mentions)) {
            links[i] = Some(link);
        }
    }

    let mut out: Box<dyn Write> = match &args.out {
        None => Box::new(std::io::stdout().lock()),
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| {
            CliError::runtime(format!("cannot write {}: {}", path.display(), e))
        })?)),
    };
    let n = links.len();
    for link in links {
        let link = link.expect("every mention linked");
        let line = serde_json::to_string(&link)
            .map_err(|e| CliError::runtime(format!("serialization failed: {}", e)))?;
        writeln!(out, "{}", line).map_err(|e| CliError::runtime(format!("write failed: {}", e)))?;
    }
    out.flush()
        .map_err(|e| CliError::runtime(format!("write failed: {}", e)))?;
    eprintln!("linked {} mentions", n);
    Ok(())
}

/// Loads mention JSONL without a type vocabulary: labels are ignored, only
/// doc_id / tokens / span are validated. Used by `link`, which needs no tag
/// set.
fn load_dataset_lenient(path: &Path) -> CliResult<Vec<fetel_core::corpus::MentionExample>> {
    let file = File::open(path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {}", path.display(), e)))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line =
            line.map_err(|e| CliError::runtime(format!("cannot read {}: {}", path.display(), e)))?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(serde::Deserialize)]
        struct Raw {
            doc_id: String,
            tokens: Vec<String>,
            span: [usize; 2],
        }
        let raw: Raw = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("record {}: {}", lineno + 1, e)))?;
        let example = fetel_core::corpus::MentionExample::new(
            raw.doc_id,
            raw.tokens,
            (raw.span[0], raw.span[1]),
            Default::default(),
            None,
        )
        .map_err(|e| CliError::data(format!("record {}: {}", lineno + 1, e)))?;
        out.push(example);
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::BuildKb(args) => cmd_build_kb(args),
        Command::MakeTrainingData(args) => cmd_make_training_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Link(args) => cmd_link(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
