mod args;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mfie_core::metrics::{
    dee_f1_corpus, macro_average, re_f1_corpus, see_f1_corpus, AssignmentStrategy, ScoreReport,
};
use mfie_core::records::{
    read_jsonl_normalized, read_schema, record_relations, write_jsonl, EventItem, EventRecord,
    RelationRecord, SpoRecord,
};
use mfie_core::schema::{disintegrate, recompose, EvidenceRule, SchemaSet};
use mfie_core::text::{find_token_subsequence, is_cjk, tokenize};
use mfie_core::train::{
    self, load_dee_model, load_see_model, predict_dee_events, predict_see_events, random_delete,
    save_dee_model, save_see_model, synonyms_replace_masked, DeeCorpus, SeeCorpus, SynonymDict,
    TrainConfig,
};
use mfie_core::vote::{majority_threshold, vote, weighted_vote, PredictionSet};
use mfie_core::window::split;

use args::{Cli, Command, IoArgs, TrainOverrides};

/// A problem with how the tool was invoked (bad flag value, missing file).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 1 usage, 2 data, 3 internal.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<mfie_core::Error>() {
        Some(
            mfie_core::Error::Parse { .. }
            | mfie_core::Error::Data(_)
            | mfie_core::Error::Schema(_)
            | mfie_core::Error::InvalidArgument(_)
            | mfie_core::Error::Io(_),
        ) => 2,
        Some(_) => 3,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 3,
    }
}

/// Opens a file for reading; a missing or unreadable path is a usage error.
fn open_file(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))
}

fn require_file(path: &Path) -> Result<()> {
    open_file(path).map(|_| ())
}

fn open_input(path: &Option<PathBuf>) -> Result<Box<dyn BufRead>> {
    match path {
        Some(p) => Ok(Box::new(BufReader::new(open_file(p)?))),
        None => Ok(Box::new(BufReader::new(std::io::stdin()))),
    }
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        ))),
        None => Ok(Box::new(BufWriter::new(std::io::stdout()))),
    }
}

fn load_schema(path: &Path) -> Result<SchemaSet> {
    let reader = BufReader::new(open_file(path)?);
    Ok(read_schema(reader)?)
}

fn read_records<T>(path: &Path) -> Result<Vec<T>>
where
    T: serde::de::DeserializeOwned + mfie_core::records::Normalize,
{
    let reader = BufReader::new(open_file(path)?);
    read_jsonl_normalized(reader).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Disintegrate { schema, io } => cmd_disintegrate(&schema, &io),
        Command::Recompose { schema, strict, io } => cmd_recompose(&schema, strict, &io),
        Command::Vote { inputs, threshold, weights, output } => {
            cmd_vote(&inputs, threshold, weights.as_deref(), &output)
        }
        Command::SplitDoc { window, stride, io } => cmd_split_doc(window, stride, &io),
        Command::Augment { synonyms, replace_prob, delete_prob, seed, io } => {
            cmd_augment(synonyms.as_deref(), replace_prob, delete_prob, seed, &io)
        }
        Command::TrainSee { train, model_out, metrics_out, overrides } => {
            cmd_train_see(&train, &model_out, &metrics_out, &overrides)
        }
        Command::TrainDee { train, model_out, metrics_out, overrides } => {
            cmd_train_dee(&train, &model_out, &metrics_out, &overrides)
        }
        Command::PredictSee { model, io } => cmd_predict_see(&model, &io),
        Command::PredictDee { model, window, stride, io } => {
            cmd_predict_dee(&model, window, stride, &io)
        }
        Command::EvalRe { pred, gold, schema } => {
            let report = eval_re_report(&pred, &gold, &schema)?;
            print_report(&report)
        }
        Command::EvalSee { pred, gold } => {
            let report = eval_see_report(&pred, &gold)?;
            print_report(&report)
        }
        Command::EvalDee { pred, gold, greedy } => {
            let report = eval_dee_report(&pred, &gold, greedy)?;
            print_report(&report)
        }
        Command::ScoreAll { re_pred, re_gold, schema, see_pred, see_gold, dee_pred, dee_gold } => {
            let mut report = eval_re_report(&re_pred, &re_gold, &schema)?;
            report.see = eval_see_report(&see_pred, &see_gold)?.see;
            report.dee = eval_dee_report(&dee_pred, &dee_gold, false)?.dee;
            report.macro_f1 = Some(macro_average(&report)?);
            print_report(&report)
        }
    }
}

fn print_report(report: &ScoreReport) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    Ok(())
}

fn cmd_disintegrate(schema_path: &Path, io: &IoArgs) -> Result<()> {
    let schema = load_schema(schema_path)?;
    let records: Vec<RelationRecord> = read_jsonl_normalized(open_input(&io.input)?)?;
    let mut out = Vec::with_capacity(records.len());
    for record in &records {
        let mut spo_list = Vec::new();
        for relation in record_relations(record, &schema)? {
            for triple in disintegrate(&relation, &schema)? {
                spo_list.push(SpoRecord::from_relation(&triple));
            }
        }
        out.push(RelationRecord { text: record.text.clone(), spo_list });
    }
    write_jsonl(open_output(&io.output)?, &out)?;
    Ok(())
}

fn cmd_recompose(schema_path: &Path, strict: bool, io: &IoArgs) -> Result<()> {
    let schema = load_schema(schema_path)?;
    let rule = if strict { EvidenceRule::Both } else { EvidenceRule::Either };
    let records: Vec<RelationRecord> = read_jsonl_normalized(open_input(&io.input)?)?;
    let mut out = Vec::with_capacity(records.len());
    for record in &records {
        let triples = record_relations(record, &schema)?;
        let relations = recompose(&triples, &schema, rule)?;
        out.push(RelationRecord {
            text: record.text.clone(),
            spo_list: relations.iter().map(SpoRecord::from_relation).collect(),
        });
    }
    write_jsonl(open_output(&io.output)?, &out)?;
    Ok(())
}

fn cmd_vote(
    inputs: &[PathBuf],
    threshold: Option<f64>,
    weights: Option<&[f64]>,
    output: &Option<PathBuf>,
) -> Result<()> {
    let mut sets = Vec::with_capacity(inputs.len());
    for path in inputs {
        let reader = BufReader::new(open_file(path)?);
        let mut lines = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                lines.push(line);
            }
        }
        sets.push(PredictionSet::new(path.display().to_string(), lines));
    }
    let kept = match weights {
        Some(weights) => {
            let threshold = threshold
                .ok_or_else(|| usage("--threshold is required with --weights"))?;
            weighted_vote(&sets, weights, threshold)?
        }
        None => {
            let k = match threshold {
                Some(t) if t.fract() == 0.0 && t >= 1.0 => t as usize,
                Some(t) => return Err(usage(format!("--threshold {t} must be a positive integer"))),
                None => majority_threshold(sets.len()),
            };
            vote(&sets, k)?
        }
    };
    let mut out = open_output(output)?;
    for record in kept {
        writeln!(out, "{record}")?;
    }
    Ok(())
}

fn cmd_split_doc(window: usize, stride: usize, io: &IoArgs) -> Result<()> {
    let records: Vec<EventRecord> = read_jsonl_normalized(open_input(&io.input)?)?;
    let mut out = open_output(&io.output)?;
    for (idx, record) in records.iter().enumerate() {
        let doc_id = record.id.clone().unwrap_or_else(|| format!("doc-{idx}"));
        for segment in split(&doc_id, &record.full_text(), window, stride)? {
            let line = serde_json::json!({
                "doc_id": segment.doc_id,
                "start_offset": segment.start_offset,
                "text": segment.text,
            });
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Joins tokens back into text, spacing adjacent word tokens; CJK characters
/// reattach without separators.
fn join_tokens(tokens: &[String]) -> String {
    let mut text = String::new();
    let mut prev_word = false;
    for token in tokens {
        let word = !token.chars().next().map(is_cjk).unwrap_or(false);
        if prev_word && word && !text.is_empty() {
            text.push(' ');
        }
        text.push_str(token);
        prev_word = word;
    }
    text
}

fn cmd_augment(
    synonyms: Option<&Path>,
    replace_prob: f64,
    delete_prob: f64,
    seed: u64,
    io: &IoArgs,
) -> Result<()> {
    if !(0.0..=1.0).contains(&replace_prob) || !(0.0..=1.0).contains(&delete_prob) {
        return Err(usage("probabilities must lie in [0, 1]"));
    }
    let dict = match synonyms {
        Some(path) => SynonymDict::read(BufReader::new(open_file(path)?))?,
        None => SynonymDict::default(),
    };
    let records: Vec<EventRecord> = read_jsonl_normalized(open_input(&io.input)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(records.len());
    for record in &records {
        let tokens = tokenize(&record.text);
        let texts: Vec<String> = tokens.iter().map(|t| t.text.clone()).collect();
        // protect every token of every gold argument and trigger
        let mut entity_spans: Vec<(usize, usize)> = Vec::new();
        let mut protected = vec![false; texts.len()];
        for event in &record.event_list {
            let mut surfaces: Vec<&str> =
                event.arguments.iter().map(|a| a.argument.as_str()).collect();
            if let Some(trigger) = &event.trigger {
                surfaces.push(trigger);
            }
            for surface in surfaces {
                let needle: Vec<String> =
                    tokenize(surface).into_iter().map(|t| t.text).collect();
                if let Some((s, e)) = find_token_subsequence(&tokens, &needle) {
                    if protected[s..=e].iter().any(|p| *p) {
                        continue;
                    }
                    for p in protected.iter_mut().take(e + 1).skip(s) {
                        *p = true;
                    }
                    entity_spans.push((s, e));
                }
            }
        }
        entity_spans.sort();
        let replaced = synonyms_replace_masked(&texts, &protected, &dict, replace_prob, &mut rng);
        let (kept, _) = random_delete(&replaced, &entity_spans, delete_prob, &mut rng)?;
        out.push(EventRecord {
            id: record.id.clone(),
            title: record.title.clone(),
            text: join_tokens(&kept),
            event_list: record.event_list.clone(),
        });
    }
    write_jsonl(open_output(&io.output)?, &out)?;
    Ok(())
}

fn build_config(overrides: &TrainOverrides) -> Result<TrainConfig> {
    let mut config = match &overrides.config {
        Some(path) => {
            require_file(path)?;
            let raw = std::fs::read_to_string(path)?;
            toml::from_str(&raw)
                .map_err(|e| usage(format!("config {}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = overrides.dim {
        config.dim = v;
    }
    if let Some(v) = overrides.epochs {
        config.epochs = v;
    }
    if let Some(v) = overrides.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = overrides.seed {
        config.seed = v;
    }
    if let Some(v) = overrides.fgm_epsilon {
        config.fgm_epsilon = v;
    }
    if let Some(v) = overrides.trigger_weight {
        config.trigger_loss_weight = v;
    }
    if let Some(v) = overrides.arg_weight {
        config.arg_loss_weight = v;
    }
    if let Some(v) = overrides.fusion_warmup {
        config.fusion_warmup_epochs = v;
    }
    if let Some(v) = overrides.queries {
        config.query_count = v;
    }
    if let Some(v) = overrides.layers {
        config.decoder_layers = v;
    }
    if let Some(v) = overrides.heads {
        config.heads = v;
    }
    if let Some(v) = overrides.window {
        config.window = v;
    }
    if let Some(v) = overrides.stride {
        config.stride = v;
    }
    if config.fgm_epsilon < 0.0 {
        return Err(usage("--fgm-epsilon must be non-negative"));
    }
    Ok(config)
}

fn write_history(
    history: &[train::EpochMetrics],
    metrics_out: &Option<PathBuf>,
) -> Result<()> {
    let mut out = open_output(metrics_out)?;
    for entry in history {
        writeln!(out, "{}", serde_json::to_string(entry)?)?;
    }
    Ok(())
}

fn cmd_train_see(
    train_path: &Path,
    model_out: &Path,
    metrics_out: &Option<PathBuf>,
    overrides: &TrainOverrides,
) -> Result<()> {
    let config = build_config(overrides)?;
    let records: Vec<EventRecord> = read_records(train_path)?;
    let corpus = SeeCorpus::from_records(&records)?;
    let outcome = train::train_see(&corpus, &config)?;
    let mut file = BufWriter::new(File::create(model_out)?);
    save_see_model(&mut file, &outcome.model)?;
    write_history(&outcome.history, metrics_out)?;
    Ok(())
}

fn cmd_train_dee(
    train_path: &Path,
    model_out: &Path,
    metrics_out: &Option<PathBuf>,
    overrides: &TrainOverrides,
) -> Result<()> {
    let config = build_config(overrides)?;
    let records: Vec<EventRecord> = read_records(train_path)?;
    let corpus = DeeCorpus::from_records(&records, &config)?;
    let outcome = train::train_dee(&corpus, &config)?;
    let mut file = BufWriter::new(File::create(model_out)?);
    save_dee_model(&mut file, &outcome.model)?;
    write_history(&outcome.history, metrics_out)?;
    Ok(())
}

fn cmd_predict_see(model_path: &Path, io: &IoArgs) -> Result<()> {
    let model = load_see_model(&mut BufReader::new(open_file(model_path)?))?;
    let records: Vec<EventRecord> = read_jsonl_normalized(open_input(&io.input)?)?;
    let out: Vec<EventRecord> = records
        .iter()
        .map(|record| EventRecord {
            id: record.id.clone(),
            title: record.title.clone(),
            text: record.text.clone(),
            event_list: predict_see_events(&model, &record.text)
                .iter()
                .map(EventItem::from_event)
                .collect(),
        })
        .collect();
    write_jsonl(open_output(&io.output)?, &out)?;
    Ok(())
}

fn cmd_predict_dee(model_path: &Path, window: usize, stride: usize, io: &IoArgs) -> Result<()> {
    let model = load_dee_model(&mut BufReader::new(open_file(model_path)?))?;
    let records: Vec<EventRecord> = read_jsonl_normalized(open_input(&io.input)?)?;
    let out: Vec<EventRecord> = records
        .iter()
        .enumerate()
        .map(|(idx, record)| {
            let doc_id = record.id.clone().unwrap_or_else(|| format!("doc-{idx}"));
            EventRecord {
                id: record.id.clone(),
                title: record.title.clone(),
                text: record.text.clone(),
                event_list: predict_dee_events(&model, &doc_id, &record.full_text(), window, stride)
                    .iter()
                    .map(EventItem::from_event)
                    .collect(),
            }
        })
        .collect();
    write_jsonl(open_output(&io.output)?, &out)?;
    Ok(())
}

/// Pairs prediction and gold records: by id when every record on both sides
/// has one, otherwise by line order with matching counts.
fn align<'a, T, F>(pred: &'a [T], gold: &'a [T], id_of: F) -> Result<Vec<(&'a T, &'a T)>>
where
    F: Fn(&T) -> Option<&str>,
{
    let all_ids = pred.iter().chain(gold).all(|r| id_of(r).is_some());
    if all_ids {
        let mut by_id: std::collections::HashMap<&str, &T> = std::collections::HashMap::new();
        for p in pred {
            if by_id.insert(id_of(p).unwrap(), p).is_some() {
                bail!(mfie_core::Error::data(format!(
                    "duplicate prediction id {:?}",
                    id_of(p).unwrap()
                )));
            }
        }
        let mut pairs = Vec::with_capacity(gold.len());
        for g in gold {
            let id = id_of(g).unwrap();
            let p = by_id.get(id).ok_or_else(|| {
                mfie_core::Error::data(format!("no prediction for gold record {id:?}"))
            })?;
            pairs.push((*p, g));
        }
        Ok(pairs)
    } else {
        if pred.len() != gold.len() {
            bail!(mfie_core::Error::data(format!(
                "prediction and gold record counts differ ({} vs {}) and records are not all id'd",
                pred.len(),
                gold.len()
            )));
        }
        Ok(pred.iter().zip(gold).collect())
    }
}

fn eval_re_report(pred: &Path, gold: &Path, schema_path: &Path) -> Result<ScoreReport> {
    let schema = load_schema(schema_path)?;
    let pred_records: Vec<RelationRecord> = read_records(pred)?;
    let gold_records: Vec<RelationRecord> = read_records(gold)?;
    if pred_records.len() != gold_records.len() {
        bail!(mfie_core::Error::data(format!(
            "prediction and gold record counts differ ({} vs {})",
            pred_records.len(),
            gold_records.len()
        )));
    }
    let mut pairs = Vec::with_capacity(gold_records.len());
    for (p, g) in pred_records.iter().zip(&gold_records) {
        pairs.push((record_relations(p, &schema)?, record_relations(g, &schema)?));
    }
    let score = re_f1_corpus(pairs.iter().map(|(p, g)| (p.as_slice(), g.as_slice())));
    Ok(ScoreReport { re: Some(score), ..ScoreReport::default() })
}

fn eval_see_report(pred: &Path, gold: &Path) -> Result<ScoreReport> {
    let pred_records: Vec<EventRecord> = read_records(pred)?;
    let gold_records: Vec<EventRecord> = read_records(gold)?;
    let pairs = align(&pred_records, &gold_records, |r| r.id.as_deref())?;
    let events: Vec<(Vec<mfie_core::Event>, Vec<mfie_core::Event>)> =
        pairs.iter().map(|(p, g)| (p.events(), g.events())).collect();
    let score = see_f1_corpus(events.iter().map(|(p, g)| (p.as_slice(), g.as_slice())));
    Ok(ScoreReport { see: Some(score), ..ScoreReport::default() })
}

fn eval_dee_report(pred: &Path, gold: &Path, greedy: bool) -> Result<ScoreReport> {
    let pred_records: Vec<EventRecord> = read_records(pred)?;
    let gold_records: Vec<EventRecord> = read_records(gold)?;
    let pairs = align(&pred_records, &gold_records, |r| r.id.as_deref())?;
    let events: Vec<(Vec<mfie_core::Event>, Vec<mfie_core::Event>)> =
        pairs.iter().map(|(p, g)| (p.events(), g.events())).collect();
    let strategy = if greedy { AssignmentStrategy::Greedy } else { AssignmentStrategy::Optimal };
    let score = dee_f1_corpus(events.iter().map(|(p, g)| (p.as_slice(), g.as_slice())), strategy);
    Ok(ScoreReport { dee: Some(score), ..ScoreReport::default() })
}
