use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;
use sonotext_core::caption::{
    caption_records, read_captions, write_captions, Caption, CaptionClient, CaptionPipeline, HttpCaptionClient,
    HttpClientConfig, NameForm, PromptSet, RuleBasedLocationDetector,
};
use sonotext_core::dsp::{load_wav, prepare_clips, write_mel_cache, MelConfig, MelExtractor};
use sonotext_core::encoder::{load_embeddings, save_embeddings, ContrastiveModel, Embedding, EmbeddingSet};
use sonotext_core::eval::{
    evaluate_retrieval, oracle_precision_at_1, write_query_diagnostics, zero_shot_accuracy, EvalReport, LabelPromptSet,
};
use sonotext_core::index::{EntryMeta, IndexEntry, VectorIndex};
use sonotext_core::ingest::{
    build_species_split, map_species_names, parse_manifest, write_issue_report, write_normalized, read_normalized,
    Recording, Source, SpeciesNameTable, SplitParams,
};
use sonotext_core::trainer::{save_checkpoint, load_checkpoint, train, TrainError, TrainState, TrainingCorpus};

use crate::artifacts::{
    default_checkpoint_path, load_model, read_jsonl, read_split, write_json, write_jsonl, FeatureRow, RunConfig,
    Snapshot, Subset,
};
use crate::config::ServiceConfig;
use crate::http::{router, AppState};

#[derive(Debug, Parser)]
#[command(name = "sonotext", version, about = "Caption-paired bioacoustic search: build, train, index, query, serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize archive manifests into one record file and draw the test split.
    Ingest(IngestArgs),
    /// Caption records from metadata or through a captioning model.
    Caption(CaptionArgs),
    /// Cut 10-second clips and extract time-averaged mel features.
    Features(FeaturesArgs),
    /// Train the contrastive model.
    Train(TrainArgs),
    /// Embed clips with a trained checkpoint.
    Embed(EmbedArgs),
    /// Build a searchable index from clip embeddings.
    Index(IndexArgs),
    /// Free-text search; prints rank, score, clipId and caption as TSV.
    Search(SearchArgs),
    /// Zero-shot label scores for one clip.
    Classify(ClassifyArgs),
    /// Retrieval, zero-shot and oracle metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// `SOURCE=PATH`, e.g. `xenocanto=xc.jsonl`; repeatable.
    #[arg(long = "manifest", required = true, value_parser = parse_manifest_arg)]
    pub manifests: Vec<(Source, PathBuf)>,
    /// `scientific_name,common_name` CSV used to fill in missing name forms.
    #[arg(long)]
    pub names: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Row-level problems; defaults to `<out>.issues.jsonl`.
    #[arg(long)]
    pub issues: Option<PathBuf>,
    /// Where to write the train/test split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 70)]
    pub min_count: usize,
    #[arg(long, default_value_t = 0.10)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_manifest_arg(s: &str) -> Result<(Source, PathBuf), String> {
    let (source, path) = s.split_once('=').ok_or("expected SOURCE=PATH")?;
    Ok((source.parse().map_err(|e| format!("{e}"))?, PathBuf::from(path)))
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Flagged outputs and client failures; defaults to `<out>.issues.jsonl`.
    #[arg(long)]
    pub issues: Option<PathBuf>,
    /// Captioning model endpoint. Without it every record gets template captions.
    #[arg(long, env = "SONOTEXT_CAPTION_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, env = "SONOTEXT_CAPTION_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub max_retries: usize,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// TOML prompt set overriding the built-in prompts.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Place names to flag, one per line, replacing the built-in gazetteer.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Directory that record audio paths are relative to.
    #[arg(long)]
    pub audio_root: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write each clip's full mel spectrogram here as `<clipId>.mel`.
    #[arg(long)]
    pub mel_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub mel_bins: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub captions: PathBuf,
    /// Train only on the split's training records.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Checkpoints, `loss.csv` and the final `model.ckpt` go here.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML with optional `[encoder]` and `[train]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub subset: Subset,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub captions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Published next to the index as `<out>.ckpt` for query embedding.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Defaults to `<index>.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, conflicts_with = "wav", required_unless_present = "wav")]
    pub clip_id: Option<String>,
    #[arg(long)]
    pub wav: Option<PathBuf>,
    /// Comma-separated or repeated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub labels: Vec<String>,
    /// Prompt template containing `{label}`.
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Every entry's caption as a query over the index; mAP@N and precision@1.
    Retrieval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Restrict to the split's test recordings.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Per-query CSV.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Species common names as label prompts against every entry.
    ZeroShot {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        template: Option<String>,
    },
    /// Precision@1 of a model that only knows the species.
    Oracle {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML service config; `SONOTEXT_*` environment variables override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub corpus_root: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Caption(a) => caption(a),
        Command::Features(a) => features(a),
        Command::Train(a) => train_cmd(a),
        Command::Embed(a) => embed(a),
        Command::Index(a) => index(a),
        Command::Search(a) => search(a),
        Command::Classify(a) => classify(a),
        Command::Eval(c) => eval(c),
        Command::Serve(a) => serve(a),
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (source, path) in &a.manifests {
        let parsed = parse_manifest(path, *source).with_context(|| format!("{source:?} manifest {}", path.display()))?;
        records.extend(parsed.records);
        issues.extend(parsed.issues);
    }
    let mut table = match &a.names {
        Some(p) => SpeciesNameTable::from_csv(p)?,
        None => SpeciesNameTable::new(),
    };
    table.extend_from_records(&records);
    let (records, mapping) = map_species_names(records, &table);
    write_normalized(&records, &a.out)?;
    write_issue_report(&issues, &a.issues.clone().unwrap_or_else(|| sidecar(&a.out, ".issues.jsonl")))?;

    let mut summary = json!({ "records": records.len(), "issues": issues.len(), "nameMapping": mapping });
    if let Some(split_path) = &a.split {
        let params = SplitParams { min_count: a.min_count, test_fraction: a.test_fraction, seed: a.seed };
        let split = build_species_split(&records, params)?;
        write_json(&split, split_path)?;
        summary["train"] = json!(split.train_ids.len());
        summary["test"] = json!(split.test_ids.len());
    }
    print_json(&summary)
}

fn caption(a: CaptionArgs) -> Result<()> {
    let records = read_normalized(&a.records)?;
    let prompts = match &a.prompts {
        Some(p) => PromptSet::from_file(p)?,
        None => PromptSet::default(),
    };
    let detector = match &a.gazetteer {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RuleBasedLocationDetector::with_gazetteer(
                text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')),
            )
        }
        None => RuleBasedLocationDetector::default(),
    };
    let client = a
        .endpoint
        .clone()
        .map(|endpoint| HttpCaptionClient::new(HttpClientConfig { endpoint, token: a.token.clone(), timeout_secs: 30 }))
        .transpose()?;
    let pipeline = CaptionPipeline::new(client.as_ref().map(|c| c as &dyn CaptionClient), &detector, &prompts)
        .with_max_retries(a.max_retries);
    let outputs = caption_records(&records, &pipeline, a.max_in_flight);
    let calls: usize = outputs.iter().map(|o| o.client_calls).sum();
    let uncaptioned = outputs.iter().filter(|o| o.captions.is_empty()).count();
    let (captions, issues): (Vec<_>, Vec<_>) = outputs.into_iter().map(|o| (o.captions, o.issues)).unzip();
    let captions: Vec<Caption> = captions.into_iter().flatten().collect();
    let issues: Vec<_> = issues.into_iter().flatten().collect();
    write_captions(&captions, &a.out)?;
    write_jsonl(&issues, &a.issues.clone().unwrap_or_else(|| sidecar(&a.out, ".issues.jsonl")))?;
    print_json(&json!({
        "records": records.len(),
        "captions": captions.len(),
        "uncaptionedRecords": uncaptioned,
        "issues": issues.len(),
        "clientCalls": calls,
    }))
}

fn features(a: FeaturesArgs) -> Result<()> {
    let records = read_normalized(&a.records)?;
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in &records {
        if let Some(key) = r.species_key() {
            *counts.entry(key).or_default() += 1;
        }
    }
    let extractor = MelExtractor::<f32>::new(MelConfig { mel_bins: a.mel_bins, ..MelConfig::default() })?;
    if let Some(dir) = &a.mel_dir {
        std::fs::create_dir_all(dir)?;
    }
    let results: Vec<Result<Vec<FeatureRow>>> = records
        .par_iter()
        .map(|r| {
            let count = r.species_key().map_or(0, |k| counts[&k]);
            let raw = load_wav::<f32>(&a.audio_root.join(&r.audio_path))
                .with_context(|| format!("{}: {}", r.id, r.audio_path))?
                .with_source(&r.id);
            prepare_clips(raw, count)
                .into_iter()
                .map(|clip| {
                    let mel = extractor.extract(&clip)?;
                    if let Some(dir) = &a.mel_dir {
                        write_mel_cache(&mel, &dir.join(format!("{}.mel", clip.clip_id().replace(['/', ':'], "_"))))?;
                    }
                    Ok(FeatureRow {
                        clip_id: clip.clip_id(),
                        recording_id: r.id.clone(),
                        chunk_index: clip.chunk_index,
                        mel_mean: mel.time_mean().to_vec(),
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for res in results {
        match res {
            Ok(r) => rows.extend(r),
            Err(e) => {
                log::warn!("{e:#}");
                failures.push(format!("{e:#}"));
            }
        }
    }
    write_jsonl(&rows, &a.out)?;
    print_json(&json!({ "recordings": records.len(), "clips": rows.len(), "failed": failures }))
}

fn keep_rows(rows: Vec<FeatureRow>, ids: Option<&std::collections::HashSet<String>>) -> Vec<FeatureRow> {
    match ids {
        Some(ids) => rows.into_iter().filter(|r| ids.contains(&r.recording_id)).collect(),
        None => rows,
    }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    cfg.train.validate()?;

    let split = a.split.as_deref().map(read_split).transpose()?;
    let ids = if split.is_some() { Subset::Train.filter(split.as_ref())? } else { None };
    let rows = keep_rows(read_jsonl::<FeatureRow>(&a.features)?, ids.as_ref());
    let captions = read_captions(&a.captions)?;
    let (corpus, missing) =
        TrainingCorpus::assemble(rows.into_iter().map(|r| (r.clip_id, r.recording_id, r.mel_mean)), &captions);
    if corpus.is_empty() {
        bail!("no training clips with captions");
    }
    std::fs::create_dir_all(&a.out)?;
    let state = match &a.resume {
        Some(p) => TrainState::from_checkpoint(load_checkpoint(p)?, &cfg.train),
        None => TrainState::new(ContrastiveModel::new(cfg.encoder, cfg.train.seed)?, &cfg.train),
    };
    let outcome = match train(state, &corpus, &cfg.train, Some(&a.out)) {
        Ok(o) => o,
        Err(TrainError::Divergence { epoch, last_good }) => {
            let path = a.out.join("last-good.ckpt");
            save_checkpoint(&last_good.checkpoint(), &path)?;
            bail!("training diverged at epoch {epoch}; last good state saved to {}", path.display());
        }
        Err(e) => return Err(e.into()),
    };
    let model_path = a.out.join("model.ckpt");
    save_checkpoint(&outcome.state.checkpoint(), &model_path)?;
    print_json(&json!({
        "clips": corpus.len(),
        "clipsWithoutCaptions": missing.len(),
        "epochs": outcome.log.len(),
        "firstLoss": outcome.log.first().map(|l| l.train_loss),
        "lastLoss": outcome.log.last().map(|l| l.train_loss),
        "tau": outcome.log.last().map(|l| l.tau),
        "checkpoint": model_path,
    }))
}

fn embed(a: EmbedArgs) -> Result<()> {
    let model = load_model(&a.checkpoint)?;
    let split = a.split.as_deref().map(read_split).transpose()?;
    let ids = a.subset.filter(split.as_ref())?;
    let rows = keep_rows(read_jsonl::<FeatureRow>(&a.features)?, ids.as_ref());
    let embedded: Vec<(String, Result<Embedding<f32>, _>)> = rows
        .par_iter()
        .map(|r| (r.clip_id.clone(), model.embed_audio_mean(ndarray::ArrayView1::from(&r.mel_mean[..]))))
        .collect();
    let mut set = EmbeddingSet::new(model.embed_dim());
    let mut skipped = Vec::new();
    for (id, e) in embedded {
        match e {
            Ok(e) => set.push(id, e)?,
            Err(err) => skipped.push(format!("{id}: {err}")),
        }
    }
    save_embeddings(&set, &a.out)?;
    print_json(&json!({ "embedded": set.entries.len(), "skipped": skipped }))
}

/// The caption an index entry shows and that retrieval queries with.
fn common_captions(captions: &[Caption]) -> HashMap<&str, &str> {
    let mut out: HashMap<&str, (bool, &str)> = HashMap::new();
    for c in captions {
        let is_common = c.name_form == NameForm::Common;
        let slot = out.entry(c.recording_id.as_str()).or_insert((is_common, c.text.as_str()));
        if is_common && !slot.0 {
            *slot = (true, c.text.as_str());
        }
    }
    out.into_iter().map(|(id, (_, text))| (id, text)).collect()
}

fn index(a: IndexArgs) -> Result<()> {
    let set = load_embeddings(&a.embeddings)?;
    let rows: HashMap<String, FeatureRow> =
        read_jsonl::<FeatureRow>(&a.features)?.into_iter().map(|r| (r.clip_id.clone(), r)).collect();
    let records: HashMap<String, Recording> =
        read_normalized(&a.records)?.into_iter().map(|r| (r.id.clone(), r)).collect();
    let captions = read_captions(&a.captions)?;
    let caption_of = common_captions(&captions);

    let mut index = VectorIndex::new(set.dim);
    let mut skipped = Vec::new();
    for (clip_id, embedding) in set.entries {
        let Some(row) = rows.get(&clip_id) else {
            skipped.push(format!("{clip_id}: no feature row"));
            continue;
        };
        let (Some(rec), Some(caption)) = (records.get(&row.recording_id), caption_of.get(row.recording_id.as_str()))
        else {
            skipped.push(format!("{clip_id}: no record or caption"));
            continue;
        };
        index.add(IndexEntry {
            meta: EntryMeta {
                clip_id,
                caption_common: caption.to_string(),
                species_common: rec.species_common.clone(),
                species_scientific: rec.species_scientific.clone(),
                audio_path: rec.audio_path.clone(),
                chunk_index: row.chunk_index,
            },
            embedding,
        })?;
    }
    index.save(&a.out)?;
    if let Some(ckpt) = &a.checkpoint {
        let model = load_model(ckpt)?;
        if model.embed_dim() != index.dim() {
            bail!("checkpoint embeds to {} dims but the embeddings have {}", model.embed_dim(), index.dim());
        }
        std::fs::copy(ckpt, default_checkpoint_path(&a.out))?;
    }
    print_json(&json!({ "entries": index.len(), "skipped": skipped }))
}

/// One TSV line per hit. Scores use the shortest round-trip form so they can
/// be compared exactly with the HTTP response.
pub fn format_hits(hits: &[crate::artifacts::Hit]) -> String {
    hits.iter()
        .map(|h| format!("{}\t{}\t{}\t{}\n", h.rank, h.score, h.clip_id, h.caption))
        .collect()
}

fn search(a: SearchArgs) -> Result<()> {
    if a.query.trim().is_empty() {
        bail!("--query must not be empty");
    }
    if a.k == 0 {
        bail!("--k must be >= 1");
    }
    let snapshot = Snapshot::load(&a.index, a.checkpoint.as_deref())?;
    print!("{}", format_hits(&snapshot.search(&a.query, a.k)?));
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let snapshot = Snapshot::load(&a.index, a.checkpoint.as_deref())?;
    let audio = match (&a.clip_id, &a.wav) {
        (Some(id), _) => {
            let (_, v) = snapshot.index.get(id).ok_or_else(|| anyhow!("unknown clipId {id:?}"))?;
            Embedding { values: v.to_vec(), normalized: true }
        }
        (None, Some(path)) => snapshot.embed_wav(&std::fs::read(path)?)?,
        (None, None) => bail!("give --clip-id or --wav"),
    };
    let labels: Vec<String> = a.labels.iter().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
    if labels.is_empty() {
        bail!("--labels must not be empty");
    }
    let prompts = LabelPromptSet::embed(&labels, &snapshot.model, a.template.as_deref())?;
    let scores = sonotext_core::eval::zero_shot_detection_scores(&audio, &prompts)?;
    let best = sonotext_core::eval::zero_shot_classify(&audio, &prompts)?;
    let scores: Vec<_> = labels.iter().zip(&scores).map(|(l, s)| json!({ "label": l, "score": s })).collect();
    print_json(&json!({ "scores": scores, "argmaxLabel": labels[best] }))
}

/// The index restricted to clips of the split's test recordings.
fn test_subset(index: VectorIndex, test: Option<&Path>) -> Result<VectorIndex> {
    let Some(path) = test else { return Ok(index) };
    let test_ids: BTreeSet<String> = read_split(path)?.test_ids;
    let mut out = VectorIndex::new(index.dim());
    for (meta, values) in index.entries() {
        let recording = meta.clip_id.rsplit_once(':').map_or(meta.clip_id.as_str(), |(r, _)| r);
        if test_ids.contains(recording) {
            out.add(IndexEntry {
                meta: meta.clone(),
                embedding: Embedding { values: values.to_vec(), normalized: true },
            })?;
        }
    }
    if out.is_empty() {
        bail!("no index entries belong to the test split");
    }
    Ok(out)
}

fn eval(c: EvalCommand) -> Result<()> {
    let reports: Vec<EvalReport> = match c {
        EvalCommand::Retrieval { index, checkpoint, test, n, diagnostics } => {
            let snap = Snapshot::load(&index, checkpoint.as_deref())?;
            let idx = test_subset(snap.index, test.as_deref())?;
            let result = evaluate_retrieval(&idx, &snap.model, n)?;
            if let Some(p) = diagnostics {
                write_query_diagnostics(&result.diagnostics, &p)?;
            }
            result.reports
        }
        EvalCommand::ZeroShot { index, checkpoint, test, template } => {
            let snap = Snapshot::load(&index, checkpoint.as_deref())?;
            let idx = test_subset(snap.index, test.as_deref())?;
            let items: Vec<(Embedding<f32>, String)> = idx
                .entries()
                .filter_map(|(m, v)| {
                    m.species_common
                        .clone()
                        .map(|s| (Embedding { values: v.to_vec(), normalized: true }, s))
                })
                .collect();
            let labels: Vec<String> =
                items.iter().map(|(_, s)| s.clone()).collect::<BTreeSet<_>>().into_iter().collect();
            if labels.is_empty() {
                bail!("no entries carry a species common name");
            }
            let prompts = LabelPromptSet::embed(&labels, &snap.model, template.as_deref())?;
            vec![zero_shot_accuracy(&items, &prompts)?]
        }
        EvalCommand::Oracle { index, test } => {
            let idx = test_subset(VectorIndex::load(&index)?, test.as_deref())?;
            let clips: Vec<(String, String)> = idx
                .entries()
                .map(|(m, _)| {
                    let species = m.species_scientific.clone().or(m.species_common.clone()).unwrap_or_default();
                    (species, m.caption_common.clone())
                })
                .collect();
            vec![EvalReport {
                metric_name: "oraclePrecision@1".into(),
                value: oracle_precision_at_1(&clips)?,
                n: None,
                query_count: clips.len(),
                skipped_classes: 0,
            }]
        }
    };
    print_json(&serde_json::to_value(&reports)?)
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => ServiceConfig::from_file(p)?,
        None => ServiceConfig::default(),
    };
    config.apply_env(std::env::vars())?;
    if let Some(v) = a.index {
        config.index_path = v;
    }
    if let Some(v) = a.corpus_root {
        config.corpus_root = v;
    }
    if let Some(v) = a.listen {
        config.listen = v;
    }
    if let Some(v) = a.port {
        config.port = v;
    }
    config.validate()?;
    let snapshot = match Snapshot::load(&config.index_path, Some(&config.checkpoint())) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("starting without an index: {e:#}");
            None
        }
    };
    let addr = config.socket_addr()?;
    let state = Arc::new(AppState::new(config, snapshot));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use sonotext_core::caption::CaptionOrigin;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn manifest_arg_parses() {
        let (src, path) = parse_manifest_arg("xenocanto=data/xc.jsonl").unwrap();
        assert_eq!(src, Source::Xenocanto);
        assert_eq!(path, PathBuf::from("data/xc.jsonl"));
        assert!(parse_manifest_arg("nowhere").is_err());
        assert!(parse_manifest_arg("bogus=x").is_err());
    }

    #[test]
    fn common_caption_preferred() {
        let caps = vec![
            Caption::new("r1", "The sound of a Turdus", NameForm::Scientific, CaptionOrigin::Template).unwrap(),
            Caption::new("r1", "The sound of a Thrush", NameForm::Common, CaptionOrigin::Template).unwrap(),
            Caption::new("r2", "The sound of a Pica", NameForm::Scientific, CaptionOrigin::Template).unwrap(),
        ];
        let m = common_captions(&caps);
        assert_eq!(m["r1"], "The sound of a Thrush");
        assert_eq!(m["r2"], "The sound of a Pica");
    }

    #[test]
    fn tsv_layout() {
        let hits = vec![crate::artifacts::Hit {
            rank: 1,
            score: 0.5,
            clip_id: "a:0".into(),
            caption: "The sound of a Wren".into(),
            species_common: None,
        }];
        assert_eq!(format_hits(&hits), "1\t0.5\ta:0\tThe sound of a Wren\n");
    }
}
