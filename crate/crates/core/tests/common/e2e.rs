//! Desk-scale run: synthetic species -> mel features -> captions -> split ->
//! contrastive training -> index -> retrieval and zero-shot metrics.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rayon::prelude::*;
use sonotext_core::caption::{caption_records, CaptionPipeline, NameForm, PromptSet, RuleBasedLocationDetector};
use sonotext_core::dsp::{prepare_clips, MelConfig, MelExtractor};
use sonotext_core::encoder::{ContrastiveModel, EncoderConfig};
use sonotext_core::eval::{evaluate_retrieval, zero_shot_accuracy, LabelPromptSet};
use sonotext_core::index::{EntryMeta, IndexEntry, VectorIndex};
use sonotext_core::ingest::{build_species_split, SplitParams};
use sonotext_core::synth::{render_clip, synthetic_records, synthetic_species, SynthParams};
use sonotext_core::trainer::{train, EpochLog, TrainConfig, TrainState, TrainingCorpus};

pub struct E2eResult {
    pub zero_shot_accuracy: f64,
    pub map_at_10: f64,
    pub precision_at_1: f64,
    pub train_clips: usize,
    pub test_clips: usize,
    pub log: Vec<EpochLog>,
    pub seconds: f64,
}

pub fn run(seed: u64, train_config: TrainConfig) -> E2eResult {
    let started = Instant::now();
    let params = SynthParams { seed, ..Default::default() };
    let mel_config = MelConfig::default();
    let species = synthetic_species(params.species, &mel_config);
    let records = synthetic_records(&species, params.clips_per_species);

    let extractor = MelExtractor::<f32>::new(mel_config).unwrap();
    let features: Vec<(String, String, Vec<f32>)> = records
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, rec)| {
            let (s, k) = (i / params.clips_per_species, i % params.clips_per_species);
            let raw = render_clip::<f32>(&species[s], s, k, &params);
            prepare_clips(raw, params.clips_per_species)
                .into_iter()
                .map(|clip| {
                    let mel = extractor.extract(&clip).unwrap();
                    assert_eq!(mel.frames(), 1001);
                    (clip.clip_id(), rec.id.clone(), mel.time_mean().to_vec())
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let detector = RuleBasedLocationDetector::default();
    let prompts = PromptSet::default();
    let pipeline = CaptionPipeline::new(None, &detector, &prompts);
    let captions: Vec<_> = caption_records(&records, &pipeline, 4)
        .into_iter()
        .flat_map(|o| o.captions)
        .collect();

    let split = build_species_split(
        &records,
        SplitParams { min_count: 40, test_fraction: 0.25, seed },
    )
    .unwrap();
    let is_test: HashSet<&str> = split.test_ids.iter().map(String::as_str).collect();
    let (train_feats, test_feats): (Vec<_>, Vec<_>) =
        features.into_iter().partition(|(_, rec, _)| !is_test.contains(rec.as_str()));

    let (corpus, missing) = TrainingCorpus::assemble(train_feats, &captions);
    assert!(missing.is_empty());
    let model = ContrastiveModel::<f32>::new(EncoderConfig::default(), seed).unwrap();
    let outcome = train(TrainState::new(model, &train_config), &corpus, &train_config, None).unwrap();
    let model = outcome.state.model;

    let common: HashMap<&str, &str> = captions
        .iter()
        .filter(|c| c.name_form == NameForm::Common)
        .map(|c| (c.recording_id.as_str(), c.text.as_str()))
        .collect();
    let species_of: HashMap<&str, &str> = records
        .iter()
        .map(|r| (r.id.as_str(), r.species_common.as_deref().unwrap()))
        .collect();

    let mut index = VectorIndex::new(model.embed_dim());
    let mut labelled = Vec::new();
    for (clip_id, rec, mean) in &test_feats {
        let emb = model.embed_audio_mean(ndarray::ArrayView1::from(&mean[..])).unwrap();
        labelled.push((emb.clone(), species_of[rec.as_str()].to_string()));
        index
            .add(IndexEntry {
                meta: EntryMeta {
                    clip_id: clip_id.clone(),
                    caption_common: common[rec.as_str()].to_string(),
                    species_common: Some(species_of[rec.as_str()].to_string()),
                    species_scientific: None,
                    audio_path: format!("{rec}.wav"),
                    chunk_index: 0,
                },
                embedding: emb,
            })
            .unwrap();
    }
    let retrieval = evaluate_retrieval(&index, &model, 10).unwrap();
    let labels: Vec<String> = species.iter().map(|s| s.common_name.clone()).collect();
    let prompt_set = LabelPromptSet::embed(&labels, &model, None).unwrap();
    let zs = zero_shot_accuracy(&labelled, &prompt_set).unwrap();

    E2eResult {
        zero_shot_accuracy: zs.value,
        map_at_10: retrieval.reports[0].value,
        precision_at_1: retrieval.reports[1].value,
        train_clips: corpus.len(),
        test_clips: test_feats.len(),
        log: outcome.log,
        seconds: started.elapsed().as_secs_f64(),
    }
}
