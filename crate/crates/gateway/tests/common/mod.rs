#![allow(dead_code)]

//! A tiny synthetic corpus pushed through the real CLI, shared per test binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use sonotext_core::dsp::{encode_wav, MelConfig};
use sonotext_core::synth::{render_clip, synthetic_records, synthetic_species, SynthParams};

pub const SPECIES: usize = 4;
pub const CLIPS_PER_SPECIES: usize = 6;

pub struct Fixture {
    /// Directory the index's audio paths are relative to.
    pub corpus_root: PathBuf,
    pub index: PathBuf,
    pub split: PathBuf,
    pub species: Vec<String>,
    _dir: tempfile::TempDir,
}

pub fn sonotext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sonotext"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sonotext(args);
    assert!(
        out.status.success(),
        "sonotext {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(build)
}

fn build() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let params = SynthParams { species: SPECIES, clips_per_species: CLIPS_PER_SPECIES, seed: 3, ..Default::default() };
    let species = synthetic_species(SPECIES, &MelConfig::default());
    let records = synthetic_records(&species, CLIPS_PER_SPECIES);

    let audio = root.join("audio");
    std::fs::create_dir_all(&audio).unwrap();
    let mut manifest = String::new();
    for (i, rec) in records.iter().enumerate() {
        let clip = render_clip::<f32>(&species[i / CLIPS_PER_SPECIES], i / CLIPS_PER_SPECIES, i % CLIPS_PER_SPECIES, &params);
        std::fs::write(audio.join(&rec.audio_path), encode_wav(&clip)).unwrap();
        manifest.push_str(&serde_json::to_string(rec).unwrap());
        manifest.push('\n');
    }
    let manifest_path = root.join("synthetic.jsonl");
    std::fs::write(&manifest_path, manifest).unwrap();
    std::fs::write(
        root.join("run.toml"),
        "[encoder]\nembedDim = 32\nmelBins = 64\naudioFeatureDim = 32\ntextFeatureDim = 32\nhiddenDim = 32\nvocabHashBuckets = 512\n\n[train]\nepochs = 40\nbatchSize = 8\nlearningRate = 0.003\nseed = 3\n",
    )
    .unwrap();

    let p = |name: &str| root.join(name);
    ok(&[
        "ingest",
        "--manifest",
        &format!("synthetic={}", s(&manifest_path)),
        "--out",
        s(&p("records.jsonl")),
        "--split",
        s(&p("split.json")),
        "--min-count",
        "6",
        "--test-fraction",
        "0.34",
        "--seed",
        "1",
    ]);
    ok(&["caption", "--records", s(&p("records.jsonl")), "--out", s(&p("captions.jsonl"))]);
    ok(&[
        "features",
        "--records",
        s(&p("records.jsonl")),
        "--audio-root",
        s(&audio),
        "--out",
        s(&p("features.jsonl")),
    ]);
    ok(&[
        "train",
        "--features",
        s(&p("features.jsonl")),
        "--captions",
        s(&p("captions.jsonl")),
        "--split",
        s(&p("split.json")),
        "--config",
        s(&p("run.toml")),
        "--out",
        s(&p("model")),
    ]);
    ok(&[
        "embed",
        "--checkpoint",
        s(&p("model/model.ckpt")),
        "--features",
        s(&p("features.jsonl")),
        "--out",
        s(&p("clips.embd")),
    ]);
    ok(&[
        "index",
        "--embeddings",
        s(&p("clips.embd")),
        "--features",
        s(&p("features.jsonl")),
        "--records",
        s(&p("records.jsonl")),
        "--captions",
        s(&p("captions.jsonl")),
        "--checkpoint",
        s(&p("model/model.ckpt")),
        "--out",
        s(&p("index.embd")),
    ]);

    Fixture {
        index: p("index.embd"),
        split: p("split.json"),
        species: species.iter().map(|sp| sp.common_name.clone()).collect(),
        corpus_root: audio,
        _dir: dir,
    }
}
