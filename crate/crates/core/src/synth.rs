//! Synthetic "species": band-limited tone mixtures with templated names.
//!
//! Each species owns a narrow band on the mel axis and sings a few jittered
//! partials inside it over white noise. Used for desk-scale end-to-end runs
//! and as fixture data.

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{hz_to_mel, mel_to_hz, AudioClip, MelConfig};
use crate::ingest::{Recording, Source};
use crate::scalar::Scalar;

const ADJECTIVES: [&str; 40] = [
    "amber", "azure", "bronze", "cobalt", "copper", "crimson", "dusky", "ebony", "emerald", "fawn",
    "gilded", "glossy", "hazel", "indigo", "ivory", "jade", "khaki", "lilac", "maroon", "mossy",
    "ochre", "olive", "pearl", "plum", "rusty", "sable", "saffron", "scarlet", "silver", "slate",
    "sooty", "tawny", "teal", "umber", "velvet", "violet", "wheaten", "willow", "zinc", "russet",
];
const NOUNS: [&str; 40] = [
    "warbler", "thrush", "finch", "tanager", "wren", "vireo", "sparrow", "pipit", "lark", "shrike",
    "bunting", "oriole", "swift", "plover", "sandpiper", "kestrel", "heron", "egret", "ibis", "rail",
    "cricket", "katydid", "cicada", "treefrog", "toad", "peeper", "dolphin", "porpoise", "seal", "orca",
    "gibbon", "marmoset", "bat", "shrew", "vole", "pika", "grouse", "quail", "nightjar", "cuckoo",
];
const GENERA: [&str; 40] = [
    "Aurivox", "Caerulea", "Aenornis", "Cobaltia", "Cuprilla", "Rubrisona", "Fuscella", "Ebenia",
    "Smaragda", "Cervina", "Aurata", "Nitidula", "Avellana", "Indigena", "Eburnea", "Jadeola", "Kakia",
    "Lilacina", "Maronia", "Muscosa", "Ochrella", "Olivella", "Margarita", "Prunella", "Rubigo",
    "Sabella", "Crocata", "Coccinea", "Argentia", "Schistia", "Fuliga", "Fulvella", "Tealia", "Umbrina",
    "Velutina", "Violacea", "Triticea", "Salicina", "Zincula", "Russula",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpecies {
    pub common_name: String,
    pub scientific_name: String,
    /// Band centre and half-width in Hz.
    pub center_hz: f64,
    pub half_width_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub species: usize,
    pub clips_per_species: usize,
    pub seconds: f64,
    pub sample_rate: u32,
    pub partials: usize,
    /// Peak amplitude of the uniform white noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            species: 32,
            clips_per_species: 40,
            seconds: 10.0,
            sample_rate: 48_000,
            partials: 3,
            noise: 0.02,
            seed: 0,
        }
    }
}

/// `n` species (at most 40) with bands evenly spaced on the mel scale of `mel`.
pub fn synthetic_species(n: usize, mel: &MelConfig) -> Vec<SyntheticSpecies> {
    assert!(n <= ADJECTIVES.len(), "at most {} synthetic species", ADJECTIVES.len());
    let (lo, hi) = (hz_to_mel(mel.f_min), hz_to_mel(mel.f_max));
    // Leave the lowest and highest few filters unused.
    let span = hi - lo;
    let (first, last) = (lo + 0.06 * span, lo + 0.94 * span);
    let step = if n > 1 { (last - first) / (n - 1) as f64 } else { 0.0 };
    (0..n)
        .map(|s| {
            let c = first + step * s as f64;
            let center_hz = mel_to_hz(c);
            let half_width_hz = (mel_to_hz(c + 0.2 * step.max(1.0)) - center_hz).max(1.0);
            SyntheticSpecies {
                common_name: format!("{} {}", capitalize(ADJECTIVES[s]), capitalize(NOUNS[s])),
                scientific_name: format!("{} {}", GENERA[s], NOUNS[s].replace(' ', "")),
                center_hz,
                half_width_hz,
            }
        })
        .collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// One recording per clip, ids `syn-SS-KKK`, each on its own date and time.
pub fn synthetic_records(species: &[SyntheticSpecies], clips_per_species: usize) -> Vec<Recording> {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    let mut out = Vec::with_capacity(species.len() * clips_per_species);
    for (s, sp) in species.iter().enumerate() {
        for k in 0..clips_per_species {
            let id = format!("syn-{s:02}-{k:03}");
            let mut r = Recording::new(&id, Source::Synthetic, format!("{id}.wav"));
            r.species_scientific = Some(sp.scientific_name.clone());
            r.species_common = Some(sp.common_name.clone());
            r.recorded_date = Some(start + Duration::days((s * clips_per_species + k) as i64));
            r.recorded_time = NaiveTime::from_hms_opt((k % 24) as u32, 0, 0);
            r.location = Some(format!("site {}", k % 7));
            out.push(r);
        }
    }
    out
}

/// Audio for clip `k` of `species[s]`, deterministic in `(params.seed, s, k)`.
pub fn render_clip<F: Scalar>(sp: &SyntheticSpecies, s: usize, k: usize, params: &SynthParams) -> AudioClip<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(
        params.seed ^ ((s as u64) << 32) ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    );
    let n = (params.seconds * params.sample_rate as f64).round() as usize;
    let rate = params.sample_rate as f64;
    let gain = rng.random_range(0.3..1.0) / params.partials.max(1) as f64;
    let mut acc = vec![0.0f64; n];
    for _ in 0..params.partials {
        let f = sp.center_hz + rng.random_range(-1.0..1.0) * sp.half_width_hz;
        let amp = gain * rng.random_range(0.5..1.0);
        // Phasor recurrence: (c, s) rotated by w each sample.
        let w = 2.0 * std::f64::consts::PI * f / rate;
        let (cw, sw) = (w.cos(), w.sin());
        let phase: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let (mut c, mut si) = (phase.cos(), phase.sin());
        for x in acc.iter_mut() {
            *x += amp * si;
            let nc = c * cw - si * sw;
            si = si * cw + c * sw;
            c = nc;
        }
    }
    let samples = acc
        .into_iter()
        .map(|v| F::of(v + params.noise * rng.random_range(-1.0..1.0)))
        .collect();
    let mut clip = AudioClip::new(samples, params.sample_rate);
    clip.source_recording_id = format!("syn-{s:02}-{k:03}");
    clip
}
