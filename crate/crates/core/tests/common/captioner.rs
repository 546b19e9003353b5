//! Random records against random scripted captioning clients.
//!
//! Every script entry is tagged with whether it should be accepted, so the
//! expected call count is computed from the script alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonotext_core::caption::{
    detect_location_leak_masked, detect_missing_species, CaptionPipeline, ClientError, LocationDetector,
    NameForm, PromptSet, RuleBasedLocationDetector, ScriptedClient,
};
use sonotext_core::ingest::{Recording, Source};

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 6] = ["", "n", "r", "l", "x", "th"];

fn word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
    }
    w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
    let mut c = w.chars();
    let first = c.next().unwrap().to_ascii_uppercase();
    std::iter::once(first).chain(c).collect()
}

/// A two-word name that the location detector does not flag on its own.
fn species_name(rng: &mut ChaCha8Rng, detector: &dyn LocationDetector, lower_second: bool) -> String {
    loop {
        let second = word(rng);
        let second = if lower_second { second.to_lowercase() } else { second };
        let name = format!("{} {second}", word(rng));
        if detector.find_location(&name).is_none() && detector.find_location(&format!("in {name}")).is_none() {
            return name;
        }
    }
}

const LEAKS: [&str; 6] = [
    " near Lake Tahoe",
    " at 37.77N, 122.41W",
    " recorded 44.4280, -110.5885",
    " in Golden Gate Park",
    " heard in Yellowstone",
    " from Mount Rainier",
];
const VERBS: [&str; 5] = ["sings", "calls", "chatters", "whistles", "trills"];
const SCENES: [&str; 5] = [
    "over distant insects",
    "at dawn beside running water",
    "while wind moves through leaves",
    "in repeated short phrases",
    "with another bird answering",
];

pub struct CaseOutcome {
    pub expected_calls: usize,
    pub client_calls: usize,
    pub pipeline_calls: usize,
    /// Human-readable problems with the produced captions; empty when clean.
    pub violations: Vec<String>,
}

pub fn run_case(seed: u64) -> CaseOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let detector = RuleBasedLocationDetector::default();
    let prompts = PromptSet::default();

    let sources = [Source::Inaturalist, Source::Xenocanto, Source::Watkins, Source::Asa, Source::Synthetic];
    let source = sources[rng.random_range(0..sources.len())];
    let mut record = Recording::new(format!("r{seed}"), source, "a.wav");
    let (has_common, has_scientific) = match rng.random_range(0..10) {
        0 => (false, false),
        1..=3 => (true, false),
        4..=5 => (false, true),
        _ => (true, true),
    };
    if has_common {
        record.species_common = Some(species_name(&mut rng, &detector, false));
    }
    if has_scientific {
        record.species_scientific = Some(species_name(&mut rng, &detector, true));
    }
    if rng.random_bool(0.8) {
        record.notes = Some(format!("observer notes {}", rng.random_range(0..1000)));
    }
    if source == Source::Xenocanto && rng.random_bool(0.5) {
        record.call_type = Some(["song", "call", "alarm call", "flight call"][rng.random_range(0..4)].into());
        record.num_animals = Some(rng.random_range(1..6));
        record.background_species = (0..rng.random_range(0..3))
            .map(|_| species_name(&mut rng, &detector, false))
            .collect();
    }
    let max_retries = rng.random_range(0..4);

    let primary = record
        .species_common
        .clone()
        .or_else(|| record.species_scientific.clone());
    let mut script = Vec::new();
    let mut first_good = None;
    for i in 0..rng.random_range(0..6) {
        let good_text = primary.as_ref().map(|name| {
            format!(
                "A {name} {} {}",
                VERBS[rng.random_range(0..VERBS.len())],
                SCENES[rng.random_range(0..SCENES.len())]
            )
        });
        let entry = match (rng.random_range(0..6), good_text) {
            (0 | 1, Some(text)) => {
                first_good.get_or_insert(i);
                Ok(text)
            }
            (2, Some(text)) => Ok(format!("{text}{}", LEAKS[rng.random_range(0..LEAKS.len())])),
            (3, _) => Ok("A bird sings at dawn".to_string()),
            (4, _) => Ok("   ".to_string()),
            (_, _) => Err(if rng.random_bool(0.5) {
                ClientError::Timeout
            } else {
                ClientError::Transport("connection reset".into())
            }),
        };
        script.push(entry);
    }

    let reaches_client = record.notes.is_some() && source != Source::Xenocanto && primary.is_some();
    let limit = 1 + max_retries;
    let expected_calls = match (reaches_client, first_good) {
        (false, _) => 0,
        (true, Some(i)) if i < limit => i + 1,
        (true, _) => limit,
    };

    let client = ScriptedClient::new(script);
    let pipeline = CaptionPipeline::new(Some(&client), &detector, &prompts).with_max_retries(max_retries);
    let out = pipeline.run(&record);

    let names: Vec<&str> = [record.species_common.as_deref(), record.species_scientific.as_deref()]
        .into_iter()
        .flatten()
        .collect();
    let mut violations = Vec::new();
    let expected_forms: Vec<NameForm> = [NameForm::Common, NameForm::Scientific]
        .into_iter()
        .filter(|f| f.name_in(&record).is_some())
        .collect();
    let forms: Vec<NameForm> = out.captions.iter().map(|c| c.name_form).collect();
    if forms != expected_forms {
        violations.push(format!("forms {forms:?}, expected {expected_forms:?}"));
    }
    for caption in &out.captions {
        if let Some(issue) = detect_location_leak_masked(caption, &detector, &names) {
            violations.push(format!("{:?}: {}", caption.text, issue.detail));
        }
        if let Some(issue) = detect_missing_species(caption, &record) {
            violations.push(format!("{:?}: {}", caption.text, issue.detail));
        }
    }

    CaseOutcome {
        expected_calls,
        client_calls: client.calls(),
        pipeline_calls: out.client_calls,
        violations,
    }
}

impl CaseOutcome {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
            && self.client_calls == self.expected_calls
            && self.pipeline_calls == self.expected_calls
    }
}
