use regex::{Regex, RegexBuilder};

use super::{Caption, CaptionIssue, IssueKind};
use crate::ingest::{Recording, Source};

const DEFAULT_GAZETTEER: &str = include_str!("../../assets/gazetteer.txt");

/// Finds mentions of specific places in caption text.
pub trait LocationDetector: Send + Sync {
    /// The offending span, if any.
    fn find_location(&self, text: &str) -> Option<String>;
}

/// Gazetteer lookup plus coordinate and "<Proper Name> Park/Lake/..." patterns.
pub struct RuleBasedLocationDetector {
    gazetteer: Option<Regex>,
    patterns: Vec<Regex>,
}

impl Default for RuleBasedLocationDetector {
    fn default() -> Self {
        Self::with_gazetteer(
            DEFAULT_GAZETTEER
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }
}

impl RuleBasedLocationDetector {
    pub fn with_gazetteer<'a>(places: impl IntoIterator<Item = &'a str>) -> Self {
        let alternatives: Vec<String> = places.into_iter().map(regex::escape).collect();
        let gazetteer = (!alternatives.is_empty()).then(|| {
            RegexBuilder::new(&format!(r"\b(?:{})\b", alternatives.join("|")))
                .case_insensitive(true)
                .build()
                .expect("escaped gazetteer compiles")
        });
        let patterns = [
            // 37.77N, 122.41W / 37°46'N 122°25'W style
            r"\b\d{1,3}(?:\.\d+)?\s*°?(?:\s*\d{1,2}')?\s*[NSns]\b\s*,?\s*\d{1,3}(?:\.\d+)?\s*°?(?:\s*\d{1,2}')?\s*[EWew]\b",
            // bare decimal degree pairs: 37.7749, -122.4194
            r"-?\b\d{1,3}\.\d{3,}\s*,\s*-?\d{1,3}\.\d{3,}\b",
            // "in Foo Bar Park", "near Lake Baz"
            r"\b(?:in|at|near|from)\s+(?:the\s+)?(?:[A-Z][a-z]+\s+){1,3}(?:Park|Reserve|Preserve|County|Forest|Refuge|Island|Bay|Beach|Creek|River|Valley|Canyon|Mountains?|Lake|Sanctuary)\b",
            r"\b(?:Lake|Mount|Mt\.|Cape|Isla|Rio)\s+[A-Z][a-z]+",
        ]
        .iter()
        .map(|p| Regex::new(p).expect("location pattern compiles"))
        .collect();
        RuleBasedLocationDetector { gazetteer, patterns }
    }
}

impl LocationDetector for RuleBasedLocationDetector {
    fn find_location(&self, text: &str) -> Option<String> {
        self.gazetteer
            .iter()
            .chain(&self.patterns)
            .find_map(|re| re.find(text).map(|m| m.as_str().to_string()))
    }
}

pub fn detect_location_leak(caption: &Caption, detector: &dyn LocationDetector) -> Option<CaptionIssue> {
    detect_location_leak_masked(caption, detector, &[])
}

/// Like [`detect_location_leak`] but ignores occurrences of `protected`
/// strings (species names such as "California Quail").
pub fn detect_location_leak_masked(
    caption: &Caption,
    detector: &dyn LocationDetector,
    protected: &[&str],
) -> Option<CaptionIssue> {
    let mut text = caption.text.clone();
    for name in protected.iter().filter(|n| !n.trim().is_empty()) {
        let re = RegexBuilder::new(&regex::escape(name.trim()))
            .case_insensitive(true)
            .build()
            .expect("escaped name compiles");
        text = re.replace_all(&text, "species").into_owned();
    }
    detector.find_location(&text).map(|span| CaptionIssue {
        recording_id: caption.recording_id.clone(),
        kind: IssueKind::LocationLeak,
        detail: format!("location mention {span:?}"),
    })
}

/// Flags a caption whose text lacks the record's species name for the caption's
/// name form (case-insensitive). Free-form general-audio captions are exempt.
pub fn detect_missing_species(caption: &Caption, record: &Recording) -> Option<CaptionIssue> {
    if record.source == Source::Audiocaps {
        return None;
    }
    let issue = |detail: String| CaptionIssue {
        recording_id: caption.recording_id.clone(),
        kind: IssueKind::MissingSpecies,
        detail,
    };
    match caption.name_form.name_in(record) {
        None => Some(issue(format!("record has no {} name", caption.name_form))),
        Some(name) if !caption.text.to_lowercase().contains(&name.to_lowercase()) => {
            Some(issue(format!("caption does not contain {name:?}")))
        }
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::{CaptionOrigin, NameForm};

    fn cap(text: &str) -> Caption {
        Caption::new("r", text, NameForm::Common, CaptionOrigin::Llm).unwrap()
    }

    #[test]
    fn location_examples() {
        let d = RuleBasedLocationDetector::default();
        assert!(detect_location_leak(&cap("A Song Sparrow singing in Golden Gate Park"), &d).is_some());
        assert!(detect_location_leak(&cap("A Song Sparrow singing at dawn"), &d).is_none());
        assert!(detect_location_leak(&cap("Recorded at 37.77N, 122.41W, a Song Sparrow"), &d).is_some());
        assert!(detect_location_leak(&cap("A Song Sparrow at 37.7749, -122.4194"), &d).is_some());
        assert!(detect_location_leak(&cap("A Song Sparrow calls near Miller Creek"), &d).is_some());
    }

    #[test]
    fn species_names_are_masked() {
        let d = RuleBasedLocationDetector::default();
        let c = cap("The sound of a California Quail");
        assert!(detect_location_leak(&c, &d).is_some());
        assert!(detect_location_leak_masked(&c, &d, &["California Quail"]).is_none());
    }

    #[test]
    fn missing_species_examples() {
        let mut r = Recording::new("r", Source::Inaturalist, "a.wav");
        r.species_common = Some("Wood Thrush".into());
        r.species_scientific = Some("Hylocichla mustelina".into());
        assert!(detect_missing_species(&cap("A bird sings twice"), &r).is_some());
        assert!(detect_missing_species(&cap("The sound of a wood thrush"), &r).is_none());
        let sci = Caption::new("r", "Hylocichla mustelina calling", NameForm::Scientific, CaptionOrigin::Llm).unwrap();
        assert!(detect_missing_species(&sci, &r).is_none());
    }
}
