//! Archive manifests, species-name mapping and the held-out species split.
//!
//! Every source archive ships its own manifest layout. [`parse_manifest`]
//! turns any of them into [`Recording`]s; rows that cannot be turned into a
//! valid record are listed in the returned issue report rather than dropped.

mod manifest;
mod names;
mod split;

use std::fmt;
use std::path::{Component, Path};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{
    parse_manifest, parse_manifests, read_issue_report, read_normalized, write_issue_report,
    write_normalized, ParsedManifest, RowIssue, Severity,
};
pub use names::{map_species_names, NameMappingReport, SpeciesNameTable};
pub use split::{build_species_split, CorpusSplit, SplitParams};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: String, reason: String },
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("corpus has no records eligible for splitting")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Inaturalist,
    Xenocanto,
    Watkins,
    Asa,
    Audiocaps,
    Synthetic,
}

impl Source {
    pub const ALL: [Source; 6] = [
        Source::Inaturalist,
        Source::Xenocanto,
        Source::Watkins,
        Source::Asa,
        Source::Audiocaps,
        Source::Synthetic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Inaturalist => "inaturalist",
            Source::Xenocanto => "xenocanto",
            Source::Watkins => "watkins",
            Source::Asa => "asa",
            Source::Audiocaps => "audiocaps",
            Source::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        Source::ALL
            .into_iter()
            .find(|src| src.as_str() == key)
            .ok_or_else(|| IngestError::UnknownSource(s.to_string()))
    }
}

/// One normalized archive recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Recording {
    pub id: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species_common: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species_scientific: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub background_species: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_animals: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_time: Option<NaiveTime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    pub audio_path: String,
    #[serde(default)]
    pub license: String,
}

impl Recording {
    /// A record with only the required fields set.
    pub fn new(id: impl Into<String>, source: Source, audio_path: impl Into<String>) -> Self {
        Recording {
            id: id.into(),
            source,
            species_common: None,
            species_scientific: None,
            notes: None,
            call_type: None,
            behavior: None,
            background_species: Vec::new(),
            num_animals: None,
            recorded_date: None,
            recorded_time: None,
            location: None,
            audio_path: audio_path.into(),
            license: String::new(),
        }
    }

    /// Checks the per-record invariants. Uniqueness of ids is a corpus-level
    /// property and is checked by the manifest parser.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.source != Source::Audiocaps
            && self.species_common.is_none()
            && self.species_scientific.is_none()
        {
            return Err("missing both speciesCommon and speciesScientific".into());
        }
        if self.num_animals == Some(0) {
            return Err("numAnimals must be positive".into());
        }
        if !is_relative_under_root(&self.audio_path) {
            return Err(format!(
                "audioPath {:?} does not resolve under the corpus root",
                self.audio_path
            ));
        }
        Ok(())
    }

    /// Grouping key for per-species statistics: the scientific name when known.
    pub fn species_key(&self) -> Option<String> {
        self.species_scientific
            .as_deref()
            .or(self.species_common.as_deref())
            .map(|s| s.trim().to_lowercase())
    }
}

fn is_relative_under_root(path: &str) -> bool {
    if path.trim().is_empty() {
        return false;
    }
    Path::new(path)
        .components()
        .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_parsing() {
        assert_eq!("xeno-canto".parse::<Source>().unwrap(), Source::Xenocanto);
        assert_eq!("iNaturalist".parse::<Source>().unwrap(), Source::Inaturalist);
        assert!(matches!(
            "macaulay".parse::<Source>(),
            Err(IngestError::UnknownSource(_))
        ));
    }

    #[test]
    fn audio_path_must_stay_under_root() {
        let mut rec = Recording::new("a", Source::Asa, "../x.wav");
        rec.species_scientific = Some("Bufo bufo".into());
        assert!(rec.validate().is_err());
        rec.audio_path = "/abs/x.wav".into();
        assert!(rec.validate().is_err());
        rec.audio_path = "sub/x.wav".into();
        assert!(rec.validate().is_ok());
    }

    #[test]
    fn audiocaps_needs_no_species() {
        let rec = Recording::new("ac1", Source::Audiocaps, "a.wav");
        assert!(rec.validate().is_ok());
        let rec = Recording::new("in1", Source::Inaturalist, "a.wav");
        assert!(rec.validate().is_err());
    }
}
