use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CaptionError, IssueKind, Result};
use crate::ingest::Source;

const DEFAULT_PROMPTS: &str = include_str!("../../assets/prompts.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    InaturalistNotes,
    WatkinsNotes,
    GenericNotes,
    FixLocationLeak,
    FixMissingSpecies,
    FixEmptyOutput,
}

impl PromptKind {
    pub const ALL: [PromptKind; 6] = [
        PromptKind::InaturalistNotes,
        PromptKind::WatkinsNotes,
        PromptKind::GenericNotes,
        PromptKind::FixLocationLeak,
        PromptKind::FixMissingSpecies,
        PromptKind::FixEmptyOutput,
    ];

    pub fn key(self) -> &'static str {
        match self {
            PromptKind::InaturalistNotes => "inaturalist_notes",
            PromptKind::WatkinsNotes => "watkins_notes",
            PromptKind::GenericNotes => "generic_notes",
            PromptKind::FixLocationLeak => "fix_location_leak",
            PromptKind::FixMissingSpecies => "fix_missing_species",
            PromptKind::FixEmptyOutput => "fix_empty_output",
        }
    }

    /// First-attempt prompt for a notes-bearing record.
    pub fn for_source(source: Source) -> PromptKind {
        match source {
            Source::Inaturalist => PromptKind::InaturalistNotes,
            Source::Watkins => PromptKind::WatkinsNotes,
            _ => PromptKind::GenericNotes,
        }
    }

    /// Re-prompt for a flagged caption. A client error retries the prompt that failed.
    pub fn for_issue(issue: IssueKind, failed: PromptKind) -> PromptKind {
        match issue {
            IssueKind::LocationLeak => PromptKind::FixLocationLeak,
            IssueKind::MissingSpecies => PromptKind::FixMissingSpecies,
            IssueKind::EmptyOutput => PromptKind::FixEmptyOutput,
            IssueKind::ClientError => failed,
        }
    }
}

/// Prompt templates keyed by [`PromptKind`]. Placeholders `{species}`,
/// `{notes}`, `{metadata}` and `{previous}` are substituted at render time.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: HashMap<PromptKind, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::from_toml(DEFAULT_PROMPTS).expect("bundled prompts parse")
    }
}

impl PromptSet {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: HashMap<String, String> =
            toml::from_str(text).map_err(|e| CaptionError::Prompts(e.to_string()))?;
        let mut templates = HashMap::new();
        for kind in PromptKind::ALL {
            let t = table
                .get(kind.key())
                .ok_or_else(|| CaptionError::Prompts(format!("missing prompt {}", kind.key())))?;
            templates.insert(kind, t.trim().to_string());
        }
        Ok(PromptSet { templates })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn render(
        &self,
        kind: PromptKind,
        species: &str,
        notes: &str,
        metadata: &str,
        previous: &str,
    ) -> String {
        self.templates[&kind]
            .replace("{species}", species)
            .replace("{notes}", notes)
            .replace("{metadata}", metadata)
            .replace("{previous}", previous)
    }
}
