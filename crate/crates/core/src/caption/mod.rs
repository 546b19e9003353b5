//! Audio captions from archive metadata, free-text notes and a captioning model.

mod client;
mod detect;
mod pipeline;
mod prompts;
mod template;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{
    llm_caption, CaptionClient, CaptionRequest, ClientError, EchoClient, FnClient, HttpCaptionClient,
    HttpClientConfig, ScriptedClient,
};
pub use detect::{
    detect_location_leak, detect_location_leak_masked, detect_missing_species, LocationDetector,
    RuleBasedLocationDetector,
};
pub use pipeline::{caption_pipeline, caption_records, CaptionPipeline, PipelineOutput};
pub use prompts::{PromptKind, PromptSet};
pub use template::{article_for, metadata_template_caption, template_caption};

use crate::ingest::Recording;

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error("recording {id} has no {form} species name")]
    MissingName { id: String, form: NameForm },
    #[error("caption for {id} is empty after cleaning")]
    EmptyText { id: String },
    #[error("invalid prompt set: {0}")]
    Prompts(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CaptionError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NameForm {
    Common,
    Scientific,
}

impl NameForm {
    pub fn name_in(self, record: &Recording) -> Option<&str> {
        match self {
            NameForm::Common => record.species_common.as_deref(),
            NameForm::Scientific => record.species_scientific.as_deref(),
        }
        .map(str::trim)
        .filter(|n| !n.is_empty())
    }
}

impl std::fmt::Display for NameForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NameForm::Common => "common",
            NameForm::Scientific => "scientific",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionOrigin {
    Template,
    MetadataTemplate,
    Llm,
    LlmRetry,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Caption {
    pub recording_id: String,
    pub text: String,
    pub name_form: NameForm,
    pub origin: CaptionOrigin,
}

impl Caption {
    /// Builds a caption, collapsing whitespace (including newlines) and
    /// trimming. Fails if nothing is left.
    pub fn new(
        recording_id: impl Into<String>,
        text: &str,
        name_form: NameForm,
        origin: CaptionOrigin,
    ) -> Result<Self> {
        let recording_id = recording_id.into();
        let text = clean_text(text);
        if text.is_empty() {
            return Err(CaptionError::EmptyText { id: recording_id });
        }
        Ok(Caption {
            recording_id,
            text,
            name_form,
            origin,
        })
    }
}

/// Single-line, whitespace-normalized text with wrapping quotes removed.
pub(crate) fn clean_text(text: &str) -> String {
    let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let stripped = joined
        .trim_matches(|c| matches!(c, '"' | '\u{201c}' | '\u{201d}'))
        .trim();
    stripped.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    LocationLeak,
    MissingSpecies,
    EmptyOutput,
    ClientError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CaptionIssue {
    pub recording_id: String,
    pub kind: IssueKind,
    pub detail: String,
}

pub fn write_captions(captions: &[Caption], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in captions {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_captions(path: &Path) -> Result<Vec<Caption>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
