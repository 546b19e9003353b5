use regex::RegexBuilder;
use serde::Serialize;

use super::client::llm_caption;
use super::detect::{detect_location_leak_masked, detect_missing_species};
use super::{
    metadata_template_caption, template_caption, Caption, CaptionClient, CaptionIssue,
    CaptionOrigin, IssueKind, LocationDetector, NameForm, PromptKind, PromptSet,
};
use crate::ingest::{Recording, Source};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineOutput {
    /// One caption per name form the record carries (common first).
    pub captions: Vec<Caption>,
    pub issues: Vec<CaptionIssue>,
    pub client_calls: usize,
}

/// Detect-and-recaption loop around a captioning client.
pub struct CaptionPipeline<'a> {
    pub client: Option<&'a dyn CaptionClient>,
    pub detector: &'a dyn LocationDetector,
    pub prompts: &'a PromptSet,
    pub max_retries: usize,
}

impl<'a> CaptionPipeline<'a> {
    pub fn new(
        client: Option<&'a dyn CaptionClient>,
        detector: &'a dyn LocationDetector,
        prompts: &'a PromptSet,
    ) -> Self {
        CaptionPipeline {
            client,
            detector,
            prompts,
            max_retries: 2,
        }
    }

    pub fn with_max_retries(mut self, max_retries: usize) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn run(&self, record: &Recording) -> PipelineOutput {
        caption_pipeline(record, self)
    }

    fn check(&self, caption: &Caption, record: &Recording) -> Option<CaptionIssue> {
        let names: Vec<&str> = [NameForm::Common, NameForm::Scientific]
            .into_iter()
            .filter_map(|f| f.name_in(record))
            .collect();
        detect_location_leak_masked(caption, self.detector, &names)
            .or_else(|| detect_missing_species(caption, record))
    }
}

fn available_forms(record: &Recording) -> Vec<NameForm> {
    [NameForm::Common, NameForm::Scientific]
        .into_iter()
        .filter(|f| f.name_in(record).is_some())
        .collect()
}

fn template_set(record: &Recording) -> Vec<Caption> {
    available_forms(record)
        .into_iter()
        .filter_map(|form| {
            if record.source == Source::Xenocanto {
                metadata_template_caption(record, form).ok()
            } else {
                template_caption(record, form).ok()
            }
        })
        .collect()
}

/// Swaps every occurrence of `from` (case-insensitive) for `to`.
fn swap_name(text: &str, from: &str, to: &str) -> String {
    let re = RegexBuilder::new(&regex::escape(from))
        .case_insensitive(true)
        .build()
        .expect("escaped name compiles");
    re.replace_all(text, regex::NoExpand(to)).into_owned()
}

/// Captions one record.
///
/// Records with notes go to the client (at most `1 + max_retries` calls);
/// each flagged output is re-prompted with the prompt for its issue kind.
/// The caption for the other name form is derived by swapping the species
/// name. When every attempt is flagged the record falls back to template
/// captions. Records without notes never reach the client.
pub fn caption_pipeline(record: &Recording, pipeline: &CaptionPipeline<'_>) -> PipelineOutput {
    let mut out = PipelineOutput::default();

    if record.source == Source::Audiocaps {
        match record.notes.as_deref().map(str::trim).filter(|n| !n.is_empty()) {
            Some(text) => out.captions.push(
                Caption::new(record.id.clone(), text, NameForm::Common, CaptionOrigin::Template)
                    .expect("non-empty"),
            ),
            None => out.issues.push(CaptionIssue {
                recording_id: record.id.clone(),
                kind: IssueKind::EmptyOutput,
                detail: "general-audio record without a caption".into(),
            }),
        }
        return out;
    }

    let has_notes = record.notes.as_deref().is_some_and(|n| !n.trim().is_empty());
    let client = match pipeline.client {
        Some(c) if has_notes && record.source != Source::Xenocanto => c,
        _ => {
            out.captions = template_set(record);
            return out;
        }
    };

    let forms = available_forms(record);
    let Some(&primary) = forms.first() else {
        return out;
    };

    let mut kind = PromptKind::for_source(record.source);
    let mut previous: Option<String> = None;
    let mut accepted: Option<Caption> = None;
    for attempt in 0..=pipeline.max_retries {
        let origin = if attempt == 0 { CaptionOrigin::Llm } else { CaptionOrigin::LlmRetry };
        out.client_calls += 1;
        let result = llm_caption(
            record,
            kind,
            primary,
            previous.as_deref(),
            client,
            pipeline.prompts,
            origin,
        );
        let issue = match result {
            Ok(caption) => match pipeline.check(&caption, record) {
                None => {
                    accepted = Some(caption);
                    break;
                }
                Some(issue) => {
                    previous = Some(caption.text);
                    issue
                }
            },
            Err(issue) => issue,
        };
        kind = PromptKind::for_issue(issue.kind, kind);
        out.issues.push(issue);
    }

    let Some(first) = accepted else {
        out.captions = template_set(record);
        return out;
    };

    let primary_name = primary.name_in(record).expect("available form");
    let mut captions = vec![first.clone()];
    for &form in &forms[1..] {
        let other = form.name_in(record).expect("available form");
        let derived = Caption::new(
            record.id.clone(),
            &swap_name(&first.text, primary_name, other),
            form,
            first.origin,
        )
        .expect("non-empty");
        match pipeline.check(&derived, record) {
            None => captions.push(derived),
            Some(issue) => {
                out.issues.push(issue);
                if let Ok(t) = template_caption(record, form) {
                    captions.push(t);
                }
            }
        }
    }
    out.captions = captions;
    out
}

/// Captions many records with at most `max_in_flight` client calls outstanding.
/// Output order follows input order.
pub fn caption_records(
    records: &[Recording],
    pipeline: &CaptionPipeline<'_>,
    max_in_flight: usize,
) -> Vec<PipelineOutput> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| records.par_iter().map(|r| pipeline.run(r)).collect())
}
