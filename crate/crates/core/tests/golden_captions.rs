use std::path::Path;

use serde::Deserialize;
use sonotext_core::caption::{
    caption_pipeline, metadata_template_caption, CaptionOrigin, CaptionPipeline, EchoClient, NameForm, PromptSet,
    RuleBasedLocationDetector,
};
use sonotext_core::ingest::Recording;

#[derive(Deserialize)]
struct GoldenCase {
    record: Recording,
    common: Option<String>,
    scientific: Option<String>,
}

fn cases() -> Vec<GoldenCase> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/metadata_captions.jsonl");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn metadata_captions_match_golden_file() {
    let cases = cases();
    assert_eq!(cases.len(), 8);
    for case in &cases {
        for (form, expected) in [(NameForm::Common, &case.common), (NameForm::Scientific, &case.scientific)] {
            match expected {
                Some(text) => {
                    let got = metadata_template_caption(&case.record, form).unwrap();
                    assert_eq!(&got.text, text, "{} {form}", case.record.id);
                    assert_eq!(got.origin, CaptionOrigin::MetadataTemplate);
                }
                None => assert!(metadata_template_caption(&case.record, form).is_err()),
            }
        }
    }
}

#[test]
fn metadata_records_skip_the_client_even_with_notes() {
    let detector = RuleBasedLocationDetector::default();
    let prompts = PromptSet::default();
    let client = EchoClient("never used".into());
    let pipeline = CaptionPipeline::new(Some(&client), &detector, &prompts);
    for case in cases() {
        let mut record = case.record.clone();
        record.notes = Some("heard at dawn".into());
        let out = caption_pipeline(&record, &pipeline);
        assert_eq!(out.client_calls, 0);
        let texts: Vec<_> = out.captions.iter().map(|c| c.text.clone()).collect();
        let expected: Vec<_> = [case.common, case.scientific].into_iter().flatten().collect();
        assert_eq!(texts, expected);
    }
}
