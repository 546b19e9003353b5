use super::{Caption, CaptionError, CaptionOrigin, NameForm, Result};
use crate::ingest::Recording;

/// "an" before a vowel letter, "a" otherwise.
pub fn article_for(word: &str) -> &'static str {
    match word.trim_start().chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn name_or_err(record: &Recording, form: NameForm) -> Result<&str> {
    form.name_in(record).ok_or_else(|| CaptionError::MissingName {
        id: record.id.clone(),
        form,
    })
}

fn with_article(name: &str) -> String {
    format!("{} {}", article_for(name), name)
}

/// `The sound of a {name}` / `The sound of an {name}`.
pub fn template_caption(record: &Recording, form: NameForm) -> Result<Caption> {
    let name = name_or_err(record, form)?;
    Caption::new(
        record.id.clone(),
        &format!("The sound of {}", with_article(name)),
        form,
        CaptionOrigin::Template,
    )
}

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// Caption from structured metadata. Clause order is fixed:
///
/// ```text
/// The {call type | sound} of a/an {name}[, {behavior}][, {N} individuals][, with a/an {bg}[, a/an {bg}…] and a/an {bg} in the background]
/// ```
///
/// Absent fields drop their clause entirely, so a record with no optional
/// metadata yields exactly the [`template_caption`] text.
pub fn metadata_template_caption(record: &Recording, form: NameForm) -> Result<Caption> {
    let name = name_or_err(record, form)?;
    let call = record
        .call_type
        .as_deref()
        .and_then(|t| t.split(',').next())
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .unwrap_or_else(|| "sound".to_string());

    let mut text = format!("The {call} of {}", with_article(name));

    if let Some(behavior) = record
        .behavior
        .as_deref()
        .map(|b| b.trim().to_lowercase())
        .filter(|b| !b.is_empty())
    {
        text.push_str(", ");
        text.push_str(&behavior);
    }

    if let Some(n) = record.num_animals.filter(|&n| n >= 2) {
        let count = NUMBER_WORDS
            .get(n as usize)
            .map(|w| w.to_string())
            .unwrap_or_else(|| n.to_string());
        text.push_str(&format!(", {count} individuals"));
    }

    let background: Vec<String> = record
        .background_species
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(with_article)
        .collect();
    if let Some((last, rest)) = background.split_last() {
        text.push_str(", with ");
        if !rest.is_empty() {
            text.push_str(&rest.join(", "));
            text.push_str(" and ");
        }
        text.push_str(last);
        text.push_str(" in the background");
    }

    Caption::new(record.id.clone(), &text, form, CaptionOrigin::MetadataTemplate)
}
