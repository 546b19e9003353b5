use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{IngestError, Recording, Result, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    /// The row was excluded from the output.
    Error,
    /// The row was kept but an optional field was discarded.
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RowIssue {
    /// 1-based line in the manifest file (the CSV header is line 1).
    pub line: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedManifest {
    pub records: Vec<Recording>,
    pub issues: Vec<RowIssue>,
}

impl ParsedManifest {
    pub fn errors(&self) -> impl Iterator<Item = &RowIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }
}

/// Parses one source manifest into normalized records.
///
/// CSV sources (`inaturalist`, `watkins`, `asa`, `audiocaps`) must carry the
/// documented header row; JSONL sources (`xenocanto`, `synthetic`) hold one
/// object per line. Missing required columns or ragged CSV rows make the whole
/// file malformed; a row that parses but violates a [`Recording`] invariant is
/// listed in [`ParsedManifest::issues`] and excluded.
pub fn parse_manifest(path: &Path, source: Source) -> Result<ParsedManifest> {
    let mut parsed = match source {
        Source::Inaturalist | Source::Watkins | Source::Asa | Source::Audiocaps => {
            parse_csv(path, source)?
        }
        Source::Xenocanto | Source::Synthetic => parse_jsonl(path, source)?,
    };
    dedupe_ids(&mut parsed);
    Ok(parsed)
}

/// Parses several manifests in parallel; results keep input order.
pub fn parse_manifests(inputs: &[(PathBuf, Source)]) -> Vec<Result<ParsedManifest>> {
    inputs
        .par_iter()
        .map(|(path, source)| parse_manifest(path, *source))
        .collect()
}

fn dedupe_ids(parsed: &mut ParsedManifest) {
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(parsed.records.len());
    for rec in parsed.records.drain(..) {
        if seen.insert(rec.id.clone()) {
            kept.push(rec);
        } else {
            parsed.issues.push(RowIssue {
                line: 0,
                record_id: Some(rec.id.clone()),
                severity: Severity::Error,
                message: "duplicate id".into(),
            });
        }
    }
    parsed.records = kept;
}

struct CsvSchema {
    required: &'static [&'static str],
}

fn csv_schema(source: Source) -> CsvSchema {
    let required: &'static [&'static str] = match source {
        Source::Inaturalist => &[
            "id",
            "scientific_name",
            "common_name",
            "description",
            "observed_on",
            "time_observed",
            "place_guess",
            "sound_file",
            "license",
        ],
        Source::Watkins => &[
            "id",
            "species_scientific",
            "species_common",
            "signal_type",
            "num_animals",
            "behavior",
            "notes",
            "date",
            "location",
            "file",
            "license",
        ],
        Source::Asa => &["id", "scientific_name", "date", "location", "file", "license"],
        Source::Audiocaps => &["audiocap_id", "caption", "file", "license"],
        Source::Xenocanto | Source::Synthetic => &[],
    };
    CsvSchema { required }
}

/// Accessor over one row that records soft failures as warnings.
struct Row<'a> {
    fields: HashMap<&'a str, &'a str>,
    line: u64,
    warnings: Vec<String>,
}

impl<'a> Row<'a> {
    fn text(&self, key: &str) -> Option<String> {
        self.fields.get(key).and_then(|v| non_empty(v))
    }

    fn date(&mut self, key: &str) -> Option<NaiveDate> {
        let raw = self.text(key)?;
        match parse_date(&raw) {
            Some(d) => Some(d),
            None => {
                self.warnings.push(format!("unparseable {key} {raw:?}"));
                None
            }
        }
    }

    fn time(&mut self, key: &str) -> Option<NaiveTime> {
        let raw = self.text(key)?;
        match parse_time(&raw) {
            Some(t) => Some(t),
            None => {
                self.warnings.push(format!("unparseable {key} {raw:?}"));
                None
            }
        }
    }

    fn count(&mut self, key: &str) -> Option<u32> {
        let raw = self.text(key)?;
        match raw.parse::<u32>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                self.warnings.push(format!("unparseable {key} {raw:?}"));
                None
            }
        }
    }
}

fn non_empty(v: &str) -> Option<String> {
    let t = v.trim();
    if t.is_empty() || t == "?" {
        None
    } else {
        Some(t.to_string())
    }
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(raw, "%Y/%m/%d"))
        .ok()
}

fn parse_time(raw: &str) -> Option<NaiveTime> {
    NaiveTime::parse_from_str(raw, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(raw, "%H:%M"))
        .ok()
}

fn parse_csv(path: &Path, source: Source) -> Result<ParsedManifest> {
    let malformed = |reason: String| IngestError::MalformedManifest {
        path: path.display().to_string(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(ParsedManifest::default());
    }
    let schema = csv_schema(source);
    let missing: Vec<_> = schema
        .required
        .iter()
        .filter(|col| !headers.iter().any(|h| h.trim() == **col))
        .collect();
    if !missing.is_empty() {
        return Err(malformed(format!("missing columns {missing:?}")));
    }

    let mut out = ParsedManifest::default();
    for (idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| malformed(e.to_string()))?;
        let fields: HashMap<&str, &str> = headers.iter().map(str::trim).zip(row.iter()).collect();
        let mut row = Row {
            fields,
            line: idx as u64 + 2,
            warnings: Vec::new(),
        };
        let rec = csv_row_to_record(&mut row, source);
        push_record(&mut out, rec, row.line, row.warnings);
    }
    Ok(out)
}

fn csv_row_to_record(row: &mut Row<'_>, source: Source) -> Recording {
    let id_key = if source == Source::Audiocaps { "audiocap_id" } else { "id" };
    let path_key = match source {
        Source::Inaturalist => "sound_file",
        _ => "file",
    };
    let mut rec = Recording::new(
        row.text(id_key).unwrap_or_default(),
        source,
        row.text(path_key).unwrap_or_default(),
    );
    rec.license = row.text("license").unwrap_or_default();
    match source {
        Source::Inaturalist => {
            rec.species_scientific = row.text("scientific_name");
            rec.species_common = row.text("common_name");
            rec.notes = row.text("description");
            rec.recorded_date = row.date("observed_on");
            rec.recorded_time = row.time("time_observed");
            rec.location = row.text("place_guess");
        }
        Source::Watkins => {
            rec.species_scientific = row.text("species_scientific");
            rec.species_common = row.text("species_common");
            rec.call_type = row.text("signal_type");
            rec.num_animals = row.count("num_animals");
            rec.behavior = row.text("behavior");
            rec.notes = row.text("notes");
            rec.recorded_date = row.date("date");
            rec.location = row.text("location");
        }
        Source::Asa => {
            rec.species_scientific = row.text("scientific_name");
            rec.recorded_date = row.date("date");
            rec.location = row.text("location");
        }
        Source::Audiocaps => {
            // Human-written captions are carried through as notes.
            rec.notes = row.text("caption");
        }
        Source::Xenocanto | Source::Synthetic => unreachable!("JSONL sources"),
    }
    rec
}

fn push_record(out: &mut ParsedManifest, rec: Recording, line: u64, warnings: Vec<String>) {
    let id = (!rec.id.is_empty()).then(|| rec.id.clone());
    match rec.validate() {
        Ok(()) => {
            out.issues.extend(warnings.into_iter().map(|message| RowIssue {
                line,
                record_id: id.clone(),
                severity: Severity::Warning,
                message,
            }));
            out.records.push(rec);
        }
        Err(message) => out.issues.push(RowIssue {
            line,
            record_id: id,
            severity: Severity::Error,
            message,
        }),
    }
}

fn parse_jsonl(path: &Path, source: Source) -> Result<ParsedManifest> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = ParsedManifest::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row_err = |message: String| RowIssue {
            line: line_no,
            record_id: None,
            severity: Severity::Error,
            message,
        };
        match source {
            Source::Synthetic => match serde_json::from_str::<Recording>(&line) {
                Ok(rec) => push_record(&mut out, rec, line_no, Vec::new()),
                Err(e) => out.issues.push(row_err(e.to_string())),
            },
            _ => match serde_json::from_str::<Value>(&line) {
                Ok(Value::Object(obj)) => {
                    let (rec, warnings) = xenocanto_to_record(&obj);
                    push_record(&mut out, rec, line_no, warnings);
                }
                Ok(_) => out.issues.push(row_err("row is not a JSON object".into())),
                Err(e) => out.issues.push(row_err(e.to_string())),
            },
        }
    }
    Ok(out)
}

fn json_text(obj: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => non_empty(s),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn xenocanto_to_record(obj: &serde_json::Map<String, Value>) -> (Recording, Vec<String>) {
    let mut warnings = Vec::new();
    let mut rec = Recording::new(
        json_text(obj, "id").unwrap_or_default(),
        Source::Xenocanto,
        json_text(obj, "file").unwrap_or_default(),
    );
    rec.species_scientific = json_text(obj, "species");
    rec.species_common = json_text(obj, "en");
    rec.call_type = json_text(obj, "type");
    rec.behavior = json_text(obj, "behavior");
    rec.notes = json_text(obj, "remarks");
    rec.location = json_text(obj, "loc");
    rec.license = json_text(obj, "lic").unwrap_or_default();
    rec.background_species = match obj.get("also") {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|v| v.as_str().and_then(non_empty))
            .collect(),
        Some(Value::String(s)) => s.split(',').filter_map(non_empty).collect(),
        _ => Vec::new(),
    };
    if let Some(raw) = json_text(obj, "animals") {
        match raw.parse::<u32>() {
            Ok(n) if n > 0 => rec.num_animals = Some(n),
            _ => warnings.push(format!("unparseable animals {raw:?}")),
        }
    }
    if let Some(raw) = json_text(obj, "date") {
        rec.recorded_date = parse_date(&raw);
        if rec.recorded_date.is_none() {
            warnings.push(format!("unparseable date {raw:?}"));
        }
    }
    if let Some(raw) = json_text(obj, "time") {
        rec.recorded_time = parse_time(&raw);
        if rec.recorded_time.is_none() {
            warnings.push(format!("unparseable time {raw:?}"));
        }
    }
    (rec, warnings)
}

/// Writes records in the normalized JSONL form (one record per line, UTF-8).
pub fn write_normalized(records: &[Recording], path: &Path) -> Result<()> {
    write_jsonl(records, path)
}

pub fn read_normalized(path: &Path) -> Result<Vec<Recording>> {
    let parsed = parse_jsonl(path, Source::Synthetic)?;
    if let Some(issue) = parsed.errors().next() {
        return Err(IngestError::MalformedManifest {
            path: path.display().to_string(),
            reason: format!("line {}: {}", issue.line, issue.message),
        });
    }
    Ok(parsed.records)
}

pub fn write_issue_report(issues: &[RowIssue], path: &Path) -> Result<()> {
    write_jsonl(issues, path)
}

pub fn read_issue_report(path: &Path) -> Result<Vec<RowIssue>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
