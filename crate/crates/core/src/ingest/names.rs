use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::Serialize;

use super::{Recording, Result};

/// Scientific ↔ common name table. Lookups are case-insensitive in both
/// directions; stored values keep their original spelling.
#[derive(Debug, Clone, Default)]
pub struct SpeciesNameTable {
    to_common: HashMap<String, String>,
    to_scientific: HashMap<String, String>,
}

impl SpeciesNameTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, scientific: &str, common: &str) {
        let (s, c) = (scientific.trim(), common.trim());
        if s.is_empty() || c.is_empty() {
            return;
        }
        self.to_common.insert(s.to_lowercase(), c.to_string());
        self.to_scientific.insert(c.to_lowercase(), s.to_string());
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut table = Self::new();
        for (s, c) in pairs {
            table.insert(s, c);
        }
        table
    }

    /// Loads a CSV with `scientific_name,common_name` columns.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut table = Self::new();
        for row in reader.deserialize::<(String, String)>() {
            let (s, c) = row?;
            table.insert(&s, &c);
        }
        Ok(table)
    }

    /// Harvests pairs from records that already carry both name forms.
    pub fn extend_from_records(&mut self, records: &[Recording]) {
        for rec in records {
            if let (Some(s), Some(c)) = (&rec.species_scientific, &rec.species_common) {
                self.insert(s, c);
            }
        }
    }

    pub fn common_for(&self, scientific: &str) -> Option<&str> {
        self.to_common
            .get(&scientific.trim().to_lowercase())
            .map(String::as_str)
    }

    pub fn scientific_for(&self, common: &str) -> Option<&str> {
        self.to_scientific
            .get(&common.trim().to_lowercase())
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.to_common.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_common.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NameMappingReport {
    pub filled_common: usize,
    pub filled_scientific: usize,
    /// Records that still lack one name form after mapping.
    pub unmapped: usize,
    pub unmapped_names: BTreeSet<String>,
}

/// Fills in whichever name form a record lacks. Existing names are never
/// overwritten.
pub fn map_species_names(
    records: Vec<Recording>,
    table: &SpeciesNameTable,
) -> (Vec<Recording>, NameMappingReport) {
    let mut report = NameMappingReport::default();
    let records = records
        .into_iter()
        .map(|mut rec| {
            match (&rec.species_scientific, &rec.species_common) {
                (Some(s), None) => match table.common_for(s) {
                    Some(c) => {
                        rec.species_common = Some(c.to_string());
                        report.filled_common += 1;
                    }
                    None => {
                        report.unmapped += 1;
                        report.unmapped_names.insert(s.clone());
                    }
                },
                (None, Some(c)) => match table.scientific_for(c) {
                    Some(s) => {
                        rec.species_scientific = Some(s.to_string());
                        report.filled_scientific += 1;
                    }
                    None => {
                        report.unmapped += 1;
                        report.unmapped_names.insert(c.clone());
                    }
                },
                _ => {}
            }
            rec
        })
        .collect();
    (records, report)
}
