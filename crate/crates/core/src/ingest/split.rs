use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IngestError, Recording, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusSplit {
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    /// Species with fewer records contribute nothing to the test set.
    pub min_count: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            min_count: 70,
            test_fraction: 0.10,
            seed: 0,
        }
    }
}

const UNKNOWN: &str = "unknown";

/// (date, time, location) with absent fields mapped to a shared sentinel, so
/// two records both lacking all three collide.
fn occasion(rec: &Recording) -> (String, String, String) {
    (
        rec.recorded_date
            .map(|d| d.to_string())
            .unwrap_or_else(|| UNKNOWN.into()),
        rec.recorded_time
            .map(|t| t.to_string())
            .unwrap_or_else(|| UNKNOWN.into()),
        rec.location
            .as_deref()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .unwrap_or(UNKNOWN)
            .to_string(),
    )
}

/// Draws a held-out test set of recordings that are independent of training.
///
/// Candidates are sampled uniformly without replacement over all records of
/// species with at least `min_count` records. A candidate is then rejected
/// (kept in train) if a training record of the same species shares its
/// recording date, time and location. Rejected candidates are not replaced,
/// so the test fraction is an upper bound.
pub fn build_species_split(records: &[Recording], params: SplitParams) -> Result<CorpusSplit> {
    if records.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }
    let mut by_species: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, rec) in records.iter().enumerate() {
        if let Some(key) = rec.species_key() {
            by_species.entry(key).or_default().push(i);
        }
    }
    let mut eligible: Vec<usize> = by_species
        .values()
        .filter(|idx| idx.len() >= params.min_count)
        .flatten()
        .copied()
        .collect();
    // Input order, not hash order, so the split depends only on (records, seed).
    eligible.sort_unstable();

    let target = (params.test_fraction.clamp(0.0, 1.0) * eligible.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let candidates: HashSet<usize> = eligible
        .choose_multiple(&mut rng, target)
        .copied()
        .collect();

    // Occasions already used by training records, per species.
    let mut train_occasions: HashMap<String, HashSet<(String, String, String)>> = HashMap::new();
    for (i, rec) in records.iter().enumerate() {
        if candidates.contains(&i) {
            continue;
        }
        if let Some(key) = rec.species_key() {
            train_occasions.entry(key).or_default().insert(occasion(rec));
        }
    }

    let mut split = CorpusSplit::default();
    for (i, rec) in records.iter().enumerate() {
        let accepted = candidates.contains(&i)
            && rec.species_key().is_some_and(|key| {
                !train_occasions
                    .get(&key)
                    .is_some_and(|seen| seen.contains(&occasion(rec)))
            });
        if accepted {
            split.test_ids.insert(rec.id.clone());
        } else {
            split.train_ids.insert(rec.id.clone());
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Source;
    use chrono::{NaiveDate, NaiveTime};

    fn species_records(species: &str, n: usize, start: usize) -> Vec<Recording> {
        (0..n)
            .map(|i| {
                let mut r = Recording::new(format!("{species}-{}", start + i), Source::Inaturalist, "a.wav");
                r.species_scientific = Some(species.into());
                r.recorded_date = NaiveDate::from_ymd_opt(2020, 1, 1)
                    .map(|d| d + chrono::Days::new((start + i) as u64));
                r.recorded_time = NaiveTime::from_hms_opt(6, 0, 0);
                r.location = Some("Site 1".into());
                r
            })
            .collect()
    }

    #[test]
    fn species_below_threshold_contribute_nothing() {
        let mut records = species_records("Rare rarus", 69, 0);
        records.extend(species_records("Common communis", 100, 0));
        let params = SplitParams { test_fraction: 0.5, seed: 7, ..Default::default() };
        let split = build_species_split(&records, params).unwrap();
        assert!(split.test_ids.iter().all(|id| id.starts_with("Common")));
        assert!(!split.test_ids.is_empty());
        assert!(split.test_ids.len() <= 50);
    }

    #[test]
    fn collision_with_train_rejects_candidate() {
        let mut records = species_records("Twin twinus", 2, 0);
        records[1].recorded_date = records[0].recorded_date;
        let params = SplitParams { min_count: 2, test_fraction: 0.5, seed: 3 };
        let split = build_species_split(&records, params).unwrap();
        assert!(split.test_ids.is_empty());
        assert_eq!(split.train_ids.len(), 2);
    }

    #[test]
    fn all_unknown_fields_collide() {
        let records: Vec<_> = (0..4)
            .map(|i| {
                let mut r = Recording::new(format!("u{i}"), Source::Asa, "a.wav");
                r.species_scientific = Some("Bufo bufo".into());
                r
            })
            .collect();
        let params = SplitParams { min_count: 1, test_fraction: 0.5, seed: 1 };
        assert!(build_species_split(&records, params).unwrap().test_ids.is_empty());
    }

    #[test]
    fn deterministic_for_seed() {
        let records = species_records("Common communis", 200, 0);
        let p = SplitParams { seed: 11, ..Default::default() };
        assert_eq!(
            build_species_split(&records, p).unwrap(),
            build_species_split(&records, p).unwrap()
        );
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(matches!(
            build_species_split(&[], SplitParams::default()),
            Err(IngestError::EmptyCorpus)
        ));
    }
}
