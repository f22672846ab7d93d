//! Patient-disjoint train/validation/test partitioning.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::SyntheticCase;

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    BadRatios([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl CorpusSplit {
    pub fn partition_of(&self, note_id: &str) -> Option<&'static str> {
        let has = |v: &Vec<String>| v.iter().any(|n| n == note_id);
        if has(&self.train) {
            Some("train")
        } else if has(&self.validation) {
            Some("validation")
        } else if has(&self.test) {
            Some("test")
        } else {
            None
        }
    }
}

pub fn check_ratios(ratios: [f64; 3]) -> Result<(), SplitError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadRatios(ratios));
    }
    Ok(())
}

fn seeded_hash(seed: u64, patient_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(patient_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Bucket sizes by largest remainder, so each is within 1 of `n * ratio`.
fn bucket_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: [usize; 3] = [0; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// Orders patients by a seeded hash and cuts the order into three buckets.
pub fn split_patients(patient_ids: &[String], ratios: [f64; 3], seed: u64) -> Result<[Vec<String>; 3], SplitError> {
    check_ratios(ratios)?;
    let unique: BTreeSet<&String> = patient_ids.iter().collect();
    let mut ordered: Vec<(u64, &String)> = unique.into_iter().map(|p| (seeded_hash(seed, p), p)).collect();
    ordered.sort();
    let sizes = bucket_sizes(ordered.len(), ratios);
    let mut out: [Vec<String>; 3] = Default::default();
    let mut it = ordered.into_iter().map(|(_, p)| p.clone());
    for (bucket, size) in out.iter_mut().zip(sizes) {
        bucket.extend(it.by_ref().take(size));
        bucket.sort();
    }
    Ok(out)
}

/// Assigns every case's note id to the bucket of its patient.
pub fn split_corpus(cases: &[SyntheticCase], ratios: [f64; 3], seed: u64) -> Result<CorpusSplit, SplitError> {
    let patients: Vec<String> = cases.iter().map(|c| c.note.patient_id.clone()).collect();
    let buckets = split_patients(&patients, ratios, seed)?;
    let mut where_is: BTreeMap<&str, usize> = BTreeMap::new();
    for (b, ids) in buckets.iter().enumerate() {
        for id in ids {
            where_is.insert(id.as_str(), b);
        }
    }
    let mut notes: [Vec<String>; 3] = Default::default();
    for case in cases {
        let b = where_is[case.note.patient_id.as_str()];
        notes[b].push(case.note.note_id.clone());
    }
    for n in notes.iter_mut() {
        n.sort();
    }
    let [train, validation, test] = notes;
    Ok(CorpusSplit {
        seed,
        ratios,
        train,
        validation,
        test,
    })
}
