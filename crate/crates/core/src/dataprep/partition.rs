//! Stratified k-fold partition of runs.
//!
//! Non-fault runs are dealt to the folds round-robin. Fault runs are grouped
//! by (class, onset/magnitude combination); each group is shuffled and split
//! into `k` contiguous blocks of `runs / k`, and any remainder is dealt
//! round-robin with a counter shared by all groups.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FaultClass;
use crate::error::{Error, Result};

/// One registered run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub class: FaultClass,
    /// Onset/magnitude combination; ignored for non-fault runs.
    pub combo: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPartition {
    pub k: usize,
    pub folds: Vec<Vec<String>>,
}

impl CvPartition {
    pub fn fold_of(&self, run_id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|r| r == run_id))
    }

    pub fn test_runs(&self, fold: usize) -> &[String] {
        &self.folds[fold]
    }

    pub fn train_runs(&self, fold: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect()
    }
}

pub fn cv_partition(registry: &[RunRecord], k: usize, seed: u64) -> Result<CvPartition> {
    if registry.is_empty() {
        return Err(Error::invalid("registry", "no runs to partition"));
    }
    if k == 0 {
        return Err(Error::invalid("k", "at least one fold is required"));
    }
    let mut seen = HashSet::new();
    for r in registry {
        if !seen.insert(r.run_id.as_str()) {
            return Err(Error::invalid("registry", format!("duplicate run id `{}`", r.run_id)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];

    let mut nonfault: Vec<&str> = registry
        .iter()
        .filter(|r| r.class == FaultClass::NonFault)
        .map(|r| r.run_id.as_str())
        .collect();
    nonfault.shuffle(&mut rng);
    for (i, run) in nonfault.into_iter().enumerate() {
        folds[i % k].push(run.to_string());
    }

    let mut groups: BTreeMap<(FaultClass, usize), Vec<&str>> = BTreeMap::new();
    for r in registry.iter().filter(|r| r.class != FaultClass::NonFault) {
        groups.entry((r.class, r.combo)).or_default().push(&r.run_id);
    }
    let mut counter = 0;
    for runs in groups.values_mut() {
        runs.shuffle(&mut rng);
        let per_fold = runs.len() / k;
        for (fold, members) in folds.iter_mut().enumerate() {
            members.extend(
                runs[fold * per_fold..(fold + 1) * per_fold]
                    .iter()
                    .map(|s| s.to_string()),
            );
        }
        for run in &runs[k * per_fold..] {
            folds[counter % k].push(run.to_string());
            counter += 1;
        }
    }
    Ok(CvPartition { k, folds })
}
