//! Trial lists, ground-truth keys and score tables.

use std::collections::{BTreeMap, BTreeSet};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trial {
    pub model_id: String,
    pub test_id: String,
}

impl Trial {
    pub fn new(model_id: impl Into<String>, test_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            test_id: test_id.into(),
        }
    }

    pub fn pair(&self) -> (String, String) {
        (self.model_id.clone(), self.test_id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyEntry {
    pub trial: Trial,
    pub is_target: bool,
}

/// Ground-truth labels for a set of trials. Pairs are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialKey {
    entries: Vec<KeyEntry>,
}

impl TrialKey {
    pub fn new(entries: Vec<KeyEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(&e.trial) {
                return Err(Error::DuplicateTrial(
                    e.trial.model_id.clone(),
                    e.trial.test_id.clone(),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[KeyEntry] {
        &self.entries
    }

    pub fn trials(&self) -> impl Iterator<Item = &Trial> {
        self.entries.iter().map(|e| &e.trial)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_targets(&self) -> usize {
        self.entries.iter().filter(|e| e.is_target).count()
    }

    pub fn n_nontargets(&self) -> usize {
        self.entries.len() - self.n_targets()
    }

    /// Label lookup table.
    pub fn labels(&self) -> BTreeMap<&Trial, bool> {
        self.entries.iter().map(|e| (&e.trial, e.is_target)).collect()
    }

    /// Keep only the entries accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&KeyEntry) -> bool) -> TrialKey {
        TrialKey {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }
}

/// Raw or normalized scores keyed by trial. Iteration order is sorted by
/// (model_id, test_id), independent of insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    scores: BTreeMap<Trial, f64>,
}

impl ScoreSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a finite score; a repeated trial is rejected.
    pub fn insert(&mut self, trial: Trial, score: f64) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite score for {}/{}",
                trial.model_id, trial.test_id
            )));
        }
        if self.scores.contains_key(&trial) {
            return Err(Error::DuplicateTrial(trial.model_id, trial.test_id));
        }
        self.scores.insert(trial, score);
        Ok(())
    }

    pub fn get(&self, trial: &Trial) -> Option<f64> {
        self.scores.get(trial).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Trial, f64)> {
        self.scores.iter().map(|(t, s)| (t, *s))
    }

    /// Split the scores into (targets, nontargets) following `key`.
    ///
    /// Every key entry must have a score; scores for trials outside the key
    /// are ignored.
    pub fn split_by_key(&self, key: &TrialKey) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tar = Vec::new();
        let mut non = Vec::new();
        let mut missing = Vec::new();
        for e in key.entries() {
            match self.scores.get(&e.trial) {
                Some(&s) if e.is_target => tar.push(s),
                Some(&s) => non.push(s),
                None => missing.push(e.trial.pair()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingTrials(missing));
        }
        Ok((tar, non))
    }

    /// Error listing the symmetric difference of the two trial sets, if any.
    pub fn check_same_trials(&self, other: &ScoreSet) -> Result<()> {
        let only_left: Vec<_> = self
            .scores
            .keys()
            .filter(|t| !other.scores.contains_key(*t))
            .map(Trial::pair)
            .collect();
        let only_right: Vec<_> = other
            .scores
            .keys()
            .filter(|t| !self.scores.contains_key(*t))
            .map(Trial::pair)
            .collect();
        if only_left.is_empty() && only_right.is_empty() {
            Ok(())
        } else {
            Err(Error::KeyMismatch {
                only_left,
                only_right,
            })
        }
    }
}

impl FromIterator<(Trial, f64)> for ScoreSet {
    /// Later duplicates overwrite earlier ones; use [`ScoreSet::insert`] for checked insertion.
    fn from_iter<I: IntoIterator<Item = (Trial, f64)>>(iter: I) -> Self {
        Self {
            scores: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_key_entries_rejected() {
        let e = KeyEntry {
            trial: Trial::new("m", "t"),
            is_target: true,
        };
        assert!(matches!(
            TrialKey::new(vec![e.clone(), e]),
            Err(Error::DuplicateTrial(..))
        ));
    }

    #[test]
    fn missing_scores_listed() {
        let key = TrialKey::new(vec![
            KeyEntry { trial: Trial::new("m", "a"), is_target: true },
            KeyEntry { trial: Trial::new("m", "b"), is_target: false },
        ])
        .unwrap();
        let mut s = ScoreSet::new();
        s.insert(Trial::new("m", "a"), 1.0).unwrap();
        match s.split_by_key(&key) {
            Err(Error::MissingTrials(m)) => assert_eq!(m, vec![("m".into(), "b".into())]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_score_rejected() {
        let mut s = ScoreSet::new();
        assert!(s.insert(Trial::new("m", "a"), f64::NAN).is_err());
    }
}
