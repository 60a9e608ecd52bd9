//! Leave-one-session-out folds: one held-out session per fold, with one of
//! its speakers used for validation and the other for testing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestEntry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub index: usize,
    pub held_out_session: String,
    pub train_sessions: Vec<String>,
    pub validation_speaker: String,
    pub test_speaker: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Validation,
    Test,
}

impl FoldPlan {
    pub fn role_of(&self, entry: &ManifestEntry) -> Option<Role> {
        if entry.session == self.held_out_session {
            if entry.speaker == self.validation_speaker {
                Some(Role::Validation)
            } else if entry.speaker == self.test_speaker {
                Some(Role::Test)
            } else {
                None
            }
        } else if self.train_sessions.contains(&entry.session) {
            Some(Role::Train)
        } else {
            None
        }
    }

    /// Entries in the given role, in manifest order.
    pub fn select<'a>(&self, manifest: &'a Manifest, role: Role) -> Vec<&'a ManifestEntry> {
        manifest
            .entries
            .iter()
            .filter(|e| self.role_of(e) == Some(role))
            .collect()
    }
}

/// One fold per session in lexicographic session order. The
/// lexicographically first speaker of the held-out session validates;
/// `both_orders` adds the fold with the roles swapped right after it.
pub fn build_folds(manifest: &Manifest, both_orders: bool) -> Result<Vec<FoldPlan>> {
    let mut speakers: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut home: BTreeMap<&str, &str> = BTreeMap::new();
    for e in &manifest.entries {
        if let Some(prev) = home.insert(&e.speaker, &e.session) {
            if prev != e.session {
                return Err(Error::Manifest(format!(
                    "speaker {} appears in sessions {prev} and {}",
                    e.speaker, e.session
                )));
            }
        }
        speakers.entry(&e.session).or_default().insert(&e.speaker);
    }
    if speakers.len() < 2 {
        return Err(Error::Manifest(format!(
            "need at least 2 sessions, found {}",
            speakers.len()
        )));
    }
    let mut folds = Vec::new();
    for (session, spk) in &speakers {
        if spk.len() != 2 {
            return Err(Error::Manifest(format!(
                "session {session} has {} speakers, expected 2",
                spk.len()
            )));
        }
        let mut it = spk.iter();
        let (first, second) = (it.next().unwrap(), it.next().unwrap());
        let train_sessions: Vec<String> = speakers
            .keys()
            .filter(|s| *s != session)
            .map(|s| s.to_string())
            .collect();
        let mut orders = vec![(first, second)];
        if both_orders {
            orders.push((second, first));
        }
        for (val, test) in orders {
            folds.push(FoldPlan {
                index: folds.len(),
                held_out_session: session.to_string(),
                train_sessions: train_sessions.clone(),
                validation_speaker: val.to_string(),
                test_speaker: test.to_string(),
            });
        }
    }
    Ok(folds)
}
