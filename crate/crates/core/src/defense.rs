//! Reward bookkeeping and threshold elimination.
//!
//! Every round a client is judged benign (+1) or adversarial (-1). A client
//! whose running score reaches `-threshold` is removed for good and its
//! score is frozen.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterVerdict;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: i64 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreLedger {
    pub threshold: i64,
    pub scores: BTreeMap<usize, i64>,
    pub eliminated: BTreeSet<usize>,
    /// Round at which each eliminated client was removed.
    pub elimination_round: BTreeMap<usize, usize>,
}

impl ScoreLedger {
    pub fn new(clients: impl IntoIterator<Item = usize>, threshold: i64) -> Result<Self> {
        if threshold < 1 {
            return Err(Error::param(format!(
                "threshold must be >= 1, got {threshold}"
            )));
        }
        Ok(Self {
            threshold,
            scores: clients.into_iter().map(|c| (c, 0)).collect(),
            eliminated: BTreeSet::new(),
            elimination_round: BTreeMap::new(),
        })
    }

    pub fn score(&self, client: usize) -> i64 {
        self.scores.get(&client).copied().unwrap_or(0)
    }

    pub fn is_eliminated(&self, client: usize) -> bool {
        self.eliminated.contains(&client)
    }

    /// Benign ids gain one point, adversary ids lose one.
    pub fn apply_rewards(&mut self, verdict: &ClusterVerdict) -> Result<()> {
        let all = verdict.benign_ids.iter().chain(&verdict.adversary_ids);
        if let Some(c) = all.clone().find(|c| self.eliminated.contains(c)) {
            return Err(Error::Contract(format!(
                "client {c} was eliminated and cannot be rewarded"
            )));
        }
        if let Some(c) = verdict
            .benign_ids
            .intersection(&verdict.adversary_ids)
            .next()
        {
            return Err(Error::Contract(format!(
                "client {c} is both benign and adversarial"
            )));
        }
        for &c in &verdict.benign_ids {
            *self.scores.entry(c).or_insert(0) += 1;
        }
        for &c in &verdict.adversary_ids {
            *self.scores.entry(c).or_insert(0) -= 1;
        }
        Ok(())
    }

    /// Moves every client at or below `-threshold` into `eliminated` and
    /// returns those removed by this call.
    pub fn eliminate(&mut self, round: usize) -> BTreeSet<usize> {
        let newly: BTreeSet<usize> = self
            .scores
            .iter()
            .filter(|(c, &s)| s <= -self.threshold && !self.eliminated.contains(c))
            .map(|(&c, _)| c)
            .collect();
        for &c in &newly {
            self.eliminated.insert(c);
            self.elimination_round.insert(c, round);
        }
        newly
    }
}

/// Defense knobs as they appear in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefenseConfig {
    pub enabled: bool,
    pub threshold: i64,
    pub k_max: usize,
    /// WCSS fraction (relative to one cluster) below which the curve is
    /// considered flat; see [`crate::clustering::select_from_sweep`].
    pub elbow_ratio: f64,
    /// Keep flagged updates out of the current round's average.
    pub exclude_flagged_per_round: bool,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: DEFAULT_THRESHOLD,
            k_max: 5,
            elbow_ratio: 1e-3,
            exclude_flagged_per_round: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(benign: &[usize], adversary: &[usize]) -> ClusterVerdict {
        ClusterVerdict {
            benign_cluster: 0,
            adversary_clusters: if adversary.is_empty() {
                BTreeSet::new()
            } else {
                BTreeSet::from([1])
            },
            benign_ids: benign.iter().copied().collect(),
            adversary_ids: adversary.iter().copied().collect(),
            dissimilarities: BTreeMap::new(),
        }
    }

    #[test]
    fn all_benign_accumulates() {
        let mut l = ScoreLedger::new(0..10, 20).unwrap();
        let v = verdict(&(0..10).collect::<Vec<_>>(), &[]);
        for _ in 0..3 {
            l.apply_rewards(&v).unwrap();
        }
        assert!(l.scores.values().all(|&s| s == 3));
    }

    #[test]
    fn eliminated_exactly_at_threshold() {
        let mut l = ScoreLedger::new(0..3, 20).unwrap();
        let v = verdict(&[0, 1], &[2]);
        for round in 1..=20 {
            assert!(!l.is_eliminated(2));
            l.apply_rewards(&v).unwrap();
            let newly = l.eliminate(round);
            if round < 20 {
                assert!(newly.is_empty());
            } else {
                assert_eq!(newly, BTreeSet::from([2]));
            }
        }
        assert_eq!(l.score(2), -20);
        assert_eq!(l.elimination_round[&2], 20);
        // Frozen and protected afterwards.
        assert!(matches!(l.apply_rewards(&v), Err(Error::Contract(_))));
        assert_eq!(l.score(2), -20);
    }

    #[test]
    fn alternating_client_survives() {
        let mut l = ScoreLedger::new(0..2, 20).unwrap();
        for round in 1..=100 {
            let v = if round % 2 == 1 {
                verdict(&[0], &[1])
            } else {
                verdict(&[0, 1], &[])
            };
            l.apply_rewards(&v).unwrap();
            assert!(l.eliminate(round).is_empty());
            assert!((-1..=0).contains(&l.score(1)));
        }
    }

    #[test]
    fn simultaneous_eliminations() {
        let mut l = ScoreLedger::new(0..4, 2).unwrap();
        let v = verdict(&[0, 1], &[2, 3]);
        l.apply_rewards(&v).unwrap();
        assert!(l.eliminate(1).is_empty());
        l.apply_rewards(&v).unwrap();
        assert_eq!(l.eliminate(2), BTreeSet::from([2, 3]));
    }

    #[test]
    fn empty_verdict_is_idempotent() {
        let mut l = ScoreLedger::new(0..3, 1).unwrap();
        l.apply_rewards(&verdict(&[0, 1], &[2])).unwrap();
        l.eliminate(1);
        let snapshot = l.clone();
        l.apply_rewards(&verdict(&[], &[])).unwrap();
        assert!(l.eliminate(2).is_empty());
        assert_eq!(l, snapshot);
    }

    #[test]
    fn rejects_bad_threshold_and_overlap() {
        assert!(ScoreLedger::new(0..3, 0).is_err());
        let mut l = ScoreLedger::new(0..3, 5).unwrap();
        assert!(l.apply_rewards(&verdict(&[1], &[1])).is_err());
    }
}
