//! Server-side federated averaging loop with the clustering defense wired
//! in between collection and averaging.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adversary::{poison_update, AdversaryPlan};
use crate::clustering::{
    kmeans_sweep, label_clusters, select_from_sweep, PointSet, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::data::{ClientShard, Dataset};
use crate::defense::{DefenseConfig, ScoreLedger};
use crate::error::{Error, Result};
use crate::harness::{derive_seed, prepare, ExperimentConfig};
use crate::model::{evaluate, local_train, Metrics, ParameterVector, TrainConfig};

/// Unweighted elementwise mean.
pub fn average_weights(updates: &[ParameterVector]) -> Result<ParameterVector> {
    let first = updates
        .first()
        .ok_or_else(|| Error::param("cannot average an empty list of updates"))?;
    let dim = first.dim();
    let mut sum = vec![0.0; dim];
    for u in updates {
        if u.dim() != dim {
            return Err(Error::Shape {
                expected: dim,
                found: u.dim(),
            });
        }
        sum.iter_mut().zip(u.iter()).for_each(|(s, v)| *s += v);
    }
    let n = updates.len() as f64;
    ParameterVector::new(sum.into_iter().map(|s| s / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub cluster_count: usize,
    /// Best WCSS for k = 1, 2, ... up to the sweep limit.
    pub wcss: Vec<f64>,
    pub flagged: BTreeSet<usize>,
    pub eliminated: BTreeSet<usize>,
    pub n_eliminated_total: usize,
    pub n_active: usize,
    pub submitted: Vec<usize>,
    /// Global weights after this round's averaging.
    #[serde(skip)]
    pub global: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTrace {
    pub initial: Metrics,
    pub rows: Vec<RoundRecord>,
    pub converged: bool,
    pub adversaries: BTreeSet<usize>,
    pub ledger: Option<ScoreLedger>,
}

impl ExperimentTrace {
    pub fn new(initial: Metrics, adversaries: BTreeSet<usize>) -> Self {
        Self {
            initial,
            rows: Vec::new(),
            converged: false,
            adversaries,
            ledger: None,
        }
    }

    pub fn final_metrics(&self) -> Metrics {
        self.rows.last().map_or(self.initial, |r| Metrics {
            accuracy: r.accuracy,
            loss: r.loss,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FederationState {
    pub round: usize,
    pub global_params: ParameterVector,
    pub active_clients: BTreeSet<usize>,
    pub history: ExperimentTrace,
}

#[derive(Debug, Clone)]
pub struct RoundReport {
    pub round: usize,
    pub submitted: BTreeMap<usize, ParameterVector>,
    pub averaged: ParameterVector,
    pub eval: Metrics,
    pub cluster_count: usize,
    pub wcss: Vec<f64>,
    pub flagged: BTreeSet<usize>,
    pub eliminated_this_round: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct RoundConfig {
    pub train: TrainConfig,
    pub defense: DefenseConfig,
    pub master_seed: u64,
}

fn stream_index(round: usize, client: usize) -> u64 {
    ((round as u64) << 32) | client as u64
}

/// One round: broadcast, local training, poisoning, clustering, rewards,
/// elimination, averaging and evaluation.
///
/// Clustering always runs so the trace carries the cluster-count signal;
/// with the defense disabled its verdict is recorded but never acted on.
pub fn run_round(
    state: &mut FederationState,
    shards: &[ClientShard],
    plan: &AdversaryPlan,
    ledger: &mut ScoreLedger,
    cfg: &RoundConfig,
    test: &Dataset,
) -> Result<RoundReport> {
    if state.active_clients.is_empty() {
        return Err(Error::NoParticipants);
    }
    let round = state.round + 1;
    let clients: Vec<usize> = state.active_clients.iter().copied().collect();
    let global = &state.global_params;

    let submitted: BTreeMap<usize, ParameterVector> = clients
        .par_iter()
        .map(|&c| {
            let shard = shards
                .iter()
                .find(|s| s.client_id == c)
                .ok_or_else(|| Error::Contract(format!("no shard for client {c}")))?;
            let train = TrainConfig {
                seed: derive_seed(cfg.master_seed, "local_train", stream_index(round, c)),
                ..cfg.train
            };
            let mut update = local_train(global, shard, &train)?;
            if plan.is_adversary(c) {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    cfg.master_seed,
                    "poison",
                    stream_index(round, c),
                ));
                update = poison_update(&update, &plan.noise, &mut rng)?;
            }
            Ok((c, update))
        })
        .collect::<Result<_>>()?;

    let points = PointSet::from_updates(&submitted)?;
    let sweep = kmeans_sweep(
        &points,
        cfg.defense.k_max,
        derive_seed(cfg.master_seed, "kmeans", round as u64),
        DEFAULT_MAX_ITER,
        DEFAULT_TOL,
    )?;
    let cluster_count = select_from_sweep(&points, &sweep, cfg.defense.elbow_ratio);
    let verdict = label_clusters(&points, &sweep[cluster_count - 1], global)?;
    let flagged = verdict.adversary_ids.clone();

    let mut newly = BTreeSet::new();
    if cfg.defense.enabled {
        ledger.apply_rewards(&verdict)?;
        newly = ledger.eliminate(round);
    }
    let exclude = cfg.defense.enabled && cfg.defense.exclude_flagged_per_round;
    let admitted: Vec<ParameterVector> = submitted
        .iter()
        .filter(|(c, _)| !(exclude && flagged.contains(c)) && !newly.contains(c))
        .map(|(_, p)| p.clone())
        .collect();
    if admitted.is_empty() {
        return Err(Error::NoParticipants);
    }
    let averaged = average_weights(&admitted)?;
    let eval = evaluate(&averaged, test)?;

    state.round = round;
    state.global_params = averaged.clone();
    for c in &newly {
        state.active_clients.remove(c);
    }
    let wcss: Vec<f64> = sweep.iter().map(|c| c.wcss).collect();
    state.history.rows.push(RoundRecord {
        round,
        accuracy: eval.accuracy,
        loss: eval.loss,
        cluster_count,
        wcss: wcss.clone(),
        flagged: flagged.clone(),
        eliminated: newly.clone(),
        n_eliminated_total: ledger.eliminated.len(),
        n_active: state.active_clients.len(),
        submitted: clients,
        global: averaged.to_vec(),
    });

    Ok(RoundReport {
        round,
        submitted,
        averaged,
        eval,
        cluster_count,
        wcss,
        flagged,
        eliminated_this_round: newly,
    })
}

/// Runs a whole experiment in memory.
pub fn run_training(cfg: &ExperimentConfig) -> Result<ExperimentTrace> {
    run_training_with(cfg, |_| Ok(()))
}

/// Like [`run_training`], calling `on_round` after every completed round.
///
/// Stops after `max_rounds`, or earlier once the absolute change in test
/// loss stays below `convergence.tol` for `convergence.patience`
/// consecutive rounds.
pub fn run_training_with(
    cfg: &ExperimentConfig,
    mut on_round: impl FnMut(&RoundRecord) -> Result<()>,
) -> Result<ExperimentTrace> {
    cfg.validate()?;
    let setup = prepare(cfg)?;
    let initial = evaluate(&setup.initial_params, &setup.test)?;
    let mut state = FederationState {
        round: 0,
        global_params: setup.initial_params.clone(),
        active_clients: setup.shards.iter().map(|s| s.client_id).collect(),
        history: ExperimentTrace::new(initial, setup.plan.adversary_ids.clone()),
    };
    let mut ledger = ScoreLedger::new(state.active_clients.iter().copied(), cfg.defense.threshold)?;
    let round_cfg = RoundConfig {
        train: cfg.train,
        defense: cfg.defense,
        master_seed: cfg.master_seed,
    };

    let mut previous_loss = initial.loss;
    let mut calm_rounds = 0;
    for _ in 0..cfg.max_rounds {
        let report = run_round(
            &mut state,
            &setup.shards,
            &setup.plan,
            &mut ledger,
            &round_cfg,
            &setup.test,
        )?;
        on_round(state.history.rows.last().expect("round recorded"))?;
        if (report.eval.loss - previous_loss).abs() < cfg.convergence.tol {
            calm_rounds += 1;
        } else {
            calm_rounds = 0;
        }
        previous_loss = report.eval.loss;
        if calm_rounds >= cfg.convergence.patience {
            state.history.converged = true;
            break;
        }
    }
    let mut trace = state.history;
    if cfg.defense.enabled {
        trace.ledger = Some(ledger);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::AdversaryPlan;
    use crate::data::{generate_synthetic, partition, PartitionSpec};
    use crate::model::init_params;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn averaging_identities() {
        let a = pv(&[1.0, 3.0]);
        assert_eq!(average_weights(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(
            average_weights(&[a, pv(&[3.0, 5.0])]).unwrap(),
            pv(&[2.0, 4.0])
        );
        assert!(matches!(average_weights(&[]), Err(Error::Parameter(_))));
        assert!(matches!(
            average_weights(&[pv(&[1.0]), pv(&[1.0, 2.0])]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn averaging_matches_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..7).map(|_| rng.gen_range(-50.0..50.0)).collect())
            .collect();
        let got = average_weights(&rows.iter().map(|r| pv(r)).collect::<Vec<_>>()).unwrap();
        for j in 0..7 {
            let mut s = 0.0;
            for r in &rows {
                s += r[j];
            }
            assert_abs_diff_eq!(got[j], s / 10.0, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn averaging_is_permutation_invariant(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut updates: Vec<ParameterVector> = (0..n)
                .map(|_| pv(&(0..4).map(|_| rng.gen_range(-10.0..10.0)).collect::<Vec<_>>()))
                .collect();
            let a = average_weights(&updates).unwrap();
            updates.reverse();
            updates.rotate_left(seed as usize % n);
            let b = average_weights(&updates).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_honest_client_gets_its_own_update() {
        let data = generate_synthetic(200, 3, 2, 4.0, 5).unwrap();
        let shards = partition(&data, &PartitionSpec::proportional(1, None), 0).unwrap();
        let init = init_params(4, 1).unwrap();
        let mut state = FederationState {
            round: 0,
            global_params: init.clone(),
            active_clients: BTreeSet::from([0]),
            history: ExperimentTrace::new(evaluate(&init, &data).unwrap(), BTreeSet::new()),
        };
        let mut ledger = ScoreLedger::new([0], 20).unwrap();
        let cfg = RoundConfig {
            train: TrainConfig::default(),
            defense: DefenseConfig {
                enabled: false,
                ..DefenseConfig::default()
            },
            master_seed: 3,
        };
        let report = run_round(
            &mut state,
            &shards,
            &AdversaryPlan::none(),
            &mut ledger,
            &cfg,
            &data,
        )
        .unwrap();
        let expected = local_train(
            &init,
            &shards[0],
            &TrainConfig {
                seed: derive_seed(3, "local_train", stream_index(1, 0)),
                ..cfg.train
            },
        )
        .unwrap();
        assert_eq!(report.averaged, expected);
        assert_eq!(state.round, 1);
        assert_eq!(state.history.rows.len(), 1);
    }

    #[test]
    fn no_participants_is_an_error() {
        let data = generate_synthetic(20, 2, 1, 4.0, 5).unwrap();
        let init = init_params(3, 1).unwrap();
        let mut state = FederationState {
            round: 4,
            global_params: init.clone(),
            active_clients: BTreeSet::new(),
            history: ExperimentTrace::new(evaluate(&init, &data).unwrap(), BTreeSet::new()),
        };
        let mut ledger = ScoreLedger::new([0], 20).unwrap();
        let cfg = RoundConfig {
            train: TrainConfig::default(),
            defense: DefenseConfig::default(),
            master_seed: 0,
        };
        let err = run_round(
            &mut state,
            &[],
            &AdversaryPlan::none(),
            &mut ledger,
            &cfg,
            &data,
        );
        assert!(matches!(err, Err(Error::NoParticipants)));
    }
}
