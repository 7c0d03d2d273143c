//! Federated averaging of linear SVMs across simulated clients.
//!
//! Each round the server samples a client subset, every sampled client runs
//! local mini-batch subgradient descent from the current global weights, and
//! the server replaces the global model with the example-count weighted
//! average of the returned models. With a client fraction of 1, one local
//! epoch, and full batches, a round over a single client reduces to plain
//! centralized SGD.
//!
//! Client updates within a round run in parallel; results are combined in
//! client-id order and every random stream is derived from the run seed, so
//! the simulation is reproducible regardless of worker thread count.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::confusion;
use crate::features::{EncodedExample, Vocabulary};
use crate::partition::ClientDataset;
use crate::rng::{derive_seed, rng_from_seed};
use crate::svm::{client_update, predict, Hyperparams, SvmModel};

/// Seed-stream tags; distinct constants keep per-purpose streams independent.
const TAG_SAMPLE: u64 = 0x5A;
const TAG_CLIENT: u64 = 0xC1;

/// Which test sets get evaluated each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSet {
    /// The union of all clients' test examples.
    UnionTest,
    /// Each client's own test examples.
    PerClientTest,
    Both,
}

/// Federation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    /// Number of clients (K).
    pub clients: usize,
    /// Fraction of clients sampled per round (C); the sample size is
    /// `max(floor(C * K), 1)`.
    pub client_fraction: f64,
    /// Local mini-batch size (B); `None` is full-batch.
    pub batch_size: Option<usize>,
    /// Local epochs per round (E).
    pub epochs: usize,
    /// Maximum number of rounds (R).
    pub rounds_max: usize,
    pub eta: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Stop as soon as the union-test F1 reaches this value.
    pub target_f1: Option<f64>,
    pub eval_set: EvalSet,
    /// Average over all clients every round, with non-participants
    /// contributing their (unchanged) copy of the current global model,
    /// instead of averaging participants only.
    pub average_over_all: bool,
}

impl Default for FedConfig {
    fn default() -> FedConfig {
        FedConfig {
            clients: 1,
            client_fraction: 1.0,
            batch_size: None,
            epochs: 1,
            rounds_max: 100,
            eta: 0.1,
            lambda: 0.0,
            seed: 0,
            target_f1: None,
            eval_set: EvalSet::UnionTest,
            average_over_all: false,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::ConfigInvalid("client count must be at least 1".into()));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::ConfigInvalid(format!(
                "client_fraction must be within (0, 1], got {}",
                self.client_fraction
            )));
        }
        if self.rounds_max == 0 {
            return Err(Error::ConfigInvalid("rounds_max must be at least 1".into()));
        }
        if let Some(t) = self.target_f1 {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::ConfigInvalid(format!(
                    "target_f1 must be within [0, 1], got {t}"
                )));
            }
        }
        self.local_hyper(0, 0).validate()
    }

    /// Hyperparameters for one client's update in one round, with a seed
    /// derived from (run seed, round, client id).
    fn local_hyper(&self, round: usize, client_id: usize) -> Hyperparams {
        Hyperparams {
            eta: self.eta,
            lambda: self.lambda,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: derive_seed(self.seed, &[TAG_CLIENT, round as u64, client_id as u64]),
        }
    }
}

/// Per-round record of a federated run.
///
/// Wall time is kept for online inspection but is not serialized, so logs
/// from repeated runs are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based round number.
    pub round: usize,
    pub selected_clients: Vec<usize>,
    /// F1 of the new global model on the union test set.
    pub global_f1_union: f64,
    /// F1 per client test set, when per-client evaluation is enabled.
    /// Clients with empty test sets are omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_client_f1: Option<BTreeMap<usize, f64>>,
    #[serde(skip)]
    pub wall_time_ms: u64,
}

/// Outcome of a federated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub final_model: SvmModel,
    pub logs: Vec<RoundLog>,
    /// First round whose union-test F1 reached the target, if any.
    pub rounds_to_target: Option<usize>,
    pub reached_target: bool,
}

/// Samples `max(floor(fraction * k), 1)` distinct client ids, returned in
/// ascending order.
pub fn sample_clients(
    k: usize,
    fraction: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<usize> {
    let m = ((fraction * k as f64).floor() as usize).clamp(1, k);
    let mut ids = rand::seq::index::sample(rng, k, m).into_vec();
    ids.sort_unstable();
    ids
}

/// Example-count weighted average of client models.
///
/// Each coordinate is averaged relative to its maximum across participants,
/// with the weighted differences summed in sorted order. This keeps the
/// average exact in two cases the simulation relies on: aggregating
/// identical models returns them unchanged, and participant order cannot
/// change the result.
pub fn aggregate(updates: &[(SvmModel, usize)]) -> Result<SvmModel> {
    let Some((first, _)) = updates.first() else {
        return Err(Error::EmptyInput("aggregate needs at least one update".into()));
    };
    for (m, _) in updates {
        if m.dim() != first.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot average models of dim {} and {}",
                first.dim(),
                m.dim()
            )));
        }
        if m.vocab_fingerprint != first.vocab_fingerprint {
            return Err(Error::VocabMismatch(
                "cannot average models trained against different vocabularies".into(),
            ));
        }
    }
    let total: usize = updates.iter().map(|&(_, n)| n).sum();
    if total == 0 {
        return Err(Error::EmptyInput("aggregate got zero total example count".into()));
    }
    let total_f = total as f64;

    let mut weights = vec![0.0f64; first.dim()];
    let mut terms = Vec::with_capacity(updates.len());
    for (i, w) in weights.iter_mut().enumerate() {
        let anchor = updates
            .iter()
            .map(|(m, _)| m.weights[i])
            .max_by(f64::total_cmp)
            .expect("updates is non-empty");
        terms.clear();
        terms.extend(updates.iter().map(|(m, n)| (*n as f64) * (m.weights[i] - anchor)));
        terms.sort_unstable_by(f64::total_cmp);
        let sum: f64 = terms.iter().sum();
        // Every term is non-positive, so a zero sum means all weighted
        // models sit exactly at the anchor; returning it directly keeps the
        // average bit-identical, negative zero included.
        *w = if sum == 0.0 { anchor } else { anchor + sum / total_f };
    }

    Ok(SvmModel {
        weights,
        vocab_fingerprint: first.vocab_fingerprint.clone(),
        trained_rounds: updates.iter().map(|(m, _)| m.trained_rounds).max().unwrap_or(0),
    })
}

fn check_clients(clients: &[ClientDataset], cfg: &FedConfig, vocab: &Vocabulary) -> Result<()> {
    if clients.len() != cfg.clients {
        return Err(Error::ConfigInvalid(format!(
            "config declares {} clients but {} datasets were provided",
            cfg.clients,
            clients.len()
        )));
    }
    for c in clients {
        if c.train.is_empty() {
            return Err(Error::ClientTooSmall {
                client: c.client_id,
                reason: "no training examples".into(),
            });
        }
        for ex in c.train.iter().chain(&c.test) {
            if let Some(&last) = ex.indices.last() {
                if last >= vocab.len() {
                    return Err(Error::VocabMismatch(format!(
                        "client {} example {:?} references feature index {last} \
                         outside the vocabulary of size {}",
                        c.client_id,
                        ex.origin_packet_id,
                        vocab.len()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Runs the round loop, invoking `on_round` with each new global model.
/// `on_round` returns true to stop early.
fn drive_rounds(
    clients: &[ClientDataset],
    cfg: &FedConfig,
    vocab: &Vocabulary,
    mut on_round: impl FnMut(usize, &SvmModel, &[usize]) -> Result<bool>,
) -> Result<SvmModel> {
    let mut global = SvmModel::zeros_for(vocab);
    for round in 1..=cfg.rounds_max {
        let mut sample_rng =
            rng_from_seed(derive_seed(cfg.seed, &[TAG_SAMPLE, round as u64]));
        let selected = sample_clients(cfg.clients, cfg.client_fraction, &mut sample_rng);

        let sampled: Vec<(usize, (SvmModel, usize))> = selected
            .par_iter()
            .map(|&k| {
                let hyper = cfg.local_hyper(round, k);
                client_update(&global, &clients[k].train, &hyper)
                    .map(|m| (k, (m, clients[k].n_train())))
            })
            .collect::<Result<_>>()?;

        let updates: Vec<(SvmModel, usize)> = if cfg.average_over_all {
            let mut by_id: BTreeMap<usize, (SvmModel, usize)> = sampled.into_iter().collect();
            (0..cfg.clients)
                .map(|k| {
                    by_id
                        .remove(&k)
                        .unwrap_or_else(|| (global.clone(), clients[k].n_train()))
                })
                .collect()
        } else {
            sampled.into_iter().map(|(_, u)| u).collect()
        };

        let mut next = aggregate(&updates)?;
        next.trained_rounds = round as u32;
        global = next;
        if on_round(round, &global, &selected)? {
            break;
        }
    }
    Ok(global)
}

fn f1_of(model: &SvmModel, test: &[EncodedExample]) -> Result<f64> {
    let mut preds = Vec::with_capacity(test.len());
    let mut truths = Vec::with_capacity(test.len());
    for ex in test {
        preds.push(predict(model, ex)?);
        truths.push(ex.label);
    }
    Ok(confusion(&preds, &truths)?.f1)
}

/// Simulates federated averaging over the given clients.
///
/// Every round is logged with the union-test F1 of the new global model
/// (plus per-client F1 when requested). When `cfg.target_f1` is set, the run
/// stops at the first round that reaches it.
pub fn run_federated(
    clients: &[ClientDataset],
    cfg: &FedConfig,
    vocab: &Vocabulary,
) -> Result<RunResult> {
    cfg.validate()?;
    check_clients(clients, cfg, vocab)?;
    let union_test: Vec<EncodedExample> =
        clients.iter().flat_map(|c| c.test.iter().cloned()).collect();
    if union_test.is_empty() {
        return Err(Error::EmptyInput("union test set is empty".into()));
    }

    let per_client = matches!(cfg.eval_set, EvalSet::PerClientTest | EvalSet::Both);
    let mut logs: Vec<RoundLog> = Vec::new();
    let mut rounds_to_target = None;

    let final_model = drive_rounds(clients, cfg, vocab, |round, model, selected| {
        let started = Instant::now();
        let f1 = f1_of(model, &union_test)?;
        let per_client_f1 = if per_client {
            let mut map = BTreeMap::new();
            for c in clients {
                if !c.test.is_empty() {
                    map.insert(c.client_id, f1_of(model, &c.test)?);
                }
            }
            Some(map)
        } else {
            None
        };
        logs.push(RoundLog {
            round,
            selected_clients: selected.to_vec(),
            global_f1_union: f1,
            per_client_f1,
            wall_time_ms: started.elapsed().as_millis() as u64,
        });
        if let Some(target) = cfg.target_f1 {
            if f1 >= target {
                rounds_to_target = Some(round);
                return Ok(true);
            }
        }
        Ok(false)
    })?;

    Ok(RunResult {
        final_model,
        logs,
        rounds_to_target,
        reached_target: rounds_to_target.is_some(),
    })
}

/// One grid point of a convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub client_fraction: f64,
    pub batch_size: Option<usize>,
    pub epochs: usize,
}

/// Convergence statistics for one grid point across repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub runs: usize,
    /// Rounds-to-target per run; `None` marks a censored run that never
    /// reached the target within `rounds_max`.
    pub rounds: Vec<Option<usize>>,
    pub censored: usize,
    /// Statistics over the converged runs only.
    pub mean_rounds: Option<f64>,
    pub min_rounds: Option<usize>,
    pub max_rounds: Option<usize>,
}

/// Results of a convergence sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rounds_max: usize,
    pub target_f1: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// CSV rendering with one row per grid point. Batch size renders as
    /// `inf` for full-batch; statistics columns are empty when every run was
    /// censored.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "client_fraction,batch_size,epochs,runs,censored,mean_rounds,min_rounds,max_rounds\n",
        );
        for row in &self.rows {
            let batch = row.point.batch_size.map_or("inf".to_string(), |b| b.to_string());
            let mean = row.mean_rounds.map_or(String::new(), |m| m.to_string());
            let min = row.min_rounds.map_or(String::new(), |m| m.to_string());
            let max = row.max_rounds.map_or(String::new(), |m| m.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.point.client_fraction,
                batch,
                row.point.epochs,
                row.runs,
                row.censored,
                mean,
                min,
                max
            ));
        }
        out
    }
}

/// Measures rounds-to-target across a (C, B, E) grid.
///
/// Every grid point is run `runs` times with seeds derived from the base
/// seed and the run index alone, so all grid points see the same run seeds
/// and comparisons across points are paired.
pub fn rounds_to_target_sweep(
    clients: &[ClientDataset],
    vocab: &Vocabulary,
    base: &FedConfig,
    grid: &[SweepPoint],
    runs: usize,
) -> Result<SweepTable> {
    let target = base.target_f1.ok_or_else(|| {
        Error::ConfigInvalid("rounds_to_target_sweep requires target_f1".into())
    })?;
    if runs == 0 {
        return Err(Error::ConfigInvalid("sweep needs at least one run".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for point in grid {
        let mut rounds = Vec::with_capacity(runs);
        for run in 0..runs {
            let cfg = FedConfig {
                client_fraction: point.client_fraction,
                batch_size: point.batch_size,
                epochs: point.epochs,
                seed: derive_seed(base.seed, &[run as u64]),
                ..base.clone()
            };
            let result = run_federated(clients, &cfg, vocab)?;
            rounds.push(result.rounds_to_target);
        }
        let converged: Vec<usize> = rounds.iter().flatten().copied().collect();
        let censored = runs - converged.len();
        rows.push(SweepRow {
            point: *point,
            runs,
            censored,
            mean_rounds: if converged.is_empty() {
                None
            } else {
                Some(converged.iter().sum::<usize>() as f64 / converged.len() as f64)
            },
            min_rounds: converged.iter().min().copied(),
            max_rounds: converged.iter().max().copied(),
            rounds,
        });
    }
    Ok(SweepTable { rounds_max: base.rounds_max, target_f1: target, rows })
}

/// One point of the crowdsourcing curve: federation over the `k` smallest
/// clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrowdPoint {
    /// Number of clients included (smallest first).
    pub clients_included: usize,
    /// Total training examples across the included clients.
    pub train_examples: usize,
    /// Mean over runs of the best F1 on the included clients' union test.
    pub f1_subset_union: f64,
    /// Mean over runs of the best F1 on all clients' union test.
    pub f1_full_union: f64,
}

/// Sweeps federation over growing client subsets, smallest data holders
/// first, reporting for each subset size the best per-run F1 averaged over
/// `runs` seeded runs.
pub fn crowdsourcing_curve(
    clients: &[ClientDataset],
    vocab: &Vocabulary,
    cfg: &FedConfig,
    runs: usize,
) -> Result<Vec<CrowdPoint>> {
    if clients.is_empty() {
        return Err(Error::EmptyInput("crowdsourcing_curve needs clients".into()));
    }
    if runs == 0 {
        return Err(Error::ConfigInvalid("crowdsourcing_curve needs at least one run".into()));
    }
    let mut ordered: Vec<&ClientDataset> = clients.iter().collect();
    ordered.sort_by_key(|c| (c.n_train(), c.client_id));
    let full_union: Vec<EncodedExample> =
        ordered.iter().flat_map(|c| c.test.iter().cloned()).collect();
    if full_union.is_empty() {
        return Err(Error::EmptyInput("union test set is empty".into()));
    }

    let mut curve = Vec::with_capacity(ordered.len());
    for k in 1..=ordered.len() {
        // Clients are re-indexed 0..k so ids match positions in the subset.
        let subset: Vec<ClientDataset> = ordered[..k]
            .iter()
            .enumerate()
            .map(|(i, c)| ClientDataset {
                client_id: i,
                train: c.train.clone(),
                test: c.test.clone(),
            })
            .collect();
        let subset_union: Vec<EncodedExample> =
            subset.iter().flat_map(|c| c.test.iter().cloned()).collect();

        let mut best_subset_sum = 0.0;
        let mut best_full_sum = 0.0;
        for run in 0..runs {
            let run_cfg = FedConfig {
                clients: k,
                client_fraction: 1.0,
                target_f1: None,
                seed: derive_seed(cfg.seed, &[run as u64]),
                ..cfg.clone()
            };
            run_cfg.validate()?;
            check_clients(&subset, &run_cfg, vocab)?;
            let mut best_subset = 0.0f64;
            let mut best_full = 0.0f64;
            drive_rounds(&subset, &run_cfg, vocab, |_round, model, _selected| {
                if !subset_union.is_empty() {
                    best_subset = best_subset.max(f1_of(model, &subset_union)?);
                }
                best_full = best_full.max(f1_of(model, &full_union)?);
                Ok(false)
            })?;
            best_subset_sum += best_subset;
            best_full_sum += best_full;
        }
        curve.push(CrowdPoint {
            clients_included: k,
            train_examples: subset.iter().map(ClientDataset::n_train).sum(),
            f1_subset_union: best_subset_sum / runs as f64,
            f1_full_union: best_full_sum / runs as f64,
        });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_vocabulary, Feature, FeatureMode};
    use std::collections::BTreeSet;

    fn vocab_of(n: usize) -> Vocabulary {
        let set: BTreeSet<Feature> = (0..n).map(|i| Feature::uri_key(format!("k{i:03}"))).collect();
        build_vocabulary(&[set], FeatureMode::HttpKeys, 1)
    }

    fn ex(indices: &[usize], label: i8, id: usize) -> EncodedExample {
        EncodedExample {
            indices: indices.to_vec(),
            label,
            weight: 1.0,
            origin_packet_id: format!("p{id}"),
        }
    }

    fn model(weights: &[f64], fingerprint: &str) -> SvmModel {
        SvmModel {
            weights: weights.to_vec(),
            vocab_fingerprint: fingerprint.to_string(),
            trained_rounds: 1,
        }
    }

    /// A small separable two-feature dataset: feature 0 marks positives,
    /// feature 1 appears everywhere.
    fn planted_client(id: usize, n: usize, vocab_dim: usize) -> ClientDataset {
        assert!(vocab_dim >= 2);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for i in 0..n {
            let positive = i % 2 == 0;
            let indices: Vec<usize> = if positive { vec![0, 1] } else { vec![1] };
            let e = ex(&indices, if positive { 1 } else { -1 }, id * 10_000 + i);
            if i % 5 == 4 {
                test.push(e);
            } else {
                train.push(e);
            }
        }
        ClientDataset { client_id: id, train, test }
    }

    #[test]
    fn sample_size_follows_the_floor_rule() {
        let mut rng = rng_from_seed(1);
        assert_eq!(sample_clients(10, 0.05, &mut rng).len(), 1);
        assert_eq!(sample_clients(5, 1.0, &mut rng), vec![0, 1, 2, 3, 4]);
        let picked = sample_clients(20, 0.2, &mut rng);
        assert_eq!(picked.len(), 4);
        let distinct: BTreeSet<usize> = picked.iter().copied().collect();
        assert_eq!(distinct.len(), 4);
        assert!(picked.windows(2).all(|w| w[0] < w[1]), "ids must be sorted");
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = sample_clients(30, 0.3, &mut rng_from_seed(7));
        let b = sample_clients(30, 0.3, &mut rng_from_seed(7));
        assert_eq!(a, b);
    }

    #[test]
    fn aggregate_weighted_average_matches_hand_value() {
        // (1*1 + 5*3) / 4 = 4.
        let updates = vec![(model(&[1.0], "v"), 1), (model(&[5.0], "v"), 3)];
        let avg = aggregate(&updates).unwrap();
        assert_eq!(avg.weights, vec![4.0]);
    }

    #[test]
    fn aggregate_is_exactly_idempotent() {
        let m = model(&[0.1, -0.7, 1.0 / 3.0, 1e-17, -0.0], "v");
        let updates: Vec<(SvmModel, usize)> =
            (0..7).map(|i| (m.clone(), i + 1)).collect();
        let avg = aggregate(&updates).unwrap();
        for (a, b) in avg.weights.iter().zip(&m.weights) {
            assert_eq!(a.to_bits(), b.to_bits(), "idempotent average must be bit-equal");
        }
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let updates = vec![
            (model(&[0.3, 1.0 / 3.0], "v"), 2),
            (model(&[-0.9, 0.1], "v"), 5),
            (model(&[2.5, -1e-9], "v"), 1),
            (model(&[0.0, 7.7], "v"), 9),
        ];
        let base = aggregate(&updates).unwrap();
        let mut permuted = updates.clone();
        permuted.rotate_left(2);
        permuted.swap(0, 1);
        let other = aggregate(&permuted).unwrap();
        for (a, b) in base.weights.iter().zip(&other.weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn aggregate_single_update_is_returned_verbatim() {
        let m = model(&[0.25, -3.5, 0.1 + 0.2], "v");
        let avg = aggregate(&[(m.clone(), 17)]).unwrap();
        for (a, b) in avg.weights.iter().zip(&m.weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn aggregate_validates_inputs() {
        assert!(matches!(aggregate(&[]), Err(Error::EmptyInput(_))));
        let mixed = vec![(model(&[1.0], "a"), 1), (model(&[1.0], "b"), 1)];
        assert!(matches!(aggregate(&mixed), Err(Error::VocabMismatch(_))));
        let dims = vec![(model(&[1.0], "a"), 1), (model(&[1.0, 2.0], "a"), 1)];
        assert!(matches!(aggregate(&dims), Err(Error::DimensionMismatch(_))));
        let zeros = vec![(model(&[1.0], "a"), 0)];
        assert!(matches!(aggregate(&zeros), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn single_client_federation_learns_the_planted_rule() {
        let vocab = vocab_of(2);
        let clients = vec![planted_client(0, 40, 2)];
        let cfg = FedConfig {
            clients: 1,
            rounds_max: 20,
            eta: 0.5,
            target_f1: Some(1.0),
            ..FedConfig::default()
        };
        let result = run_federated(&clients, &cfg, &vocab).unwrap();
        assert!(result.reached_target);
        assert_eq!(result.logs.last().unwrap().global_f1_union, 1.0);
        assert_eq!(
            result.final_model.trained_rounds as usize,
            result.rounds_to_target.unwrap()
        );
    }

    #[test]
    fn identical_clients_average_to_a_single_update() {
        // With one epoch and full batches a client update is order
        // independent, so identical clients return identical models and the
        // average equals any one of them.
        let vocab = vocab_of(2);
        let template = planted_client(0, 30, 2);
        let clients: Vec<ClientDataset> = (0..4)
            .map(|id| ClientDataset {
                client_id: id,
                train: template.train.clone(),
                test: template.test.clone(),
            })
            .collect();
        let cfg = FedConfig {
            clients: 4,
            rounds_max: 1,
            eta: 0.3,
            ..FedConfig::default()
        };
        let fed = run_federated(&clients, &cfg, &vocab).unwrap();

        let single = client_update(
            &SvmModel::zeros_for(&vocab),
            &template.train,
            &Hyperparams { eta: 0.3, ..Hyperparams::default() },
        )
        .unwrap();
        for (a, b) in fed.final_model.weights.iter().zip(&single.weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn logs_cover_every_round_until_stop() {
        let vocab = vocab_of(2);
        let clients = vec![planted_client(0, 40, 2), planted_client(1, 40, 2)];
        let cfg = FedConfig {
            clients: 2,
            rounds_max: 5,
            eval_set: EvalSet::Both,
            ..FedConfig::default()
        };
        let result = run_federated(&clients, &cfg, &vocab).unwrap();
        assert_eq!(result.logs.len(), 5);
        for (i, log) in result.logs.iter().enumerate() {
            assert_eq!(log.round, i + 1);
            assert_eq!(log.selected_clients, vec![0, 1]);
            let per_client = log.per_client_f1.as_ref().unwrap();
            assert_eq!(per_client.len(), 2);
        }
        assert!(!result.reached_target);
        assert_eq!(result.rounds_to_target, None);
    }

    #[test]
    fn zero_target_stops_after_one_round() {
        let vocab = vocab_of(2);
        let clients = vec![planted_client(0, 40, 2)];
        let cfg = FedConfig {
            clients: 1,
            rounds_max: 50,
            target_f1: Some(0.0),
            ..FedConfig::default()
        };
        let result = run_federated(&clients, &cfg, &vocab).unwrap();
        assert_eq!(result.rounds_to_target, Some(1));
        assert_eq!(result.logs.len(), 1);
    }

    #[test]
    fn federation_is_deterministic_across_thread_counts() {
        let vocab = vocab_of(2);
        let clients: Vec<ClientDataset> =
            (0..6).map(|id| planted_client(id, 30 + id, 2)).collect();
        let cfg = FedConfig {
            clients: 6,
            client_fraction: 0.5,
            batch_size: Some(4),
            epochs: 2,
            rounds_max: 8,
            seed: 42,
            eval_set: EvalSet::Both,
            ..FedConfig::default()
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_federated(&clients, &cfg, &vocab)).unwrap()
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.final_model, b.final_model);
        assert_eq!(a.logs, b.logs);
    }

    #[test]
    fn run_federated_validates_inputs() {
        let vocab = vocab_of(2);
        let clients = vec![planted_client(0, 40, 2)];
        let wrong_count = FedConfig { clients: 3, ..FedConfig::default() };
        assert!(matches!(
            run_federated(&clients, &wrong_count, &vocab),
            Err(Error::ConfigInvalid(_))
        ));

        let empty_train = vec![ClientDataset {
            client_id: 0,
            train: vec![],
            test: vec![ex(&[0], 1, 0)],
        }];
        assert!(matches!(
            run_federated(&empty_train, &FedConfig::default(), &vocab),
            Err(Error::ClientTooSmall { client: 0, .. })
        ));

        let oob = vec![ClientDataset {
            client_id: 0,
            train: vec![ex(&[5], 1, 0)],
            test: vec![ex(&[0], 1, 1)],
        }];
        assert!(matches!(
            run_federated(&oob, &FedConfig::default(), &vocab),
            Err(Error::VocabMismatch(_))
        ));
    }

    #[test]
    fn sweep_reports_stats_over_converged_runs() {
        let vocab = vocab_of(2);
        let clients = vec![planted_client(0, 40, 2), planted_client(1, 40, 2)];
        let base = FedConfig {
            clients: 2,
            rounds_max: 30,
            eta: 0.5,
            target_f1: Some(1.0),
            ..FedConfig::default()
        };
        let grid = [
            SweepPoint { client_fraction: 1.0, batch_size: None, epochs: 1 },
            SweepPoint { client_fraction: 0.5, batch_size: Some(8), epochs: 2 },
        ];
        let table = rounds_to_target_sweep(&clients, &vocab, &base, &grid, 3).unwrap();
        assert_eq!(table.rows.len(), 2);
        for row in &table.rows {
            assert_eq!(row.runs, 3);
            assert_eq!(row.rounds.len(), 3);
            assert_eq!(row.censored, 0, "planted data must converge: {row:?}");
            let sum: usize = row.rounds.iter().flatten().sum();
            let mean = sum as f64 / 3.0;
            assert_eq!(row.mean_rounds, Some(mean));
            assert!(row.min_rounds.unwrap() <= row.max_rounds.unwrap());
        }
        let csv = table.to_csv();
        assert!(csv.starts_with("client_fraction,"));
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains(",inf,"));
    }

    #[test]
    fn sweep_single_run_mean_equals_the_run() {
        let vocab = vocab_of(2);
        let clients = vec![planted_client(0, 40, 2)];
        let base = FedConfig {
            clients: 1,
            rounds_max: 30,
            eta: 0.5,
            target_f1: Some(0.9),
            ..FedConfig::default()
        };
        let grid = [SweepPoint { client_fraction: 1.0, batch_size: None, epochs: 1 }];
        let table = rounds_to_target_sweep(&clients, &vocab, &base, &grid, 1).unwrap();
        let row = &table.rows[0];
        let only = row.rounds[0].unwrap();
        assert_eq!(row.mean_rounds, Some(only as f64));
        assert_eq!(row.min_rounds, Some(only));
        assert_eq!(row.max_rounds, Some(only));
    }

    #[test]
    fn sweep_requires_a_target() {
        let vocab = vocab_of(2);
        let clients = vec![planted_client(0, 40, 2)];
        let base = FedConfig { clients: 1, ..FedConfig::default() };
        let grid = [SweepPoint { client_fraction: 1.0, batch_size: None, epochs: 1 }];
        assert!(matches!(
            rounds_to_target_sweep(&clients, &vocab, &base, &grid, 2),
            Err(Error::ConfigInvalid(_))
        ));
    }

    #[test]
    fn crowdsourcing_curve_orders_clients_and_converges_to_full_federation() {
        let vocab = vocab_of(2);
        let clients: Vec<ClientDataset> = vec![
            planted_client(0, 50, 2),
            planted_client(1, 20, 2),
            planted_client(2, 35, 2),
        ];
        let cfg = FedConfig {
            clients: 3,
            rounds_max: 10,
            eta: 0.5,
            seed: 5,
            ..FedConfig::default()
        };
        let curve = crowdsourcing_curve(&clients, &vocab, &cfg, 2).unwrap();
        assert_eq!(curve.len(), 3);
        assert_eq!(curve[0].clients_included, 1);
        // Included train counts grow with k, smallest client first.
        assert!(curve[0].train_examples < curve[1].train_examples);
        assert!(curve[1].train_examples < curve[2].train_examples);
        // At k = K the subset union and the full union coincide.
        let last = curve.last().unwrap();
        assert_eq!(last.f1_subset_union, last.f1_full_union);
        // Planted data is separable, so full federation ends near perfect.
        assert!(last.f1_full_union > 0.95);
    }
}
