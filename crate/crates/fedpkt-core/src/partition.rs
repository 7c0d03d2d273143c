//! Dataset partitioning: class balancing, train/test splits, and spreading
//! examples across simulated clients.
//!
//! Every operation takes an explicit seed and is deterministic for a given
//! (input, seed) pair. Splits preserve the input multiset exactly: no example
//! is duplicated or lost.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::EncodedExample;
use crate::rng::rng_from_seed;

/// How examples are distributed across clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Near-equal shares (sizes differ by at most one).
    Even,
    /// Random proportions drawn per client, bounded below by `min_frac`
    /// of an even share.
    Uneven,
}

/// Declarative description of how to build per-client datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Number of clients (K).
    pub clients: usize,
    pub mode: SplitMode,
    /// Uneven mode: every client receives at least `min_frac` of an even
    /// share.
    pub min_frac: f64,
    /// Fraction of each client's examples used for training.
    pub train_frac: f64,
    /// Undersample the majority class in each training split.
    pub balance: bool,
    /// Also balance test splits; off by default so test sets keep the
    /// natural class skew.
    pub balance_test: bool,
}

impl Default for SplitSpec {
    fn default() -> SplitSpec {
        SplitSpec {
            clients: 1,
            mode: SplitMode::Even,
            min_frac: 0.3,
            train_frac: 0.8,
            balance: true,
            balance_test: false,
        }
    }
}

/// One simulated client's local data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: usize,
    pub train: Vec<EncodedExample>,
    pub test: Vec<EncodedExample>,
}

impl ClientDataset {
    /// Number of local training examples (the federation weight n_k).
    pub fn n_train(&self) -> usize {
        self.train.len()
    }
}

/// Undersamples the majority class to the minority class size.
///
/// The minority class is kept whole; a seeded shuffle picks which majority
/// examples survive, and the combined result is reshuffled so classes
/// interleave.
pub fn balance(examples: &[EncodedExample], seed: u64) -> Result<Vec<EncodedExample>> {
    let mut pos: Vec<&EncodedExample> = examples.iter().filter(|e| e.label > 0).collect();
    let mut neg: Vec<&EncodedExample> = examples.iter().filter(|e| e.label <= 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass(format!(
            "balance needs both classes, got {} positive / {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let keep = pos.len().min(neg.len());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut out: Vec<EncodedExample> =
        pos.into_iter().take(keep).chain(neg.into_iter().take(keep)).cloned().collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// Splits examples into train and test parts. The train part receives
/// `round(train_frac * n)` examples after a seeded shuffle.
pub fn train_test_split(
    examples: &[EncodedExample],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<EncodedExample>, Vec<EncodedExample>)> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("train_test_split got no examples".into()));
    }
    if !(0.0..=1.0).contains(&train_frac) {
        return Err(Error::ConfigInvalid(format!(
            "train_frac must be within [0, 1], got {train_frac}"
        )));
    }
    let mut shuffled: Vec<EncodedExample> = examples.to_vec();
    shuffled.shuffle(&mut rng_from_seed(seed));
    let n_train = ((train_frac * examples.len() as f64).round() as usize).min(examples.len());
    let test = shuffled.split_off(n_train);
    Ok((shuffled, test))
}

fn validate_client_count(examples: usize, clients: usize) -> Result<()> {
    if clients == 0 {
        return Err(Error::ConfigInvalid("client count must be at least 1".into()));
    }
    if clients > examples {
        return Err(Error::TooManyClients { clients, examples });
    }
    Ok(())
}

/// Distributes examples across `clients` near-equal shares: a seeded shuffle
/// followed by round-robin assignment, so shares differ in size by at most
/// one.
pub fn split_even(
    examples: &[EncodedExample],
    clients: usize,
    seed: u64,
) -> Result<Vec<Vec<EncodedExample>>> {
    validate_client_count(examples.len(), clients)?;
    let mut shuffled: Vec<EncodedExample> = examples.to_vec();
    shuffled.shuffle(&mut rng_from_seed(seed));
    let mut shares: Vec<Vec<EncodedExample>> = (0..clients)
        .map(|i| Vec::with_capacity(examples.len() / clients + usize::from(i == 0)))
        .collect();
    for (i, ex) in shuffled.into_iter().enumerate() {
        shares[i % clients].push(ex);
    }
    Ok(shares)
}

/// Distributes examples across clients with random share sizes.
///
/// Proportions are drawn as `p_i = min_frac/k + (1 - min_frac) * u_i / sum(u)`
/// with seeded uniform draws, so every client holds at least `min_frac` of an
/// even share and `min_frac = 1` degenerates to the even split. Counts come
/// from the proportions by largest-remainder rounding, with a final
/// adjustment that keeps every share non-empty.
pub fn split_uneven(
    examples: &[EncodedExample],
    clients: usize,
    min_frac: f64,
    seed: u64,
) -> Result<Vec<Vec<EncodedExample>>> {
    validate_client_count(examples.len(), clients)?;
    if !(0.0..=1.0).contains(&min_frac) {
        return Err(Error::InfeasibleSpec(format!(
            "min_frac must be within [0, 1], got {min_frac}"
        )));
    }
    let n = examples.len();
    let k = clients;
    let mut rng = rng_from_seed(seed);
    let draws: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-12).collect();
    let total: f64 = draws.iter().sum();
    let proportions: Vec<f64> =
        draws.iter().map(|u| min_frac / k as f64 + (1.0 - min_frac) * u / total).collect();

    let mut counts = apportion(&proportions, n);
    // Largest-remainder rounding can zero out a tiny share; feasibility
    // (k <= n) guarantees we can top it up from the largest share.
    loop {
        let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
        let richest = (0..k).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
        counts[empty] += 1;
        counts[richest] -= 1;
    }

    let mut shuffled: Vec<EncodedExample> = examples.to_vec();
    shuffled.shuffle(&mut rng);
    let mut shares = Vec::with_capacity(k);
    let mut rest = shuffled;
    for &c in &counts {
        let tail = rest.split_off(c);
        shares.push(rest);
        rest = tail;
    }
    debug_assert!(rest.is_empty());
    Ok(shares)
}

/// Rounds fractional shares `p_i * n` to integers summing to `n` by the
/// largest-remainder method; ties break toward lower indices.
fn apportion(proportions: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Splits examples according to `spec.mode`.
pub fn split_examples(
    examples: &[EncodedExample],
    spec: &SplitSpec,
    seed: u64,
) -> Result<Vec<Vec<EncodedExample>>> {
    match spec.mode {
        SplitMode::Even => split_even(examples, spec.clients, seed),
        SplitMode::Uneven => split_uneven(examples, spec.clients, spec.min_frac, seed),
    }
}
