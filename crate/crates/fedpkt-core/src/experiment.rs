//! End-to-end experiment orchestration: packets in, comparable reports out.
//!
//! An experiment fixes a labeling task, a feature configuration, a client
//! split, and a model family, then repeats training across seeded runs and
//! aggregates the metrics. All randomness is derived from the experiment
//! seed, so rerunning a spec reproduces the report exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{confusion, EvalReport};
use crate::features::{
    build_recon_stopwords, build_vocabulary, encode, extract_features, Feature, FeatureMode,
    StandardHeaders, Vocabulary,
};
use crate::fed::{run_federated, EvalSet, FedConfig, RoundLog};
use crate::features::EncodedExample;
use crate::partition::{balance, split_examples, train_test_split, ClientDataset, SplitSpec};
use crate::rng::derive_seed;
use crate::svm::{predict, train_centralized, Hyperparams, SvmModel};
use crate::trace::HttpPacket;
use crate::tree::{knowledge_transfer, train_tree, DecisionTree, TransferOutcome, TreeParams};

/// Which label an experiment predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Personal information exposure.
    Pii,
    /// Advertising or tracking request.
    Ad,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Pii => "pii",
            Task::Ad => "ad",
        }
    }

    /// The packet's label for this task, when present.
    pub fn label_of(&self, packet: &HttpPacket) -> Option<bool> {
        match self {
            Task::Pii => packet.labels.pii,
            Task::Ad => packet.labels.ad,
        }
    }
}

/// Training regimes an experiment can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// One SVM per client on its own data.
    Local,
    /// One SVM on the union of all clients' training data.
    Centralized,
    /// Federated averaging, reported next to local and centralized
    /// baselines trained on the same split.
    Federated,
    /// A decision tree on the union training data.
    Dtree,
    /// SVM teacher distilled into a decision tree student.
    KnowledgeTransfer,
}

impl ModelFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelFamily::Local => "local",
            ModelFamily::Centralized => "centralized",
            ModelFamily::Federated => "federated",
            ModelFamily::Dtree => "dtree",
            ModelFamily::KnowledgeTransfer => "knowledge_transfer",
        }
    }
}

/// Feature extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    /// Keep bare GET fetches as a one-flag example; disabling this drops
    /// them from training entirely.
    pub include_file_request: bool,
    /// Minimum document frequency for a feature to enter the vocabulary.
    pub min_df: usize,
    /// Fraction of most frequent words treated as stopwords in word mode.
    pub stopword_top_fraction: f64,
}

impl Default for FeatureConfig {
    fn default() -> FeatureConfig {
        FeatureConfig {
            mode: FeatureMode::HttpKeys,
            include_file_request: true,
            min_df: 1,
            stopword_top_fraction: 0.01,
        }
    }
}

/// Federation settings layered on top of the shared hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedOptions {
    pub client_fraction: f64,
    pub rounds_max: usize,
    pub target_f1: Option<f64>,
    pub eval_set: EvalSet,
    pub average_over_all: bool,
}

impl Default for FedOptions {
    fn default() -> FedOptions {
        FedOptions {
            client_fraction: 1.0,
            rounds_max: 100,
            target_f1: None,
            eval_set: EvalSet::UnionTest,
            average_over_all: false,
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task: Task,
    /// Restrict the trace to one app before anything else happens.
    pub app_filter: Option<String>,
    pub features: FeatureConfig,
    pub split: SplitSpec,
    pub family: ModelFamily,
    /// Shared optimizer settings; the seed field is ignored in favor of
    /// per-run derived seeds.
    pub hyper: Hyperparams,
    /// Training passes for local, centralized, and teacher models.
    pub passes: usize,
    pub fed: FedOptions,
    pub tree: TreeParams,
    /// Independent seeded repetitions to average over.
    pub runs: usize,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> ExperimentSpec {
        ExperimentSpec {
            task: Task::Pii,
            app_filter: None,
            features: FeatureConfig::default(),
            split: SplitSpec::default(),
            family: ModelFamily::Centralized,
            hyper: Hyperparams::default(),
            passes: 20,
            fed: FedOptions::default(),
            tree: TreeParams::default(),
            runs: 1,
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::ConfigInvalid("runs must be at least 1".into()));
        }
        if self.passes == 0 {
            return Err(Error::ConfigInvalid("passes must be at least 1".into()));
        }
        if self.features.min_df == 0 {
            return Err(Error::ConfigInvalid("min_df must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.features.stopword_top_fraction) {
            return Err(Error::ConfigInvalid(format!(
                "stopword_top_fraction must be within [0, 1], got {}",
                self.features.stopword_top_fraction
            )));
        }
        self.hyper.validate()?;
        self.tree.validate()?;
        Ok(())
    }
}

/// What happened between raw packets and encoded examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrepStats {
    pub packets_total: usize,
    /// Packets without a label for the task.
    pub unlabeled: usize,
    /// Labeled packets with no extractable features.
    pub keyless: usize,
    /// Labeled bare file fetches dropped because the flag is disabled.
    pub file_request_only_excluded: usize,
    pub admitted: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Feature occurrences dropped by the document-frequency floor.
    pub features_dropped: usize,
}

/// Extracts features from labeled packets and encodes them against a
/// vocabulary built from the admitted examples.
///
/// Packets are dropped when they lack a label for the task, when extraction
/// finds no features, or, with the file-request flag disabled, when the bare
/// flag is all they would carry. Word-mode stopwords are computed over every
/// input packet, labeled or not.
pub fn prepare_examples(
    packets: &[HttpPacket],
    task: Task,
    config: &FeatureConfig,
) -> Result<(Vocabulary, Vec<EncodedExample>, PrepStats)> {
    if packets.is_empty() {
        return Err(Error::EmptyInput("no packets to prepare".into()));
    }
    let std = StandardHeaders::bundled();
    let stopwords = match config.mode {
        FeatureMode::ReconWords => {
            build_recon_stopwords(packets, std, config.stopword_top_fraction)
        }
        FeatureMode::HttpKeys | FeatureMode::AllWords => std::collections::BTreeSet::new(),
    };

    let mut stats = PrepStats { packets_total: packets.len(), ..PrepStats::default() };
    let mut admitted: Vec<(&HttpPacket, bool, std::collections::BTreeSet<Feature>)> = Vec::new();
    for packet in packets {
        let Some(label) = task.label_of(packet) else {
            stats.unlabeled += 1;
            continue;
        };
        let features = extract_features(packet, config.mode, std, &stopwords);
        if features.is_empty() {
            stats.keyless += 1;
            continue;
        }
        if !config.include_file_request
            && features.len() == 1
            && features.contains(&Feature::file_request())
        {
            stats.file_request_only_excluded += 1;
            continue;
        }
        admitted.push((packet, label, features));
    }
    if admitted.is_empty() {
        return Err(Error::EmptyInput(
            "no labeled packets with features remain after filtering".into(),
        ));
    }

    let sets: Vec<std::collections::BTreeSet<Feature>> =
        admitted.iter().map(|(_, _, f)| f.clone()).collect();
    let vocab = build_vocabulary(&sets, config.mode, config.min_df);
    if vocab.is_empty() {
        return Err(Error::EmptyInput(
            "vocabulary is empty; lower min_df or provide more packets".into(),
        ));
    }

    let mut examples = Vec::with_capacity(admitted.len());
    for (packet, label, features) in &admitted {
        let (example, dropped) = encode(features, *label, &vocab, &packet.id);
        stats.features_dropped += dropped;
        if *label {
            stats.positives += 1;
        } else {
            stats.negatives += 1;
        }
        examples.push(example);
    }
    stats.admitted = examples.len();
    Ok((vocab, examples, stats))
}

/// Splits a pool into per-client train/test sets, balancing classes where
/// the split spec asks for it.
pub fn build_client_datasets(
    pool: &[EncodedExample],
    split: &SplitSpec,
    seed: u64,
) -> Result<Vec<ClientDataset>> {
    let shards = split_examples(pool, split, derive_seed(seed, &[1]))?;
    let mut clients = Vec::with_capacity(shards.len());
    for (k, shard) in shards.into_iter().enumerate() {
        let (mut train, mut test) =
            train_test_split(&shard, split.train_frac, derive_seed(seed, &[2, k as u64]))?;
        if split.balance {
            train = balance(&train, derive_seed(seed, &[3, k as u64])).map_err(|e| {
                Error::ClientTooSmall { client: k, reason: e.to_string() }
            })?;
        }
        if split.balance_test {
            test = balance(&test, derive_seed(seed, &[4, k as u64])).map_err(|e| {
                Error::ClientTooSmall { client: k, reason: e.to_string() }
            })?;
        }
        if train.is_empty() {
            return Err(Error::ClientTooSmall {
                client: k,
                reason: "no training examples after splitting".into(),
            });
        }
        if test.is_empty() {
            return Err(Error::ClientTooSmall {
                client: k,
                reason: "no test examples after splitting".into(),
            });
        }
        clients.push(ClientDataset { client_id: k, train, test });
    }
    Ok(clients)
}

/// One metric row of a report: a (training data, test data) pairing averaged
/// over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trained_on: String,
    pub tested_on: String,
    pub runs: usize,
    pub mean_f1: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub per_run_f1: Vec<f64>,
}

/// Convergence summary for federated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundsSummary {
    pub rounds_max: usize,
    pub target_f1: Option<f64>,
    pub converged_runs: usize,
    pub censored_runs: usize,
    pub mean_rounds_to_target: Option<f64>,
    /// Mean over runs of the last round's union-test F1.
    pub mean_final_f1: f64,
    /// Mean over runs of the best union-test F1 seen in any round.
    pub mean_best_f1: f64,
}

/// Size summary for tree models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub mean_nodes: f64,
    pub mean_leaves: f64,
    pub mean_depth: f64,
}

/// Distillation summary, averaged over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub teacher_f1: f64,
    pub student_f1: f64,
    pub direct_f1: f64,
    pub fidelity: f64,
    pub student_nodes: f64,
    pub direct_nodes: f64,
}

pub const REPORT_SCHEMA: &str = "fedpkt-report/1";

/// Aggregated results of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub task: Task,
    pub family: ModelFamily,
    pub feature_mode: FeatureMode,
    pub runs: usize,
    pub seed: u64,
    pub vocab_size: usize,
    pub prep: PrepStats,
    pub rows: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<RoundsSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferSummary>,
}

/// Per-run artifacts a caller may want to persist.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub run_index: usize,
    pub seed: u64,
    pub round_logs: Option<Vec<RoundLog>>,
    pub final_model: Option<SvmModel>,
    pub tree: Option<DecisionTree>,
    pub transfer: Option<TransferOutcome>,
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub vocab: Vocabulary,
    pub runs: Vec<RunArtifacts>,
}

fn eval_svm(model: &SvmModel, test: &[EncodedExample]) -> Result<EvalReport> {
    let preds: Vec<i8> = test.iter().map(|e| predict(model, e)).collect::<Result<_>>()?;
    let truths: Vec<i8> = test.iter().map(|e| e.label).collect();
    confusion(&preds, &truths)
}

fn eval_tree(tree: &DecisionTree, test: &[EncodedExample]) -> Result<EvalReport> {
    let preds: Vec<i8> = test.iter().map(|e| tree.predict(e)).collect::<Result<_>>()?;
    let truths: Vec<i8> = test.iter().map(|e| e.label).collect();
    confusion(&preds, &truths)
}

/// Accumulates (trained_on, tested_on) -> per-run (f1, precision, recall).
#[derive(Default)]
struct RowAcc {
    cells: BTreeMap<(String, String), Vec<(f64, f64, f64)>>,
}

impl RowAcc {
    fn push(&mut self, trained: &str, tested: &str, report: &EvalReport) {
        self.push_raw(trained, tested, (report.f1, report.precision, report.recall));
    }

    fn push_raw(&mut self, trained: &str, tested: &str, metrics: (f64, f64, f64)) {
        self.cells
            .entry((trained.to_string(), tested.to_string()))
            .or_default()
            .push(metrics);
    }

    fn into_rows(self) -> Vec<ReportRow> {
        self.cells
            .into_iter()
            .map(|((trained_on, tested_on), metrics)| {
                let n = metrics.len() as f64;
                ReportRow {
                    trained_on,
                    tested_on,
                    runs: metrics.len(),
                    mean_f1: metrics.iter().map(|m| m.0).sum::<f64>() / n,
                    mean_precision: metrics.iter().map(|m| m.1).sum::<f64>() / n,
                    mean_recall: metrics.iter().map(|m| m.2).sum::<f64>() / n,
                    per_run_f1: metrics.iter().map(|m| m.0).collect(),
                }
            })
            .collect()
    }
}

fn client_label(k: usize) -> String {
    format!("local client {k:02}")
}

/// Trains per-client models and records their own-test metrics plus a
/// per-run mean row.
fn run_local_block(
    clients: &[ClientDataset],
    vocab: &Vocabulary,
    hyper: &Hyperparams,
    passes: usize,
    run_seed: u64,
    rows: &mut RowAcc,
) -> Result<()> {
    let mut sums = (0.0, 0.0, 0.0);
    for c in clients {
        let h = Hyperparams {
            seed: derive_seed(run_seed, &[5, c.client_id as u64]),
            ..hyper.clone()
        };
        let model = train_centralized(&c.train, vocab, &h, passes)?;
        let report = eval_svm(&model, &c.test)?;
        rows.push(&client_label(c.client_id), "own test", &report);
        sums.0 += report.f1;
        sums.1 += report.precision;
        sums.2 += report.recall;
    }
    let n = clients.len() as f64;
    rows.push_raw(
        "local clients (mean)",
        "own test",
        (sums.0 / n, sums.1 / n, sums.2 / n),
    );
    Ok(())
}

fn run_centralized_block(
    union_train: &[EncodedExample],
    union_test: &[EncodedExample],
    vocab: &Vocabulary,
    hyper: &Hyperparams,
    passes: usize,
    run_seed: u64,
    rows: &mut RowAcc,
) -> Result<SvmModel> {
    let h = Hyperparams { seed: derive_seed(run_seed, &[6]), ..hyper.clone() };
    let model = train_centralized(union_train, vocab, &h, passes)?;
    let report = eval_svm(&model, union_test)?;
    rows.push("centralized", "union test", &report);
    Ok(model)
}

/// Runs the experiment described by `spec` over the given packets.
pub fn run_experiment(packets: &[HttpPacket], spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let filtered: Vec<HttpPacket> = match &spec.app_filter {
        Some(app) => packets.iter().filter(|p| &p.app == app).cloned().collect(),
        None => packets.to_vec(),
    };
    if filtered.is_empty() {
        return Err(Error::EmptyInput(match &spec.app_filter {
            Some(app) => format!("no packets remain for app {app:?}"),
            None => "no packets in the trace".into(),
        }));
    }
    let (vocab, pool, prep) = prepare_examples(&filtered, spec.task, &spec.features)?;

    let mut rows = RowAcc::default();
    let mut artifacts = Vec::with_capacity(spec.runs);
    let mut fed_stats: Vec<(Option<usize>, f64, f64)> = Vec::new();
    let mut tree_stats: Vec<(usize, usize, usize)> = Vec::new();
    let mut transfer_stats: Vec<(f64, f64, f64, f64, usize, usize)> = Vec::new();

    for run in 0..spec.runs {
        let run_seed = derive_seed(spec.seed, &[run as u64]);
        let mut art = RunArtifacts {
            run_index: run,
            seed: run_seed,
            round_logs: None,
            final_model: None,
            tree: None,
            transfer: None,
        };

        match spec.family {
            ModelFamily::KnowledgeTransfer => {
                let outcome = knowledge_transfer(
                    &pool,
                    &vocab,
                    &spec.hyper,
                    spec.passes,
                    &spec.tree,
                    run_seed,
                )?;
                rows.push_raw(
                    "svm teacher",
                    "held-out",
                    (outcome.teacher_f1, f64::NAN, f64::NAN),
                );
                transfer_stats.push((
                    outcome.teacher_f1,
                    outcome.student_f1,
                    outcome.direct_f1,
                    outcome.fidelity,
                    outcome.student.node_count(),
                    outcome.direct.node_count(),
                ));
                art.transfer = Some(outcome);
            }
            _ => {
                let clients = build_client_datasets(&pool, &spec.split, run_seed)?;
                let union_train: Vec<EncodedExample> =
                    clients.iter().flat_map(|c| c.train.iter().cloned()).collect();
                let union_test: Vec<EncodedExample> =
                    clients.iter().flat_map(|c| c.test.iter().cloned()).collect();

                match spec.family {
                    ModelFamily::Local => {
                        run_local_block(
                            &clients, &vocab, &spec.hyper, spec.passes, run_seed, &mut rows,
                        )?;
                    }
                    ModelFamily::Centralized => {
                        let model = run_centralized_block(
                            &union_train,
                            &union_test,
                            &vocab,
                            &spec.hyper,
                            spec.passes,
                            run_seed,
                            &mut rows,
                        )?;
                        art.final_model = Some(model);
                    }
                    ModelFamily::Federated => {
                        run_local_block(
                            &clients, &vocab, &spec.hyper, spec.passes, run_seed, &mut rows,
                        )?;
                        run_centralized_block(
                            &union_train,
                            &union_test,
                            &vocab,
                            &spec.hyper,
                            spec.passes,
                            run_seed,
                            &mut rows,
                        )?;
                        let cfg = FedConfig {
                            clients: clients.len(),
                            client_fraction: spec.fed.client_fraction,
                            batch_size: spec.hyper.batch_size,
                            epochs: spec.hyper.epochs,
                            rounds_max: spec.fed.rounds_max,
                            eta: spec.hyper.eta,
                            lambda: spec.hyper.lambda,
                            seed: run_seed,
                            target_f1: spec.fed.target_f1,
                            eval_set: spec.fed.eval_set,
                            average_over_all: spec.fed.average_over_all,
                        };
                        let result = run_federated(&clients, &cfg, &vocab)?;
                        let report = eval_svm(&result.final_model, &union_test)?;
                        rows.push("federated", "union test", &report);
                        let final_f1 =
                            result.logs.last().map_or(0.0, |l| l.global_f1_union);
                        let best_f1 = result
                            .logs
                            .iter()
                            .map(|l| l.global_f1_union)
                            .fold(0.0, f64::max);
                        fed_stats.push((result.rounds_to_target, final_f1, best_f1));
                        art.round_logs = Some(result.logs);
                        art.final_model = Some(result.final_model);
                    }
                    ModelFamily::Dtree => {
                        let tree = train_tree(&union_train, &vocab, &spec.tree)?;
                        let report = eval_tree(&tree, &union_test)?;
                        rows.push("decision tree", "union test", &report);
                        tree_stats.push((tree.node_count(), tree.leaf_count(), tree.depth()));
                        art.tree = Some(tree);
                    }
                    ModelFamily::KnowledgeTransfer => unreachable!("handled above"),
                }
            }
        }
        artifacts.push(art);
    }

    let rounds = if fed_stats.is_empty() {
        None
    } else {
        let converged: Vec<usize> = fed_stats.iter().filter_map(|s| s.0).collect();
        let n = fed_stats.len() as f64;
        Some(RoundsSummary {
            rounds_max: spec.fed.rounds_max,
            target_f1: spec.fed.target_f1,
            converged_runs: converged.len(),
            censored_runs: fed_stats.len() - converged.len(),
            mean_rounds_to_target: if converged.is_empty() {
                None
            } else {
                Some(converged.iter().sum::<usize>() as f64 / converged.len() as f64)
            },
            mean_final_f1: fed_stats.iter().map(|s| s.1).sum::<f64>() / n,
            mean_best_f1: fed_stats.iter().map(|s| s.2).sum::<f64>() / n,
        })
    };
    let tree = if tree_stats.is_empty() {
        None
    } else {
        let n = tree_stats.len() as f64;
        Some(TreeSummary {
            mean_nodes: tree_stats.iter().map(|s| s.0).sum::<usize>() as f64 / n,
            mean_leaves: tree_stats.iter().map(|s| s.1).sum::<usize>() as f64 / n,
            mean_depth: tree_stats.iter().map(|s| s.2).sum::<usize>() as f64 / n,
        })
    };
    let transfer = if transfer_stats.is_empty() {
        None
    } else {
        let n = transfer_stats.len() as f64;
        Some(TransferSummary {
            teacher_f1: transfer_stats.iter().map(|s| s.0).sum::<f64>() / n,
            student_f1: transfer_stats.iter().map(|s| s.1).sum::<f64>() / n,
            direct_f1: transfer_stats.iter().map(|s| s.2).sum::<f64>() / n,
            fidelity: transfer_stats.iter().map(|s| s.3).sum::<f64>() / n,
            student_nodes: transfer_stats.iter().map(|s| s.4).sum::<usize>() as f64 / n,
            direct_nodes: transfer_stats.iter().map(|s| s.5).sum::<usize>() as f64 / n,
        })
    };

    // Teacher precision/recall are not tracked per slice; strip the
    // placeholder row when a transfer summary is present.
    let rows: Vec<ReportRow> = rows
        .into_rows()
        .into_iter()
        .filter(|r| !(spec.family == ModelFamily::KnowledgeTransfer && r.mean_f1.is_nan()))
        .collect();
    let rows = if spec.family == ModelFamily::KnowledgeTransfer {
        let summary = transfer.as_ref().expect("transfer family always summarizes");
        vec![
            ReportRow {
                trained_on: "svm teacher".into(),
                tested_on: "held-out".into(),
                runs: spec.runs,
                mean_f1: summary.teacher_f1,
                mean_precision: f64::NAN,
                mean_recall: f64::NAN,
                per_run_f1: transfer_stats.iter().map(|s| s.0).collect(),
            },
            ReportRow {
                trained_on: "tree student".into(),
                tested_on: "held-out".into(),
                runs: spec.runs,
                mean_f1: summary.student_f1,
                mean_precision: f64::NAN,
                mean_recall: f64::NAN,
                per_run_f1: transfer_stats.iter().map(|s| s.1).collect(),
            },
            ReportRow {
                trained_on: "tree direct".into(),
                tested_on: "held-out".into(),
                runs: spec.runs,
                mean_f1: summary.direct_f1,
                mean_precision: f64::NAN,
                mean_recall: f64::NAN,
                per_run_f1: transfer_stats.iter().map(|s| s.2).collect(),
            },
        ]
    } else {
        rows
    };

    Ok(ExperimentOutput {
        report: ExperimentReport {
            schema: REPORT_SCHEMA.to_string(),
            task: spec.task,
            family: spec.family,
            feature_mode: spec.features.mode,
            runs: spec.runs,
            seed: spec.seed,
            vocab_size: vocab.len(),
            prep,
            rows,
            rounds,
            tree,
            transfer,
        },
        vocab,
        runs: artifacts,
    })
}

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "-".to_string()
    } else {
        format!("{v:.4}")
    }
}

/// Pretty JSON rendering of a report, newline terminated.
pub fn report_to_json(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialization is infallible");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str) -> Result<ExperimentReport> {
    let report: ExperimentReport = serde_json::from_str(text)?;
    if report.schema != REPORT_SCHEMA {
        return Err(Error::ConfigInvalid(format!(
            "unsupported report schema {:?}, expected {REPORT_SCHEMA:?}",
            report.schema
        )));
    }
    Ok(report)
}

/// CSV rendering of the metric rows.
pub fn report_to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("trained_on,tested_on,runs,mean_f1,mean_precision,mean_recall\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            crate::eval::csv_field(&row.trained_on),
            crate::eval::csv_field(&row.tested_on),
            row.runs,
            fmt_metric(row.mean_f1),
            fmt_metric(row.mean_precision),
            fmt_metric(row.mean_recall),
        ));
    }
    out
}

/// Markdown rendering with a metadata list and one table of rows.
pub fn report_to_markdown(report: &ExperimentReport) -> String {
    let mut out = String::from("# Experiment report\n\n");
    out.push_str(&format!("- task: {}\n", report.task.as_str()));
    out.push_str(&format!("- family: {}\n", report.family.as_str()));
    out.push_str(&format!("- feature mode: {}\n", report.feature_mode.as_str()));
    out.push_str(&format!("- runs: {} (seed {})\n", report.runs, report.seed));
    out.push_str(&format!("- vocabulary size: {}\n", report.vocab_size));
    out.push_str(&format!(
        "- examples: {} admitted ({} positive, {} negative) out of {} packets\n",
        report.prep.admitted,
        report.prep.positives,
        report.prep.negatives,
        report.prep.packets_total
    ));
    out.push_str(&format!(
        "- excluded: {} unlabeled, {} keyless, {} bare file fetches\n\n",
        report.prep.unlabeled, report.prep.keyless, report.prep.file_request_only_excluded
    ));
    out.push_str("| trained on | tested on | mean F1 | mean precision | mean recall |\n");
    out.push_str("|---|---|---|---|---|\n");
    for row in &report.rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            row.trained_on,
            row.tested_on,
            fmt_metric(row.mean_f1),
            fmt_metric(row.mean_precision),
            fmt_metric(row.mean_recall),
        ));
    }
    if let Some(r) = &report.rounds {
        out.push_str("\n## Federation rounds\n\n");
        out.push_str(&format!("- rounds cap: {}\n", r.rounds_max));
        if let Some(t) = r.target_f1 {
            out.push_str(&format!("- target F1: {t}\n"));
            out.push_str(&format!(
                "- converged: {} of {} runs\n",
                r.converged_runs,
                r.converged_runs + r.censored_runs
            ));
            if let Some(m) = r.mean_rounds_to_target {
                out.push_str(&format!("- mean rounds to target: {m:.1}\n"));
            }
        }
        out.push_str(&format!("- mean final F1: {}\n", fmt_metric(r.mean_final_f1)));
        out.push_str(&format!("- mean best F1: {}\n", fmt_metric(r.mean_best_f1)));
    }
    if let Some(t) = &report.tree {
        out.push_str("\n## Tree size\n\n");
        out.push_str(&format!("- mean nodes: {:.1}\n", t.mean_nodes));
        out.push_str(&format!("- mean leaves: {:.1}\n", t.mean_leaves));
        out.push_str(&format!("- mean depth: {:.1}\n", t.mean_depth));
    }
    if let Some(t) = &report.transfer {
        out.push_str("\n## Knowledge transfer\n\n");
        out.push_str(&format!("- teacher F1: {}\n", fmt_metric(t.teacher_f1)));
        out.push_str(&format!("- student F1: {}\n", fmt_metric(t.student_f1)));
        out.push_str(&format!("- direct tree F1: {}\n", fmt_metric(t.direct_f1)));
        out.push_str(&format!("- fidelity: {}\n", fmt_metric(t.fidelity)));
        out.push_str(&format!(
            "- student nodes: {:.1} (direct {:.1})\n",
            t.student_nodes, t.direct_nodes
        ));
    }
    out
}
