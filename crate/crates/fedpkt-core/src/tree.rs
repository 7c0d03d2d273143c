//! Binary decision trees over sparse feature vectors, plus SVM-to-tree
//! knowledge transfer.
//!
//! Trees split on feature presence: examples that contain the split feature
//! go right, the rest go left. Splits are chosen greedily by Gini impurity
//! reduction. Induction is fully deterministic, with ties broken toward the
//! lowest feature index, so two builds over the same data produce identical
//! trees.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::confusion;
use crate::features::{EncodedExample, Vocabulary};
use crate::rng::{derive_seed, rng_from_seed};
use crate::svm::{predict, train_centralized, Hyperparams, SvmModel};

/// Tree induction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Maximum depth in edges; 0 forces a single leaf.
    pub max_depth: usize,
    /// Minimum number of training examples on each side of a split.
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> TreeParams {
        TreeParams { max_depth: 12, min_samples_leaf: 1 }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::ConfigInvalid("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// One tree node. Child fields index into the tree's node arena and always
/// point forward (child index greater than parent index).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature_index: usize,
        /// Child for examples without the feature.
        left: usize,
        /// Child for examples with the feature.
        right: usize,
        /// Training examples that reached this node.
        support: usize,
    },
    Leaf {
        /// Predicted label, -1 or +1.
        label: i8,
        support: usize,
    },
}

const TREE_SCHEMA: &str = "fedpkt-tree/1";

/// A trained decision tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub schema: String,
    /// Feature space dimension the tree was trained against.
    pub dim: usize,
    pub vocab_fingerprint: String,
    pub nodes: Vec<Node>,
}

/// Gini impurity of a node with `pos` positives out of `n`, as 2p(1-p).
pub(crate) fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl DecisionTree {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Depth in edges of the deepest node; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        let mut max_depth = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((idx, d)) = stack.pop() {
            max_depth = max_depth.max(d);
            if let Node::Split { left, right, .. } = self.nodes[idx] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        max_depth
    }

    /// Predicts -1 or +1 by walking from the root; at each split the example
    /// goes right exactly when it contains the split feature.
    pub fn predict(&self, example: &EncodedExample) -> Result<i8> {
        if let Some(&last) = example.indices.last() {
            if last >= self.dim {
                return Err(Error::DimensionMismatch(format!(
                    "example feature index {last} is outside tree dimension {}",
                    self.dim
                )));
            }
        }
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { label, .. } => return Ok(label),
                Node::Split { feature_index, left, right, .. } => {
                    idx = if example.indices.binary_search(&feature_index).is_ok() {
                        right
                    } else {
                        left
                    };
                }
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tree serialization is infallible");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<DecisionTree> {
        let tree: DecisionTree = serde_json::from_str(text)?;
        if tree.schema != TREE_SCHEMA {
            return Err(Error::ConfigInvalid(format!(
                "unsupported tree schema {:?}, expected {TREE_SCHEMA:?}",
                tree.schema
            )));
        }
        if tree.nodes.is_empty() {
            return Err(Error::ConfigInvalid("tree has no nodes".into()));
        }
        for (i, node) in tree.nodes.iter().enumerate() {
            if let Node::Split { feature_index, left, right, .. } = *node {
                if feature_index >= tree.dim {
                    return Err(Error::ConfigInvalid(format!(
                        "node {i} splits on feature {feature_index} outside dimension {}",
                        tree.dim
                    )));
                }
                if left >= tree.nodes.len() || right >= tree.nodes.len() {
                    return Err(Error::ConfigInvalid(format!(
                        "node {i} references a child outside the {} node arena",
                        tree.nodes.len()
                    )));
                }
                if left <= i || right <= i || left == right {
                    return Err(Error::ConfigInvalid(format!(
                        "node {i} has non-forward children {left} and {right}"
                    )));
                }
            }
        }
        Ok(tree)
    }

    /// Graphviz rendering with feature names taken from the vocabulary.
    pub fn to_dot(&self, vocab: &Vocabulary) -> Result<String> {
        if vocab.len() != self.dim {
            return Err(Error::VocabMismatch(format!(
                "tree dimension {} does not match vocabulary size {}",
                self.dim,
                vocab.len()
            )));
        }
        let escape = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = String::from("digraph decision_tree {\n  node [shape=box];\n");
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { label, support } => {
                    out.push_str(&format!(
                        "  n{i} [label=\"{}\\nn={support}\"];\n",
                        if *label > 0 { "+1" } else { "-1" }
                    ));
                }
                Node::Split { feature_index, support, .. } => {
                    let name = vocab
                        .feature(*feature_index)
                        .map(|f| f.to_string())
                        .unwrap_or_else(|| format!("f{feature_index}"));
                    out.push_str(&format!(
                        "  n{i} [label=\"{}?\\nn={support}\"];\n",
                        escape(&name)
                    ));
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = node {
                out.push_str(&format!("  n{i} -> n{left} [label=\"absent\"];\n"));
                out.push_str(&format!("  n{i} -> n{right} [label=\"present\"];\n"));
            }
        }
        out.push_str("}\n");
        Ok(out)
    }
}

/// Majority label, ties going to -1.
fn majority_label(pos: usize, n: usize) -> i8 {
    if 2 * pos > n {
        1
    } else {
        -1
    }
}

/// Finds the best presence split for the node holding `members`, returning
/// `(feature, gain)` when some split improves impurity and respects the leaf
/// minimum. Candidates are scanned in ascending feature order and a
/// challenger must beat the incumbent by more than 1e-12, so near-ties
/// resolve to the lowest feature index.
fn best_split(
    examples: &[EncodedExample],
    members: &[usize],
    pos: usize,
    min_samples_leaf: usize,
) -> Option<(usize, f64)> {
    let n = members.len();
    let parent = gini(pos, n);
    let mut stats: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for &m in members {
        let positive = examples[m].label > 0;
        for &f in &examples[m].indices {
            let entry = stats.entry(f).or_insert((0, 0));
            entry.0 += 1;
            if positive {
                entry.1 += 1;
            }
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (&f, &(n_with, pos_with)) in &stats {
        let n_right = n_with;
        let n_left = n - n_with;
        if n_left < min_samples_leaf || n_right < min_samples_leaf {
            continue;
        }
        let weighted = (n_left as f64 * gini(pos - pos_with, n_left)
            + n_right as f64 * gini(pos_with, n_right))
            / n as f64;
        let gain = parent - weighted;
        if gain > best.map_or(0.0, |(_, g)| g) + 1e-12 {
            best = Some((f, gain));
        }
    }
    best
}

/// Trains a decision tree by greedy Gini-gain splitting on feature presence.
///
/// Induction is deterministic: candidate features are scanned in index
/// order, nodes are laid out in preorder, and leaf ties resolve to -1.
pub fn train_tree(
    examples: &[EncodedExample],
    vocab: &Vocabulary,
    params: &TreeParams,
) -> Result<DecisionTree> {
    params.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyInput("tree training needs at least one example".into()));
    }
    for ex in examples {
        if let Some(&last) = ex.indices.last() {
            if last >= vocab.len() {
                return Err(Error::VocabMismatch(format!(
                    "example {:?} references feature index {last} outside the \
                     vocabulary of size {}",
                    ex.origin_packet_id,
                    vocab.len()
                )));
            }
        }
    }

    let mut nodes: Vec<Node> = vec![Node::Leaf { label: -1, support: 0 }];
    let all: Vec<usize> = (0..examples.len()).collect();
    let mut worklist: Vec<(usize, Vec<usize>, usize)> = vec![(0, all, 0)];

    while let Some((slot, members, depth)) = worklist.pop() {
        let n = members.len();
        let pos = members.iter().filter(|&&m| examples[m].label > 0).count();
        let split = if pos == 0 || pos == n || depth >= params.max_depth {
            None
        } else {
            best_split(examples, &members, pos, params.min_samples_leaf)
        };
        match split {
            None => {
                nodes[slot] = Node::Leaf { label: majority_label(pos, n), support: n };
            }
            Some((feature, _gain)) => {
                let (right, left): (Vec<usize>, Vec<usize>) = members
                    .into_iter()
                    .partition(|&m| examples[m].indices.binary_search(&feature).is_ok());
                let left_slot = nodes.len();
                nodes.push(Node::Leaf { label: -1, support: 0 });
                let right_slot = nodes.len();
                nodes.push(Node::Leaf { label: -1, support: 0 });
                nodes[slot] = Node::Split {
                    feature_index: feature,
                    left: left_slot,
                    right: right_slot,
                    support: n,
                };
                worklist.push((right_slot, right, depth + 1));
                worklist.push((left_slot, left, depth + 1));
            }
        }
    }

    Ok(DecisionTree {
        schema: TREE_SCHEMA.to_string(),
        dim: vocab.len(),
        vocab_fingerprint: vocab.fingerprint(),
        nodes,
    })
}

/// Result of distilling a linear SVM into a decision tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub teacher: SvmModel,
    /// Tree trained on the teacher's predicted labels.
    pub student: DecisionTree,
    /// Tree trained on the true labels of the same slice, for comparison.
    pub direct: DecisionTree,
    pub teacher_f1: f64,
    pub student_f1: f64,
    pub direct_f1: f64,
    /// Fraction of held-out examples where the student agrees with the
    /// teacher.
    pub fidelity: f64,
    pub teacher_examples: usize,
    pub student_examples: usize,
    pub eval_examples: usize,
}

/// Distills an SVM into a decision tree and measures how much is lost.
///
/// The data is shuffled and cut 40/40/20: the teacher SVM trains on the
/// first slice, the student tree trains on the second slice relabeled by
/// the teacher, and both are scored on the held-out remainder. A tree
/// trained on the second slice's true labels is built alongside as a
/// size-matched baseline.
pub fn knowledge_transfer(
    examples: &[EncodedExample],
    vocab: &Vocabulary,
    hyper: &Hyperparams,
    passes: usize,
    tree_params: &TreeParams,
    seed: u64,
) -> Result<TransferOutcome> {
    if examples.len() < 10 {
        return Err(Error::EmptyInput(format!(
            "knowledge transfer needs at least 10 examples, got {}",
            examples.len()
        )));
    }
    if passes == 0 {
        return Err(Error::ConfigInvalid("knowledge transfer needs at least one pass".into()));
    }
    let positives = examples.iter().filter(|e| e.label > 0).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::SingleClass(
            "knowledge transfer needs both classes in the input".into(),
        ));
    }

    let mut shuffled = examples.to_vec();
    shuffled.shuffle(&mut rng_from_seed(derive_seed(seed, &[1])));
    let n = shuffled.len();
    let n_teach = ((0.4 * n as f64).round() as usize).max(1);
    let teach = &shuffled[..n_teach];
    let student_slice = &shuffled[n_teach..2 * n_teach];
    let eval = &shuffled[2 * n_teach..];
    if eval.is_empty() {
        return Err(Error::EmptyInput("knowledge transfer held-out slice is empty".into()));
    }

    let teacher_hyper = Hyperparams { seed: derive_seed(seed, &[2]), ..hyper.clone() };
    let teacher = train_centralized(teach, vocab, &teacher_hyper, passes)?;

    let relabeled: Vec<EncodedExample> = student_slice
        .iter()
        .map(|ex| {
            predict(&teacher, ex).map(|label| EncodedExample { label, ..ex.clone() })
        })
        .collect::<Result<_>>()?;
    let student = train_tree(&relabeled, vocab, tree_params)?;
    let direct = train_tree(student_slice, vocab, tree_params)?;

    let truths: Vec<i8> = eval.iter().map(|e| e.label).collect();
    let teacher_preds: Vec<i8> =
        eval.iter().map(|e| predict(&teacher, e)).collect::<Result<_>>()?;
    let student_preds: Vec<i8> =
        eval.iter().map(|e| student.predict(e)).collect::<Result<_>>()?;
    let direct_preds: Vec<i8> =
        eval.iter().map(|e| direct.predict(e)).collect::<Result<_>>()?;

    let agree = teacher_preds
        .iter()
        .zip(&student_preds)
        .filter(|(a, b)| a == b)
        .count();

    Ok(TransferOutcome {
        teacher_f1: confusion(&teacher_preds, &truths)?.f1,
        student_f1: confusion(&student_preds, &truths)?.f1,
        direct_f1: confusion(&direct_preds, &truths)?.f1,
        fidelity: agree as f64 / eval.len() as f64,
        teacher_examples: teach.len(),
        student_examples: student_slice.len(),
        eval_examples: eval.len(),
        teacher,
        student,
        direct,
    })
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

    #[test]
    fn gini_matches_hand_values() {
        assert_eq!(gini(0, 4), 0.0);
        assert_eq!(gini(4, 4), 0.0);
        assert_eq!(gini(2, 4), 0.5);
        assert_eq!(gini(1, 4), 0.375);
        assert_eq!(gini(0, 0), 0.0);
    }

    #[test]
    fn single_feature_rule_needs_one_split() {
        let vocab = vocab_of(3);
        let mut data = Vec::new();
        for i in 0..10 {
            data.push(ex(&[0, 2], 1, i));
            data.push(ex(&[2], -1, 100 + i));
        }
        let tree = train_tree(&data, &vocab, &TreeParams::default()).unwrap();
        assert_eq!(tree.node_count(), 3);
        assert_eq!(tree.leaf_count(), 2);
        assert_eq!(tree.depth(), 1);
        assert!(matches!(tree.nodes[0], Node::Split { feature_index: 0, support: 20, .. }));
        for d in &data {
            assert_eq!(tree.predict(d).unwrap(), d.label);
        }
        // An unseen combination still routes on feature 0 alone.
        assert_eq!(tree.predict(&ex(&[0, 1], 1, 999)).unwrap(), 1);
        assert_eq!(tree.predict(&ex(&[1], -1, 998)).unwrap(), -1);
    }

    #[test]
    fn featureless_node_becomes_majority_leaf_with_negative_ties() {
        let vocab = vocab_of(1);
        let tied = vec![ex(&[], 1, 0), ex(&[], -1, 1)];
        let tree = train_tree(&tied, &vocab, &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes, vec![Node::Leaf { label: -1, support: 2 }]);

        let positive = vec![ex(&[], 1, 0), ex(&[], 1, 1), ex(&[], -1, 2)];
        let tree = train_tree(&positive, &vocab, &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes, vec![Node::Leaf { label: 1, support: 3 }]);
    }

    #[test]
    fn min_samples_leaf_blocks_thin_splits() {
        let vocab = vocab_of(2);
        // Feature 0 appears on a single positive; a split would leave one
        // example on the right.
        let mut data = vec![ex(&[0], 1, 0)];
        for i in 1..8 {
            data.push(ex(&[1], -1, i));
        }
        let params = TreeParams { min_samples_leaf: 2, ..TreeParams::default() };
        let tree = train_tree(&data, &vocab, &params).unwrap();
        assert_eq!(tree.node_count(), 1);
        assert_eq!(tree.nodes[0], Node::Leaf { label: -1, support: 8 });
    }

    #[test]
    fn max_depth_zero_forces_a_single_leaf() {
        let vocab = vocab_of(2);
        let data = vec![ex(&[0], 1, 0), ex(&[1], -1, 1), ex(&[1], -1, 2)];
        let params = TreeParams { max_depth: 0, ..TreeParams::default() };
        let tree = train_tree(&data, &vocab, &params).unwrap();
        assert_eq!(tree.nodes, vec![Node::Leaf { label: -1, support: 3 }]);
    }

    #[test]
    fn conjunction_rule_builds_a_depth_two_tree() {
        let vocab = vocab_of(2);
        let mut data = Vec::new();
        for i in 0..3 {
            data.push(ex(&[], -1, i));
            data.push(ex(&[0], -1, 10 + i));
            data.push(ex(&[1], -1, 20 + i));
            data.push(ex(&[0, 1], 1, 30 + i));
        }
        let tree = train_tree(&data, &vocab, &TreeParams::default()).unwrap();
        // Features 0 and 1 tie on gain at the root; the lower index wins.
        assert!(matches!(tree.nodes[0], Node::Split { feature_index: 0, .. }));
        assert_eq!(tree.node_count(), 5);
        assert_eq!(tree.depth(), 2);
        for d in &data {
            assert_eq!(tree.predict(d).unwrap(), d.label);
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let vocab = vocab_of(4);
        let mut data = Vec::new();
        for i in 0..20 {
            let indices: Vec<usize> = (0..4).filter(|f| (i >> f) & 1 == 1).collect();
            let label = if i % 3 == 0 { 1 } else { -1 };
            data.push(ex(&indices, label, i));
        }
        let a = train_tree(&data, &vocab, &TreeParams::default()).unwrap();
        let b = train_tree(&data, &vocab, &TreeParams::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn json_round_trip_preserves_the_tree() {
        let vocab = vocab_of(2);
        let data = vec![ex(&[0], 1, 0), ex(&[1], -1, 1), ex(&[], -1, 2)];
        let tree = train_tree(&data, &vocab, &TreeParams::default()).unwrap();
        let restored = DecisionTree::from_json(&tree.to_json()).unwrap();
        assert_eq!(tree, restored);
    }

    #[test]
    fn from_json_rejects_malformed_trees() {
        let bad_schema = r#"{"schema":"other/9","dim":1,"vocab_fingerprint":"x",
            "nodes":[{"type":"leaf","label":-1,"support":1}]}"#;
        assert!(matches!(
            DecisionTree::from_json(bad_schema),
            Err(Error::ConfigInvalid(_))
        ));

        let dangling = r#"{"schema":"fedpkt-tree/1","dim":1,"vocab_fingerprint":"x",
            "nodes":[{"type":"split","feature_index":0,"left":1,"right":99,"support":2},
                     {"type":"leaf","label":-1,"support":1}]}"#;
        assert!(matches!(DecisionTree::from_json(dangling), Err(Error::ConfigInvalid(_))));

        let backward = r#"{"schema":"fedpkt-tree/1","dim":1,"vocab_fingerprint":"x",
            "nodes":[{"type":"split","feature_index":0,"left":0,"right":1,"support":2},
                     {"type":"leaf","label":-1,"support":1}]}"#;
        assert!(matches!(DecisionTree::from_json(backward), Err(Error::ConfigInvalid(_))));

        let wide = r#"{"schema":"fedpkt-tree/1","dim":1,"vocab_fingerprint":"x",
            "nodes":[{"type":"split","feature_index":7,"left":1,"right":2,"support":2},
                     {"type":"leaf","label":-1,"support":1},
                     {"type":"leaf","label":1,"support":1}]}"#;
        assert!(matches!(DecisionTree::from_json(wide), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn dot_output_names_features_and_escapes_quotes() {
        let set: BTreeSet<Feature> = [
            Feature::uri_key("gaid"),
            Feature::uri_key("a\"b"),
        ]
        .into_iter()
        .collect();
        let vocab = build_vocabulary(&[set], FeatureMode::HttpKeys, 1);
        let quoted = vocab.index_of(&Feature::uri_key("a\"b")).unwrap();
        let gaid = vocab.index_of(&Feature::uri_key("gaid")).unwrap();
        let mut data = Vec::new();
        for i in 0..4 {
            data.push(ex(&[gaid], 1, i));
            data.push(ex(&[quoted], -1, 10 + i));
        }
        let tree = train_tree(&data, &vocab, &TreeParams::default()).unwrap();
        // Both features split perfectly; the tie goes to the vocabulary's
        // first feature, which is the quoted key.
        assert!(matches!(tree.nodes[0], Node::Split { feature_index, .. } if feature_index == quoted));
        let dot = tree.to_dot(&vocab).unwrap();
        assert!(dot.starts_with("digraph decision_tree {"));
        assert!(dot.contains("uri_key:a\\\"b?"), "split label must escape the quote: {dot}");
        assert!(!dot.contains("\"uri_key:a\"b"), "no unescaped quote may open a label: {dot}");
        assert!(dot.contains("absent"));
        assert!(dot.contains("present"));
    }

    #[test]
    fn predict_rejects_out_of_range_features() {
        let vocab = vocab_of(2);
        let data = vec![ex(&[0], 1, 0), ex(&[1], -1, 1)];
        let tree = train_tree(&data, &vocab, &TreeParams::default()).unwrap();
        assert!(matches!(
            tree.predict(&ex(&[5], 1, 9)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn train_tree_validates_inputs() {
        let vocab = vocab_of(1);
        assert!(matches!(
            train_tree(&[], &vocab, &TreeParams::default()),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            train_tree(&[ex(&[3], 1, 0)], &vocab, &TreeParams::default()),
            Err(Error::VocabMismatch(_))
        ));
        let params = TreeParams { min_samples_leaf: 0, ..TreeParams::default() };
        assert!(matches!(
            train_tree(&[ex(&[0], 1, 0)], &vocab, &params),
            Err(Error::ConfigInvalid(_))
        ));
    }

    #[test]
    fn transfer_on_separable_data_keeps_teacher_quality() {
        let vocab = vocab_of(4);
        let mut data = Vec::new();
        for i in 0..100 {
            // Positives carry feature 0, negatives feature 1; features 2 and
            // 3 are shared noise.
            let extra = 2 + (i % 2);
            data.push(ex(&[0, extra], 1, i));
            data.push(ex(&[1, extra], -1, 1_000 + i));
        }
        let hyper = Hyperparams { eta: 0.5, ..Hyperparams::default() };
        let outcome = knowledge_transfer(
            &data,
            &vocab,
            &hyper,
            30,
            &TreeParams::default(),
            11,
        )
        .unwrap();
        assert_eq!(outcome.teacher_examples, 80);
        assert_eq!(outcome.student_examples, 80);
        assert_eq!(outcome.eval_examples, 40);
        assert!(outcome.teacher_f1 > 0.99, "teacher_f1 = {}", outcome.teacher_f1);
        assert!(outcome.fidelity > 0.99, "fidelity = {}", outcome.fidelity);
        assert!((outcome.teacher_f1 - outcome.student_f1).abs() < 0.01);
        assert!(outcome.direct_f1 > 0.99);
        assert!(outcome.student.node_count() >= 3);
    }

    #[test]
    fn transfer_validates_inputs() {
        let vocab = vocab_of(2);
        let hyper = Hyperparams::default();
        let params = TreeParams::default();
        let small = vec![ex(&[0], 1, 0), ex(&[1], -1, 1)];
        assert!(matches!(
            knowledge_transfer(&small, &vocab, &hyper, 1, &params, 0),
            Err(Error::EmptyInput(_))
        ));

        let single: Vec<EncodedExample> = (0..12).map(|i| ex(&[0], 1, i)).collect();
        assert!(matches!(
            knowledge_transfer(&single, &vocab, &hyper, 1, &params, 0),
            Err(Error::SingleClass(_))
        ));

        let mixed: Vec<EncodedExample> =
            (0..12).map(|i| ex(&[i % 2], if i % 2 == 0 { 1 } else { -1 }, i)).collect();
        assert!(matches!(
            knowledge_transfer(&mixed, &vocab, &hyper, 0, &params, 0),
            Err(Error::ConfigInvalid(_))
        ));
    }
}
