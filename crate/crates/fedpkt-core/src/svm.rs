//! Linear SVM trained by subgradient descent on the hinge loss.
//!
//! The objective over a dataset is `sum_i max(0, 1 - y_i * w.x_i) +
//! lambda * ||w||^2`. Examples are multi-hot, so the dot product is a sum of
//! selected weights. Mini-batch updates first accumulate the batch
//! subgradient against the current weights, then take one step
//! `w += (eta / |b|) * sum y_i x_i` over the margin violators, followed by
//! the shrink `w *= (1 - 2 * eta * lambda)` when regularization is enabled.
//! There is no bias term: the decision threshold stays at zero and ties
//! predict the negative class.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::csv_field;
use crate::features::{EncodedExample, Feature, Vocabulary};
use crate::rng::rng_from_seed;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Constant learning rate.
    pub eta: f64,
    /// L2 regularization strength; 0 disables the shrink step.
    pub lambda: f64,
    /// Mini-batch size; `None` means full-batch (one step per pass).
    pub batch_size: Option<usize>,
    /// Number of passes over the data per update call.
    pub epochs: usize,
    /// Seed for the per-epoch shuffles.
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Hyperparams {
        Hyperparams { eta: 0.1, lambda: 0.0, batch_size: None, epochs: 1, seed: 0 }
    }
}

impl Hyperparams {
    /// Checks ranges: `eta > 0`, `lambda >= 0`, a batch size of zero is
    /// rejected, and at least one epoch is required.
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::ConfigInvalid(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::ConfigInvalid("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::ConfigInvalid("epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// The effective batch size for `n` examples.
    pub fn resolved_batch(&self, n: usize) -> usize {
        self.batch_size.map_or(n, |b| b.min(n)).max(1)
    }
}

/// A trained linear model over a frozen vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// One weight per vocabulary index.
    pub weights: Vec<f64>,
    /// Fingerprint of the vocabulary the model was trained against.
    pub vocab_fingerprint: String,
    /// Number of update cycles (centralized fits or federation rounds)
    /// applied so far.
    pub trained_rounds: u32,
}

impl SvmModel {
    /// The zero model over a vocabulary.
    pub fn zeros_for(vocab: &Vocabulary) -> SvmModel {
        SvmModel {
            weights: vec![0.0; vocab.len()],
            vocab_fingerprint: vocab.fingerprint(),
            trained_rounds: 0,
        }
    }

    /// The zero model with an explicit dimension and fingerprint.
    pub fn with_dim(dim: usize, vocab_fingerprint: impl Into<String>) -> SvmModel {
        SvmModel { weights: vec![0.0; dim], vocab_fingerprint: vocab_fingerprint.into(), trained_rounds: 0 }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check_example(&self, ex: &EncodedExample) -> Result<()> {
        debug_assert!(ex.indices.windows(2).all(|w| w[0] < w[1]));
        if let Some(&last) = ex.indices.last() {
            if last >= self.weights.len() {
                return Err(Error::DimensionMismatch(format!(
                    "example {:?} references feature index {last} but the model has {} weights",
                    ex.origin_packet_id,
                    self.weights.len()
                )));
            }
        }
        Ok(())
    }

    /// The raw decision value `w . x`.
    pub fn score(&self, ex: &EncodedExample) -> Result<f64> {
        self.check_example(ex)?;
        Ok(ex.indices.iter().map(|&i| self.weights[i]).sum())
    }
}

/// Hinge loss of one example: `max(0, 1 - y * w.x)`.
pub fn hinge_loss(model: &SvmModel, ex: &EncodedExample) -> Result<f64> {
    let margin = f64::from(ex.label) * model.score(ex)?;
    Ok((1.0 - margin).max(0.0))
}

/// Sparse subgradient of the hinge loss at the current weights: `-y * x`
/// when the margin is violated, empty otherwise. At the hinge kink
/// (margin exactly 1) the zero subgradient is chosen.
pub fn subgradient(model: &SvmModel, ex: &EncodedExample) -> Result<Vec<(usize, f64)>> {
    let margin = f64::from(ex.label) * model.score(ex)?;
    if margin < 1.0 {
        let g = -f64::from(ex.label);
        Ok(ex.indices.iter().map(|&i| (i, g)).collect())
    } else {
        Ok(Vec::new())
    }
}

/// Predicted label: the sign of the decision value, with ties (score exactly
/// zero) going to the negative class.
pub fn predict(model: &SvmModel, ex: &EncodedExample) -> Result<i8> {
    Ok(if model.score(ex)? > 0.0 { 1 } else { -1 })
}

/// Runs `hyper.epochs` passes of mini-batch subgradient descent over the
/// examples, starting from `model`, and returns the updated model. Batch
/// subgradients are fully accumulated before the weights move, so the update
/// for one batch is a single step regardless of example order within it.
pub fn client_update(
    model: &SvmModel,
    examples: &[EncodedExample],
    hyper: &Hyperparams,
) -> Result<SvmModel> {
    hyper.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyInput("client_update needs at least one example".into()));
    }
    for ex in examples {
        model.check_example(ex)?;
    }

    let mut weights = model.weights.clone();
    let batch = hyper.resolved_batch(examples.len());
    let shrink = 1.0 - 2.0 * hyper.eta * hyper.lambda;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = rng_from_seed(hyper.seed);

    let mut grad: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.clear();
            for &ei in chunk {
                let ex = &examples[ei];
                let score: f64 = ex.indices.iter().map(|&i| weights[i]).sum();
                if f64::from(ex.label) * score < 1.0 {
                    for &i in &ex.indices {
                        *grad.entry(i).or_insert(0.0) += f64::from(ex.label);
                    }
                }
            }
            let step = hyper.eta / chunk.len() as f64;
            for (&i, &g) in &grad {
                weights[i] += step * g;
            }
            if hyper.lambda > 0.0 {
                for w in &mut weights {
                    *w *= shrink;
                }
            }
        }
    }

    if let Some(bad) = weights.iter().find(|w| !w.is_finite()) {
        return Err(Error::NonFiniteWeights(format!(
            "weight became {bad} (eta={}, lambda={})",
            hyper.eta, hyper.lambda
        )));
    }
    Ok(SvmModel {
        weights,
        vocab_fingerprint: model.vocab_fingerprint.clone(),
        trained_rounds: model.trained_rounds + 1,
    })
}

/// Trains a model from zero weights with `passes` complete passes over the
/// data. Zero passes return the zero model.
pub fn train_centralized(
    examples: &[EncodedExample],
    vocab: &Vocabulary,
    hyper: &Hyperparams,
    passes: usize,
) -> Result<SvmModel> {
    hyper.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyInput("train_centralized needs at least one example".into()));
    }
    let model = SvmModel::zeros_for(vocab);
    for ex in examples {
        model.check_example(ex)?;
    }
    if passes == 0 {
        return Ok(model);
    }
    let run = Hyperparams { epochs: passes, ..hyper.clone() };
    client_update(&model, examples, &run)
}

/// The `k` largest and `k` smallest coefficients. The first list descends
/// from the largest weight, the second ascends from the smallest, so the
/// most extreme coefficient leads each list. Ties resolve to the feature
/// earlier in the vocabulary. `k` is clamped to the vocabulary size.
pub fn top_coefficients(
    model: &SvmModel,
    vocab: &Vocabulary,
    k: usize,
) -> Result<(Vec<(Feature, f64)>, Vec<(Feature, f64)>)> {
    if model.dim() != vocab.len() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} weights but vocabulary has {} features",
            model.dim(),
            vocab.len()
        )));
    }
    if model.vocab_fingerprint != vocab.fingerprint() {
        return Err(Error::VocabMismatch(format!(
            "model fingerprint {} does not match vocabulary fingerprint {}",
            model.vocab_fingerprint,
            vocab.fingerprint()
        )));
    }
    let k = k.min(vocab.len());
    let mut descending: Vec<usize> = (0..model.dim()).collect();
    descending.sort_by(|&a, &b| model.weights[b].total_cmp(&model.weights[a]).then(a.cmp(&b)));
    let mut ascending: Vec<usize> = (0..model.dim()).collect();
    ascending.sort_by(|&a, &b| model.weights[a].total_cmp(&model.weights[b]).then(a.cmp(&b)));

    let collect = |indices: &[usize]| -> Vec<(Feature, f64)> {
        indices
            .iter()
            .map(|&i| (vocab.feature(i).expect("index within vocab").clone(), model.weights[i]))
            .collect()
    };

    Ok((collect(&descending[..k]), collect(&ascending[..k])))
}

/// Renders the top coefficients as CSV with columns
/// `polarity,kind,token,weight`.
pub fn coefficients_csv(model: &SvmModel, vocab: &Vocabulary, k: usize) -> Result<String> {
    let (pos, neg) = top_coefficients(model, vocab, k)?;
    let mut out = String::from("polarity,kind,token,weight\n");
    for (polarity, list) in [("positive", pos), ("negative", neg)] {
        for (feature, weight) in list {
            out.push_str(&format!(
                "{polarity},{},{},{weight}\n",
                feature.kind.as_str(),
                csv_field(&feature.token)
            ));
        }
    }
    Ok(out)
}

const MODEL_SCHEMA: &str = "fedpkt-model/1";

/// JSON header line of the binary model format.
#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    schema: String,
    dim: usize,
    vocab_fingerprint: String,
    trained_rounds: u32,
    eta: f64,
    lambda: f64,
    batch_size: Option<usize>,
    epochs: usize,
    seed: u64,
}

/// Serializes a model: one JSON header line, then the weights as
/// little-endian f64 bytes. Reloading reproduces the weights bit-for-bit.
pub fn write_model<W: Write>(
    model: &SvmModel,
    hyper: &Hyperparams,
    mut writer: W,
) -> Result<()> {
    let header = ModelHeader {
        schema: MODEL_SCHEMA.to_string(),
        dim: model.dim(),
        vocab_fingerprint: model.vocab_fingerprint.clone(),
        trained_rounds: model.trained_rounds,
        eta: hyper.eta,
        lambda: hyper.lambda,
        batch_size: hyper.batch_size,
        epochs: hyper.epochs,
        seed: hyper.seed,
    };
    serde_json::to_writer(&mut writer, &header)?;
    writer.write_all(b"\n")?;
    for w in &model.weights {
        writer.write_all(&w.to_le_bytes())?;
    }
    Ok(())
}

/// Serializes a model to bytes; see [`write_model`].
pub fn model_to_bytes(model: &SvmModel, hyper: &Hyperparams) -> Vec<u8> {
    let mut buf = Vec::with_capacity(model.dim() * 8 + 256);
    write_model(model, hyper, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Reads a model produced by [`write_model`], returning the model and the
/// hyperparameters it was trained with.
pub fn read_model<R: Read>(mut reader: R) -> Result<(SvmModel, Hyperparams)> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    model_from_bytes(&bytes)
}

/// Parses model bytes; see [`read_model`].
pub fn model_from_bytes(bytes: &[u8]) -> Result<(SvmModel, Hyperparams)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::ConfigInvalid("model file lacks a header line".into()))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[..newline])?;
    if header.schema != MODEL_SCHEMA {
        return Err(Error::ConfigInvalid(format!(
            "unsupported model schema {:?}, expected {MODEL_SCHEMA:?}",
            header.schema
        )));
    }
    let body = &bytes[newline + 1..];
    if body.len() != header.dim * 8 {
        return Err(Error::ConfigInvalid(format!(
            "model body has {} bytes but dim {} requires {}",
            body.len(),
            header.dim,
            header.dim * 8
        )));
    }
    let weights: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes")))
        .collect();
    let model = SvmModel {
        weights,
        vocab_fingerprint: header.vocab_fingerprint,
        trained_rounds: header.trained_rounds,
    };
    let hyper = Hyperparams {
        eta: header.eta,
        lambda: header.lambda,
        batch_size: header.batch_size,
        epochs: header.epochs,
        seed: header.seed,
    };
    Ok((model, hyper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_vocabulary, FeatureMode};
    use std::collections::BTreeSet;

    fn ex(indices: &[usize], label: i8) -> EncodedExample {
        EncodedExample {
            indices: indices.to_vec(),
            label,
            weight: 1.0,
            origin_packet_id: format!("t{indices:?}{label}"),
        }
    }

    fn model(weights: &[f64]) -> SvmModel {
        SvmModel { weights: weights.to_vec(), vocab_fingerprint: "test".into(), trained_rounds: 0 }
    }

    fn vocab_of(n: usize) -> Vocabulary {
        let set: BTreeSet<Feature> = (0..n).map(|i| Feature::uri_key(format!("k{i:03}"))).collect();
        build_vocabulary(&[set], FeatureMode::HttpKeys, 1)
    }

    #[test]
    fn hinge_loss_at_zero_weights_is_one() {
        let m = model(&[0.0, 0.0]);
        assert_eq!(hinge_loss(&m, &ex(&[0, 1], 1)).unwrap(), 1.0);
        assert_eq!(hinge_loss(&m, &ex(&[0], -1)).unwrap(), 1.0);
    }

    #[test]
    fn hinge_loss_saturates_and_grows_linearly() {
        let m = model(&[2.0]);
        assert_eq!(hinge_loss(&m, &ex(&[0], 1)).unwrap(), 0.0);
        assert_eq!(hinge_loss(&m, &ex(&[0], -1)).unwrap(), 3.0);
    }

    #[test]
    fn out_of_range_index_is_a_dimension_mismatch() {
        let m = model(&[0.0]);
        assert!(matches!(
            hinge_loss(&m, &ex(&[1], 1)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn subgradient_is_zero_when_margin_satisfied() {
        let m = model(&[2.0]);
        assert!(subgradient(&m, &ex(&[0], 1)).unwrap().is_empty());
        // Margin exactly 1 sits at the kink; the zero side is chosen.
        let m1 = model(&[1.0]);
        assert!(subgradient(&m1, &ex(&[0], 1)).unwrap().is_empty());
    }

    #[test]
    fn subgradient_is_minus_y_x_when_violated() {
        let m = model(&[0.3, 0.0]);
        assert_eq!(subgradient(&m, &ex(&[0], 1)).unwrap(), vec![(0, -1.0)]);
        assert_eq!(
            subgradient(&m, &ex(&[0, 1], -1)).unwrap(),
            vec![(0, 1.0), (1, 1.0)]
        );
    }

    #[test]
    fn subgradient_matches_finite_differences() {
        // Central finite differences of the hinge loss along each present
        // coordinate, away from the kink.
        let points = [(0.3, 1i8), (-0.5, 1), (0.4, -1), (1.7, 1)];
        let h = 1e-6;
        for (w0, label) in points {
            let example = ex(&[0], label);
            let grad = subgradient(&model(&[w0]), &example).unwrap();
            let analytic = grad.first().map_or(0.0, |&(_, g)| g);
            let plus = hinge_loss(&model(&[w0 + h]), &example).unwrap();
            let minus = hinge_loss(&model(&[w0 - h]), &example).unwrap();
            let numeric = (plus - minus) / (2.0 * h);
            assert!(
                (numeric - analytic).abs() <= 1e-4,
                "at w={w0}, y={label}: numeric {numeric} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn single_violating_example_moves_weight_by_eta_times_y() {
        let vocab = vocab_of(1);
        let m = SvmModel::zeros_for(&vocab);
        let hyper = Hyperparams { eta: 1.0, ..Hyperparams::default() };
        let out = client_update(&m, &[ex(&[0], 1)], &hyper).unwrap();
        assert_eq!(out.weights, vec![1.0]);
        assert_eq!(out.trained_rounds, 1);
    }

    #[test]
    fn satisfied_examples_leave_weights_unchanged() {
        let m = model(&[2.0]);
        let hyper = Hyperparams { eta: 0.5, epochs: 3, ..Hyperparams::default() };
        let out = client_update(&m, &[ex(&[0], 1)], &hyper).unwrap();
        assert_eq!(out.weights, vec![2.0]);
    }

    #[test]
    fn full_batch_step_matches_straight_line_oracle() {
        // One full-batch step computed two ways: by client_update and by a
        // direct transcription of "accumulate subgradients of the margin
        // violators, then add eta/n times the sum".
        let examples = vec![
            ex(&[0, 2], 1),
            ex(&[1], -1),
            ex(&[0, 1, 3], 1),
            ex(&[2, 3], -1),
            ex(&[4], 1),
        ];
        let start = model(&[0.2, -0.1, 0.0, 0.4, 1.5]);
        let eta = 0.3;

        let mut grad = vec![0.0f64; 5];
        for e in &examples {
            let score: f64 = e.indices.iter().map(|&i| start.weights[i]).sum();
            if f64::from(e.label) * score < 1.0 {
                for &i in &e.indices {
                    grad[i] += f64::from(e.label);
                }
            }
        }
        let expected: Vec<f64> = start
            .weights
            .iter()
            .zip(&grad)
            .map(|(w, g)| w + eta / examples.len() as f64 * g)
            .collect();

        let hyper = Hyperparams { eta, epochs: 1, batch_size: None, ..Hyperparams::default() };
        let out = client_update(&start, &examples, &hyper).unwrap();
        assert_eq!(out.weights, expected);
    }

    #[test]
    fn shrink_factor_applies_once_per_batch() {
        let m = model(&[2.0]);
        let hyper = Hyperparams { eta: 0.1, lambda: 0.5, epochs: 2, ..Hyperparams::default() };
        // Margin stays satisfied throughout, so only the shrink acts:
        // two epochs of one full batch each.
        let out = client_update(&m, &[ex(&[0], 1)], &hyper).unwrap();
        let factor = 1.0 - 2.0 * 0.1 * 0.5;
        assert_eq!(out.weights, vec![2.0 * factor * factor]);
    }

    #[test]
    fn updates_are_deterministic_in_the_seed() {
        let vocab = vocab_of(6);
        let examples: Vec<EncodedExample> = (0..30)
            .map(|i| ex(&[i % 6], if i % 3 == 0 { 1 } else { -1 }))
            .collect();
        let m = SvmModel::zeros_for(&vocab);
        let hyper =
            Hyperparams { eta: 0.1, batch_size: Some(4), epochs: 3, seed: 11, ..Hyperparams::default() };
        let a = client_update(&m, &examples, &hyper).unwrap();
        let b = client_update(&m, &examples, &hyper).unwrap();
        assert_eq!(a, b);
        let other = Hyperparams { seed: 12, ..hyper };
        let c = client_update(&m, &examples, &other).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn empty_input_is_rejected() {
        let m = model(&[0.0]);
        assert!(matches!(
            client_update(&m, &[], &Hyperparams::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn invalid_hyperparams_are_rejected() {
        let m = model(&[0.0]);
        let examples = [ex(&[0], 1)];
        for bad in [
            Hyperparams { eta: 0.0, ..Hyperparams::default() },
            Hyperparams { eta: -1.0, ..Hyperparams::default() },
            Hyperparams { lambda: -0.1, ..Hyperparams::default() },
            Hyperparams { batch_size: Some(0), ..Hyperparams::default() },
            Hyperparams { epochs: 0, ..Hyperparams::default() },
        ] {
            assert!(client_update(&m, &examples, &bad).is_err(), "{bad:?} accepted");
        }
    }

    #[test]
    fn train_centralized_separates_a_planted_rule() {
        let vocab = vocab_of(3);
        let mut examples = Vec::new();
        for _ in 0..10 {
            examples.push(ex(&[0], 1)); // planted key alone
            examples.push(ex(&[0, 1], 1)); // planted key plus benign
            examples.push(ex(&[1], -1));
            examples.push(ex(&[1, 2], -1));
        }
        let hyper = Hyperparams { eta: 0.5, seed: 3, ..Hyperparams::default() };
        let m = train_centralized(&examples, &vocab, &hyper, 20).unwrap();
        for e in &examples {
            assert_eq!(predict(&m, e).unwrap(), e.label, "misclassified {e:?}");
        }
        assert_eq!(m.trained_rounds, 1);
        assert_eq!(m.vocab_fingerprint, vocab.fingerprint());
    }

    #[test]
    fn zero_passes_return_the_zero_model() {
        let vocab = vocab_of(2);
        let m = train_centralized(&[ex(&[0], 1)], &vocab, &Hyperparams::default(), 0).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
        assert_eq!(m.trained_rounds, 0);
    }

    #[test]
    fn prediction_breaks_ties_toward_negative() {
        let m = model(&[0.0, 1.0, -1.0]);
        assert_eq!(predict(&m, &ex(&[0], 1)).unwrap(), -1);
        assert_eq!(predict(&m, &ex(&[1, 2], 1)).unwrap(), -1);
        assert_eq!(predict(&m, &ex(&[1], -1)).unwrap(), 1);
    }

    #[test]
    fn prediction_is_invariant_under_positive_scaling() {
        let base = model(&[0.7, -0.3, 0.1, 0.0]);
        let scaled = model(&[0.7 * 4.0, -0.3 * 4.0, 0.1 * 4.0, 0.0]);
        let cases = [
            ex(&[0], 1),
            ex(&[1], -1),
            ex(&[0, 1], 1),
            ex(&[2, 3], -1),
            ex(&[3], 1),
            ex(&[0, 1, 2, 3], 1),
        ];
        for c in &cases {
            assert_eq!(predict(&base, c).unwrap(), predict(&scaled, c).unwrap());
        }
    }

    #[test]
    fn top_coefficients_orders_by_magnitude() {
        let vocab = vocab_of(3);
        let m = SvmModel {
            weights: vec![3.0, -2.0, 1.0],
            vocab_fingerprint: vocab.fingerprint(),
            trained_rounds: 1,
        };
        let (pos, neg) = top_coefficients(&m, &vocab, 1).unwrap();
        assert_eq!(pos, vec![(Feature::uri_key("k000"), 3.0)]);
        assert_eq!(neg, vec![(Feature::uri_key("k001"), -2.0)]);

        // k clamps to the vocabulary size and yields the full partition.
        let (pos, neg) = top_coefficients(&m, &vocab, 99).unwrap();
        assert_eq!(pos.len(), 3);
        assert_eq!(neg.len(), 3);
        assert_eq!(pos[0].1, 3.0);
        assert_eq!(neg[0].1, -2.0);
    }

    #[test]
    fn top_coefficients_rejects_mismatched_vocab() {
        let vocab = vocab_of(3);
        let m = model(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            top_coefficients(&m, &vocab, 2),
            Err(Error::VocabMismatch(_))
        ));
        let short = model(&[1.0]);
        assert!(matches!(
            top_coefficients(&short, &vocab, 1),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn coefficients_csv_quotes_awkward_tokens() {
        let set: BTreeSet<Feature> =
            [Feature::uri_key("plain"), Feature::uri_key("with,comma")].into_iter().collect();
        let vocab = build_vocabulary(&[set], FeatureMode::HttpKeys, 1);
        let m = SvmModel {
            weights: vec![1.5, -0.5],
            vocab_fingerprint: vocab.fingerprint(),
            trained_rounds: 1,
        };
        let csv = coefficients_csv(&m, &vocab, 2).unwrap();
        assert!(csv.starts_with("polarity,kind,token,weight\n"));
        assert!(csv.contains("positive,uri_key,plain,1.5"));
        assert!(csv.contains("\"with,comma\""));
    }

    #[test]
    fn model_file_round_trips_bit_for_bit() {
        let m = SvmModel {
            weights: vec![1.0 / 3.0, -0.0, 5e-324, 1e300, -7.25],
            vocab_fingerprint: "abcdef0123456789".into(),
            trained_rounds: 42,
        };
        let hyper = Hyperparams {
            eta: 0.05,
            lambda: 1e-4,
            batch_size: Some(10),
            epochs: 5,
            seed: 99,
        };
        let bytes = model_to_bytes(&m, &hyper);
        let (reloaded, reloaded_hyper) = model_from_bytes(&bytes).unwrap();
        assert_eq!(reloaded.vocab_fingerprint, m.vocab_fingerprint);
        assert_eq!(reloaded.trained_rounds, m.trained_rounds);
        assert_eq!(reloaded_hyper, hyper);
        assert_eq!(reloaded.weights.len(), m.weights.len());
        for (a, b) in reloaded.weights.iter().zip(&m.weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn model_file_rejects_corruption() {
        let m = model(&[1.0, 2.0]);
        let hyper = Hyperparams::default();
        let bytes = model_to_bytes(&m, &hyper);
        assert!(model_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_schema = bytes.clone();
        let replaced = String::from_utf8_lossy(&wrong_schema)
            .replace("fedpkt-model/1", "fedpkt-model/9");
        wrong_schema = replaced.into_bytes();
        assert!(model_from_bytes(&wrong_schema).is_err());
        assert!(model_from_bytes(b"no newline at all").is_err());
    }

    #[test]
    fn hinge_objective_decreases_under_full_batch_descent() {
        // With a small step and full batches, each update cannot increase
        // the summed hinge loss on a separable dataset.
        let vocab = vocab_of(4);
        let examples = vec![
            ex(&[0], 1),
            ex(&[0, 1], 1),
            ex(&[1], -1),
            ex(&[1, 2], -1),
            ex(&[3], -1),
        ];
        let hyper = Hyperparams { eta: 0.05, ..Hyperparams::default() };
        let mut m = SvmModel::zeros_for(&vocab);
        let mut last: f64 = examples.iter().map(|e| hinge_loss(&m, e).unwrap()).sum();
        for _ in 0..400 {
            m = client_update(&m, &examples, &hyper).unwrap();
            let now: f64 = examples.iter().map(|e| hinge_loss(&m, e).unwrap()).sum();
            assert!(now <= last + 1e-9, "objective rose from {last} to {now}");
            last = now;
        }
        assert!(last < 0.1, "objective should approach zero, got {last}");
    }
}
