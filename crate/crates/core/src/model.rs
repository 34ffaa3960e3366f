//! Desk-scale stand-in classifier: bag-of-words logistic regression trained by
//! full-batch gradient descent, plus checkpointing and an import path for
//! externally produced predictions.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Label;
use crate::dataset::MemberRecord;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no documents supplied")]
    NoDocuments,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad checkpoint {path}: {reason}")]
    BadCheckpoint { path: String, reason: String },
}

/// Token -> dense column index for the V most frequent training tokens
/// (document frequency, ties broken lexicographically). Built from the
/// training split only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpace {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl FeatureSpace {
    /// Select the top `v` tokens of the training documents by document
    /// frequency; ties prefer the lexicographically smaller token.
    pub fn build<'a, I>(train_docs: I, v: usize) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        let mut any = false;
        for doc in train_docs {
            any = true;
            let uniq: std::collections::BTreeSet<&str> =
                doc.iter().map(|t| t.as_str()).collect();
            for token in uniq {
                *df.entry(token).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(ModelError::NoDocuments);
        }
        let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(v);
        let tokens: Vec<String> = ranked.into_iter().map(|(t, _)| t.to_string()).collect();
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        FeatureSpace { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Sparse count vector of a tokenized document restricted to this space,
    /// ordered by column index.
    pub fn featurize(&self, tokens: &[String]) -> Vec<(u32, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in tokens {
            if let Some(&idx) = self.index.get(token) {
                *counts.entry(idx).or_insert(0.0) += 1.0;
            }
        }
        counts.into_iter().map(|(i, c)| (i as u32, c)).collect()
    }
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Hyperparams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { epochs: 300, learning_rate: 0.1, l2: 1e-4 }
    }
}

/// Per-feature standardization parameters used inside training.
#[derive(Debug, Clone)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaling {
    /// Identity scaling (mean 0, std 1).
    pub fn identity(dim: usize) -> Self {
        Scaling { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Train-set mean and standard deviation per feature; constant features
    /// get std 1 so they contribute exactly zero after centering.
    pub fn fit(rows: &[Vec<(u32, f64)>], dim: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for row in rows {
            for &(j, x) in row {
                sum[j as usize] += x;
                sum_sq[j as usize] += x * x;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std: Vec<f64> = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / n - m * m).max(0.0);
                let sd = var.sqrt();
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Scaling { mean, std }
    }
}

/// Mean logistic loss with L2 weight penalty over sparse rows, optionally in
/// standardized feature space. One code path serves training and the
/// finite-difference checks.
pub struct LogisticProblem<'a> {
    pub rows: &'a [Vec<(u32, f64)>],
    /// 0.0 or 1.0 per row.
    pub labels: &'a [f64],
    pub dim: usize,
    pub l2: f64,
    pub scaling: &'a Scaling,
}

impl LogisticProblem<'_> {
    fn logits(&self, weights: &[f64], bias: f64) -> Vec<f64> {
        // offset folds the dense "- mean/std" part of standardization
        let offset: f64 = weights
            .iter()
            .zip(&self.scaling.mean)
            .zip(&self.scaling.std)
            .map(|((w, m), s)| w * m / s)
            .sum();
        self.rows
            .iter()
            .map(|row| {
                let mut z = bias - offset;
                for &(j, x) in row {
                    z += weights[j as usize] * x / self.scaling.std[j as usize];
                }
                z
            })
            .collect()
    }

    /// Mean cross-entropy plus l2 * ||w||^2 (bias unpenalized).
    pub fn loss(&self, weights: &[f64], bias: f64) -> f64 {
        let n = self.rows.len() as f64;
        let ce: f64 = self
            .logits(weights, bias)
            .iter()
            .zip(self.labels)
            .map(|(&z, &y)| z.max(0.0) - y * z + (-z.abs()).exp().ln_1p())
            .sum();
        let penalty: f64 = self.l2 * weights.iter().map(|w| w * w).sum::<f64>();
        ce / n + penalty
    }

    /// Loss together with its analytic gradient.
    pub fn loss_grad(&self, weights: &[f64], bias: f64) -> (f64, Vec<f64>, f64) {
        let n = self.rows.len() as f64;
        let logits = self.logits(weights, bias);
        let mut grad_w = vec![0.0; self.dim];
        let mut grad_b = 0.0;
        let mut residual_sum = 0.0;
        let mut ce = 0.0;
        for (row, (&z, &y)) in self.rows.iter().zip(logits.iter().zip(self.labels)) {
            let p = sigmoid(z);
            let r = p - y;
            ce += z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();
            residual_sum += r;
            grad_b += r;
            for &(j, x) in row {
                grad_w[j as usize] += r * x / self.scaling.std[j as usize];
            }
        }
        for j in 0..self.dim {
            grad_w[j] = (grad_w[j] - residual_sum * self.scaling.mean[j] / self.scaling.std[j]) / n
                + 2.0 * self.l2 * weights[j];
        }
        let penalty: f64 = self.l2 * weights.iter().map(|w| w * w).sum::<f64>();
        (ce / n + penalty, grad_w, grad_b / n)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Training provenance kept with the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub final_loss: f64,
    pub n_train: usize,
}

/// Weights in raw count space: probability = sigmoid(w . counts + b).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub meta: TrainMeta,
}

/// Fit by full-batch gradient descent on standardized features, then fold the
/// standardization back so prediction works on raw counts. Deterministic:
/// fixed iteration order, no stochastic steps.
pub fn train(
    space: &FeatureSpace,
    rows: &[Vec<(u32, f64)>],
    labels: &[Label],
    hp: &Hyperparams,
    seed: u64,
) -> Result<LinearModel, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::NoDocuments);
    }
    let has_case = labels.contains(&Label::Case);
    let has_control = labels.contains(&Label::Control);
    if !(has_case && has_control) {
        return Err(ModelError::SingleClass);
    }
    let y: Vec<f64> =
        labels.iter().map(|l| if *l == Label::Case { 1.0 } else { 0.0 }).collect();
    let dim = space.len();
    let scaling = Scaling::fit(rows, dim);
    let problem = LogisticProblem { rows, labels: &y, dim, l2: hp.l2, scaling: &scaling };

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut final_loss = problem.loss(&w, b);
    for _ in 0..hp.epochs {
        let (loss, grad_w, grad_b) = problem.loss_grad(&w, b);
        final_loss = loss;
        for j in 0..dim {
            w[j] -= hp.learning_rate * grad_w[j];
        }
        b -= hp.learning_rate * grad_b;
    }

    // fold standardization into raw-count space
    let mut weights = vec![0.0; dim];
    let mut bias = b;
    for j in 0..dim {
        weights[j] = w[j] / scaling.std[j];
        bias -= w[j] * scaling.mean[j] / scaling.std[j];
    }
    Ok(LinearModel {
        weights,
        bias,
        meta: TrainMeta {
            epochs: hp.epochs,
            learning_rate: hp.learning_rate,
            l2: hp.l2,
            seed,
            final_loss,
            n_train: rows.len(),
        },
    })
}

/// sigmoid(w . x + b) over a sparse count vector.
pub fn predict_proba(model: &LinearModel, features: &[(u32, f64)]) -> f64 {
    let mut z = model.bias;
    for &(j, x) in features {
        z += model.weights[j as usize] * x;
    }
    sigmoid(z)
}

/// Tokenize a raw document for the classifier. Stopwords are kept: the
/// stand-in mirrors a sequence model reading raw text, and the explanation
/// audit must be able to surface pronouns.
pub fn model_tokens(doc: &str) -> Vec<String> {
    crate::lexical::tokenize_keep_stopwords(doc)
}

/// Per-example model output joined with demographics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub patient_id: String,
    pub true_label: Label,
    pub probability: f64,
    pub attributes: BTreeMap<String, String>,
    pub bin: u32,
}

/// Score members with a trained model.
pub fn predict_members(
    model: &LinearModel,
    space: &FeatureSpace,
    members: &[&MemberRecord],
) -> Vec<PredictionRecord> {
    members
        .iter()
        .map(|m| {
            let features = space.featurize(&model_tokens(&m.doc));
            PredictionRecord {
                patient_id: m.patient_id.clone(),
                true_label: m.label,
                probability: predict_proba(model, &features),
                attributes: m.attributes(),
                bin: m.bin,
            }
        })
        .collect()
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    vocab: Vec<String>,
    weights: Vec<f64>,
    bias: f64,
    meta: TrainMeta,
}

/// Save the model and its feature space as a versioned flat file.
pub fn save_checkpoint(
    path: &Path,
    space: &FeatureSpace,
    model: &LinearModel,
) -> Result<(), ModelError> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        vocab: space.tokens().to_vec(),
        weights: model.weights.clone(),
        bias: model.bias,
        meta: model.meta.clone(),
    };
    let json = serde_json::to_string_pretty(&file).expect("serializable checkpoint");
    std::fs::write(path, json)
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

/// Load a checkpoint saved by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(FeatureSpace, LinearModel), ModelError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    let file: CheckpointFile =
        serde_json::from_str(&raw).map_err(|e| ModelError::BadCheckpoint {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    if file.version != CHECKPOINT_VERSION {
        return Err(ModelError::BadCheckpoint {
            path: path.display().to_string(),
            reason: format!("unsupported version {}", file.version),
        });
    }
    if file.vocab.len() != file.weights.len() {
        return Err(ModelError::BadCheckpoint {
            path: path.display().to_string(),
            reason: format!(
                "vocab length {} does not match weights length {}",
                file.vocab.len(),
                file.weights.len()
            ),
        });
    }
    let space = FeatureSpace::from_tokens(file.vocab);
    let model = LinearModel { weights: file.weights, bias: file.bias, meta: file.meta };
    Ok((space, model))
}

#[derive(Deserialize)]
struct ExternalPredictionLine {
    patient_id: String,
    probability: f64,
}

/// Import externally produced predictions ({patient_id, probability} lines)
/// and join them with cohort demographics. Unknown patients are skipped with
/// a warning; probabilities outside [0, 1] reject the row.
pub fn load_external_predictions(
    path: &Path,
    members: &[MemberRecord],
) -> Result<(Vec<PredictionRecord>, Vec<String>), ModelError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    let by_id: HashMap<&str, &MemberRecord> =
        members.iter().map(|m| (m.patient_id.as_str(), m)).collect();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ExternalPredictionLine = match serde_json::from_str(line) {
            Ok(p) => p,
            Err(e) => {
                warnings.push(format!("line {lineno}: skipped malformed prediction: {e}"));
                continue;
            }
        };
        if !(0.0..=1.0).contains(&parsed.probability) {
            warnings.push(format!(
                "line {lineno}: rejected prediction for {}: probability {} outside [0, 1]",
                parsed.patient_id, parsed.probability
            ));
            continue;
        }
        let Some(member) = by_id.get(parsed.patient_id.as_str()) else {
            warnings.push(format!(
                "line {lineno}: prediction references unknown patient {:?}; skipped",
                parsed.patient_id
            ));
            continue;
        };
        records.push(PredictionRecord {
            patient_id: parsed.patient_id,
            true_label: member.label,
            probability: parsed.probability,
            attributes: member.attributes(),
            bin: member.bin,
        });
    }
    Ok((records, warnings))
}
