//! Local surrogate explanations for individual documents and the
//! influential-word audit aggregating them into per-class vocabularies.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Label;
use crate::lexical::GenderLexicon;
use crate::model::PredictionRecord;
use crate::seeded_rng;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("document {0} has no tokens to explain")]
    EmptyDocument(String),
    #[error("surrogate system is singular")]
    SingularSystem,
}

/// Knobs for the perturbation surrogate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExplainOptions {
    /// Number of perturbed samples.
    pub n_samples: usize,
    /// Kernel width; None selects 0.75 * sqrt(distinct tokens).
    pub kernel_width: Option<f64>,
    /// Words returned per explanation.
    pub top_k: usize,
    /// L2 regularization of the surrogate fit.
    pub ridge: f64,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions { n_samples: 500, kernel_width: None, top_k: 5, ridge: 1e-3 }
    }
}

/// Ranked influential words for one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Explanation {
    pub doc_id: String,
    pub predicted_class: Label,
    pub confidence: f64,
    /// (word, surrogate coefficient), ranked by |coefficient| descending.
    pub words: Vec<(String, f64)>,
    /// All coefficients were negligible (constant classifier).
    pub uninformative: bool,
}

/// Explain one document: perturb by dropping each distinct token's
/// occurrences with probability 0.5, weight samples by proximity to the
/// original presence vector, fit a weighted ridge surrogate, and return the
/// top-k tokens by |coefficient|.
pub fn explain(
    doc_id: &str,
    text: &str,
    predict_fn: &dyn Fn(&str) -> f64,
    opts: &ExplainOptions,
    seed: u64,
) -> Result<Explanation, ExplainError> {
    let tokens = crate::model::model_tokens(text);
    let mut distinct: Vec<String> = Vec::new();
    let mut seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
    for token in &tokens {
        if seen.insert(token.as_str()) {
            distinct.push(token.clone());
        }
    }
    let index: HashMap<&str, usize> =
        distinct.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let m = distinct.len();
    if m == 0 {
        return Err(ExplainError::EmptyDocument(doc_id.to_string()));
    }
    let token_cols: Vec<usize> = tokens.iter().map(|t| index[t.as_str()]).collect();

    let p0 = predict_fn(text);
    let predicted_class = if p0 >= 0.5 { Label::Case } else { Label::Control };
    let confidence = p0.max(1.0 - p0);

    let width = opts.kernel_width.unwrap_or(0.75 * (m as f64).sqrt());
    let mut rng = seeded_rng(seed, &["explain", doc_id]);

    // design matrix rows: presence bits + intercept column
    let dim = m + 1;
    let mut xtwx = vec![0.0f64; dim * dim];
    let mut xtwy = vec![0.0f64; dim];
    let mut keep = vec![true; m];
    let mut parts: Vec<&str> = Vec::with_capacity(tokens.len());
    for _ in 0..opts.n_samples {
        let mut kept = 0usize;
        for flag in keep.iter_mut() {
            *flag = rng.gen::<bool>();
            kept += usize::from(*flag);
        }
        parts.clear();
        for (raw, &col) in tokens.iter().zip(&token_cols) {
            if keep[col] {
                parts.push(raw.as_str());
            }
        }
        let y = predict_fn(&parts.join(" "));
        // cosine distance between the sample and the all-ones vector
        let d = 1.0 - (kept as f64 / m as f64).sqrt();
        let w = (-d * d / (width * width)).exp();

        // accumulate XᵀWX and XᵀWy over (presence bits, 1)
        for a in 0..m {
            if !keep[a] {
                continue;
            }
            let row = a * dim;
            for b in a..m {
                if keep[b] {
                    xtwx[row + b] += w;
                }
            }
            xtwx[row + m] += w;
            xtwy[a] += w * y;
        }
        xtwx[m * dim + m] += w;
        xtwy[m] += w * y;
    }
    // mirror the upper triangle
    for a in 0..dim {
        for b in (a + 1)..dim {
            xtwx[b * dim + a] = xtwx[a * dim + b];
        }
    }
    for j in 0..dim {
        xtwx[j * dim + j] += opts.ridge;
    }
    let beta = solve_dense(&mut xtwx, &mut xtwy, dim)?;

    let mut ranked: Vec<(usize, f64)> =
        beta[..m].iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| {
        b.1.abs().partial_cmp(&a.1.abs()).expect("finite coefficients").then(a.0.cmp(&b.0))
    });
    let uninformative = ranked.first().map(|(_, c)| c.abs() < 1e-3).unwrap_or(true);
    let words = ranked
        .into_iter()
        .take(opts.top_k)
        .map(|(i, c)| (distinct[i].clone(), c))
        .collect();

    Ok(Explanation { doc_id: doc_id.to_string(), predicted_class, confidence, words, uninformative })
}

/// Gaussian elimination with partial pivoting over a row-major square system.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>, ExplainError> {
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-12 {
            return Err(ExplainError::SingularSystem);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in (col + 1)..n {
            sum -= a[col * n + k] * x[k];
        }
        x[col] = sum / a[col * n + col];
    }
    Ok(x)
}

/// One entry of a per-class influence vocabulary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordInfluence {
    pub word: String,
    /// Number of explained examples whose top-k contains the word.
    pub frequency: u32,
    pub mean_abs_weight: f64,
}

/// Frequency vocabulary of influential words for one predicted class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfluenceVocabulary {
    pub class: Label,
    pub examples_explained: usize,
    pub entries: Vec<WordInfluence>,
    /// Percentage of vocabulary entries that are gender-biased words.
    pub biased_pct: f64,
    /// Mean frequency of the biased entries (0 when none).
    pub biased_mean_freq: f64,
    /// Fewer confident examples were available than requested.
    pub truncated: bool,
}

impl InfluenceVocabulary {
    /// Entries ranked by mean |weight| descending.
    pub fn top_influential(&self, n: usize) -> Vec<&WordInfluence> {
        let mut ranked: Vec<&WordInfluence> = self.entries.iter().collect();
        ranked.sort_by(|a, b| {
            b.mean_abs_weight
                .partial_cmp(&a.mean_abs_weight)
                .expect("finite weights")
                .then(a.word.cmp(&b.word))
        });
        ranked.truncate(n);
        ranked
    }

    /// Entries ranked by frequency descending.
    pub fn top_frequent(&self, n: usize) -> Vec<&WordInfluence> {
        let mut ranked: Vec<&WordInfluence> = self.entries.iter().collect();
        ranked.sort_by(|a, b| b.frequency.cmp(&a.frequency).then(a.word.cmp(&b.word)));
        ranked.truncate(n);
        ranked
    }
}

/// Explain the most confident predictions per predicted class and collate the
/// top-k words of each into a frequency vocabulary, reporting the share of
/// gender-biased entries.
#[allow(clippy::too_many_arguments)]
pub fn audit_influential(
    records: &[PredictionRecord],
    docs: &HashMap<String, String>,
    predict_fn: &dyn Fn(&str) -> f64,
    per_class_top: usize,
    lexicon: &GenderLexicon,
    opts: &ExplainOptions,
    seed: u64,
) -> Result<(Vec<InfluenceVocabulary>, Vec<Explanation>, Vec<String>), ExplainError> {
    let mut warnings = Vec::new();
    let mut explanations = Vec::new();
    let mut vocabularies = Vec::new();

    for class in [Label::Case, Label::Control] {
        let mut candidates: Vec<&PredictionRecord> = records
            .iter()
            .filter(|r| {
                let predicted = if r.probability >= 0.5 { Label::Case } else { Label::Control };
                predicted == class && docs.contains_key(&r.patient_id)
            })
            .collect();
        candidates.sort_by(|a, b| {
            let ca = a.probability.max(1.0 - a.probability);
            let cb = b.probability.max(1.0 - b.probability);
            cb.partial_cmp(&ca).expect("finite probabilities").then(a.patient_id.cmp(&b.patient_id))
        });
        let truncated = candidates.len() < per_class_top;
        if truncated {
            warnings.push(format!(
                "class {class}: only {} confident examples available of {per_class_top} requested",
                candidates.len()
            ));
        }
        candidates.truncate(per_class_top);

        let mut collated: BTreeMap<String, (u32, f64)> = BTreeMap::new();
        for record in &candidates {
            let doc = &docs[&record.patient_id];
            let explanation = explain(&record.patient_id, doc, predict_fn, opts, seed)?;
            for (word, weight) in &explanation.words {
                let entry = collated.entry(word.clone()).or_insert((0, 0.0));
                entry.0 += 1;
                entry.1 += weight.abs();
            }
            explanations.push(explanation);
        }

        let entries: Vec<WordInfluence> = collated
            .into_iter()
            .map(|(word, (frequency, weight_sum))| WordInfluence {
                word,
                frequency,
                mean_abs_weight: weight_sum / f64::from(frequency),
            })
            .collect();
        let biased: Vec<&WordInfluence> =
            entries.iter().filter(|e| lexicon.is_biased_token(&e.word)).collect();
        let biased_pct = if entries.is_empty() {
            0.0
        } else {
            100.0 * biased.len() as f64 / entries.len() as f64
        };
        let biased_mean_freq = if biased.is_empty() {
            0.0
        } else {
            biased.iter().map(|e| f64::from(e.frequency)).sum::<f64>() / biased.len() as f64
        };
        vocabularies.push(InfluenceVocabulary {
            class,
            examples_explained: candidates.len(),
            entries,
            biased_pct,
            biased_mean_freq,
            truncated,
        });
    }
    Ok((vocabularies, explanations, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_top_token_is_recovered() {
        // probability rises only with "anxious"; other tokens are inert
        let predict = |text: &str| -> f64 {
            let tokens = crate::model::model_tokens(text);
            let hits = tokens.iter().filter(|t| t.as_str() == "anxious").count() as f64;
            crate::model::sigmoid(1.5 * hits - 1.0)
        };
        let doc = "anxious child seen today with calm parent and steady routine";
        let explanation =
            explain("D1", doc, &predict, &ExplainOptions::default(), 42).unwrap();
        assert_eq!(explanation.words[0].0, "anxious");
        assert!(explanation.words[0].1 > 0.0);
        assert!(!explanation.uninformative);
        assert_eq!(explanation.words.len(), 5);
    }

    #[test]
    fn constant_classifier_is_uninformative() {
        let predict = |_: &str| 0.7;
        let doc = "some words in a document";
        let explanation =
            explain("D1", doc, &predict, &ExplainOptions::default(), 42).unwrap();
        assert!(explanation.uninformative);
        assert!(explanation.words.iter().all(|(_, c)| c.abs() < 1e-3));
        assert_eq!(explanation.predicted_class, Label::Case);
        assert!((explanation.confidence - 0.7).abs() < 1e-12);
    }

    #[test]
    fn empty_document_errors() {
        let predict = |_: &str| 0.5;
        assert!(matches!(
            explain("D1", "...", &predict, &ExplainOptions::default(), 1),
            Err(ExplainError::EmptyDocument(_))
        ));
    }

    #[test]
    fn explanations_deterministic_under_seed() {
        let predict = |text: &str| -> f64 {
            let n = crate::model::model_tokens(text).len() as f64;
            crate::model::sigmoid(0.3 * n - 2.0)
        };
        let doc = "alpha beta gamma delta epsilon zeta";
        let a = explain("D", doc, &predict, &ExplainOptions::default(), 9).unwrap();
        let b = explain("D", doc, &predict, &ExplainOptions::default(), 9).unwrap();
        assert_eq!(a.words, b.words);
    }

    #[test]
    fn audit_collates_per_class_vocabularies() {
        let predict = |text: &str| -> f64 {
            let tokens = crate::model::model_tokens(text);
            let hits = tokens.iter().filter(|t| t.as_str() == "worry").count() as f64;
            crate::model::sigmoid(2.0 * hits - 1.0)
        };
        let mut docs = HashMap::new();
        let mut records = Vec::new();
        for i in 0..6 {
            let (text, label) = if i % 2 == 0 {
                ("worry worry noted at visit", Label::Case)
            } else {
                ("routine visit noted calm", Label::Control)
            };
            let id = format!("P{i}");
            docs.insert(id.clone(), text.to_string());
            records.push(PredictionRecord {
                patient_id: id,
                true_label: label,
                probability: predict(text),
                attributes: BTreeMap::new(),
                bin: 5,
            });
        }
        let lexicon = GenderLexicon::with_defaults();
        let (vocabs, explanations, warnings) = audit_influential(
            &records,
            &docs,
            &predict,
            2,
            &lexicon,
            &ExplainOptions::default(),
            7,
        )
        .unwrap();
        assert_eq!(vocabs.len(), 2);
        assert_eq!(explanations.len(), 4);
        assert!(warnings.is_empty());
        let case_vocab = &vocabs[0];
        assert_eq!(case_vocab.class, Label::Case);
        assert!(case_vocab.entries.iter().any(|e| e.word == "worry"));
        // explained words come only from the explained documents
        for vocab in &vocabs {
            for entry in &vocab.entries {
                assert!(docs.values().any(|d| {
                    crate::model::model_tokens(d).contains(&entry.word)
                }));
            }
        }
        // no gendered words planted: biased share is zero
        assert_eq!(vocabs[0].biased_pct, 0.0);
        assert_eq!(vocabs[0].biased_mean_freq, 0.0);
    }

    #[test]
    fn audit_flags_small_confident_pools() {
        let predict = |_: &str| 0.9;
        let mut docs = HashMap::new();
        docs.insert("P0".to_string(), "visit note".to_string());
        let records = vec![PredictionRecord {
            patient_id: "P0".into(),
            true_label: Label::Case,
            probability: 0.9,
            attributes: BTreeMap::new(),
            bin: 5,
        }];
        let lexicon = GenderLexicon::with_defaults();
        let (vocabs, _, warnings) = audit_influential(
            &records,
            &docs,
            &predict,
            10,
            &lexicon,
            &ExplainOptions::default(),
            7,
        )
        .unwrap();
        assert!(vocabs[0].truncated);
        assert_eq!(warnings.len(), 2); // both classes under-filled
    }
}
