//! Tokenization, vocabularies, TF-IDF, sentence segmentation, and the textual
//! distribution statistics reported per demographic subgroup.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Set of unique tokens observed in a document group.
pub type Vocabulary = BTreeSet<String>;

#[derive(Debug, Error, PartialEq)]
pub enum LexicalError {
    #[error("both vocabularies are empty; similarity is undefined")]
    EmptyVocabularies,
    #[error("identical vocabularies; familiarity is undefined (division by zero)")]
    IdenticalVocabularies,
    #[error("no documents supplied")]
    NoDocuments,
}

const STOPWORDS_TXT: &str = include_str!("../data/stopwords.txt");
const FIRST_NAMES_TXT: &str = include_str!("../data/first_names.txt");
const TERMS_TXT: &str = include_str!("../data/terms.txt");

fn wordlist(raw: &str) -> HashSet<String> {
    raw.split_whitespace()
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// The shipped English stopword list (lowercase, includes contraction pieces
/// and the personal pronouns).
pub fn default_stopwords() -> &'static HashSet<String> {
    static LIST: OnceLock<HashSet<String>> = OnceLock::new();
    LIST.get_or_init(|| wordlist(STOPWORDS_TXT))
}

/// The shipped first-name dictionary, case-folded.
pub fn default_first_names() -> &'static HashSet<String> {
    static LIST: OnceLock<HashSet<String>> = OnceLock::new();
    LIST.get_or_init(|| wordlist(FIRST_NAMES_TXT))
}

/// The shipped medical-term lexicon (one term per line, case-folded).
pub fn default_terms() -> &'static HashSet<String> {
    static LIST: OnceLock<HashSet<String>> = OnceLock::new();
    LIST.get_or_init(|| wordlist(TERMS_TXT))
}

/// Load a lexicon file: one entry per line, case-folded, blank lines skipped.
pub fn load_wordlist(path: &std::path::Path) -> std::io::Result<HashSet<String>> {
    Ok(wordlist(&std::fs::read_to_string(path)?))
}

/// Case-fold and split on whitespace after mapping punctuation to spaces,
/// then drop stopwords.
///
/// Punctuation is any non-alphanumeric character, so hyphens and apostrophes
/// split tokens ("re-check" -> "re", "check").
pub fn tokenize(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    tokenize_keep_stopwords(text)
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect()
}

/// Same token stream as [`tokenize`] but without stopword removal. Used where
/// function words must stay observable (biased-word rates, model features).
pub fn tokenize_keep_stopwords(text: &str) -> Vec<String> {
    let mapped: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    mapped
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

/// Count of whitespace-separated chunks of the raw text. No punctuation
/// stripping, no stopword removal.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// |A ∩ B| / |A ∪ B|.
pub fn jaccard(a: &Vocabulary, b: &Vocabulary) -> Result<f64, LexicalError> {
    let union = a.union(b).count();
    if union == 0 {
        return Err(LexicalError::EmptyVocabularies);
    }
    let inter = a.intersection(b).count();
    Ok(inter as f64 / union as f64)
}

/// |A ∪ B| / |A Δ B|, equivalently 1 / (1 − jaccard).
///
/// Undefined when the vocabularies are identical (empty symmetric difference).
pub fn familiarity(a: &Vocabulary, b: &Vocabulary) -> Result<f64, LexicalError> {
    let union = a.union(b).count();
    if union == 0 {
        return Err(LexicalError::EmptyVocabularies);
    }
    let sym_diff = a.symmetric_difference(b).count();
    if sym_diff == 0 {
        return Err(LexicalError::IdenticalVocabularies);
    }
    Ok(union as f64 / sym_diff as f64)
}

/// Percentage of tokens found in the lexicon. Empty token list counts as 0.
pub fn term_percentage(tokens: &[String], lexicon: &HashSet<String>) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    let hits = tokens.iter().filter(|t| lexicon.contains(t.as_str())).count();
    100.0 * hits as f64 / tokens.len() as f64
}

/// Gendered-language lexicon: the six pronouns, their neutral replacements,
/// and the word lists backing the default name detector.
#[derive(Debug, Clone)]
pub struct GenderLexicon {
    /// The gendered pronouns counted as biased words.
    pub pronouns: BTreeSet<String>,
    /// Pronoun -> gender-neutral replacement.
    pub pronoun_map: BTreeMap<String, String>,
    /// First-name dictionary, case-folded.
    pub first_names: HashSet<String>,
    /// Medical terms excluded from the capitalisation heuristic.
    pub terms: HashSet<String>,
    /// Stopwords excluded from the capitalisation heuristic.
    pub stopwords: HashSet<String>,
}

impl GenderLexicon {
    pub fn with_defaults() -> Self {
        let pronoun_map: BTreeMap<String, String> = [
            ("he", "they"),
            ("she", "they"),
            ("him", "them"),
            ("his", "their"),
            ("her", "their"),
            ("hers", "theirs"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        GenderLexicon {
            pronouns: pronoun_map.keys().cloned().collect(),
            pronoun_map,
            first_names: default_first_names().clone(),
            terms: default_terms().clone(),
            stopwords: default_stopwords().clone(),
        }
    }

    /// Replace the pronoun mapping (config override). Keys become the counted
    /// pronoun set.
    pub fn with_pronoun_map(mut self, map: BTreeMap<String, String>) -> Self {
        self.pronouns = map.keys().cloned().collect();
        self.pronoun_map = map;
        self
    }

    /// True when a lowercase token counts as gender-biased: a mapped pronoun
    /// or a dictionary first name.
    pub fn is_biased_token(&self, token: &str) -> bool {
        self.pronouns.contains(token) || self.first_names.contains(token)
    }
}

/// Percentage of gender-biased tokens (detected names + pronouns) over all
/// tokens. Tokenization keeps stopwords, since pronouns are stopwords.
pub fn biased_word_percentage(text: &str, lexicon: &GenderLexicon) -> f64 {
    let tokens = tokenize_keep_stopwords(text);
    if tokens.is_empty() {
        return 0.0;
    }
    let name_spans = crate::debias::detect_names(text, lexicon);
    let pronouns = tokens
        .iter()
        .filter(|t| lexicon.pronouns.contains(t.as_str()))
        .count();
    100.0 * (name_spans.len() + pronouns) as f64 / tokens.len() as f64
}

/// Corpus document statistics backing TF-IDF scoring: document count and
/// per-token document frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfIdfModel {
    document_count: usize,
    document_frequency: HashMap<String, usize>,
}

impl TfIdfModel {
    /// Fit from tokenized documents.
    pub fn fit<'a, I>(documents: I) -> Result<Self, LexicalError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut document_count = 0usize;
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in documents {
            document_count += 1;
            let uniq: HashSet<&String> = doc.iter().collect();
            for token in uniq {
                *df.entry(token.clone()).or_insert(0) += 1;
            }
        }
        if document_count == 0 {
            return Err(LexicalError::NoDocuments);
        }
        Ok(TfIdfModel { document_count, document_frequency: df })
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn document_frequency(&self, token: &str) -> usize {
        self.document_frequency.get(token).copied().unwrap_or(0)
    }

    /// Smoothed inverse document frequency: ln((1+N)/(1+df)) + 1. Strictly
    /// positive and monotone decreasing in df; a token present in every
    /// document scores exactly 1.
    pub fn idf(&self, token: &str) -> f64 {
        let n = self.document_count as f64;
        let df = self.document_frequency(token) as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// tf·idf for a token against a document given as a token->count map.
    /// Unseen-in-document tokens score 0.
    pub fn score(&self, token: &str, doc_counts: &BTreeMap<String, usize>) -> f64 {
        let tf = doc_counts.get(token).copied().unwrap_or(0) as f64;
        if tf == 0.0 {
            return 0.0;
        }
        tf * self.idf(token)
    }

    /// Mean tf·idf over the sentence's content tokens; 0 when the sentence has
    /// no content tokens.
    pub fn sentence_score(
        &self,
        sentence_tokens: &[String],
        doc_counts: &BTreeMap<String, usize>,
    ) -> f64 {
        if sentence_tokens.is_empty() {
            return 0.0;
        }
        let sum: f64 = sentence_tokens.iter().map(|t| self.score(t, doc_counts)).sum();
        sum / sentence_tokens.len() as f64
    }
}

/// Token->count map for one document (sorted keys keep downstream float sums
/// deterministic).
pub fn count_tokens(tokens: &[String]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    counts
}

/// Split into sentences at newlines and at [.?!] runs followed by whitespace.
/// Delimiters stay attached to the preceding sentence. Deliberately simple:
/// abbreviations like "Dr. Smith" over-split.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\n' {
            push_sentence(text, start, i, &mut sentences);
            start = i + 1;
            i += 1;
        } else if b == b'.' || b == b'?' || b == b'!' {
            let mut j = i + 1;
            while j < bytes.len() && matches!(bytes[j], b'.' | b'?' | b'!') {
                j += 1;
            }
            if j >= bytes.len() || bytes[j].is_ascii_whitespace() {
                push_sentence(text, start, j, &mut sentences);
                start = j;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    push_sentence(text, start, bytes.len(), &mut sentences);
    sentences
}

fn push_sentence<'a>(text: &'a str, start: usize, end: usize, out: &mut Vec<&'a str>) {
    if start >= end {
        return;
    }
    let s = text[start..end].trim();
    if !s.is_empty() {
        out.push(s);
    }
}

/// Per-subgroup textual distribution statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionStats {
    pub group: String,
    pub members: usize,
    /// Mean raw word count of the concatenated patient documents.
    pub avg_length_words: f64,
    /// Mean percentage of lexicon terms among content tokens.
    pub term_pct: f64,
    /// Mean percentage of gender-biased words (names + pronouns).
    pub biased_pct: f64,
}

/// Jaccard/familiarity between two pooled subgroup vocabularies. `familiarity`
/// is None when undefined (identical vocabularies), with `flag` explaining.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabularySimilarity {
    pub group_a: String,
    pub group_b: String,
    pub jaccard: f64,
    pub familiarity: Option<f64>,
    pub flag: Option<String>,
}

/// The Table-5-shaped per-bin report: per-group stats plus pairwise
/// vocabulary and term-vocabulary similarities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinStatsReport {
    pub attribute: String,
    pub groups: Vec<DistributionStats>,
    /// Groups present in the bin with zero usable members, omitted from stats.
    pub empty_groups: Vec<String>,
    pub vocab_similarity: Vec<VocabularySimilarity>,
    pub term_similarity: Vec<VocabularySimilarity>,
}

/// Compute per-subgroup distribution statistics over concatenated patient
/// documents. `members` pairs each document with its subgroup value.
pub fn bin_stats(
    attribute: &str,
    members: &[(String, String)],
    terms: &HashSet<String>,
    gender: &GenderLexicon,
    stopwords: &HashSet<String>,
) -> BinStatsReport {
    let mut by_group: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (value, doc) in members {
        by_group.entry(value.as_str()).or_default().push(doc.as_str());
    }

    let mut groups = Vec::new();
    let mut empty_groups = Vec::new();
    let mut vocabs: BTreeMap<&str, Vocabulary> = BTreeMap::new();
    let mut term_vocabs: BTreeMap<&str, Vocabulary> = BTreeMap::new();

    for (value, docs) in &by_group {
        if docs.is_empty() {
            empty_groups.push((*value).to_string());
            continue;
        }
        let mut len_sum = 0.0;
        let mut term_sum = 0.0;
        let mut biased_sum = 0.0;
        let mut vocab = Vocabulary::new();
        for doc in docs {
            len_sum += word_count(doc) as f64;
            let tokens = tokenize(doc, stopwords);
            term_sum += term_percentage(&tokens, terms);
            biased_sum += biased_word_percentage(doc, gender);
            vocab.extend(tokens);
        }
        let n = docs.len() as f64;
        let term_vocab: Vocabulary =
            vocab.iter().filter(|t| terms.contains(t.as_str())).cloned().collect();
        groups.push(DistributionStats {
            group: (*value).to_string(),
            members: docs.len(),
            avg_length_words: len_sum / n,
            term_pct: term_sum / n,
            biased_pct: biased_sum / n,
        });
        vocabs.insert(value, vocab);
        term_vocabs.insert(value, term_vocab);
    }

    let keys: Vec<&str> = vocabs.keys().copied().collect();
    let mut vocab_similarity = Vec::new();
    let mut term_similarity = Vec::new();
    for i in 0..keys.len() {
        for j in (i + 1)..keys.len() {
            vocab_similarity.push(similarity(keys[i], keys[j], &vocabs[keys[i]], &vocabs[keys[j]]));
            term_similarity.push(similarity(
                keys[i],
                keys[j],
                &term_vocabs[keys[i]],
                &term_vocabs[keys[j]],
            ));
        }
    }

    BinStatsReport {
        attribute: attribute.to_string(),
        groups,
        empty_groups,
        vocab_similarity,
        term_similarity,
    }
}

fn similarity(a_name: &str, b_name: &str, a: &Vocabulary, b: &Vocabulary) -> VocabularySimilarity {
    let (jaccard, familiarity, flag) = match jaccard(a, b) {
        Ok(j) => match familiarity(a, b) {
            Ok(f) => (j, Some(f), None),
            Err(e) => (j, None, Some(e.to_string())),
        },
        Err(e) => (0.0, None, Some(e.to_string())),
    };
    VocabularySimilarity {
        group_a: a_name.to_string(),
        group_b: b_name.to_string(),
        jaccard,
        familiarity,
        flag,
    }
}
