//! Data-centric de-biasing transforms: random sentence filtering, TF-IDF
//! informativeness filtering, and gender-word neutralization, plus their
//! composition into pipelines.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexical::{count_tokens, split_sentences, tokenize, GenderLexicon, TfIdfModel};
use crate::seeded_rng;

#[derive(Debug, Error)]
pub enum DebiasError {
    #[error("invalid fraction {0}; expected a value in [0, 1)")]
    InvalidFraction(f64),
    #[error("tfidf_filt requires a fitted TF-IDF model")]
    MissingModel,
    #[error("unknown transform {0:?}; expected rnd_filt, tfidf_filt, or gen_sub")]
    UnknownTransform(String),
}

/// Byte range of one detected name token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

/// Pluggable name detector. The default heuristic flags capitalized
/// mid-sentence tokens outside the term/stopword lists and any token found in
/// the first-name dictionary; a learned tagger can be swapped in behind this
/// trait.
pub trait NameDetector {
    fn detect(&self, text: &str) -> Vec<Span>;
}

/// The shipped detector: dictionary hits at any position plus the
/// capitalization heuristic mid-sentence.
pub struct HeuristicNameDetector<'a> {
    pub lexicon: &'a GenderLexicon,
}

impl NameDetector for HeuristicNameDetector<'_> {
    fn detect(&self, text: &str) -> Vec<Span> {
        let mut spans = Vec::new();
        for token in scan_tokens(text) {
            let word = token.span.text(text);
            let lower = word.to_lowercase();
            if self.lexicon.first_names.contains(&lower) {
                spans.push(token.span);
                continue;
            }
            let capitalized = word.chars().next().map(char::is_uppercase).unwrap_or(false);
            if capitalized
                && !token.sentence_initial
                && word.chars().all(char::is_alphabetic)
                && !self.lexicon.terms.contains(&lower)
                && !self.lexicon.stopwords.contains(&lower)
            {
                spans.push(token.span);
            }
        }
        spans
    }
}

/// Detect name token spans, non-overlapping, left to right.
pub fn detect_names(text: &str, lexicon: &GenderLexicon) -> Vec<Span> {
    HeuristicNameDetector { lexicon }.detect(text)
}

struct ScannedToken {
    span: Span,
    sentence_initial: bool,
}

/// Alphanumeric token runs with their byte spans and whether they open a
/// sentence (start of text, or only whitespace since a newline or .?! run).
fn scan_tokens(text: &str) -> Vec<ScannedToken> {
    let mut tokens = Vec::new();
    let mut sentence_initial = true;
    let mut start: Option<usize> = None;
    for (idx, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(idx);
            }
        } else {
            if let Some(s) = start.take() {
                tokens.push(ScannedToken { span: Span { start: s, end: idx }, sentence_initial });
                sentence_initial = false;
            }
            if ch == '\n' || ch == '.' || ch == '?' || ch == '!' {
                sentence_initial = true;
            }
        }
    }
    if let Some(s) = start {
        tokens.push(ScannedToken { span: Span { start: s, end: text.len() }, sentence_initial });
    }
    tokens
}

/// Character-level Levenshtein distance.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            curr[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            self.parent[x] = self.find(self.parent[x]);
        }
        self.parent[x]
    }

    fn union(&mut self, x: usize, y: usize) {
        let rx = self.find(x);
        let ry = self.find(y);
        if rx == ry {
            return;
        }
        match self.rank[rx].cmp(&self.rank[ry]) {
            std::cmp::Ordering::Less => self.parent[rx] = ry,
            std::cmp::Ordering::Greater => self.parent[ry] = rx,
            std::cmp::Ordering::Equal => {
                self.parent[ry] = rx;
                self.rank[rx] += 1;
            }
        }
    }
}

/// Group case-folded name forms by normalized edit distance: connected
/// components under d(a,b)/max(|a|,|b|) <= max_norm_distance. Transitive
/// chaining can merge distant forms; accepted.
pub fn group_names(names: &BTreeSet<String>, max_norm_distance: f64) -> Vec<Vec<String>> {
    let forms: Vec<&String> = names.iter().collect();
    let mut uf = UnionFind::new(forms.len());
    for i in 0..forms.len() {
        for j in (i + 1)..forms.len() {
            let d = edit_distance(forms[i], forms[j]) as f64;
            let max_len = forms[i].chars().count().max(forms[j].chars().count()) as f64;
            if max_len > 0.0 && d / max_len <= max_norm_distance {
                uf.union(i, j);
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (idx, form) in forms.iter().enumerate() {
        components.entry(uf.find(idx)).or_default().push((*form).clone());
    }
    components.into_values().collect()
}

/// Default normalized-distance threshold for name grouping.
pub const NAME_GROUP_DISTANCE: f64 = 0.25;

/// Replace detected names with per-note "personK" identifiers (enumerated by
/// first appearance, variants grouped by character similarity), then map
/// gendered pronouns to their neutral forms, preserving leading
/// capitalization. All other bytes are unchanged.
pub fn gen_sub(text: &str, lexicon: &GenderLexicon) -> String {
    let detector = HeuristicNameDetector { lexicon };
    gen_sub_with_detector(text, &detector, lexicon)
}

/// [`gen_sub`] with a caller-supplied name detector.
pub fn gen_sub_with_detector(
    text: &str,
    detector: &dyn NameDetector,
    lexicon: &GenderLexicon,
) -> String {
    let spans = detector.detect(text);

    // Group surface forms and assign identifiers in order of first appearance.
    let forms: BTreeSet<String> =
        spans.iter().map(|s| s.text(text).to_lowercase()).collect();
    let groups = group_names(&forms, NAME_GROUP_DISTANCE);
    let mut group_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (gid, group) in groups.iter().enumerate() {
        for form in group {
            group_of.insert(form.as_str(), gid);
        }
    }
    let mut identifier_of: BTreeMap<usize, String> = BTreeMap::new();
    let mut next_id = 1usize;
    let mut renamed = String::with_capacity(text.len());
    let mut cursor = 0usize;
    for span in &spans {
        let gid = group_of[span.text(text).to_lowercase().as_str()];
        let identifier = identifier_of
            .entry(gid)
            .or_insert_with(|| {
                let id = format!("person{next_id}");
                next_id += 1;
                id
            })
            .clone();
        renamed.push_str(&text[cursor..span.start]);
        renamed.push_str(&identifier);
        cursor = span.end;
    }
    renamed.push_str(&text[cursor..]);

    // Pronoun substitution on the name-replaced text.
    let mut out = String::with_capacity(renamed.len());
    let mut cursor = 0usize;
    for token in scan_tokens(&renamed) {
        let word = token.span.text(&renamed);
        let lower = word.to_lowercase();
        if let Some(neutral) = lexicon.pronoun_map.get(&lower) {
            out.push_str(&renamed[cursor..token.span.start]);
            if word.chars().next().map(char::is_uppercase).unwrap_or(false) {
                let mut chars = neutral.chars();
                if let Some(first) = chars.next() {
                    out.extend(first.to_uppercase());
                    out.push_str(chars.as_str());
                }
            } else {
                out.push_str(neutral);
            }
            cursor = token.span.end;
        }
    }
    out.push_str(&renamed[cursor..]);
    out
}

/// Per-sentence informativeness score: mean tf-idf over content tokens.
#[derive(Debug, Clone, Serialize)]
pub struct SentenceScore {
    pub index: usize,
    pub score: f64,
    pub sentence: String,
}

/// Score every sentence of a document against a fitted model. Content tokens
/// are stopword-cleaned; a sentence with no content tokens scores 0.
pub fn score_sentences(
    document: &str,
    model: &TfIdfModel,
    stopwords: &HashSet<String>,
) -> Vec<SentenceScore> {
    let doc_counts = count_tokens(&tokenize(document, stopwords));
    split_sentences(document)
        .iter()
        .enumerate()
        .map(|(index, sentence)| {
            let tokens = tokenize(sentence, stopwords);
            SentenceScore {
                index,
                score: model.sentence_score(&tokens, &doc_counts),
                sentence: (*sentence).to_string(),
            }
        })
        .collect()
}

/// Remove the floor(fraction * S) lowest-scoring sentences (ties: earlier
/// index first); remaining sentences keep their order, joined one per line.
/// Returns the document unchanged with a flag when it has no sentences.
pub fn tfidf_filt(
    document: &str,
    model: &TfIdfModel,
    fraction: f64,
    stopwords: &HashSet<String>,
) -> Result<(String, bool), DebiasError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(DebiasError::InvalidFraction(fraction));
    }
    let scored = score_sentences(document, model, stopwords);
    let total = scored.len();
    if total == 0 {
        return Ok((document.to_string(), true));
    }
    let n_remove = (fraction * total as f64).floor() as usize;
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| {
        scored[a]
            .score
            .partial_cmp(&scored[b].score)
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let removed: BTreeSet<usize> = order.into_iter().take(n_remove).collect();
    let kept: Vec<&str> = scored
        .iter()
        .filter(|s| !removed.contains(&s.index))
        .map(|s| s.sentence.as_str())
        .collect();
    Ok((kept.join("\n"), false))
}

/// Remove floor(fraction * S) sentences chosen uniformly without replacement
/// under the seed; remaining sentences keep their order.
pub fn rnd_filt(document: &str, fraction: f64, seed: u64) -> Result<(String, bool), DebiasError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(DebiasError::InvalidFraction(fraction));
    }
    let sentences = split_sentences(document);
    let total = sentences.len();
    if total == 0 {
        return Ok((document.to_string(), true));
    }
    let n_remove = (fraction * total as f64).floor() as usize;
    let mut rng = seeded_rng(seed, &["rnd_filt"]);
    // floyd-style sample of removal indices
    let mut removed: BTreeSet<usize> = BTreeSet::new();
    for j in (total - n_remove)..total {
        let t = rng.gen_range(0..=j);
        if !removed.insert(t) {
            removed.insert(j);
        }
    }
    let kept: Vec<&str> = sentences
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, s)| *s)
        .collect();
    Ok((kept.join("\n"), false))
}

/// One step of a de-biasing pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Transform {
    RndFilt { fraction: f64 },
    TfidfFilt { fraction: f64 },
    GenSub,
}

/// Parse a comma-separated pipeline spec such as "tfidf_filt,gen_sub".
pub fn parse_pipeline(spec: &str, fraction: f64) -> Result<Vec<Transform>, DebiasError> {
    spec.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "rnd_filt" => Ok(Transform::RndFilt { fraction }),
            "tfidf_filt" => Ok(Transform::TfidfFilt { fraction }),
            "gen_sub" => Ok(Transform::GenSub),
            other => Err(DebiasError::UnknownTransform(other.to_string())),
        })
        .collect()
}

/// Shared context for pipeline application.
pub struct TransformContext<'a> {
    /// Fitted on the training documents; required by tfidf_filt.
    pub tfidf: Option<&'a TfIdfModel>,
    pub lexicon: &'a GenderLexicon,
    pub stopwords: &'a HashSet<String>,
    /// Run seed; per-document randomness derives from (seed, doc_id).
    pub seed: u64,
}

/// Apply transforms left to right. Returns the transformed document and any
/// flags raised (currently: empty documents passed through filters).
pub fn compose(
    document: &str,
    doc_id: &str,
    pipeline: &[Transform],
    ctx: &TransformContext<'_>,
) -> Result<(String, Vec<String>), DebiasError> {
    let mut doc = document.to_string();
    let mut flags = Vec::new();
    for step in pipeline {
        match step {
            Transform::RndFilt { fraction } => {
                let seed = crate::derive_seed(ctx.seed, &["rnd_filt", doc_id]);
                let (next, flagged) = rnd_filt(&doc, *fraction, seed)?;
                if flagged {
                    flags.push(format!("rnd_filt: document {doc_id} has no sentences"));
                }
                doc = next;
            }
            Transform::TfidfFilt { fraction } => {
                let model = ctx.tfidf.ok_or(DebiasError::MissingModel)?;
                let (next, flagged) = tfidf_filt(&doc, model, *fraction, ctx.stopwords)?;
                if flagged {
                    flags.push(format!("tfidf_filt: document {doc_id} has no sentences"));
                }
                doc = next;
            }
            Transform::GenSub => {
                doc = gen_sub(&doc, ctx.lexicon);
            }
        }
    }
    Ok((doc, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lexicon() -> GenderLexicon {
        GenderLexicon::with_defaults()
    }

    #[test]
    fn detect_names_dictionary_and_heuristic() {
        let lex = lexicon();
        let spans = detect_names("Jonathan reports anxiety", &lex);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].text("Jonathan reports anxiety"), "Jonathan");

        // lowercase mid-sentence, no dictionary hit: nothing
        assert!(detect_names("Patient denies pain", &lex).is_empty());

        // sentence-initial capitalized non-dictionary word: documented miss
        assert!(detect_names("Smith was seen", &lex).is_empty());

        // capitalized mid-sentence non-dictionary word: flagged
        let text = "saw Smith today";
        let spans = detect_names(text, &lex);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].text(text), "Smith");

        // term-lexicon words and stopwords are exempt from the heuristic
        assert!(detect_names("denies Anxiety today", &lex).is_empty());
    }

    #[test]
    fn group_names_variant_cluster() {
        let names: BTreeSet<String> =
            ["jonathan", "johnathan", "johnatan"].iter().map(|s| s.to_string()).collect();
        let groups = group_names(&names, NAME_GROUP_DISTANCE);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 3);

        let names: BTreeSet<String> = ["anna", "brett"].iter().map(|s| s.to_string()).collect();
        assert_eq!(group_names(&names, NAME_GROUP_DISTANCE).len(), 2);
    }

    #[test]
    fn group_names_chains_transitively() {
        // each neighbour is within distance, the extremes are not; one group
        let names: BTreeSet<String> =
            ["aaaa", "aaab", "aabb", "abbb", "bbbb"].iter().map(|s| s.to_string()).collect();
        let groups = group_names(&names, NAME_GROUP_DISTANCE);
        assert_eq!(groups.len(), 1);
        // oracle: brute-force pairwise matrix + connected components agrees
        let forms: Vec<&String> = names.iter().collect();
        let mut adj = vec![vec![false; forms.len()]; forms.len()];
        for i in 0..forms.len() {
            for j in 0..forms.len() {
                let d = edit_distance(forms[i], forms[j]) as f64;
                let m = forms[i].len().max(forms[j].len()) as f64;
                adj[i][j] = i != j && d / m <= NAME_GROUP_DISTANCE;
            }
        }
        let mut seen = vec![false; forms.len()];
        let mut components = 0;
        for s in 0..forms.len() {
            if seen[s] {
                continue;
            }
            components += 1;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                for (w, &linked) in adj[v].iter().enumerate() {
                    if linked && !seen[w] {
                        stack.push(w);
                    }
                }
            }
        }
        assert_eq!(groups.len(), components);
    }

    #[test]
    fn edit_distance_basics() {
        assert_eq!(edit_distance("jonathan", "johnathan"), 1);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("same", "same"), 0);
    }

    #[test]
    fn gen_sub_examples() {
        let lex = lexicon();
        assert_eq!(
            gen_sub("She told him Jonathan was late.", &lex),
            "They told them person1 was late."
        );
        assert_eq!(
            gen_sub("Johnathan saw Jonathan. Anna called.", &lex),
            "person1 saw person1. person2 called."
        );
        // no names or pronouns: identity
        let plain = "patient reports steady progress.";
        assert_eq!(gen_sub(plain, &lex), plain);
    }

    #[test]
    fn gen_sub_preserves_capitalization_and_bytes() {
        let lex = lexicon();
        assert_eq!(gen_sub("Her mother called her.", &lex), "Their mother called their.");
        assert_eq!(gen_sub("he said; she agreed!", &lex), "they said; they agreed!");
    }

    #[test]
    fn gen_sub_idempotent() {
        let lex = lexicon();
        let text = "She told him Jonathan was late. Johnathan saw Anna, and Anna waved.";
        let once = gen_sub(text, &lex);
        let twice = gen_sub(&once, &lex);
        assert_eq!(once, twice);
        // the output carries no detector positives and no mapped pronouns
        assert!(detect_names(&once, &lex).is_empty());
        for token in crate::lexical::tokenize_keep_stopwords(&once) {
            assert!(!lex.pronouns.contains(&token), "residual pronoun {token}");
        }
    }

    #[test]
    fn tfidf_filt_keeps_keyword_sentences() {
        let sw = crate::lexical::default_stopwords();
        // corpus: the keyword appears once across docs, filler everywhere
        let docs: Vec<Vec<String>> = vec![
            tokenize("filler words everywhere. cardialgia repeated cardialgia.", sw),
            tokenize("filler words everywhere.", sw),
            tokenize("filler words everywhere.", sw),
        ];
        let refs: Vec<&[String]> = docs.iter().map(|d| d.as_slice()).collect();
        let model = TfIdfModel::fit(refs).unwrap();
        let doc = "filler words everywhere.\nmore filler words.\nfiller again here.\ncardialgia repeated cardialgia today.\nfiller words everywhere.";
        let (out, flagged) = tfidf_filt(doc, &model, 0.2, sw).unwrap();
        assert!(!flagged);
        assert!(out.contains("cardialgia"));
        assert_eq!(split_sentences(&out).len(), 4);
    }

    #[test]
    fn tfidf_filt_tie_rule_removes_earliest() {
        let sw = HashSet::new();
        let docs: Vec<Vec<String>> = vec![tokenize("alpha beta.", &sw)];
        let refs: Vec<&[String]> = docs.iter().map(|d| d.as_slice()).collect();
        let model = TfIdfModel::fit(refs).unwrap();
        // five identical sentences: scores all equal, first floor(0.4*5)=2 go
        let doc = "alpha beta one.\nalpha beta one.\nalpha beta one.\nalpha beta one.\nalpha beta one.";
        let (out, _) = tfidf_filt(doc, &model, 0.4, &sw).unwrap();
        assert_eq!(split_sentences(&out).len(), 3);
    }

    #[test]
    fn filters_identity_at_fraction_zero_and_empty_flag() {
        let sw = HashSet::new();
        let docs: Vec<Vec<String>> = vec![tokenize("a b.", &sw)];
        let refs: Vec<&[String]> = docs.iter().map(|d| d.as_slice()).collect();
        let model = TfIdfModel::fit(refs).unwrap();
        let doc = "a b.\nc d.";
        let (out, flagged) = tfidf_filt(doc, &model, 0.0, &sw).unwrap();
        assert_eq!(split_sentences(&out), split_sentences(doc));
        assert!(!flagged);

        let (out, flagged) = tfidf_filt("", &model, 0.2, &sw).unwrap();
        assert_eq!(out, "");
        assert!(flagged);

        let (out, flagged) = rnd_filt("", 0.2, 7).unwrap();
        assert_eq!(out, "");
        assert!(flagged);
        assert!(rnd_filt("x.", 1.0, 7).is_err());
    }

    #[test]
    fn rnd_filt_removes_exactly_floor() {
        let doc: String =
            (0..10).map(|i| format!("sentence number {i}.")).collect::<Vec<_>>().join(" ");
        let (out, _) = rnd_filt(&doc, 0.2, 42).unwrap();
        assert_eq!(split_sentences(&out).len(), 8);
        // single sentence: floor(0.2 * 1) = 0 removed
        let (single, _) = rnd_filt("only one here.", 0.2, 42).unwrap();
        assert_eq!(split_sentences(&single).len(), 1);
        // deterministic under the same seed
        assert_eq!(rnd_filt(&doc, 0.2, 42).unwrap().0, out);
    }

    #[test]
    fn compose_matches_manual_application() {
        let sw = crate::lexical::default_stopwords();
        let lex = lexicon();
        let train_docs: Vec<Vec<String>> = vec![
            tokenize("anxiety coping notes here.", sw),
            tokenize("routine filler visit words.", sw),
        ];
        let refs: Vec<&[String]> = train_docs.iter().map(|d| d.as_slice()).collect();
        let model = TfIdfModel::fit(refs).unwrap();
        let ctx = TransformContext { tfidf: Some(&model), lexicon: &lex, stopwords: sw, seed: 3 };
        let doc = "She reported anxiety. Jonathan waved hello. routine filler visit words. filler again.";

        let pipeline = parse_pipeline("tfidf_filt,gen_sub", 0.2).unwrap();
        let (composed, _) = compose(doc, "D1", &pipeline, &ctx).unwrap();
        let (manual, _) = tfidf_filt(doc, &model, 0.2, sw).unwrap();
        let manual = gen_sub(&manual, &lex);
        assert_eq!(composed, manual);

        // empty pipeline: identity
        let (same, _) = compose(doc, "D1", &[], &ctx).unwrap();
        assert_eq!(same, doc);

        // determinism
        let again = compose(doc, "D1", &pipeline, &ctx).unwrap().0;
        assert_eq!(composed, again);
    }

    #[test]
    fn parse_pipeline_rejects_unknown() {
        assert!(parse_pipeline("tfidf_filt,nope", 0.2).is_err());
        let p = parse_pipeline("rnd_filt", 0.3).unwrap();
        assert_eq!(p, vec![Transform::RndFilt { fraction: 0.3 }]);
    }

    proptest! {
        #[test]
        fn gen_sub_idempotent_on_random_text(text in "[A-Za-z .,!?\n]{0,200}") {
            let lex = lexicon();
            let once = gen_sub(&text, &lex);
            prop_assert_eq!(gen_sub(&once, &lex), once.clone());
            prop_assert!(detect_names(&once, &lex).is_empty());
        }

        #[test]
        fn filters_remove_exact_counts(n in 1usize..40, frac in 0.0f64..0.9, seed in 0u64..1000) {
            let doc: String = (0..n).map(|i| format!("token{i} filler.")).collect::<Vec<_>>().join(" ");
            let (out, _) = rnd_filt(&doc, frac, seed).unwrap();
            let expected = n - (frac * n as f64).floor() as usize;
            prop_assert_eq!(split_sentences(&out).len(), expected);
        }
    }
}
