//! Synthetic corpus generator with controllable demographic bias: length
//! disparity, vocabulary divergence, signal dilution, and gendered-word rates,
//! emitting the exact three file shapes the ingest stage consumes.
//!
//! Documents are built sentence by sentence from disjoint word pools:
//!
//! - a small "core" pool repeated often in every chart (low rarity),
//! - a broad shared pool drawn roughly once per note (medium rarity),
//! - sex-specific filler pools (vocabulary divergence knob),
//! - clinical terms from the shipped term lexicon, a per-patient subset
//!   (strong document keywords),
//! - signal terms that mark cases, at a per-sex density.
//!
//! Case documents carry their signal inside term-rich clinical sentences;
//! control documents carry background signal mentions inside low-content
//! filler sentences. Information-density filtering therefore strips
//! background mentions while preserving clinical ones, which is the dilution
//! effect the de-biasing pipeline is designed to exploit.

use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{CodeSet, Label};
use crate::corpus::{DiagnosisEvent, PatientRecord, RawNote, Sex};
use crate::lexical::GenderLexicon;
use crate::seeded_rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

/// Words per generated sentence.
const SENTENCE_WORDS: usize = 10;
/// Size of the always-present core filler pool.
const CORE_WORDS: usize = 50;
/// Terms each patient's chart keeps returning to.
const PATIENT_SHARED_TERMS: usize = 12;
const PATIENT_SEX_TERMS: usize = 8;
/// Signal vocabulary size.
const SIGNAL_TERMS: usize = 30;

/// Generator configuration. Lengths are words per concatenated patient
/// document; densities are signal tokens per word.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub preset: String,
    /// Total patients (cases + controls); an odd count is rounded down to
    /// whole pairs.
    pub n_patients: usize,
    pub female_ratio: f64,
    /// Fixed at 0.5 to mirror the 1:1 cohort design.
    pub case_ratio: f64,
    /// Age bin the cases land in.
    pub bin: u32,
    pub male_length_mean: f64,
    pub male_length_sd: f64,
    pub female_length_mean: f64,
    pub female_length_sd: f64,
    /// Case signal density per sex; the female value models dilution.
    pub male_signal_density: f64,
    pub female_signal_density: f64,
    /// Background signal density in control documents.
    pub background_signal_density: f64,
    /// Target share of lexicon terms among tokens.
    pub term_rate: f64,
    /// Target share of gendered tokens (names + pronouns).
    pub biased_rate: f64,
    /// Label-correlated pronoun rates; when set they override the sex-neutral
    /// biased_rate split (used to plant pronoun-label leakage).
    pub pronoun_case_rate: Option<f64>,
    pub pronoun_control_rate: Option<f64>,
    /// Broad shared filler pool size.
    pub shared_vocab_words: usize,
    /// Per-sex filler pool size (vocabulary divergence knob).
    pub sex_vocab_words: usize,
    pub notes_min: usize,
    pub notes_max: usize,
    pub white_ratio: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Named presets.
    pub fn preset(name: &str, seed: u64) -> Result<Self, SynthError> {
        match name {
            // Bin-5 shaped corpus: male/female lengths and female share from
            // the target cohort, diluted female signal.
            "table5-bin5" => Ok(SynthConfig {
                preset: name.to_string(),
                n_patients: 4188,
                female_ratio: 0.36,
                case_ratio: 0.5,
                bin: 5,
                male_length_mean: 4139.0,
                male_length_sd: 414.0,
                female_length_mean: 3443.0,
                female_length_sd: 344.0,
                male_signal_density: 0.010,
                female_signal_density: 0.007,
                background_signal_density: 0.004,
                term_rate: 0.21,
                biased_rate: 0.030,
                pronoun_case_rate: None,
                pronoun_control_rate: None,
                shared_vocab_words: 3000,
                sex_vocab_words: 2350,
                notes_min: 18,
                notes_max: 24,
                white_ratio: 0.68,
                seed,
            }),
            // No injected disparity anywhere.
            "unbiased" => Ok(SynthConfig {
                preset: name.to_string(),
                n_patients: 2000,
                female_ratio: 0.5,
                case_ratio: 0.5,
                bin: 5,
                male_length_mean: 3800.0,
                male_length_sd: 380.0,
                female_length_mean: 3800.0,
                female_length_sd: 380.0,
                male_signal_density: 0.010,
                female_signal_density: 0.010,
                background_signal_density: 0.004,
                term_rate: 0.21,
                biased_rate: 0.030,
                pronoun_case_rate: None,
                pronoun_control_rate: None,
                shared_vocab_words: 3000,
                sex_vocab_words: 2350,
                notes_min: 18,
                notes_max: 24,
                white_ratio: 0.68,
                seed,
            }),
            // Short documents with pronoun usage tied to the label, so an
            // unaudited model learns to read pronouns.
            "planted-pronoun" => Ok(SynthConfig {
                preset: name.to_string(),
                n_patients: 400,
                female_ratio: 0.5,
                case_ratio: 0.5,
                bin: 5,
                male_length_mean: 330.0,
                male_length_sd: 30.0,
                female_length_mean: 330.0,
                female_length_sd: 30.0,
                male_signal_density: 0.006,
                female_signal_density: 0.006,
                background_signal_density: 0.003,
                term_rate: 0.21,
                biased_rate: 0.030,
                pronoun_case_rate: Some(0.05),
                pronoun_control_rate: Some(0.004),
                shared_vocab_words: 1200,
                sex_vocab_words: 400,
                notes_min: 3,
                notes_max: 6,
                white_ratio: 0.68,
                seed,
            }),
            other => Err(SynthError::UnknownPreset(other.to_string())),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let ratio_fields = [
            ("female_ratio", self.female_ratio),
            ("white_ratio", self.white_ratio),
            ("term_rate", self.term_rate),
            ("biased_rate", self.biased_rate),
        ];
        for (name, value) in ratio_fields {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthError::Infeasible(format!("{name} {value} outside [0, 1]")));
            }
        }
        if (self.case_ratio - 0.5).abs() > 1e-12 {
            return Err(SynthError::Infeasible(format!(
                "case_ratio {} is fixed at 0.5 by the 1:1 cohort design",
                self.case_ratio
            )));
        }
        for (name, value) in [
            ("male_length_mean", self.male_length_mean),
            ("female_length_mean", self.female_length_mean),
        ] {
            if value <= 0.0 {
                return Err(SynthError::Infeasible(format!("{name} {value} must be positive")));
            }
        }
        for (name, density) in [
            ("male_signal_density", self.male_signal_density),
            ("female_signal_density", self.female_signal_density),
            ("background_signal_density", self.background_signal_density),
        ] {
            if !(0.0..=1.0).contains(&density) {
                return Err(SynthError::Infeasible(format!("{name} {density} outside [0, 1]")));
            }
        }
        if self.notes_min == 0 || self.notes_max < self.notes_min {
            return Err(SynthError::Infeasible(format!(
                "bad notes-per-patient range [{}, {}]",
                self.notes_min, self.notes_max
            )));
        }
        if self.shared_vocab_words == 0 || self.sex_vocab_words == 0 {
            return Err(SynthError::Infeasible("vocabulary pools must be non-empty".into()));
        }
        // every sentence mix must leave room for filler
        for (density, label) in [
            (self.male_signal_density, Label::Case),
            (self.female_signal_density, Label::Case),
            (self.background_signal_density, Label::Control),
        ] {
            SentenceMix::derive(density, label, self.term_rate)?;
        }
        Ok(())
    }

    fn length_for(&self, sex: Sex) -> (f64, f64) {
        match sex {
            Sex::M => (self.male_length_mean, self.male_length_sd),
            Sex::F => (self.female_length_mean, self.female_length_sd),
        }
    }

    fn density_for(&self, sex: Sex, label: Label) -> f64 {
        match label {
            Label::Case => match sex {
                Sex::M => self.male_signal_density,
                Sex::F => self.female_signal_density,
            },
            Label::Control => self.background_signal_density,
        }
    }
}

/// Sentence-type probabilities for one (sex, label) stream.
#[derive(Debug, Clone, Copy)]
struct SentenceMix {
    signal: f64,
    clinical: f64,
}

impl SentenceMix {
    /// Solve the sentence mix so the expected signal-token share equals the
    /// density and the expected term share equals term_rate. Case signal
    /// sentences carry 5 terms (1 signal + 4 context); control background
    /// sentences carry the signal term alone.
    fn derive(density: f64, label: Label, term_rate: f64) -> Result<Self, SynthError> {
        let signal = density * SENTENCE_WORDS as f64;
        let terms_per_sentence = 5.0;
        let clinical = match label {
            Label::Case => {
                (term_rate * SENTENCE_WORDS as f64 - signal * terms_per_sentence)
                    / terms_per_sentence
            }
            Label::Control => {
                (term_rate * SENTENCE_WORDS as f64 - signal) / terms_per_sentence
            }
        };
        if signal < 0.0 || clinical < 0.0 || signal + clinical > 0.9 {
            return Err(SynthError::Infeasible(format!(
                "sentence mix infeasible: signal {signal:.3}, clinical {clinical:.3}"
            )));
        }
        Ok(SentenceMix { signal, clinical })
    }

    fn filler(&self) -> f64 {
        1.0 - self.signal - self.clinical
    }
}

/// Per-patient generation record the tests audit against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientTruth {
    pub patient_id: String,
    pub pair_index: usize,
    pub label: Label,
    pub sex: Sex,
    pub race: String,
    /// Signal tokens actually injected across the patient's notes.
    pub signal_tokens: usize,
    pub total_words: usize,
}

/// Ground truth for a generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub patients: Vec<PatientTruth>,
}

/// A generated corpus in the three ingest file shapes plus ground truth.
#[derive(Debug)]
pub struct SynthCorpus {
    pub patients: Vec<PatientRecord>,
    pub notes: Vec<RawNote>,
    pub diagnoses: Vec<DiagnosisEvent>,
    pub truth: GroundTruth,
}

const SYLLABLES: [&str; 20] = [
    "ba", "de", "ki", "lo", "mu", "na", "pe", "ri", "so", "tu", "va", "we", "zo", "fa", "ge",
    "hi", "ju", "ca", "nu", "sa",
];

fn pool_word(tag: &str, i: usize) -> String {
    let mut word = String::from(tag);
    let mut n = i;
    for _ in 0..3 {
        word.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
    }
    word
}

/// The disjoint word pools backing generation.
struct WordPools {
    core: Vec<String>,
    common: Vec<String>,
    male: Vec<String>,
    female: Vec<String>,
    shared_terms: Vec<String>,
    male_terms: Vec<String>,
    female_terms: Vec<String>,
    signal: Vec<String>,
    names: Vec<String>,
}

impl WordPools {
    fn build(config: &SynthConfig) -> Self {
        let core = (0..CORE_WORDS).map(|i| pool_word("zan", i)).collect();
        let common = (0..config.shared_vocab_words).map(|i| pool_word("dor", i)).collect();
        let male = (0..config.sex_vocab_words).map(|i| pool_word("gor", i)).collect();
        let female = (0..config.sex_vocab_words).map(|i| pool_word("lin", i)).collect();

        let mut terms: Vec<String> = crate::lexical::default_terms().iter().cloned().collect();
        terms.sort();
        let signal: Vec<String> =
            terms.iter().step_by(terms.len() / SIGNAL_TERMS).take(SIGNAL_TERMS).cloned().collect();
        let rest: Vec<String> =
            terms.into_iter().filter(|t| !signal.contains(t)).collect();
        let third = rest.len() / 3;
        let shared_terms = rest[..rest.len() - 2 * third].to_vec();
        let male_terms = rest[rest.len() - 2 * third..rest.len() - third].to_vec();
        let female_terms = rest[rest.len() - third..].to_vec();

        let mut names: Vec<String> = crate::lexical::default_first_names()
            .iter()
            .map(|n| {
                let mut chars = n.chars();
                match chars.next() {
                    Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
                    None => String::new(),
                }
            })
            .collect();
        names.sort();

        WordPools {
            core,
            common,
            male,
            female,
            shared_terms,
            male_terms,
            female_terms,
            signal,
            names,
        }
    }

    fn sex_pool(&self, sex: Sex) -> &[String] {
        match sex {
            Sex::M => &self.male,
            Sex::F => &self.female,
        }
    }

    fn sex_terms(&self, sex: Sex) -> &[String] {
        match sex {
            Sex::M => &self.male_terms,
            Sex::F => &self.female_terms,
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [String]) -> &'a str {
    &pool[rng.gen_range(0..pool.len())]
}

/// Truncated-normal draw via Box-Muller, floored at `min`.
fn sample_length(rng: &mut ChaCha8Rng, mean: f64, sd: f64, min: f64) -> usize {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    (mean + sd * z).max(min).round() as usize
}

struct PatientPlan {
    record: PatientRecord,
    label: Label,
    pair_index: usize,
    index_date: NaiveDate,
}

/// Generate a corpus. Deterministic under the config seed; patient output is
/// sorted by patient id.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let pools = WordPools::build(config);
    let codes = CodeSet::default_codes().into_entries();
    let pairs = config.n_patients / 2;
    let base_index = NaiveDate::from_ymd_opt(2021, 6, 15).expect("valid date");

    let mut plans: Vec<PatientPlan> = Vec::with_capacity(pairs * 2);
    for pair in 0..pairs {
        let mut rng = seeded_rng(config.seed, &["pair", &pair.to_string()]);
        let sex = if rng.gen::<f64>() < config.female_ratio { Sex::F } else { Sex::M };
        let index_date = base_index + Duration::days(rng.gen_range(-150..=150));
        // case birth: bin whole years plus 30..330 days before the index date
        let birth_anchor = shift_years(index_date, -(config.bin as i32));
        let case_birth = birth_anchor - Duration::days(rng.gen_range(30..=330));
        let control_birth = case_birth + Duration::days(rng.gen_range(-30..=30));

        let case_id = format!("P{:06}", pair * 2);
        let control_id = format!("P{:06}", pair * 2 + 1);
        let race = |r: &mut ChaCha8Rng| {
            if r.gen::<f64>() < config.white_ratio { "White" } else { "Other" }
        };
        plans.push(PatientPlan {
            record: PatientRecord {
                patient_id: case_id,
                sex,
                race: race(&mut rng).to_string(),
                birth_date: case_birth,
            },
            label: Label::Case,
            pair_index: pair,
            index_date,
        });
        plans.push(PatientPlan {
            record: PatientRecord {
                patient_id: control_id,
                sex,
                race: race(&mut rng).to_string(),
                birth_date: control_birth,
            },
            label: Label::Control,
            pair_index: pair,
            index_date,
        });
    }

    // independent per-patient seeds keep the output schedule-independent
    let generated: Vec<(Vec<RawNote>, Vec<DiagnosisEvent>, PatientTruth)> = plans
        .par_iter()
        .map(|plan| {
            let mut rng = seeded_rng(config.seed, &["patient", &plan.record.patient_id]);
            let (doc_notes, signal_tokens, total_words) =
                generate_notes(config, &pools, plan, &mut rng);

            let mut events = Vec::new();
            match plan.label {
                Label::Case => {
                    let (vocabulary, code) = codes[rng.gen_range(0..codes.len())].clone();
                    events.push(DiagnosisEvent {
                        patient_id: plan.record.patient_id.clone(),
                        code,
                        vocabulary,
                        date: plan.index_date,
                    });
                    if rng.gen::<f64>() < 0.3 {
                        let (vocabulary, code) = codes[rng.gen_range(0..codes.len())].clone();
                        events.push(DiagnosisEvent {
                            patient_id: plan.record.patient_id.clone(),
                            code,
                            vocabulary,
                            date: plan.index_date + Duration::days(rng.gen_range(30..=200)),
                        });
                    }
                }
                Label::Control => {
                    // a few controls get a matching code well after the index
                    // date; they stay eligible by the date rule
                    if rng.gen::<f64>() < 0.05 {
                        let (vocabulary, code) = codes[rng.gen_range(0..codes.len())].clone();
                        events.push(DiagnosisEvent {
                            patient_id: plan.record.patient_id.clone(),
                            code,
                            vocabulary,
                            date: plan.index_date + Duration::days(rng.gen_range(90..=400)),
                        });
                    }
                }
            }

            let truth = PatientTruth {
                patient_id: plan.record.patient_id.clone(),
                pair_index: plan.pair_index,
                label: plan.label,
                sex: plan.record.sex,
                race: plan.record.race.clone(),
                signal_tokens,
                total_words,
            };
            (doc_notes, events, truth)
        })
        .collect();

    let mut patients: Vec<PatientRecord> = plans.iter().map(|p| p.record.clone()).collect();
    let mut notes = Vec::new();
    let mut diagnoses = Vec::new();
    let mut truth = Vec::with_capacity(plans.len());
    for (doc_notes, events, patient_truth) in generated {
        notes.extend(doc_notes);
        diagnoses.extend(events);
        truth.push(patient_truth);
    }

    patients.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    notes.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    diagnoses.sort_by(|a, b| (&a.patient_id, a.date).cmp(&(&b.patient_id, b.date)));
    truth.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));

    Ok(SynthCorpus {
        patients,
        notes,
        diagnoses,
        truth: GroundTruth { config: config.clone(), patients: truth },
    })
}

/// Shift a date by whole calendar years (Feb 29 falls back to Mar 1).
fn shift_years(date: NaiveDate, years: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(date.year() + years, date.month(), date.day())
        .unwrap_or_else(|| {
            NaiveDate::from_ymd_opt(date.year() + years, 3, 1).expect("valid fallback")
        })
}

fn generate_notes(
    config: &SynthConfig,
    pools: &WordPools,
    plan: &PatientPlan,
    rng: &mut ChaCha8Rng,
) -> (Vec<RawNote>, usize, usize) {
    let sex = plan.record.sex;
    let label = plan.label;
    let (mean, sd) = config.length_for(sex);
    let total_words = sample_length(rng, mean, sd, 40.0 * SENTENCE_WORDS as f64 / 10.0);
    let total_sentences = (total_words / SENTENCE_WORDS).max(1);

    let density = config.density_for(sex, label);
    let mix = SentenceMix::derive(density, label, config.term_rate).expect("validated config");

    // gendered-token slot rates inside filler sentences
    let filler_share = mix.filler().max(0.05);
    let (pronoun_rate, name_rate) = match (label, config.pronoun_case_rate, config.pronoun_control_rate) {
        (Label::Case, Some(rate), _) => (rate, config.biased_rate * 0.3),
        (Label::Control, _, Some(rate)) => (rate, config.biased_rate * 0.3),
        _ => (config.biased_rate * 0.7, config.biased_rate * 0.3),
    };
    let pronoun_slot = (pronoun_rate / filler_share).min(0.5);
    let name_slot = (name_rate / filler_share).min(0.5);

    // this chart's recurring vocabulary
    let my_terms: Vec<&str> = {
        let mut terms: Vec<&str> = Vec::new();
        for _ in 0..PATIENT_SHARED_TERMS {
            terms.push(pick(rng, &pools.shared_terms));
        }
        for _ in 0..PATIENT_SEX_TERMS {
            terms.push(pick(rng, pools.sex_terms(sex)));
        }
        terms
    };
    let my_names: Vec<&str> = (0..2).map(|_| pick(rng, &pools.names)).collect();
    let pronouns: &[&str] = match sex {
        Sex::F => &["she", "her", "hers"],
        Sex::M => &["he", "him", "his"],
    };

    let n_notes = rng.gen_range(config.notes_min..=config.notes_max).min(total_sentences);
    // distinct note days inside the encounter window, newest last
    let mut days: Vec<i64> = Vec::new();
    while days.len() < n_notes {
        let d = rng.gen_range(1..=540);
        if !days.contains(&d) {
            days.push(d);
        }
    }
    days.sort_unstable_by(|a, b| b.cmp(a));

    let base = total_sentences / n_notes;
    let extra = total_sentences % n_notes;

    let mut notes = Vec::with_capacity(n_notes + 1);
    let mut signal_count = 0usize;
    let mut emitted_words = 0usize;
    for (i, day) in days.iter().enumerate() {
        let sentences = base + usize::from(i < extra);
        if sentences == 0 {
            continue;
        }
        let mut text_parts = Vec::with_capacity(sentences);
        for _ in 0..sentences {
            let roll: f64 = rng.gen();
            let words: Vec<String> = if roll < mix.signal {
                signal_count += 1;
                signal_sentence(rng, pools, &my_terms, label)
            } else if roll < mix.signal + mix.clinical {
                clinical_sentence(rng, pools, &my_terms)
            } else {
                filler_sentence(rng, pools, sex, pronouns, &my_names, pronoun_slot, name_slot)
            };
            emitted_words += words.len();
            text_parts.push(render_sentence(&words));
        }
        let date = plan.index_date - Duration::days(*day);
        let timestamp = date.and_hms_opt(9, 0, 0).expect("valid time").and_utc();
        let note_type = if rng.gen::<f64>() < 0.85 { "Progress Notes" } else { "Telephone Encounters" };
        notes.push(RawNote {
            patient_id: plan.record.patient_id.clone(),
            note_id: format!("{}-{i:03}", plan.record.patient_id),
            note_type: note_type.to_string(),
            timestamp,
            text: text_parts.join(" "),
        });
    }

    // occasional excluded-type note; tiny, filtered out by the allow list
    if rng.gen::<f64>() < 0.1 {
        let date = plan.index_date - Duration::days(rng.gen_range(1..=540));
        notes.push(RawNote {
            patient_id: plan.record.patient_id.clone(),
            note_id: format!("{}-poc", plan.record.patient_id),
            note_type: "Plan of Care".to_string(),
            timestamp: date.and_hms_opt(10, 30, 0).expect("valid time").and_utc(),
            text: "plan reviewed with family".to_string(),
        });
    }

    (notes, signal_count, emitted_words)
}

/// Case signal lives in term-rich clinical context; control background signal
/// sits in low-content filler so density filtering strips it.
fn signal_sentence(
    rng: &mut ChaCha8Rng,
    pools: &WordPools,
    my_terms: &[&str],
    label: Label,
) -> Vec<String> {
    let mut words = Vec::with_capacity(SENTENCE_WORDS);
    words.push(pick(rng, &pools.signal).to_string());
    match label {
        Label::Case => {
            for _ in 0..4 {
                words.push(my_terms[rng.gen_range(0..my_terms.len())].to_string());
            }
            for _ in 0..5 {
                words.push(pick(rng, &pools.common).to_string());
            }
        }
        Label::Control => {
            for _ in 0..(SENTENCE_WORDS - 1) {
                words.push(pick(rng, &pools.common).to_string());
            }
        }
    }
    shuffle(rng, &mut words);
    words
}

fn clinical_sentence(rng: &mut ChaCha8Rng, pools: &WordPools, my_terms: &[&str]) -> Vec<String> {
    let mut words = Vec::with_capacity(SENTENCE_WORDS);
    for _ in 0..5 {
        words.push(my_terms[rng.gen_range(0..my_terms.len())].to_string());
    }
    for _ in 0..5 {
        words.push(pick(rng, &pools.common).to_string());
    }
    shuffle(rng, &mut words);
    words
}

#[allow(clippy::too_many_arguments)]
fn filler_sentence(
    rng: &mut ChaCha8Rng,
    pools: &WordPools,
    sex: Sex,
    pronouns: &[&str],
    my_names: &[&str],
    pronoun_slot: f64,
    name_slot: f64,
) -> Vec<String> {
    let mut words = Vec::with_capacity(SENTENCE_WORDS);
    for _ in 0..3 {
        words.push(pick(rng, &pools.core).to_string());
    }
    for _ in 0..4 {
        words.push(pick(rng, &pools.common).to_string());
    }
    for _ in 0..3 {
        words.push(pick(rng, pools.sex_pool(sex)).to_string());
    }
    shuffle(rng, &mut words);
    for word in words.iter_mut() {
        let roll: f64 = rng.gen();
        if roll < pronoun_slot {
            *word = pronouns[rng.gen_range(0..pronouns.len())].to_string();
        } else if roll < pronoun_slot + name_slot {
            *word = my_names[rng.gen_range(0..my_names.len())].to_string();
        }
    }
    words
}

fn shuffle(rng: &mut ChaCha8Rng, words: &mut [String]) {
    for i in (1..words.len()).rev() {
        let j = rng.gen_range(0..=i);
        words.swap(i, j);
    }
}

fn render_sentence(words: &[String]) -> String {
    let mut sentence = String::new();
    for (i, word) in words.iter().enumerate() {
        if i > 0 {
            sentence.push(' ');
        }
        if i == 0 {
            let mut chars = word.chars();
            if let Some(first) = chars.next() {
                sentence.extend(first.to_uppercase());
                sentence.push_str(chars.as_str());
            }
        } else {
            sentence.push_str(word);
        }
    }
    sentence.push('.');
    sentence
}

/// One verification check of a generated corpus against its config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyCheck {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Verification report; `passed` is the conjunction of all checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
    pub passed: bool,
}

/// Check measured statistics against the generating config at `sigma`
/// standard errors (plus a small absolute floor).
pub fn verify(corpus: &SynthCorpus, config: &SynthConfig, sigma: f64) -> VerifyReport {
    let mut checks = Vec::new();
    let pairs = (config.n_patients / 2).max(1);
    let n = corpus.patients.len();

    if n > 0 {
        let females = corpus.patients.iter().filter(|p| p.sex == Sex::F).count();
        let measured = females as f64 / n as f64;
        let se = (config.female_ratio * (1.0 - config.female_ratio) / pairs as f64).sqrt();
        checks.push(check("female_ratio", measured, config.female_ratio, sigma * se + 1e-9));

        for sex in [Sex::M, Sex::F] {
            let (mean, sd) = config.length_for(sex);
            let lengths: Vec<f64> = corpus
                .truth
                .patients
                .iter()
                .filter(|t| t.sex == sex)
                .map(|t| t.total_words as f64)
                .collect();
            if lengths.is_empty() {
                continue;
            }
            let measured = lengths.iter().sum::<f64>() / lengths.len() as f64;
            let se = sd / (lengths.len() as f64).sqrt();
            // document lengths round to whole sentences; allow half a sentence
            let tol = sigma * se + SENTENCE_WORDS as f64 / 2.0;
            checks.push(check(&format!("avg_length_{sex}"), measured, mean, tol));
        }

        let lexicon = GenderLexicon::with_defaults();
        let mut biased = 0.0f64;
        let mut docs = 0usize;
        let mut total_tokens = 0f64;
        for patient in &corpus.patients {
            let doc: String = corpus
                .notes
                .iter()
                .filter(|note| {
                    note.patient_id == patient.patient_id && note.note_type != "Plan of Care"
                })
                .map(|note| note.text.as_str())
                .collect::<Vec<_>>()
                .join("\n");
            if doc.is_empty() {
                continue;
            }
            total_tokens += crate::lexical::word_count(&doc) as f64;
            biased += crate::lexical::biased_word_percentage(&doc, &lexicon);
            docs += 1;
        }
        if docs > 0 && config.pronoun_case_rate.is_none() {
            let measured = biased / docs as f64;
            let expected = 100.0 * config.biased_rate;
            let p = config.biased_rate;
            let se = 100.0 * (p * (1.0 - p) / total_tokens.max(1.0)).sqrt();
            checks.push(check("biased_pct", measured, expected, sigma * se + 0.25));
        }
    }

    let passed = checks.iter().all(|c| c.pass);
    VerifyReport { checks, passed }
}

fn check(name: &str, measured: f64, expected: f64, tolerance: f64) -> VerifyCheck {
    VerifyCheck {
        name: name.to_string(),
        measured,
        expected,
        tolerance,
        pass: (measured - expected).abs() <= tolerance,
    }
}
