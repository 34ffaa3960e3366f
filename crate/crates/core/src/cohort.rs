//! Case definition from a diagnosis-code set, age binning, 1:1 matched
//! control selection, and pre-index truncation of member timelines.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    dedup_notes, filter_note_types, group_timelines, select_recent, CodeVocabulary,
    DiagnosisEvent, PatientRecord, PatientTimeline, RawNote, Sex,
};
use crate::seeded_rng;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("cannot read code set {path}: {source}")]
    CodeSetUnreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("code set line {line}: expected vocabulary<TAB>code[<TAB>description]")]
    CodeSetMalformed { line: usize },
    #[error("code set is empty")]
    CodeSetEmpty,
    #[error("first diagnosis {dx} predates birth for patient {patient_id}")]
    DxBeforeBirth { patient_id: String, dx: NaiveDate },
    #[error("age bin {0} ended up empty")]
    EmptyBin(u32),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// Case/control outcome label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Case,
    Control,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Case => write!(f, "case"),
            Label::Control => write!(f, "control"),
        }
    }
}

/// Train/test split assignment, decided per matched pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

const CODES_TSV: &str = include_str!("../data/codes.tsv");

/// The diagnosis codes that define the index condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSet {
    entries: BTreeSet<(CodeVocabulary, String)>,
}

impl CodeSet {
    /// The shipped default code set.
    pub fn default_codes() -> Self {
        Self::parse(CODES_TSV).expect("shipped code set parses")
    }

    /// Load `vocabulary<TAB>code<TAB>description` lines from a file.
    pub fn load(path: &Path) -> Result<Self, CohortError> {
        let raw = std::fs::read_to_string(path).map_err(|source| CohortError::CodeSetUnreadable {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&raw)
    }

    fn parse(raw: &str) -> Result<Self, CohortError> {
        let mut entries = BTreeSet::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let vocab = parts.next().unwrap_or_default().trim();
            let code = parts.next().unwrap_or_default().trim();
            if vocab.is_empty() || code.is_empty() {
                return Err(CohortError::CodeSetMalformed { line: idx + 1 });
            }
            let vocabulary: CodeVocabulary = vocab
                .parse()
                .map_err(|_| CohortError::CodeSetMalformed { line: idx + 1 })?;
            entries.insert((vocabulary, code.to_string()));
        }
        if entries.is_empty() {
            return Err(CohortError::CodeSetEmpty);
        }
        Ok(CodeSet { entries })
    }

    pub fn contains(&self, event: &DiagnosisEvent) -> bool {
        self.entries.contains(&(event.vocabulary, event.code.clone()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The (vocabulary, code) pairs, sorted.
    pub fn into_entries(self) -> Vec<(CodeVocabulary, String)> {
        self.entries.into_iter().collect()
    }
}

/// A patient qualifying as a case: earliest matching diagnosis and age then.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseDefinition {
    pub patient_id: String,
    pub first_dx_date: NaiveDate,
    pub age_at_dx_years: i32,
}

/// Control matching rules.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchCriteria {
    /// Maximum |birth date difference| in days.
    pub birth_window_days: i64,
    /// Require the control to share the case's sex.
    pub same_sex: bool,
    /// Length of the pre-index encounter window in months.
    pub encounter_window_months: u32,
}

impl Default for MatchCriteria {
    fn default() -> Self {
        MatchCriteria { birth_window_days: 30, same_sex: true, encounter_window_months: 18 }
    }
}

impl MatchCriteria {
    /// Encounter window length in days (18 months -> 548 days).
    pub fn window_days(&self) -> i64 {
        (f64::from(self.encounter_window_months) * 30.4375).round() as i64
    }
}

/// One cohort member: processed timeline, label, and the id of its pair.
#[derive(Debug, Clone)]
pub struct CohortMember {
    pub timeline: PatientTimeline,
    pub label: Label,
    pub matched_pair_id: String,
    pub split: Split,
    /// The pair's index date; every note is strictly before it.
    pub cutoff: NaiveDate,
}

/// An age-binned 1:1 case/control cohort.
#[derive(Debug, Clone)]
pub struct CohortBin {
    pub bin: u32,
    pub members: Vec<CohortMember>,
}

impl CohortBin {
    pub fn case_count(&self) -> usize {
        self.members.iter().filter(|m| m.label == Label::Case).count()
    }

    pub fn control_count(&self) -> usize {
        self.members.iter().filter(|m| m.label == Label::Control).count()
    }
}

/// Whole calendar years between `birth` and `on` (birthday arithmetic).
pub fn age_years_at(birth: NaiveDate, on: NaiveDate) -> i32 {
    let mut age = on.year() - birth.year();
    if (on.month(), on.day()) < (birth.month(), birth.day()) {
        age -= 1;
    }
    age
}

/// True when `date` falls inside `[cutoff - window_days, cutoff)`.
fn in_window(date: NaiveDate, cutoff: NaiveDate, window_days: i64) -> bool {
    date >= cutoff - chrono::Duration::days(window_days) && date < cutoff
}

/// Find all patients with at least one matching diagnosis code and at least
/// one encounter (any note) inside the pre-index window. `encounters` maps
/// patient to sorted note dates over the full ingested corpus.
pub fn find_cases(
    diagnoses: &[DiagnosisEvent],
    patients: &[PatientRecord],
    encounters: &BTreeMap<String, Vec<NaiveDate>>,
    codes: &CodeSet,
    window_days: i64,
) -> (Vec<CaseDefinition>, Vec<String>) {
    let known: BTreeMap<&str, &PatientRecord> =
        patients.iter().map(|p| (p.patient_id.as_str(), p)).collect();
    let mut first_dx: BTreeMap<&str, NaiveDate> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut unknown: BTreeSet<&str> = BTreeSet::new();
    for event in diagnoses {
        if !codes.contains(event) {
            continue;
        }
        if !known.contains_key(event.patient_id.as_str()) {
            unknown.insert(event.patient_id.as_str());
            continue;
        }
        first_dx
            .entry(event.patient_id.as_str())
            .and_modify(|d| *d = (*d).min(event.date))
            .or_insert(event.date);
    }
    for id in unknown {
        warnings.push(format!(
            "diagnosis references patient {id:?} absent from the patients file; excluded"
        ));
    }
    let mut cases = Vec::new();
    for (patient_id, dx) in first_dx {
        let record = known[patient_id];
        let has_encounter = encounters
            .get(patient_id)
            .map(|dates| dates.iter().any(|d| in_window(*d, dx, window_days)))
            .unwrap_or(false);
        if !has_encounter {
            warnings.push(format!(
                "case {patient_id} has no encounter in the {window_days}-day pre-index window; excluded"
            ));
            continue;
        }
        cases.push(CaseDefinition {
            patient_id: patient_id.to_string(),
            first_dx_date: dx,
            age_at_dx_years: age_years_at(record.birth_date, dx),
        });
    }
    (cases, warnings)
}

/// The bin for a case: floor of age in years at first diagnosis, when that
/// value is one of the configured bins.
pub fn assign_bin(case: &CaseDefinition, bins: &BTreeSet<u32>) -> Result<Option<u32>, CohortError> {
    if case.age_at_dx_years < 0 {
        return Err(CohortError::DxBeforeBirth {
            patient_id: case.patient_id.clone(),
            dx: case.first_dx_date,
        });
    }
    let age = case.age_at_dx_years as u32;
    Ok(bins.contains(&age).then_some(age))
}

/// Everything matching needs to evaluate eligibility.
pub struct MatchContext<'a> {
    pub patients: &'a BTreeMap<String, PatientRecord>,
    /// Sorted note dates per patient, over all ingested notes.
    pub encounters: &'a BTreeMap<String, Vec<NaiveDate>>,
    /// Sorted matching-code diagnosis dates per patient.
    pub code_dates: &'a BTreeMap<String, Vec<NaiveDate>>,
}

/// True when `candidate` satisfies all four control criteria for `case`.
pub fn control_eligible(
    case: &CaseDefinition,
    case_patient: &PatientRecord,
    candidate: &PatientRecord,
    ctx: &MatchContext<'_>,
    criteria: &MatchCriteria,
) -> bool {
    let birth_gap = (candidate.birth_date - case_patient.birth_date).num_days().abs();
    if birth_gap > criteria.birth_window_days {
        return false;
    }
    if criteria.same_sex && candidate.sex != case_patient.sex {
        return false;
    }
    if let Some(dates) = ctx.code_dates.get(&candidate.patient_id) {
        if dates.iter().any(|d| *d <= case.first_dx_date) {
            return false;
        }
    }
    ctx.encounters
        .get(&candidate.patient_id)
        .map(|dates| dates.iter().any(|d| in_window(*d, case.first_dx_date, criteria.window_days())))
        .unwrap_or(false)
}

/// Pick a control for `case` uniformly at random among eligible candidates.
/// Candidates are scanned in sorted id order and the draw is seeded per case,
/// so the choice is independent of pool iteration order.
pub fn match_control(
    case: &CaseDefinition,
    candidate_pool: &BTreeSet<String>,
    ctx: &MatchContext<'_>,
    criteria: &MatchCriteria,
    seed: u64,
) -> Option<String> {
    let case_patient = ctx.patients.get(&case.patient_id)?;
    let eligible: Vec<&String> = candidate_pool
        .iter()
        .filter(|id| {
            ctx.patients
                .get(*id)
                .map(|cand| control_eligible(case, case_patient, cand, ctx, criteria))
                .unwrap_or(false)
        })
        .collect();
    if eligible.is_empty() {
        return None;
    }
    let mut rng = seeded_rng(seed, &["match_control", &case.patient_id]);
    let idx = rng.gen_range(0..eligible.len());
    Some(eligible[idx].clone())
}

/// Keep notes with timestamps strictly before midnight UTC of `cutoff`.
pub fn truncate_history(timeline: PatientTimeline, cutoff: NaiveDate) -> PatientTimeline {
    let instant = cutoff.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
    let notes = timeline.notes.into_iter().filter(|n| n.timestamp < instant).collect();
    PatientTimeline { patient: timeline.patient, notes }
}

/// How dedup compares notes: within each patient chart (default) or across
/// the whole corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DedupScope {
    #[default]
    WithinPatient,
    Global,
}

/// Corpus-pipeline and cohort-design knobs for a build.
#[derive(Debug, Clone)]
pub struct CohortParams {
    pub codes: CodeSet,
    pub bins: BTreeSet<u32>,
    pub criteria: MatchCriteria,
    pub note_types: HashSet<String>,
    pub dedup_threshold: f64,
    pub dedup_scope: DedupScope,
    pub recent_k: usize,
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for CohortParams {
    fn default() -> Self {
        CohortParams {
            codes: CodeSet::default_codes(),
            bins: [5, 8, 10, 12, 15].into_iter().collect(),
            criteria: MatchCriteria::default(),
            note_types: ["Progress Notes", "Telephone Encounters"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            dedup_threshold: 0.8,
            dedup_scope: DedupScope::WithinPatient,
            recent_k: 25,
            split_fraction: 0.8,
            seed: 0,
        }
    }
}

/// A full cohort build: one bin per configured age with 1:1 members.
#[derive(Debug)]
pub struct CohortBuild {
    pub bins: Vec<CohortBin>,
    pub warnings: Vec<String>,
    /// Cases that qualified for a bin but were dropped (no control, or an
    /// empty post-pipeline timeline on either side).
    pub dropped_pairs: usize,
}

/// Build all configured bins. Bins are constructed in ascending order and a
/// patient is used at most once across the whole cohort.
pub fn build_bins(
    patients: &[PatientRecord],
    notes: &[RawNote],
    diagnoses: &[DiagnosisEvent],
    params: &CohortParams,
    stopwords: &HashSet<String>,
) -> Result<CohortBuild, CohortError> {
    let mut warnings = Vec::new();

    // Encounter dates over the full corpus (eligibility uses any note type).
    let mut encounters: BTreeMap<String, Vec<NaiveDate>> = BTreeMap::new();
    for note in notes {
        encounters
            .entry(note.patient_id.clone())
            .or_default()
            .push(note.timestamp.date_naive());
    }
    for dates in encounters.values_mut() {
        dates.sort();
    }

    let mut code_dates: BTreeMap<String, Vec<NaiveDate>> = BTreeMap::new();
    for event in diagnoses {
        if params.codes.contains(event) {
            code_dates.entry(event.patient_id.clone()).or_default().push(event.date);
        }
    }
    for dates in code_dates.values_mut() {
        dates.sort();
    }

    let patient_map: BTreeMap<String, PatientRecord> =
        patients.iter().map(|p| (p.patient_id.clone(), p.clone())).collect();

    // Corpus pipeline prefix (type filter + dedup) applied once per patient.
    let filtered = filter_note_types(notes.to_vec(), &params.note_types);
    let (grouped, orphan_warnings) = group_timelines(patients, filtered);
    warnings.extend(orphan_warnings);
    let mut cleaned: BTreeMap<String, PatientTimeline> = BTreeMap::new();
    match params.dedup_scope {
        DedupScope::WithinPatient => {
            for timeline in grouped {
                let id = timeline.patient.patient_id.clone();
                let (deduped, report) =
                    dedup_notes(timeline, params.dedup_threshold, stopwords)?;
                for note_id in &report.empty_flagged {
                    warnings.push(format!(
                        "note {note_id}: empty token set; retained without dedup comparison"
                    ));
                }
                cleaned.insert(id, deduped);
            }
        }
        DedupScope::Global => {
            let (timelines, report) =
                dedup_notes_global(grouped, params.dedup_threshold, stopwords)?;
            for note_id in &report.empty_flagged {
                warnings.push(format!(
                    "note {note_id}: empty token set; retained without dedup comparison"
                ));
            }
            for timeline in timelines {
                cleaned.insert(timeline.patient.patient_id.clone(), timeline);
            }
        }
    }

    let (cases, case_warnings) =
        find_cases(diagnoses, patients, &encounters, &params.codes, params.criteria.window_days());
    warnings.extend(case_warnings);

    // Assign each case to at most one bin.
    let mut binned: BTreeMap<u32, Vec<CaseDefinition>> = BTreeMap::new();
    let mut case_ids: BTreeSet<String> = BTreeSet::new();
    for case in &cases {
        case_ids.insert(case.patient_id.clone());
        match assign_bin(case, &params.bins) {
            Ok(Some(bin)) => binned.entry(bin).or_default().push(case.clone()),
            Ok(None) => {}
            Err(_) => {
                let birth = patient_map
                    .get(&case.patient_id)
                    .map(|p| p.birth_date.to_string())
                    .unwrap_or_default();
                warnings.push(format!(
                    "case {}: first diagnosis {} predates birth {}; rejected",
                    case.patient_id, case.first_dx_date, birth
                ));
            }
        }
    }

    // Controls come from patients that are not cases and are not yet used.
    let mut pool: BTreeSet<String> = patient_map
        .keys()
        .filter(|id| !case_ids.contains(*id))
        .cloned()
        .collect();

    let ctx = MatchContext {
        patients: &patient_map,
        encounters: &encounters,
        code_dates: &code_dates,
    };

    let mut bins_out = Vec::new();
    let mut dropped_pairs = 0usize;
    for (&bin, bin_cases) in &binned {
        let mut ordered = bin_cases.clone();
        ordered.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        let mut pairs: Vec<(CohortMember, CohortMember)> = Vec::new();
        for case in &ordered {
            let Some(control_id) =
                match_control(case, &pool, &ctx, &params.criteria, params.seed)
            else {
                warnings.push(format!(
                    "bin {bin}: case {} has no eligible control; dropped",
                    case.patient_id
                ));
                dropped_pairs += 1;
                continue;
            };
            pool.remove(&control_id);
            let cutoff = case.first_dx_date;
            let pair_id = format!("{bin}-{}", case.patient_id);
            let case_tl = member_timeline(&cleaned, &patient_map, &case.patient_id, cutoff, params)?;
            let control_tl = member_timeline(&cleaned, &patient_map, &control_id, cutoff, params)?;
            match (case_tl, control_tl) {
                (Some(ct), Some(kt)) => {
                    pairs.push((
                        CohortMember {
                            timeline: ct,
                            label: Label::Case,
                            matched_pair_id: pair_id.clone(),
                            split: Split::Train,
                            cutoff,
                        },
                        CohortMember {
                            timeline: kt,
                            label: Label::Control,
                            matched_pair_id: pair_id,
                            split: Split::Train,
                            cutoff,
                        },
                    ));
                }
                _ => {
                    warnings.push(format!(
                        "bin {bin}: pair {pair_id} lost all notes after the corpus pipeline; dropped"
                    ));
                    dropped_pairs += 1;
                }
            }
        }
        if pairs.is_empty() {
            return Err(CohortError::EmptyBin(bin));
        }
        assign_splits(&mut pairs, bin, params);
        let mut members = Vec::new();
        for (case, control) in pairs {
            members.push(case);
            members.push(control);
        }
        bins_out.push(CohortBin { bin, members });
    }

    Ok(CohortBuild { bins: bins_out, warnings, dropped_pairs })
}

/// Truncate to pre-index history and cap at the most recent K notes; None when
/// nothing survives.
fn member_timeline(
    cleaned: &BTreeMap<String, PatientTimeline>,
    patients: &BTreeMap<String, PatientRecord>,
    patient_id: &str,
    cutoff: NaiveDate,
    params: &CohortParams,
) -> Result<Option<PatientTimeline>, CohortError> {
    let base = match cleaned.get(patient_id) {
        Some(tl) => tl.clone(),
        None => PatientTimeline::new(patients[patient_id].clone(), Vec::new()),
    };
    let truncated = truncate_history(base, cutoff);
    let capped = select_recent(truncated, params.recent_k)?;
    let has_content = capped.notes.iter().any(|n| !n.text.trim().is_empty());
    Ok(if capped.notes.is_empty() || !has_content { None } else { Some(capped) })
}

/// Seeded pair-level train/test split so both splits stay 1:1.
fn assign_splits(pairs: &mut [(CohortMember, CohortMember)], bin: u32, params: &CohortParams) {
    let n = pairs.len();
    let train_target = ((n as f64) * params.split_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(params.seed, &["split", &bin.to_string()]);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    for (rank, &idx) in order.iter().enumerate() {
        let split = if rank < train_target { Split::Train } else { Split::Test };
        pairs[idx].0.split = split;
        pairs[idx].1.split = split;
    }
}

/// Global-scope dedup: one ascending scan over every patient's notes jointly.
/// Exposed for the corpus-wide comparison mode; untested against the source
/// cohort design, which implies within-chart duplicates.
pub fn dedup_notes_global(
    timelines: Vec<PatientTimeline>,
    threshold: f64,
    stopwords: &HashSet<String>,
) -> Result<(Vec<PatientTimeline>, crate::corpus::DedupReport), CohortError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CohortError::Corpus(crate::corpus::CorpusError::InvalidThreshold(threshold)));
    }
    let mut all: Vec<(String, RawNote)> = Vec::new();
    let mut patients = Vec::new();
    for tl in timelines {
        for note in &tl.notes {
            all.push((tl.patient.patient_id.clone(), note.clone()));
        }
        patients.push(tl.patient);
    }
    all.sort_by(|a, b| (a.1.timestamp, &a.1.note_id).cmp(&(b.1.timestamp, &b.1.note_id)));

    let mut report = crate::corpus::DedupReport::default();
    let mut kept: Vec<(String, RawNote)> = Vec::new();
    let mut kept_counts: Vec<BTreeMap<String, usize>> = Vec::new();
    for (pid, note) in all {
        let counts = crate::lexical::count_tokens(&crate::lexical::tokenize(&note.text, stopwords));
        if counts.is_empty() {
            report.empty_flagged.push(note.note_id.clone());
            kept.push((pid, note));
            kept_counts.push(counts);
            continue;
        }
        let dup = kept_counts
            .iter()
            .any(|existing| !existing.is_empty() && cosine_counts(&counts, existing) >= threshold);
        if dup {
            report.dropped.push(note.note_id.clone());
        } else {
            kept.push((pid, note));
            kept_counts.push(counts);
        }
    }

    let mut by_patient: BTreeMap<String, Vec<RawNote>> = BTreeMap::new();
    for (pid, note) in kept {
        by_patient.entry(pid).or_default().push(note);
    }
    let out = patients
        .into_iter()
        .map(|p| {
            let notes = by_patient.remove(&p.patient_id).unwrap_or_default();
            PatientTimeline::new(p, notes)
        })
        .collect();
    Ok((out, report))
}

fn cosine_counts(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> f64 {
    let mut dot = 0.0f64;
    for (token, &ca) in a {
        if let Some(&cb) = b.get(token) {
            dot += ca as f64 * cb as f64;
        }
    }
    let na: f64 = a.values().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}
