//! Classification-parity metrics per demographic subgroup: accuracy,
//! uncertainty percentage, FPR, FNR, balanced error rate, BER ratio with
//! significance flags, and cross-bin gap aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Label;
use crate::model::PredictionRecord;

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("no prediction records supplied")]
    NoRecords,
    #[error("record for patient {0} lacks attribute {1:?}")]
    MissingAttribute(String, String),
    #[error("attribute {0:?} has fewer than two values in the records")]
    SingleGroup(String),
    #[error("privileged value {0:?} not present among the records")]
    MissingPrivileged(String),
}

/// Decision threshold: predicted positive iff probability >= threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Borderline probability zone counted as uncertain, closed on both ends.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UncertaintyZone {
    pub lo: f64,
    pub hi: f64,
}

impl Default for UncertaintyZone {
    fn default() -> Self {
        UncertaintyZone { lo: 0.4, hi: 0.6 }
    }
}

impl UncertaintyZone {
    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.true_pos + self.true_neg) as f64 / self.total() as f64
    }

    /// FP / (FP + TN); None when no true negatives exist to rate against.
    pub fn fpr(&self) -> Option<f64> {
        let denom = self.false_pos + self.true_neg;
        (denom > 0).then(|| self.false_pos as f64 / denom as f64)
    }

    /// FN / (FN + TP); None when the group has no positives.
    pub fn fnr(&self) -> Option<f64> {
        let denom = self.false_neg + self.true_pos;
        (denom > 0).then(|| self.false_neg as f64 / denom as f64)
    }
}

/// Tally predicted-vs-true outcomes at the threshold.
pub fn confusion(records: &[&PredictionRecord], threshold: f64) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for r in records {
        let predicted_positive = r.probability >= threshold;
        match (r.true_label, predicted_positive) {
            (Label::Case, true) => counts.true_pos += 1,
            (Label::Case, false) => counts.false_neg += 1,
            (Label::Control, true) => counts.false_pos += 1,
            (Label::Control, false) => counts.true_neg += 1,
        }
    }
    counts
}

/// Balanced error rate: unweighted mean of FPR and FNR. Undefined when either
/// denominator is zero.
pub fn ber(counts: &ConfusionCounts) -> Option<f64> {
    Some((counts.fpr()? + counts.fnr()?) / 2.0)
}

/// BER from already-known rates.
pub fn ber_from_rates(fpr: f64, fnr: f64) -> f64 {
    (fpr + fnr) / 2.0
}

/// Percentage of records whose probability falls in the closed zone.
pub fn uncertainty_pct(records: &[&PredictionRecord], zone: UncertaintyZone) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let n = records.iter().filter(|r| zone.contains(r.probability)).count();
    100.0 * n as f64 / records.len() as f64
}

/// Metrics for one subgroup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub unc_pct: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub ber: Option<f64>,
    /// Group smaller than the configured minimum; metrics still computed.
    pub low_confidence: bool,
}

impl GroupMetrics {
    fn from_records(records: &[&PredictionRecord], threshold: f64, zone: UncertaintyZone, min_group: usize) -> Self {
        let counts = confusion(records, threshold);
        GroupMetrics {
            n: records.len(),
            accuracy: counts.accuracy(),
            unc_pct: uncertainty_pct(records, zone),
            fpr: counts.fpr(),
            fnr: counts.fnr(),
            ber: ber(&counts),
            low_confidence: records.len() < min_group,
        }
    }

    /// Build metrics from already-known rates (e.g. published tables).
    pub fn from_rates(accuracy: f64, unc_pct: f64, fpr: f64, fnr: f64) -> Self {
        GroupMetrics {
            n: 0,
            accuracy,
            unc_pct,
            fpr: Some(fpr),
            fnr: Some(fnr),
            ber: Some(ber_from_rates(fpr, fnr)),
            low_confidence: false,
        }
    }
}

/// Verdict on the BER ratio line. Boundary values 1.25 and 0.85 count as
/// acceptable (the source thresholds are strict inequalities).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasFlag {
    /// ratio > 1.25: the model favors the privileged subgroup.
    SignificantBiasTowardPrivileged,
    /// ratio < 0.85: the model performs significantly better for the
    /// non-privileged subgroup.
    SignificantlyBetterForNonPrivileged,
    Acceptable,
    /// Privileged BER is zero or undefined; no ratio.
    Undefined,
}

/// BER ratio of non-privileged over privileged, with its significance flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BerRatio {
    pub value: Option<f64>,
    pub flag: BiasFlag,
}

/// ratio = ber(non-privileged) / ber(privileged), flagged against the
/// 1.25 / 0.85 thresholds.
pub fn ber_ratio(non_privileged: &GroupMetrics, privileged: &GroupMetrics) -> BerRatio {
    match (non_privileged.ber, privileged.ber) {
        (Some(n), Some(p)) if p > 0.0 => {
            let value = n / p;
            let flag = if value > 1.25 {
                BiasFlag::SignificantBiasTowardPrivileged
            } else if value < 0.85 {
                BiasFlag::SignificantlyBetterForNonPrivileged
            } else {
                BiasFlag::Acceptable
            };
            BerRatio { value: Some(value), flag }
        }
        _ => BerRatio { value: None, flag: BiasFlag::Undefined },
    }
}

/// The per-subgroup fairness verdict for one set of predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParityReport {
    pub attribute: String,
    pub privileged_value: String,
    /// Metrics per attribute value.
    pub groups: BTreeMap<String, GroupMetrics>,
    /// All non-privileged records pooled (equals the other group's metrics
    /// when the attribute is binary).
    pub non_privileged: GroupMetrics,
    pub ber_ratio: BerRatio,
    /// fnr(non-privileged) - fnr(privileged): positive means under-diagnosis
    /// of the non-privileged group.
    pub fnr_gap: Option<f64>,
    /// accuracy(non-privileged) - accuracy(privileged).
    pub accuracy_gap: f64,
    /// unc(non-privileged) - unc(privileged).
    pub unc_gap: f64,
}

/// Compute per-group metrics and the privileged/non-privileged comparison.
pub fn parity_report(
    records: &[PredictionRecord],
    attribute: &str,
    privileged_value: &str,
    threshold: f64,
    zone: UncertaintyZone,
    min_group: usize,
) -> Result<ParityReport, FairnessError> {
    if records.is_empty() {
        return Err(FairnessError::NoRecords);
    }
    let mut by_value: BTreeMap<String, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        let value = r.attributes.get(attribute).ok_or_else(|| {
            FairnessError::MissingAttribute(r.patient_id.clone(), attribute.to_string())
        })?;
        by_value.entry(value.clone()).or_default().push(r);
    }
    if by_value.len() < 2 {
        return Err(FairnessError::SingleGroup(attribute.to_string()));
    }
    if !by_value.contains_key(privileged_value) {
        return Err(FairnessError::MissingPrivileged(privileged_value.to_string()));
    }

    let groups: BTreeMap<String, GroupMetrics> = by_value
        .iter()
        .map(|(value, recs)| {
            (value.clone(), GroupMetrics::from_records(recs, threshold, zone, min_group))
        })
        .collect();

    let pooled: Vec<&PredictionRecord> = by_value
        .iter()
        .filter(|(value, _)| value.as_str() != privileged_value)
        .flat_map(|(_, recs)| recs.iter().copied())
        .collect();
    let non_privileged = GroupMetrics::from_records(&pooled, threshold, zone, min_group);
    let privileged = &groups[privileged_value];

    Ok(assemble_report(attribute, privileged_value, groups.clone(), non_privileged, privileged))
}

fn assemble_report(
    attribute: &str,
    privileged_value: &str,
    groups: BTreeMap<String, GroupMetrics>,
    non_privileged: GroupMetrics,
    privileged: &GroupMetrics,
) -> ParityReport {
    let ratio = ber_ratio(&non_privileged, privileged);
    let fnr_gap = match (non_privileged.fnr, privileged.fnr) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    let accuracy_gap = non_privileged.accuracy - privileged.accuracy;
    let unc_gap = non_privileged.unc_pct - privileged.unc_pct;
    ParityReport {
        attribute: attribute.to_string(),
        privileged_value: privileged_value.to_string(),
        groups,
        non_privileged,
        ber_ratio: ratio,
        fnr_gap,
        accuracy_gap,
        unc_gap,
    }
}

/// Assemble a report from externally supplied group metrics (two groups:
/// privileged and one non-privileged), e.g. published table rows.
pub fn parity_from_metrics(
    attribute: &str,
    privileged_value: &str,
    privileged: GroupMetrics,
    non_privileged_value: &str,
    non_privileged: GroupMetrics,
) -> ParityReport {
    let mut groups = BTreeMap::new();
    groups.insert(privileged_value.to_string(), privileged.clone());
    groups.insert(non_privileged_value.to_string(), non_privileged.clone());
    assemble_report(attribute, privileged_value, groups, non_privileged, &privileged)
}

/// Unweighted means of the per-bin gaps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapSummary {
    pub reports: usize,
    /// Mean over reports with a defined FNR gap.
    pub mean_fnr_gap: Option<f64>,
    pub mean_accuracy_gap: f64,
    pub mean_unc_gap: f64,
}

/// Aggregate gaps across bins.
pub fn aggregate_gaps(reports: &[ParityReport]) -> Result<GapSummary, FairnessError> {
    if reports.is_empty() {
        return Err(FairnessError::NoRecords);
    }
    let defined: Vec<f64> = reports.iter().filter_map(|r| r.fnr_gap).collect();
    let mean_fnr_gap = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let n = reports.len() as f64;
    Ok(GapSummary {
        reports: reports.len(),
        mean_fnr_gap,
        mean_accuracy_gap: reports.iter().map(|r| r.accuracy_gap).sum::<f64>() / n,
        mean_unc_gap: reports.iter().map(|r| r.unc_gap).sum::<f64>() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn record(p: f64, label: Label, sex: &str) -> PredictionRecord {
        let mut attributes = BTreeMap::new();
        attributes.insert("sex".to_string(), sex.to_string());
        PredictionRecord {
            patient_id: format!("P{p}{label}{sex}"),
            true_label: label,
            probability: p,
            attributes,
            bin: 5,
        }
    }

    #[test]
    fn threshold_boundary_is_positive() {
        let a = record(0.5, Label::Case, "F");
        let b = record(0.49, Label::Case, "F");
        let counts = confusion(&[&a, &b], DEFAULT_THRESHOLD);
        assert_eq!(counts.true_pos, 1);
        assert_eq!(counts.false_neg, 1);
    }

    #[test]
    fn confusion_matches_brute_force_on_random_records() {
        let mut rng = crate::seeded_rng(11, &["confusion"]);
        let records: Vec<PredictionRecord> = (0..50)
            .map(|i| {
                let p: f64 = rng.gen();
                let label = if rng.gen::<bool>() { Label::Case } else { Label::Control };
                let mut r = record(p, label, "F");
                r.patient_id = format!("P{i}");
                r
            })
            .collect();
        let refs: Vec<&PredictionRecord> = records.iter().collect();
        let counts = confusion(&refs, 0.5);
        let mut expect = ConfusionCounts::default();
        for r in &records {
            match (r.true_label, r.probability >= 0.5) {
                (Label::Case, true) => expect.true_pos += 1,
                (Label::Case, false) => expect.false_neg += 1,
                (Label::Control, true) => expect.false_pos += 1,
                (Label::Control, false) => expect.true_neg += 1,
            }
        }
        assert_eq!(counts, expect);
        assert_eq!(counts.total(), 50);
        assert!((counts.accuracy() - (counts.true_pos + counts.true_neg) as f64 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn ber_published_row_and_degenerate_classifiers() {
        // Bin 5 male original row: FPR 0.61, FNR 0.24 -> 0.425
        assert!((ber_from_rates(0.61, 0.24) - 0.425).abs() < 1e-12);
        // perfect classifier
        let perfect = ConfusionCounts { true_pos: 5, true_neg: 5, ..Default::default() };
        assert_eq!(ber(&perfect), Some(0.0));
        // always wrong
        let wrong = ConfusionCounts { false_pos: 5, false_neg: 5, ..Default::default() };
        assert_eq!(ber(&wrong), Some(1.0));
        // undefined when a denominator is empty
        let no_negatives = ConfusionCounts { true_pos: 5, false_neg: 2, ..Default::default() };
        assert_eq!(ber(&no_negatives), None);
    }

    #[test]
    fn ber_ratio_flags_and_boundaries() {
        let m = |b: f64| GroupMetrics {
            n: 100,
            accuracy: 0.5,
            unc_pct: 0.0,
            fpr: Some(b),
            fnr: Some(b),
            ber: Some(b),
            low_confidence: false,
        };
        // published pair: 0.445 / 0.425 -> 1.047, acceptable
        let r = ber_ratio(&m(0.445), &m(0.425));
        assert!((r.value.unwrap() - 1.047_058_823_529_411_7).abs() < 1e-12);
        assert_eq!(r.flag, BiasFlag::Acceptable);
        // published pair: 0.435 / 0.325 -> 1.338, flagged
        let r = ber_ratio(&m(0.435), &m(0.325));
        assert!((r.value.unwrap() - 1.338_461_538_461_538_4).abs() < 1e-12);
        assert_eq!(r.flag, BiasFlag::SignificantBiasTowardPrivileged);
        // equal BERs -> 1.0
        assert_eq!(ber_ratio(&m(0.4), &m(0.4)).value, Some(1.0));
        // boundaries count as acceptable
        assert_eq!(ber_ratio(&m(1.25), &m(1.0)).flag, BiasFlag::Acceptable);
        assert_eq!(ber_ratio(&m(0.85), &m(1.0)).flag, BiasFlag::Acceptable);
        assert_eq!(ber_ratio(&m(1.2501), &m(1.0)).flag, BiasFlag::SignificantBiasTowardPrivileged);
        assert_eq!(
            ber_ratio(&m(0.8499), &m(1.0)).flag,
            BiasFlag::SignificantlyBetterForNonPrivileged
        );
        // zero privileged BER -> undefined
        let r = ber_ratio(&m(0.4), &m(0.0));
        assert_eq!(r.value, None);
        assert_eq!(r.flag, BiasFlag::Undefined);
    }

    #[test]
    fn uncertainty_zone_is_closed() {
        let records: Vec<PredictionRecord> = [0.39, 0.4, 0.6, 0.61]
            .iter()
            .map(|p| record(*p, Label::Case, "F"))
            .collect();
        let refs: Vec<&PredictionRecord> = records.iter().collect();
        assert!((uncertainty_pct(&refs, UncertaintyZone::default()) - 50.0).abs() < 1e-12);
        let nines: Vec<PredictionRecord> =
            (0..4).map(|_| record(0.9, Label::Case, "F")).collect();
        let refs: Vec<&PredictionRecord> = nines.iter().collect();
        assert_eq!(uncertainty_pct(&refs, UncertaintyZone::default()), 0.0);
        let halves: Vec<PredictionRecord> =
            (0..4).map(|_| record(0.5, Label::Case, "F")).collect();
        let refs: Vec<&PredictionRecord> = halves.iter().collect();
        assert_eq!(uncertainty_pct(&refs, UncertaintyZone::default()), 100.0);
    }

    #[test]
    fn parity_report_published_gap_and_identity() {
        // Table row: M FPR .61 FNR .24, F FPR .52 FNR .37 -> fnr gap 0.13
        let report = parity_from_metrics(
            "sex",
            "M",
            GroupMetrics::from_rates(0.58, 22.0, 0.61, 0.24),
            "F",
            GroupMetrics::from_rates(0.56, 31.0, 0.52, 0.37),
        );
        assert!((report.fnr_gap.unwrap() - 0.13).abs() < 1e-12);
        assert!((report.ber_ratio.value.unwrap() - 0.445 / 0.425).abs() < 1e-12);

        // identical groups: gap 0, ratio 1
        let same = GroupMetrics::from_rates(0.6, 20.0, 0.3, 0.3);
        let report = parity_from_metrics("sex", "M", same.clone(), "F", same);
        assert_eq!(report.fnr_gap, Some(0.0));
        assert_eq!(report.ber_ratio.value, Some(1.0));
        assert_eq!(report.accuracy_gap, 0.0);
    }

    #[test]
    fn parity_report_groups_and_order_invariance() {
        let mut records = vec![
            record(0.9, Label::Case, "M"),
            record(0.1, Label::Control, "M"),
            record(0.2, Label::Case, "F"),
            record(0.1, Label::Control, "F"),
        ];
        let a =
            parity_report(&records, "sex", "M", 0.5, UncertaintyZone::default(), 10).unwrap();
        records.reverse();
        let b =
            parity_report(&records, "sex", "M", 0.5, UncertaintyZone::default(), 10).unwrap();
        assert_eq!(a.groups["F"].n, b.groups["F"].n);
        assert_eq!(a.fnr_gap, b.fnr_gap);
        assert!(a.groups["F"].low_confidence);
        // female case missed -> positive gap
        assert_eq!(a.fnr_gap, Some(1.0));
    }

    #[test]
    fn parity_report_errors() {
        let records = vec![record(0.9, Label::Case, "M")];
        assert!(matches!(
            parity_report(&records, "sex", "M", 0.5, UncertaintyZone::default(), 10),
            Err(FairnessError::SingleGroup(_))
        ));
        assert!(matches!(
            parity_report(&records, "ethnicity", "M", 0.5, UncertaintyZone::default(), 10),
            Err(FairnessError::MissingAttribute(_, _))
        ));
        assert!(matches!(
            parity_report(&[], "sex", "M", 0.5, UncertaintyZone::default(), 10),
            Err(FairnessError::NoRecords)
        ));
    }

    #[test]
    fn aggregate_published_fnr_gaps() {
        // Table 1 original rows, (male fnr, female fnr) per bin
        let rows = [(0.24, 0.37), (0.58, 0.62), (0.28, 0.36), (0.28, 0.36), (0.42, 0.55)];
        let reports: Vec<ParityReport> = rows
            .iter()
            .map(|(m, f)| {
                parity_from_metrics(
                    "sex",
                    "M",
                    GroupMetrics::from_rates(0.6, 20.0, 0.4, *m),
                    "F",
                    GroupMetrics::from_rates(0.6, 20.0, 0.4, *f),
                )
            })
            .collect();
        let summary = aggregate_gaps(&reports).unwrap();
        assert!((summary.mean_fnr_gap.unwrap() - 0.092).abs() < 1e-12);
        // single report aggregates to itself
        let one = aggregate_gaps(&reports[..1]).unwrap();
        assert!((one.mean_fnr_gap.unwrap() - 0.13).abs() < 1e-12);
        // all-zero gaps
        let same = GroupMetrics::from_rates(0.6, 20.0, 0.4, 0.3);
        let zero = parity_from_metrics("sex", "M", same.clone(), "F", same);
        let summary = aggregate_gaps(&[zero]).unwrap();
        assert_eq!(summary.mean_fnr_gap, Some(0.0));
    }
}
