//! The flat per-member dataset exchanged between pipeline stages, plus
//! line-delimited JSON helpers shared by all artifact files.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{CohortBin, Label, Split};
use crate::corpus::Sex;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Malformed {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One cohort member flattened for downstream stages: demographics, label,
/// split, and the concatenated pre-index document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberRecord {
    pub patient_id: String,
    pub bin: u32,
    pub label: Label,
    pub matched_pair_id: String,
    pub sex: Sex,
    pub race: String,
    pub split: Split,
    pub note_count: usize,
    pub doc: String,
}

impl MemberRecord {
    /// Attribute lookup by name ("sex", "race"); used by the audit stages.
    pub fn attribute(&self, name: &str) -> Option<String> {
        match name {
            "sex" => Some(self.sex.to_string()),
            "race" => Some(self.race.clone()),
            _ => None,
        }
    }

    pub fn attributes(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("sex".to_string(), self.sex.to_string());
        map.insert("race".to_string(), self.race.clone());
        map
    }
}

/// Concatenate the timeline's non-empty note texts in order, one per line.
pub fn member_document(timeline: &crate::corpus::PatientTimeline) -> String {
    timeline
        .notes
        .iter()
        .map(|n| n.text.trim())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Flatten built bins into member records.
pub fn flatten_bins(bins: &[CohortBin]) -> Vec<MemberRecord> {
    let mut out = Vec::new();
    for bin in bins {
        for member in &bin.members {
            out.push(MemberRecord {
                patient_id: member.timeline.patient.patient_id.clone(),
                bin: bin.bin,
                label: member.label,
                matched_pair_id: member.matched_pair_id.clone(),
                sex: member.timeline.patient.sex,
                race: member.timeline.patient.race.clone(),
                split: member.split,
                note_count: member.timeline.notes.len(),
                doc: member_document(&member.timeline),
            });
        }
    }
    out
}

/// Write records as line-delimited JSON.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("serializable record");
        writeln!(w, "{line}").map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    w.flush().map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
}

/// Read line-delimited JSON records; any malformed line is an error carrying
/// its line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let raw = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|source| DatasetError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}
