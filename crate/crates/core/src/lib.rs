//! Detect and mitigate demographic bias in longitudinal text corpora.
//!
//! The library covers the full audit pipeline at desk scale:
//!
//! - [`corpus`] — ingest line-delimited note/patient/diagnosis files, filter
//!   note types, drop near-duplicate notes, cap timelines.
//! - [`cohort`] — define cases from a diagnosis code set, bin by age at first
//!   diagnosis, match 1:1 controls, truncate to pre-index history.
//! - [`lexical`] — tokenization, TF-IDF, sentence splitting, and the textual
//!   distribution statistics used to diagnose subgroup divergence.
//! - [`debias`] — random filtering, TF-IDF informativeness filtering, and
//!   gender-word neutralization, plus their composition.
//! - [`model`] — a reproducible bag-of-words logistic classifier and an import
//!   path for externally produced predictions.
//! - [`fairness`] — classification-parity metrics (accuracy, uncertainty zone,
//!   FPR/FNR, BER and BER ratio) per demographic subgroup.
//! - [`explain`] — local surrogate explanations and the influential-word audit.
//! - [`synth`] — synthetic corpora with controllable demographic bias so the
//!   whole pipeline can be exercised against known ground truth.
//! - [`run`] — run configuration, manifests, and the stage orchestration used
//!   by the `fairtext` CLI.

pub mod cohort;
pub mod corpus;
pub mod dataset;
pub mod debias;
pub mod explain;
pub mod fairness;
pub mod lexical;
pub mod model;
pub mod report;
pub mod run;
pub mod synth;

pub use cohort::Label;
pub use corpus::Sex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a stream-specific seed from a run seed and a path of string parts.
///
/// FNV-1a over the parts, mixed with the run seed. Used so that per-patient or
/// per-document randomness is independent of scheduling and iteration order.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.rotate_left(17);
    for part in parts {
        for b in part.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A deterministic RNG for the given seed and stream path.
pub fn seeded_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}
