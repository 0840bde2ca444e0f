//! Automatic evaluation for simplification output.
//!
//! All scorers work on token sequences. SARI and BLEU are reported on a
//! 0–100 scale, TER as a fraction of target length.

mod bleu;
mod fkgl;
mod report;
mod sari;
mod stats;
mod ter;

pub use bleu::bleu_corpus;
pub use fkgl::{count_syllables, fkgl, fkgl_with};
pub use report::{evaluate, EvaluationReport};
pub use sari::{corpus_sari, reverse_sari, sari, sari_ids, SariScore, NGRAM_ORDER};
pub use stats::{corpus_stats, CorpusStats};
pub use ter::{align_counts, ter_edits, ter_with_edits, EditBreakdown, EditCounts, MAX_SHIFTS};
