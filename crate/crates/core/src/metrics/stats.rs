use std::collections::HashSet;

use super::ter::{ter_edits, EditBreakdown, EditCounts};
use crate::error::{DressError, Result};
use crate::textproc::TokenSeq;

/// Output-side corpus statistics: edits from source to output plus the
/// share of output tokens copied from the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusStats {
    pub edits: EditBreakdown,
    pub totals: EditCounts,
    pub copy_rate: f64,
}

pub fn corpus_stats(sources: &[TokenSeq], outputs: &[TokenSeq]) -> Result<CorpusStats> {
    if sources.len() != outputs.len() {
        return Err(DressError::Alignment(format!(
            "{} sources vs {} outputs",
            sources.len(),
            outputs.len()
        )));
    }
    let mut totals = EditCounts::default();
    let mut target_tokens = 0usize;
    let mut copied = 0usize;
    for (src, out) in sources.iter().zip(outputs) {
        totals += ter_edits(src.tokens(), out.tokens());
        target_tokens += out.len();
        let vocab: HashSet<&str> = src.iter().collect();
        copied += out.iter().filter(|t| vocab.contains(t)).count();
    }
    let edits = EditBreakdown::from_totals(totals, sources.len(), target_tokens)?;
    Ok(CorpusStats {
        edits,
        totals,
        copy_rate: copied as f64 / target_tokens as f64,
    })
}
