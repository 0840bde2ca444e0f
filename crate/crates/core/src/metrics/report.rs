use super::{bleu_corpus, corpus_sari, corpus_stats, fkgl, SariScore};
use crate::error::Result;
use crate::textproc::TokenSeq;

/// Everything `evaluate` reports for one system output.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub bleu: f64,
    pub fkgl: f64,
    pub sari: SariScore,
    pub ter: f64,
    pub insertions: f64,
    pub deletions: f64,
    pub substitutions: f64,
    pub shifts: f64,
    pub mean_len: f64,
    pub copy_rate: f64,
}

/// Score `outputs` against their `sources` and reference sets.
pub fn evaluate(sources: &[TokenSeq], outputs: &[TokenSeq], references: &[Vec<TokenSeq>]) -> Result<EvaluationReport> {
    let bleu = bleu_corpus(outputs, references)?;
    let sari = corpus_sari(sources, outputs, references)?;
    let fkgl = fkgl(outputs)?;
    let stats = corpus_stats(sources, outputs)?;
    Ok(EvaluationReport {
        bleu,
        fkgl,
        sari,
        ter: stats.edits.ter,
        insertions: stats.edits.insertions,
        deletions: stats.edits.deletions,
        substitutions: stats.edits.substitutions,
        shifts: stats.edits.shifts,
        mean_len: stats.edits.mean_length,
        copy_rate: stats.copy_rate,
    })
}

impl EvaluationReport {
    /// JSON with every number printed to two decimals.
    pub fn to_json(&self) -> String {
        let f = |x: f64| format!("{x:.2}");
        format!(
            concat!(
                "{{\n",
                "  \"bleu\": {},\n",
                "  \"fkgl\": {},\n",
                "  \"sari\": {{\"total\": {}, \"add\": {}, \"keep\": {}, \"del\": {}}},\n",
                "  \"ter\": {},\n",
                "  \"edits\": {{\"ins\": {}, \"del\": {}, \"sub\": {}, \"shift\": {}}},\n",
                "  \"mean_len\": {},\n",
                "  \"copy_rate\": {}\n",
                "}}\n"
            ),
            f(self.bleu),
            f(self.fkgl),
            f(self.sari.total),
            f(self.sari.add_score),
            f(self.sari.keep_score),
            f(self.sari.del_score),
            f(self.ter),
            f(self.insertions),
            f(self.deletions),
            f(self.substitutions),
            f(self.shifts),
            f(self.mean_len),
            f(self.copy_rate),
        )
    }
}
