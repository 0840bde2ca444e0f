use std::collections::HashMap;

use crate::error::{DressError, Result};
use crate::textproc::TokenSeq;

const MAX_ORDER: usize = 4;

/// Corpus BLEU (0–100) in the mteval-v13a style: clipped n-gram counts
/// pooled over the corpus for n = 1..4, geometric mean with no smoothing,
/// and a brevity penalty from the reference length closest to each output
/// (ties go to the shorter reference).
pub fn bleu_corpus(outputs: &[TokenSeq], references: &[Vec<TokenSeq>]) -> Result<f64> {
    if outputs.len() != references.len() {
        return Err(DressError::Alignment(format!(
            "{} outputs vs {} reference sets",
            outputs.len(),
            references.len()
        )));
    }
    if outputs.is_empty() {
        return Err(DressError::Empty("BLEU over an empty corpus".into()));
    }
    let mut matched = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (hyp, refs) in outputs.iter().zip(references) {
        if refs.is_empty() {
            return Err(DressError::InvalidArgument("output without references".into()));
        }
        let h = hyp.tokens();
        hyp_len += h.len();
        ref_len += refs
            .iter()
            .map(TokenSeq::len)
            .min_by_key(|&r| (r.abs_diff(h.len()), r))
            .unwrap_or(0);
        for n in 1..=MAX_ORDER {
            if h.len() < n {
                continue;
            }
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                let mut counts: HashMap<&[String], usize> = HashMap::new();
                for g in r.tokens().windows(n) {
                    *counts.entry(g).or_insert(0) += 1;
                }
                for (g, c) in counts {
                    let slot = max_ref.entry(g).or_insert(0);
                    *slot = (*slot).max(c);
                }
            }
            let mut counts: HashMap<&[String], usize> = HashMap::new();
            for g in h.windows(n) {
                *counts.entry(g).or_insert(0) += 1;
            }
            matched[n - 1] += counts
                .iter()
                .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
            total[n - 1] += h.len() + 1 - n;
        }
    }
    if matched.iter().zip(&total).any(|(&m, &t)| m == 0 || t == 0) {
        return Ok(0.0);
    }
    let log_precision: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / MAX_ORDER as f64;
    let brevity = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * brevity * log_precision.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::tokenize;

    fn c(lines: &[&str]) -> Vec<TokenSeq> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    #[test]
    fn perfect_and_disjoint() {
        let out = c(&["the cat sat on the mat", "a dog barked loudly today"]);
        let refs: Vec<Vec<TokenSeq>> = out.iter().map(|o| vec![o.clone()]).collect();
        assert!((bleu_corpus(&out, &refs).unwrap() - 100.0).abs() < 1e-9);
        let other = vec![c(&["x y z w"]), c(&["q r s t u"])];
        assert_eq!(bleu_corpus(&out, &other).unwrap(), 0.0);
    }

    #[test]
    fn brevity_penalty_case() {
        let score = bleu_corpus(&c(&["a b c d"]), &[c(&["a b c d e"])]).unwrap();
        let expected = 100.0 * (1.0f64 - 5.0 / 4.0).exp();
        assert!((score - expected).abs() < 1e-9);
        assert!((score - 77.88).abs() < 0.01);
    }

    #[test]
    fn closest_reference_length() {
        // closest to 4 among {2, 6} is a tie: the shorter one (2) wins, so no penalty
        let score = bleu_corpus(&c(&["a b c d"]), &[c(&["a b", "a b c d e f"])]).unwrap();
        let p = [4.0 / 4.0, 3.0 / 3.0, 2.0 / 2.0, 1.0 / 1.0];
        let expected = 100.0 * (p.iter().map(|x: &f64| x.ln()).sum::<f64>() / 4.0).exp();
        assert!((score - expected).abs() < 1e-9);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(bleu_corpus(&c(&["a"]), &[]).is_err());
    }
}
