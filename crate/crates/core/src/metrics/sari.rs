use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use crate::error::{DressError, Result};
use crate::textproc::TokenSeq;

/// Highest n-gram order scored.
pub const NGRAM_ORDER: usize = 4;

/// SARI and its three per-operation components, each on a 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SariScore {
    pub total: f64,
    pub add_score: f64,
    pub keep_score: f64,
    pub del_score: f64,
}

impl SariScore {
    fn from_parts(add: f64, keep: f64, del: f64) -> Self {
        let add_score = 100.0 * add;
        let keep_score = 100.0 * keep;
        let del_score = 100.0 * del;
        SariScore {
            total: (add_score + keep_score + del_score) / 3.0,
            add_score,
            keep_score,
            del_score,
        }
    }
}

/// SARI of `output` against `source` and `references`.
///
/// Keep and addition use F1, deletion uses precision, each averaged over
/// n = 1..4. When an operation has neither candidate nor reference n-grams
/// at some order it scores 1 at that order.
pub fn sari(source: &TokenSeq, output: &TokenSeq, references: &[TokenSeq]) -> Result<SariScore> {
    let refs: Vec<&[String]> = references.iter().map(TokenSeq::tokens).collect();
    sari_ids(source.tokens(), output.tokens(), &refs)
}

/// SARI with output and reference swapped: the reference is scored as if it
/// were the system output.
pub fn reverse_sari(source: &TokenSeq, output: &TokenSeq, reference: &TokenSeq) -> Result<SariScore> {
    sari(source, reference, std::slice::from_ref(output))
}

/// Mean of sentence-level SARI over an aligned corpus.
pub fn corpus_sari(sources: &[TokenSeq], outputs: &[TokenSeq], references: &[Vec<TokenSeq>]) -> Result<SariScore> {
    if sources.len() != outputs.len() || sources.len() != references.len() {
        return Err(DressError::Alignment(format!(
            "{} sources, {} outputs, {} reference sets",
            sources.len(),
            outputs.len(),
            references.len()
        )));
    }
    if sources.is_empty() {
        return Err(DressError::Empty("SARI over an empty corpus".into()));
    }
    let (mut add, mut keep, mut del) = (0.0, 0.0, 0.0);
    for ((s, o), r) in sources.iter().zip(outputs).zip(references) {
        let score = sari(s, o, r)?;
        add += score.add_score;
        keep += score.keep_score;
        del += score.del_score;
    }
    let n = sources.len() as f64;
    Ok(SariScore::from_parts(
        add / n / 100.0,
        keep / n / 100.0,
        del / n / 100.0,
    ))
}

/// SARI over any hashable token type; the reward path uses vocabulary ids.
pub fn sari_ids<T: Hash + Eq>(source: &[T], output: &[T], references: &[&[T]]) -> Result<SariScore> {
    if references.is_empty() {
        return Err(DressError::InvalidArgument("SARI needs at least one reference".into()));
    }
    if source.is_empty() && output.is_empty() {
        return Err(DressError::Empty("SARI with empty source and output".into()));
    }
    let (mut add, mut keep, mut del) = (0.0, 0.0, 0.0);
    for n in 1..=NGRAM_ORDER {
        let (k, d, a) = sari_order(source, output, references, n);
        keep += k;
        del += d;
        add += a;
    }
    let orders = NGRAM_ORDER as f64;
    Ok(SariScore::from_parts(add / orders, keep / orders, del / orders))
}

type Counts<'a, T> = HashMap<&'a [T], usize>;

fn ngrams<T: Hash + Eq>(tokens: &[T], n: usize) -> Counts<'_, T> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Scores `(keep F1, deletion precision, addition F1)` at one n-gram order.
fn sari_order<'a, T: Hash + Eq>(source: &'a [T], output: &'a [T], references: &[&'a [T]], n: usize) -> (f64, f64, f64) {
    let num_refs = references.len();
    let mut src = ngrams(source, n);
    let mut out = ngrams(output, n);
    src.values_mut().for_each(|c| *c *= num_refs);
    out.values_mut().for_each(|c| *c *= num_refs);
    let mut refs: Counts<'a, T> = HashMap::new();
    for r in references {
        for (g, c) in ngrams(r, n) {
            *refs.entry(g).or_insert(0) += c;
        }
    }
    let get = |m: &Counts<'a, T>, g: &[T]| m.get(g).copied().unwrap_or(0);

    // keep: n-grams of the source retained in the output
    let mut keep_p = 0.0;
    let mut keep_cands = 0usize;
    for (g, &s) in &src {
        let kept = s.min(get(&out, g));
        if kept > 0 {
            keep_cands += 1;
            keep_p += kept.min(get(&refs, g)) as f64 / kept as f64;
        }
    }
    let mut keep_r = 0.0;
    let mut keep_refs = 0usize;
    for (g, &s) in &src {
        let wanted = s.min(get(&refs, g));
        if wanted > 0 {
            keep_refs += 1;
            let good = s.min(get(&out, g)).min(get(&refs, g));
            keep_r += good as f64 / wanted as f64;
        }
    }
    let keep = match (keep_cands, keep_refs) {
        (0, 0) => 1.0,
        (kc, kr) => {
            let p = if kc > 0 { keep_p / kc as f64 } else { 0.0 };
            let r = if kr > 0 { keep_r / kr as f64 } else { 0.0 };
            f1(p, r)
        }
    };

    // deletion: n-grams of the source dropped from the output
    let mut del_p = 0.0;
    let mut del_cands = 0usize;
    let mut del_refs = 0usize;
    for (g, &s) in &src {
        let deleted = s.saturating_sub(get(&out, g));
        if deleted > 0 {
            del_cands += 1;
            del_p += deleted.saturating_sub(get(&refs, g)) as f64 / deleted as f64;
        }
        if s > get(&refs, g) {
            del_refs += 1;
        }
    }
    let del = match (del_cands, del_refs) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        (dc, _) => del_p / dc as f64,
    };

    // addition: output n-grams absent from the source
    let added: HashSet<&[T]> = out.keys().filter(|g| !src.contains_key(*g)).copied().collect();
    let add_refs = refs.keys().filter(|g| !src.contains_key(*g)).count();
    let add_good = added.iter().filter(|g| refs.contains_key(*g)).count();
    let add = match (added.len(), add_refs) {
        (0, 0) => 1.0,
        (ac, ar) => {
            let p = if ac > 0 { add_good as f64 / ac as f64 } else { 0.0 };
            let r = if ar > 0 { add_good as f64 / ar as f64 } else { 0.0 };
            f1(p, r)
        }
    };

    (keep, del, add)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::tokenize;

    fn s(x: &str) -> TokenSeq {
        tokenize(x)
    }

    #[test]
    fn output_equal_to_reference_is_perfect() {
        let score = sari(
            &s("the old man walked slowly home"),
            &s("the man walked home"),
            &[s("the man walked home")],
        )
        .unwrap();
        assert_eq!(score.total, 100.0);
    }

    #[test]
    fn unchanged_copy_of_identical_reference_is_perfect() {
        let x = s("a b c d e");
        let score = sari(&x, &x, std::slice::from_ref(&x)).unwrap();
        assert_eq!(score.total, 100.0);
        assert_eq!(score.keep_score, 100.0);
    }

    #[test]
    fn reverse_swaps_roles() {
        let (x, y, yh) = (s("a b c d"), s("a d"), s("a b d"));
        assert_eq!(
            reverse_sari(&x, &y, &yh).unwrap(),
            sari(&x, &yh, std::slice::from_ref(&y)).unwrap()
        );
        assert_eq!(reverse_sari(&x, &y, &y).unwrap().total, 100.0);
    }

    #[test]
    fn errors() {
        assert!(sari(&s(""), &s(""), &[s("a")]).is_err());
        assert!(sari(&s("a"), &s("a"), &[]).is_err());
    }

    #[test]
    fn total_is_mean_of_operations() {
        let score = sari(&s("a b c d"), &s("a b d"), &[s("a d")]).unwrap();
        let mean = (score.add_score + score.keep_score + score.del_score) / 3.0;
        assert!((score.total - mean).abs() < 1e-12);
    }
}
