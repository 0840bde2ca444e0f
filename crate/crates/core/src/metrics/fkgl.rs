use crate::error::{DressError, Result};
use crate::textproc::TokenSeq;

/// Flesch–Kincaid grade level, one sentence per sequence.
pub fn fkgl(sentences: &[TokenSeq]) -> Result<f64> {
    fkgl_with(sentences, false)
}

/// Flesch–Kincaid grade level. With `split_full_stops`, each sequence is
/// further split on `.` tokens and every nonempty piece counts as a sentence.
///
/// Only tokens containing a letter count as words.
pub fn fkgl_with(sentences: &[TokenSeq], split_full_stops: bool) -> Result<f64> {
    let mut n_sentences = 0usize;
    let mut words = 0usize;
    let mut syllables = 0usize;
    for s in sentences {
        if split_full_stops {
            n_sentences += s.tokens().split(|t| t == ".").filter(|piece| !piece.is_empty()).count();
        } else {
            n_sentences += 1;
        }
        for t in s.iter().filter(|t| t.chars().any(char::is_alphabetic)) {
            words += 1;
            syllables += count_syllables(t)?;
        }
    }
    if words == 0 || n_sentences == 0 {
        return Err(DressError::Empty("FKGL needs at least one word".into()));
    }
    let words_f = words as f64;
    Ok(0.39 * (words_f / n_sentences as f64) + 11.8 * (syllables as f64 / words_f) - 15.59)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Heuristic syllable count: maximal vowel groups (y included), minus a
/// silent final `e` unless the word ends in consonant + `le`; at least 1.
pub fn count_syllables(word: &str) -> Result<usize> {
    let letters: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    if letters.is_empty() {
        return Err(DressError::InvalidArgument(format!("{word:?} has no letters")));
    }
    let mut groups = 0usize;
    let mut prev_vowel = false;
    for &c in &letters {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = letters.len();
    let consonant_le = n >= 3 && letters[n - 2] == 'l' && !is_vowel(letters[n - 3]);
    if groups > 1 && letters[n - 1] == 'e' && !consonant_le {
        groups -= 1;
    }
    Ok(groups.max(1))
}
