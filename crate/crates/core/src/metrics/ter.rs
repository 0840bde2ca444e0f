use std::collections::{HashSet, VecDeque};
use std::hash::Hash;

use crate::error::{DressError, Result};
use crate::textproc::TokenSeq;

/// Upper bound on block shifts per sentence.
pub const MAX_SHIFTS: usize = 10;
/// Longest block considered for a shift.
const MAX_BLOCK: usize = 10;
/// Hypotheses up to this length get an exact search over shift sequences;
/// at most 720 orderings, so it stays cheap.
pub const EXACT_SHIFT_LEN: usize = 6;

/// Raw edit counts for one or more sentence pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub shifts: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.insertions + self.deletions + self.substitutions + self.shifts
    }
}

impl std::ops::AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.insertions += o.insertions;
        self.deletions += o.deletions;
        self.substitutions += o.substitutions;
        self.shifts += o.shifts;
    }
}

/// TER and mean per-sentence edit counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditBreakdown {
    pub ter: f64,
    pub insertions: f64,
    pub deletions: f64,
    pub substitutions: f64,
    pub shifts: f64,
    pub mean_length: f64,
}

impl EditBreakdown {
    /// Aggregate `counts` over `sentences` pairs whose targets total
    /// `target_tokens`.
    pub fn from_totals(counts: EditCounts, sentences: usize, target_tokens: usize) -> Result<Self> {
        if sentences == 0 || target_tokens == 0 {
            return Err(DressError::Empty("TER needs at least one target token".into()));
        }
        let n = sentences as f64;
        Ok(EditBreakdown {
            ter: counts.total() as f64 / target_tokens as f64,
            insertions: counts.insertions as f64 / n,
            deletions: counts.deletions as f64 / n,
            substitutions: counts.substitutions as f64 / n,
            shifts: counts.shifts as f64 / n,
            mean_length: target_tokens as f64 / n,
        })
    }
}

/// Single-pair TER of turning `from` into `to`, normalized by `|to|`.
pub fn ter_with_edits(from: &TokenSeq, to: &TokenSeq) -> Result<EditBreakdown> {
    if to.is_empty() {
        return Err(DressError::Empty("TER target is empty".into()));
    }
    let counts = ter_edits(from.tokens(), to.tokens());
    EditBreakdown::from_totals(counts, 1, to.len())
}

/// Edits turning `from` into `to`. Short hypotheses (up to
/// [`EXACT_SHIFT_LEN`] tokens) get the minimum of shifts plus edit distance
/// over every sequence of block shifts. Longer ones use greedy block shifts,
/// each applied only when it strictly lowers the edit distance. A unit-cost
/// Levenshtein alignment of the shifted hypothesis gives the rest. `to` may
/// be empty.
pub fn ter_edits<T: Eq + Hash + Clone>(from: &[T], to: &[T]) -> EditCounts {
    let (hyp, shifts) = if from.len() <= EXACT_SHIFT_LEN {
        exact_shifts(from, to)
    } else {
        greedy_shifts(from, to)
    };
    let mut counts = align_counts(&hyp, to);
    counts.shifts = shifts;
    counts
}

fn greedy_shifts<T: Eq + Clone>(from: &[T], to: &[T]) -> (Vec<T>, usize) {
    let mut hyp: Vec<T> = from.to_vec();
    let mut shifts = 0;
    let mut scratch = Vec::new();
    while shifts < MAX_SHIFTS {
        let current = levenshtein(&hyp, to, &mut scratch);
        if current == 0 {
            break;
        }
        match best_shift(&hyp, to, current, &mut scratch) {
            Some(next) => {
                hyp = next;
                shifts += 1;
            }
            None => break,
        }
    }
    (hyp, shifts)
}

/// Breadth-first search over orderings reachable by block shifts. Ties keep
/// the ordering found first, which has the fewest shifts.
fn exact_shifts<T: Eq + Hash + Clone>(from: &[T], to: &[T]) -> (Vec<T>, usize) {
    let mut scratch = Vec::new();
    let mut seen: HashSet<Vec<T>> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(from.to_vec());
    queue.push_back((from.to_vec(), 0usize));
    let mut best = (from.to_vec(), 0usize, levenshtein(from, to, &mut scratch));
    while let Some((hyp, k)) = queue.pop_front() {
        let d = levenshtein(&hyp, to, &mut scratch);
        if k + d < best.1 + best.2 {
            best = (hyp.clone(), k, d);
        }
        // Deeper orderings cost at least k + 1.
        if k + 1 >= best.1 + best.2 || k == MAX_SHIFTS {
            continue;
        }
        for start in 0..hyp.len() {
            for len in 1..=hyp.len() - start {
                let rest: Vec<T> = hyp[..start].iter().chain(&hyp[start + len..]).cloned().collect();
                for dest in 0..=rest.len() {
                    if dest == start {
                        continue;
                    }
                    let mut cand = Vec::with_capacity(hyp.len());
                    cand.extend_from_slice(&rest[..dest]);
                    cand.extend_from_slice(&hyp[start..start + len]);
                    cand.extend_from_slice(&rest[dest..]);
                    if seen.insert(cand.clone()) {
                        queue.push_back((cand, k + 1));
                    }
                }
            }
        }
    }
    (best.0, best.1)
}

fn occurs_in<T: Eq>(block: &[T], seq: &[T]) -> bool {
    block.len() <= seq.len() && seq.windows(block.len()).any(|w| w == block)
}

/// The shift with the lowest resulting distance, if it beats `current`.
/// Only blocks that occur verbatim in `to` are moved. Earliest candidate
/// wins ties.
fn best_shift<T: Eq + Clone>(hyp: &[T], to: &[T], current: usize, scratch: &mut Vec<usize>) -> Option<Vec<T>> {
    let mut best: Option<(usize, Vec<T>)> = None;
    let mut cand: Vec<T> = Vec::with_capacity(hyp.len());
    for start in 0..hyp.len() {
        for len in 1..=MAX_BLOCK.min(hyp.len() - start) {
            let block = &hyp[start..start + len];
            if !occurs_in(block, to) {
                break;
            }
            let rest_len = hyp.len() - len;
            for dest in 0..=rest_len {
                if dest == start {
                    continue;
                }
                cand.clear();
                let rest = hyp[..start].iter().chain(&hyp[start + len..]);
                cand.extend(rest.clone().take(dest).cloned());
                cand.extend(block.iter().cloned());
                cand.extend(rest.skip(dest).cloned());
                let d = levenshtein(&cand, to, scratch);
                let bound = best.as_ref().map_or(current, |(b, _)| *b);
                if d < bound {
                    best = Some((d, cand.clone()));
                }
            }
        }
    }
    best.map(|(_, v)| v)
}

fn levenshtein<T: Eq>(a: &[T], b: &[T], row: &mut Vec<usize>) -> usize {
    row.clear();
    row.extend(0..=b.len());
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            let cost = if x == y { diag } else { diag + 1 };
            row[j + 1] = cost.min(up + 1).min(row[j] + 1);
            diag = up;
        }
    }
    row[b.len()]
}

/// Insertion, deletion and substitution counts of a minimum-cost
/// Levenshtein alignment (no shifts). Backtrace prefers the diagonal, then
/// deletions.
pub fn align_counts<T: Eq>(from: &[T], to: &[T]) -> EditCounts {
    let (n, m) = (from.len(), to.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for (j, cell) in d.iter_mut().take(w).enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(from[i - 1] != to[j - 1]);
            d[i * w + j] = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let differs = from[i - 1] != to[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(differs) == here {
                counts.substitutions += usize::from(differs);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::tokenize;

    fn ter(a: &str, b: &str) -> EditBreakdown {
        ter_with_edits(&tokenize(a), &tokenize(b)).unwrap()
    }

    #[test]
    fn identity() {
        let e = ter("a b c", "a b c");
        assert_eq!(e.ter, 0.0);
    }

    #[test]
    fn single_deletion() {
        let e = ter("a b c", "a b");
        assert_eq!(e.ter, 0.5);
        assert_eq!(e.deletions, 1.0);
        assert_eq!(e.mean_length, 2.0);
    }

    #[test]
    fn block_shift() {
        let e = ter("a b c d", "c d a b");
        assert_eq!(e.shifts, 1.0);
        assert_eq!(e.ter, 0.25);
    }

    #[test]
    fn insertion_and_substitution() {
        let e = ter("a b", "a x b y");
        assert_eq!(e.insertions, 2.0);
        let e = ter("a b c", "a q c");
        assert_eq!(e.substitutions, 1.0);
        assert!((e.ter - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_target_is_an_error() {
        assert!(ter_with_edits(&tokenize("a"), &tokenize("")).is_err());
        assert_eq!(ter_edits(&["a", "b"], &[]).deletions, 2);
    }
}
