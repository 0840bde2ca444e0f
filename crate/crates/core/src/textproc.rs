//! Tokens, named-entity anonymization, vocabularies and parallel corpus files.
//!
//! Corpora are one sentence per line, already whitespace-tokenized, with the
//! complex side in `<name>.complex` and the aligned simple side in
//! `<name>.simple`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{DressError, Result};

/// A whitespace-free, nonempty-token sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        for t in &tokens {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(DressError::InvalidArgument(format!(
                    "token {t:?} is empty or contains whitespace"
                )));
            }
        }
        Ok(TokenSeq(tokens))
    }

    pub fn empty() -> Self {
        TokenSeq(Vec::new())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// Serialized form: tokens joined with single spaces.
    pub fn to_line(&self) -> String {
        self.0.join(" ")
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

impl From<&str> for TokenSeq {
    fn from(raw: &str) -> Self {
        tokenize(raw)
    }
}

/// Whitespace tokenization.
pub fn tokenize(raw: &str) -> TokenSeq {
    TokenSeq(raw.split_whitespace().map(str::to_owned).collect())
}

/// Tokenize raw bytes, rejecting invalid UTF-8.
pub fn tokenize_bytes(raw: &[u8]) -> Result<TokenSeq> {
    let s = std::str::from_utf8(raw).map_err(|e| DressError::Decode(format!("byte offset {}", e.valid_up_to())))?;
    Ok(tokenize(s))
}

// ---------------------------------------------------------------------------
// Named entities
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityType {
    Per,
    Loc,
    Org,
    Misc,
}

impl EntityType {
    pub const ALL: [EntityType; 4] = [EntityType::Per, EntityType::Loc, EntityType::Org, EntityType::Misc];

    pub fn tag(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Loc => "LOC",
            EntityType::Org => "ORG",
            EntityType::Misc => "MISC",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.tag() == tag)
    }
}

/// A tagged span `[start, start + len)` of a token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntitySpan {
    pub start: usize,
    pub len: usize,
    pub kind: EntityType,
}

/// Anything that can mark entity spans. Returned spans must be sorted and
/// non-overlapping.
pub trait EntityTagger {
    fn tag(&self, tokens: &[String]) -> Vec<EntitySpan>;
}

/// Word-list tagger: longest match wins, case-sensitive, and a span listed
/// under several types takes the first in PER, LOC, ORG, MISC order.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: HashMap<Vec<String>, EntityType>,
    max_len: usize,
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, kind: EntityType, span: &TokenSeq) {
        if span.is_empty() {
            return;
        }
        let key = span.tokens().to_vec();
        self.max_len = self.max_len.max(key.len());
        let slot = self.entries.entry(key).or_insert(kind);
        if kind < *slot {
            *slot = kind;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Spans of one type, sorted.
    pub fn spans(&self, kind: EntityType) -> Vec<TokenSeq> {
        let mut out: Vec<TokenSeq> = self
            .entries
            .iter()
            .filter(|(_, k)| **k == kind)
            .map(|(s, _)| TokenSeq(s.clone()))
            .collect();
        out.sort();
        out
    }

    /// Load `PER.txt`, `LOC.txt`, `ORG.txt`, `MISC.txt` from `dir`; absent
    /// files contribute nothing.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(DressError::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "gazetteer directory not found"),
            ));
        }
        let mut g = Gazetteer::new();
        for kind in EntityType::ALL {
            let path = dir.join(format!("{}.txt", kind.tag()));
            if !path.exists() {
                continue;
            }
            for span in read_lines(&path)? {
                g.insert(kind, &span);
            }
        }
        Ok(g)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| DressError::io(dir, e))?;
        for kind in EntityType::ALL {
            write_lines(&dir.join(format!("{}.txt", kind.tag())), &self.spans(kind))?;
        }
        Ok(())
    }
}

impl EntityTagger for Gazetteer {
    fn tag(&self, tokens: &[String]) -> Vec<EntitySpan> {
        let mut spans = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_len.min(tokens.len() - i);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| self.entries.get(&tokens[i..i + len]).map(|k| (len, *k)));
            match hit {
                Some((len, kind)) => {
                    spans.push(EntitySpan { start: i, len, kind });
                    i += len;
                }
                None => i += 1,
            }
        }
        spans
    }
}

/// Placeholder → original span, for one sentence pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityMap {
    entries: BTreeMap<String, Vec<String>>,
    by_span: HashMap<(EntityType, Vec<String>), String>,
    counts: BTreeMap<EntityType, usize>,
}

impl EntityMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, placeholder: &str) -> Option<&[String]> {
        self.entries.get(placeholder).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    fn placeholder_for(&mut self, kind: EntityType, span: &[String]) -> String {
        let key = (kind, span.to_vec());
        if let Some(p) = self.by_span.get(&key) {
            return p.clone();
        }
        let n = self.counts.entry(kind).or_insert(0);
        *n += 1;
        let placeholder = format!("{}@{}", kind.tag(), n);
        self.entries.insert(placeholder.clone(), span.to_vec());
        self.by_span.insert(key, placeholder.clone());
        placeholder
    }
}

/// Replace tagged spans with `NE@N` placeholders, numbering each type from 1
/// in order of first occurrence.
pub fn anonymize(seq: &TokenSeq, tagger: &dyn EntityTagger) -> (TokenSeq, EntityMap) {
    let mut map = EntityMap::new();
    let out = anonymize_with(seq, tagger, &mut map);
    (out, map)
}

/// Like [`anonymize`], continuing the numbering in `map`. Used to anonymize
/// the simple side of a pair with the placeholders of its complex side.
pub fn anonymize_with(seq: &TokenSeq, tagger: &dyn EntityTagger, map: &mut EntityMap) -> TokenSeq {
    let tokens = seq.tokens();
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    for span in tagger.tag(tokens) {
        out.extend_from_slice(&tokens[i..span.start]);
        let end = span.start + span.len;
        out.push(map.placeholder_for(span.kind, &tokens[span.start..end]));
        i = end;
    }
    out.extend_from_slice(&tokens[i..]);
    TokenSeq(out)
}

/// Inverse of [`anonymize`]. Placeholders missing from `map` are kept as-is.
pub fn deanonymize(seq: &TokenSeq, map: &EntityMap) -> TokenSeq {
    let mut out = Vec::with_capacity(seq.len());
    for t in seq.tokens() {
        match map.get(t) {
            Some(span) => out.extend_from_slice(span),
            None => out.push(t.clone()),
        }
    }
    TokenSeq(out)
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];
pub const DEFAULT_MIN_COUNT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    id_of: HashMap<String, usize>,
    token_of: Vec<String>,
    min_count: usize,
}

impl Vocab {
    /// Count tokens over both sides and keep those seen more than
    /// `min_count` times. Ids go by descending count, ties lexicographic.
    pub fn build(corpus: &ParallelCorpus, min_count: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(DressError::Empty(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for (c, s) in corpus.pairs() {
            for t in c.iter().chain(s.iter()) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, n)| *n > min_count && !RESERVED.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_owned()))
            .collect();
        Ok(Self::from_tokens(tokens, min_count))
    }

    fn from_tokens(token_of: Vec<String>, min_count: usize) -> Self {
        let id_of = token_of.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab {
            id_of,
            token_of,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_of.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    /// Id of `token`, or [`UNK`] when out of vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.id_of.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.id_of.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.token_of.get(id).map(String::as_str)
    }

    pub fn encode(&self, seq: &TokenSeq) -> Vec<usize> {
        seq.iter().map(|t| self.id(t)).collect()
    }

    /// Ids followed by EOS, the form decoder targets take.
    pub fn encode_target(&self, seq: &TokenSeq) -> Vec<usize> {
        let mut ids = self.encode(seq);
        ids.push(EOS);
        ids
    }

    /// Tokens for `ids`, stopping at EOS and skipping PAD and BOS.
    pub fn decode(&self, ids: &[usize]) -> TokenSeq {
        let mut out = Vec::new();
        for &id in ids {
            match id {
                EOS => break,
                PAD | BOS => continue,
                _ => out.push(self.token(id).unwrap_or(RESERVED[UNK]).to_owned()),
            }
        }
        TokenSeq(out)
    }

    /// Serialized form: a `min_count` header line, then one token per line in id order.
    pub fn to_text(&self) -> String {
        let mut s = format!("#min_count={}\n", self.min_count);
        for t in &self.token_of {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| DressError::Checkpoint("empty vocabulary".into()))?;
        let min_count = header
            .strip_prefix("#min_count=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| DressError::Checkpoint(format!("bad vocabulary header {header:?}")))?;
        let tokens: Vec<String> = lines.map(str::to_owned).collect();
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(DressError::Checkpoint("vocabulary lacks reserved tokens".into()));
        }
        let vocab = Self::from_tokens(tokens, min_count);
        if vocab.id_of.len() != vocab.token_of.len() {
            return Err(DressError::Checkpoint("duplicate vocabulary entries".into()));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| DressError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DressError::io(path, e))?;
        Self::from_text(&text)
    }
}

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pairs: Vec<(TokenSeq, TokenSeq)>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<(TokenSeq, TokenSeq)>) -> Result<Self> {
        if let Some(i) = pairs.iter().position(|(c, s)| c.is_empty() || s.is_empty()) {
            return Err(DressError::Alignment(format!("pair {} has an empty side", i + 1)));
        }
        Ok(ParallelCorpus { pairs })
    }

    pub fn from_sides(complex: Vec<TokenSeq>, simple: Vec<TokenSeq>) -> Result<Self> {
        if complex.len() != simple.len() {
            return Err(DressError::Alignment(format!(
                "{} complex lines vs {} simple lines",
                complex.len(),
                simple.len()
            )));
        }
        Self::new(complex.into_iter().zip(simple).collect())
    }

    pub fn pairs(&self) -> &[(TokenSeq, TokenSeq)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn complex(&self) -> impl Iterator<Item = &TokenSeq> {
        self.pairs.iter().map(|(c, _)| c)
    }

    pub fn simple(&self) -> impl Iterator<Item = &TokenSeq> {
        self.pairs.iter().map(|(_, s)| s)
    }

    pub fn save(&self, complex_path: &Path, simple_path: &Path) -> Result<()> {
        let c: Vec<TokenSeq> = self.complex().cloned().collect();
        let s: Vec<TokenSeq> = self.simple().cloned().collect();
        write_lines(complex_path, &c)?;
        write_lines(simple_path, &s)
    }
}

/// Read an aligned `complex`/`simple` file pair.
pub fn load_corpus(complex_path: &Path, simple_path: &Path) -> Result<ParallelCorpus> {
    let complex = read_lines(complex_path)?;
    let simple = read_lines(simple_path)?;
    ParallelCorpus::from_sides(complex, simple)
}

/// One tokenized sentence per line. A final newline does not produce an
/// extra empty sentence.
pub fn read_lines(path: &Path) -> Result<Vec<TokenSeq>> {
    let bytes = fs::read(path).map_err(|e| DressError::io(path, e))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| DressError::Decode(format!("{} (byte {})", path.display(), e.utf8_error().valid_up_to())))?;
    Ok(text.lines().map(tokenize).collect())
}

pub fn write_lines(path: &Path, seqs: &[TokenSeq]) -> Result<()> {
    let mut out = String::new();
    for s in seqs {
        out.push_str(&s.to_line());
        out.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DressError::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| DressError::io(path, e))
}
