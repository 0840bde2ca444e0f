//! Rule-based complex/simple sentence pairs for desk-scale experiments.
//!
//! A complex sentence is one or two clauses `SUBJ VERB the [ADJ] NOUN [PP]`
//! joined by `and`, optionally with a parenthetical aside after the first
//! subject. Its simplification replaces every rare word by its dictionary
//! entry, drops the aside and turns the joining `and` into a full stop.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{DressError, Result};
use crate::rng::Rng;
use crate::textproc::{write_lines, EntityType, Gazetteer, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Verb,
    Noun,
    Adj,
    Person,
}

/// Everything the generator draws from.
#[derive(Debug, Clone)]
pub struct RuleSet {
    /// `(rare, simple, slot)`; rare words appear only in complex sentences.
    pub substitutions: Vec<(String, String, Slot)>,
    /// Plain words per slot, used on both sides.
    pub words: HashMap<Slot, Vec<String>>,
    /// Deletable spans.
    pub asides: Vec<TokenSeq>,
    /// Clause conjunction that becomes a full stop, if splitting is enabled.
    pub split_trigger: Option<String>,
    pub gazetteer: Gazetteer,
    /// Probability that a slot is filled with a rare word.
    pub rare_rate: f64,
    pub aside_rate: f64,
    pub two_clause_rate: f64,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

const SUBSTITUTIONS: &[(&str, &str, Slot)] = &[
    ("purchased", "bought", Slot::Verb),
    ("observed", "saw", Slot::Verb),
    ("assisted", "helped", Slot::Verb),
    ("discovered", "found", Slot::Verb),
    ("constructed", "built", Slot::Verb),
    ("utilized", "used", Slot::Verb),
    ("obtained", "got", Slot::Verb),
    ("desired", "wanted", Slot::Verb),
    ("admired", "liked", Slot::Verb),
    ("consumed", "ate", Slot::Verb),
    ("retained", "kept", Slot::Verb),
    ("selected", "picked", Slot::Verb),
    ("residence", "house", Slot::Noun),
    ("automobile", "car", Slot::Noun),
    ("volume", "book", Slot::Noun),
    ("canine", "dog", Slot::Noun),
    ("vessel", "boat", Slot::Noun),
    ("correspondence", "letter", Slot::Noun),
    ("donation", "gift", Slot::Noun),
    ("garment", "coat", Slot::Noun),
    ("timepiece", "clock", Slot::Noun),
    ("beverage", "drink", Slot::Noun),
    ("enormous", "big", Slot::Adj),
    ("minuscule", "small", Slot::Adj),
    ("ancient", "old", Slot::Adj),
    ("crimson", "red", Slot::Adj),
    ("excellent", "good", Slot::Adj),
    ("magnificent", "nice", Slot::Adj),
    ("rapid", "fast", Slot::Adj),
    ("costly", "dear", Slot::Adj),
    ("physician", "doctor", Slot::Person),
    ("instructor", "teacher", Slot::Person),
    ("gentleman", "man", Slot::Person),
    ("youngster", "child", Slot::Person),
    ("repaired", "fixed", Slot::Verb),
    ("transported", "carried", Slot::Verb),
    ("equine", "horse", Slot::Noun),
    ("frigid", "cold", Slot::Adj),
    ("elevated", "tall", Slot::Adj),
    ("luminous", "bright", Slot::Adj),
    ("aviator", "pilot", Slot::Person),
    ("chauffeur", "driver", Slot::Person),
];

impl RuleSet {
    /// The built-in rule set: 42 substitutions, 8 asides, `and` splitting
    /// and a small gazetteer.
    pub fn standard() -> Self {
        let mut w = HashMap::new();
        w.insert(
            Slot::Verb,
            words("bought saw helped found built used got wanted liked ate kept picked sold took made washed painted moved fixed carried opened closed dropped lost pushed pulled drew cleaned"),
        );
        w.insert(
            Slot::Noun,
            words(
                "house car book dog boat letter gift coat clock drink cat box ball cake door tree \
                 shop bag key map lamp bike hat chair table cup bed pen horse cow bird fish egg milk bread \
                 apple shoe ring coin card bell drum ship train bus wall roof window garden kite toy radio",
            ),
        );
        w.insert(Slot::Adj, words("big small old red good nice fast dear new blue long green warm dark cold tall bright soft hard hot wet dry clean short"));
        w.insert(
            Slot::Person,
            words("doctor teacher man child woman boy girl farmer pilot driver nurse cook baker"),
        );

        let mut gazetteer = Gazetteer::new();
        let people = "John|Bob|Mary|Anna Smith|Peter Brown|Lucy|Tom|Sara Jones|David|Emma|Carlos Diaz|Mei Lin";
        let places = "Paris|Berlin|New York|Cairo|Lima|Oslo|San Diego|Tokyo|Rome|Hong Kong";
        let orgs = "Acme Corp|Globex|Initech|Red Cross|Stark Industries|Umbrella Group";
        let misc = "Christmas|Easter|World Cup|Olympics|Ramadan|Diwali";
        for (kind, names) in [
            (EntityType::Per, people),
            (EntityType::Loc, places),
            (EntityType::Org, orgs),
            (EntityType::Misc, misc),
        ] {
            for n in names.split('|') {
                gazetteer.insert(kind, &TokenSeq::from(n));
            }
        }

        RuleSet {
            substitutions: SUBSTITUTIONS
                .iter()
                .map(|(r, s, k)| ((*r).to_owned(), (*s).to_owned(), *k))
                .collect(),
            words: w,
            asides: [
                "( reportedly )",
                "( allegedly )",
                "( as anticipated )",
                "( according to witnesses )",
                "( by all accounts )",
                "( once again )",
                "( without doubt )",
                "( to everyone 's surprise )",
            ]
            .iter()
            .map(|s| TokenSeq::from(*s))
            .collect(),
            split_trigger: Some("and".to_owned()),
            gazetteer,
            rare_rate: 0.3,
            aside_rate: 0.35,
            two_clause_rate: 0.45,
        }
    }

    /// The dictionary as `(rare, simple)` pairs.
    pub fn dictionary(&self) -> Vec<(String, String)> {
        self.substitutions
            .iter()
            .map(|(r, s, _)| (r.clone(), s.clone()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.substitutions.is_empty() && self.asides.is_empty() && self.split_trigger.is_none() {
            return Err(DressError::Config(
                "rule set has no substitutions, asides or split trigger".into(),
            ));
        }
        let mut seen = HashSet::new();
        for (rare, simple, slot) in &self.substitutions {
            if rare == simple || !seen.insert(rare) {
                return Err(DressError::Config(format!(
                    "substitution for `{rare}` is not a function"
                )));
            }
            if self.words.get(slot).is_some_and(|w| w.contains(rare)) {
                return Err(DressError::Config(format!("rare word `{rare}` is also a plain word")));
            }
        }
        for slot in [Slot::Verb, Slot::Noun] {
            if self.words.get(&slot).is_none_or(Vec::is_empty) && !self.substitutions.iter().any(|(_, _, s)| *s == slot)
            {
                return Err(DressError::Config(format!("no words for {slot:?}")));
            }
        }
        if self.gazetteer.spans(EntityType::Per).is_empty() {
            return Err(DressError::Config("gazetteer lists no people".into()));
        }
        for p in [self.rare_rate, self.aside_rate, self.two_clause_rate] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DressError::Config(format!("probability {p} outside [0, 1]")));
            }
        }
        if !self.substitutions.is_empty() && self.rare_rate == 0.0 {
            return Err(DressError::Config(
                "rare_rate must be positive when substitutions exist".into(),
            ));
        }
        Ok(())
    }
}

/// Ground-truth edits applied to one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditLog {
    /// Word substitutions, clause splits included.
    pub substitutions: usize,
    pub deletions: usize,
    pub splits: usize,
}

impl EditLog {
    pub const HEADER: &'static str = "#substitutions\tdeletions\tsplits";

    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}", self.substitutions, self.deletions, self.splits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub complex: TokenSeq,
    pub simple: TokenSeq,
    pub edits: EditLog,
}

struct Builder<'a> {
    rules: &'a RuleSet,
    complex: Vec<String>,
    simple: Vec<String>,
    edits: EditLog,
    rare_used: bool,
}

impl Builder<'_> {
    fn same(&mut self, toks: &[String]) {
        self.complex.extend_from_slice(toks);
        self.simple.extend_from_slice(toks);
    }

    fn fill(&mut self, slot: Slot, rng: &mut Rng) {
        let rare: Vec<_> = self.rules.substitutions.iter().filter(|(_, _, s)| *s == slot).collect();
        let plain = self.rules.words.get(&slot).map(Vec::as_slice).unwrap_or(&[]);
        let use_rare = !rare.is_empty() && (plain.is_empty() || rng.gen_bool(self.rules.rare_rate));
        if use_rare {
            let (r, s, _) = rare.choose(rng).expect("nonempty");
            self.complex.push(r.clone());
            self.simple.push(s.clone());
            self.edits.substitutions += 1;
            self.rare_used = true;
        } else if let Some(w) = plain.choose(rng) {
            self.same(std::slice::from_ref(w));
        }
    }

    fn entity(&mut self, kind: EntityType, rng: &mut Rng) -> bool {
        match self.rules.gazetteer.spans(kind).choose(rng) {
            Some(span) => {
                self.same(span.tokens());
                true
            }
            None => false,
        }
    }

    fn clause(&mut self, rng: &mut Rng, aside: bool) {
        let roll = rng.gen_range(0..10);
        if roll < 4 || !(roll < 6 && self.entity(EntityType::Org, rng)) {
            if roll < 4 {
                self.entity(EntityType::Per, rng);
            } else {
                self.same(&["the".to_owned()]);
                self.fill(Slot::Person, rng);
            }
        }
        if aside {
            if let Some(a) = self.rules.asides.choose(rng) {
                self.complex.extend_from_slice(a.tokens());
                self.edits.deletions += a.len();
            }
        }
        self.fill(Slot::Verb, rng);
        self.same(&["the".to_owned()]);
        if rng.gen_bool(0.6) {
            self.fill(Slot::Adj, rng);
        }
        self.fill(Slot::Noun, rng);
        match rng.gen_range(0..10) {
            0..=2 => {
                self.same(&["in".to_owned()]);
                if !self.entity(EntityType::Loc, rng) {
                    self.complex.pop();
                    self.simple.pop();
                }
            }
            3 | 4 => {
                self.same(&["during".to_owned(), "the".to_owned()]);
                if !self.entity(EntityType::Misc, rng) {
                    self.complex.truncate(self.complex.len() - 2);
                    self.simple.truncate(self.simple.len() - 2);
                }
            }
            _ => {}
        }
    }
}

/// One pair. When the rule set has substitutions, pairs without a rare
/// word are redrawn, so every pair has something to simplify.
pub fn generate_pair(rules: &RuleSet, rng: &mut Rng) -> SyntheticPair {
    loop {
        let mut b = Builder {
            rules,
            complex: Vec::new(),
            simple: Vec::new(),
            edits: EditLog::default(),
            rare_used: false,
        };
        let aside = !rules.asides.is_empty() && rng.gen_bool(rules.aside_rate);
        b.clause(rng, aside);
        if rng.gen_bool(rules.two_clause_rate) {
            match &rules.split_trigger {
                Some(t) => {
                    b.complex.push(t.clone());
                    b.simple.push(".".to_owned());
                    b.edits.substitutions += 1;
                    b.edits.splits += 1;
                }
                None => b.same(&["and".to_owned()]),
            }
            b.clause(rng, false);
        }
        if !b.rare_used && !rules.substitutions.is_empty() {
            continue;
        }
        b.same(&[".".to_owned()]);
        return SyntheticPair {
            complex: TokenSeq::new(b.complex).expect("generated tokens are nonempty"),
            simple: TokenSeq::new(b.simple).expect("generated tokens are nonempty"),
            edits: b.edits,
        };
    }
}

pub fn generate(rules: &RuleSet, n: usize, rng: &mut Rng) -> Result<Vec<SyntheticPair>> {
    rules.validate()?;
    if n == 0 {
        return Err(DressError::InvalidArgument("need at least one pair".into()));
    }
    Ok((0..n).map(|_| generate_pair(rules, rng)).collect())
}

/// Write `<prefix>.complex`, `<prefix>.simple` and `<prefix>.edits` under `dir`.
pub fn write_split(dir: &Path, prefix: &str, pairs: &[SyntheticPair]) -> Result<()> {
    let complex: Vec<TokenSeq> = pairs.iter().map(|p| p.complex.clone()).collect();
    let simple: Vec<TokenSeq> = pairs.iter().map(|p| p.simple.clone()).collect();
    write_lines(&dir.join(format!("{prefix}.complex")), &complex)?;
    write_lines(&dir.join(format!("{prefix}.simple")), &simple)?;
    let mut log = String::from(EditLog::HEADER);
    log.push('\n');
    for p in pairs {
        log.push_str(&p.edits.to_line());
        log.push('\n');
    }
    let path = dir.join(format!("{prefix}.edits"));
    std::fs::write(&path, log).map_err(|e| DressError::io(&path, e))
}
