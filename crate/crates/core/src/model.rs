//! Domain types shared by every stage of a study.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards, so they can be shared freely between threads.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl TryFrom<String> for $name {
            type Error = Error;
            fn try_from(s: String) -> Result<Self> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self> {
                let id = id.into();
                if id.is_empty() {
                    return Err(Error::invalid(concat!(stringify!($name), " must be non-empty")));
                }
                Ok(Self(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Stable identifier of an annotatable term.
    TermId
);
string_id!(
    /// Stable identifier of a 4-tuple question.
    TupleId
);

/// Width used for generated zero-padded identifiers such as `t0007`.
pub(crate) fn id_width(count: usize) -> usize {
    let digits = count.saturating_sub(1).max(1).to_string().len();
    digits.max(4)
}

/// An annotatable word or phrase. The text is opaque and never normalized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTerm")]
pub struct Term {
    pub id: TermId,
    pub text: String,
}

impl Term {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        check_term_text(&text)?;
        Ok(Term {
            id: TermId::new(id)?,
            text,
        })
    }
}

#[derive(Deserialize)]
struct RawTerm {
    id: TermId,
    text: String,
}

impl TryFrom<RawTerm> for Term {
    type Error = Error;
    fn try_from(raw: RawTerm) -> Result<Self> {
        check_term_text(&raw.text)?;
        Ok(Term { id: raw.id, text: raw.text })
    }
}

pub(crate) fn check_term_text(text: &str) -> Result<()> {
    if text.is_empty() {
        return Err(Error::invalid("term text must be non-empty"));
    }
    // Tabs and line breaks cannot be represented in the line/TSV formats.
    if text.contains(['\t', '\n', '\r']) {
        return Err(Error::invalid(format!(
            "term text {text:?} contains a tab or line break"
        )));
    }
    Ok(())
}

/// One best-worst question: four distinct terms in display order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTuple")]
pub struct Tuple4 {
    pub id: TupleId,
    terms: [TermId; 4],
}

impl Tuple4 {
    pub fn new(id: TupleId, terms: [TermId; 4]) -> Result<Self> {
        for i in 0..4 {
            for j in (i + 1)..4 {
                if terms[i] == terms[j] {
                    return Err(Error::invalid(format!(
                        "tuple {id} lists term {} twice",
                        terms[i]
                    )));
                }
            }
        }
        Ok(Tuple4 { id, terms })
    }

    /// Terms in display order.
    pub fn terms(&self) -> &[TermId; 4] {
        &self.terms
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.iter().any(|t| t.as_str() == term)
    }

    /// The question's identity: its members as a sorted set.
    pub fn member_set(&self) -> [&TermId; 4] {
        let mut set = [&self.terms[0], &self.terms[1], &self.terms[2], &self.terms[3]];
        set.sort();
        set
    }
}

#[derive(Deserialize)]
struct RawTuple {
    id: TupleId,
    terms: [TermId; 4],
}

impl TryFrom<RawTuple> for Tuple4 {
    type Error = Error;
    fn try_from(raw: RawTuple) -> Result<Self> {
        Tuple4::new(raw.id, raw.terms)
    }
}

/// One annotator's answer to one question.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawResponse")]
pub struct Response {
    pub tuple_id: TupleId,
    pub annotator_id: String,
    pub best: TermId,
    pub worst: TermId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Deserialize)]
struct RawResponse {
    tuple_id: TupleId,
    annotator_id: String,
    best: TermId,
    worst: TermId,
    #[serde(default)]
    timestamp: Option<DateTime<Utc>>,
}

impl TryFrom<RawResponse> for Response {
    type Error = Error;
    fn try_from(r: RawResponse) -> Result<Self> {
        Response::new(r.tuple_id, r.annotator_id, r.best, r.worst, r.timestamp)
    }
}

impl Response {
    /// Builds a response, checking the choice is internally consistent.
    /// Membership in the tuple is checked by [`TupleSet::check_response`].
    pub fn new(
        tuple_id: TupleId,
        annotator_id: impl Into<String>,
        best: TermId,
        worst: TermId,
        timestamp: Option<DateTime<Utc>>,
    ) -> Result<Self> {
        if best == worst {
            return Err(Error::invalid(format!(
                "best and worst are the same term ({best})"
            )));
        }
        Ok(Response {
            tuple_id,
            annotator_id: annotator_id.into(),
            best,
            worst,
            timestamp,
        })
    }
}

/// A validated collection of tuples with lookup by id.
#[derive(Clone, Debug, Default)]
pub struct TupleSet {
    tuples: Vec<Tuple4>,
    by_id: HashMap<TupleId, usize>,
}

impl TupleSet {
    pub fn new(tuples: Vec<Tuple4>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(tuples.len());
        for (i, t) in tuples.iter().enumerate() {
            if by_id.insert(t.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate tuple id {}", t.id)));
            }
        }
        Ok(TupleSet { tuples, by_id })
    }

    pub fn tuples(&self) -> &[Tuple4] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Tuple4> {
        self.by_id.get(id).map(|&i| &self.tuples[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Every distinct term id appearing in any tuple, sorted.
    pub fn term_ids(&self) -> Vec<TermId> {
        let mut ids: Vec<TermId> = self
            .tuples
            .iter()
            .flat_map(|t| t.terms().iter().cloned())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Checks that a response refers to a known tuple and chooses among its members.
    pub fn check_response(&self, r: &Response) -> Result<&Tuple4> {
        let tuple = self
            .get(r.tuple_id.as_str())
            .ok_or_else(|| Error::invalid(format!("unknown tuple id {}", r.tuple_id)))?;
        if r.best == r.worst {
            return Err(Error::invalid(format!(
                "best and worst are the same term ({})",
                r.best
            )));
        }
        for (role, term) in [("best", &r.best), ("worst", &r.worst)] {
            if !tuple.contains(term.as_str()) {
                return Err(Error::invalid(format!(
                    "{role} term {term} is not a member of tuple {}",
                    tuple.id
                )));
            }
        }
        Ok(tuple)
    }
}

/// One scored term of a lexicon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub term_id: TermId,
    pub score: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LexiconMetadata {
    pub study: String,
    pub tuples: usize,
    pub responses: usize,
}

/// Terms with real-valued scores in [-1, 1], ranked by descending score.
///
/// Equal scores are ordered lexicographically by term id, so ranks are
/// always the distinct integers `1..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredLexicon {
    entries: Vec<LexiconEntry>,
    pub metadata: LexiconMetadata,
}

impl ScoredLexicon {
    pub fn from_scores<I>(scores: I, metadata: LexiconMetadata) -> Result<Self>
    where
        I: IntoIterator<Item = (TermId, f64)>,
    {
        let mut pairs: Vec<(TermId, f64)> = scores.into_iter().collect();
        for (id, s) in &pairs {
            if !s.is_finite() || !(-1.0..=1.0).contains(s) {
                return Err(Error::invalid(format!(
                    "score {s} of term {id} is outside [-1, 1]"
                )));
            }
        }
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut seen = std::collections::HashSet::with_capacity(pairs.len());
        for (id, _) in &pairs {
            if !seen.insert(id) {
                return Err(Error::invalid(format!("term {id} scored twice")));
            }
        }
        let entries = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (term_id, score))| LexiconEntry {
                term_id,
                score,
                rank: i + 1,
            })
            .collect();
        Ok(ScoredLexicon { entries, metadata })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Scores keyed by term id.
    pub fn score_map(&self) -> BTreeMap<TermId, f64> {
        self.entries
            .iter()
            .map(|e| (e.term_id.clone(), e.score))
            .collect()
    }

    pub fn score_of(&self, term: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.term_id.as_str() == term)
            .map(|e| e.score)
    }
}

/// Parameters of an annotation study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub property_name: String,
    pub best_prompt: String,
    pub worst_prompt: String,
    pub tuple_multiplier: f64,
    pub annotations_per_tuple: u32,
    pub rng_seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig::for_property("positive sentiment")
    }
}

impl StudyConfig {
    pub fn for_property(property: &str) -> Self {
        StudyConfig {
            property_name: property.to_string(),
            best_prompt: format!("Which term has the MOST {property}?"),
            worst_prompt: format!("Which term has the LEAST {property}?"),
            tuple_multiplier: 2.0,
            annotations_per_tuple: 10,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tuple_multiplier.is_finite() || self.tuple_multiplier < 1.0 {
            return Err(Error::invalid(format!(
                "tuple_multiplier must be >= 1.0, got {}",
                self.tuple_multiplier
            )));
        }
        if self.annotations_per_tuple == 0 {
            return Err(Error::invalid("annotations_per_tuple must be >= 1"));
        }
        if self.best_prompt.is_empty() || self.worst_prompt.is_empty() {
            return Err(Error::invalid("prompts must be non-empty"));
        }
        Ok(())
    }
}
