//! The counting procedure: a term's score is the fraction of its
//! appearances in which it was chosen best minus the fraction in which it
//! was chosen worst.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LexiconMetadata, Response, ScoredLexicon, TermId, TupleSet};

/// How often a term was shown and chosen.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TermTally {
    /// Responses whose tuple contains the term.
    pub appearances: u64,
    pub chosen_best: u64,
    pub chosen_worst: u64,
}

impl TermTally {
    pub fn score(&self) -> Option<f64> {
        if self.appearances == 0 {
            return None;
        }
        let n = self.appearances as f64;
        Some(self.chosen_best as f64 / n - self.chosen_worst as f64 / n)
    }

    fn merge(&mut self, other: &TermTally) {
        self.appearances += other.appearances;
        self.chosen_best += other.chosen_best;
        self.chosen_worst += other.chosen_worst;
    }
}

/// Per-term tallies over every term that appears in any tuple.
pub fn tally(tuples: &TupleSet, responses: &[Response]) -> Result<BTreeMap<TermId, TermTally>> {
    let mut out: BTreeMap<TermId, TermTally> = tuples
        .term_ids()
        .into_iter()
        .map(|id| (id, TermTally::default()))
        .collect();
    for r in responses {
        let tuple = tuples.check_response(r)?;
        for t in tuple.terms() {
            out.get_mut(t).expect("tuple member is indexed").appearances += 1;
        }
        out.get_mut(&r.best).expect("checked member").chosen_best += 1;
        out.get_mut(&r.worst).expect("checked member").chosen_worst += 1;
    }
    Ok(out)
}

/// Adds tallies computed over separate response partitions.
pub fn merge_tallies(parts: &[BTreeMap<TermId, TermTally>]) -> BTreeMap<TermId, TermTally> {
    let mut out: BTreeMap<TermId, TermTally> = BTreeMap::new();
    for part in parts {
        for (id, t) in part {
            out.entry(id.clone()).or_default().merge(t);
        }
    }
    out
}

/// What to do with terms that no response ever showed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Strictness {
    /// Unscored terms are an error.
    #[default]
    Strict,
    /// Unscored terms are left out of the lexicon and listed separately.
    Permissive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scores {
    pub lexicon: ScoredLexicon,
    /// Terms left out because no response covered them (permissive mode only).
    pub unscored: Vec<TermId>,
}

pub fn compute_scores(tuples: &TupleSet, responses: &[Response], mode: Strictness) -> Result<Scores> {
    let tallies = tally(tuples, responses)?;
    scores_from_tallies(&tallies, mode, tuples.len(), responses.len())
}

pub fn scores_from_tallies(
    tallies: &BTreeMap<TermId, TermTally>,
    mode: Strictness,
    tuples: usize,
    responses: usize,
) -> Result<Scores> {
    let mut unscored = Vec::new();
    let mut scores = Vec::with_capacity(tallies.len());
    for (id, t) in tallies {
        match t.score() {
            Some(s) => scores.push((id.clone(), s)),
            None => unscored.push(id.clone()),
        }
    }
    if mode == Strictness::Strict && !unscored.is_empty() {
        let shown: Vec<&str> = unscored.iter().take(5).map(|t| t.as_str()).collect();
        return Err(Error::invalid(format!(
            "{} terms appear in no annotated tuple (e.g. {})",
            unscored.len(),
            shown.join(", ")
        )));
    }
    if scores.is_empty() {
        return Err(Error::invalid("no term could be scored"));
    }
    let lexicon = ScoredLexicon::from_scores(
        scores,
        LexiconMetadata {
            study: String::new(),
            tuples,
            responses,
        },
    )?;
    Ok(Scores { lexicon, unscored })
}

/// Fraction of responses matching the modal answer of their question.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MajorityAgreement {
    pub best: f64,
    pub worst: f64,
    pub combined: f64,
    pub responses: u64,
    /// Tuples where two or more choices tied for the modal answer on either question.
    pub tied_tuples: Vec<String>,
}

/// Responses matching any of the tied-modal choices count as matching.
fn modal_matches<'a>(choices: impl Iterator<Item = &'a TermId>) -> (u64, bool) {
    let mut counts: HashMap<&TermId, u64> = HashMap::new();
    for c in choices {
        *counts.entry(c).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let winners = counts.values().filter(|&&c| c == top).count() as u64;
    (top * winners, winners > 1)
}

pub fn majority_agreement(tuples: &TupleSet, responses: &[Response]) -> Result<MajorityAgreement> {
    let mut by_tuple: Vec<Vec<&Response>> = vec![Vec::new(); tuples.len()];
    for r in responses {
        tuples.check_response(r)?;
        let idx = tuples.index_of(r.tuple_id.as_str()).expect("checked");
        by_tuple[idx].push(r);
    }
    let (mut best_hits, mut worst_hits, mut total) = (0u64, 0u64, 0u64);
    let mut tied_tuples = Vec::new();
    for (idx, rs) in by_tuple.iter().enumerate() {
        if rs.is_empty() {
            continue;
        }
        let (b, tb) = modal_matches(rs.iter().map(|r| &r.best));
        let (w, tw) = modal_matches(rs.iter().map(|r| &r.worst));
        best_hits += b;
        worst_hits += w;
        total += rs.len() as u64;
        if tb || tw {
            tied_tuples.push(tuples.tuples()[idx].id.to_string());
        }
    }
    if total == 0 {
        return Err(Error::invalid("majority agreement needs at least one response"));
    }
    let t = total as f64;
    Ok(MajorityAgreement {
        best: best_hits as f64 / t,
        worst: worst_hits as f64 / t,
        combined: (best_hits + worst_hits) as f64 / (2.0 * t),
        responses: total,
        tied_tuples,
    })
}

/// One point of the rank-versus-score plot.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankPlotRow {
    pub rank: usize,
    pub score: f64,
    /// The straight line from (1, 1.0) to (n, -1.0): a perfectly uniform spread.
    pub uniform_reference: f64,
}

pub fn export_rank_plot(lexicon: &ScoredLexicon) -> Result<Vec<RankPlotRow>> {
    let n = lexicon.len();
    if n == 0 {
        return Err(Error::invalid("cannot plot an empty lexicon"));
    }
    Ok(lexicon
        .entries()
        .iter()
        .map(|e| RankPlotRow {
            rank: e.rank,
            score: e.score,
            uniform_reference: uniform_reference(e.rank, n),
        })
        .collect())
}

fn uniform_reference(rank: usize, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    1.0 - 2.0 * (rank - 1) as f64 / (n - 1) as f64
}

/// Largest difference between adjacent scores in rank order.
pub fn max_adjacent_gap(lexicon: &ScoredLexicon) -> f64 {
    lexicon
        .entries()
        .windows(2)
        .map(|w| w[0].score - w[1].score)
        .fold(0.0, f64::max)
}
