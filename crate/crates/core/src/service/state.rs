//! In-memory state of one hosted study. Pure: time is passed in, and
//! persistence is left to the caller.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::error::ServiceError;
use crate::model::{Response, StudyConfig, Term, TermId, Tuple4, TupleId, TupleSet};

/// Everything needed to recreate a study, stored as its manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub study_id: String,
    pub config: StudyConfig,
    pub terms: Vec<Term>,
    pub tuples: Vec<Tuple4>,
    pub created: DateTime<Utc>,
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    tuple: usize,
    expires: Instant,
}

/// A tuple handed to an annotator, in display order with prompts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServedTuple {
    pub tuple_id: TupleId,
    pub terms: Vec<Term>,
    pub best_prompt: String,
    pub worst_prompt: String,
    pub expires_in_secs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextTuple {
    Tuple(ServedTuple),
    /// Nothing left for this annotator.
    Complete { answered: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleProgress {
    pub tuple_id: TupleId,
    pub collected: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub study_id: String,
    pub quota: u32,
    pub tuples: Vec<TupleProgress>,
    pub total_collected: u64,
    pub remaining: u64,
    pub annotators: BTreeMap<String, u64>,
}

#[derive(Debug)]
pub struct StudyState {
    manifest: StudyManifest,
    tuple_set: TupleSet,
    texts: HashMap<TermId, String>,
    collected: Vec<u32>,
    answered: HashMap<String, HashSet<usize>>,
    pending: HashMap<String, Pending>,
    responses: Vec<Response>,
    expiry: Duration,
}

/// Deterministic tie-break key for dispatch.
fn tie_key(seed: u64, annotator: &str, tuple: &str) -> u64 {
    // FNV-1a over the seed and both ids
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    eat(&seed.to_le_bytes());
    eat(annotator.as_bytes());
    eat(&[0xff]);
    eat(tuple.as_bytes());
    h
}

impl StudyState {
    pub fn new(manifest: StudyManifest, expiry: Duration) -> Result<Self, ServiceError> {
        let tuple_set = TupleSet::new(manifest.tuples.clone()).map_err(|e| ServiceError::invalid("tuples", e.to_string()))?;
        let texts: HashMap<TermId, String> = manifest.terms.iter().map(|t| (t.id.clone(), t.text.clone())).collect();
        for t in tuple_set.tuples() {
            if let Some(missing) = t.terms().iter().find(|x| !texts.contains_key(*x)) {
                return Err(ServiceError::invalid("tuples", format!("tuple {} uses unknown term {missing}", t.id)));
            }
        }
        let collected = vec![0; tuple_set.len()];
        Ok(StudyState {
            manifest,
            tuple_set,
            texts,
            collected,
            answered: HashMap::new(),
            pending: HashMap::new(),
            responses: Vec::new(),
            expiry,
        })
    }

    pub fn manifest(&self) -> &StudyManifest {
        &self.manifest
    }

    pub fn tuple_set(&self) -> &TupleSet {
        &self.tuple_set
    }

    pub fn responses(&self) -> &[Response] {
        &self.responses
    }

    fn quota(&self) -> u32 {
        self.manifest.config.annotations_per_tuple
    }

    pub fn is_complete(&self) -> bool {
        self.collected.iter().all(|&c| c >= self.quota())
    }

    fn active_pending(&self, now: Instant) -> Vec<u32> {
        let mut counts = vec![0; self.collected.len()];
        for p in self.pending.values() {
            if p.expires > now {
                counts[p.tuple] += 1;
            }
        }
        counts
    }

    fn serve(&self, tuple: usize, expires: Instant, now: Instant) -> ServedTuple {
        let t = &self.tuple_set.tuples()[tuple];
        ServedTuple {
            tuple_id: t.id.clone(),
            terms: t
                .terms()
                .iter()
                .map(|id| Term {
                    id: id.clone(),
                    text: self.texts[id].clone(),
                })
                .collect(),
            best_prompt: self.manifest.config.best_prompt.clone(),
            worst_prompt: self.manifest.config.worst_prompt.clone(),
            expires_in_secs: expires.saturating_duration_since(now).as_secs(),
        }
    }

    /// Serves the least-annotated tuple this annotator has not answered.
    /// An unexpired assignment is served again rather than replaced.
    pub fn next_tuple(&mut self, annotator: &str, now: Instant) -> Result<NextTuple, ServiceError> {
        if annotator.is_empty() {
            return Err(ServiceError::invalid("annotator", "annotator id must be non-empty"));
        }
        if let Some(p) = self.pending.get(annotator) {
            if p.expires > now && self.collected[p.tuple] < self.quota() {
                return Ok(NextTuple::Tuple(self.serve(p.tuple, p.expires, now)));
            }
        }
        let pending = self.active_pending(now);
        let own = self.pending.get(annotator).filter(|p| p.expires > now).map(|p| p.tuple);
        let done = self.answered.get(annotator);
        let quota = self.quota();
        let seed = self.manifest.config.rng_seed;
        let choice = (0..self.collected.len())
            .filter(|i| self.collected[*i] < quota && !done.is_some_and(|d| d.contains(i)))
            .min_by_key(|&i| {
                let load = self.collected[i] + pending[i] - u32::from(own == Some(i));
                (load >= quota, load, tie_key(seed, annotator, self.tuple_set.tuples()[i].id.as_str()), i)
            });
        match choice {
            None => Ok(NextTuple::Complete {
                answered: done.map_or(0, HashSet::len),
            }),
            Some(i) => {
                let expires = now + self.expiry;
                self.pending.insert(annotator.to_string(), Pending { tuple: i, expires });
                Ok(NextTuple::Tuple(self.serve(i, expires, now)))
            }
        }
    }

    /// Checks a submission without changing state.
    pub fn validate_submission(
        &self,
        annotator: &str,
        tuple_id: &str,
        best: &str,
        worst: &str,
        now: Instant,
        timestamp: Option<DateTime<Utc>>,
    ) -> Result<Response, ServiceError> {
        if annotator.is_empty() {
            return Err(ServiceError::invalid("annotator_id", "annotator id must be non-empty"));
        }
        let idx = self
            .tuple_set
            .index_of(tuple_id)
            .ok_or_else(|| ServiceError::UnknownTuple(tuple_id.to_string()))?;
        let tuple = &self.tuple_set.tuples()[idx];
        if best == worst {
            return Err(ServiceError::invalid("worst", "best and worst must be different terms"));
        }
        for (field, term) in [("best", best), ("worst", worst)] {
            if !tuple.contains(term) {
                return Err(ServiceError::invalid(field, format!("term {term:?} is not in tuple {tuple_id}")));
            }
        }
        if self.answered.get(annotator).is_some_and(|d| d.contains(&idx)) {
            return Err(ServiceError::Duplicate {
                annotator: annotator.to_string(),
                tuple: tuple_id.to_string(),
            });
        }
        match self.pending.get(annotator) {
            Some(p) if p.tuple == idx => {
                if p.expires <= now {
                    return Err(ServiceError::Expired(tuple_id.to_string()));
                }
            }
            _ => return Err(ServiceError::NotServed(tuple_id.to_string())),
        }
        if self.collected[idx] >= self.quota() {
            return Err(ServiceError::QuotaMet(tuple_id.to_string()));
        }
        let mk = |s: &str| TermId::new(s).expect("member ids are non-empty");
        Response::new(tuple.id.clone(), annotator, mk(best), mk(worst), timestamp)
            .map_err(|e| ServiceError::invalid("worst", e.to_string()))
    }

    /// Records a response that was validated (or replayed from the log).
    pub fn apply(&mut self, response: Response) -> Result<(), ServiceError> {
        let tuple = self
            .tuple_set
            .check_response(&response)
            .map_err(|e| ServiceError::invalid("response", e.to_string()))?;
        let idx = self.tuple_set.index_of(tuple.id.as_str()).expect("checked");
        if !self.answered.entry(response.annotator_id.clone()).or_default().insert(idx) {
            return Err(ServiceError::Duplicate {
                annotator: response.annotator_id.clone(),
                tuple: response.tuple_id.to_string(),
            });
        }
        self.collected[idx] += 1;
        if self.pending.get(&response.annotator_id).is_some_and(|p| p.tuple == idx) {
            self.pending.remove(&response.annotator_id);
        }
        self.responses.push(response);
        Ok(())
    }

    pub fn progress(&self) -> Progress {
        let quota = self.quota();
        let mut annotators: BTreeMap<String, u64> = BTreeMap::new();
        for r in &self.responses {
            *annotators.entry(r.annotator_id.clone()).or_default() += 1;
        }
        Progress {
            study_id: self.manifest.study_id.clone(),
            quota,
            tuples: self
                .tuple_set
                .tuples()
                .iter()
                .zip(&self.collected)
                .map(|(t, &c)| TupleProgress {
                    tuple_id: t.id.clone(),
                    collected: c,
                })
                .collect(),
            total_collected: self.responses.len() as u64,
            remaining: self.collected.iter().map(|&c| quota.saturating_sub(c) as u64).sum(),
            annotators,
        }
    }
}
