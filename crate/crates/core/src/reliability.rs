//! Reproducibility of counting scores: split-half correlation and the
//! k-annotations-per-question subsampling curve.
//!
//! Every random draw comes from a ChaCha stream selected by the iteration
//! or repetition index, so results do not depend on evaluation order.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Response, TermId, TupleSet};
use crate::scoring::TermTally;
use crate::stats::{pearson_slices, spearman_slices};

/// Responses indexed by tuple and term position for repeated rescoring.
struct Prepared {
    n_terms: usize,
    /// Term indices of each tuple's members.
    members: Vec<[usize; 4]>,
    /// Per tuple, its responses as (best, worst) term indices in input order.
    by_tuple: Vec<Vec<(usize, usize)>>,
}

impl Prepared {
    fn new(tuples: &TupleSet, responses: &[Response]) -> Result<Self> {
        let ids: Vec<TermId> = tuples.term_ids();
        let index = |t: &TermId| ids.binary_search(t).expect("tuple member is indexed");
        let members = tuples
            .tuples()
            .iter()
            .map(|t| t.terms().each_ref().map(index))
            .collect();
        let mut by_tuple = vec![Vec::new(); tuples.len()];
        for r in responses {
            tuples.check_response(r)?;
            let ti = tuples.index_of(r.tuple_id.as_str()).expect("checked");
            by_tuple[ti].push((index(&r.best), index(&r.worst)));
        }
        Ok(Prepared {
            n_terms: ids.len(),
            members,
            by_tuple,
        })
    }

    fn min_responses(&self) -> usize {
        self.by_tuple.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Counting scores over a selection of responses, indexed like the term ids.
    fn scores<'a>(&self, selection: impl Iterator<Item = (usize, &'a [(usize, usize)])>) -> Result<Vec<f64>> {
        let mut tallies = vec![TermTally::default(); self.n_terms];
        for (ti, picked) in selection {
            for &(best, worst) in picked {
                for &m in &self.members[ti] {
                    tallies[m].appearances += 1;
                }
                tallies[best].chosen_best += 1;
                tallies[worst].chosen_worst += 1;
            }
        }
        tallies
            .iter()
            .map(|t| {
                t.score()
                    .ok_or_else(|| Error::invalid("a term received no responses in a subsample"))
            })
            .collect()
    }

    fn full_scores(&self) -> Result<Vec<f64>> {
        self.scores(self.by_tuple.iter().enumerate().map(|(i, v)| (i, v.as_slice())))
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn min(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitHalfResult {
    pub iterations: usize,
    pub spearman_values: Vec<f64>,
    pub pearson_values: Vec<f64>,
    pub spearman_mean: f64,
    pub spearman_min: f64,
    pub pearson_mean: f64,
    pub pearson_min: f64,
}

/// Default number of random splits.
pub const DEFAULT_SPLIT_ITERATIONS: usize = 10;

/// Splits each tuple's responses into two random halves, scores each half
/// and correlates the two lexicons. With an odd count the extra response
/// goes to a randomly chosen half.
pub fn split_half(tuples: &TupleSet, responses: &[Response], iterations: usize, seed: u64) -> Result<SplitHalfResult> {
    if iterations == 0 {
        return Err(Error::invalid("split-half needs at least one iteration"));
    }
    let prep = Prepared::new(tuples, responses)?;
    if prep.min_responses() < 2 {
        let (i, _) = prep
            .by_tuple
            .iter()
            .enumerate()
            .find(|(_, v)| v.len() < 2)
            .expect("some tuple is short");
        return Err(Error::invalid(format!(
            "tuple {} has fewer than 2 responses",
            tuples.tuples()[i].id
        )));
    }
    let mut spearman_values = Vec::with_capacity(iterations);
    let mut pearson_values = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let mut rng = stream_rng(seed, it as u64);
        let mut first: Vec<Vec<(usize, usize)>> = Vec::with_capacity(prep.by_tuple.len());
        let mut second: Vec<Vec<(usize, usize)>> = Vec::with_capacity(prep.by_tuple.len());
        for rs in &prep.by_tuple {
            let mut shuffled = rs.clone();
            shuffled.shuffle(&mut rng);
            let mut cut = shuffled.len() / 2;
            if shuffled.len() % 2 == 1 && rng.random_bool(0.5) {
                cut += 1;
            }
            second.push(shuffled.split_off(cut));
            first.push(shuffled);
        }
        let a = prep.scores(first.iter().enumerate().map(|(i, v)| (i, v.as_slice())))?;
        let b = prep.scores(second.iter().enumerate().map(|(i, v)| (i, v.as_slice())))?;
        spearman_values.push(spearman_slices(&a, &b)?);
        pearson_values.push(pearson_slices(&a, &b)?);
    }
    Ok(SplitHalfResult {
        iterations,
        spearman_mean: mean(&spearman_values),
        spearman_min: min(&spearman_values),
        pearson_mean: mean(&pearson_values),
        pearson_min: min(&pearson_values),
        spearman_values,
        pearson_values,
    })
}

/// How the k-response subsamples of one repetition relate to each other.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Sampling {
    /// The k-sample is the first k of one shuffle, so it is contained in the (k+1)-sample.
    #[default]
    Nested,
    /// Each k draws afresh.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsampleRow {
    pub k: usize,
    pub mean_spearman_vs_full: f64,
    pub min_spearman_vs_full: f64,
    pub repetitions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsampleCurve {
    pub rows: Vec<SubsampleRow>,
}

impl SubsampleCurve {
    pub fn at(&self, k: usize) -> Option<&SubsampleRow> {
        self.rows.iter().find(|r| r.k == k)
    }
}

/// Default repetitions per k.
pub const DEFAULT_REPETITIONS: usize = 10;

/// For k in `1..=k_max`, scores each tuple from k of its responses drawn
/// without replacement and correlates with the scores from all responses.
pub fn subsample_curve(
    tuples: &TupleSet,
    responses: &[Response],
    k_max: usize,
    repetitions: usize,
    seed: u64,
    sampling: Sampling,
) -> Result<SubsampleCurve> {
    if k_max == 0 || repetitions == 0 {
        return Err(Error::invalid("k_max and repetitions must be >= 1"));
    }
    let prep = Prepared::new(tuples, responses)?;
    if prep.min_responses() < k_max {
        return Err(Error::invalid(format!(
            "k_max {k_max} exceeds the smallest per-tuple response count {}",
            prep.min_responses()
        )));
    }
    let full = prep.full_scores()?;
    let mut per_k: Vec<Vec<f64>> = vec![Vec::with_capacity(repetitions); k_max];
    for rep in 0..repetitions {
        let mut nested_rng = stream_rng(seed, rep as u64);
        let nested: Vec<Vec<(usize, usize)>> = match sampling {
            Sampling::Nested => prep
                .by_tuple
                .iter()
                .map(|rs| {
                    let mut v = rs.clone();
                    v.shuffle(&mut nested_rng);
                    v
                })
                .collect(),
            Sampling::Independent => Vec::new(),
        };
        for k in 1..=k_max {
            let rho = match sampling {
                Sampling::Nested => {
                    let s = prep.scores(nested.iter().enumerate().map(|(i, v)| (i, &v[..k])))?;
                    spearman_slices(&s, &full)?
                }
                Sampling::Independent => {
                    let mut rng = stream_rng(seed, ((k as u64) << 32) | rep as u64);
                    let drawn: Vec<Vec<(usize, usize)>> = prep
                        .by_tuple
                        .iter()
                        .map(|rs| rs.choose_multiple(&mut rng, k).copied().collect())
                        .collect();
                    let s = prep.scores(drawn.iter().enumerate().map(|(i, v)| (i, v.as_slice())))?;
                    spearman_slices(&s, &full)?
                }
            };
            per_k[k - 1].push(rho);
        }
    }
    let rows = per_k
        .iter()
        .enumerate()
        .map(|(i, vals)| SubsampleRow {
            k: i + 1,
            mean_spearman_vs_full: mean(vals),
            min_spearman_vs_full: min(vals),
            repetitions,
        })
        .collect();
    Ok(SubsampleCurve { rows })
}
