//! Pairwise preferences implied by best-worst answers, agreement as a
//! function of score difference, and the least perceptible difference.
//!
//! One answer (best `b`, worst `w`) on a tuple `{b, w, x, y}` implies five
//! ordered pairs: `b` over each of `x`, `y`, `w`, and each of `x`, `y` over
//! `w`. Nothing is implied about `x` versus `y`.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Response, ScoredLexicon, TermId, TupleSet};
use crate::stats::{binom_lower_bound_with, BoundMethod};

/// Implied wins for an unordered pair, stored with `a < b` by id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairPreference {
    pub a: TermId,
    pub b: TermId,
    /// Answers implying `a` is ranked above `b`.
    pub wins_a: u64,
    pub wins_b: u64,
}

impl PairPreference {
    pub fn total(&self) -> u64 {
        self.wins_a + self.wins_b
    }
}

/// Number of ordered pairs implied by one answer.
pub const INFERENCES_PER_RESPONSE: u64 = 5;

pub fn infer_pairs(tuples: &TupleSet, responses: &[Response]) -> Result<Vec<PairPreference>> {
    let mut wins: HashMap<(&TermId, &TermId), (u64, u64)> = HashMap::new();
    for r in responses {
        let tuple = tuples.check_response(r)?;
        let best = tuple.terms().iter().find(|t| **t == r.best).expect("checked");
        let worst = tuple.terms().iter().find(|t| **t == r.worst).expect("checked");
        let mut implied: Vec<(&TermId, &TermId)> = vec![(best, worst)];
        for t in tuple.terms() {
            if t != best && t != worst {
                implied.push((best, t));
                implied.push((t, worst));
            }
        }
        for (winner, loser) in implied {
            if winner < loser {
                wins.entry((winner, loser)).or_default().0 += 1;
            } else {
                wins.entry((loser, winner)).or_default().1 += 1;
            }
        }
    }
    let mut out: Vec<PairPreference> = wins
        .into_iter()
        .map(|((a, b), (wa, wb))| PairPreference {
            a: a.clone(),
            b: b.clone(),
            wins_a: wa,
            wins_b: wb,
        })
        .collect();
    out.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
    Ok(out)
}

/// A pair oriented so that `higher` has the larger (or equal) score.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrientedPair {
    pub higher: TermId,
    pub lower: TermId,
    /// `score(higher) - score(lower)`, never negative.
    pub difference: f64,
    pub wins_higher: u64,
    pub total: u64,
}

impl OrientedPair {
    pub fn agreement(&self) -> f64 {
        self.wins_higher as f64 / self.total as f64
    }
}

/// Orients each pair by score; equal scores put the smaller id first.
pub fn orient_pairs(pairs: &[PairPreference], lexicon: &ScoredLexicon) -> Result<Vec<OrientedPair>> {
    let scores = lexicon.score_map();
    pairs
        .iter()
        .filter(|p| p.total() > 0)
        .map(|p| {
            let lookup = |t: &TermId| {
                scores
                    .get(t)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("term {t} is not in the lexicon")))
            };
            let (sa, sb) = (lookup(&p.a)?, lookup(&p.b)?);
            let a_first = sa > sb || (sa == sb && p.a <= p.b);
            Ok(if a_first {
                OrientedPair {
                    higher: p.a.clone(),
                    lower: p.b.clone(),
                    difference: sa - sb,
                    wins_higher: p.wins_a,
                    total: p.total(),
                }
            } else {
                OrientedPair {
                    higher: p.b.clone(),
                    lower: p.a.clone(),
                    difference: sb - sa,
                    wins_higher: p.wins_b,
                    total: p.total(),
                }
            })
        })
        .collect()
}

/// One bin of the agreement curve. Agreement fields are `None` for empty bins.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub d_center: f64,
    /// Unweighted mean of the per-pair agreements in the bin.
    pub mean_agreement: Option<f64>,
    /// Total wins of the higher-scored terms over total implied comparisons.
    pub pooled_agreement: Option<f64>,
    /// Lower confidence bound on the pooled agreement.
    pub lower_bound: Option<f64>,
    pub pairs: u64,
    pub annotations: u64,
}

impl CurveRow {
    pub fn is_populated(&self) -> bool {
        self.pairs > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgreementCurve {
    pub rows: Vec<CurveRow>,
}

impl AgreementCurve {
    pub fn new(rows: Vec<CurveRow>) -> Result<Self> {
        if rows.windows(2).any(|w| w[0].d_center.partial_cmp(&w[1].d_center) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::invalid("curve bin centres must be strictly increasing"));
        }
        for r in &rows {
            if r.d_center < 0.0 {
                return Err(Error::invalid("curve bin centres must be non-negative"));
            }
            let ok = |v: Option<f64>| v.is_none_or(|x| (0.0..=1.0).contains(&x));
            if !ok(r.mean_agreement) || !ok(r.pooled_agreement) || !ok(r.lower_bound) {
                return Err(Error::invalid(format!("agreement at d={} outside [0, 1]", r.d_center)));
            }
            if r.is_populated() != r.mean_agreement.is_some() {
                return Err(Error::invalid(format!(
                    "bin at d={} must carry agreement values exactly when populated",
                    r.d_center
                )));
            }
        }
        Ok(AgreementCurve { rows })
    }

    pub fn populated(&self) -> impl Iterator<Item = &CurveRow> {
        self.rows.iter().filter(|r| r.is_populated())
    }
}

/// Binning and bound parameters for [`agreement_curve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveParams {
    pub bin_halfwidth: f64,
    pub bin_step: f64,
    pub confidence: f64,
    pub method: BoundMethod,
}

impl Default for CurveParams {
    fn default() -> Self {
        CurveParams {
            bin_halfwidth: 0.01,
            bin_step: 0.01,
            confidence: 0.999,
            method: BoundMethod::Wilson,
        }
    }
}

/// Slack for bin membership so differences such as 0.3 - 0.1 land in the
/// 0.2 bin despite binary rounding.
const BIN_EPSILON: f64 = 1e-9;

/// Averages per-pair agreement over pairs whose score difference lies
/// within `bin_halfwidth` of each bin centre `0, step, 2*step, ...`.
pub fn agreement_curve(pairs: &[PairPreference], lexicon: &ScoredLexicon, params: CurveParams) -> Result<AgreementCurve> {
    let CurveParams {
        bin_halfwidth,
        bin_step,
        confidence,
        method,
    } = params;
    if !(bin_halfwidth > 0.0 && bin_step > 0.0) || !bin_halfwidth.is_finite() || !bin_step.is_finite() {
        return Err(Error::invalid("bin half-width and step must be positive"));
    }
    let mut oriented = orient_pairs(pairs, lexicon)?;
    oriented.sort_by(|x, y| x.difference.total_cmp(&y.difference));
    let max_d = oriented.last().map(|p| p.difference).unwrap_or(0.0);
    let bins = ((max_d / bin_step) - BIN_EPSILON).ceil().max(0.0) as usize;

    let mut rows = Vec::with_capacity(bins + 1);
    for j in 0..=bins {
        let centre = j as f64 * bin_step;
        let lo = oriented.partition_point(|p| p.difference < centre - bin_halfwidth - BIN_EPSILON);
        let hi = oriented.partition_point(|p| p.difference <= centre + bin_halfwidth + BIN_EPSILON);
        let members = &oriented[lo..hi];
        let row = if members.is_empty() {
            CurveRow {
                d_center: centre,
                mean_agreement: None,
                pooled_agreement: None,
                lower_bound: None,
                pairs: 0,
                annotations: 0,
            }
        } else {
            let wins: u64 = members.iter().map(|p| p.wins_higher).sum();
            let total: u64 = members.iter().map(|p| p.total).sum();
            let mean = members.iter().map(OrientedPair::agreement).sum::<f64>() / members.len() as f64;
            CurveRow {
                d_center: centre,
                mean_agreement: Some(mean),
                pooled_agreement: Some(wins as f64 / total as f64),
                lower_bound: Some(binom_lower_bound_with(wins, total, confidence, method)?),
                pairs: members.len() as u64,
                annotations: total,
            }
        };
        rows.push(row);
    }
    AgreementCurve::new(rows)
}

/// Chance level for "which of two terms is higher".
pub const CHANCE: f64 = 0.5;

/// The smallest bin centre from which every populated bin at or above it
/// has a lower bound above chance. `None` when the top populated bin itself
/// does not clear chance.
pub fn least_perceptible_difference(curve: &AgreementCurve) -> Option<f64> {
    least_perceptible_difference_with(curve, 1)
}

/// As [`least_perceptible_difference`], counting only bins backed by at
/// least `min_annotations` implied comparisons as populated.
pub fn least_perceptible_difference_with(curve: &AgreementCurve, min_annotations: u64) -> Option<f64> {
    let mut found = None;
    for row in curve
        .rows
        .iter()
        .rev()
        .filter(|r| r.is_populated() && r.annotations >= min_annotations.max(1))
    {
        match row.lower_bound {
            Some(lb) if lb > CHANCE => found = Some(row.d_center),
            _ => break,
        }
    }
    found
}

/// Smallest number of comparisons for which a unanimous bin could clear
/// chance at the given confidence. Bins with fewer comparisons cannot
/// demonstrate a perceptible difference whatever their outcome.
pub fn informative_support(confidence: f64, method: BoundMethod) -> Result<u64> {
    let mut n = 1u64;
    while binom_lower_bound_with(n, n, confidence, method)? <= CHANCE {
        n += 1;
        if n > 1_000_000 {
            return Err(Error::invalid("confidence too close to 1"));
        }
    }
    Ok(n)
}
