//! Rank and linear correlation, and one-sided binomial lower bounds.

use std::collections::BTreeMap;

use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{ScoredLexicon, TermId};

/// Values keyed by term id, with their average ranks.
#[derive(Clone, Debug, PartialEq)]
pub struct RankVector {
    keys: Vec<TermId>,
    values: Vec<f64>,
    ranks: Vec<f64>,
}

impl RankVector {
    pub fn new(values: BTreeMap<TermId, f64>) -> Result<Self> {
        if values.values().any(|v| !v.is_finite()) {
            return Err(Error::invalid("rank vector values must be finite"));
        }
        let (keys, values): (Vec<_>, Vec<_>) = values.into_iter().unzip();
        let ranks = average_ranks(&values);
        Ok(RankVector { keys, values, ranks })
    }

    pub fn from_lexicon(lexicon: &ScoredLexicon) -> Self {
        Self::new(lexicon.score_map()).expect("lexicon scores are finite")
    }

    pub fn keys(&self) -> &[TermId] {
        &self.keys
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Ascending average ranks (1-based); tied values share the mean of their positions.
    pub fn ranks(&self) -> &[f64] {
        &self.ranks
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_keys(&self, other: &RankVector) -> Result<()> {
        if self.keys != other.keys {
            return Err(Error::invalid(format!(
                "rank vectors have different keys ({} vs {} entries)",
                self.keys.len(),
                other.keys.len()
            )));
        }
        Ok(())
    }
}

/// Ascending 1-based ranks; ties get the average of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean((i+1)..=(j+1))
        let rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Product-moment correlation of two equal-length samples.
pub fn pearson_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("correlation needs at least 2 observations"));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho as the Pearson correlation of average ranks (tie-safe).
pub fn spearman_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    pearson_slices(&average_ranks(a), &average_ranks(b))
}

pub fn spearman(a: &RankVector, b: &RankVector) -> Result<f64> {
    a.check_keys(b)?;
    pearson_slices(&a.ranks, &b.ranks)
}

pub fn pearson(a: &RankVector, b: &RankVector) -> Result<f64> {
    a.check_keys(b)?;
    pearson_slices(&a.values, &b.values)
}

/// Interval construction used for one-sided binomial lower bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BoundMethod {
    #[default]
    Wilson,
    /// Exact bound from the beta quantile.
    ClopperPearson,
}

/// One-sided Wilson score lower bound on a success proportion.
pub fn binom_lower_bound(successes: u64, trials: u64, confidence: f64) -> Result<f64> {
    binom_lower_bound_with(successes, trials, confidence, BoundMethod::Wilson)
}

pub fn binom_lower_bound_with(successes: u64, trials: u64, confidence: f64, method: BoundMethod) -> Result<f64> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    if successes > trials {
        return Err(Error::invalid(format!("successes {successes} exceed trials {trials}")));
    }
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(Error::invalid(format!("confidence must lie in (0.5, 1), got {confidence}")));
    }
    if successes == 0 {
        return Ok(0.0);
    }
    let p_hat = successes as f64 / trials as f64;
    let bound = match method {
        BoundMethod::Wilson => {
            let z = Normal::standard().inverse_cdf(confidence);
            let n = trials as f64;
            let z2 = z * z;
            let centre = p_hat + z2 / (2.0 * n);
            let spread = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt();
            (centre - spread) / (1.0 + z2 / n)
        }
        BoundMethod::ClopperPearson => {
            let alpha = 1.0 - confidence;
            if successes == trials {
                alpha.powf(1.0 / trials as f64)
            } else {
                let beta = Beta::new(successes as f64, (trials - successes + 1) as f64)
                    .map_err(|e| Error::invalid(e.to_string()))?;
                beta.inverse_cdf(alpha)
            }
        }
    };
    Ok(bound.clamp(0.0, p_hat))
}
