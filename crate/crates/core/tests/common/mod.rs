//! Independent reference implementations used by the integration tests.
//! None of these call into the library's scoring or statistics code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use bws_core::{Response, TermId, Tuple4, TupleId};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Raw study rows: tuple id with its members, and (tuple, best, worst) answers.
pub struct RawStudy {
    pub tuples: Vec<(String, [String; 4])>,
    pub answers: Vec<(String, String, String)>,
}

impl RawStudy {
    pub fn tuples(&self) -> Vec<Tuple4> {
        self.tuples
            .iter()
            .map(|(id, m)| {
                let ids = m.clone().map(|t| TermId::new(t).unwrap());
                Tuple4::new(TupleId::new(id.clone()).unwrap(), ids).unwrap()
            })
            .collect()
    }

    pub fn responses(&self) -> Vec<Response> {
        self.answers
            .iter()
            .enumerate()
            .map(|(i, (t, b, w))| {
                Response::new(
                    TupleId::new(t.clone()).unwrap(),
                    format!("ann{}", i % 7),
                    TermId::new(b.clone()).unwrap(),
                    TermId::new(w.clone()).unwrap(),
                    None,
                )
                .unwrap()
            })
            .collect()
    }
}

/// A random study over `n` terms: random distinct 4-sets and a random
/// number of random answers per tuple.
pub fn random_study(seed: u64, n: usize, tuples: usize, max_answers: usize) -> RawStudy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let names: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
    let mut seen = std::collections::HashSet::new();
    let mut rows = Vec::new();
    while rows.len() < tuples {
        let mut pick: Vec<String> = names.choose_multiple(&mut rng, 4).cloned().collect();
        let mut key = pick.clone();
        key.sort();
        if !seen.insert(key) {
            continue;
        }
        pick.shuffle(&mut rng);
        rows.push((format!("q{}", rows.len()), [pick[0].clone(), pick[1].clone(), pick[2].clone(), pick[3].clone()]));
    }
    let mut answers = Vec::new();
    for (id, m) in &rows {
        for _ in 0..rng.random_range(1..=max_answers) {
            let b = rng.random_range(0..4);
            let mut w = rng.random_range(0..3);
            if w >= b {
                w += 1;
            }
            answers.push((id.clone(), m[b].clone(), m[w].clone()));
        }
    }
    answers.shuffle(&mut rng);
    RawStudy { tuples: rows, answers }
}

/// Counting-procedure scores by direct scan of the raw rows.
pub fn brute_force_scores(study: &RawStudy) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let mut terms: Vec<&String> = study.tuples.iter().flat_map(|(_, m)| m.iter()).collect();
    terms.sort();
    terms.dedup();
    for term in terms {
        let (mut appear, mut best, mut worst) = (0u64, 0u64, 0u64);
        for (tid, b, w) in &study.answers {
            let members = &study.tuples.iter().find(|(id, _)| id == tid).unwrap().1;
            if members.contains(term) {
                appear += 1;
            }
            if b == term {
                best += 1;
            }
            if w == term {
                worst += 1;
            }
        }
        if appear > 0 {
            out.insert(term.clone(), best as f64 / appear as f64 - worst as f64 / appear as f64);
        }
    }
    out
}

/// Ranks by counting smaller and equal values; ties share their mean rank.
pub fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation via raw sums.
pub fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|y| y * y).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

pub fn naive_spearman(a: &[f64], b: &[f64]) -> f64 {
    naive_pearson(&naive_ranks(a), &naive_ranks(b))
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let lf = |m: u64| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
    lf(n) - lf(k) - lf(n - k)
}

/// P(X >= s) for X ~ Binomial(n, p), by summing the pmf.
pub fn upper_tail(s: u64, n: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return if s == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return 1.0;
    }
    (s..=n)
        .map(|k| (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Exact one-sided lower bound: the p at which P(X >= s) equals 1 - confidence,
/// found by bisection on the binomial tail.
pub fn exact_lower_bound(s: u64, n: u64, confidence: f64) -> f64 {
    if s == 0 {
        return 0.0;
    }
    let alpha = 1.0 - confidence;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if upper_tail(s, n, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
