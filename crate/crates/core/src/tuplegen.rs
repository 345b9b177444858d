//! Generation and verification of best-worst question designs.
//!
//! A design of `m` 4-tuples over `n` terms should satisfy four criteria:
//!
//! 1. no two tuples have the same four terms;
//! 2. no term appears twice in one tuple;
//! 3. every term appears in (nearly) the same number of tuples;
//! 4. every pair of terms appears in (nearly) the same number of tuples.
//!
//! "Nearly" is made concrete here: term counts may differ by at most one,
//! and no pair may occur more than `ceil(6m / C(n,2)) + 1` times.
//!
//! The generator deals seeded permutations of the term list into blocks of
//! four, which fixes criteria 2 and 3 by construction, then runs a seeded
//! local search that swaps members between tuples to remove duplicate sets
//! and flatten the pair counts. Swaps never change how often a term is used.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{id_width, Term, TermId, Tuple4, TupleId};

/// Smallest term list a design can be generated for.
pub const MIN_TERMS: usize = 8;

/// Number of tuples requested for `n` terms, rounding half up.
pub fn tuple_count(n: usize, multiplier: f64) -> usize {
    (multiplier * n as f64 + 0.5).floor() as usize
}

/// `C(n, k)` saturating at `u128::MAX`.
pub fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Largest pair count a design with `m` tuples over `n` terms may contain.
pub fn pair_count_bound(n: usize, m: usize) -> u64 {
    let pairs = binomial(n as u128, 2) as u64;
    (6 * m as u64).div_ceil(pairs) + 1
}

/// Occurrence counts of terms and term pairs in a design.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DesignStats {
    pub tuples: usize,
    pub per_term_count: BTreeMap<TermId, u64>,
    /// Keyed by the pair in ascending id order; pairs that never co-occur are absent.
    pub per_pair_count: BTreeMap<(TermId, TermId), u64>,
    pub distinct_tuple_sets: usize,
}

impl DesignStats {
    pub fn max_pair_count(&self) -> u64 {
        self.per_pair_count.values().copied().max().unwrap_or(0)
    }

    /// Population variance of the pair counts over all `C(n,2)` pairs of
    /// the `n` terms in `per_term_count`, including pairs that never co-occur.
    pub fn pair_count_variance(&self) -> f64 {
        let n = self.per_term_count.len() as f64;
        let pairs = n * (n - 1.0) / 2.0;
        if pairs == 0.0 {
            return 0.0;
        }
        let sum: f64 = self.per_pair_count.values().map(|&c| c as f64).sum();
        let sum_sq: f64 = self.per_pair_count.values().map(|&c| (c * c) as f64).sum();
        let mean = sum / pairs;
        sum_sq / pairs - mean * mean
    }
}

pub fn design_stats(tuples: &[Tuple4]) -> Result<DesignStats> {
    if tuples.is_empty() {
        return Err(Error::invalid("design statistics need at least one tuple"));
    }
    let mut per_term_count: BTreeMap<TermId, u64> = BTreeMap::new();
    let mut per_pair_count: BTreeMap<(TermId, TermId), u64> = BTreeMap::new();
    let mut sets = std::collections::HashSet::new();
    for t in tuples {
        let members = t.member_set();
        for (i, a) in members.iter().enumerate() {
            *per_term_count.entry((*a).clone()).or_default() += 1;
            for b in &members[i + 1..] {
                *per_pair_count.entry(((*a).clone(), (*b).clone())).or_default() += 1;
            }
        }
        sets.insert(members);
    }
    Ok(DesignStats {
        tuples: tuples.len(),
        per_term_count,
        per_pair_count,
        distinct_tuple_sets: sets.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionCheck {
    pub criterion: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of checking a design against the four criteria.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignReport {
    pub criteria: Vec<CriterionCheck>,
    pub duplicate_sets: Vec<Vec<TermId>>,
    pub min_term_count: u64,
    pub max_term_count: u64,
    pub max_pair_count: u64,
    pub pair_count_bound: u64,
}

impl DesignReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }
}

impl std::fmt::Display for DesignReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.criteria {
            writeln!(
                f,
                "criterion {} ({}): {} - {}",
                c.criterion,
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Checks tuples against the design criteria. Terms listed in `terms` but
/// absent from every tuple count as appearing zero times.
pub fn verify_design(tuples: &[Tuple4], terms: &[Term]) -> DesignReport {
    let mut term_counts: BTreeMap<&str, u64> = terms.iter().map(|t| (t.id.as_str(), 0)).collect();
    let mut pair_counts: HashMap<(&str, &str), u64> = HashMap::new();
    let mut sets: BTreeMap<Vec<&str>, usize> = BTreeMap::new();
    let mut repeated_members = Vec::new();
    for t in tuples {
        let mut members: Vec<&str> = t.terms().iter().map(|x| x.as_str()).collect();
        members.sort_unstable();
        let before = members.len();
        members.dedup();
        if members.len() != before {
            repeated_members.push(t.id.to_string());
        }
        for (i, a) in members.iter().enumerate() {
            *term_counts.entry(a).or_default() += 1;
            for b in &members[i + 1..] {
                *pair_counts.entry((a, b)).or_default() += 1;
            }
        }
        *sets.entry(members).or_default() += 1;
    }

    let duplicate_sets: Vec<Vec<TermId>> = sets
        .iter()
        .filter(|(_, &c)| c > 1)
        .map(|(s, _)| s.iter().map(|x| TermId::new(*x).expect("non-empty")).collect())
        .collect();
    let min_term_count = term_counts.values().copied().min().unwrap_or(0);
    let max_term_count = term_counts.values().copied().max().unwrap_or(0);
    let max_pair_count = pair_counts.values().copied().max().unwrap_or(0);
    let n = term_counts.len();
    let bound = if n >= 2 { pair_count_bound(n, tuples.len()) } else { 0 };

    let criteria = vec![
        CriterionCheck {
            criterion: 1,
            name: "distinct 4-term sets",
            passed: duplicate_sets.is_empty(),
            detail: match duplicate_sets.first() {
                None => format!("{} distinct sets", sets.len()),
                Some(s) => format!(
                    "{} repeated sets, e.g. {{{}}}",
                    duplicate_sets.len(),
                    s.iter().map(|x| x.as_str()).collect::<Vec<_>>().join(",")
                ),
            },
        },
        CriterionCheck {
            criterion: 2,
            name: "distinct terms within each tuple",
            passed: repeated_members.is_empty(),
            detail: match repeated_members.first() {
                None => "all tuples have 4 distinct members".to_string(),
                Some(id) => format!("{} tuples repeat a member, e.g. {id}", repeated_members.len()),
            },
        },
        CriterionCheck {
            criterion: 3,
            name: "balanced term counts",
            passed: n > 0 && max_term_count - min_term_count <= 1,
            detail: format!("min {min_term_count}, max {max_term_count}"),
        },
        CriterionCheck {
            criterion: 4,
            name: "balanced pair counts",
            passed: max_pair_count <= bound,
            detail: format!("max {max_pair_count}, bound {bound}"),
        },
    ];
    DesignReport {
        criteria,
        duplicate_sets,
        min_term_count,
        max_term_count,
        max_pair_count,
        pair_count_bound: bound,
    }
}

/// Generates `round(multiplier * n)` tuples over `terms`.
///
/// The output depends only on `(terms, multiplier, seed)`.
pub fn generate_tuples(terms: &[Term], multiplier: f64, seed: u64) -> Result<Vec<Tuple4>> {
    let n = terms.len();
    if n < MIN_TERMS {
        return Err(Error::invalid(format!(
            "need at least {MIN_TERMS} terms to build a design, got {n}"
        )));
    }
    if !multiplier.is_finite() || multiplier <= 0.0 {
        return Err(Error::invalid(format!("multiplier must be positive, got {multiplier}")));
    }
    let m = tuple_count(n, multiplier);
    if m == 0 {
        return Err(Error::invalid("multiplier yields zero tuples"));
    }
    let available = binomial(n as u128, 4);
    if m as u128 > available {
        return Err(Error::invalid(format!(
            "{m} tuples requested but only {available} distinct 4-term sets exist for {n} terms"
        )));
    }
    let mut ids: Vec<&TermId> = terms.iter().map(|t| &t.id).collect();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("term ids must be unique"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = deal_blocks(n, m, &mut rng);
    let mut search = Search::new(n, &blocks);
    search.run(&mut blocks, &mut rng);
    if search.duplicate_excess > 0 {
        return Err(Error::invalid(format!(
            "could not find {m} distinct balanced tuples for {n} terms"
        )));
    }

    let width = id_width(m);
    blocks
        .into_iter()
        .enumerate()
        .map(|(i, mut block)| {
            block.shuffle(&mut rng);
            let members = block.map(|k| terms[k as usize].id.clone());
            Tuple4::new(TupleId::new(format!("q{i:0width$}"))?, members)
        })
        .collect()
}

/// Cuts a stream of seeded permutations of `0..n` into `m` blocks of four
/// distinct indices. A block that straddles two permutations pulls a
/// non-conflicting index forward from the new permutation.
fn deal_blocks(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<[u32; 4]> {
    let mut perm: Vec<u32> = (0..n as u32).collect();
    perm.shuffle(rng);
    let mut pos = 0;
    let mut blocks = Vec::with_capacity(m);
    for _ in 0..m {
        let mut block = [0u32; 4];
        for slot in 0..4 {
            if pos == n {
                perm.shuffle(rng);
                pos = 0;
            }
            let taken = &block[..slot];
            if taken.contains(&perm[pos]) {
                // at most 3 conflicts and n >= 8, so a free index exists
                let free = (pos + 1..n)
                    .find(|&j| !taken.contains(&perm[j]))
                    .expect("a non-conflicting term exists");
                perm.swap(pos, free);
            }
            block[slot] = perm[pos];
            pos += 1;
        }
        blocks.push(block);
    }
    blocks
}

/// Weight of one duplicate 4-set relative to one unit of pair-count energy.
const DUPLICATE_WEIGHT: i64 = 1 << 32;

/// Incremental local-search state over a design.
struct Search {
    pair_counts: HashMap<u64, u32>,
    set_counts: HashMap<[u32; 4], u32>,
    /// Sum of squared pair counts.
    energy: i64,
    /// Number of tuples beyond the first in each repeated set.
    duplicate_excess: i64,
    /// Pair counts above this make a tuple a repair target.
    target: u32,
    lower_bound: i64,
}

fn pair_key(a: u32, b: u32) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

fn sorted(block: &[u32; 4]) -> [u32; 4] {
    let mut s = *block;
    s.sort_unstable();
    s
}

impl Search {
    fn new(n: usize, blocks: &[[u32; 4]]) -> Self {
        let pairs = (n * (n - 1) / 2) as i64;
        let slots = 6 * blocks.len() as i64;
        let (q, r) = (slots / pairs, slots % pairs);
        let mut s = Search {
            pair_counts: HashMap::with_capacity(blocks.len() * 6),
            set_counts: HashMap::with_capacity(blocks.len()),
            energy: 0,
            duplicate_excess: 0,
            target: (q + i64::from(r > 0)) as u32,
            lower_bound: r * (q + 1) * (q + 1) + (pairs - r) * q * q,
        };
        for b in blocks {
            s.add_block(b);
        }
        s
    }

    fn cost(&self) -> i64 {
        self.duplicate_excess * DUPLICATE_WEIGHT + self.energy
    }

    fn bump_pair(&mut self, a: u32, b: u32, up: bool) {
        let c = self.pair_counts.entry(pair_key(a, b)).or_insert(0);
        let old = *c as i64;
        if up {
            *c += 1;
            self.energy += 2 * old + 1;
        } else {
            *c -= 1;
            self.energy -= 2 * old - 1;
        }
    }

    fn bump_set(&mut self, block: &[u32; 4], up: bool) {
        let c = self.set_counts.entry(sorted(block)).or_insert(0);
        if up {
            if *c >= 1 {
                self.duplicate_excess += 1;
            }
            *c += 1;
        } else {
            *c -= 1;
            if *c >= 1 {
                self.duplicate_excess -= 1;
            }
        }
    }

    fn add_block(&mut self, b: &[u32; 4]) {
        for i in 0..4 {
            for j in i + 1..4 {
                self.bump_pair(b[i], b[j], true);
            }
        }
        self.bump_set(b, true);
    }

    fn remove_block(&mut self, b: &[u32; 4]) {
        for i in 0..4 {
            for j in i + 1..4 {
                self.bump_pair(b[i], b[j], false);
            }
        }
        self.bump_set(b, false);
    }

    fn pair_count(&self, a: u32, b: u32) -> u32 {
        self.pair_counts.get(&pair_key(a, b)).copied().unwrap_or(0)
    }

    fn needs_repair(&self, b: &[u32; 4]) -> bool {
        if self.set_counts.get(&sorted(b)).copied().unwrap_or(0) > 1 {
            return true;
        }
        (0..4).any(|i| (i + 1..4).any(|j| self.pair_count(b[i], b[j]) > self.target))
    }

    fn swap_members(blocks: &mut [[u32; 4]], x: usize, xi: usize, y: usize, yi: usize) {
        let tmp = blocks[x][xi];
        blocks[x][xi] = blocks[y][yi];
        blocks[y][yi] = tmp;
    }

    /// Tries exchanging `blocks[x][xi]` with `blocks[y][yi]`; keeps the
    /// exchange when `accept(delta)` holds and returns the cost delta.
    fn try_swap(
        &mut self,
        blocks: &mut [[u32; 4]],
        (x, xi): (usize, usize),
        (y, yi): (usize, usize),
        accept: impl Fn(i64) -> bool,
    ) -> Option<i64> {
        let (u, v) = (blocks[x][xi], blocks[y][yi]);
        if u == v || blocks[x].contains(&v) || blocks[y].contains(&u) {
            return None;
        }
        let before = self.cost();
        self.remove_block(&blocks[x]);
        self.remove_block(&blocks[y]);
        Self::swap_members(blocks, x, xi, y, yi);
        self.add_block(&blocks[x]);
        self.add_block(&blocks[y]);
        let delta = self.cost() - before;
        if accept(delta) {
            return Some(delta);
        }
        self.remove_block(&blocks[x]);
        self.remove_block(&blocks[y]);
        Self::swap_members(blocks, x, xi, y, yi);
        self.add_block(&blocks[x]);
        self.add_block(&blocks[y]);
        None
    }

    fn done(&self) -> bool {
        self.duplicate_excess == 0 && self.energy == self.lower_bound
    }

    fn run(&mut self, blocks: &mut [[u32; 4]], rng: &mut ChaCha8Rng) {
        let m = blocks.len();
        if m < 2 {
            return;
        }
        const MAX_SWEEPS: usize = 400;
        const TRIES_PER_TUPLE: usize = 24;
        let mut stale = 0;
        for _ in 0..MAX_SWEEPS {
            if self.done() {
                return;
            }
            let start = self.cost();
            let mut any_target = false;
            for x in 0..m {
                if !self.needs_repair(&blocks[x]) {
                    continue;
                }
                any_target = true;
                for _ in 0..TRIES_PER_TUPLE {
                    let y = rng.random_range(0..m - 1);
                    let y = if y >= x { y + 1 } else { y };
                    let (xi, yi) = (rng.random_range(0..4), rng.random_range(0..4));
                    let sideways = rng.random_bool(0.2);
                    let moved = self.try_swap(blocks, (x, xi), (y, yi), |d| d < 0 || (d == 0 && sideways));
                    if matches!(moved, Some(d) if d < 0) {
                        break;
                    }
                }
            }
            if !any_target && self.duplicate_excess == 0 {
                // every pair is at or below the ceiling; polish the spread
                for _ in 0..m * 4 {
                    let x = rng.random_range(0..m);
                    let y = rng.random_range(0..m);
                    if x != y {
                        let (xi, yi) = (rng.random_range(0..4), rng.random_range(0..4));
                        self.try_swap(blocks, (x, xi), (y, yi), |d| d < 0);
                    }
                }
            }
            if self.cost() < start {
                stale = 0;
            } else {
                stale += 1;
                if stale >= 25 && self.duplicate_excess == 0 {
                    return;
                }
            }
        }
    }
}
