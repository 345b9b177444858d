//! Synthetic studies with known latent scores.
//!
//! Each simulated annotator perceives every term of a tuple as its latent
//! value plus fresh gaussian noise and answers with the arg-max as best and
//! the arg-min as worst (a Thurstonian choice model). Noise for each
//! (tuple, annotator) cell comes from its own ChaCha stream, and is drawn as
//! standard normals scaled by sigma, so studies at different sigma share
//! their random numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{id_width, Response, Term, TermId, Tuple4, TupleSet};
use crate::scoring::majority_agreement;
use crate::tuplegen::{generate_tuples, MIN_TERMS};

/// Distribution of the true scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum LatentDistribution {
    /// Uniform on [-1, 1].
    Uniform,
    /// Gaussian with mean 0 and the given standard deviation, clipped to [-1, 1].
    Gaussian { sd: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_terms: usize,
    pub latent: LatentDistribution,
    pub noise_sigma: f64,
    pub annotators_per_tuple: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n_terms: usize, noise_sigma: f64, annotators_per_tuple: usize, seed: u64) -> Self {
        SimConfig {
            n_terms,
            latent: LatentDistribution::Uniform,
            noise_sigma,
            annotators_per_tuple,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_terms < MIN_TERMS {
            return Err(Error::invalid(format!("n_terms must be >= {MIN_TERMS}")));
        }
        if self.annotators_per_tuple == 0 {
            return Err(Error::invalid("annotators_per_tuple must be >= 1"));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma <= 0.0 {
            return Err(Error::invalid(format!("noise_sigma must be > 0, got {}", self.noise_sigma)));
        }
        if let LatentDistribution::Gaussian { sd } = self.latent {
            if !sd.is_finite() || sd <= 0.0 {
                return Err(Error::invalid("gaussian latent sd must be > 0"));
            }
        }
        Ok(())
    }
}

/// Tuple multiplier used for simulated designs.
pub const SIM_MULTIPLIER: f64 = 2.0;

const LATENT_STREAM: u64 = 0;
const DESIGN_STREAM: u64 = 1;
const FIRST_CELL_STREAM: u64 = 2;

#[derive(Clone, Debug)]
pub struct SimulatedStudy {
    pub terms: Vec<Term>,
    /// True score of each term, in term order.
    pub latent: Vec<(TermId, f64)>,
    pub tuples: Vec<Tuple4>,
    pub responses: Vec<Response>,
}

impl SimulatedStudy {
    pub fn tuple_set(&self) -> TupleSet {
        TupleSet::new(self.tuples.clone()).expect("generated tuple ids are unique")
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

type Latent = Vec<(TermId, f64)>;

/// Terms and latent scores; ids double as texts.
fn draw_latent(config: &SimConfig) -> Result<(Vec<Term>, Latent)> {
    let mut rng = stream_rng(config.seed, LATENT_STREAM);
    let width = id_width(config.n_terms);
    let gaussian = match config.latent {
        LatentDistribution::Gaussian { sd } => Some(Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?),
        LatentDistribution::Uniform => None,
    };
    let mut terms = Vec::with_capacity(config.n_terms);
    let mut latent = Vec::with_capacity(config.n_terms);
    for i in 0..config.n_terms {
        let id = format!("t{i:0width$}");
        let v = match &gaussian {
            None => rng.random_range(-1.0..=1.0),
            Some(g) => g.sample(&mut rng).clamp(-1.0, 1.0),
        };
        let term = Term::new(id.clone(), id)?;
        latent.push((term.id.clone(), v));
        terms.push(term);
    }
    Ok((terms, latent))
}

fn design_seed(seed: u64) -> u64 {
    stream_rng(seed, DESIGN_STREAM).random()
}

/// Simulated annotator ids; position `j` within every tuple.
pub fn annotator_id(j: usize) -> String {
    format!("sim{j:03}")
}

/// Answers every tuple `annotators` times under noise `sigma`.
pub fn annotate(
    tuples: &[Tuple4],
    latent: &[(TermId, f64)],
    sigma: f64,
    annotators: usize,
    seed: u64,
) -> Result<Vec<Response>> {
    let values: std::collections::HashMap<&TermId, f64> = latent.iter().map(|(t, v)| (t, *v)).collect();
    let mut responses = Vec::with_capacity(tuples.len() * annotators);
    for (ti, tuple) in tuples.iter().enumerate() {
        let truth = tuple.terms().each_ref().map(|t| {
            values
                .get(t)
                .copied()
                .ok_or_else(|| Error::invalid(format!("no latent value for term {t}")))
        });
        let truth: Vec<f64> = truth.into_iter().collect::<Result<_>>()?;
        for j in 0..annotators {
            let cell = (ti * annotators + j) as u64;
            let mut rng = stream_rng(seed, FIRST_CELL_STREAM + cell);
            let perceived: Vec<f64> = truth
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + sigma * z
                })
                .collect();
            let (mut best, mut worst) = (0, 0);
            for k in 1..4 {
                if perceived[k] > perceived[best] {
                    best = k;
                }
                if perceived[k] < perceived[worst] {
                    worst = k;
                }
            }
            let terms = tuple.terms();
            responses.push(Response::new(
                tuple.id.clone(),
                annotator_id(j),
                terms[best].clone(),
                terms[worst].clone(),
                None,
            )?);
        }
    }
    Ok(responses)
}

pub fn simulate_study(config: &SimConfig) -> Result<SimulatedStudy> {
    config.validate()?;
    let (terms, latent) = draw_latent(config)?;
    let tuples = generate_tuples(&terms, SIM_MULTIPLIER, design_seed(config.seed))?;
    let responses = annotate(&tuples, &latent, config.noise_sigma, config.annotators_per_tuple, config.seed)?;
    Ok(SimulatedStudy {
        terms,
        latent,
        tuples,
        responses,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub sigma: f64,
    pub achieved: f64,
    pub target: f64,
}

/// Accepted distance between achieved and target agreement.
pub const CALIBRATION_TOLERANCE: f64 = 0.01;
const SIGMA_MIN: f64 = 1e-4;
const SIGMA_MAX: f64 = 50.0;

/// Finds the noise level at which the simulated study's combined majority
/// agreement matches `target`. `config.noise_sigma` is ignored.
pub fn calibrate_sigma(target: f64, config: &SimConfig) -> Result<Calibration> {
    if !(target > 0.3 && target < 1.0) {
        return Err(Error::invalid(format!(
            "target agreement must lie in (0.3, 1.0), got {target}"
        )));
    }
    let probe = SimConfig {
        noise_sigma: 1.0,
        ..config.clone()
    };
    probe.validate()?;
    let (_, latent) = draw_latent(&probe)?;
    let terms: Vec<Term> = latent
        .iter()
        .map(|(id, _)| Term::new(id.as_str(), id.as_str()))
        .collect::<Result<_>>()?;
    let tuples = generate_tuples(&terms, SIM_MULTIPLIER, design_seed(config.seed))?;
    let set = TupleSet::new(tuples.clone())?;
    let agreement_at = |sigma: f64| -> Result<f64> {
        let rs = annotate(&tuples, &latent, sigma, config.annotators_per_tuple, config.seed)?;
        Ok(majority_agreement(&set, &rs)?.combined)
    };

    let (mut lo, mut hi) = (SIGMA_MIN, SIGMA_MAX);
    let (a_lo, a_hi) = (agreement_at(lo)?, agreement_at(hi)?);
    if target > a_lo + CALIBRATION_TOLERANCE || target < a_hi - CALIBRATION_TOLERANCE {
        return Err(Error::invalid(format!(
            "target {target} unreachable: agreement spans [{a_hi:.3}, {a_lo:.3}] for sigma in [{SIGMA_MIN}, {SIGMA_MAX}]"
        )));
    }
    let mut best = if (a_lo - target).abs() <= (a_hi - target).abs() {
        (lo, a_lo)
    } else {
        (hi, a_hi)
    };
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        let a = agreement_at(mid)?;
        if (a - target).abs() < (best.1 - target).abs() {
            best = (mid, a);
        }
        if (a - target).abs() <= CALIBRATION_TOLERANCE / 5.0 {
            break;
        }
        // agreement falls as sigma grows
        if a > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::invalid(format!(
            "could not reach agreement {target} within {CALIBRATION_TOLERANCE} (closest {:.4})",
            best.1
        )));
    }
    Ok(Calibration {
        sigma: best.0,
        achieved: best.1,
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_from_config() {
        let c = SimConfig::new(20, 0.3, 3, 42);
        let a = simulate_study(&c).unwrap();
        let b = simulate_study(&c).unwrap();
        assert_eq!(a.responses, b.responses);
        assert_eq!(a.tuples, b.tuples);
        assert_eq!(a.latent, b.latent);
        assert_eq!(a.responses.len(), 40 * 3);
    }

    #[test]
    fn noiseless_answers_follow_latent_order() {
        let s = simulate_study(&SimConfig::new(16, 1e-12, 2, 5)).unwrap();
        let latent: std::collections::HashMap<_, _> = s.latent.iter().cloned().collect();
        let set = s.tuple_set();
        for r in &s.responses {
            let t = set.get(r.tuple_id.as_str()).unwrap();
            let max = t.terms().iter().max_by(|a, b| latent[*a].total_cmp(&latent[*b])).unwrap();
            let min = t.terms().iter().min_by(|a, b| latent[*a].total_cmp(&latent[*b])).unwrap();
            assert_eq!(&r.best, max);
            assert_eq!(&r.worst, min);
        }
    }

    #[test]
    fn latent_values_in_range() {
        let mut c = SimConfig::new(200, 0.3, 1, 8);
        c.latent = LatentDistribution::Gaussian { sd: 0.8 };
        let s = simulate_study(&c).unwrap();
        assert!(s.latent.iter().all(|(_, v)| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn bad_configs() {
        assert!(simulate_study(&SimConfig::new(7, 0.3, 1, 0)).is_err());
        assert!(simulate_study(&SimConfig::new(10, 0.0, 1, 0)).is_err());
        assert!(simulate_study(&SimConfig::new(10, 0.3, 0, 0)).is_err());
    }

    #[test]
    fn calibration_target_bounds() {
        let c = SimConfig::new(20, 1.0, 5, 1);
        assert!(calibrate_sigma(1.0, &c).is_err());
        assert!(calibrate_sigma(0.3, &c).is_err());
    }
}
