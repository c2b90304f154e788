//! Choosing initial conditions whose trajectories excite the dictionary.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dictionary::Dictionary;
use crate::error::{invalid, Error, Result};
use crate::ode_sim::{simulate, SimConfig, Trajectory, VectorField};
use crate::par::Parallelism;
use crate::pe_analysis::{pe_analysis, LiftedSignalEnsemble, PeCertificate, PeConfig};

const MAX_DRAWS: usize = 1_000_000;
const MIN_ACCEPTANCE: f64 = 1e-4;

/// A set of initial conditions to sample from. Distances are Euclidean.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum Region {
    /// `|x - center| <= radius`, optionally intersected with `x >= 0`.
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        nonnegative: bool,
    },
    /// `r_in <= |x - center| <= r_out`, optionally intersected with `x >= 0`.
    Shell {
        center: Vec<f64>,
        r_in: f64,
        r_out: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        nonnegative: bool,
    },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Every sample is `x`.
    Point { x: Vec<f64> },
}

impl Region {
    pub fn ball(dim: usize, radius: f64) -> Self {
        Region::Ball { center: vec![0.0; dim], radius, nonnegative: false }
    }

    pub fn shell(dim: usize, r_in: f64, r_out: f64) -> Self {
        Region::Shell { center: vec![0.0; dim], r_in, r_out, nonnegative: false }
    }

    /// Restricts a ball or shell to the nonnegative orthant; other kinds are unchanged.
    pub fn nonnegative(mut self) -> Self {
        match &mut self {
            Region::Ball { nonnegative, .. } | Region::Shell { nonnegative, .. } => *nonnegative = true,
            _ => {}
        }
        self
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Ball { center, .. } | Region::Shell { center, .. } => center.len(),
            Region::Box { lo, .. } => lo.len(),
            Region::Point { x } => x.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Region::Ball { center, radius, .. } => {
                if !(*radius > 0.0 && radius.is_finite()) || !finite(center) {
                    return Err(invalid("ball radius must be positive"));
                }
            }
            Region::Shell { center, r_in, r_out, .. } => {
                if !(*r_in >= 0.0 && r_in < r_out && r_out.is_finite()) || !finite(center) {
                    return Err(invalid("shell needs 0 <= r_in < r_out"));
                }
            }
            Region::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::Dimension { expected: lo.len(), got: hi.len() });
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b && b.is_finite() && a.is_finite())) {
                    return Err(invalid("box needs lo < hi in every coordinate"));
                }
            }
            Region::Point { x } => {
                if !finite(x) {
                    return Err(invalid("point must be finite"));
                }
            }
        }
        if self.dim() == 0 {
            return Err(invalid("region has dimension 0"));
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let dist = |c: &[f64]| libm::sqrt(x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum());
        let orthant = |nn: bool| !nn || x.iter().all(|&v| v >= 0.0);
        match self {
            Region::Ball { center, radius, nonnegative } => dist(center) <= *radius && orthant(*nonnegative),
            Region::Shell { center, r_in, r_out, nonnegative } => {
                let d = dist(center);
                d >= *r_in && d <= *r_out && orthant(*nonnegative)
            }
            Region::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v >= a && v <= b),
            Region::Point { x: p } => x == p.as_slice(),
        }
    }

    /// Box the rejection sampler draws from.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let around = |c: &[f64], r: f64, nn: bool| -> (Vec<f64>, Vec<f64>) {
            let lo = c.iter().map(|v| if nn { (v - r).max(0.0) } else { v - r }).collect();
            (lo, c.iter().map(|v| v + r).collect())
        };
        match self {
            Region::Ball { center, radius, nonnegative } => around(center, *radius, *nonnegative),
            Region::Shell { center, r_out, nonnegative, .. } => around(center, *r_out, *nonnegative),
            Region::Box { lo, hi } => (lo.clone(), hi.clone()),
            Region::Point { x } => (x.clone(), x.clone()),
        }
    }
}

/// Seeded uniform sampler over a region.
pub struct RegionSampler<'a> {
    region: &'a Region,
    lo: Vec<f64>,
    hi: Vec<f64>,
    rng: ChaCha8Rng,
    draws: usize,
    accepted: usize,
}

impl<'a> RegionSampler<'a> {
    pub fn new(region: &'a Region, seed: u64) -> Result<Self> {
        region.validate()?;
        let (lo, hi) = region.bounds();
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(invalid("region does not meet the nonnegative orthant"));
        }
        Ok(Self { region, lo, hi, rng: ChaCha8Rng::seed_from_u64(seed), draws: 0, accepted: 0 })
    }

    pub fn draw(&mut self) -> Result<Vec<f64>> {
        if let Region::Point { x } = self.region {
            return Ok(x.clone());
        }
        loop {
            if self.draws >= MAX_DRAWS && (self.accepted as f64) < MIN_ACCEPTANCE * self.draws as f64 {
                return Err(Error::RejectionBudget { accepted: self.accepted, draws: self.draws });
            }
            self.draws += 1;
            let x: Vec<f64> = self
                .lo
                .iter()
                .zip(&self.hi)
                .map(|(a, b)| a + (b - a) * self.rng.random::<f64>())
                .collect();
            if self.region.contains(&x) {
                self.accepted += 1;
                return Ok(x);
            }
        }
    }

    pub fn draw_many(&mut self, count: usize) -> Result<Vec<Vec<f64>>> {
        (0..count).map(|_| self.draw()).collect()
    }
}

/// `count` uniform samples from `region`; a pure function of the seed.
pub fn sample_region(region: &Region, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    RegionSampler::new(region, seed)?.draw_many(count)
}

/// Simulates every initial condition; results are in input order.
pub fn simulate_batch<V, P>(field: &V, ics: &[Vec<f64>], sim: &SimConfig, par: &P) -> Result<Vec<Trajectory>>
where
    V: VectorField + ?Sized,
    P: Parallelism,
{
    par.map(ics.len(), |i| simulate(field, &ics[i], sim)).into_iter().collect()
}

/// Settings for the design loop.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct DesignConfig {
    /// Spectral lines required before the rank plateau may stop the loop.
    pub target_lines: usize,
    /// Initial conditions added per iteration.
    pub batch: usize,
    pub max_iter: usize,
    /// Excitation order tested by the certificate.
    pub order: usize,
    pub sim: SimConfig,
    pub pe: PeConfig,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            target_lines: 1,
            batch: 2,
            max_iter: 10,
            order: 1,
            sim: SimConfig::default(),
            pe: PeConfig::default(),
            seed: 0,
        }
    }
}

/// One iteration of the design loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesignStep {
    pub iteration: usize,
    pub n_ics: usize,
    pub spectral_line_count: usize,
    pub stacked_rank: usize,
    pub theorem_rank: usize,
    pub is_pe: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesignResult {
    pub accepted_ics: Vec<Vec<f64>>,
    /// Certificate of exactly `accepted_ics`.
    pub certificate: PeCertificate,
    pub iterations_used: usize,
    pub rng_seed: u64,
    pub success: bool,
    pub trace: Vec<DesignStep>,
}

/// Adds `batch` sampled initial conditions per iteration and re-certifies the
/// whole ensemble. Stops once the line target is met and the stacked rank
/// either did not grow this round or already equals the lifted dimension.
///
/// Returns [`Error::BudgetExhausted`] carrying the partial result when
/// `max_iter` runs out first.
pub fn design_pe_ics<V, P>(
    field: &V,
    dict: &Dictionary,
    region: &Region,
    config: &DesignConfig,
    par: &P,
) -> Result<DesignResult>
where
    V: VectorField + ?Sized,
    P: Parallelism,
{
    if config.batch == 0 || config.max_iter == 0 {
        return Err(invalid("batch and max_iter must be at least 1"));
    }
    if region.dim() != dict.n_state() || field.dim() != dict.n_state() {
        return Err(Error::Dimension { expected: dict.n_state(), got: region.dim() });
    }
    let mut sampler = RegionSampler::new(region, config.seed)?;
    let mut ics: Vec<Vec<f64>> = Vec::new();
    let mut signals = Vec::new();
    let mut trace = Vec::new();
    let mut previous_rank = None;

    for iteration in 1..=config.max_iter {
        let batch = sampler.draw_many(config.batch)?;
        for tr in simulate_batch(field, &batch, &config.sim, par)? {
            signals.push(dict.lift_trajectory(&tr)?);
        }
        ics.extend(batch);
        let ensemble = LiftedSignalEnsemble::new(signals.clone(), config.sim.dt_sample)?;
        let certificate = pe_analysis(&ensemble, config.order, &config.pe, par)?.certificate;
        let rank = certificate.spectral_rank.stacked;
        trace.push(DesignStep {
            iteration,
            n_ics: ics.len(),
            spectral_line_count: certificate.spectral_line_count,
            stacked_rank: rank,
            theorem_rank: certificate.spectral_rank.theorem,
            is_pe: certificate.is_pe,
        });
        log::debug!("design iteration {iteration}: {} lines, rank {rank}", certificate.spectral_line_count);

        let plateau = previous_rank.is_some_and(|p| rank <= p) || rank == dict.n_lifted();
        let done = certificate.spectral_line_count >= config.target_lines && plateau;
        previous_rank = Some(rank);
        if done || iteration == config.max_iter {
            let result = DesignResult {
                accepted_ics: ics,
                certificate,
                iterations_used: iteration,
                rng_seed: config.seed,
                success: done,
                trace,
            };
            return if done { Ok(result) } else { Err(Error::BudgetExhausted(alloc::boxed::Box::new(result))) };
        }
    }
    unreachable!("the loop returns on its last iteration")
}

/// Certificate of the lifted trajectories started from `ics`.
pub fn evaluate_ic_set<V, P>(
    field: &V,
    dict: &Dictionary,
    ics: &[Vec<f64>],
    sim: &SimConfig,
    order: usize,
    pe: &PeConfig,
    par: &P,
) -> Result<PeCertificate>
where
    V: VectorField + ?Sized,
    P: Parallelism,
{
    if ics.is_empty() {
        return Err(invalid("need at least one initial condition"));
    }
    let trajectories = simulate_batch(field, ics, sim, par)?;
    let ensemble = LiftedSignalEnsemble::from_trajectories(dict, &trajectories)?;
    Ok(pe_analysis(&ensemble, order, pe, par)?.certificate)
}
