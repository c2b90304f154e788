//! Train-in-one-region, test-in-another experiments and the statistics that
//! relate spectral rank to generalization error.

use alloc::vec;
use alloc::vec::Vec;

use crate::dictionary::{Dictionary, DictionarySpec};
use crate::doe::{simulate_batch, RegionSampler, Region};
use crate::edmd::{build_snapshots, fit_edmd, FitOptions, KoopmanModel, Prediction, RolloutMode};
use crate::error::{invalid, Error, Result};
use crate::ode_sim::{Repressilator, RepressilatorParams, SimConfig, Trajectory};
use crate::par::Parallelism;
use crate::pe_analysis::{pe_analysis, rank_curve, Estimator, LiftedSignalEnsemble, PeAnalysis, PeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ErrorMode {
    /// `|pred - truth|_F / |truth|_F` over the whole state matrix.
    #[default]
    RmseRel,
    /// `max |pred - truth| / max |truth|`.
    SupRel,
}

/// A prediction error, or the fact that the prediction blew up.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TrajectoryError {
    Finite(f64),
    Divergence,
}

impl TrajectoryError {
    pub fn finite(self) -> Option<f64> {
        match self {
            TrajectoryError::Finite(v) => Some(v),
            TrajectoryError::Divergence => None,
        }
    }
}

/// Relative error of `pred` against `truth` on a shared time grid. When
/// `truth` is identically zero the absolute error is returned.
pub fn trajectory_error(pred: &Trajectory, truth: &Trajectory, mode: ErrorMode) -> Result<TrajectoryError> {
    if pred.len() != truth.len() || pred.dim() != truth.dim() {
        return Err(Error::GridMismatch);
    }
    let scale = truth.dt_sample().max(truth.times().last().map_or(0.0, |t| t.abs()));
    if pred.times().iter().zip(truth.times()).any(|(a, b)| (a - b).abs() > 1e-9 * scale) {
        return Err(Error::GridMismatch);
    }
    if pred.states().iter().any(|v| !v.is_finite()) {
        return Ok(TrajectoryError::Divergence);
    }
    let diff = pred.states() - truth.states();
    let (num, den) = match mode {
        ErrorMode::RmseRel => (diff.norm(), truth.states().norm()),
        ErrorMode::SupRel => (diff.amax(), truth.states().amax()),
    };
    let e = if den > 0.0 { num / den } else { num };
    Ok(if e.is_finite() { TrajectoryError::Finite(e) } else { TrajectoryError::Divergence })
}

/// `|K psi(x_t) - psi(x_{t+1})|_F / |psi(x_{t+1})|_F` accumulated sample by
/// sample over every consecutive pair of every trajectory.
pub fn one_step_lifted_error(model: &KoopmanModel, trajectories: &[Trajectory]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for tr in trajectories {
        let psi = model.dict.lift_trajectory(tr)?;
        for t in 0..psi.ncols().saturating_sub(1) {
            let pred = &model.k * psi.column(t);
            let next = psi.column(t + 1);
            num += (pred - next).norm_squared();
            den += next.norm_squared();
        }
    }
    Ok(if den > 0.0 { libm::sqrt(num / den) } else { libm::sqrt(num) })
}

/// One train/test experiment on the repressilator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ExperimentConfig {
    pub params: RepressilatorParams,
    pub train_region: Region,
    pub test_region: Region,
    pub n_train_ics: usize,
    pub n_test_ics: usize,
    /// Explicit training initial conditions; replaces sampling when set.
    pub train_ics: Option<Vec<Vec<f64>>>,
    pub test_ics: Option<Vec<Vec<f64>>>,
    pub train_horizon: f64,
    pub test_horizon: f64,
    /// Integration and sampling steps; the horizons override `tf`.
    pub sim: SimConfig,
    pub dictionary: DictionarySpec,
    pub fit: FitOptions,
    pub rollout: RolloutMode,
    pub pe: PeConfig,
    /// Excitation order tested on the lifted ensemble.
    pub pe_order: usize,
    /// Excitation order tested on the raw state ensemble.
    pub raw_pe_order: usize,
    pub error_mode: ErrorMode,
    pub rank_curve_points: usize,
    /// Training ICs use this seed and test ICs use `seed + 1`.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: RepressilatorParams::default(),
            train_region: Region::ball(6, 1.0).nonnegative(),
            test_region: Region::shell(6, 1.0, 3.0).nonnegative(),
            n_train_ics: 6,
            n_test_ics: 6,
            train_ics: None,
            test_ics: None,
            train_horizon: 25.0,
            test_horizon: 75.0,
            sim: SimConfig::default(),
            dictionary: DictionarySpec::Hermite { max_degree: 3 },
            fit: FitOptions::default(),
            rollout: RolloutMode::Linear,
            pe: PeConfig { estimator: Estimator::Biased, ..PeConfig::default() },
            pe_order: 2,
            raw_pe_order: 2,
            error_mode: ErrorMode::RmseRel,
            rank_curve_points: 16,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.train_region.validate()?;
        self.test_region.validate()?;
        self.pe.validate()?;
        for r in [&self.train_region, &self.test_region] {
            if r.dim() != 6 {
                return Err(Error::Dimension { expected: 6, got: r.dim() });
            }
        }
        if !(self.train_horizon > 0.0 && self.test_horizon > 0.0) {
            return Err(invalid("horizons must be positive"));
        }
        if self.pe_order == 0 || self.raw_pe_order == 0 {
            return Err(invalid("excitation orders must be at least 1"));
        }
        let counts = [
            self.train_ics.as_ref().map_or(self.n_train_ics, Vec::len),
            self.test_ics.as_ref().map_or(self.n_test_ics, Vec::len),
        ];
        if counts.contains(&0) {
            return Err(invalid("need at least one training and one test initial condition"));
        }
        self.sim.substeps()?;
        Ok(())
    }
}

/// Everything an experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub model: KoopmanModel,
    pub train_ics: Vec<Vec<f64>>,
    pub test_ics: Vec<Vec<f64>>,
    /// Training trajectories up to the training horizon.
    pub train_trajectories: Vec<Trajectory>,
    /// Ground truth from the test ICs up to the test horizon.
    pub test_truth: Vec<Trajectory>,
    pub test_predictions: Vec<Prediction>,
    pub test_errors: Vec<TrajectoryError>,
    /// Training ICs predicted out to the test horizon, against ground truth.
    pub train_extrapolation_errors: Vec<TrajectoryError>,
    pub lifted: PeAnalysis,
    pub raw: PeAnalysis,
    pub rank_curve: Vec<(usize, usize)>,
    pub one_step_error: f64,
}

impl ExperimentOutcome {
    /// Mean test error, or `Divergence` when any test prediction blew up.
    pub fn mean_test_error(&self) -> TrajectoryError {
        mean_error(&self.test_errors)
    }

    pub fn stacked_rank(&self) -> usize {
        self.lifted.certificate.spectral_rank.stacked
    }
}

pub fn mean_error(errors: &[TrajectoryError]) -> TrajectoryError {
    let mut sum = 0.0;
    for e in errors {
        match e {
            TrajectoryError::Finite(v) => sum += v,
            TrajectoryError::Divergence => return TrajectoryError::Divergence,
        }
    }
    TrajectoryError::Finite(sum / errors.len().max(1) as f64)
}

fn predictions_against(
    model: &KoopmanModel,
    truth: &[Trajectory],
    rollout: RolloutMode,
    mode: ErrorMode,
) -> Result<(Vec<Prediction>, Vec<TrajectoryError>)> {
    let mut preds = Vec::with_capacity(truth.len());
    let mut errors = Vec::with_capacity(truth.len());
    for tr in truth {
        let p = model.predict_with(tr.state(0), tr.times()[0], tr.len() - 1, rollout)?;
        errors.push(trajectory_error(&p.trajectory, tr, mode)?);
        preds.push(p);
    }
    Ok((preds, errors))
}

/// Samples training ICs, fits an eDMD model on trajectories up to the
/// training horizon, certifies the training data, and predicts from test ICs
/// out to the test horizon. A pure function of the config.
pub fn run_basin_experiment<P: Parallelism>(cfg: &ExperimentConfig, par: &P) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let field = Repressilator::new(cfg.params)?;
    let dict = Dictionary::from_spec(6, &cfg.dictionary)?;

    let draw = |explicit: &Option<Vec<Vec<f64>>>, region: &Region, count: usize, seed: u64| match explicit {
        Some(ics) => Ok(ics.clone()),
        None => RegionSampler::new(region, seed)?.draw_many(count),
    };
    let train_ics = draw(&cfg.train_ics, &cfg.train_region, cfg.n_train_ics, cfg.seed)?;
    let test_ics = draw(&cfg.test_ics, &cfg.test_region, cfg.n_test_ics, cfg.seed.wrapping_add(1))?;

    let long = cfg.sim.with_horizon(cfg.sim.t0 + cfg.test_horizon.max(cfg.train_horizon));
    let train_long = simulate_batch(&field, &train_ics, &long, par)?;
    let train_end = cfg.sim.t0 + cfg.train_horizon;
    let train_trajectories: Vec<Trajectory> = train_long.iter().map(|t| t.truncated(train_end)).collect();

    let snapshots = build_snapshots(&dict, &train_trajectories)?;
    let model = fit_edmd(&snapshots, &cfg.fit)?;

    let lifted_ensemble = LiftedSignalEnsemble::new(snapshots_signals(&dict, &train_trajectories)?, cfg.sim.dt_sample)?;
    let lifted = pe_analysis(&lifted_ensemble, cfg.pe_order, &cfg.pe, par)?;
    let raw = pe_analysis(&LiftedSignalEnsemble::from_states(&train_trajectories)?, cfg.raw_pe_order, &cfg.pe, par)?;
    let curve = rank_curve(&lifted.spectrum, cfg.pe.rank_threshold, cfg.rank_curve_points);

    let test_cfg = cfg.sim.with_horizon(cfg.sim.t0 + cfg.test_horizon);
    let test_truth = simulate_batch(&field, &test_ics, &test_cfg, par)?;
    let (test_predictions, test_errors) = predictions_against(&model, &test_truth, cfg.rollout, cfg.error_mode)?;
    let extrapolation_truth: Vec<Trajectory> =
        train_long.iter().map(|t| t.truncated(cfg.sim.t0 + cfg.test_horizon)).collect();
    let (_, train_extrapolation_errors) =
        predictions_against(&model, &extrapolation_truth, cfg.rollout, cfg.error_mode)?;
    let one_step_error = one_step_lifted_error(&model, &train_trajectories)?;

    Ok(ExperimentOutcome {
        model,
        train_ics,
        test_ics,
        train_trajectories,
        test_truth,
        test_predictions,
        test_errors,
        train_extrapolation_errors,
        lifted,
        raw,
        rank_curve: curve,
        one_step_error,
    })
}

fn snapshots_signals(dict: &Dictionary, trajectories: &[Trajectory]) -> Result<Vec<nalgebra::DMatrix<f64>>> {
    trajectories.iter().map(|t| dict.lift_trajectory(t)).collect()
}

/// Spearman rank correlation with average ranks for ties.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Correlation {
    pub rho: f64,
    /// Set when either variable is constant; `rho` is then 0.
    pub degenerate: bool,
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: x.len() });
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation { rho: 0.0, degenerate: true });
    }
    Ok(Correlation { rho: sxy / libm::sqrt(sxx * syy), degenerate: false })
}

/// Spearman correlation between training spectral rank and mean test error
/// over at least five experiments. Diverged runs rank above every finite
/// error: they are assigned the largest finite error plus one.
pub fn rank_error_correlation(points: &[(usize, TrajectoryError)]) -> Result<Correlation> {
    if points.len() < 5 {
        return Err(Error::InsufficientData { needed: 5, got: points.len() });
    }
    let worst = points.iter().filter_map(|(_, e)| e.finite()).fold(0.0, f64::max);
    let ranks: Vec<f64> = points.iter().map(|(r, _)| *r as f64).collect();
    let errors: Vec<f64> = points.iter().map(|(_, e)| e.finite().unwrap_or(worst + 1.0)).collect();
    spearman(&ranks, &errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn divergence_outranks_finite_errors() {
        let pts = [
            (5, TrajectoryError::Finite(0.1)),
            (4, TrajectoryError::Finite(0.2)),
            (3, TrajectoryError::Finite(0.3)),
            (2, TrajectoryError::Finite(0.4)),
            (1, TrajectoryError::Divergence),
        ];
        assert!((rank_error_correlation(&pts).unwrap().rho + 1.0).abs() < 1e-12);
        assert!(matches!(
            rank_error_correlation(&pts[..4]),
            Err(Error::InsufficientData { needed: 5, got: 4 })
        ));
    }

    #[test]
    fn mean_error_propagates_divergence() {
        assert_eq!(
            mean_error(&[TrajectoryError::Finite(1.0), TrajectoryError::Finite(3.0)]),
            TrajectoryError::Finite(2.0)
        );
        assert_eq!(
            mean_error(&[TrajectoryError::Finite(1.0), TrajectoryError::Divergence]),
            TrajectoryError::Divergence
        );
    }
}
