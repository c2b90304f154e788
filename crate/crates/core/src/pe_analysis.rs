//! Auto-covariances, block covariance matrices and matrix power spectra of
//! lifted signals, and persistence-of-excitation certificates built from them.
//!
//! A signal `phi_t` in `R^{n_L}` is persistently exciting of order `N` when the
//! block-Toeplitz matrix `Rbar(N)` with blocks `R(j - i)` is positive definite.
//! Equivalently its spectrum `S(w) = sum_k R(k) e^{-ikw}` must carry at least
//! `N` lines, and the certificate records both sides of that equivalence.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dictionary::Dictionary;
use crate::edmd::KoopmanModel;
use crate::error::{invalid, Error, Result};
use crate::fft::{dft, grid_omega};
use crate::linalg::{hermitian_eigenvalues, numerical_rank, symmetric_eigenvalues, Complex64};
use crate::ode_sim::Trajectory;
use crate::par::{Parallelism, Sequential};

/// How the expectation in `R(k) = E[phi_t phi_{t+k}^T]` is estimated from
/// finite records. All three average over realizations and time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Estimator {
    /// Linear lag products divided by `T`. Always a positive semidefinite sequence.
    Biased,
    /// Linear lag products divided by `T - k`.
    Unbiased,
    /// Records treated as one period of a periodic signal, divided by `T`.
    /// Exact for sinusoids on the `T`-point DFT grid.
    #[default]
    Circular,
}

impl Estimator {
    pub fn is_circular(self) -> bool {
        matches!(self, Estimator::Circular)
    }
}

/// Equal-length multichannel records, one matrix `n_L x T` per realization.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSignalEnsemble {
    signals: Vec<DMatrix<f64>>,
    dt_sample: f64,
    centered: bool,
}

impl LiftedSignalEnsemble {
    pub fn new(signals: Vec<DMatrix<f64>>, dt_sample: f64) -> Result<Self> {
        let first = signals.first().ok_or_else(|| invalid("ensemble has no realizations"))?;
        let (n, t) = first.shape();
        if n == 0 {
            return Err(invalid("ensemble has no channels"));
        }
        if t < 2 {
            return Err(Error::InsufficientData { needed: 2, got: t });
        }
        for s in &signals[1..] {
            if s.nrows() != n {
                return Err(Error::Dimension { expected: n, got: s.nrows() });
            }
            if s.ncols() != t {
                return Err(Error::Dimension { expected: t, got: s.ncols() });
            }
        }
        if signals.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(invalid("ensemble contains non-finite samples"));
        }
        if !(dt_sample > 0.0 && dt_sample.is_finite()) {
            return Err(invalid("dt_sample must be positive"));
        }
        Ok(Self { signals, dt_sample, centered: false })
    }

    /// Lifts every trajectory through `dict`.
    pub fn from_trajectories(dict: &Dictionary, trajectories: &[Trajectory]) -> Result<Self> {
        let dt = trajectories.first().map_or(1.0, Trajectory::dt_sample);
        let signals = trajectories
            .iter()
            .map(|tr| dict.lift_trajectory(tr))
            .collect::<Result<Vec<_>>>()?;
        Self::new(signals, dt)
    }

    /// The raw state records, without lifting.
    pub fn from_states(trajectories: &[Trajectory]) -> Result<Self> {
        let dt = trajectories.first().map_or(1.0, Trajectory::dt_sample);
        Self::new(trajectories.iter().map(|tr| tr.states().clone()).collect(), dt)
    }

    /// Subtracts the per-channel mean taken over all realizations and times.
    pub fn centered(&self) -> Self {
        let n = self.n_channels();
        let total = (self.n_realizations() * self.n_samples()) as f64;
        let mut mean = vec![0.0; n];
        for s in &self.signals {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += s.row(c).sum();
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let signals = self
            .signals
            .iter()
            .map(|s| {
                let mut s = s.clone();
                for (c, m) in mean.iter().enumerate() {
                    s.row_mut(c).add_scalar_mut(-m);
                }
                s
            })
            .collect();
        Self { signals, dt_sample: self.dt_sample, centered: true }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            signals: self.signals.iter().map(|s| s * c).collect(),
            dt_sample: self.dt_sample,
            centered: self.centered,
        }
    }

    pub fn signals(&self) -> &[DMatrix<f64>] {
        &self.signals
    }

    pub fn n_channels(&self) -> usize {
        self.signals[0].nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.signals[0].ncols()
    }

    pub fn n_realizations(&self) -> usize {
        self.signals.len()
    }

    pub fn dt_sample(&self) -> f64 {
        self.dt_sample
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }
}

/// The initial condition viewed as a Kronecker-delta input to the lifted
/// linear system: column 0 holds `psi(x_0)` and column `t + 1` holds the
/// one-step residual `psi(x_{t+1}) - K psi(x_t)`.
pub fn delta_input_signal(model: &KoopmanModel, traj: &Trajectory) -> Result<DMatrix<f64>> {
    if traj.dim() != model.n_state() {
        return Err(Error::Dimension { expected: model.n_state(), got: traj.dim() });
    }
    let psi = model.dict.lift_trajectory(traj)?;
    let t = psi.ncols();
    let mut out = DMatrix::zeros(psi.nrows(), t);
    out.set_column(0, &psi.column(0));
    if t > 1 {
        let next = psi.columns(1, t - 1);
        let pred = &model.k * psi.columns(0, t - 1);
        out.columns_mut(1, t - 1).copy_from(&(next - pred));
    }
    Ok(out)
}

pub fn delta_input_ensemble(model: &KoopmanModel, trajectories: &[Trajectory]) -> Result<LiftedSignalEnsemble> {
    let signals = trajectories
        .iter()
        .map(|tr| delta_input_signal(model, tr))
        .collect::<Result<Vec<_>>>()?;
    LiftedSignalEnsemble::new(signals, model.dt_sample)
}

/// `R(0..=max_lag)`; negative lags follow from `R(-k) = R(k)^T`.
#[derive(Debug, Clone)]
pub struct AutoCovarianceSequence {
    estimator: Estimator,
    n_samples: usize,
    lags: Vec<DMatrix<f64>>,
    /// Per realization, `(max_lag + 1) x n_L` auto-covariances of each channel.
    realization_diagonals: Vec<DMatrix<f64>>,
}

impl AutoCovarianceSequence {
    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn max_lag(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn n_channels(&self) -> usize {
        self.lags[0].nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// `R(k)` for `0 <= k <= max_lag`.
    pub fn lag(&self, k: usize) -> &DMatrix<f64> {
        &self.lags[k]
    }

    /// `R(k)` for any `|k| <= max_lag`.
    pub fn at(&self, k: isize) -> Result<DMatrix<f64>> {
        let m = k.unsigned_abs();
        if m > self.max_lag() {
            return Err(Error::Lag { lag: m, samples: self.n_samples });
        }
        Ok(if k >= 0 { self.lags[m].clone() } else { self.lags[m].transpose() })
    }

    pub fn realization_diagonals(&self) -> &[DMatrix<f64>] {
        &self.realization_diagonals
    }
}

pub fn autocovariance(
    ensemble: &LiftedSignalEnsemble,
    max_lag: usize,
    estimator: Estimator,
) -> Result<AutoCovarianceSequence> {
    let t = ensemble.n_samples();
    if max_lag >= t {
        return Err(Error::Lag { lag: max_lag, samples: t });
    }
    let n = ensemble.n_channels();
    let n_real = ensemble.n_realizations() as f64;
    let norm = |k: usize| match estimator {
        Estimator::Biased | Estimator::Circular => t as f64,
        Estimator::Unbiased => (t - k) as f64,
    };

    let mut lags = vec![DMatrix::zeros(n, n); max_lag + 1];
    let mut realization_diagonals = Vec::with_capacity(ensemble.n_realizations());
    for x in ensemble.signals() {
        let xt = x.transpose();
        let mut diag = DMatrix::zeros(max_lag + 1, n);
        for (k, r) in lags.iter_mut().enumerate() {
            let w = 1.0 / (norm(k) * n_real);
            r.gemm_tr(w, &xt.rows(0, t - k), &xt.rows(k, t - k), 1.0);
            if estimator.is_circular() && k > 0 {
                r.gemm_tr(w, &xt.rows(t - k, k), &xt.rows(0, k), 1.0);
            }
            for c in 0..n {
                let row = x.row(c);
                let mut acc = 0.0;
                for s in 0..t - k {
                    acc += row[s] * row[s + k];
                }
                if estimator.is_circular() {
                    for s in t - k..t {
                        acc += row[s] * row[s + k - t];
                    }
                }
                diag[(k, c)] = acc / norm(k);
            }
        }
        realization_diagonals.push(diag);
    }
    Ok(AutoCovarianceSequence { estimator, n_samples: t, lags, realization_diagonals })
}

/// `Rbar(N)`, the `N n_L x N n_L` block-Toeplitz matrix with block `(i, j) = R(j - i)`.
#[derive(Debug, Clone)]
pub struct BlockCovariance {
    pub order: usize,
    pub matrix: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

impl BlockCovariance {
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

pub fn block_covariance(acs: &AutoCovarianceSequence, order: usize) -> Result<BlockCovariance> {
    if order == 0 {
        return Err(invalid("block covariance order must be at least 1"));
    }
    if order - 1 > acs.max_lag() {
        return Err(Error::Lag { lag: order - 1, samples: acs.n_samples() });
    }
    let n = acs.n_channels();
    let mut m = DMatrix::zeros(order * n, order * n);
    for i in 0..order {
        for j in 0..order {
            let mut block = m.view_mut((i * n, j * n), (n, n));
            if j >= i {
                block.copy_from(acs.lag(j - i));
            } else {
                block.tr_copy_from(acs.lag(i - j));
            }
        }
    }
    let min_eigenvalue = symmetric_eigenvalues(&m).first().copied().unwrap_or(0.0);
    Ok(BlockCovariance { order, matrix: m, min_eigenvalue })
}

/// Matrix spectrum on an `n_freq`-point DFT grid.
///
/// Only the grid points in `[0, pi]` are stored; `S(-w) = conj(S(w))` supplies
/// the rest.
#[derive(Debug, Clone)]
pub struct PowerSpectrum {
    n_freq: usize,
    estimator: Estimator,
    max_lag: usize,
    half: Vec<DMatrix<Complex64>>,
    /// Per realization, `n_half x n_L` channel powers.
    realization_powers: Vec<DMatrix<f64>>,
}

impl PowerSpectrum {
    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn n_half(&self) -> usize {
        self.half.len()
    }

    pub fn n_channels(&self) -> usize {
        self.half[0].nrows()
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    /// Frequency of full-grid index `f`, in `(-pi, pi]`.
    pub fn omega(&self, f: usize) -> f64 {
        grid_omega(f, self.n_freq)
    }

    /// Full-grid frequencies in index order.
    pub fn omegas(&self) -> Vec<f64> {
        (0..self.n_freq).map(|f| self.omega(f)).collect()
    }

    /// `S` at full-grid index `f`.
    pub fn matrix(&self, f: usize) -> DMatrix<Complex64> {
        assert!(f < self.n_freq);
        if f < self.half.len() {
            self.half[f].clone()
        } else {
            self.half[self.n_freq - f].map(|v| v.conj())
        }
    }

    /// `S` at stored index `h`, i.e. at `omega = 2 pi h / n_freq`.
    pub fn half_matrix(&self, h: usize) -> &DMatrix<Complex64> {
        &self.half[h]
    }

    /// Number of full-grid points represented by stored index `h` (1 or 2).
    pub fn multiplicity(&self, h: usize) -> usize {
        if h == 0 || 2 * h == self.n_freq {
            1
        } else {
            2
        }
    }

    /// Ensemble power of `channel` at full-grid index `f`.
    pub fn channel_power(&self, f: usize, channel: usize) -> f64 {
        let h = if f < self.half.len() { f } else { self.n_freq - f };
        self.half[h][(channel, channel)].re
    }

    pub fn realization_powers(&self) -> &[DMatrix<f64>] {
        &self.realization_powers
    }

    /// Inverse transform at lag `k`, `(1/n) sum_f S(w_f) e^{ikw_f}`.
    pub fn lag_from_spectrum(&self, k: usize) -> DMatrix<f64> {
        let n = self.n_channels();
        let mut out = DMatrix::zeros(n, n);
        for (h, s) in self.half.iter().enumerate() {
            let w = self.omega(h) * k as f64;
            let e = Complex64::new(libm::cos(w), libm::sin(w));
            let mult = self.multiplicity(h) as f64;
            for (o, v) in out.iter_mut().zip(s.iter()) {
                // S(-w) e^{-ikw} is the conjugate of S(w) e^{ikw}
                *o += mult * (v * e).re;
            }
        }
        out / self.n_freq as f64
    }

    /// `lambda_max(S)` at each stored index.
    pub fn max_eigenvalues<P: Parallelism>(&self, par: &P) -> Vec<f64> {
        par.map(self.half.len(), |h| hermitian_eigenvalues(&self.half[h]).last().copied().unwrap_or(0.0))
    }
}

/// Smallest grid the lag sequence can be transformed onto without aliasing.
pub fn lag_support(acs: &AutoCovarianceSequence) -> usize {
    if acs.estimator().is_circular() {
        acs.n_samples()
    } else {
        2 * acs.max_lag() + 1
    }
}

/// Default grid: the full period for the circular estimator, otherwise the
/// next power of two at or above `4 (2 max_lag + 1)`.
pub fn default_n_freq(acs: &AutoCovarianceSequence) -> usize {
    if acs.estimator().is_circular() {
        acs.n_samples()
    } else {
        (4 * lag_support(acs)).next_power_of_two()
    }
}

pub fn power_spectrum(acs: &AutoCovarianceSequence, n_freq: usize) -> Result<PowerSpectrum> {
    let support = lag_support(acs);
    if acs.estimator().is_circular() {
        if acs.max_lag() + 1 != acs.n_samples() || n_freq != acs.n_samples() {
            return Err(Error::Grid { n_freq, support });
        }
    } else if n_freq < support {
        return Err(Error::Grid { n_freq, support });
    }
    let n = acs.n_channels();
    let n_half = n_freq / 2 + 1;
    let l = acs.max_lag();
    let circular = acs.estimator().is_circular();
    let zero = Complex64::new(0.0, 0.0);

    // Lays the lag sequence out circularly: c[k] = r(k), c[n - k] = r(-k).
    let layout = |get: &dyn Fn(usize, bool) -> f64| -> Vec<Complex64> {
        let mut c = vec![zero; n_freq];
        c[0].re = get(0, false);
        for k in 1..=l {
            c[k].re = get(k, false);
            if !circular {
                c[n_freq - k].re = get(k, true);
            }
        }
        c
    };

    let mut half = vec![DMatrix::from_element(n, n, zero); n_half];
    for i in 0..n {
        for j in i..n {
            let c = layout(&|k, neg| if neg { acs.lag(k)[(j, i)] } else { acs.lag(k)[(i, j)] });
            let s = dft(&c);
            for (h, m) in half.iter_mut().enumerate() {
                if i == j {
                    m[(i, i)] = Complex64::new(s[h].re, 0.0);
                } else {
                    m[(i, j)] = s[h];
                    m[(j, i)] = s[h].conj();
                }
            }
        }
    }

    let realization_powers = acs
        .realization_diagonals()
        .iter()
        .map(|d| {
            let mut p = DMatrix::zeros(n_half, n);
            for ch in 0..n {
                let s = dft(&layout(&|k, _| d[(k, ch)]));
                for h in 0..n_half {
                    p[(h, ch)] = s[h].re;
                }
            }
            p
        })
        .collect();

    Ok(PowerSpectrum { n_freq, estimator: acs.estimator(), max_lag: l, half, realization_powers })
}

/// Which grid points carry a spectral line.
#[derive(Debug, Clone)]
pub struct SpectralLines {
    /// `lambda_max(S)` per stored index.
    pub max_eigenvalues: Vec<f64>,
    pub global_max: f64,
    pub rel_threshold: f64,
    /// Stored indices above threshold.
    pub lines: Vec<usize>,
    /// Full-grid count over `(-pi, pi]`; `+w` and `-w` are separate points.
    pub count: usize,
}

pub fn spectral_lines<P: Parallelism>(spec: &PowerSpectrum, rel_threshold: f64, par: &P) -> SpectralLines {
    let max_eigenvalues = spec.max_eigenvalues(par);
    let global_max = max_eigenvalues.iter().copied().fold(0.0, f64::max);
    let lines: Vec<usize> = if global_max > 0.0 {
        (0..max_eigenvalues.len())
            .filter(|&h| max_eigenvalues[h] > rel_threshold * global_max)
            .collect()
    } else {
        Vec::new()
    };
    let count = lines.iter().map(|&h| spec.multiplicity(h)).sum();
    SpectralLines { max_eigenvalues, global_max, rel_threshold, lines, count }
}

pub fn spectral_line_count(spec: &PowerSpectrum, rel_threshold: f64) -> usize {
    spectral_lines(spec, rel_threshold, &Sequential).count
}

/// The two ranks reported for a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralRank {
    /// Rank of the stacked periodogram: rows are per-realization channel powers
    /// at each frequency in `[0, pi]`.
    pub stacked: usize,
    /// Rank of `sum S(w_j)` over the spectral lines.
    pub theorem: usize,
}

/// Rows `(realization, frequency)` of channel powers, frequencies restricted
/// to the first `n_used` stored indices.
pub fn stacked_periodogram(spec: &PowerSpectrum, n_used: usize) -> DMatrix<f64> {
    let n_used = n_used.min(spec.n_half());
    let powers = spec.realization_powers();
    let n = spec.n_channels();
    let mut m = DMatrix::zeros(powers.len() * n_used, n);
    for (r, p) in powers.iter().enumerate() {
        m.view_mut((r * n_used, 0), (n_used, n)).copy_from(&p.rows(0, n_used));
    }
    m
}

pub fn stacked_rank(spec: &PowerSpectrum, rel_threshold: f64) -> usize {
    numerical_rank(&stacked_periodogram(spec, spec.n_half()), rel_threshold)
}

/// Rank of the aggregated line spectrum, which is real because lines come in
/// conjugate pairs.
pub fn theorem_rank(spec: &PowerSpectrum, lines: &SpectralLines, rel_threshold: f64) -> usize {
    let n = spec.n_channels();
    let mut sum = DMatrix::zeros(n, n);
    for &h in &lines.lines {
        let mult = spec.multiplicity(h) as f64;
        sum.zip_apply(spec.half_matrix(h), |o, v| *o += mult * v.re);
    }
    numerical_rank(&sum, rel_threshold)
}

pub fn spectral_rank(spec: &PowerSpectrum, rel_threshold: f64) -> SpectralRank {
    let lines = spectral_lines(spec, rel_threshold, &Sequential);
    SpectralRank {
        stacked: stacked_rank(spec, rel_threshold),
        theorem: theorem_rank(spec, &lines, rel_threshold),
    }
}

/// Stacked-periodogram rank as more frequencies, lowest first, are included.
/// Returns `(n_freq_used, rank)` at up to `points` evenly spaced cut-offs.
pub fn rank_curve(spec: &PowerSpectrum, rel_threshold: f64, points: usize) -> Vec<(usize, usize)> {
    let n_half = spec.n_half();
    let points = points.clamp(1, n_half);
    let mut cuts: Vec<usize> = (1..=points).map(|i| (i * n_half).div_ceil(points)).collect();
    cuts.dedup();
    cuts.into_iter()
        .map(|c| (c, numerical_rank(&stacked_periodogram(spec, c), rel_threshold)))
        .collect()
}

/// Tolerances and estimator choices for [`pe_certificate`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PeConfig {
    pub estimator: Estimator,
    /// Defaults to `T - 1`.
    pub max_lag: Option<usize>,
    /// Defaults to [`default_n_freq`].
    pub n_freq: Option<usize>,
    /// Lines are grid points with `lambda_max(S) > line_threshold * max`.
    pub line_threshold: f64,
    pub rank_threshold: f64,
    /// `pd_tol = pd_tol_scale * trace(Rbar) / (N n_L)`.
    pub pd_tol_scale: f64,
    pub center: bool,
    /// Flag certificates where positive definiteness holds with too few lines.
    pub theorem_check: bool,
}

impl Default for PeConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::Circular,
            max_lag: None,
            n_freq: None,
            line_threshold: 1e-8,
            rank_threshold: 1e-8,
            pd_tol_scale: 1e-10,
            center: false,
            theorem_check: true,
        }
    }
}

impl PeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("line_threshold", self.line_threshold),
            ("rank_threshold", self.rank_threshold),
            ("pd_tol_scale", self.pd_tol_scale),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(alloc::format!("{name} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Evidence for or against persistent excitation of a given order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeCertificate {
    pub n_lifted: usize,
    pub order_tested: usize,
    pub n_realizations: usize,
    pub n_samples: usize,
    pub estimator: Estimator,
    pub centered: bool,
    pub max_lag: usize,
    pub n_freq: usize,
    /// Smallest eigenvalue of `Rbar(order)`.
    pub pd_margin: f64,
    pub pd_tol: f64,
    pub is_pe: bool,
    /// Grid points in `(-pi, pi]` with non-vanishing power, `+w` and `-w` counted separately.
    pub spectral_line_count: usize,
    pub spectral_rank: SpectralRank,
    pub max_power: f64,
    pub line_threshold: f64,
    pub rank_threshold: f64,
    pub pd_tol_scale: f64,
    /// `None` when the check is disabled; otherwise whether `is_pe` implies
    /// enough spectral lines.
    pub theorem_consistent: Option<bool>,
}

/// A certificate together with the intermediate spectrum.
#[derive(Debug, Clone)]
pub struct PeAnalysis {
    pub certificate: PeCertificate,
    pub spectrum: PowerSpectrum,
    pub lines: SpectralLines,
}

pub fn pe_analysis<P: Parallelism>(
    ensemble: &LiftedSignalEnsemble,
    order: usize,
    config: &PeConfig,
    par: &P,
) -> Result<PeAnalysis> {
    config.validate()?;
    let centered;
    let ensemble = if config.center && !ensemble.is_centered() {
        centered = ensemble.centered();
        &centered
    } else {
        ensemble
    };
    let n_lifted = ensemble.n_channels();
    if order > n_lifted {
        log::warn!("testing excitation order {order} above the lifted dimension {n_lifted}");
    }
    let max_lag = config.max_lag.unwrap_or(ensemble.n_samples() - 1);
    let acs = autocovariance(ensemble, max_lag, config.estimator)?;
    let block = block_covariance(&acs, order)?;
    let n_freq = config.n_freq.unwrap_or_else(|| default_n_freq(&acs));
    let spectrum = power_spectrum(&acs, n_freq)?;
    let lines = spectral_lines(&spectrum, config.line_threshold, par);
    let spectral_rank = SpectralRank {
        stacked: stacked_rank(&spectrum, config.rank_threshold),
        theorem: theorem_rank(&spectrum, &lines, config.rank_threshold),
    };

    let pd_tol = config.pd_tol_scale * block.trace() / (order * n_lifted) as f64;
    let is_pe = block.min_eigenvalue > pd_tol;
    let theorem_consistent = config.theorem_check.then_some(!is_pe || lines.count >= order);
    if theorem_consistent == Some(false) {
        log::warn!(
            "Rbar({order}) is positive definite but only {} spectral lines were found",
            lines.count
        );
    }
    let certificate = PeCertificate {
        n_lifted,
        order_tested: order,
        n_realizations: ensemble.n_realizations(),
        n_samples: ensemble.n_samples(),
        estimator: config.estimator,
        centered: ensemble.is_centered(),
        max_lag,
        n_freq,
        pd_margin: block.min_eigenvalue,
        pd_tol,
        is_pe,
        spectral_line_count: lines.count,
        spectral_rank,
        max_power: lines.global_max,
        line_threshold: config.line_threshold,
        rank_threshold: config.rank_threshold,
        pd_tol_scale: config.pd_tol_scale,
        theorem_consistent,
    };
    Ok(PeAnalysis { certificate, spectrum, lines })
}

pub fn pe_certificate(ensemble: &LiftedSignalEnsemble, order: usize, config: &PeConfig) -> Result<PeCertificate> {
    pe_analysis(ensemble, order, config, &Sequential).map(|a| a.certificate)
}
