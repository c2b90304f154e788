//! Continuous-time vector fields, a fixed-step RK4 integrator and uniformly
//! sampled trajectories.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

/// Right-hand side of an autonomous or time-varying ODE `x' = f(x, t)`.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;

    /// Writes `f(x, t)` into `out`. Both slices have length [`dim`](Self::dim).
    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]);

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, t, &mut out);
        out
    }
}

impl<V: VectorField + ?Sized> VectorField for &V {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (**self).eval_into(x, t, out)
    }
}

/// Adapts a closure to [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.f)(x, t, out)
    }
}

/// `x' = A x`.
#[derive(Debug, Clone)]
pub struct LinearField {
    a: DMatrix<f64>,
}

impl LinearField {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(invalid("linear field needs a non-empty square matrix"));
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn eval_into(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let n = self.a.nrows();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..n).map(|j| self.a[(i, j)] * x[j]).sum();
        }
    }
}

/// Element-wise `x_i' = c x_i^2`. Escapes to infinity in finite time from
/// any `x_i(0) > 0` when `c > 0`; handy for exercising blow-up handling.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticField {
    pub dim: usize,
    pub coefficient: f64,
}

impl VectorField for QuadraticField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.coefficient * xi * xi;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RepressilatorParams {
    /// Maximal promoter strength.
    pub alpha: f64,
    /// Leaky transcription.
    pub alpha0: f64,
    /// Protein to mRNA decay-rate ratio.
    pub beta: f64,
    /// Hill coefficient.
    pub n_hill: f64,
}

impl Default for RepressilatorParams {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            alpha0: 0.0,
            beta: 1.0,
            n_hill: 2.0,
        }
    }
}

impl RepressilatorParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.alpha0 >= 0.0
            && self.beta > 0.0
            && self.n_hill > 0.0
            && self.alpha.is_finite()
            && self.alpha0.is_finite()
            && self.beta.is_finite()
            && self.n_hill.is_finite();
        if ok {
            Ok(())
        } else {
            Err(invalid(
                "repressilator needs alpha >= 0, alpha0 >= 0, beta > 0, n_hill > 0",
            ))
        }
    }
}

/// Index of the protein repressing each gene, in the order lacI, tetR, cI:
/// cI represses lacI, lacI represses tetR, tetR represses cI.
pub const REPRESSOR: [usize; 3] = [2, 0, 1];

/// State labels in storage order: the three mRNAs, then the three proteins.
pub const REPRESSILATOR_LABELS: [&str; 6] =
    ["m_lacI", "m_tetR", "m_cI", "p_lacI", "p_tetR", "p_cI"];

/// Six-state repressilator: three mRNA and three protein concentrations.
#[derive(Debug, Clone, Copy)]
pub struct Repressilator {
    params: RepressilatorParams,
}

impl Repressilator {
    pub fn new(params: RepressilatorParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &RepressilatorParams {
        &self.params
    }

    fn hill_power(&self, p: f64) -> f64 {
        let n = self.params.n_hill;
        if libm::trunc(n) == n && n <= 64.0 {
            int_pow(p, n as u32)
        } else {
            libm::pow(p, n)
        }
    }

    /// Jacobian of the field at `x`.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let RepressilatorParams {
            alpha, beta, n_hill, ..
        } = self.params;
        let mut jac = DMatrix::zeros(6, 6);
        for i in 0..3 {
            let j = REPRESSOR[i];
            let p = x[3 + j];
            let pn = self.hill_power(p);
            let denom = 1.0 + pn;
            // d/dp [alpha / (1 + p^n)] = -alpha n p^(n-1) / (1 + p^n)^2
            let dpn = if p == 0.0 && n_hill > 1.0 {
                0.0
            } else {
                n_hill * pn / p
            };
            jac[(i, i)] = -1.0;
            jac[(i, 3 + j)] = -alpha * dpn / (denom * denom);
            jac[(3 + i, 3 + i)] = -beta;
            jac[(3 + i, i)] = beta;
        }
        jac
    }

    /// Symmetric equilibrium `m_i = p_i = m*`, where `m* = alpha / (1 + m*^n) + alpha0`.
    pub fn symmetric_fixed_point(&self) -> [f64; 6] {
        let RepressilatorParams {
            alpha, alpha0, n_hill, ..
        } = self.params;
        let g = |m: f64| m - alpha / (1.0 + self.hill_power(m)) - alpha0;
        // g is strictly increasing on [0, inf), g(0) <= 0 and g(alpha + alpha0) >= 0.
        let (mut lo, mut hi) = (0.0_f64, alpha + alpha0 + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        let mut m = 0.5 * (lo + hi);
        for _ in 0..3 {
            let mn = self.hill_power(m);
            let dg = 1.0 + alpha * n_hill * mn / m.max(f64::MIN_POSITIVE) / ((1.0 + mn) * (1.0 + mn));
            let step = g(m) / dg;
            if step.is_finite() {
                m -= step;
            }
        }
        [m; 6]
    }
}

impl VectorField for Repressilator {
    fn dim(&self) -> usize {
        6
    }

    fn eval_into(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let RepressilatorParams {
            alpha, alpha0, beta, ..
        } = self.params;
        for i in 0..3 {
            let repressor = x[3 + REPRESSOR[i]];
            out[i] = -x[i] + alpha / (1.0 + self.hill_power(repressor)) + alpha0;
            out[3 + i] = -beta * (x[3 + i] - x[i]);
        }
    }
}

pub fn repressilator_field(params: RepressilatorParams) -> Result<Repressilator> {
    Repressilator::new(params)
}

/// Scratch buffers for repeated RK4 steps.
struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step<V: VectorField + ?Sized>(&mut self, field: &V, x: &mut [f64], t: f64, dt: f64) {
        let half = 0.5 * dt;
        field.eval_into(x, t, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        field.eval_into(&self.tmp, t + half, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        field.eval_into(&self.tmp, t + half, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        field.eval_into(&self.tmp, t + dt, &mut self.k4);
        let sixth = dt / 6.0;
        for i in 0..x.len() {
            x[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<V: VectorField + ?Sized>(field: &V, x: &[f64], t: f64, dt: f64) -> Vec<f64> {
    let mut ws = Rk4Workspace::new(x.len());
    let mut out = x.to_vec();
    ws.step(field, &mut out, t, dt);
    out
}

/// Uniformly sampled state sequence. States are stored column-wise (`n x T`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: DMatrix<f64>,
    dt_sample: f64,
}

impl Trajectory {
    /// Builds a trajectory, checking the uniform-grid invariant.
    pub fn new(times: Vec<f64>, states: DMatrix<f64>, dt_sample: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(invalid("trajectory needs at least one sample"));
        }
        if states.ncols() != times.len() {
            return Err(Error::Dimension {
                expected: times.len(),
                got: states.ncols(),
            });
        }
        if !(dt_sample > 0.0 && dt_sample.is_finite()) {
            return Err(invalid("dt_sample must be positive and finite"));
        }
        for w in times.windows(2) {
            let step = w[1] - w[0];
            if (step - dt_sample).abs() > 1e-12 * dt_sample.max(w[1].abs()) * 16.0 {
                return Err(invalid("trajectory time stamps are not uniformly spaced"));
            }
        }
        Ok(Self {
            times,
            states,
            dt_sample,
        })
    }

    /// Samples `t0, t0 + dt, ...` with the given state columns.
    pub fn from_columns(t0: f64, dt_sample: f64, states: DMatrix<f64>) -> Result<Self> {
        let times = (0..states.ncols())
            .map(|k| t0 + k as f64 * dt_sample)
            .collect();
        Self::new(times, states, dt_sample)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn dt_sample(&self) -> f64 {
        self.dt_sample
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        let n = self.states.nrows();
        &self.states.as_slice()[k * n..(k + 1) * n]
    }

    /// Leading samples with `t <= t_end` (at least one sample is kept).
    pub fn truncated(&self, t_end: f64) -> Trajectory {
        let tol = 1e-9 * self.dt_sample;
        let keep = self
            .times
            .iter()
            .take_while(|&&t| t <= t_end + tol)
            .count()
            .max(1);
        Trajectory {
            times: self.times[..keep].to_vec(),
            states: self.states.columns(0, keep).into_owned(),
            dt_sample: self.dt_sample,
        }
    }
}

// same multiplication order as the powi intrinsic
fn int_pow(mut a: f64, mut b: u32) -> f64 {
    let mut r = 1.0;
    loop {
        if b & 1 == 1 {
            r *= a;
        }
        b >>= 1;
        if b == 0 {
            return r;
        }
        a *= a;
    }
}

/// Integrator and sampling settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SimConfig {
    pub t0: f64,
    pub tf: f64,
    pub dt_int: f64,
    pub dt_sample: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t0: 0.0,
            tf: 25.0,
            dt_int: 0.01,
            dt_sample: 0.1,
        }
    }
}

impl SimConfig {
    pub fn with_horizon(mut self, tf: f64) -> Self {
        self.tf = tf;
        self
    }

    /// Integrator steps per output sample.
    pub fn substeps(&self) -> Result<usize> {
        if !(self.dt_int > 0.0 && self.dt_int.is_finite()) {
            return Err(invalid("dt_int must be positive"));
        }
        if !(self.dt_sample > 0.0 && self.dt_sample.is_finite()) {
            return Err(invalid("dt_sample must be positive"));
        }
        if self.dt_int > self.dt_sample * (1.0 + 1e-9) {
            return Err(invalid("dt_int must not exceed dt_sample"));
        }
        let ratio = self.dt_sample / self.dt_int;
        let steps = libm::round(ratio);
        if (ratio - steps).abs() > 1e-9 * ratio {
            return Err(invalid("dt_sample must be an integer multiple of dt_int"));
        }
        Ok(steps as usize)
    }

    /// Number of output samples on `t0, t0 + dt_sample, ... <= tf`.
    pub fn sample_count(&self) -> Result<usize> {
        if !(self.tf > self.t0) || !self.t0.is_finite() || !self.tf.is_finite() {
            return Err(invalid("need t0 < tf"));
        }
        let intervals = libm::floor((self.tf - self.t0) / self.dt_sample + 1e-9);
        Ok(intervals as usize + 1)
    }
}

/// Integrates `field` from `x0` with fixed-step RK4, recording every
/// `dt_sample`. The first column is `x0` exactly.
pub fn simulate<V: VectorField + ?Sized>(
    field: &V,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<Trajectory> {
    let n = field.dim();
    if x0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    let substeps = cfg.substeps()?;
    let samples = cfg.sample_count()?;
    let dt = cfg.dt_sample / substeps as f64;

    let mut states = DMatrix::zeros(n, samples);
    states.column_mut(0).copy_from_slice(x0);
    let mut x = x0.to_vec();
    let mut ws = Rk4Workspace::new(n);
    for k in 1..samples {
        let t_base = cfg.t0 + (k - 1) as f64 * cfg.dt_sample;
        for j in 0..substeps {
            ws.step(field, &mut x, t_base + j as f64 * dt, dt);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                time: cfg.t0 + k as f64 * cfg.dt_sample,
                step: k,
            });
        }
        states.column_mut(k).copy_from_slice(&x);
    }
    Trajectory::from_columns(cfg.t0, cfg.dt_sample, states)
}
