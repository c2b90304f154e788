//! Extended dynamic mode decomposition.
//!
//! `K` acts on lifted column vectors from the left, `psi(x_{t+1}) ~ K psi(x_t)`,
//! and is fitted as `K = Psi_Y pinv(Psi_X)` with a truncated SVD.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{ComplexField, DMatrix};

use crate::dictionary::Dictionary;
use crate::error::{invalid, Error, Result};
use crate::linalg::{frobenius, to_complex, Complex64};
use crate::ode_sim::Trajectory;

/// Where the snapshot columns came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    /// Sample count of each source trajectory, in column order.
    pub trajectory_lengths: Vec<usize>,
    pub dt_sample: f64,
}

/// Aligned lifted pairs `(psi(x_t), psi(x_{t+1}))`, one column per pair.
#[derive(Debug, Clone)]
pub struct SnapshotPair {
    pub psi_x: DMatrix<f64>,
    pub psi_y: DMatrix<f64>,
    /// Dictionary that produced the lifted columns.
    pub dict: Dictionary,
    pub meta: SnapshotMeta,
}

impl SnapshotPair {
    pub fn n_pairs(&self) -> usize {
        self.psi_x.ncols()
    }
}

/// Collects pairs trajectory by trajectory; no pair crosses a trajectory boundary.
pub fn build_snapshots(dict: &Dictionary, trajectories: &[Trajectory]) -> Result<SnapshotPair> {
    let first = trajectories
        .first()
        .ok_or_else(|| invalid("need at least one trajectory"))?;
    let dt = first.dt_sample();
    let mut m = 0;
    for traj in trajectories {
        if (traj.dt_sample() - dt).abs() > 1e-9 * dt {
            return Err(Error::MixedSampling {
                first: dt,
                other: traj.dt_sample(),
            });
        }
        if traj.dim() != dict.n_state() {
            return Err(Error::Dimension {
                expected: dict.n_state(),
                got: traj.dim(),
            });
        }
        if traj.len() < 2 {
            return Err(invalid("every trajectory needs at least two samples"));
        }
        m += traj.len() - 1;
    }

    let nl = dict.n_lifted();
    let mut psi_x = DMatrix::zeros(nl, m);
    let mut psi_y = DMatrix::zeros(nl, m);
    let mut col = 0;
    for traj in trajectories {
        let lifted = dict.lift_trajectory(traj)?;
        let pairs = traj.len() - 1;
        psi_x
            .columns_mut(col, pairs)
            .copy_from(&lifted.columns(0, pairs));
        psi_y
            .columns_mut(col, pairs)
            .copy_from(&lifted.columns(1, pairs));
        col += pairs;
    }
    Ok(SnapshotPair {
        psi_x,
        psi_y,
        dict: dict.clone(),
        meta: SnapshotMeta {
            trajectory_lengths: trajectories.iter().map(Trajectory::len).collect(),
            dt_sample: dt,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct FitOptions {
    /// Singular values below `svd_tol * sigma_max` are discarded.
    pub svd_tol: f64,
    /// Tikhonov weight; 0 disables it.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            svd_tol: 1e-10,
            ridge: 0.0,
        }
    }
}

/// A fitted finite-dimensional Koopman operator.
#[derive(Debug, Clone)]
pub struct KoopmanModel {
    pub k: DMatrix<f64>,
    pub dict: Dictionary,
    /// Lifted coordinates read out as the state, `y = W_h psi`.
    pub w_h_rows: Vec<usize>,
    pub svd_tol: f64,
    pub ridge: f64,
    /// `|K Psi_X - Psi_Y|_F / |Psi_Y|_F`.
    pub training_residual: f64,
    /// Singular values of `Psi_X` kept by the truncation.
    pub retained_rank: usize,
    pub dt_sample: f64,
}

pub fn fit_edmd(snapshots: &SnapshotPair, options: &FitOptions) -> Result<KoopmanModel> {
    if !(options.svd_tol > 0.0 && options.svd_tol < 1.0) {
        return Err(invalid("svd_tol must lie in (0, 1)"));
    }
    if !(options.ridge >= 0.0 && options.ridge.is_finite()) {
        return Err(invalid("ridge must be non-negative"));
    }
    let psi_x = &snapshots.psi_x;
    let psi_y = &snapshots.psi_y;
    if psi_x.shape() != psi_y.shape() {
        return Err(invalid("snapshot matrices differ in shape"));
    }
    if psi_x.ncols() == 0 {
        return Err(invalid("need at least one snapshot pair"));
    }
    if psi_x.iter().chain(psi_y.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("snapshot matrices contain non-finite values"));
    }
    let nl = psi_x.nrows();
    let dict = snapshots.dict.clone();
    if dict.n_lifted() != nl {
        return Err(Error::Dimension {
            expected: dict.n_lifted(),
            got: nl,
        });
    }

    let svd = psi_x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = options.svd_tol * sigma_max;
    let kept: Vec<usize> = (0..sigma.len())
        .filter(|&i| sigma[i] > cutoff && sigma[i] > 0.0)
        .collect();
    if kept.is_empty() {
        return Err(Error::DegenerateData);
    }

    // K = Psi_Y V diag(g(sigma)) U^T over the kept modes
    let mut k = DMatrix::zeros(nl, nl);
    for &i in &kept {
        let s = sigma[i];
        let gain = if options.ridge > 0.0 {
            s / (s * s + options.ridge)
        } else {
            1.0 / s
        };
        let projected = psi_y * v_t.row(i).transpose();
        k.ger(gain, &projected, &u.column(i), 1.0);
    }

    let residual = &k * psi_x - psi_y;
    let denom = frobenius(psi_y);
    let training_residual = if denom > 0.0 {
        frobenius(&residual) / denom
    } else {
        frobenius(&residual)
    };

    Ok(KoopmanModel {
        k,
        w_h_rows: (0..dict.n_state()).collect(),
        dict,
        svd_tol: options.svd_tol,
        ridge: options.ridge,
        training_residual,
        retained_rank: kept.len(),
        dt_sample: snapshots.meta.dt_sample,
    })
}

/// How predictions advance in the lifted space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RolloutMode {
    /// Lift once, then `psi_{k+1} = K psi_k`.
    #[default]
    Linear,
    /// Re-lift the projected state after every step.
    Relift,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub trajectory: Trajectory,
    /// Index of the first sample with a non-finite component.
    pub first_non_finite: Option<usize>,
}

impl Prediction {
    pub fn diverged(&self) -> bool {
        self.first_non_finite.is_some()
    }
}

impl KoopmanModel {
    pub fn n_lifted(&self) -> usize {
        self.k.nrows()
    }

    pub fn n_state(&self) -> usize {
        self.w_h_rows.len()
    }

    /// `W_h` as an explicit `n x n_L` selector matrix.
    pub fn w_h(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.w_h_rows.len(), self.n_lifted());
        for (r, &c) in self.w_h_rows.iter().enumerate() {
            w[(r, c)] = 1.0;
        }
        w
    }

    pub fn project(&self, psi: &[f64]) -> Vec<f64> {
        self.w_h_rows.iter().map(|&r| psi[r]).collect()
    }

    pub fn predict(&self, x0: &[f64], steps: usize) -> Result<Prediction> {
        self.predict_with(x0, 0.0, steps, RolloutMode::Linear)
    }

    pub fn predict_with(
        &self,
        x0: &[f64],
        t0: f64,
        steps: usize,
        mode: RolloutMode,
    ) -> Result<Prediction> {
        let n = self.n_state();
        let nl = self.n_lifted();
        let mut psi = self.dict.lift(x0)?;
        let mut next = vec![0.0; nl];
        let mut states = DMatrix::zeros(n, steps + 1);
        let mut first_non_finite = None;
        let mut record = |k: usize, psi: &[f64], states: &mut DMatrix<f64>| {
            for (r, &row) in self.w_h_rows.iter().enumerate() {
                states[(r, k)] = psi[row];
            }
            if first_non_finite.is_none() && self.w_h_rows.iter().any(|&r| !psi[r].is_finite()) {
                first_non_finite = Some(k);
            }
        };
        record(0, &psi, &mut states);
        for k in 1..=steps {
            for (i, slot) in next.iter_mut().enumerate() {
                *slot = (0..nl).map(|j| self.k[(i, j)] * psi[j]).sum();
            }
            match mode {
                RolloutMode::Linear => core::mem::swap(&mut psi, &mut next),
                RolloutMode::Relift => {
                    let x = self.project(&next);
                    self.dict.lift_into(&x, &mut psi)?;
                }
            }
            record(k, &psi, &mut states);
        }
        Ok(Prediction {
            trajectory: Trajectory::from_columns(t0, self.dt_sample, states)?,
            first_non_finite,
        })
    }
}

/// `K` split into state-only and input-dependent observables.
#[derive(Debug, Clone)]
pub struct InputKoopmanSplit {
    pub state_indices: Vec<usize>,
    pub input_indices: Vec<usize>,
    /// state-only rows x state-only columns
    pub k_x: DMatrix<f64>,
    /// state-only rows x input columns
    pub k_u: DMatrix<f64>,
    /// input rows x state-only columns
    pub k_ux: DMatrix<f64>,
    /// input rows x input columns
    pub k_uu: DMatrix<f64>,
    pub n_state: usize,
}

fn select(k: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| k[(rows[i], cols[j])])
}

impl InputKoopmanSplit {
    /// `mask[i]` marks lifted coordinate `i` as input-dependent. The first
    /// `n_state` coordinates are the state and may not be masked.
    pub fn new(k: &DMatrix<f64>, n_state: usize, mask: &[bool]) -> Result<Self> {
        if !k.is_square() {
            return Err(invalid("Koopman matrix must be square"));
        }
        if mask.len() != k.nrows() {
            return Err(Error::Dimension {
                expected: k.nrows(),
                got: mask.len(),
            });
        }
        if let Some(i) = mask.iter().take(n_state).position(|&m| m) {
            return Err(Error::Mask(i));
        }
        let state_indices: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        let input_indices: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        Ok(Self {
            k_x: select(k, &state_indices, &state_indices),
            k_u: select(k, &state_indices, &input_indices),
            k_ux: select(k, &input_indices, &state_indices),
            k_uu: select(k, &input_indices, &input_indices),
            state_indices,
            input_indices,
            n_state,
        })
    }

    /// Puts the four blocks back in the original coordinate order.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let n = self.state_indices.len() + self.input_indices.len();
        let mut k = DMatrix::zeros(n, n);
        let blocks = [
            (&self.state_indices, &self.state_indices, &self.k_x),
            (&self.state_indices, &self.input_indices, &self.k_u),
            (&self.input_indices, &self.state_indices, &self.k_ux),
            (&self.input_indices, &self.input_indices, &self.k_uu),
        ];
        for (rows, cols, block) in blocks {
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    k[(r, c)] = block[(i, j)];
                }
            }
        }
        k
    }

    /// Selector of the state coordinates within the state-only block.
    pub fn state_projection(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n_state, self.state_indices.len());
        for r in 0..self.n_state {
            w[(r, r)] = 1.0;
        }
        w
    }
}

pub fn split_dictionary_by_input(model: &KoopmanModel, mask: &[bool]) -> Result<InputKoopmanSplit> {
    InputKoopmanSplit::new(&model.k, model.n_state(), mask)
}

/// Appends the initial-condition input channel: `[[K, I], [0, 0]]`, with the
/// appended block marked input-dependent. `K_u` of the split is the identity.
pub fn delta_input_augmentation(k: &DMatrix<f64>) -> (DMatrix<f64>, Vec<bool>) {
    let n = k.nrows();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(k);
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    let mut mask = vec![false; n];
    mask.extend(core::iter::repeat_n(true, n));
    (aug, mask)
}

/// `G_K(z) = W_h (z I - K_x)^{-1} K_u`, evaluated by a linear solve.
pub fn transfer_function(
    split: &InputKoopmanSplit,
    w_h: &DMatrix<f64>,
    z: Complex64,
) -> Result<DMatrix<Complex64>> {
    let nx = split.k_x.nrows();
    if w_h.ncols() != nx {
        return Err(Error::Dimension {
            expected: nx,
            got: w_h.ncols(),
        });
    }
    let mut a = -to_complex(&split.k_x);
    for i in 0..nx {
        a[(i, i)] += z;
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if nx > 0 && (smax == 0.0 || smin <= 64.0 * f64::EPSILON * smax) {
        return Err(Error::Pole { re: z.re, im: z.im });
    }
    let rhs = to_complex(&split.k_u);
    let solved = a.lu().solve(&rhs).ok_or(Error::Pole { re: z.re, im: z.im })?;
    Ok(to_complex(w_h) * solved)
}

/// Eigenvalues of `K_x` sorted by modulus (descending), then phase (ascending).
pub fn koopman_poles(split: &InputKoopmanSplit) -> Vec<Complex64> {
    if split.k_x.is_empty() {
        return Vec::new();
    }
    let mut poles: Vec<Complex64> = split.k_x.complex_eigenvalues().iter().copied().collect();
    poles.sort_by(|a, b| match b.modulus().total_cmp(&a.modulus()) {
        Ordering::Equal => a.argument().total_cmp(&b.argument()),
        other => other,
    });
    poles
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_decay_snapshots() -> SnapshotPair {
        let mut x = vec![1.0];
        for _ in 0..10 {
            let last = *x.last().unwrap();
            x.push(0.5 * last);
        }
        let states = DMatrix::from_row_slice(1, x.len(), &x);
        let traj = Trajectory::from_columns(0.0, 1.0, states).unwrap();
        build_snapshots(&Dictionary::state_only(1).unwrap(), &[traj]).unwrap()
    }

    #[test]
    fn scalar_linear_recovery() {
        let snaps = scalar_decay_snapshots();
        assert_eq!(snaps.n_pairs(), 10);
        let model = fit_edmd(&snaps, &FitOptions::default()).unwrap();
        assert!((model.k[(0, 0)] - 0.5).abs() < 1e-10);
        assert!(model.training_residual < 1e-12);
    }

    #[test]
    fn pair_count_per_trajectory() {
        let dict = Dictionary::state_only(1).unwrap();
        let traj = Trajectory::from_columns(0.0, 0.1, DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]))
            .unwrap();
        assert_eq!(build_snapshots(&dict, &[traj]).unwrap().n_pairs(), 2);
    }

    #[test]
    fn no_pair_straddles_trajectories() {
        let dict = Dictionary::state_only(1).unwrap();
        let a = Trajectory::from_columns(0.0, 0.1, DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 777.0]))
            .unwrap();
        let b = Trajectory::from_columns(0.0, 0.1, DMatrix::from_row_slice(1, 3, &[-999.0, 5.0, 6.0]))
            .unwrap();
        let s = build_snapshots(&dict, &[a, b]).unwrap();
        assert_eq!(s.n_pairs(), 4);
        for c in 0..4 {
            assert!(!(s.psi_x[(0, c)] == 777.0 && s.psi_y[(0, c)] == -999.0));
        }
        assert_eq!(s.psi_x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, -999.0, 5.0]);
        assert_eq!(s.psi_y.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 777.0, 5.0, 6.0]);
    }

    #[test]
    fn mixed_sampling_rejected() {
        let dict = Dictionary::state_only(1).unwrap();
        let a = Trajectory::from_columns(0.0, 0.1, DMatrix::zeros(1, 3)).unwrap();
        let b = Trajectory::from_columns(0.0, 0.2, DMatrix::zeros(1, 3)).unwrap();
        assert!(matches!(
            build_snapshots(&dict, &[a, b]),
            Err(Error::MixedSampling { .. })
        ));
    }

    #[test]
    fn zero_data_is_degenerate() {
        let dict = Dictionary::state_only(2).unwrap();
        let a = Trajectory::from_columns(0.0, 0.1, DMatrix::zeros(2, 4)).unwrap();
        let s = build_snapshots(&dict, &[a]).unwrap();
        assert!(matches!(fit_edmd(&s, &FitOptions::default()), Err(Error::DegenerateData)));
    }

    #[test]
    fn prediction_steps_zero_returns_initial_state() {
        let model = fit_edmd(&scalar_decay_snapshots(), &FitOptions::default()).unwrap();
        let p = model.predict(&[3.0], 0).unwrap();
        assert_eq!(p.trajectory.len(), 1);
        assert_eq!(p.trajectory.state(0), &[3.0]);
    }

    #[test]
    fn ridge_shrinks_towards_zero() {
        let snaps = scalar_decay_snapshots();
        let plain = fit_edmd(&snaps, &FitOptions::default()).unwrap();
        let ridged = fit_edmd(
            &snaps,
            &FitOptions {
                svd_tol: 1e-10,
                ridge: 1.0,
            },
        )
        .unwrap();
        assert!(ridged.k[(0, 0)].abs() < plain.k[(0, 0)].abs());
    }

    #[test]
    fn transfer_function_scalar() {
        let k = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.0]);
        let split = InputKoopmanSplit::new(&k, 1, &[false, true]).unwrap();
        let w = DMatrix::from_element(1, 1, 1.0);
        let g = transfer_function(&split, &w, Complex64::new(1.0, 0.0)).unwrap();
        assert!((g[(0, 0)] - Complex64::new(2.0, 0.0)).modulus() < 1e-14);
        assert!(matches!(
            transfer_function(&split, &w, Complex64::new(0.5, 0.0)),
            Err(Error::Pole { .. })
        ));
    }

    #[test]
    fn transfer_function_diagonal() {
        let mut k = DMatrix::zeros(3, 3);
        k[(0, 0)] = 0.9;
        k[(1, 1)] = 0.8;
        k[(0, 2)] = 1.0;
        k[(1, 2)] = 1.0;
        let split = InputKoopmanSplit::new(&k, 2, &[false, false, true]).unwrap();
        let g = transfer_function(&split, &split.state_projection(), Complex64::new(1.0, 0.0)).unwrap();
        assert!((g[(0, 0)].re - 10.0).abs() < 1e-12);
        assert!((g[(1, 0)].re - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mask_rules() {
        let k = DMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        assert!(matches!(
            InputKoopmanSplit::new(&k, 2, &[false, true, false, false]),
            Err(Error::Mask(1))
        ));
        let all_state = InputKoopmanSplit::new(&k, 2, &[false; 4]).unwrap();
        assert_eq!(all_state.k_x, k);
        assert_eq!(all_state.k_u.ncols(), 0);
        let split = InputKoopmanSplit::new(&k, 2, &[false, false, false, true]).unwrap();
        assert_eq!(split.reassemble(), k);
    }

    #[test]
    fn delta_input_injection_is_identity() {
        let k = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let (aug, mask) = delta_input_augmentation(&k);
        let split = InputKoopmanSplit::new(&aug, 2, &mask).unwrap();
        assert_eq!(split.k_x, k);
        assert_eq!(split.k_u, DMatrix::identity(2, 2));
    }

    #[test]
    fn poles_sorted() {
        let k = DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.0, 0.9]);
        let split = InputKoopmanSplit::new(&k, 2, &[false, false]).unwrap();
        let p = koopman_poles(&split);
        assert!((p[0] - Complex64::new(0.9, 0.0)).modulus() < 1e-14);
        assert!((p[1] - Complex64::new(0.8, 0.0)).modulus() < 1e-14);

        let (r, th) = (0.95_f64, 0.3_f64);
        let rot = DMatrix::from_row_slice(
            2,
            2,
            &[r * libm::cos(th), -r * libm::sin(th), r * libm::sin(th), r * libm::cos(th)],
        );
        let split = InputKoopmanSplit::new(&rot, 2, &[false, false]).unwrap();
        let p = koopman_poles(&split);
        assert!((p[0] - Complex64::new(r * libm::cos(th), -r * libm::sin(th))).modulus() < 1e-12);
        assert!((p[1] - Complex64::new(r * libm::cos(th), r * libm::sin(th))).modulus() < 1e-12);
    }
}
