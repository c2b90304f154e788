//! State-inclusive observable dictionaries.
//!
//! Every dictionary lists the raw state coordinates first, so the state is
//! recovered from a lifted vector by reading its leading `n_state` entries.
//! Polynomial dictionaries then hold the constant function followed by the
//! remaining products in graded order (degree ascending, exponent tuples
//! lexicographically descending within a degree).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::ode_sim::Trajectory;

/// Default upper bound on the number of dictionary functions.
pub const DEFAULT_SIZE_CAP: usize = 10_000;

/// Serializable description of a dictionary; `n_state` is supplied separately.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "basis", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum DictionarySpec {
    /// `psi(x) = x`.
    State,
    /// Probabilists' Hermite products of total degree `<= max_degree`.
    Hermite { max_degree: usize },
    /// Plain monomials of total degree `<= max_degree`.
    Monomial { max_degree: usize },
    /// State, constant, then one Gaussian bump per center.
    Rbf { centers: Vec<Vec<f64>>, bandwidth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PolyFamily {
    Hermite,
    Monomial,
}

#[derive(Debug, Clone, PartialEq)]
enum Basis {
    State,
    Polynomial {
        family: PolyFamily,
        max_degree: usize,
        /// Row-major `n_lifted x n_state` exponent table.
        exponents: Vec<u8>,
    },
    Rbf {
        centers: Vec<Vec<f64>>,
        bandwidth: f64,
    },
}

/// An immutable lifting `psi: R^n -> R^{n_L}` whose first `n` outputs are the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    n_state: usize,
    n_lifted: usize,
    basis: Basis,
}

/// Number of multi-indices of total degree `<= d` in `n` variables, `C(n + d, d)`.
/// Saturates at `u128::MAX`.
pub fn multiset_count(n: usize, d: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 1..=d as u128 {
        acc = match acc.checked_mul(n as u128 + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    acc
}

/// Probabilists' Hermite polynomials `He_0(x) .. He_d(x)` via
/// `He_{k+1} = x He_k - k He_{k-1}`.
pub fn hermite_values(x: f64, max_degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if max_degree >= 1 {
        out[1] = x;
    }
    for k in 1..max_degree {
        out[k + 1] = x * out[k] - k as f64 * out[k - 1];
    }
}

fn push_degree(n: usize, degree: usize, prefix: &mut Vec<u8>, out: &mut Vec<u8>) {
    if prefix.len() == n - 1 {
        prefix.push(degree as u8);
        out.extend_from_slice(prefix);
        prefix.pop();
        return;
    }
    for a in (0..=degree).rev() {
        prefix.push(a as u8);
        push_degree(n, degree - a, prefix, out);
        prefix.pop();
    }
}

/// Exponent table ordered state block, constant, then degrees 2..=d.
fn polynomial_exponents(n: usize, max_degree: usize) -> Vec<u8> {
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(n);
    // degree 1 in descending lex order is e_1, ..., e_n: the state block
    push_degree(n, 1, &mut prefix, &mut out);
    out.extend(core::iter::repeat_n(0u8, n));
    for degree in 2..=max_degree {
        push_degree(n, degree, &mut prefix, &mut out);
    }
    out
}

impl Dictionary {
    /// The identity lifting.
    pub fn state_only(n_state: usize) -> Result<Self> {
        if n_state == 0 {
            return Err(invalid("dictionary needs n_state >= 1"));
        }
        Ok(Self {
            n_state,
            n_lifted: n_state,
            basis: Basis::State,
        })
    }

    pub fn hermite(n_state: usize, max_degree: usize) -> Result<Self> {
        Self::polynomial(n_state, max_degree, PolyFamily::Hermite, DEFAULT_SIZE_CAP)
    }

    pub fn hermite_with_cap(n_state: usize, max_degree: usize, cap: usize) -> Result<Self> {
        Self::polynomial(n_state, max_degree, PolyFamily::Hermite, cap)
    }

    pub fn monomial(n_state: usize, max_degree: usize) -> Result<Self> {
        Self::polynomial(n_state, max_degree, PolyFamily::Monomial, DEFAULT_SIZE_CAP)
    }

    fn polynomial(n_state: usize, max_degree: usize, family: PolyFamily, cap: usize) -> Result<Self> {
        if n_state == 0 || max_degree == 0 {
            return Err(invalid("polynomial dictionary needs n_state >= 1 and max_degree >= 1"));
        }
        if max_degree > u8::MAX as usize {
            return Err(invalid("max_degree too large"));
        }
        let count = multiset_count(n_state, max_degree);
        if count > cap as u128 {
            return Err(Error::Size {
                count: usize::try_from(count).unwrap_or(usize::MAX),
                cap,
            });
        }
        let exponents = polynomial_exponents(n_state, max_degree);
        debug_assert_eq!(exponents.len(), count as usize * n_state);
        Ok(Self {
            n_state,
            n_lifted: count as usize,
            basis: Basis::Polynomial {
                family,
                max_degree,
                exponents,
            },
        })
    }

    /// Gaussian bumps `exp(-|x - c|^2 / (2 bandwidth^2))` after the state and constant.
    pub fn rbf(n_state: usize, centers: Vec<Vec<f64>>, bandwidth: f64) -> Result<Self> {
        if n_state == 0 {
            return Err(invalid("dictionary needs n_state >= 1"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(invalid("rbf bandwidth must be positive"));
        }
        if let Some(c) = centers.iter().find(|c| c.len() != n_state) {
            return Err(Error::Dimension {
                expected: n_state,
                got: c.len(),
            });
        }
        Ok(Self {
            n_state,
            n_lifted: n_state + 1 + centers.len(),
            basis: Basis::Rbf { centers, bandwidth },
        })
    }

    pub fn from_spec(n_state: usize, spec: &DictionarySpec) -> Result<Self> {
        match spec {
            DictionarySpec::State => Self::state_only(n_state),
            DictionarySpec::Hermite { max_degree } => Self::hermite(n_state, *max_degree),
            DictionarySpec::Monomial { max_degree } => Self::monomial(n_state, *max_degree),
            DictionarySpec::Rbf { centers, bandwidth } => {
                Self::rbf(n_state, centers.clone(), *bandwidth)
            }
        }
    }

    pub fn spec(&self) -> DictionarySpec {
        match &self.basis {
            Basis::State => DictionarySpec::State,
            Basis::Polynomial {
                family: PolyFamily::Hermite,
                max_degree,
                ..
            } => DictionarySpec::Hermite {
                max_degree: *max_degree,
            },
            Basis::Polynomial {
                family: PolyFamily::Monomial,
                max_degree,
                ..
            } => DictionarySpec::Monomial {
                max_degree: *max_degree,
            },
            Basis::Rbf { centers, bandwidth } => DictionarySpec::Rbf {
                centers: centers.clone(),
                bandwidth: *bandwidth,
            },
        }
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn n_lifted(&self) -> usize {
        self.n_lifted
    }

    /// Exponent tuple of polynomial term `i`, if this is a polynomial dictionary.
    pub fn exponents(&self, i: usize) -> Option<&[u8]> {
        match &self.basis {
            Basis::Polynomial { exponents, .. } => {
                Some(&exponents[i * self.n_state..(i + 1) * self.n_state])
            }
            _ => None,
        }
    }

    /// Evaluates the dictionary at `x` into `out` (length `n_lifted`).
    pub fn lift_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.n_state {
            return Err(Error::Dimension {
                expected: self.n_state,
                got: x.len(),
            });
        }
        if out.len() != self.n_lifted {
            return Err(Error::Dimension {
                expected: self.n_lifted,
                got: out.len(),
            });
        }
        let n = self.n_state;
        match &self.basis {
            Basis::State => out.copy_from_slice(x),
            Basis::Polynomial {
                family,
                max_degree,
                exponents,
            } => {
                let d = *max_degree;
                let mut table = vec![0.0; n * (d + 1)];
                for (i, &xi) in x.iter().enumerate() {
                    let row = &mut table[i * (d + 1)..(i + 1) * (d + 1)];
                    match family {
                        PolyFamily::Hermite => hermite_values(xi, d, row),
                        PolyFamily::Monomial => {
                            row[0] = 1.0;
                            for k in 1..=d {
                                row[k] = row[k - 1] * xi;
                            }
                        }
                    }
                }
                for (slot, term) in out.iter_mut().zip(exponents.chunks_exact(n)) {
                    *slot = term
                        .iter()
                        .enumerate()
                        .filter(|(_, &a)| a > 0)
                        .map(|(i, &a)| table[i * (d + 1) + a as usize])
                        .product();
                }
                out[..n].copy_from_slice(x);
            }
            Basis::Rbf { centers, bandwidth } => {
                out[..n].copy_from_slice(x);
                out[n] = 1.0;
                let scale = 1.0 / (2.0 * bandwidth * bandwidth);
                for (slot, c) in out[n + 1..].iter_mut().zip(centers) {
                    let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    *slot = libm::exp(-r2 * scale);
                }
            }
        }
        Ok(())
    }

    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_lifted];
        self.lift_into(x, &mut out)?;
        Ok(out)
    }

    /// Lifts every sample; column `k` is `lift(states[k])`.
    pub fn lift_trajectory(&self, traj: &Trajectory) -> Result<DMatrix<f64>> {
        if traj.dim() != self.n_state {
            return Err(Error::Dimension {
                expected: self.n_state,
                got: traj.dim(),
            });
        }
        let mut out = DMatrix::zeros(self.n_lifted, traj.len());
        let nl = self.n_lifted;
        for (k, col) in out.as_mut_slice().chunks_exact_mut(nl).enumerate() {
            self.lift_into(traj.state(k), col)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_degree_two() {
        let d = Dictionary::hermite(1, 2).unwrap();
        assert_eq!(d.n_lifted(), 3);
        assert_eq!(d.exponents(0), Some(&[1u8][..]));
        assert_eq!(d.exponents(1), Some(&[0u8][..]));
        assert_eq!(d.exponents(2), Some(&[2u8][..]));
        assert_eq!(d.lift(&[3.0]).unwrap(), vec![3.0, 1.0, 8.0]);
    }

    #[test]
    fn hermite_values_at_two() {
        let mut he = [0.0; 4];
        hermite_values(2.0, 3, &mut he);
        assert_eq!(he, [1.0, 2.0, 3.0, 2.0]);
        let d = Dictionary::hermite(1, 3).unwrap();
        assert_eq!(d.lift(&[2.0]).unwrap(), vec![2.0, 1.0, 3.0, 2.0]);
    }

    #[test]
    fn six_states_degree_three_has_84_terms() {
        assert_eq!(Dictionary::hermite(6, 3).unwrap().n_lifted(), 84);
    }

    #[test]
    fn two_states_at_origin() {
        let d = Dictionary::hermite(2, 2).unwrap();
        // x1, x2, 1, x1^2, x1 x2, x2^2
        let v = d.lift(&[0.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 1.0, -1.0, 0.0, -1.0]);
        assert_eq!(d.exponents(4), Some(&[1u8, 1][..]));
    }

    #[test]
    fn nan_propagates() {
        let d = Dictionary::hermite(2, 2).unwrap();
        let v = d.lift(&[f64::NAN, 1.0]).unwrap();
        assert!(v[0].is_nan());
        assert_eq!(v[1], 1.0);
        assert_eq!(v[2], 1.0);
        assert!(v[3].is_nan() && v[4].is_nan());
        assert_eq!(v[5], 0.0);
    }

    #[test]
    fn size_cap() {
        assert!(matches!(
            Dictionary::hermite(20, 6),
            Err(Error::Size { count: 230_230, cap: DEFAULT_SIZE_CAP })
        ));
        assert!(Dictionary::hermite_with_cap(6, 3, 83).is_err());
        assert!(Dictionary::hermite_with_cap(6, 3, 84).is_ok());
    }

    #[test]
    fn dimension_errors() {
        let d = Dictionary::hermite(2, 2).unwrap();
        assert!(matches!(d.lift(&[1.0]), Err(Error::Dimension { expected: 2, got: 1 })));
        assert!(Dictionary::hermite(0, 2).is_err());
        assert!(Dictionary::hermite(2, 0).is_err());
    }

    #[test]
    fn monomial_and_rbf() {
        let m = Dictionary::monomial(1, 3).unwrap();
        assert_eq!(m.lift(&[2.0]).unwrap(), vec![2.0, 1.0, 4.0, 8.0]);
        let r = Dictionary::rbf(2, vec![vec![0.0, 0.0], vec![1.0, 0.0]], 1.0).unwrap();
        let v = r.lift(&[1.0, 0.0]).unwrap();
        assert_eq!(&v[..3], &[1.0, 0.0, 1.0]);
        assert!((v[3] - libm::exp(-0.5)).abs() < 1e-15);
        assert_eq!(v[4], 1.0);
    }

    #[test]
    fn spec_roundtrip() {
        for spec in [
            DictionarySpec::State,
            DictionarySpec::Hermite { max_degree: 3 },
            DictionarySpec::Monomial { max_degree: 2 },
            DictionarySpec::Rbf {
                centers: vec![vec![0.5, 0.5]],
                bandwidth: 2.0,
            },
        ] {
            let d = Dictionary::from_spec(2, &spec).unwrap();
            assert_eq!(d.spec(), spec);
        }
    }
}
