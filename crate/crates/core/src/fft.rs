//! Discrete Fourier transforms with the `e^{-i w k}` sign convention.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::linalg::Complex64;

/// In-place iterative radix-2 FFT, `X_f = sum_k x_k e^{-2 pi i f k / n}`.
///
/// # Panics
/// If the length is not a power of two.
pub fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "radix-2 FFT needs a power-of-two length");
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let half = len / 2;
        // twiddles computed directly rather than by recurrence to keep the
        // roundoff at one ulp per factor
        let tw: Vec<Complex64> = (0..half)
            .map(|k| {
                let a = ang * k as f64;
                Complex64::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * tw[k];
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// Forward DFT of `x`. Uses the FFT for power-of-two lengths and the direct
/// sum otherwise.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    if n.is_power_of_two() {
        let mut buf = x.to_vec();
        fft_in_place(&mut buf);
        return buf;
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (f, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &v) in x.iter().enumerate() {
            if v.re == 0.0 && v.im == 0.0 {
                continue;
            }
            // reduce f*k mod n first so the angle stays small
            let a = -2.0 * PI * ((f * k) % n) as f64 / n as f64;
            acc += v * Complex64::new(libm::cos(a), libm::sin(a));
        }
        *o = acc;
    }
    out
}

/// Inverse DFT, `x_k = (1/n) sum_f X_f e^{+2 pi i f k / n}`.
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let conj: Vec<Complex64> = x.iter().map(|v| v.conj()).collect();
    dft(&conj).into_iter().map(|v| v.conj() / n as f64).collect()
}

/// Angular frequency of grid index `f` on an `n`-point grid, mapped into `(-pi, pi]`.
pub fn grid_omega(f: usize, n: usize) -> f64 {
    if 2 * f <= n {
        2.0 * PI * f as f64 / n as f64
    } else {
        -2.0 * PI * (n - f) as f64 / n as f64
    }
}
