//! Unnormalised DFT helpers over `rustfft`, with a per-thread plan cache.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place `X[k] = Σ x[n]·e^{−j2πkn/N}`.
pub fn forward(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// In-place `x[n] = Σ X[k]·e^{+j2πkn/N}` (no 1/N factor).
pub fn inverse(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn matches_direct_sums() {
        let x: Vec<Complex64> = (0..7).map(|i| Complex64::new(i as f64, (i * i) as f64 * 0.1)).collect();
        let mut f = x.clone();
        forward(&mut f);
        for (k, fk) in f.iter().enumerate() {
            let direct: Complex64 = x
                .iter()
                .enumerate()
                .map(|(n, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * n) as f64 / 7.0))
                .sum();
            assert!((fk - direct).norm() < 1e-10);
        }
        inverse(&mut f);
        for (a, b) in f.iter().zip(&x) {
            assert!((a / 7.0 - b).norm() < 1e-12);
        }
    }
}
