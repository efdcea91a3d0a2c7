//! Square-root Nyquist pulse `a(t)`, the ODDM pulse train `u(t)` and its
//! CP-extended form `u_cp(t)`, and numerical cross-ambiguity evaluation.
//!
//! All pulses are real and sampled on the emulation grid of rate `O·M/T`.
//! Integrals are evaluated with the trapezoidal rule; since every pulse
//! vanishes at the ends of its stored span, this equals `Δt·Σ`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{PulseDesign, SimConfig};
use crate::error::{Error, Result};

/// Square-root raised cosine, unit energy over the whole real line.
///
/// The removable singularities at `t = 0` and `|t| = Tsym/(4β)` are replaced
/// by their analytic limits.
pub fn srrc(t: f64, rolloff: f64, tsym: f64) -> f64 {
    let x = (t / tsym).abs();
    let b = rolloff;
    let scale = 1.0 / tsym.sqrt();
    if x < 1e-12 {
        return scale * (1.0 - b + 4.0 * b / PI);
    }
    if b > 0.0 && (x - 1.0 / (4.0 * b)).abs() < 1e-9 {
        let arg = PI / (4.0 * b);
        return scale * b / 2f64.sqrt()
            * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * x * (1.0 - b)).sin() + 4.0 * b * x * (PI * x * (1.0 + b)).cos();
    let den = PI * x * (1.0 - (4.0 * b * x).powi(2));
    scale * num / den
}

/// Real pulse sampled at `rate`; tap `i` sits at `t0 + i/rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPulse {
    pub taps: Vec<f64>,
    pub rate: f64,
    pub t0: f64,
    pub energy: f64,
}

impl SampledPulse {
    fn new(taps: Vec<f64>, rate: f64, t0: f64) -> Self {
        let energy = taps.iter().map(|v| v * v).sum::<f64>() / rate;
        SampledPulse {
            taps,
            rate,
            t0,
            energy,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.rate
    }

    /// Pulse value at signed grid offset `i` from `t0`, zero outside.
    pub fn at(&self, i: i64) -> f64 {
        if i < 0 || i as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[i as usize]
        }
    }

    /// Time span covered by the nonzero taps (first, last), in seconds.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.taps.iter().position(|v| *v != 0.0)?;
        let last = self.taps.iter().rposition(|v| *v != 0.0)?;
        Some((self.time(first), self.time(last)))
    }
}

/// Autocorrelation `Δt·Σ f[j]·f[j+lag]` of a tap vector.
fn autocorr(taps: &[f64], lag: usize, dt: f64) -> f64 {
    if lag >= taps.len() {
        return 0.0;
    }
    dt * taps[..taps.len() - lag]
        .iter()
        .zip(&taps[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
}

/// Largest normalised autocorrelation at nonzero multiples of `step` grid
/// samples: `max_{q≠0} |R(q·step)| / R(0)`.
pub fn nyquist_isi(p: &SampledPulse, step: usize) -> f64 {
    let r0 = autocorr(&p.taps, 0, p.dt());
    (1..)
        .map(|q| q * step)
        .take_while(|&lag| lag < p.taps.len())
        .map(|lag| autocorr(&p.taps, lag, p.dt()).abs() / r0)
        .fold(0.0, f64::max)
}

/// Symmetric taps from half taps (`half[0]` is the centre).
fn mirror(half: &[f64]) -> Vec<f64> {
    half.iter().skip(1).rev().chain(half.iter()).copied().collect()
}

/// Gram matrix of the symmetric tap basis (a centre tap, or a pair at ±k)
/// over the stop band `edge < |f| < step/2`, frequencies in units of the
/// symbol rate. Penalising it keeps corrections out of the stop band.
fn stopband_gram(len: usize, step: usize, edge: f64) -> DMatrix<f64> {
    let o = step as f64;
    // ∫_{edge}^{o/2} cos(2π f d / o) df for integer d
    let cos_int = |d: i64| -> f64 {
        if d == 0 {
            o / 2.0 - edge
        } else {
            let d = d as f64;
            -o / (2.0 * PI * d) * (2.0 * PI * edge * d / o).sin()
        }
    };
    DMatrix::from_fn(len, len, |k, j| {
        let (k, j) = (k as i64, j as i64);
        // basis b_k(f) = 2cos(2πfk/o) for k > 0, 1 for k = 0; both sidebands
        let scale = if k == 0 && j == 0 { 1.0 } else { 2.0 };
        let body = if k == 0 || j == 0 {
            cos_int(k.max(j))
        } else {
            cos_int(k - j) + cos_int(k + j)
        };
        2.0 * scale * body
    })
}

/// Gauss–Newton correction of symmetric taps so that the sampled
/// autocorrelation equals `δ(q)` at lags `q·step`. Each step is the one of
/// least stop-band energy (above `edge`) meeting the linearised
/// constraints, with a small plain-norm term for definiteness.
///
/// Works in units where the symbol interval is one grid step times `step`,
/// `dt = 1/step`, and unit target energy.
fn nyquist_correct(half: &mut [f64], step: usize, edge: f64) -> Result<()> {
    let dt = 1.0 / step as f64;
    let len = 2 * half.len() - 1;
    let lags: Vec<usize> = (0..).map(|q| q * step).take_while(|&lag| lag < len).collect();
    let centre = half.len() - 1;
    let weights = DVector::from_iterator(half.len(), (0..half.len()).map(|k| if k == 0 { 1.0 } else { 2.0 }));
    let mut w = stopband_gram(half.len(), step, edge);
    let ridge = 1e-6 * w.diagonal().max();
    for (k, wk) in weights.iter().enumerate() {
        w[(k, k)] += ridge * wk;
    }
    let metric = w.lu();

    for _ in 0..100 {
        let full = mirror(half);
        let resid: Vec<f64> = lags
            .iter()
            .map(|&lag| autocorr(&full, lag, dt) - if lag == 0 { 1.0 } else { 0.0 })
            .collect();
        let worst = resid.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        if worst < 1e-14 {
            return Ok(());
        }
        // J[r, k] = ∂R(lag_r)/∂half[k]
        let mut jac = DMatrix::<f64>::zeros(lags.len(), half.len());
        for (r, &lag) in lags.iter().enumerate() {
            for j in 0..len {
                let fj = |i: i64| -> f64 {
                    if i < 0 || i as usize >= len {
                        0.0
                    } else {
                        full[i as usize]
                    }
                };
                let d = dt * (fj(j as i64 + lag as i64) + fj(j as i64 - lag as i64));
                let k = (j as i64 - centre as i64).unsigned_abs() as usize;
                jac[(r, k)] += d;
            }
        }
        // W⁻¹Jᵀ, then the constrained step W⁻¹Jᵀ(JW⁻¹Jᵀ)⁻¹r
        let winv_jt = metric
            .solve(&jac.transpose())
            .ok_or_else(|| Error::PulseDesign("singular correction metric".into()))?;
        let gram = &jac * &winv_jt;
        let rhs = DVector::from_vec(resid);
        let lambda = gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::PulseDesign("singular Nyquist constraint system".into()))?;
        let step_vec = winv_jt * lambda;
        for (h, d) in half.iter_mut().zip(step_vec.iter()) {
            *h -= d;
        }
    }
    Err(Error::PulseDesign(format!(
        "Nyquist correction did not converge (oversampling {step} too small?)"
    )))
}

/// Builds `a(t)` with the design selected in `cfg`.
pub fn build_a(cfg: &SimConfig) -> Result<SampledPulse> {
    build_a_with(cfg, cfg.pulse_design)
}

/// Square-root Nyquist pulse for interval T/M, supported on the open
/// interval (−Q·T/M, Q·T/M), time-symmetric, with energy 1/N.
pub fn build_a_with(cfg: &SimConfig, design: PulseDesign) -> Result<SampledPulse> {
    let o = cfg.oversampling;
    let ts = cfg.delay_resolution();
    let span = cfg.q * o;
    // design in units of Ts, i.e. grid step 1/O
    let mut half: Vec<f64> = (0..span)
        .map(|k| srrc(k as f64 / o as f64, cfg.rolloff, 1.0))
        .collect();
    let e: f64 = mirror(&half).iter().map(|v| v * v).sum::<f64>() / o as f64;
    for v in &mut half {
        *v /= e.sqrt();
    }
    if design == PulseDesign::NyquistCorrected {
        nyquist_correct(&mut half, o, (1.0 + cfg.rolloff) / 2.0)?;
    }
    let scale = 1.0 / (ts * cfg.n as f64).sqrt();
    let taps: Vec<f64> = mirror(&half).into_iter().map(|v| v * scale).collect();
    let rate = cfg.sample_rate();
    let t0 = -((span - 1) as f64) / rate;
    Ok(SampledPulse::new(taps, rate, t0))
}

fn pulse_train(a: &SampledPulse, cfg: &SimConfig, first: i64, count: usize) -> SampledPulse {
    let period = cfg.m * cfg.oversampling;
    let len = (count - 1) * period + a.taps.len();
    let mut taps = vec![0.0; len];
    for c in 0..count {
        for (i, v) in a.taps.iter().enumerate() {
            taps[c * period + i] += v;
        }
    }
    let t0 = a.t0 + first as f64 * cfg.t_symbol();
    SampledPulse::new(taps, a.rate, t0)
}

/// `u(t) = Σ_{ṅ=0}^{N−1} a(t − ṅT)`.
pub fn build_u(cfg: &SimConfig) -> Result<SampledPulse> {
    let a = build_a(cfg)?;
    Ok(build_u_from(&a, cfg))
}

pub fn build_u_from(a: &SampledPulse, cfg: &SimConfig) -> SampledPulse {
    pulse_train(a, cfg, 0, cfg.n)
}

/// `u_cp(t) = Σ_{ṅ=−1}^{N−1} a(t − ṅT)`.
pub fn build_u_cp(cfg: &SimConfig) -> Result<SampledPulse> {
    let a = build_a(cfg)?;
    Ok(build_u_cp_from(&a, cfg))
}

pub fn build_u_cp_from(a: &SampledPulse, cfg: &SimConfig) -> SampledPulse {
    pulse_train(a, cfg, -1, cfg.n + 1)
}

/// Offset in grid samples between the `t0` of two pulses on the same grid.
fn grid_offset(g1: &SampledPulse, g2: &SampledPulse) -> Result<i64> {
    if (g1.rate - g2.rate).abs() > 1e-9 * g1.rate {
        return Err(Error::InvalidValue {
            key: "rate".into(),
            reason: "pulses sampled at different rates".into(),
        });
    }
    let x = (g1.t0 - g2.t0) * g1.rate;
    let r = x.round();
    if (x - r).abs() > 1e-6 {
        return Err(Error::OffGrid(g1.t0 - g2.t0));
    }
    Ok(r as i64)
}

/// Cross-ambiguity `A(τ,ν) = ∫ g1(t)·g2(t−τ)·e^{−j2πν(t−τ)} dt`.
///
/// `τ` must be an integer number of grid steps.
pub fn ambiguity(g1: &SampledPulse, g2: &SampledPulse, tau: f64, nu: f64) -> Result<Complex64> {
    let base = grid_offset(g1, g2)?;
    let x = tau * g1.rate;
    let shift = x.round();
    if (x - shift).abs() > 1e-6 {
        return Err(Error::OffGrid(tau));
    }
    let shift = shift as i64;
    let dt = g1.dt();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &v1) in g1.taps.iter().enumerate() {
        if v1 == 0.0 {
            continue;
        }
        let v2 = g2.at(i as i64 + base - shift);
        if v2 == 0.0 {
            continue;
        }
        let t = g1.time(i) - tau;
        acc += Complex64::from_polar(v1 * v2, -2.0 * PI * nu * t);
    }
    Ok(acc * dt)
}

/// Full-grid scan of `|A_{u,u}(m·T/M, n/(NT))|`.
#[derive(Debug, Clone)]
pub struct AmbiguityReport {
    pub m_max: i64,
    pub n_max: i64,
    /// Boundary between the interior and near-boundary delay regions, M−2Q.
    pub interior_limit: i64,
    /// `(m, n, A)` for every grid point, m-major.
    pub values: Vec<(i64, i64, Complex64)>,
    pub origin: Complex64,
    pub max_off_origin: f64,
    pub argmax: (i64, i64),
    /// Largest off-origin magnitude on the n = 0 row.
    pub max_zero_doppler: f64,
    /// Largest off-origin magnitude for |m| ≤ M−2Q.
    pub max_interior: f64,
    /// Largest magnitude for |m| > M−2Q.
    pub max_boundary: f64,
    pub tol: f64,
    /// Off-origin points with |A| > tol.
    pub violations: Vec<(i64, i64, f64)>,
}

impl AmbiguityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,n,abs_A,re_A,im_A\n");
        for &(m, n, a) in &self.values {
            let _ = writeln!(out, "{},{},{:.6e},{:.6e},{:.6e}", m, n, a.norm(), a.re, a.im);
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "origin={:.9} max_off_origin={:.3e} at (m={}, n={}) zero_doppler_row={:.3e} interior={:.3e} boundary={:.3e} tol={:.1e} violations={} {}",
            self.origin.norm(),
            self.max_off_origin,
            self.argmax.0,
            self.argmax.1,
            self.max_zero_doppler,
            self.max_interior,
            self.max_boundary,
            self.tol,
            self.violations.len(),
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Evaluates `A_{u,u}` on the grid |m| ≤ M−1, |n| ≤ N−1 and flags every
/// off-origin magnitude above `tol`.
pub fn verify_orthogonality(cfg: &SimConfig, tol: f64) -> Result<AmbiguityReport> {
    let a = build_a(cfg)?;
    let u = build_u_from(&a, cfg);
    Ok(scan_ambiguity(&u, cfg, tol))
}

pub fn scan_ambiguity(u: &SampledPulse, cfg: &SimConfig, tol: f64) -> AmbiguityReport {
    let m_max = cfg.m as i64 - 1;
    let n_max = cfg.n as i64 - 1;
    let o = cfg.oversampling as i64;
    let ts = cfg.delay_resolution();
    let nt = cfg.frame_span();
    let dt = u.dt();

    let rows: Vec<Vec<(i64, i64, Complex64)>> = (-m_max..=m_max)
        .into_par_iter()
        .map(|m| {
            let shift = m * o;
            // nonzero products u(t)·u(t − m·T/M) and their (t − m·T/M)
            let prods: Vec<(f64, f64)> = u
                .taps
                .iter()
                .enumerate()
                .filter_map(|(i, &v)| {
                    if v == 0.0 {
                        return None;
                    }
                    let w = u.at(i as i64 - shift);
                    (w != 0.0).then(|| (v * w, u.time(i) - m as f64 * ts))
                })
                .collect();
            (-n_max..=n_max)
                .map(|n| {
                    let nu = n as f64 / nt;
                    let acc: Complex64 = prods
                        .iter()
                        .map(|&(p, t)| Complex64::from_polar(p, -2.0 * PI * nu * t))
                        .sum();
                    (m, n, acc * dt)
                })
                .collect()
        })
        .collect();
    let values: Vec<(i64, i64, Complex64)> = rows.into_iter().flatten().collect();

    let interior_limit = cfg.m as i64 - 2 * cfg.q as i64;
    let mut origin = Complex64::new(0.0, 0.0);
    let mut max_off_origin = 0.0;
    let mut argmax = (0, 0);
    let mut max_zero_doppler = 0.0f64;
    let mut max_interior = 0.0f64;
    let mut max_boundary = 0.0f64;
    let mut violations = Vec::new();
    for &(m, n, v) in &values {
        if m == 0 && n == 0 {
            origin = v;
            continue;
        }
        let mag = v.norm();
        if mag > max_off_origin {
            max_off_origin = mag;
            argmax = (m, n);
        }
        if n == 0 {
            max_zero_doppler = max_zero_doppler.max(mag);
        }
        if m.abs() <= interior_limit {
            max_interior = max_interior.max(mag);
        } else {
            max_boundary = max_boundary.max(mag);
        }
        if mag > tol {
            violations.push((m, n, mag));
        }
    }
    AmbiguityReport {
        m_max,
        n_max,
        interior_limit,
        values,
        origin,
        max_off_origin,
        argmax,
        max_zero_doppler,
        max_interior,
        max_boundary,
        tol,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn cfg(m: usize, n: usize, q: usize, o: usize, design: PulseDesign) -> SimConfig {
        SimConfig::new(m, n, 15e3, q, 0.1, 2, 1, o, 0)
            .unwrap()
            .with_pulse_design(design)
    }

    /// Independent oracle: direct O(n²) self-convolution of the raw SRRC
    /// sampled at O=16 and truncated to ±Q symbols.
    fn srrc_isi_oracle(q: usize, qmax: usize) -> f64 {
        let o = 16usize;
        let taps: Vec<f64> = (-(q as i64 * o as i64 - 1)..q as i64 * o as i64)
            .map(|j| srrc(j as f64 / o as f64, 0.1, 1.0))
            .collect();
        let conv = |lag: usize| -> f64 {
            let mut s = 0.0;
            for i in 0..taps.len() {
                if i + lag < taps.len() {
                    s += taps[i] * taps[i + lag];
                }
            }
            s
        };
        let r0 = conv(0);
        (1..=qmax).map(|k| conv(k * o).abs() / r0).fold(0.0, f64::max)
    }

    #[test]
    fn srrc_limits_and_symmetry() {
        let b = 0.1;
        let ts = 2.5e-6;
        let v0 = srrc(0.0, b, ts);
        assert!((v0 - (1.0 - b + 4.0 * b / PI) / ts.sqrt()).abs() < 1e-12 / ts.sqrt());
        // the singular point is continuous with its neighbourhood
        let ts4 = ts / (4.0 * b);
        let near = srrc(ts4 * (1.0 + 1e-6), b, ts);
        assert!((srrc(ts4, b, ts) - near).abs() < 1e-4 * v0);
        let mut rng = stream(3, "srrc", 0);
        for _ in 0..100 {
            let t = rng.gen_range(-20.0..20.0) * ts;
            assert_eq!(srrc(t, b, ts), srrc(-t, b, ts));
        }
        // β = 0 is a sinc
        assert!((srrc(0.5, 0.0, 1.0) - (PI * 0.5).sin() / (PI * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn truncated_srrc_self_convolution_is_nearly_nyquist_at_q20() {
        // oracle values frozen from the direct convolution above
        let isi = srrc_isi_oracle(20, 5);
        assert!(isi <= 1e-3, "{isi}");
        let c = cfg(64, 4, 20, 16, PulseDesign::Truncated);
        let a = build_a(&c).unwrap();
        let ours = nyquist_isi(&a, 16);
        assert!(ours <= 1e-3, "{ours}");
        assert!((ours - srrc_isi_oracle(20, 39)).abs() < 1e-12);
    }

    #[test]
    fn a_energy_support_and_symmetry() {
        for design in [PulseDesign::Truncated, PulseDesign::NyquistCorrected] {
            let c = cfg(64, 16, 8, 16, design);
            let a = build_a(&c).unwrap();
            assert!((a.energy - 1.0 / 16.0).abs() < 1e-9, "{design:?}");
            let ts = c.delay_resolution();
            let (lo, hi) = a.support().unwrap();
            assert!(lo > -8.0 * ts && hi < 8.0 * ts);
            assert_eq!(a.taps.len(), 2 * 8 * 16 - 1);
            let n = a.taps.len();
            for i in 0..n {
                assert!((a.taps[i] - a.taps[n - 1 - i]).abs() <= 1e-12 * a.taps[n / 2].abs());
            }
        }
    }

    #[test]
    fn corrected_pulse_is_nyquist_and_close_to_srrc() {
        let tr = build_a(&cfg(64, 16, 8, 16, PulseDesign::Truncated)).unwrap();
        let co = build_a(&cfg(64, 16, 8, 16, PulseDesign::NyquistCorrected)).unwrap();
        assert!(nyquist_isi(&tr, 16) > 1e-2);
        assert!(nyquist_isi(&co, 16) < 1e-12);
        let diff: f64 = tr.taps.iter().zip(&co.taps).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = tr.taps.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / norm < 0.15, "{}", diff / norm);
        // works at the link-level grid too
        let co4 = build_a(&cfg(64, 16, 8, 4, PulseDesign::NyquistCorrected)).unwrap();
        assert!(nyquist_isi(&co4, 4) < 1e-12);
    }

    #[test]
    fn truncation_residual_shrinks_with_q() {
        let r: Vec<f64> = [8, 16, 24]
            .iter()
            .map(|&q| nyquist_isi(&build_a(&cfg(64, 4, q, 16, PulseDesign::Truncated)).unwrap(), 16))
            .collect();
        assert!(r[0] >= r[1] && r[1] >= r[2], "{r:?}");
    }

    #[test]
    fn u_is_n_disjoint_bursts_with_unit_energy() {
        let c = cfg(64, 16, 8, 16, PulseDesign::NyquistCorrected);
        let u = build_u(&c).unwrap();
        assert!((u.energy - 1.0).abs() < 1e-6);
        // count bursts of nonzero taps
        let mut bursts = 0;
        let mut inside = false;
        let mut width = 0usize;
        for &v in &u.taps {
            if v != 0.0 && !inside {
                bursts += 1;
                inside = true;
                width = 0;
            }
            if inside {
                if v == 0.0 {
                    inside = false;
                    assert!(width <= 2 * 8 * 16);
                } else {
                    width += 1;
                }
            }
        }
        assert_eq!(bursts, 16);
    }

    #[test]
    fn u_cp_matches_u_on_the_frame() {
        let c = cfg(32, 4, 4, 8, PulseDesign::NyquistCorrected);
        let a = build_a(&c).unwrap();
        let u = build_u_from(&a, &c);
        let ucp = build_u_cp_from(&a, &c);
        let off = ((u.t0 - ucp.t0) * u.rate).round() as i64;
        let ts = c.delay_resolution();
        let lo = -(c.q as f64) * ts;
        let hi = (c.n - 1) as f64 * c.t_symbol() + c.q as f64 * ts;
        for i in 0..u.taps.len() {
            let t = u.time(i);
            if t > lo && t < hi {
                assert_eq!(u.taps[i], ucp.at(i as i64 + off));
            }
        }
        // and u_cp vanishes between the CP burst and the first burst
        for i in 0..ucp.taps.len() {
            let t = ucp.time(i);
            if t > -c.t_symbol() + c.q as f64 * ts && t < lo {
                assert_eq!(ucp.taps[i], 0.0);
            }
        }
    }

    #[test]
    fn ambiguity_origin_and_off_grid_error() {
        let c = cfg(64, 16, 8, 16, PulseDesign::NyquistCorrected);
        let u = build_u(&c).unwrap();
        let a0 = ambiguity(&u, &u, 0.0, 0.0).unwrap();
        assert!((a0.re - 1.0).abs() < 1e-6 && a0.im.abs() < 1e-12);
        let half_step = 0.5 / c.sample_rate();
        assert!(matches!(ambiguity(&u, &u, half_step, 0.0), Err(Error::OffGrid(_))));
    }

    #[test]
    fn a_is_orthogonal_to_its_delay_shift() {
        let c = cfg(64, 16, 20, 16, PulseDesign::Truncated);
        let a = build_a(&c).unwrap();
        let v = ambiguity(&a, &a, c.delay_resolution(), 0.0).unwrap();
        assert!(v.norm() <= 1e-3 / 16.0, "{}", v.norm());
    }

    #[test]
    fn scan_agrees_with_pointwise_ambiguity() {
        let c = cfg(32, 4, 4, 8, PulseDesign::NyquistCorrected);
        let a = build_a(&c).unwrap();
        let u = build_u_from(&a, &c);
        let rep = scan_ambiguity(&u, &c, 1e-2);
        for &(m, n, v) in rep.values.iter().step_by(7) {
            let direct = ambiguity(&u, &u, m as f64 * c.delay_resolution(), n as f64 / c.frame_span()).unwrap();
            assert!((v - direct).norm() < 1e-12, "m={m} n={n}");
        }
    }

    #[test]
    fn burst_separation_zeroes_the_product() {
        let c = cfg(64, 8, 8, 8, PulseDesign::NyquistCorrected);
        let u = build_u(&c).unwrap();
        let o = c.oversampling as i64;
        for m in (2 * c.q as i64)..=(c.m as i64 - 2 * c.q as i64) {
            for s in [m, -m] {
                for i in 0..u.taps.len() {
                    assert_eq!(u.taps[i] * u.at(i as i64 - s * o), 0.0, "m={s}");
                }
            }
        }
    }

    #[test]
    fn near_boundary_residual_dominates_and_shrinks_with_m() {
        let small = verify_orthogonality(&cfg(32, 8, 4, 8, PulseDesign::NyquistCorrected), 1e-2).unwrap();
        let large = verify_orthogonality(&cfg(64, 8, 4, 8, PulseDesign::NyquistCorrected), 1e-2).unwrap();
        assert!(small.max_boundary > small.max_interior);
        assert!(large.max_boundary > large.max_interior);
        assert!(large.max_boundary < small.max_boundary);
        assert!(large.max_interior <= small.max_interior.max(1e-14));
    }

    #[test]
    fn report_csv_has_the_documented_columns() {
        let rep = verify_orthogonality(&cfg(16, 4, 2, 4, PulseDesign::NyquistCorrected), 1e-2).unwrap();
        let csv = rep.to_csv();
        assert!(csv.starts_with("m,n,abs_A,re_A,im_A\n"));
        assert_eq!(csv.lines().count(), 1 + 31 * 7);
    }
}
