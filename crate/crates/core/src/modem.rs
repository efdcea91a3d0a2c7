//! ODDM and OTFS modulators and demodulators.
//!
//! Both schemes share the same digital core: a row-wise unnormalised N-point
//! IDFT of the DD frame, read out delay-first so that sample `m + ṅ·M` holds
//! `x[m,ṅ]`. ODDM then shapes each sample with `a(t)` (sample-wise pulse
//! shaping); OTFS uses a rectangular time-frequency pulse.
//!
//! Time is referenced to the first non-CP sample at `t = 0`; the frame CP
//! occupies `[−(L−1)·T/M, 0)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::config::SimConfig;
use crate::dft;
use crate::error::{Error, Result};
use crate::frame::DDFrame;
use crate::pulse::{build_a, build_u_from, SampledPulse};
use crate::waveform::SampledWaveform;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `x[m,ṅ] = Σ_n X[m,n]·e^{j2πṅn/N}` for every delay row `m`.
pub fn oddm_time_samples(x: &DDFrame) -> Vec<Vec<Complex64>> {
    (0..x.m())
        .map(|m| {
            let mut row = x.row(m).to_vec();
            dft::inverse(&mut row);
            row
        })
        .collect()
}

/// Interleaves M rows of N samples into one sequence, `out[m + ṅ·M] = rows[m][ṅ]`.
pub fn oddm_stagger(rows: &[Vec<Complex64>]) -> Vec<Complex64> {
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    let mut out = vec![ZERO; m * n];
    for (mi, row) in rows.iter().enumerate() {
        for (ni, v) in row.iter().enumerate() {
            out[mi + ni * m] = *v;
        }
    }
    out
}

/// Inverse of [`oddm_stagger`].
pub fn oddm_destagger(seq: &[Complex64], m: usize, n: usize) -> Result<Vec<Vec<Complex64>>> {
    if seq.len() != m * n {
        return Err(Error::LengthMismatch {
            expected: m * n,
            actual: seq.len(),
        });
    }
    Ok((0..m)
        .map(|mi| (0..n).map(|ni| seq[mi + ni * m]).collect())
        .collect())
}

/// The MN-sample digital sequence shared by ODDM and OTFS.
pub fn digital_sequence(x: &DDFrame) -> Vec<Complex64> {
    oddm_stagger(&oddm_time_samples(x))
}

/// Row-wise N-point DFT of destaggered samples, i.e. the inverse of
/// [`digital_sequence`] up to the factor N.
fn rows_dft(seq: &[Complex64], m: usize, n: usize) -> Result<DDFrame> {
    let rows = oddm_destagger(seq, m, n)?;
    let mut data = Vec::with_capacity(m * n);
    for mut row in rows {
        dft::forward(&mut row);
        data.extend(row);
    }
    DDFrame::from_vec(m, n, data)
}

/// Prepends the last `cp` samples.
pub fn add_cp(seq: &[Complex64], cp: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(seq.len() + cp);
    out.extend_from_slice(&seq[seq.len() - cp..]);
    out.extend_from_slice(seq);
    out
}

fn check_frame(x: &DDFrame, cfg: &SimConfig) -> Result<()> {
    if x.m() != cfg.m || x.n() != cfg.n {
        return Err(Error::LengthMismatch {
            expected: cfg.frame_len(),
            actual: x.m() * x.n(),
        });
    }
    Ok(())
}

/// Checks `y` lies on the grid of `rate` and covers `[0, span_end]`; returns
/// the signed index of `t = 0` in `y`.
fn locate_frame(y: &SampledWaveform, rate: f64, span_end: f64, what: &str) -> Result<i64> {
    if (y.rate - rate).abs() > 1e-9 * rate {
        return Err(Error::InvalidValue {
            key: "rate".into(),
            reason: format!("{what} expects {rate} samples/s, got {}", y.rate),
        });
    }
    let zero = y.index_of(0.0)?;
    let eps = 0.5 / rate;
    if y.t0 > eps || y.t_end() < span_end - eps {
        return Err(Error::WaveformTooShort(format!(
            "{what}: waveform covers [{:.3e}, {:.3e}) s, frame needs [0, {:.3e}] s",
            y.t0,
            y.t_end(),
            span_end
        )));
    }
    Ok(zero)
}

/// ODDM transmitter/receiver pair on the emulation grid of rate O·M/T.
#[derive(Debug, Clone)]
pub struct OddmModem {
    pub cfg: SimConfig,
    pub a: SampledPulse,
}

impl OddmModem {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        Ok(OddmModem {
            cfg: cfg.clone(),
            a: build_a(cfg)?,
        })
    }

    pub fn with_pulse(cfg: &SimConfig, a: SampledPulse) -> Self {
        OddmModem { cfg: cfg.clone(), a }
    }

    /// Filters a symbol-rate sequence whose first entry sits at
    /// `first·T/M` by `a`, on the oversampled grid.
    fn shape(&self, seq: &[Complex64], first: i64) -> SampledWaveform {
        let o = self.cfg.oversampling;
        let half = (self.a.taps.len() - 1) / 2;
        let len = (seq.len() - 1) * o + self.a.taps.len();
        let mut out = vec![ZERO; len];
        for (i, s) in seq.iter().enumerate() {
            if *s == ZERO {
                continue;
            }
            let base = i * o;
            for (k, tap) in self.a.taps.iter().enumerate() {
                out[base + k] += s * tap;
            }
        }
        let rate = self.cfg.sample_rate();
        let t0 = first as f64 * self.cfg.delay_resolution() - half as f64 / rate;
        SampledWaveform::new(out, rate, t0)
    }

    /// CP-free frame `Σ_i s[i]·a(t − i·T/M)`.
    pub fn modulate_body(&self, x: &DDFrame) -> Result<SampledWaveform> {
        check_frame(x, &self.cfg)?;
        Ok(self.shape(&digital_sequence(x), 0))
    }

    /// Frame with an (L−1)-sample cyclic prefix copied at symbol level
    /// before pulse shaping.
    pub fn modulate(&self, x: &DDFrame) -> Result<SampledWaveform> {
        check_frame(x, &self.cfg)?;
        let cp = self.cfg.cp_len();
        let seq = add_cp(&digital_sequence(x), cp);
        Ok(self.shape(&seq, -(cp as i64)))
    }

    /// Matched filter by `a`, sampling at `(m + ṅM)·T/M`, then a row-wise
    /// N-point DFT. Samples outside the stored span count as zero.
    pub fn demodulate(&self, y: &SampledWaveform) -> Result<DDFrame> {
        let cfg = &self.cfg;
        let o = cfg.oversampling as i64;
        let mn = cfg.frame_len();
        let span_end = (mn - 1) as f64 * cfg.delay_resolution();
        let zero = locate_frame(y, cfg.sample_rate(), span_end, "ODDM demodulator")?;
        let half = ((self.a.taps.len() - 1) / 2) as i64;
        let dt = self.a.dt();
        let mf: Vec<Complex64> = (0..mn as i64)
            .map(|i| {
                let centre = zero + i * o;
                let mut acc = ZERO;
                for (k, tap) in self.a.taps.iter().enumerate() {
                    acc += y.at(centre + k as i64 - half) * tap;
                }
                acc * dt
            })
            .collect();
        rows_dft(&mf, cfg.m, cfg.n)
    }

    /// Direct pulse-shaped OFDM form
    /// `Σ_{m,n} X[m,n]·u(t − mT/M)·e^{j2πn(t − mT/M)/(NT)}` on the same grid
    /// and span as [`OddmModem::modulate_body`].
    pub fn ps_ofdm_reference(&self, x: &DDFrame) -> Result<SampledWaveform> {
        check_frame(x, &self.cfg)?;
        let cfg = &self.cfg;
        let u = build_u_from(&self.a, cfg);
        let o = cfg.oversampling;
        let body = self.shape(&vec![ZERO; cfg.frame_len()], 0);
        let mut out = vec![ZERO; body.len()];
        let nt = cfg.frame_span();
        let ts = cfg.delay_resolution();
        // u starts at the same offset relative to its first burst as the body
        for m in 0..cfg.m {
            let shift = m * o;
            for (j, &uv) in u.taps.iter().enumerate() {
                if uv == 0.0 {
                    continue;
                }
                let idx = shift + j;
                if idx >= out.len() {
                    continue;
                }
                let t_rel = u.time(j);
                let mut acc = ZERO;
                for n in 0..cfg.n {
                    let xv = x.get(m, n);
                    if xv != ZERO {
                        acc += xv * Complex64::from_polar(1.0, 2.0 * PI * n as f64 * t_rel / nt);
                    }
                }
                out[idx] += acc * uv;
            }
        }
        debug_assert!((body.t0 - u.t0).abs() < 1e-3 * ts);
        Ok(SampledWaveform::new(out, body.rate, body.t0))
    }
}

/// `X_tf[m̀,ǹ] = (1/√MN)·Σ X[m,n]·e^{j2π(nǹ/N − m m̀/M)}`, returned as an
/// M×N frame indexed (subcarrier m̀, slot ǹ).
pub fn isfft(x: &DDFrame) -> DDFrame {
    let (m, n) = (x.m(), x.n());
    let scale = 1.0 / ((m * n) as f64).sqrt();
    two_d(x, |col| dft::forward(col), |row| dft::inverse(row), scale)
}

/// Inverse of [`isfft`].
pub fn sfft(x: &DDFrame) -> DDFrame {
    let (m, n) = (x.m(), x.n());
    let scale = 1.0 / ((m * n) as f64).sqrt();
    two_d(x, |col| dft::inverse(col), |row| dft::forward(row), scale)
}

fn two_d(
    x: &DDFrame,
    along_m: impl Fn(&mut [Complex64]),
    along_n: impl Fn(&mut [Complex64]),
    scale: f64,
) -> DDFrame {
    let (m, n) = (x.m(), x.n());
    let mut out = x.clone();
    for mi in 0..m {
        along_n(out.row_mut(mi));
    }
    let mut col = vec![ZERO; m];
    for ni in 0..n {
        for mi in 0..m {
            col[mi] = out.get(mi, ni);
        }
        along_m(&mut col);
        for mi in 0..m {
            out.set(mi, ni, col[mi] * scale);
        }
    }
    out
}

/// Heisenberg transform of a TF frame with the rectangular pulse
/// `g(t) = 1/√T` on `[0, T)`, sampled at `t = (m + ṅM)·T/M`.
pub fn heisenberg(tf: &DDFrame, cfg: &SimConfig) -> Vec<Complex64> {
    let scale = 1.0 / cfg.t_symbol().sqrt();
    let mut out = vec![ZERO; cfg.frame_len()];
    let mut col = vec![ZERO; cfg.m];
    for ni in 0..cfg.n {
        for mi in 0..cfg.m {
            col[mi] = tf.get(mi, ni);
        }
        dft::inverse(&mut col);
        for mi in 0..cfg.m {
            out[mi + ni * cfg.m] = col[mi] * scale;
        }
    }
    out
}

/// Samples of the CAF between `y` and the rectangular receive pulse on the
/// TF grid, by a rectangle-rule integral at rate M/T.
pub fn wigner(y: &[Complex64], cfg: &SimConfig) -> DDFrame {
    let scale = cfg.delay_resolution() / cfg.t_symbol().sqrt();
    let mut tf = DDFrame::zeros(cfg.m, cfg.n);
    let mut col = vec![ZERO; cfg.m];
    for ni in 0..cfg.n {
        col.copy_from_slice(&y[ni * cfg.m..(ni + 1) * cfg.m]);
        dft::forward(&mut col);
        for mi in 0..cfg.m {
            tf.set(mi, ni, col[mi] * scale);
        }
    }
    tf
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// OTFS transmitter/receiver with a rectangular TF pulse.
#[derive(Debug, Clone)]
pub struct OtfsModem {
    pub cfg: SimConfig,
    /// Sinc interpolator half-length in zero crossings for the oversampled
    /// waveform.
    pub sinc_zero_crossings: usize,
    /// Whether the link waveform carries a frame CP.
    pub cp: bool,
}

impl OtfsModem {
    pub fn new(cfg: &SimConfig) -> Self {
        OtfsModem {
            cfg: cfg.clone(),
            sinc_zero_crossings: 50,
            cp: true,
        }
    }

    pub fn without_cp(mut self) -> Self {
        self.cp = false;
        self
    }

    /// Symbol-rate samples of the frame body, ISFFT then Heisenberg.
    pub fn digital_samples(&self, x: &DDFrame) -> Result<Vec<Complex64>> {
        check_frame(x, &self.cfg)?;
        Ok(heisenberg(&isfft(x), &self.cfg))
    }

    /// Symbol-rate waveform (rate M/T) with the frame CP when enabled.
    pub fn modulate(&self, x: &DDFrame) -> Result<SampledWaveform> {
        let body = self.digital_samples(x)?;
        let cp = if self.cp { self.cfg.cp_len() } else { 0 };
        let ts = self.cfg.delay_resolution();
        Ok(SampledWaveform::new(
            add_cp(&body, cp),
            self.cfg.symbol_rate(),
            -(cp as f64) * ts,
        ))
    }

    /// Wigner transform on the TF grid, then SFFT.
    pub fn demodulate(&self, y: &SampledWaveform) -> Result<DDFrame> {
        let cfg = &self.cfg;
        let mn = cfg.frame_len();
        let span_end = (mn - 1) as f64 * cfg.delay_resolution();
        let zero = locate_frame(y, cfg.symbol_rate(), span_end, "OTFS demodulator")?;
        let body: Vec<Complex64> = (0..mn as i64).map(|i| y.at(zero + i)).collect();
        Ok(sfft(&wigner(&body, cfg)))
    }

    /// Oversampled waveform at rate O·M/T for spectral measurements: each
    /// slot's M samples are interpolated by a sinc kernel truncated at its
    /// `sinc_zero_crossings`-th zero crossing (over the slot's periodic
    /// extension) and kept only inside the slot, then the frame CP is copied.
    pub fn modulate_oversampled(&self, x: &DDFrame) -> Result<SampledWaveform> {
        let cfg = &self.cfg;
        let body = self.digital_samples(x)?;
        let (m, o) = (cfg.m as i64, cfg.oversampling as i64);
        let z = self.sinc_zero_crossings as i64;
        let kernel: Vec<f64> = (-(z * o - 1)..=(z * o - 1))
            .map(|j| sinc(j as f64 / o as f64))
            .collect();
        let slot_len = (m * o) as usize;
        let mut out = vec![ZERO; cfg.n * slot_len];
        for ni in 0..cfg.n {
            let slot = &body[ni * cfg.m..(ni + 1) * cfg.m];
            let dst = &mut out[ni * slot_len..(ni + 1) * slot_len];
            for j in 0..m * o {
                let mut acc = ZERO;
                // input samples i with |j − i·O| < z·O
                let lo = (j - z * o) / o;
                let hi = (j + z * o) / o;
                for i in lo..=hi {
                    let off = j - i * o;
                    if off.abs() >= z * o {
                        continue;
                    }
                    let kv = kernel[(off + z * o - 1) as usize];
                    acc += slot[i.rem_euclid(m) as usize] * kv;
                }
                dst[j as usize] = acc;
            }
        }
        let cp = if self.cp { cfg.cp_len() * cfg.oversampling } else { 0 };
        let t0 = -(cp as f64) / cfg.sample_rate();
        Ok(SampledWaveform::new(add_cp(&out, cp), cfg.sample_rate(), t0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PulseDesign;
    use crate::frame::{Constellation, DDFrame};
    use crate::rng::stream;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cfg(m: usize, n: usize, q: usize, l: usize, o: usize) -> SimConfig {
        SimConfig::new(m, n, 15e3, q, 0.1, l, 1, o, 0).unwrap()
    }

    fn random_frame(m: usize, n: usize, seed: u64) -> DDFrame {
        DDFrame::random(m, n, &Constellation::qam4(), &mut stream(seed, "frame", 0))
    }

    #[test]
    fn dc_and_single_tone_rows() {
        let mut x = DDFrame::zeros(2, 4);
        x.set(0, 0, c(1.0, 0.0));
        x.set(1, 1, c(1.0, 0.0));
        let rows = oddm_time_samples(&x);
        for nd in 0..4 {
            assert!((rows[0][nd] - c(1.0, 0.0)).norm() < 1e-15);
            let want = Complex64::from_polar(1.0, 2.0 * PI * nd as f64 / 4.0);
            assert!((rows[1][nd] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn parseval_per_row() {
        let x = random_frame(4, 8, 1);
        let rows = oddm_time_samples(&x);
        for m in 0..4 {
            let e_t: f64 = rows[m].iter().map(|v| v.norm_sqr()).sum();
            let e_f: f64 = x.row(m).iter().map(|v| v.norm_sqr()).sum();
            assert!((e_t - 8.0 * e_f).abs() < 1e-10);
        }
    }

    #[test]
    fn stagger_layout() {
        let rows = vec![vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(3.0, 0.0), c(4.0, 0.0)]];
        assert_eq!(
            oddm_stagger(&rows),
            vec![c(1.0, 0.0), c(3.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]
        );
        let mut rows = vec![vec![c(0.0, 0.0); 2]; 4];
        rows[1][1] = c(0.0, 1.0);
        let s = oddm_stagger(&rows);
        for (i, v) in s.iter().enumerate() {
            assert_eq!(*v != ZERO, i == 5);
        }
        assert_eq!(oddm_destagger(&s, 4, 2).unwrap(), rows);
    }

    #[test]
    fn otfs_and_oddm_share_digital_samples() {
        let cfg = cfg(16, 8, 4, 3, 1);
        let x = random_frame(16, 8, 2);
        let otfs = OtfsModem::new(&cfg).digital_samples(&x).unwrap();
        let oddm = digital_sequence(&x);
        // the rectangular-pulse route carries the 1/√(N·T/M) energy scaling
        let k = 1.0 / (cfg.n as f64 * cfg.delay_resolution()).sqrt();
        for (a, b) in otfs.iter().zip(&oddm) {
            assert!((a - b * k).norm() < 1e-9 * k);
        }
    }

    #[test]
    fn single_dd_impulse_has_flat_magnitude() {
        let mut x = DDFrame::zeros(8, 4);
        x.set(0, 0, c(1.0, 0.0));
        let s = OtfsModem::new(&cfg(8, 4, 2, 2, 1)).digital_samples(&x).unwrap();
        let nz: Vec<f64> = s.iter().map(|v| v.norm()).filter(|v| *v > 0.0).collect();
        // the impulse spreads over every slot at its delay position
        assert_eq!(nz.len(), 4);
        assert!(nz.iter().all(|v| (v - nz[0]).abs() < 1e-12));
    }

    #[test]
    fn otfs_identity_round_trip_is_exact() {
        let cfg = cfg(16, 8, 4, 4, 1);
        let modem = OtfsModem::new(&cfg);
        let x = random_frame(16, 8, 3);
        let y = modem.demodulate(&modem.modulate(&x).unwrap()).unwrap();
        for (a, b) in y.as_stacked().iter().zip(x.as_stacked()) {
            assert!((a - b).norm() < 1e-12);
        }
        let tf = isfft(&x);
        let back = sfft(&tf);
        for (a, b) in back.as_stacked().iter().zip(x.as_stacked()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn oddm_energy_and_cp_cyclicity() {
        let cfg = cfg(32, 8, 4, 5, 8);
        let modem = OddmModem::new(&cfg).unwrap();
        let x = random_frame(32, 8, 4);
        let w = modem.modulate(&x).unwrap();
        let ts = cfg.delay_resolution();
        let body: f64 = (0..w.len())
            .filter(|&i| w.time(i) >= -0.5 * ts)
            .map(|i| w.samples[i].norm_sqr())
            .sum::<f64>()
            / w.rate;
        assert!((body / x.energy() - 1.0).abs() < 0.02, "{}", body / x.energy());
        let seq = add_cp(&digital_sequence(&x), cfg.cp_len());
        let plain = digital_sequence(&x);
        assert_eq!(&seq[..cfg.cp_len()], &plain[plain.len() - cfg.cp_len()..]);
        assert!(modem.modulate(&DDFrame::zeros(32, 8)).unwrap().samples.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn oddm_identity_round_trip() {
        let cfg = cfg(64, 16, 8, 9, 4);
        let modem = OddmModem::new(&cfg).unwrap();
        let qam = Constellation::qam4();
        for seed in 0..5 {
            let x = random_frame(64, 16, seed);
            let y = modem.demodulate(&modem.modulate(&x).unwrap()).unwrap();
            let worst = y
                .as_stacked()
                .iter()
                .zip(x.as_stacked())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-2, "{worst}");
            assert_eq!(crate::frame::demap(&y, &qam), crate::frame::demap(&x, &qam));
        }
    }

    #[test]
    fn oddm_demodulator_rejects_short_waveforms() {
        let cfg = cfg(16, 4, 2, 2, 4);
        let modem = OddmModem::new(&cfg).unwrap();
        let w = modem.modulate(&random_frame(16, 4, 0)).unwrap();
        let cut = SampledWaveform::new(w.samples[..w.len() / 2].to_vec(), w.rate, w.t0);
        assert!(matches!(modem.demodulate(&cut), Err(Error::WaveformTooShort(_))));
    }

    #[test]
    fn ps_ofdm_gap_shrinks_with_m() {
        let err = |m: usize| {
            let cfg = cfg(m, 8, 4, 2, 8).with_pulse_design(PulseDesign::NyquistCorrected);
            let modem = OddmModem::new(&cfg).unwrap();
            let x = random_frame(m, 8, 9);
            let a = modem.modulate_body(&x).unwrap();
            let b = modem.ps_ofdm_reference(&x).unwrap();
            let num: f64 = a.samples.iter().zip(&b.samples).map(|(p, q)| (p - q).norm_sqr()).sum();
            let den: f64 = b.samples.iter().map(|q| q.norm_sqr()).sum();
            (num / den).sqrt()
        };
        let (e32, e64) = (err(32), err(64));
        assert!(e64 < e32, "{e32} {e64}");
    }

    #[test]
    fn oversampled_otfs_matches_symbol_rate_samples() {
        let cfg = cfg(16, 4, 2, 3, 4);
        let modem = OtfsModem::new(&cfg);
        let x = random_frame(16, 4, 5);
        let fine = modem.modulate_oversampled(&x).unwrap();
        let coarse = modem.modulate(&x).unwrap();
        for (i, v) in coarse.samples.iter().enumerate() {
            let j = fine.index_of(coarse.time(i)).unwrap();
            assert!((fine.at(j) - v).norm() < 1e-9 * v.norm().max(1.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn demodulators_are_linear(s1 in any::<u64>(), s2 in any::<u64>(), g in -2.0f64..2.0) {
            let cfg = cfg(16, 4, 2, 3, 4);
            let oddm = OddmModem::new(&cfg).unwrap();
            let otfs = OtfsModem::new(&cfg);
            let (x1, x2) = (random_frame(16, 4, s1), random_frame(16, 4, s2));
            let w1 = oddm.modulate(&x1).unwrap();
            let w2 = oddm.modulate(&x2).unwrap();
            let mut w = w1.clone();
            for (a, b) in w.samples.iter_mut().zip(&w2.samples) { *a += b * g; }
            let y = oddm.demodulate(&w).unwrap();
            let (y1, y2) = (oddm.demodulate(&w1).unwrap(), oddm.demodulate(&w2).unwrap());
            for i in 0..64 {
                let want = y1.as_stacked()[i] + y2.as_stacked()[i] * g;
                prop_assert!((y.as_stacked()[i] - want).norm() < 1e-10);
            }
            let v1 = otfs.modulate(&x1).unwrap();
            let v2 = otfs.modulate(&x2).unwrap();
            let mut v = v1.clone();
            for (a, b) in v.samples.iter_mut().zip(&v2.samples) { *a += b * g; }
            let z = otfs.demodulate(&v).unwrap();
            let (z1, z2) = (otfs.demodulate(&v1).unwrap(), otfs.demodulate(&v2).unwrap());
            for i in 0..64 {
                let want = z1.as_stacked()[i] + z2.as_stacked()[i] * g;
                prop_assert!((z.as_stacked()[i] - want).norm() < 1e-10);
            }
        }
    }
}
