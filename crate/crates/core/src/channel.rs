//! On-grid doubly-selective channels: path sets, waveform-level application,
//! AWGN, and random channel generators (synthetic and EVA with Clarke Doppler).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::waveform::SampledWaveform;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const EVA_PROFILE: &str = include_str!("../data/eva_profile.csv");

/// One propagation path: gain, delay index (units of T/M), Doppler index
/// (units of 1/(NT)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub h: Complex64,
    pub l: usize,
    pub k: i64,
}

/// Discrete DD channel. Paths are kept sorted by `(l, k)` with duplicates
/// merged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSet {
    paths: Vec<Path>,
    pub speed_kmh: Option<f64>,
    pub carrier_hz: Option<f64>,
}

impl PathSet {
    pub fn new(paths: impl IntoIterator<Item = Path>) -> Self {
        let mut merged: BTreeMap<(usize, i64), Complex64> = BTreeMap::new();
        for p in paths {
            *merged.entry((p.l, p.k)).or_default() += p.h;
        }
        PathSet {
            paths: merged.into_iter().map(|((l, k), h)| Path { h, l, k }).collect(),
            speed_kmh: None,
            carrier_hz: None,
        }
    }

    pub fn single(h: Complex64, l: usize, k: i64) -> Self {
        PathSet::new([Path { h, l, k }])
    }

    pub fn identity() -> Self {
        PathSet::single(Complex64::new(1.0, 0.0), 0, 0)
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn power(&self) -> f64 {
        self.paths.iter().map(|p| p.h.norm_sqr()).sum()
    }

    /// Rescales gains so that `Σ|h_p|² = 1`.
    pub fn normalized(mut self) -> Self {
        let p = self.power();
        if p > 0.0 {
            let s = p.sqrt().recip();
            for path in &mut self.paths {
                path.h *= s;
            }
        }
        self
    }

    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.l).max().unwrap_or(0)
    }

    pub fn max_doppler(&self) -> i64 {
        self.paths.iter().map(|p| p.k.abs()).max().unwrap_or(0)
    }

    /// Checks `0 ≤ l ≤ L−1` and `|k| ≤ K`.
    pub fn validate(&self, cfg: &SimConfig) -> Result<()> {
        for p in &self.paths {
            if p.l > cfg.cp_len() || p.k.unsigned_abs() as usize > cfg.k {
                return Err(Error::PathOutOfRange(format!(
                    "path (l={}, k={}) outside 0..={} × ±{}",
                    p.l,
                    p.k,
                    cfg.cp_len(),
                    cfg.k
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h_re,h_im,l,k\n");
        for p in &self.paths {
            let _ = writeln!(out, "{:.17e},{:.17e},{},{}", p.h.re, p.h.im, p.l, p.k);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut paths = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("h_re")) {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Parse(format!("path CSV line {}: {line:?}", lineno + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            paths.push(Path {
                h: Complex64::new(f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?),
                l: f[2].parse().map_err(|_| bad())?,
                k: f[3].parse().map_err(|_| bad())?,
            });
        }
        Ok(PathSet::new(paths))
    }
}

/// Samples per delay step `T/M` at the waveform's rate.
fn samples_per_delay(x: &SampledWaveform, cfg: &SimConfig) -> Result<i64> {
    let s = x.rate * cfg.delay_resolution();
    let r = s.round();
    if r < 1.0 || (s - r).abs() > 1e-6 {
        return Err(Error::OffGrid(cfg.delay_resolution()));
    }
    Ok(r as i64)
}

/// `r(t) = Σ_p h_p·x(t − τ_p)·e^{j2πν_p(t − τ_p)}` with `τ_p = l_p·T/M`,
/// `ν_p = k_p/(NT)` and `t` absolute frame time. The output extends the
/// input span by `(L−1)·T/M`.
pub fn apply_channel(x: &SampledWaveform, ch: &PathSet, cfg: &SimConfig) -> Result<SampledWaveform> {
    let s = samples_per_delay(x, cfg)?;
    let extra = (cfg.cp_len() as i64).max(ch.max_delay() as i64) * s;
    let len = x.len() + extra as usize;
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let dt = x.dt();
    let nt = cfg.frame_span();
    for p in &ch.paths {
        let shift = p.l as i64 * s;
        // phase advance per input sample and at the first input sample
        let step = Complex64::from_polar(1.0, 2.0 * PI * p.k as f64 * dt / nt);
        let mut rot = p.h * Complex64::from_polar(1.0, 2.0 * PI * p.k as f64 * x.t0 / nt);
        for (i, v) in x.samples.iter().enumerate() {
            out[i + shift as usize] += v * rot;
            rot *= step;
            // refresh to keep the recurrence from drifting on long frames
            if i % 4096 == 4095 {
                let t = x.time(i + 1);
                rot = p.h * Complex64::from_polar(1.0, 2.0 * PI * p.k as f64 * t / nt);
            }
        }
    }
    Ok(SampledWaveform::new(out, x.rate, x.t0))
}

/// Noise spectral density for `Es/N0 = snr_db` with unit symbol energy.
pub fn noise_psd(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Adds circularly-symmetric white Gaussian noise of one-sided density
/// `N0 = 10^(−snr_db/10)` (unit symbol energy), i.e. per-sample variance
/// `N0·rate`. After either demodulator the DD-domain noise variance is N0.
pub fn add_awgn<R: Rng + ?Sized>(x: &SampledWaveform, snr_db: f64, rng: &mut R) -> SampledWaveform {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return x.clone();
    }
    let sigma = (noise_psd(snr_db) * x.rate / 2.0).sqrt();
    let samples = x
        .samples
        .iter()
        .map(|v| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            v + Complex64::new(re, im) * sigma
        })
        .collect();
    SampledWaveform::new(samples, x.rate, x.t0)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * (var / 2.0).sqrt()
}

/// Power-delay profile for synthetic channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Uniform,
    /// Power `e^{−l/(L/2)}`.
    Exponential,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Profile::Uniform),
            "exponential" | "exp" => Ok(Profile::Exponential),
            other => Err(Error::InvalidValue {
                key: "profile".into(),
                reason: format!("unknown power profile {other:?}"),
            }),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Profile::Uniform => "uniform",
            Profile::Exponential => "exponential",
        }
    }
}

/// `P` distinct on-grid paths with complex Gaussian gains, normalised.
///
/// One path always has delay 0; with `origin` it sits at `(0, 0)`,
/// otherwise its Doppler is drawn like the rest.
pub fn gen_ongrid_channel<R: Rng + ?Sized>(
    p: usize,
    cfg: &SimConfig,
    profile: Profile,
    origin: bool,
    rng: &mut R,
) -> Result<PathSet> {
    let dopplers = 2 * cfg.k + 1;
    let capacity = cfg.l * dopplers;
    if p == 0 || p > capacity {
        return Err(Error::TooManyPaths { requested: p, capacity });
    }
    let to_pair = |idx: usize| (idx / dopplers, (idx % dopplers) as i64 - cfg.k as i64);
    let first = if origin {
        cfg.k
    } else {
        rng.gen_range(0..dopplers)
    };
    let mut cells = vec![first];
    let rest: Vec<usize> = (0..capacity).filter(|&c| c != first).collect();
    cells.extend(sample(rng, rest.len(), p - 1).into_iter().map(|i| rest[i]));
    let decay = cfg.l as f64 / 2.0;
    let paths = cells.into_iter().map(|c| {
        let (l, k) = to_pair(c);
        let var = match profile {
            Profile::Uniform => 1.0,
            Profile::Exponential => (-(l as f64) / decay).exp(),
        };
        Path {
            h: complex_gaussian(rng, var),
            l,
            k,
        }
    });
    let paths: Vec<Path> = paths.collect();
    Ok(PathSet::new(paths).normalized())
}

/// EVA taps as `(delay in seconds, linear power)`.
pub fn eva_profile() -> Vec<(f64, f64)> {
    EVA_PROFILE
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut f = l.split(',');
            let d: f64 = f.next().unwrap().trim().parse().expect("EVA delay");
            let p: f64 = f.next().unwrap().trim().parse().expect("EVA power");
            (d * 1e-9, 10f64.powf(p / 10.0))
        })
        .collect()
}

/// Maximum Doppler shift `(v/3.6)·f_c/c` for a speed in km/h.
pub fn max_doppler_hz(speed_kmh: f64, carrier_hz: f64) -> f64 {
    speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT
}

/// EVA channel quantised to the DD grid. Each tap gets one Clarke Doppler
/// draw `ν_max·cos θ`, rounded to the nearest Doppler bin; delays round to
/// the nearest T/M and clip to L−1.
pub fn gen_eva_channel<R: Rng + ?Sized>(
    speed_kmh: f64,
    carrier_hz: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PathSet> {
    let nu_max = max_doppler_hz(speed_kmh, carrier_hz);
    let limit = cfg.k as f64 * cfg.doppler_resolution();
    if nu_max > limit {
        return Err(Error::DopplerTooLarge { nu_max, limit });
    }
    let rate = cfg.symbol_rate();
    let nt = cfg.frame_span();
    let paths: Vec<Path> = eva_profile()
        .into_iter()
        .map(|(tau, power)| {
            let l = ((tau * rate).round() as usize).min(cfg.cp_len());
            let theta = rng.gen_range(0.0..2.0 * PI);
            let k = (nu_max * theta.cos() * nt).round() as i64;
            Path {
                h: complex_gaussian(rng, power),
                l,
                k,
            }
        })
        .collect();
    let mut set = PathSet::new(paths).normalized();
    set.speed_kmh = Some(speed_kmh);
    set.carrier_hz = Some(carrier_hz);
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn symbol_rate_wave(len: usize, cfg: &SimConfig, seed: u64) -> SampledWaveform {
        let mut rng = stream(seed, "wave", 0);
        let s = (0..len).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        SampledWaveform::new(s, cfg.symbol_rate(), -2.0 * cfg.delay_resolution())
    }

    #[test]
    fn identity_delay_and_doppler_paths() {
        let cfg = SimConfig::desk();
        let x = SampledWaveform::new((0..32).map(|i| c(i as f64, 1.0)).collect(), cfg.symbol_rate(), 0.0);
        let y = apply_channel(&x, &PathSet::identity(), &cfg).unwrap();
        assert_eq!(&y.samples[..32], &x.samples[..]);
        let h = c(0.3, -0.4);
        let y = apply_channel(&x, &PathSet::single(h, 3, 0), &cfg).unwrap();
        for q in 0..32 {
            assert!((y.samples[q + 3] - h * x.samples[q]).norm() < 1e-12);
        }
        let y = apply_channel(&x, &PathSet::single(c(1.0, 0.0), 0, 2), &cfg).unwrap();
        let mn = cfg.frame_len() as f64;
        for q in 0..32 {
            let want = x.samples[q] * Complex64::from_polar(1.0, 2.0 * PI * 2.0 * q as f64 / mn);
            assert!((y.samples[q] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn phase_is_referenced_to_delayed_time() {
        // oracle evaluated pointwise from the path formula
        let cfg = SimConfig::desk();
        let x = symbol_rate_wave(cfg.frame_len() + cfg.cp_len(), &cfg, 1);
        let (h, l, k) = (c(0.6, 0.8), 4usize, -3i64);
        let y = apply_channel(&x, &PathSet::single(h, l, k), &cfg).unwrap();
        let ts = cfg.delay_resolution();
        for q in 0..y.len() {
            let t = y.time(q);
            let xi = q as i64 - l as i64;
            let want = h * x.at(xi) * Complex64::from_polar(1.0, 2.0 * PI * k as f64 / cfg.frame_span() * (t - l as f64 * ts));
            assert!((y.samples[q] - want).norm() < 1e-10, "q={q}");
        }
    }

    #[test]
    fn off_grid_rate_is_rejected() {
        let cfg = SimConfig::desk();
        let x = SampledWaveform::new(vec![c(1.0, 0.0); 8], cfg.symbol_rate() * 1.5, 0.0);
        assert!(matches!(apply_channel(&x, &PathSet::identity(), &cfg), Err(Error::OffGrid(_))));
    }

    #[test]
    fn single_unit_path_preserves_energy() {
        let cfg = SimConfig::desk();
        let x = symbol_rate_wave(500, &cfg, 2);
        let y = apply_channel(&x, &PathSet::single(Complex64::from_polar(1.0, 0.7), 5, 2), &cfg).unwrap();
        assert!((y.energy() - x.energy()).abs() < 1e-9 * x.energy());
    }

    #[test]
    fn awgn_calibration_and_determinism() {
        let cfg = SimConfig::desk();
        let x = SampledWaveform::new(vec![c(0.0, 0.0); 1_000_000], cfg.symbol_rate(), 0.0);
        let y = add_awgn(&x, 7.0, &mut stream(4, "noise", 0));
        let per_sample = y.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
        let n0 = per_sample / y.rate;
        let snr = -10.0 * n0.log10();
        assert!((snr - 7.0).abs() < 0.1, "{snr}");
        let z = add_awgn(&x, 7.0, &mut stream(4, "noise", 0));
        assert_eq!(y.samples[..100], z.samples[..100]);
        let clean = add_awgn(&x, f64::INFINITY, &mut stream(4, "noise", 0));
        assert_eq!(clean, x);
    }

    #[test]
    fn ongrid_generator_contracts() {
        let cfg = SimConfig::desk();
        let mut rng = stream(5, "channel", 0);
        let one = gen_ongrid_channel(1, &cfg, Profile::Uniform, true, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one.paths()[0].l, one.paths()[0].k), (0, 0));
        assert!((one.paths()[0].h.norm() - 1.0).abs() < 1e-12);
        let full = cfg.l * (2 * cfg.k + 1);
        let all = gen_ongrid_channel(full, &cfg, Profile::Exponential, false, &mut rng).unwrap();
        assert_eq!(all.len(), full);
        assert!((all.power() - 1.0).abs() < 1e-12);
        all.validate(&cfg).unwrap();
        assert!(matches!(
            gen_ongrid_channel(full + 1, &cfg, Profile::Uniform, false, &mut rng),
            Err(Error::TooManyPaths { .. })
        ));
        for t in 0..50 {
            let ch = gen_ongrid_channel(4, &cfg, Profile::Uniform, false, &mut stream(5, "channel", t)).unwrap();
            assert_eq!(ch.len(), 4);
            assert!(ch.paths().iter().any(|p| p.l == 0));
        }
    }

    #[test]
    fn duplicates_merge_and_csv_round_trips() {
        let ch = PathSet::new([
            Path { h: c(1.0, 0.0), l: 1, k: 1 },
            Path { h: c(0.5, 0.5), l: 1, k: 1 },
            Path { h: c(0.0, 1.0), l: 0, k: -2 },
        ]);
        assert_eq!(ch.len(), 2);
        assert_eq!(ch.paths()[1].h, c(1.5, 0.5));
        assert_eq!(PathSet::from_csv(&ch.to_csv()).unwrap(), ch);
        assert!(PathSet::from_csv("h_re,h_im,l,k\n1,2,3\n").is_err());
    }

    #[test]
    fn eva_arithmetic() {
        let nu = max_doppler_hz(500.0, 5e9);
        // (500/3.6)·5e9/299792458; rounding c to 3e8 would give 2314.8
        assert!((nu - 2316.417).abs() < 1e-3, "{nu}");
        let cfg32 = SimConfig::new(512, 32, 15e3, 20, 0.1, 25, 5, 4, 0).unwrap();
        assert!((cfg32.doppler_resolution() - 468.75).abs() < 1e-9);
        assert!(nu / cfg32.doppler_resolution() < 5.0);
        let l150 = (150e-9 * cfg32.symbol_rate()).round();
        assert_eq!(l150, 1.0);
        let ch = gen_eva_channel(0.0, 5e9, &cfg32, &mut stream(1, "channel", 0)).unwrap();
        assert!(ch.paths().iter().all(|p| p.k == 0));
        assert!((ch.power() - 1.0).abs() < 1e-12);
        assert_eq!(ch.max_delay(), 19);
        let tight = SimConfig::new(512, 32, 15e3, 20, 0.1, 25, 3, 4, 0).unwrap();
        assert!(matches!(
            gen_eva_channel(500.0, 5e9, &tight, &mut stream(1, "channel", 0)),
            Err(Error::DopplerTooLarge { .. })
        ));
    }

    #[test]
    fn clarke_dopplers_are_u_shaped() {
        let cfg = SimConfig::new(512, 32, 15e3, 20, 0.1, 25, 5, 4, 0).unwrap();
        let mut counts = BTreeMap::new();
        let mut rng = stream(2, "channel", 0);
        let mut draws = 0;
        while draws < 10_000 {
            let ch = gen_eva_channel(500.0, 5e9, &cfg, &mut rng).unwrap();
            for p in ch.paths() {
                *counts.entry(p.k).or_insert(0usize) += 1;
                draws += 1;
            }
        }
        let edge = counts.get(&5).copied().unwrap_or(0) + counts.get(&-5).copied().unwrap_or(0);
        let centre = counts.get(&0).copied().unwrap_or(0);
        assert!(edge > 2 * centre, "{counts:?}");
        assert!(counts.keys().all(|k| k.abs() <= 5));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn channel_is_linear_in_paths_and_input(seed in any::<u64>(), g in -3.0f64..3.0) {
            let cfg = SimConfig::desk();
            let x1 = symbol_rate_wave(200, &cfg, seed);
            let x2 = symbol_rate_wave(200, &cfg, seed ^ 1);
            let mut rng = stream(seed, "channel", 0);
            let p1 = gen_ongrid_channel(2, &cfg, Profile::Uniform, false, &mut rng).unwrap();
            let p2 = gen_ongrid_channel(2, &cfg, Profile::Uniform, false, &mut rng).unwrap();
            let both = PathSet::new(p1.paths().iter().chain(p2.paths()).copied());
            let y = apply_channel(&x1, &both, &cfg).unwrap();
            let a = apply_channel(&x1, &p1, &cfg).unwrap();
            let b = apply_channel(&x1, &p2, &cfg).unwrap();
            for i in 0..y.len() {
                prop_assert!((y.samples[i] - a.samples[i] - b.samples[i]).norm() < 1e-12);
            }
            let mut xs = x1.clone();
            for (u, v) in xs.samples.iter_mut().zip(&x2.samples) { *u += v * g; }
            let ys = apply_channel(&xs, &p1, &cfg).unwrap();
            let y2 = apply_channel(&x2, &p1, &cfg).unwrap();
            for i in 0..ys.len() {
                prop_assert!((ys.samples[i] - a.samples[i] - y2.samples[i] * g).norm() < 1e-10);
            }
        }
    }
}
