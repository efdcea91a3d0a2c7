use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex baseband samples on a uniform grid: sample `i` sits at
/// `t0 + i / rate` seconds. `t0` is negative when the CP or pulse tails
/// precede the first data symbol at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    pub samples: Vec<Complex64>,
    pub rate: f64,
    pub t0: f64,
}

impl SampledWaveform {
    pub fn new(samples: Vec<Complex64>, rate: f64, t0: f64) -> Self {
        SampledWaveform { samples, rate, t0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.rate
    }

    /// Time just after the last sample.
    pub fn t_end(&self) -> f64 {
        self.t0 + self.samples.len() as f64 / self.rate
    }

    /// ∫|x|² dt as a rectangle-rule sum.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.rate
    }

    /// Signed sample index of time `t`, which must lie on the grid.
    pub fn index_of(&self, t: f64) -> Result<i64> {
        let x = (t - self.t0) * self.rate;
        let r = x.round();
        if (x - r).abs() > 1e-6 {
            return Err(Error::OffGrid(t));
        }
        Ok(r as i64)
    }

    /// Sample at signed index `i`, zero outside the stored span.
    pub fn at(&self, i: i64) -> Complex64 {
        if i < 0 || i as usize >= self.samples.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.samples[i as usize]
        }
    }

    /// Element-wise sum of two waveforms on the same grid; the result spans
    /// the union of both supports.
    pub fn add(&self, other: &SampledWaveform) -> Result<SampledWaveform> {
        if (self.rate - other.rate).abs() > 1e-9 * self.rate {
            return Err(Error::InvalidValue {
                key: "rate".into(),
                reason: "waveforms sampled at different rates".into(),
            });
        }
        let offset = other.index_of(self.t0)?;
        let start = offset.min(0);
        let end = (offset + self.len() as i64).max(other.len() as i64);
        let t0 = other.t0 + start as f64 / other.rate;
        let mut samples = vec![Complex64::new(0.0, 0.0); (end - start) as usize];
        for (i, v) in self.samples.iter().enumerate() {
            samples[(offset + i as i64 - start) as usize] += v;
        }
        for (i, v) in other.samples.iter().enumerate() {
            samples[(i as i64 - start) as usize] += v;
        }
        Ok(SampledWaveform {
            samples,
            rate: self.rate,
            t0,
        })
    }
}

/// Overlap-adds frames placed back to back with a fixed period of
/// `period` samples. Each frame is positioned by its own `t0`, relative to a
/// frame start shifted by `k·period`.
pub fn concatenate(frames: &[SampledWaveform], period: usize) -> Vec<Complex64> {
    if frames.is_empty() {
        return Vec::new();
    }
    let min_t0 = frames.iter().map(|f| f.t0).fold(f64::INFINITY, f64::min);
    let rate = frames[0].rate;
    let lead: Vec<usize> = frames
        .iter()
        .map(|f| ((f.t0 - min_t0) * rate).round() as usize)
        .collect();
    let total = frames
        .iter()
        .enumerate()
        .map(|(k, f)| k * period + lead[k] + f.len())
        .max()
        .unwrap_or(0);
    let mut out = vec![Complex64::new(0.0, 0.0); total];
    for (k, f) in frames.iter().enumerate() {
        let base = k * period + lead[k];
        for (i, v) in f.samples.iter().enumerate() {
            out[base + i] += v;
        }
    }
    out
}

/// CSV with columns `t,re,im`.
pub fn waveform_to_csv(w: &SampledWaveform) -> String {
    let mut out = String::from("t,re,im\n");
    for (i, v) in w.samples.iter().enumerate() {
        out.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", w.time(i), v.re, v.im));
    }
    out
}

/// Reads the `t,re,im` format; the grid is taken from the first and last
/// time stamps.
pub fn waveform_from_csv(text: &str) -> Result<SampledWaveform> {
    let mut t = Vec::new();
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        if fields.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected t,re,im", i + 1)));
        }
        t.push(fields[0]);
        samples.push(Complex64::new(fields[1], fields[2]));
    }
    if samples.len() < 2 {
        return Err(Error::Parse("a waveform needs at least two samples".into()));
    }
    let rate = (samples.len() - 1) as f64 / (t[t.len() - 1] - t[0]);
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Parse("time stamps must increase".into()));
    }
    Ok(SampledWaveform::new(samples, rate, t[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn add_aligns_on_time() {
        let a = SampledWaveform::new(vec![c(1.0), c(2.0)], 10.0, 0.0);
        let b = SampledWaveform::new(vec![c(1.0), c(1.0), c(1.0)], 10.0, -0.1);
        let s = a.add(&b).unwrap();
        assert!((s.t0 + 0.1).abs() < 1e-12);
        assert_eq!(s.samples, vec![c(1.0), c(2.0), c(3.0)]);
    }

    #[test]
    fn off_grid_time_is_rejected() {
        let a = SampledWaveform::new(vec![c(1.0); 4], 10.0, 0.0);
        assert!(a.index_of(0.05).is_err());
        assert_eq!(a.index_of(0.2).unwrap(), 2);
    }

    #[test]
    fn concatenation_overlaps_tails() {
        let f = SampledWaveform::new(vec![c(1.0); 3], 1.0, -1.0);
        let out = concatenate(&[f.clone(), f], 2);
        assert_eq!(out, vec![c(1.0), c(1.0), c(2.0), c(1.0), c(1.0)]);
    }

    #[test]
    fn csv_round_trip() {
        let w = SampledWaveform::new(
            (0..7).map(|i| Complex64::new(i as f64, -0.5 * i as f64)).collect(),
            3.84e6,
            -2.5e-6,
        );
        let back = waveform_from_csv(&waveform_to_csv(&w)).unwrap();
        assert_eq!(back.samples, w.samples);
        assert!((back.rate - w.rate).abs() < 1e-6 * w.rate);
        assert!((back.t0 - w.t0).abs() < 1e-18);
        assert!(waveform_from_csv("t,re,im\n0,1,2\n").is_err());
    }
}
