//! Welch power spectral density estimate and out-of-band emission metrics.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Two-sided PSD on an ascending frequency axis `[-fs/2, fs/2)`, linear
/// power per Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

fn hann(len: usize) -> Vec<f64> {
    // periodic form, so 50% overlapped windows sum to a constant
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Averaged periodogram over Hann-windowed segments of `seg_len` samples
/// with 50% overlap.
pub fn welch(x: &[Complex64], rate: f64, seg_len: usize) -> Result<Psd> {
    if seg_len == 0 || x.len() < seg_len {
        return Err(Error::InsufficientSamples(format!(
            "{} samples cannot fill one {seg_len}-sample segment",
            x.len()
        )));
    }
    let step = (seg_len / 2).max(1);
    let w = hann(seg_len);
    let w_energy: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let mut acc = vec![0.0; seg_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    let mut segments = 0usize;
    let mut start = 0;
    while start + seg_len <= x.len() {
        for (b, (s, wv)) in buf.iter_mut().zip(x[start..start + seg_len].iter().zip(&w)) {
            *b = s * wv;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (segments as f64 * rate * w_energy);
    let half = seg_len / 2;
    let mut freqs = Vec::with_capacity(seg_len);
    let mut power = Vec::with_capacity(seg_len);
    // fftshift: bins seg_len/2.. are the negative frequencies
    for i in 0..seg_len {
        let k = (i + seg_len - half) % seg_len;
        let signed = if k >= seg_len - half { k as i64 - seg_len as i64 } else { k as i64 };
        freqs.push(signed as f64 * rate / seg_len as f64);
        power.push(acc[k] * scale);
    }
    Ok(Psd { freqs, power })
}

impl Psd {
    /// Linear PSD at `f`, interpolated between neighbouring bins.
    pub fn at(&self, f: f64) -> f64 {
        let df = self.freqs[1] - self.freqs[0];
        let pos = (f - self.freqs[0]) / df;
        let i = pos.floor().clamp(0.0, (self.freqs.len() - 2) as f64) as usize;
        let frac = (pos - i as f64).clamp(0.0, 1.0);
        self.power[i] * (1.0 - frac) + self.power[i + 1] * frac
    }

    /// Average of the two sidebands at `±f`.
    pub fn symmetric_at(&self, f: f64) -> f64 {
        0.5 * (self.at(f) + self.at(-f))
    }

    fn in_band(&self, edge: f64) -> impl Iterator<Item = f64> + '_ {
        self.freqs
            .iter()
            .zip(&self.power)
            .filter(move |(f, _)| f.abs() <= edge)
            .map(|(_, p)| *p)
    }

    pub fn in_band_median(&self, edge: f64) -> f64 {
        let mut v: Vec<f64> = self.in_band(edge).collect();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            return 0.0;
        }
        let mid = v.len() / 2;
        if v.len() % 2 == 1 {
            v[mid]
        } else {
            0.5 * (v[mid - 1] + v[mid])
        }
    }

    pub fn in_band_peak(&self, edge: f64) -> f64 {
        self.in_band(edge).fold(0.0, f64::max)
    }

    /// PSD in dB relative to `reference`.
    pub fn to_db(&self, reference: f64) -> Vec<f64> {
        self.power.iter().map(|p| 10.0 * (p / reference).log10()).collect()
    }

    /// Mean linear level over `[±f − width/2, ±f + width/2]`, both
    /// sidebands; a zero width falls back to [`Psd::symmetric_at`].
    pub fn band_level(&self, f: f64, width: f64) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for (fi, p) in self.freqs.iter().zip(&self.power) {
            if (fi.abs() - f).abs() <= width / 2.0 {
                sum += p;
                count += 1;
            }
        }
        if count == 0 {
            self.symmetric_at(f)
        } else {
            sum / count as f64
        }
    }

    /// Level at `±f`, averaged over `width`, in dB relative to the in-band
    /// median over `|f| ≤ edge`.
    pub fn oobe_db(&self, f: f64, edge: f64, width: f64) -> f64 {
        10.0 * (self.band_level(f, width) / self.in_band_median(edge)).log10()
    }

    /// Width between the outermost frequencies whose level stays within
    /// `threshold_db` of the in-band median.
    pub fn occupied_bandwidth(&self, threshold_db: f64, edge: f64) -> f64 {
        let floor = self.in_band_median(edge) * 10f64.powf(threshold_db / 10.0);
        let above: Vec<f64> = self
            .freqs
            .iter()
            .zip(&self.power)
            .filter(|(_, p)| **p >= floor)
            .map(|(f, _)| *f)
            .collect();
        match (above.first(), above.last()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0.0,
        }
    }

    pub fn peak_frequency(&self) -> f64 {
        let (i, _) = self
            .power
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
        self.freqs[i]
    }

    pub fn total_power(&self) -> f64 {
        let df = self.freqs[1] - self.freqs[0];
        self.power.iter().sum::<f64>() * df
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    #[test]
    fn tone_peaks_at_its_bin() {
        let rate = 1000.0;
        let f0 = -125.0;
        let x: Vec<Complex64> = (0..8192)
            .map(|i| Complex64::from_polar(1.0, 2.0 * PI * f0 * i as f64 / rate))
            .collect();
        let psd = welch(&x, rate, 1024).unwrap();
        assert_eq!(psd.peak_frequency(), f0);
        // Parseval: unit-power tone
        assert!((psd.total_power() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn white_noise_is_flat() {
        let mut rng = crate::rng::stream(3, "psd", 0);
        let rate = 2.0;
        let x: Vec<Complex64> = (0..1 << 16)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let psd = welch(&x, rate, 256).unwrap();
        // variance 1/6 spread over 2 Hz
        let level = psd.in_band_median(1.0);
        assert!((level - 1.0 / 12.0).abs() < 0.01, "{level}");
        assert!(psd.oobe_db(0.7, 0.5, 0.0).abs() < 1.0);
        assert!(psd.oobe_db(0.7, 0.5, 0.1).abs() < 0.5);
    }

    #[test]
    fn axis_and_errors() {
        let x = vec![Complex64::new(1.0, 0.0); 16];
        assert!(matches!(welch(&x, 1.0, 32), Err(Error::InsufficientSamples(_))));
        let psd = welch(&x, 8.0, 8).unwrap();
        assert_eq!(psd.freqs, vec![-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(psd.peak_frequency(), 0.0);
    }

    #[test]
    fn bandwidth_of_an_ideal_band() {
        let freqs: Vec<f64> = (-50..50).map(|i| i as f64).collect();
        let power = freqs.iter().map(|f| if f.abs() <= 20.0 { 1.0 } else { 1e-6 }).collect();
        let psd = Psd { freqs, power };
        assert_eq!(psd.occupied_bandwidth(-30.0, 10.0), 40.0);
        assert!((psd.oobe_db(30.0, 10.0, 0.0) + 60.0).abs() < 1e-9);
        // 3 bins at ±20..22 average one in-band and two stop-band bins
        assert!((psd.band_level(21.0, 2.0) - (1.0 + 2e-6) / 3.0).abs() < 1e-12);
        assert!((psd.at(20.5) - 0.5 * (1.0 + 1e-6)).abs() < 1e-12);
    }
}
