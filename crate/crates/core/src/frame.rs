//! Delay-Doppler frames and square-QAM constellations with Gray labelling.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Square QAM alphabet with unit average energy.
///
/// A symbol index is the integer formed by its bits, first bit most
/// significant. The first half of the bits selects the quadrature level and
/// the second half the in-phase level, each through a Gray-coded PAM map
/// (bit value 0 on the positive side). For 4-QAM this gives
/// `00→(+1+j)/√2, 01→(−1+j)/√2, 11→(−1−j)/√2, 10→(+1−j)/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    bits_per_symbol: usize,
}

fn gray_pam(bits: usize) -> Vec<f64> {
    // level for each Gray label value
    let levels = 1usize << bits;
    let mut out = vec![0.0; levels];
    for i in 0..levels {
        let label = i ^ (i >> 1);
        out[label] = (levels - 1) as f64 - 2.0 * i as f64;
    }
    out
}

impl Constellation {
    /// Square QAM with `bits_per_symbol` ∈ {2, 4, 6, ...}.
    pub fn qam(bits_per_symbol: usize) -> Result<Self> {
        if bits_per_symbol == 0 || bits_per_symbol % 2 != 0 {
            return Err(Error::InvalidValue {
                key: "bits_per_symbol".into(),
                reason: "square QAM needs an even, nonzero number of bits".into(),
            });
        }
        let half = bits_per_symbol / 2;
        let pam = gray_pam(half);
        let size = 1usize << bits_per_symbol;
        let mut points = Vec::with_capacity(size);
        for s in 0..size {
            let q = s >> half;
            let i = s & ((1 << half) - 1);
            points.push(Complex64::new(pam[i], pam[q]));
        }
        let energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / size as f64;
        let scale = energy.sqrt().recip();
        for p in &mut points {
            *p *= scale;
        }
        Ok(Constellation {
            points,
            bits_per_symbol,
        })
    }

    pub fn qam4() -> Self {
        Constellation::qam(2).expect("4-QAM")
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Bit `b` (0 = first/most significant) of symbol `index`.
    pub fn bit(&self, index: usize, b: usize) -> u8 {
        ((index >> (self.bits_per_symbol - 1 - b)) & 1) as u8
    }

    pub fn index_of_bits(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)
    }

    /// Nearest-point slicer.
    pub fn slice(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// M×N grid of complex symbols, `X[m,n]` with `m` the delay index and `n` the
/// Doppler index. Storage is row-major, which is also the delay-major stacking
/// `[x_0; x_1; …; x_{M−1}]` with `x_m = X[m, ·]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DDFrame {
    m: usize,
    n: usize,
    data: Vec<Complex64>,
}

impl DDFrame {
    pub fn zeros(m: usize, n: usize) -> Self {
        DDFrame {
            m,
            n,
            data: vec![Complex64::new(0.0, 0.0); m * n],
        }
    }

    pub fn from_vec(m: usize, n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::LengthMismatch {
                expected: m * n,
                actual: data.len(),
            });
        }
        Ok(DDFrame { m, n, data })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.data[m * self.n + n]
    }

    pub fn set(&mut self, m: usize, n: usize, v: Complex64) {
        self.data[m * self.n + n] = v;
    }

    pub fn row(&self, m: usize) -> &[Complex64] {
        &self.data[m * self.n..(m + 1) * self.n]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [Complex64] {
        &mut self.data[m * self.n..(m + 1) * self.n]
    }

    /// Delay-major stacked vector of length M·N.
    pub fn as_stacked(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_stacked(self) -> Vec<Complex64> {
        self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Frame of i.i.d. uniformly drawn constellation points.
    pub fn random<R: Rng + ?Sized>(m: usize, n: usize, c: &Constellation, rng: &mut R) -> Self {
        let data = (0..m * n).map(|_| c.point(rng.gen_range(0..c.len()))).collect();
        DDFrame { m, n, data }
    }
}

/// Maps a bit string onto an M×N frame, one symbol per `bits_per_symbol`
/// consecutive bits, filling the frame in stacked order.
pub fn map_bits(bits: &[u8], c: &Constellation, m: usize, n: usize) -> Result<DDFrame> {
    let bps = c.bits_per_symbol();
    let expected = m * n * bps;
    if bits.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: bits.len(),
        });
    }
    let data = bits
        .chunks(bps)
        .map(|chunk| c.point(c.index_of_bits(chunk)))
        .collect();
    Ok(DDFrame { m, n, data })
}

/// Symbol indices of a frame whose entries are exact constellation points
/// (nearest point otherwise).
pub fn frame_indices(frame: &DDFrame, c: &Constellation) -> Vec<usize> {
    frame.as_stacked().iter().map(|&v| c.slice(v)).collect()
}

/// Bits of a sequence of symbol indices.
pub fn indices_to_bits(indices: &[usize], c: &Constellation) -> Vec<u8> {
    let bps = c.bits_per_symbol();
    let mut out = Vec::with_capacity(indices.len() * bps);
    for &s in indices {
        for b in 0..bps {
            out.push(c.bit(s, b));
        }
    }
    out
}

/// Hard demapping by nearest point.
pub fn demap(frame: &DDFrame, c: &Constellation) -> Vec<u8> {
    indices_to_bits(&frame_indices(frame, c), c)
}

pub fn random_bits<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<u8> {
    (0..len).map(|_| rng.gen::<bool>() as u8).collect()
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize) -> Result<T> {
    field
        .map(str::trim)
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::Parse(format!("line {line}: bad or missing field")))
}

/// CSV with columns `m,n,re,im`, one row per entry.
pub fn frame_to_csv(x: &DDFrame) -> String {
    let mut out = String::from("m,n,re,im\n");
    for m in 0..x.m {
        for n in 0..x.n {
            let v = x.get(m, n);
            out.push_str(&format!("{m},{n},{:.17e},{:.17e}\n", v.re, v.im));
        }
    }
    out
}

/// Reads the `m,n,re,im` format into an M×N frame; absent entries are zero.
pub fn frame_from_csv(text: &str, m: usize, n: usize) -> Result<DDFrame> {
    let mut x = DDFrame::zeros(m, n);
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let (r, c): (usize, usize) = (parse_field(f.next(), i + 1)?, parse_field(f.next(), i + 1)?);
        let (re, im): (f64, f64) = (parse_field(f.next(), i + 1)?, parse_field(f.next(), i + 1)?);
        if r >= m || c >= n {
            return Err(Error::Parse(format!("line {}: entry ({r}, {c}) outside a {m}x{n} frame", i + 1)));
        }
        x.set(r, c, Complex64::new(re, im));
    }
    Ok(x)
}
