//! Delay-Doppler input-output matrices.
//!
//! Vectors are stacked delay-major: entry `m·N + n` is `X[m,n]`, which is
//! the storage order of [`DDFrame`]. The ODDM matrix is a block-band matrix
//! of N×N circulant blocks; the OTFS matrix is the classical approximate
//! relation with the `α` correction on wrapped rows.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::channel::PathSet;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::frame::DDFrame;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Linear operator on stacked DD vectors.
pub trait DDOperator {
    /// Side length M·N.
    fn dim(&self) -> usize;

    fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>>;

    fn apply_adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>>;

    /// Nonzeros of each row as `(column, value)`, columns ascending.
    fn rows(&self) -> Vec<Vec<(usize, Complex64)>>;

    fn apply_frame(&self, x: &DDFrame) -> Result<DDFrame> {
        let y = self.apply(x.as_stacked())?;
        DDFrame::from_vec(x.m(), x.n(), y)
    }

    /// Row-major dense expansion; meant for small instances only.
    fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let d = self.dim();
        self.rows()
            .into_iter()
            .map(|row| {
                let mut dense = vec![ZERO; d];
                for (c, v) in row {
                    dense[c] += v;
                }
                dense
            })
            .collect()
    }

    /// Coordinate-list export, columns `row,col,re,im`.
    fn to_coo_csv(&self) -> String {
        let mut out = String::from("row,col,re,im\n");
        for (r, row) in self.rows().into_iter().enumerate() {
            for (c, v) in row {
                let _ = writeln!(out, "{r},{c},{:.17e},{:.17e}", v.re, v.im);
            }
        }
        out
    }
}

fn check_len(len: usize, dim: usize) -> Result<()> {
    if len != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            actual: len,
        });
    }
    Ok(())
}

fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

/// (2K+1)×L matrix of path gains; row `k̂ + K` holds Doppler `k̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerDelayGrid {
    pub k_max: usize,
    pub delays: usize,
    g: Vec<Complex64>,
}

impl DopplerDelayGrid {
    pub fn zeros(k_max: usize, delays: usize) -> Self {
        DopplerDelayGrid {
            k_max,
            delays,
            g: vec![ZERO; (2 * k_max + 1) * delays],
        }
    }

    pub fn get(&self, k: i64, l: usize) -> Complex64 {
        self.g[(k + self.k_max as i64) as usize * self.delays + l]
    }

    fn add(&mut self, k: i64, l: usize, h: Complex64) {
        self.g[(k + self.k_max as i64) as usize * self.delays + l] += h;
    }

    pub fn nonzeros(&self) -> usize {
        self.g.iter().filter(|v| **v != ZERO).count()
    }

    /// Nonzero Doppler components at delay `l`.
    pub fn column(&self, l: usize) -> Vec<(i64, Complex64)> {
        (-(self.k_max as i64)..=self.k_max as i64)
            .map(|k| (k, self.get(k, l)))
            .filter(|(_, g)| *g != ZERO)
            .collect()
    }
}

/// Places every path at `(k̂ + K, l)`, summing coincident paths.
pub fn paths_to_grid(ch: &PathSet, cfg: &SimConfig) -> Result<DopplerDelayGrid> {
    ch.validate(cfg)?;
    let mut grid = DopplerDelayGrid::zeros(cfg.k, cfg.l);
    for p in ch.paths() {
        grid.add(p.k, p.l, p.h);
    }
    Ok(grid)
}

/// N×N circulant `Σ_s c_s·C^s` with `(C^s x)[n] = x[[n−s]_N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CirculantBlock {
    pub n: usize,
    /// `(s, c_s)` with `s ∈ [0, N)`, one entry per distinct shift.
    pub terms: Vec<(usize, Complex64)>,
}

impl CirculantBlock {
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.n];
        for &(s, c) in &self.terms {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += c * x[wrap(i as i64 - s as i64, self.n)];
            }
        }
        y
    }

    /// First column, which determines the block.
    pub fn generator(&self) -> Vec<Complex64> {
        let mut g = vec![ZERO; self.n];
        for &(s, c) in &self.terms {
            g[s] += c;
        }
        g
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let g = self.generator();
        (0..self.n)
            .map(|r| (0..self.n).map(|c| g[wrap(r as i64 - c as i64, self.n)]).collect())
            .collect()
    }
}

/// `H_l^m = Σ_k̂ g(k̂, l)·e^{j2πk̂(m−l)/(MN)}·C^{k̂}`, negative powers read as
/// `C^{[k̂]_N}`.
pub fn build_hlm(grid: &DopplerDelayGrid, l: usize, m: usize, cfg: &SimConfig) -> CirculantBlock {
    let mn = cfg.frame_len() as f64;
    let mut gen = vec![ZERO; cfg.n];
    for (k, g) in grid.column(l) {
        let phase = 2.0 * PI * k as f64 * (m as f64 - l as f64) / mn;
        gen[wrap(k, cfg.n)] += g * Complex64::from_polar(1.0, phase);
    }
    CirculantBlock {
        n: cfg.n,
        terms: gen
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c != ZERO)
            .collect(),
    }
}

/// Sign of the CP wrap rotation `D`; `Flipped` exists to exercise checks
/// that should catch a wrong `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpPhase {
    Correct,
    Flipped,
}

#[derive(Debug, Clone, PartialEq)]
struct BlockEntry {
    l: usize,
    col_block: usize,
    /// Post-multiplied by `D` (row index below the delay).
    wrapped: bool,
    block: CirculantBlock,
}

/// Exact ODDM DD channel matrix: block row `m` holds `H_l^m` at block column
/// `[m−l]_M`, times `D = diag(e^{−j2πn/N})` when `m < l`.
#[derive(Debug, Clone, PartialEq)]
pub struct DDChannelMatrix {
    pub m: usize,
    pub n: usize,
    pub paths: usize,
    cp_phase: CpPhase,
    block_rows: Vec<Vec<BlockEntry>>,
    d_diag: Vec<Complex64>,
}

pub fn build_h(ch: &PathSet, cfg: &SimConfig) -> Result<DDChannelMatrix> {
    build_h_with(ch, cfg, CpPhase::Correct)
}

pub fn build_h_with(ch: &PathSet, cfg: &SimConfig, cp_phase: CpPhase) -> Result<DDChannelMatrix> {
    let grid = paths_to_grid(ch, cfg)?;
    let delays: Vec<usize> = (0..cfg.l).filter(|&l| !grid.column(l).is_empty()).collect();
    let block_rows = (0..cfg.m)
        .map(|m| {
            delays
                .iter()
                .map(|&l| BlockEntry {
                    l,
                    col_block: wrap(m as i64 - l as i64, cfg.m),
                    wrapped: m < l,
                    block: build_hlm(&grid, l, m, cfg),
                })
                .filter(|e| !e.block.terms.is_empty())
                .collect()
        })
        .collect();
    let sign = match cp_phase {
        CpPhase::Correct => -1.0,
        CpPhase::Flipped => 1.0,
    };
    let d_diag = (0..cfg.n)
        .map(|n| Complex64::from_polar(1.0, sign * 2.0 * PI * n as f64 / cfg.n as f64))
        .collect();
    Ok(DDChannelMatrix {
        m: cfg.m,
        n: cfg.n,
        paths: grid.nonzeros(),
        cp_phase,
        block_rows,
        d_diag,
    })
}

impl DDChannelMatrix {
    pub fn cp_phase(&self) -> CpPhase {
        self.cp_phase
    }

    /// Block `(m, l)` in compact form with its wrap flag, if present.
    pub fn block(&self, m: usize, l: usize) -> Option<(&CirculantBlock, usize, bool)> {
        self.block_rows[m]
            .iter()
            .find(|e| e.l == l)
            .map(|e| (&e.block, e.col_block, e.wrapped))
    }
}

impl DDOperator for DDChannelMatrix {
    fn dim(&self) -> usize {
        self.m * self.n
    }

    fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(x.len(), self.dim())?;
        let n = self.n;
        let mut y = vec![ZERO; self.dim()];
        let mut tmp = vec![ZERO; n];
        for (m, entries) in self.block_rows.iter().enumerate() {
            let out = &mut y[m * n..(m + 1) * n];
            for e in entries {
                let src = &x[e.col_block * n..(e.col_block + 1) * n];
                if e.wrapped {
                    for i in 0..n {
                        tmp[i] = src[i] * self.d_diag[i];
                    }
                } else {
                    tmp.copy_from_slice(src);
                }
                for &(s, c) in &e.block.terms {
                    for (i, yi) in out.iter_mut().enumerate() {
                        let j = if i >= s { i - s } else { i + n - s };
                        *yi += c * tmp[j];
                    }
                }
            }
        }
        Ok(y)
    }

    fn apply_adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(y.len(), self.dim())?;
        let n = self.n;
        let mut x = vec![ZERO; self.dim()];
        let mut tmp = vec![ZERO; n];
        for (m, entries) in self.block_rows.iter().enumerate() {
            let src = &y[m * n..(m + 1) * n];
            for e in entries {
                tmp.iter_mut().for_each(|v| *v = ZERO);
                for &(s, c) in &e.block.terms {
                    let cc = c.conj();
                    for (i, yi) in src.iter().enumerate() {
                        let j = if i >= s { i - s } else { i + n - s };
                        tmp[j] += cc * yi;
                    }
                }
                let dst = &mut x[e.col_block * n..(e.col_block + 1) * n];
                for i in 0..n {
                    dst[i] += if e.wrapped { tmp[i] * self.d_diag[i].conj() } else { tmp[i] };
                }
            }
        }
        Ok(x)
    }

    fn rows(&self) -> Vec<Vec<(usize, Complex64)>> {
        let n = self.n;
        let mut rows = vec![Vec::new(); self.dim()];
        for (m, entries) in self.block_rows.iter().enumerate() {
            for e in entries {
                for &(s, c) in &e.block.terms {
                    for i in 0..n {
                        let j = wrap(i as i64 - s as i64, n);
                        let v = if e.wrapped { c * self.d_diag[j] } else { c };
                        rows[m * n + i].push((e.col_block * n + j, v));
                    }
                }
            }
        }
        for row in &mut rows {
            merge_row(row);
        }
        rows
    }
}

fn merge_row(row: &mut Vec<(usize, Complex64)>) {
    row.sort_by_key(|(c, _)| *c);
    let mut out: Vec<(usize, Complex64)> = Vec::with_capacity(row.len());
    for &(c, v) in row.iter() {
        match out.last_mut() {
            Some((lc, lv)) if *lc == c => *lv += v,
            _ => out.push((c, v)),
        }
    }
    *row = out;
}

/// Compressed sparse rows; used for the approximate OTFS relation and for
/// any operator given explicitly by its entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseMatrix {
    pub fn from_rows(mut rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        for row in &mut rows {
            merge_row(row);
        }
        SparseMatrix { dim: rows.len(), rows }
    }
}

impl DDOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(x.len(), self.dim)?;
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect())
    }

    fn apply_adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(y.len(), self.dim)?;
        let mut x = vec![ZERO; self.dim];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                x[c] += v.conj() * y[r];
            }
        }
        Ok(x)
    }

    fn rows(&self) -> Vec<Vec<(usize, Complex64)>> {
        self.rows.clone()
    }
}

/// Approximate OTFS DD relation: row `(m,n)` couples to
/// `([m−l]_M, [n−k]_N)` with `h·e^{j2π(m−l)k/(MN)}·α`, where `α = 1` for
/// `m ≥ l` and `α = ((N−1)/N)·e^{−j2π[n−k]_N/N}` for `m < l`.
pub fn build_otfs_h(ch: &PathSet, cfg: &SimConfig) -> Result<SparseMatrix> {
    ch.validate(cfg)?;
    let (m_len, n_len) = (cfg.m, cfg.n);
    let mn = cfg.frame_len() as f64;
    let shrink = (n_len as f64 - 1.0) / n_len as f64;
    let mut rows = vec![Vec::new(); m_len * n_len];
    for m in 0..m_len {
        for p in ch.paths() {
            let dm = m as i64 - p.l as i64;
            let col_m = wrap(dm, m_len);
            let base = p.h * Complex64::from_polar(1.0, 2.0 * PI * dm as f64 * p.k as f64 / mn);
            for n in 0..n_len {
                let col_n = wrap(n as i64 - p.k, n_len);
                let alpha = if m >= p.l {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::from_polar(shrink, -2.0 * PI * col_n as f64 / n_len as f64)
                };
                rows[m * n_len + n].push((col_m * n_len + col_n, base * alpha));
            }
        }
    }
    Ok(SparseMatrix::from_rows(rows))
}
