//! DD-domain symbol detection: Gaussian-approximation message passing on
//! the sparse factor graph of `y = Hx + z`, plus MMSE and exhaustive ML
//! references.

use num_complex::Complex64;

use crate::ddmatrix::DDOperator;
use crate::error::{Error, Result};
use crate::frame::Constellation;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Bipartite graph between observations (rows of H) and variables
/// (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    /// Per observation: `(variable, coefficient)`.
    pub obs: Vec<Vec<(usize, Complex64)>>,
    /// Per variable: `(observation, position in that observation's list)`.
    pub vars: Vec<Vec<(usize, usize)>>,
}

impl FactorGraph {
    pub fn edges(&self) -> usize {
        self.obs.iter().map(Vec::len).sum()
    }

    pub fn size(&self) -> usize {
        self.obs.len()
    }

    /// Relabels variables and observations by `perm` (new index `i` is old
    /// index `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> FactorGraph {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let rows = perm
            .iter()
            .map(|&old| self.obs[old].iter().map(|&(v, c)| (inv[v], c)).collect())
            .collect();
        FactorGraph::from_rows(rows)
    }

    pub fn from_rows(obs: Vec<Vec<(usize, Complex64)>>) -> Self {
        let mut vars = vec![Vec::new(); obs.len()];
        for (i, row) in obs.iter().enumerate() {
            for (pos, &(j, _)) in row.iter().enumerate() {
                vars[j].push((i, pos));
            }
        }
        FactorGraph { obs, vars }
    }
}

/// Adjacency of `h`, taken from its sparse rows.
pub fn build_graph<H: DDOperator + ?Sized>(h: &H) -> FactorGraph {
    FactorGraph::from_rows(h.rows())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSettings {
    pub max_iters: usize,
    pub damping: f64,
    pub convergence_tol: f64,
    pub noise_var: f64,
}

impl DetectorSettings {
    pub fn new(noise_var: f64) -> Self {
        DetectorSettings {
            max_iters: 30,
            damping: 0.5,
            convergence_tol: 1e-4,
            noise_var,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::InvalidValue {
                key: key.into(),
                reason: reason.into(),
            })
        };
        if self.max_iters == 0 {
            return bad("mp_iters", "must be at least 1");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("mp_damping", "must lie in (0, 1]");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("mp_tol", "must be positive");
        }
        if !(self.noise_var > 0.0) || !self.noise_var.is_finite() {
            return bad("noise_var", "must be positive and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpOutput {
    pub decisions: Vec<usize>,
    /// Row `j` is the posterior of variable `j` over the alphabet.
    pub posteriors: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

fn normalise_log(logp: &mut [f64]) {
    let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logp.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logp.iter_mut() {
        *v /= sum;
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Message passing with Gaussian interference approximation, flooding
/// schedule and damped variable-to-observation probabilities. Convergence
/// is declared when no variable-to-observation probability moves by more
/// than `convergence_tol` in an iteration.
pub fn mp_detect(
    y: &[Complex64],
    graph: &FactorGraph,
    settings: &DetectorSettings,
    alphabet: &Constellation,
) -> Result<MpOutput> {
    settings.validate()?;
    if y.len() != graph.size() {
        return Err(Error::LengthMismatch {
            expected: graph.size(),
            actual: y.len(),
        });
    }
    let q = alphabet.len();
    let pts = alphabet.points();
    let energy: Vec<f64> = pts.iter().map(|a| a.norm_sqr()).collect();
    // edge-indexed storage following the observation lists
    let offsets: Vec<usize> = graph
        .obs
        .iter()
        .scan(0, |acc, row| {
            let start = *acc;
            *acc += row.len();
            Some(start)
        })
        .collect();
    let edges = graph.edges();
    let mut p_vo = vec![1.0 / q as f64; edges * q];
    let mut mu_ov = vec![ZERO; edges];
    let mut var_ov = vec![0.0; edges];
    let mut edge_mu = vec![ZERO; edges];
    let mut edge_var = vec![0.0; edges];
    let mut logp = vec![0.0; q];
    let mut total = vec![0.0; q];
    let mut posteriors = vec![vec![1.0 / q as f64; q]; graph.size()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iters {
        iterations += 1;
        // observation to variable: extrinsic interference statistics
        for (i, row) in graph.obs.iter().enumerate() {
            let base = offsets[i];
            let mut mu = ZERO;
            let mut var = settings.noise_var;
            for (e, &(_, h)) in row.iter().enumerate() {
                let p = &p_vo[(base + e) * q..(base + e + 1) * q];
                let mut m = ZERO;
                let mut s = 0.0;
                for a in 0..q {
                    m += pts[a] * p[a];
                    s += energy[a] * p[a];
                }
                let m = m * h;
                let v = (s * h.norm_sqr() - m.norm_sqr()).max(0.0);
                edge_mu[base + e] = m;
                edge_var[base + e] = v;
                mu += m;
                var += v;
            }
            for e in 0..row.len() {
                mu_ov[base + e] = mu - edge_mu[base + e];
                var_ov[base + e] = (var - edge_var[base + e]).max(settings.noise_var);
            }
        }
        // variable to observation, and posteriors
        let mut delta: f64 = 0.0;
        for (j, links) in graph.vars.iter().enumerate() {
            total.iter_mut().for_each(|v| *v = 0.0);
            let ll = |i: usize, pos: usize, a: usize| -> f64 {
                let e = offsets[i] + pos;
                let h = graph.obs[i][pos].1;
                -(y[i] - mu_ov[e] - h * pts[a]).norm_sqr() / var_ov[e]
            };
            for &(i, pos) in links {
                for a in 0..q {
                    total[a] += ll(i, pos, a);
                }
            }
            for &(i, pos) in links {
                for a in 0..q {
                    logp[a] = total[a] - ll(i, pos, a);
                }
                normalise_log(&mut logp);
                let e = offsets[i] + pos;
                let p = &mut p_vo[e * q..(e + 1) * q];
                for a in 0..q {
                    let new = settings.damping * logp[a] + (1.0 - settings.damping) * p[a];
                    delta = delta.max((new - p[a]).abs());
                    p[a] = new;
                }
            }
            let post = &mut posteriors[j];
            post.copy_from_slice(&total);
            normalise_log(post);
        }
        if delta < settings.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(MpOutput {
        decisions: posteriors.iter().map(|p| argmax(p)).collect(),
        posteriors,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmseOutput {
    pub estimate: Vec<Complex64>,
    pub decisions: Vec<usize>,
    pub iterations: usize,
}

/// Solves `(HᴴH + σ²I)x = Hᴴy` by conjugate gradients using only products
/// with `H` and `Hᴴ`, then slices.
pub fn mmse_detect<H: DDOperator + ?Sized>(
    y: &[Complex64],
    h: &H,
    noise_var: f64,
    alphabet: &Constellation,
) -> Result<MmseOutput> {
    let dim = h.dim();
    let normal = |v: &[Complex64]| -> Result<Vec<Complex64>> {
        let mut out = h.apply_adjoint(&h.apply(v)?)?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += x * noise_var;
        }
        Ok(out)
    };
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(u, v)| u.conj() * v).sum() };
    let b = h.apply_adjoint(y)?;
    let b_norm = dot(&b, &b).re.sqrt();
    let mut x = vec![ZERO; dim];
    if b_norm == 0.0 {
        return Ok(MmseOutput {
            decisions: x.iter().map(|v| alphabet.slice(*v)).collect(),
            estimate: x,
            iterations: 0,
        });
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r).re;
    let tol = 1e-13 * b_norm;
    let max_iters = 10 * dim + 10;
    let mut iterations = 0;
    while rr.sqrt() > tol {
        if iterations >= max_iters {
            return Err(Error::NoConvergence {
                residual: rr.sqrt() / b_norm,
                iterations,
            });
        }
        iterations += 1;
        let ap = normal(&p)?;
        let pap = dot(&p, &ap).re;
        if pap <= 0.0 {
            return Err(Error::NoConvergence {
                residual: rr.sqrt() / b_norm,
                iterations,
            });
        }
        let alpha = rr / pap;
        for i in 0..dim {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rr_new = dot(&r, &r).re;
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..dim {
            p[i] = r[i] + p[i] * beta;
        }
    }
    Ok(MmseOutput {
        decisions: x.iter().map(|v| alphabet.slice(*v)).collect(),
        estimate: x,
        iterations,
    })
}

/// Largest `MN·bits_per_symbol` accepted by [`ml_detect`].
pub const ML_MAX_BITS: usize = 24;

/// Exhaustive minimisation of `‖y − Hx‖²`. Candidates are visited in
/// lexicographic order of symbol indices and only a strictly smaller metric
/// replaces the incumbent, so ties resolve to the lexicographically
/// smallest assignment.
pub fn ml_detect<H: DDOperator + ?Sized>(y: &[Complex64], h: &H, alphabet: &Constellation) -> Result<Vec<usize>> {
    let dim = h.dim();
    let bits = dim * alphabet.bits_per_symbol();
    if bits > ML_MAX_BITS {
        return Err(Error::InstanceTooLarge(bits));
    }
    if y.len() != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            actual: y.len(),
        });
    }
    let q = alphabet.len();
    let pts = alphabet.points();
    // column lists of H
    let mut cols: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); dim];
    for (i, row) in h.rows().into_iter().enumerate() {
        for (j, v) in row {
            cols[j].push((i, v));
        }
    }
    let mut digits = vec![0usize; dim];
    let x0 = vec![pts[0]; dim];
    let hx = h.apply(&x0)?;
    let mut r: Vec<Complex64> = y.iter().zip(&hx).map(|(a, b)| a - b).collect();
    let mut metric: f64 = r.iter().map(|v| v.norm_sqr()).sum();
    let scale = y.iter().map(|v| v.norm_sqr()).sum::<f64>().max(1.0);
    let tol = 1e-9 * scale;
    let mut best = metric;
    let mut best_digits = digits.clone();
    let change = |r: &mut Vec<Complex64>, metric: &mut f64, j: usize, from: usize, to: usize| {
        let d = pts[to] - pts[from];
        for &(i, v) in &cols[j] {
            let old = r[i].norm_sqr();
            r[i] -= v * d;
            *metric += r[i].norm_sqr() - old;
        }
    };
    let mut visited: u64 = 1;
    loop {
        // odometer: the last position moves fastest
        let mut pos = dim;
        loop {
            if pos == 0 {
                return Ok(best_digits);
            }
            pos -= 1;
            if digits[pos] + 1 < q {
                change(&mut r, &mut metric, pos, digits[pos], digits[pos] + 1);
                digits[pos] += 1;
                break;
            }
            change(&mut r, &mut metric, pos, digits[pos], 0);
            digits[pos] = 0;
        }
        visited += 1;
        if visited % 65_536 == 0 {
            // drop accumulated rounding in the running metric
            metric = r.iter().map(|v| v.norm_sqr()).sum();
        }
        if metric < best - tol {
            best = metric;
            best_digits.copy_from_slice(&digits);
        }
    }
}
