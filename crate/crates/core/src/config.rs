//! Scenario configuration: the validated [`SimConfig`], the flat
//! `key = value` file format, and derived time/frequency quantities.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Raw key-value map as read from a config file or built programmatically.
pub type RawConfig = BTreeMap<String, String>;

/// How the finite-support square-root Nyquist pulse is obtained from the
/// truncated square-root raised cosine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PulseDesign {
    /// Hard truncation at ±Q·T/M followed by energy renormalisation.
    Truncated,
    /// Hard truncation followed by the minimum-norm tap correction that makes
    /// the sampled autocorrelation vanish at every nonzero multiple of T/M.
    #[default]
    NyquistCorrected,
}

impl PulseDesign {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "truncated" => Ok(PulseDesign::Truncated),
            "corrected" | "nyquist" | "nyquist_corrected" => Ok(PulseDesign::NyquistCorrected),
            other => Err(Error::InvalidValue {
                key: "pulse".into(),
                reason: format!("unknown pulse design `{other}` (expected truncated|corrected)"),
            }),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PulseDesign::Truncated => "truncated",
            PulseDesign::NyquistCorrected => "corrected",
        }
    }
}

/// Validated scenario parameters.
///
/// Field names follow the usual grid notation: `m` delay bins (ODDM symbols),
/// `n` Doppler bins (subcarriers per ODDM symbol), `q` the pulse half-span in
/// units of T/M, `l` the CP length plus one, and `k` the maximum Doppler index.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f: f64,
    pub q: usize,
    pub rolloff: f64,
    pub l: usize,
    pub k: usize,
    pub oversampling: usize,
    pub seed: u64,
    pub pulse_design: PulseDesign,
}

impl SimConfig {
    /// Builds and validates a configuration from explicit values.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        n: usize,
        delta_f: f64,
        q: usize,
        rolloff: f64,
        l: usize,
        k: usize,
        oversampling: usize,
        seed: u64,
    ) -> Result<Self> {
        let cfg = SimConfig {
            m,
            n,
            delta_f,
            q,
            rolloff,
            l,
            k,
            oversampling,
            seed,
            pulse_design: PulseDesign::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Desk-scale default scenario (M=64, N=16, Q=8, L=9, K=3).
    pub fn desk() -> Self {
        SimConfig::new(64, 16, 15e3, 8, 0.1, 9, 3, 16, 1).expect("desk config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("M", self.m),
            ("N", self.n),
            ("Q", self.q),
            ("L", self.l),
            ("oversampling", self.oversampling),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::InvalidValue {
                    key: key.into(),
                    reason: "must be a positive integer".into(),
                });
            }
        }
        if !(self.delta_f.is_finite() && self.delta_f > 0.0) {
            return Err(Error::InvalidValue {
                key: "delta_f".into(),
                reason: "must be a positive frequency".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::InvalidValue {
                key: "rolloff".into(),
                reason: "must lie in [0, 1]".into(),
            });
        }
        if 2 * self.q >= self.m {
            return Err(Error::Constraint(format!(
                "2Q ≥ M (Q={}, M={})",
                self.q, self.m
            )));
        }
        if self.l - 1 + 2 * self.q >= self.m * self.n {
            return Err(Error::Constraint(format!(
                "L−1+2Q ≥ M·N (L={}, Q={}, M·N={})",
                self.l,
                self.q,
                self.m * self.n
            )));
        }
        if 2 * self.k >= self.n {
            return Err(Error::Constraint(format!(
                "K ≥ N/2 (K={}, N={})",
                self.k, self.n
            )));
        }
        Ok(())
    }

    /// Copy with a different oversampling factor.
    pub fn with_oversampling(&self, oversampling: usize) -> Self {
        SimConfig {
            oversampling,
            ..self.clone()
        }
    }

    pub fn with_pulse_design(&self, pulse_design: PulseDesign) -> Self {
        SimConfig {
            pulse_design,
            ..self.clone()
        }
    }

    /// Symbol period T = 1/Δf in seconds.
    pub fn t_symbol(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Delay resolution T/M in seconds.
    pub fn delay_resolution(&self) -> f64 {
        self.t_symbol() / self.m as f64
    }

    /// Doppler resolution 1/(N·T) in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        self.delta_f / self.n as f64
    }

    /// Frame span N·T in seconds.
    pub fn frame_span(&self) -> f64 {
        self.n as f64 * self.t_symbol()
    }

    /// Symbol-rate sampling rate M/T.
    pub fn symbol_rate(&self) -> f64 {
        self.m as f64 * self.delta_f
    }

    /// Oversampled rate O·M/T.
    pub fn sample_rate(&self) -> f64 {
        self.oversampling as f64 * self.symbol_rate()
    }

    /// Grid step of the oversampled emulation, T/(M·O).
    pub fn sample_interval(&self) -> f64 {
        1.0 / self.sample_rate()
    }

    /// Number of DD symbols M·N.
    pub fn frame_len(&self) -> usize {
        self.m * self.n
    }

    /// CP length in symbol-rate samples, L−1.
    pub fn cp_len(&self) -> usize {
        self.l - 1
    }
}

/// Converts a CP duration in seconds to `L` (CP samples at rate M/T, plus one).
pub fn l_from_cp_duration(cp_seconds: f64, m: usize, delta_f: f64) -> usize {
    (cp_seconds * m as f64 * delta_f).round() as usize + 1
}

fn lookup<'a>(raw: &'a RawConfig, names: &[&str]) -> Option<&'a str> {
    names.iter().find_map(|k| raw.get(*k).map(|s| s.as_str()))
}

fn parse_usize(raw: &RawConfig, names: &[&str]) -> Result<Option<usize>> {
    lookup(raw, names)
        .map(|v| {
            v.trim().parse::<usize>().map_err(|e| Error::InvalidValue {
                key: names[0].into(),
                reason: e.to_string(),
            })
        })
        .transpose()
}

fn parse_f64(raw: &RawConfig, names: &[&str]) -> Result<Option<f64>> {
    lookup(raw, names)
        .map(|v| {
            v.trim().parse::<f64>().map_err(|e| Error::InvalidValue {
                key: names[0].into(),
                reason: e.to_string(),
            })
        })
        .transpose()
}

fn required<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::MissingKey(key.into()))
}

/// Builds a validated [`SimConfig`] from a raw key-value map.
///
/// Required keys: `M`, `N`, `delta_f`, `Q`, `rolloff`, `K`, and either `L`
/// or `cp_seconds`. Optional: `oversampling` (default 16), `seed`
/// (default 0), `pulse` (`corrected` or `truncated`).
pub fn make_config(raw: &RawConfig) -> Result<SimConfig> {
    let m = required(parse_usize(raw, &["M", "m"])?, "M")?;
    let n = required(parse_usize(raw, &["N", "n"])?, "N")?;
    let delta_f = required(parse_f64(raw, &["delta_f"])?, "delta_f")?;
    let q = required(parse_usize(raw, &["Q", "q"])?, "Q")?;
    let rolloff = required(parse_f64(raw, &["rolloff"])?, "rolloff")?;
    let k = required(parse_usize(raw, &["K", "k"])?, "K")?;
    let l = match parse_usize(raw, &["L", "l"])? {
        Some(l) => l,
        None => {
            let cp = required(parse_f64(raw, &["cp_seconds"])?, "L")?;
            l_from_cp_duration(cp, m, delta_f)
        }
    };
    let oversampling = parse_usize(raw, &["oversampling", "O"])?.unwrap_or(16);
    let seed = lookup(raw, &["seed"])
        .map(|v| {
            v.trim().parse::<u64>().map_err(|e| Error::InvalidValue {
                key: "seed".into(),
                reason: e.to_string(),
            })
        })
        .transpose()?
        .unwrap_or(0);
    let pulse_design = lookup(raw, &["pulse"])
        .map(PulseDesign::parse)
        .transpose()?
        .unwrap_or_default();
    let cfg = SimConfig {
        m,
        n,
        delta_f,
        q,
        rolloff,
        l,
        k,
        oversampling,
        seed,
        pulse_design,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parses the flat `key = value` format (`#` starts a comment).
pub fn parse_kv(text: &str) -> Result<RawConfig> {
    let mut out = RawConfig::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_kv(&text)
}

/// Renders a config back into the `key = value` format.
pub fn to_kv(cfg: &SimConfig) -> String {
    format!(
        "M = {}\nN = {}\ndelta_f = {}\nQ = {}\nrolloff = {}\nL = {}\nK = {}\noversampling = {}\nseed = {}\npulse = {}\n",
        cfg.m,
        cfg.n,
        cfg.delta_f,
        cfg.q,
        cfg.rolloff,
        cfg.l,
        cfg.k,
        cfg.oversampling,
        cfg.seed,
        cfg.pulse_design.as_str()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, &str)]) -> RawConfig {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn table_one_scenario_is_valid() {
        let cfg = make_config(&raw(&[
            ("M", "512"),
            ("N", "64"),
            ("delta_f", "15e3"),
            ("Q", "20"),
            ("rolloff", "0.1"),
            ("L", "25"),
            ("K", "3"),
        ]))
        .unwrap();
        assert_eq!(cfg.m, 512);
        assert_eq!(cfg.oversampling, 16);
        assert!((cfg.symbol_rate() - 7.68e6).abs() < 1e-6);
    }

    #[test]
    fn rejects_pulse_wider_than_half_the_grid() {
        let err = make_config(&raw(&[
            ("M", "16"),
            ("N", "8"),
            ("delta_f", "15e3"),
            ("Q", "8"),
            ("rolloff", "0.1"),
            ("L", "2"),
            ("K", "1"),
        ]))
        .unwrap_err();
        assert!(err.to_string().contains("2Q ≥ M"), "{err}");
    }

    #[test]
    fn cp_duration_maps_to_l() {
        assert_eq!(l_from_cp_duration(3.125e-6, 512, 15e3), 25);
        let cfg = make_config(&raw(&[
            ("M", "512"),
            ("N", "32"),
            ("delta_f", "15e3"),
            ("Q", "20"),
            ("rolloff", "0.1"),
            ("cp_seconds", "3.125e-6"),
            ("K", "5"),
        ]))
        .unwrap();
        assert_eq!(cfg.l, 25);
        assert_eq!(cfg.cp_len(), 24);
    }

    #[test]
    fn missing_key_is_named() {
        let err = make_config(&raw(&[("M", "64")])).unwrap_err();
        assert_eq!(err, Error::MissingKey("N".into()));
    }

    #[test]
    fn other_constraints_are_named() {
        let err = SimConfig::new(8, 2, 15e3, 3, 0.1, 12, 0, 1, 0).unwrap_err();
        assert!(err.to_string().contains("L−1+2Q"), "{err}");
        let err = SimConfig::new(64, 16, 15e3, 8, 0.1, 9, 8, 1, 0).unwrap_err();
        assert!(err.to_string().contains("K ≥ N/2"), "{err}");
        let err = SimConfig::new(64, 16, 15e3, 8, 1.5, 9, 3, 1, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidValue { .. }));
    }

    #[test]
    fn derived_quantities_are_consistent() {
        let cfg = SimConfig::desk();
        let product = cfg.delay_resolution() * cfg.m as f64 * cfg.delta_f;
        assert!((product - 1.0).abs() <= 4.0 * f64::EPSILON);
        assert!((cfg.doppler_resolution() * cfg.frame_span() - 1.0).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn kv_parser_handles_comments_and_roundtrips() {
        let text = "# scenario\nM = 64 # delay bins\nN=16\n\n delta_f = 15000\nQ = 8\nrolloff = 0.1\nL = 9\nK = 3\n";
        let cfg = make_config(&parse_kv(text).unwrap()).unwrap();
        let again = make_config(&parse_kv(&to_kv(&cfg)).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert!(parse_kv("no equals sign").is_err());
    }
}
