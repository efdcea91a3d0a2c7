//! Experiment drivers: BER sweeps, PSD/OOBE measurement, the waveform vs
//! matrix input-output check and the aggregated self-verification.
//!
//! Every random draw comes from a stream keyed by `(seed, purpose, trial)`,
//! so results do not depend on thread count or scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{add_awgn, apply_channel, gen_eva_channel, gen_ongrid_channel, noise_psd, PathSet, Profile};
use crate::coding::{conv_encode, soft_llrs, viterbi_decode, viterbi_decode_hard, CodedLayout, ConvCode, Interleaver};
use crate::config::{make_config, parse_kv, to_kv, RawConfig, SimConfig};
use crate::ddmatrix::{build_h, build_h_with, build_otfs_h, CpPhase, DDOperator};
use crate::detect::{build_graph, ml_detect, mmse_detect, mp_detect, DetectorSettings};
use crate::error::{Error, Result};
use crate::frame::{frame_indices, indices_to_bits, map_bits, random_bits, Constellation, DDFrame};
use crate::modem::{OddmModem, OtfsModem};
use crate::psd::{welch, Psd};
use crate::pulse::verify_orthogonality;
use crate::rng::stream;
use crate::waveform::concatenate;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;
/// One-sided 95% normal quantile.
const Z95_ONE_SIDED: f64 = 1.6448536269514722;

pub const SCENARIOS: [&str; 4] = ["desk", "psd-desk", "eva-120", "eva-500"];

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    Identity,
    OnGrid { paths: usize, profile: Profile },
    Eva { speed_kmh: f64, carrier_hz: f64 },
}

impl ChannelSource {
    pub fn draw(&self, cfg: &SimConfig, seed: u64, label: &str, trial: u64) -> Result<PathSet> {
        let mut rng = stream(seed, label, trial);
        match self {
            ChannelSource::Identity => Ok(PathSet::identity()),
            ChannelSource::OnGrid { paths, profile } => gen_ongrid_channel(*paths, cfg, *profile, false, &mut rng),
            ChannelSource::Eva { speed_kmh, carrier_hz } => gen_eva_channel(*speed_kmh, *carrier_hz, cfg, &mut rng),
        }
    }

    fn describe(&self) -> String {
        match self {
            ChannelSource::Identity => "channel = identity\n".into(),
            ChannelSource::OnGrid { paths, profile } => {
                format!("channel = ongrid\nP = {paths}\nprofile = {}\n", profile.as_str())
            }
            ChannelSource::Eva { speed_kmh, carrier_hz } => {
                format!("channel = eva\nspeed_kmh = {speed_kmh}\ncarrier_hz = {carrier_hz}\n")
            }
        }
    }
}

/// Message-passing parameters; the noise variance is set per SNR point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpParams {
    pub max_iters: usize,
    pub damping: f64,
    pub tol: f64,
}

impl Default for MpParams {
    fn default() -> Self {
        let d = DetectorSettings::new(1.0);
        MpParams {
            max_iters: d.max_iters,
            damping: d.damping,
            tol: d.convergence_tol,
        }
    }
}

impl MpParams {
    fn settings(&self, noise_var: f64) -> DetectorSettings {
        DetectorSettings {
            max_iters: self.max_iters,
            damping: self.damping,
            convergence_tol: self.tol,
            noise_var,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: String,
    pub cfg: SimConfig,
    pub snr_db: Vec<f64>,
    /// Frame budget per SNR point.
    pub trials: usize,
    /// Early stop once both schemes reach this many bit errors.
    pub min_errors: u64,
    /// Trials per lockstep batch; the stop rule is checked between batches.
    pub batch: usize,
    pub mp: MpParams,
    pub coding: bool,
    pub bits_per_symbol: usize,
    pub channel: ChannelSource,
    /// Emulation-grid oversampling of the ODDM link (OTFS runs at symbol rate).
    pub link_oversampling: usize,
    pub otfs_cp: bool,
    pub psd_frames: usize,
    pub io_trials: usize,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn scenario(name: &str) -> Result<Self> {
        let desk = SimConfig::desk();
        let base = ExperimentSpec {
            scenario: name.to_string(),
            cfg: desk.clone(),
            snr_db: vec![6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0],
            trials: 10_000,
            min_errors: 500,
            batch: 250,
            mp: MpParams::default(),
            coding: false,
            bits_per_symbol: 2,
            channel: ChannelSource::OnGrid {
                paths: 4,
                profile: Profile::Uniform,
            },
            link_oversampling: 4,
            otfs_cp: true,
            psd_frames: 24,
            io_trials: 100,
            threads: None,
            out_dir: None,
        };
        let spec = match name {
            "desk" => base,
            "psd-desk" => ExperimentSpec {
                cfg: SimConfig::new(128, 16, 15e3, 20, 0.1, 9, 3, 16, desk.seed)?,
                ..base
            },
            "eva-120" => ExperimentSpec {
                cfg: SimConfig::new(512, 64, 15e3, 20, 0.1, 25, 3, 16, desk.seed)?,
                snr_db: (0..=10).map(|i| 2.0 * i as f64).collect(),
                trials: 100_000,
                coding: true,
                channel: ChannelSource::Eva {
                    speed_kmh: 120.0,
                    carrier_hz: 5e9,
                },
                ..base
            },
            "eva-500" => ExperimentSpec {
                cfg: SimConfig::new(512, 32, 15e3, 20, 0.1, 25, 5, 16, desk.seed)?,
                snr_db: (0..=10).map(|i| 2.0 * i as f64).collect(),
                trials: 100_000,
                coding: true,
                channel: ChannelSource::Eva {
                    speed_kmh: 500.0,
                    carrier_hz: 5e9,
                },
                ..base
            },
            other => {
                return Err(Error::InvalidValue {
                    key: "scenario".into(),
                    reason: format!("unknown scenario {other:?}; known: {}", SCENARIOS.join(", ")),
                })
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Scenario named by the `scenario` key (default `desk`) with every other
    /// key applied on top.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let name = raw.get("scenario").map(|s| s.trim()).unwrap_or("desk");
        let mut spec = ExperimentSpec::scenario(name)?;
        spec.apply(raw)?;
        Ok(spec)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        ExperimentSpec::from_raw(&parse_kv(text)?)
    }

    /// Applies config keys to this spec. Unknown keys are an error.
    pub fn apply(&mut self, raw: &RawConfig) -> Result<()> {
        let mut cfg_keys = parse_kv(&to_kv(&self.cfg))?;
        let mut cfg_touched = false;
        let mut channel_kind: Option<String> = None;
        let mut paths = None;
        let mut profile = None;
        let mut speed = None;
        let mut carrier = None;
        for (key, value) in raw {
            let v = value.trim();
            match key.as_str() {
                "scenario" => {}
                "M" | "m" => set_cfg(&mut cfg_keys, &mut cfg_touched, "M", v),
                "N" | "n" => set_cfg(&mut cfg_keys, &mut cfg_touched, "N", v),
                "Q" | "q" => set_cfg(&mut cfg_keys, &mut cfg_touched, "Q", v),
                "K" | "k" => set_cfg(&mut cfg_keys, &mut cfg_touched, "K", v),
                "L" | "l" => set_cfg(&mut cfg_keys, &mut cfg_touched, "L", v),
                "O" | "oversampling" => set_cfg(&mut cfg_keys, &mut cfg_touched, "oversampling", v),
                "delta_f" | "rolloff" | "seed" | "pulse" => set_cfg(&mut cfg_keys, &mut cfg_touched, key, v),
                "cp_seconds" => {
                    if !raw.contains_key("L") && !raw.contains_key("l") {
                        cfg_keys.remove("L");
                    }
                    set_cfg(&mut cfg_keys, &mut cfg_touched, key, v)
                }
                "snr_db" => self.snr_db = parse_list(key, v)?,
                "trials" => self.trials = parse_num(key, v)?,
                "min_errors" => self.min_errors = parse_num(key, v)?,
                "batch" => self.batch = parse_num(key, v)?,
                "mp_iters" => self.mp.max_iters = parse_num(key, v)?,
                "mp_damping" => self.mp.damping = parse_num(key, v)?,
                "mp_tol" => self.mp.tol = parse_num(key, v)?,
                "coding" => self.coding = parse_bool(key, v)?,
                "bits_per_symbol" => self.bits_per_symbol = parse_num(key, v)?,
                "link_oversampling" => self.link_oversampling = parse_num(key, v)?,
                "otfs_cp" => self.otfs_cp = parse_bool(key, v)?,
                "psd_frames" => self.psd_frames = parse_num(key, v)?,
                "io_trials" => self.io_trials = parse_num(key, v)?,
                "threads" => self.threads = Some(parse_num(key, v)?),
                "out" | "out_dir" => self.out_dir = Some(PathBuf::from(v)),
                "channel" => channel_kind = Some(v.to_ascii_lowercase()),
                "P" | "p" | "paths" => paths = Some(parse_num::<usize>(key, v)?),
                "profile" => profile = Some(Profile::parse(v)?),
                "speed_kmh" | "speed" => speed = Some(parse_num::<f64>(key, v)?),
                "carrier_hz" | "carrier" => carrier = Some(parse_num::<f64>(key, v)?),
                other => {
                    return Err(Error::InvalidValue {
                        key: other.into(),
                        reason: "unknown configuration key".into(),
                    })
                }
            }
        }
        if cfg_touched {
            self.cfg = make_config(&cfg_keys)?;
        }
        let kind = channel_kind.unwrap_or_else(|| {
            match self.channel {
                ChannelSource::Identity => "identity",
                ChannelSource::OnGrid { .. } => "ongrid",
                ChannelSource::Eva { .. } => "eva",
            }
            .into()
        });
        self.channel = match (kind.as_str(), &self.channel) {
            ("identity", _) => ChannelSource::Identity,
            ("ongrid", current) => {
                let (p0, pr0) = match current {
                    ChannelSource::OnGrid { paths, profile } => (*paths, *profile),
                    _ => (4, Profile::Uniform),
                };
                ChannelSource::OnGrid {
                    paths: paths.unwrap_or(p0),
                    profile: profile.unwrap_or(pr0),
                }
            }
            ("eva", current) => {
                let (s0, c0) = match current {
                    ChannelSource::Eva { speed_kmh, carrier_hz } => (*speed_kmh, *carrier_hz),
                    _ => (120.0, 5e9),
                };
                ChannelSource::Eva {
                    speed_kmh: speed.unwrap_or(s0),
                    carrier_hz: carrier.unwrap_or(c0),
                }
            }
            (other, _) => {
                return Err(Error::InvalidValue {
                    key: "channel".into(),
                    reason: format!("expected identity, ongrid or eva, got {other:?}"),
                })
            }
        };
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        let bad = |key: &str, reason: &str| {
            Err(Error::InvalidValue {
                key: key.into(),
                reason: reason.into(),
            })
        };
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        if self.snr_db.is_empty() {
            return bad("snr_db", "needs at least one SNR point");
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return bad("snr_db", "NaN SNR");
        }
        if self.batch == 0 {
            return bad("batch", "must be at least 1");
        }
        if self.link_oversampling == 0 {
            return bad("link_oversampling", "must be at least 1");
        }
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1");
        }
        Constellation::qam(self.bits_per_symbol)?;
        self.mp.settings(1.0).validate()
    }

    /// Config echo in the key-value format.
    pub fn to_kv(&self) -> String {
        let mut out = format!("scenario = {}\n", self.scenario);
        out.push_str(&to_kv(&self.cfg));
        let snr: Vec<String> = self.snr_db.iter().map(|s| s.to_string()).collect();
        let _ = write!(
            out,
            "snr_db = {}\ntrials = {}\nmin_errors = {}\nbatch = {}\nmp_iters = {}\nmp_damping = {}\nmp_tol = {}\ncoding = {}\nbits_per_symbol = {}\nlink_oversampling = {}\notfs_cp = {}\npsd_frames = {}\nio_trials = {}\n",
            snr.join(", "),
            self.trials,
            self.min_errors,
            self.batch,
            self.mp.max_iters,
            self.mp.damping,
            self.mp.tol,
            self.coding,
            self.bits_per_symbol,
            self.link_oversampling,
            self.otfs_cp,
            self.psd_frames,
            self.io_trials
        );
        out.push_str(&self.channel.describe());
        out
    }

    fn in_pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        match self.threads {
            None => f(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidValue {
                    key: "threads".into(),
                    reason: e.to_string(),
                })?
                .install(f),
        }
    }
}

fn set_cfg(keys: &mut RawConfig, touched: &mut bool, key: &str, value: &str) {
    keys.insert(key.to_string(), value.to_string());
    *touched = true;
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::InvalidValue {
        key: key.into(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" => Ok(true),
        "0" | "false" | "off" | "no" => Ok(false),
        _ => Err(Error::InvalidValue {
            key: key.into(),
            reason: format!("expected on/off, got {v:?}"),
        }),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Oddm,
    Otfs,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Oddm => "oddm",
            Scheme::Otfs => "otfs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub coded: bool,
    pub bit_errors: u64,
    pub bits: u64,
    pub frames: u64,
}

impl BerRecord {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }

    /// Wilson score interval `(low, high)` at 95%.
    pub fn wilson(&self) -> (f64, f64) {
        if self.bits == 0 {
            return (0.0, 1.0);
        }
        let n = self.bits as f64;
        let p = self.ber();
        let z2 = Z95 * Z95;
        let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
        let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        let lo = if self.bit_errors == 0 { 0.0 } else { (centre - half).max(0.0) };
        let hi = if self.bit_errors == self.bits { 1.0 } else { (centre + half).min(1.0) };
        (lo, hi)
    }

    pub fn ci_half_width(&self) -> f64 {
        let (lo, hi) = self.wilson();
        0.5 * (hi - lo)
    }

    pub const CSV_HEADER: &'static str = "snr_db,scheme,coded,bit_errors,bits,frames,ber,ci95_half_width";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6e},{:.6e}",
            self.snr_db,
            self.scheme.as_str(),
            self.coded as u8,
            self.bit_errors,
            self.bits,
            self.frames,
            self.ber(),
            self.ci_half_width()
        )
    }
}

/// Per-frame paired difference of bit errors, ODDM minus OTFS, at one SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedComparison {
    pub snr_db: f64,
    pub frames: u64,
    pub mean_diff: f64,
    pub std_err: f64,
}

impl PairedComparison {
    /// One-sided 95% upper confidence bound of the mean difference.
    pub fn upper_bound(&self) -> f64 {
        self.mean_diff + Z95_ONE_SIDED * self.std_err
    }

    /// Lower bound; a positive value means ODDM is significantly worse.
    pub fn lower_bound(&self) -> f64 {
        self.mean_diff - Z95_ONE_SIDED * self.std_err
    }

    /// "ODDM BER ≤ OTFS BER" is not rejected by a one-sided test at 5%.
    pub fn oddm_not_worse(&self) -> bool {
        self.lower_bound() <= 0.0
    }

    /// ODDM BER is significantly below OTFS BER.
    pub fn oddm_better(&self) -> bool {
        self.upper_bound() < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRun {
    pub records: Vec<BerRecord>,
    pub paired: Vec<PairedComparison>,
    /// Eb/N0 = Es/N0 − offset for the primary (coded if enabled) records.
    pub ebn0_offset_db: f64,
}

impl BerRun {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(BerRecord::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn curve(&self, scheme: Scheme, coded: bool) -> Vec<&BerRecord> {
        self.records
            .iter()
            .filter(|r| r.scheme == scheme && r.coded == coded)
            .collect()
    }

    /// SNR at which the curve crosses `target`, interpolated linearly in
    /// log10(BER); `None` if the curve never brackets it.
    pub fn snr_at(&self, scheme: Scheme, coded: bool, target: f64) -> Option<f64> {
        let curve = self.curve(scheme, coded);
        for w in curve.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.ber() >= target && b.ber() <= target && a.ber() > 0.0 {
                if b.ber() == 0.0 {
                    return Some(b.snr_db);
                }
                let (la, lb, lt) = (a.ber().log10(), b.ber().log10(), target.log10());
                if la == lb {
                    return Some(a.snr_db);
                }
                return Some(a.snr_db + (la - lt) / (la - lb) * (b.snr_db - a.snr_db));
            }
        }
        None
    }

    /// OTFS minus ODDM SNR at `target`; positive when ODDM needs less SNR.
    pub fn gap_db(&self, coded: bool, target: f64) -> Option<f64> {
        Some(self.snr_at(Scheme::Otfs, coded, target)? - self.snr_at(Scheme::Oddm, coded, target)?)
    }

    pub fn summary(&self, spec: &ExperimentSpec) -> String {
        let mut out = String::from("# ber run\n");
        out.push_str(&spec.to_kv());
        let _ = writeln!(out, "# SNR axis is Es/N0; Eb/N0 = Es/N0 - {:.4} dB", self.ebn0_offset_db);
        if spec.coding {
            let _ = writeln!(
                out,
                "# uncoded rows of a coded run are raw channel-bit BER; their Eb/N0 offset is {:.4} dB",
                10.0 * (spec.bits_per_symbol as f64).log10()
            );
        }
        for r in &self.records {
            let _ = writeln!(
                out,
                "snr={:>5} {} coded={} ber={:.3e} +-{:.1e} errors={} frames={}",
                r.snr_db,
                r.scheme.as_str(),
                r.coded as u8,
                r.ber(),
                r.ci_half_width(),
                r.bit_errors,
                r.frames
            );
        }
        for p in &self.paired {
            let _ = writeln!(
                out,
                "paired snr={:>5} frames={} mean(oddm-otfs)={:.4} bit errors/frame, 95% one-sided bounds [{:.4}, {:.4}]",
                p.snr_db,
                p.frames,
                p.mean_diff,
                p.lower_bound(),
                p.upper_bound()
            );
        }
        match self.gap_db(spec.coding, 1e-3) {
            Some(g) => {
                let _ = writeln!(out, "gap at BER 1e-3 (otfs - oddm): {g:.3} dB");
            }
            None => out.push_str("gap at BER 1e-3: not bracketed by the SNR list\n"),
        }
        out
    }
}

struct CodedLink {
    code: ConvCode,
    layout: CodedLayout,
    interleaver: Interleaver,
}

/// Everything a trial needs that does not change between trials.
pub struct LinkContext {
    pub cfg: SimConfig,
    pub oddm: OddmModem,
    pub otfs: OtfsModem,
    pub alphabet: Constellation,
    coded: Option<CodedLink>,
}

impl LinkContext {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        let cfg = spec.cfg.clone();
        let link_cfg = cfg.with_oversampling(spec.link_oversampling);
        let alphabet = Constellation::qam(spec.bits_per_symbol)?;
        let capacity = cfg.frame_len() * spec.bits_per_symbol;
        let coded = if spec.coding {
            let code = ConvCode::standard();
            let layout = CodedLayout::for_capacity(&code, capacity)?;
            Some(CodedLink {
                code,
                layout,
                interleaver: Interleaver::new(capacity, cfg.seed),
            })
        } else {
            None
        };
        let mut otfs = OtfsModem::new(&cfg);
        otfs.cp = spec.otfs_cp;
        Ok(LinkContext {
            oddm: OddmModem::new(&link_cfg)?,
            otfs,
            alphabet,
            coded,
            cfg,
        })
    }

    fn ebn0_offset_db(&self) -> f64 {
        let bps = self.alphabet.bits_per_symbol() as f64;
        let rate = match &self.coded {
            Some(c) => c.layout.info_bits as f64 / (self.cfg.frame_len() as f64 * bps),
            None => 1.0,
        };
        10.0 * (bps * rate).log10()
    }
}

/// Bit errors of one frame for one scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameErrors {
    pub raw_errors: u64,
    pub raw_bits: u64,
    pub coded_errors: u64,
    pub coded_bits: u64,
}

impl FrameErrors {
    fn primary(&self, coded: bool) -> u64 {
        if coded {
            self.coded_errors
        } else {
            self.raw_errors
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialOutcome {
    pub oddm: FrameErrors,
    pub otfs: FrameErrors,
}

fn count_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

/// One frame through both links: shared bits, channel and SNR; each
/// scheme has its own noise stream.
pub fn run_trial(ctx: &LinkContext, spec: &ExperimentSpec, snr_db: f64, trial: u64) -> Result<TrialOutcome> {
    let cfg = &ctx.cfg;
    let seed = cfg.seed;
    let capacity = cfg.frame_len() * ctx.alphabet.bits_per_symbol();
    let mut bit_rng = stream(seed, "bits", trial);
    let (tx_bits, info) = match &ctx.coded {
        Some(c) => {
            let info = random_bits(c.layout.info_bits, &mut bit_rng);
            let mut word = conv_encode(&c.code, &info)?;
            word.extend(random_bits(c.layout.pad_bits, &mut bit_rng));
            (c.interleaver.interleave(&word), info)
        }
        None => (random_bits(capacity, &mut bit_rng), Vec::new()),
    };
    let frame = map_bits(&tx_bits, &ctx.alphabet, cfg.m, cfg.n)?;
    let ch = spec.channel.draw(cfg, seed, "channel", trial)?;
    let settings = spec.mp.settings(noise_psd(snr_db).max(1e-12));

    let score = |y: &DDFrame, h: &dyn DDOperator| -> Result<FrameErrors> {
        let mp = mp_detect(y.as_stacked(), &build_graph(h), &settings, &ctx.alphabet)?;
        let rx_bits = indices_to_bits(&mp.decisions, &ctx.alphabet);
        let mut e = FrameErrors {
            raw_errors: count_errors(&rx_bits, &tx_bits),
            raw_bits: capacity as u64,
            ..Default::default()
        };
        if let Some(c) = &ctx.coded {
            let llrs = c.interleaver.deinterleave(&soft_llrs(&mp.posteriors, &ctx.alphabet));
            let decoded = viterbi_decode(&c.code, &llrs[..c.layout.coded_bits])?;
            e.coded_errors = count_errors(&decoded, &info);
            e.coded_bits = info.len() as u64;
        }
        Ok(e)
    };

    let tx = ctx.oddm.modulate(&frame)?;
    let rx = apply_channel(&tx, &ch, &ctx.oddm.cfg)?;
    let rx = add_awgn(&rx, snr_db, &mut stream(seed, "noise-oddm", trial));
    let oddm = score(&ctx.oddm.demodulate(&rx)?, &build_h(&ch, cfg)?)?;

    let tx = ctx.otfs.modulate(&frame)?;
    let rx = apply_channel(&tx, &ch, cfg)?;
    let rx = add_awgn(&rx, snr_db, &mut stream(seed, "noise-otfs", trial));
    let otfs = score(&ctx.otfs.demodulate(&rx)?, &build_otfs_h(&ch, cfg)?)?;

    Ok(TrialOutcome { oddm, otfs })
}

#[derive(Default)]
struct Tally {
    frames: u64,
    oddm: FrameErrors,
    otfs: FrameErrors,
    diff_sum: f64,
    diff_sq: f64,
}

impl Tally {
    fn add(&mut self, t: &TrialOutcome, coded: bool) {
        self.frames += 1;
        for (acc, e) in [(&mut self.oddm, &t.oddm), (&mut self.otfs, &t.otfs)] {
            acc.raw_errors += e.raw_errors;
            acc.raw_bits += e.raw_bits;
            acc.coded_errors += e.coded_errors;
            acc.coded_bits += e.coded_bits;
        }
        let d = t.oddm.primary(coded) as f64 - t.otfs.primary(coded) as f64;
        self.diff_sum += d;
        self.diff_sq += d * d;
    }
}

fn run_point(ctx: &LinkContext, spec: &ExperimentSpec, snr_db: f64) -> Result<Tally> {
    let mut tally = Tally::default();
    let mut next = 0usize;
    while next < spec.trials {
        let end = (next + spec.batch).min(spec.trials);
        let outcomes: Vec<TrialOutcome> = (next..end)
            .into_par_iter()
            .map(|t| run_trial(ctx, spec, snr_db, t as u64))
            .collect::<Result<_>>()?;
        for o in &outcomes {
            tally.add(o, spec.coding);
        }
        next = end;
        if tally.oddm.primary(spec.coding) >= spec.min_errors && tally.otfs.primary(spec.coding) >= spec.min_errors {
            break;
        }
    }
    Ok(tally)
}

/// BER sweep of ODDM and OTFS in lockstep over the same bits and channels.
/// Trials run in fixed-size batches and the early-stop rule is evaluated
/// only between batches, so counts are identical for any thread count.
pub fn run_ber(spec: &ExperimentSpec) -> Result<BerRun> {
    spec.validate()?;
    spec.in_pool(|| {
        let ctx = LinkContext::new(spec)?;
        let tallies: Vec<Tally> = spec
            .snr_db
            .par_iter()
            .map(|&snr| run_point(&ctx, spec, snr))
            .collect::<Result<_>>()?;
        let mut records = Vec::new();
        let mut paired = Vec::new();
        for (&snr, t) in spec.snr_db.iter().zip(&tallies) {
            for (scheme, e) in [(Scheme::Oddm, &t.oddm), (Scheme::Otfs, &t.otfs)] {
                records.push(BerRecord {
                    snr_db: snr,
                    scheme,
                    coded: false,
                    bit_errors: e.raw_errors,
                    bits: e.raw_bits,
                    frames: t.frames,
                });
                if spec.coding {
                    records.push(BerRecord {
                        snr_db: snr,
                        scheme,
                        coded: true,
                        bit_errors: e.coded_errors,
                        bits: e.coded_bits,
                        frames: t.frames,
                    });
                }
            }
            let n = t.frames as f64;
            let mean = t.diff_sum / n;
            let var = if t.frames > 1 {
                ((t.diff_sq - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            paired.push(PairedComparison {
                snr_db: snr,
                frames: t.frames,
                mean_diff: mean,
                std_err: (var / n).sqrt(),
            });
        }
        Ok(BerRun {
            records,
            paired,
            ebn0_offset_db: ctx.ebn0_offset_db(),
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdReport {
    pub oddm: Psd,
    pub otfs: Psd,
    /// Edge of the flat in-band region, (1−β)/2·M/T.
    pub in_band_edge: f64,
    pub symbol_rate: f64,
    pub subcarrier_spacing: f64,
}

impl PsdReport {
    /// Level at `±ratio·M/T` relative to the in-band median, in dB,
    /// averaged over one subcarrier spacing: the OTFS spectrum has exact
    /// nulls at multiples of Δf outside the band, so single bins mislead.
    pub fn oobe_db(&self, scheme: Scheme, ratio: f64) -> f64 {
        let psd = match scheme {
            Scheme::Oddm => &self.oddm,
            Scheme::Otfs => &self.otfs,
        };
        psd.oobe_db(ratio * self.symbol_rate, self.in_band_edge, self.subcarrier_spacing)
    }

    /// Bandwidth within 30 dB of the in-band median.
    pub fn occupied_bandwidth(&self, scheme: Scheme) -> f64 {
        let psd = match scheme {
            Scheme::Oddm => &self.oddm,
            Scheme::Otfs => &self.otfs,
        };
        psd.occupied_bandwidth(-30.0, self.in_band_edge)
    }

    /// `freq_hz,oddm_psd_db,otfs_psd_db`, each normalised to its in-band peak.
    pub fn to_csv(&self) -> String {
        let ro = self.oddm.in_band_peak(self.in_band_edge);
        let rt = self.otfs.in_band_peak(self.in_band_edge);
        let (dbo, dbt) = (self.oddm.to_db(ro), self.otfs.to_db(rt));
        let mut out = String::from("freq_hz,oddm_psd_db,otfs_psd_db\n");
        for (i, f) in self.oddm.freqs.iter().enumerate() {
            let _ = writeln!(out, "{f:.3},{:.4},{:.4}", dbo[i], dbt[i]);
        }
        out
    }

    pub fn summary(&self, spec: &ExperimentSpec) -> String {
        let mut out = String::from("# psd run\n");
        out.push_str(&spec.to_kv());
        for ratio in [0.55, 0.75] {
            let (o, t) = (self.oobe_db(Scheme::Oddm, ratio), self.oobe_db(Scheme::Otfs, ratio));
            let _ = writeln!(
                out,
                "oobe at |f|={ratio}*M/T: oddm {o:.2} dB, otfs {t:.2} dB, advantage {:.2} dB",
                t - o
            );
        }
        let _ = writeln!(
            out,
            "occupied bandwidth (-30 dB): oddm {:.4e} Hz, otfs {:.4e} Hz, (1+rolloff)*M/T = {:.4e} Hz",
            self.occupied_bandwidth(Scheme::Oddm),
            self.occupied_bandwidth(Scheme::Otfs),
            (1.0 + spec.cfg.rolloff) * self.symbol_rate
        );
        out
    }
}

/// Welch PSD of `psd_frames` back-to-back random frames of each scheme on
/// the oversampled grid, segments of 4096·O samples.
pub fn run_psd(spec: &ExperimentSpec) -> Result<PsdReport> {
    spec.validate()?;
    let cfg = &spec.cfg;
    spec.in_pool(|| {
        let alphabet = Constellation::qam(spec.bits_per_symbol)?;
        let oddm = OddmModem::new(cfg)?;
        let mut otfs = OtfsModem::new(cfg);
        otfs.cp = spec.otfs_cp;
        let frames: Vec<DDFrame> = (0..spec.psd_frames)
            .map(|i| DDFrame::random(cfg.m, cfg.n, &alphabet, &mut stream(cfg.seed, "psd-frame", i as u64)))
            .collect();
        let oddm_w = frames.par_iter().map(|f| oddm.modulate(f)).collect::<Result<Vec<_>>>()?;
        let otfs_w = frames
            .par_iter()
            .map(|f| otfs.modulate_oversampled(f))
            .collect::<Result<Vec<_>>>()?;
        let o = cfg.oversampling;
        let seg = 4096 * o;
        let rate = cfg.sample_rate();
        let oddm_period = (cfg.frame_len() + cfg.cp_len()) * o;
        let otfs_period = (cfg.frame_len() + if spec.otfs_cp { cfg.cp_len() } else { 0 }) * o;
        Ok(PsdReport {
            oddm: welch(&concatenate(&oddm_w, oddm_period), rate, seg)?,
            otfs: welch(&concatenate(&otfs_w, otfs_period), rate, seg)?,
            in_band_edge: (1.0 - cfg.rolloff) / 2.0 * cfg.symbol_rate(),
            symbol_rate: cfg.symbol_rate(),
            subcarrier_spacing: cfg.delta_f,
        })
    })
}

/// Relative residuals `‖Y − H·x‖/‖H·x‖` of the noiseless waveform chain
/// against the matrix models, per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct IoCheckReport {
    pub oddm: Vec<f64>,
    pub otfs: Vec<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        return f64::NAN;
    }
    let mid = s.len() / 2;
    if s.len() % 2 == 1 {
        s[mid]
    } else {
        0.5 * (s[mid - 1] + s[mid])
    }
}

impl IoCheckReport {
    pub fn oddm_max(&self) -> f64 {
        self.oddm.iter().cloned().fold(0.0, f64::max)
    }

    pub fn oddm_median(&self) -> f64 {
        median(&self.oddm)
    }

    pub fn otfs_max(&self) -> f64 {
        self.otfs.iter().cloned().fold(0.0, f64::max)
    }

    pub fn otfs_median(&self) -> f64 {
        median(&self.otfs)
    }

    /// Fraction of trials where the OTFS model residual exceeds ODDM's.
    pub fn otfs_worse_fraction(&self) -> f64 {
        let worse = self.oddm.iter().zip(&self.otfs).filter(|(o, t)| t > o).count();
        worse as f64 / self.oddm.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,oddm_residual,otfs_residual\n");
        for (i, (o, t)) in self.oddm.iter().zip(&self.otfs).enumerate() {
            let _ = writeln!(out, "{i},{o:.6e},{t:.6e}");
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "trials={} oddm max={:.3e} median={:.3e}; otfs max={:.3e} median={:.3e}; otfs worse on {:.1}% of trials",
            self.oddm.len(),
            self.oddm_max(),
            self.oddm_median(),
            self.otfs_max(),
            self.otfs_median(),
            100.0 * self.otfs_worse_fraction()
        )
    }
}

fn relative_residual(y: &DDFrame, model: &[Complex64]) -> f64 {
    let num: f64 = y.as_stacked().iter().zip(model).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = model.iter().map(|b| b.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Runs `trials` random frames through random channels of `spec.channel`.
/// ODDM uses the oversampled chain at `cfg.oversampling` and the exact
/// matrix built with `cp_phase`; OTFS uses the symbol-rate chain and the
/// classical approximate matrix.
pub fn run_io_check(spec: &ExperimentSpec, trials: usize, cp_phase: CpPhase) -> Result<IoCheckReport> {
    spec.validate()?;
    let cfg = &spec.cfg;
    spec.in_pool(|| {
        let alphabet = Constellation::qam(spec.bits_per_symbol)?;
        let oddm = OddmModem::new(cfg)?;
        let mut otfs = OtfsModem::new(cfg);
        otfs.cp = spec.otfs_cp;
        let rows: Vec<(f64, f64)> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let x = DDFrame::random(cfg.m, cfg.n, &alphabet, &mut stream(cfg.seed, "io-frame", t));
                let ch = spec.channel.draw(cfg, cfg.seed, "io-channel", t)?;
                let y = oddm.demodulate(&apply_channel(&oddm.modulate(&x)?, &ch, cfg)?)?;
                let r_oddm = relative_residual(&y, &build_h_with(&ch, cfg, cp_phase)?.apply(x.as_stacked())?);
                let y = otfs.demodulate(&apply_channel(&otfs.modulate(&x)?, &ch, cfg)?)?;
                let r_otfs = relative_residual(&y, &build_otfs_h(&ch, cfg)?.apply(x.as_stacked())?);
                Ok((r_oddm, r_otfs))
            })
            .collect::<Result<_>>()?;
        Ok(IoCheckReport {
            oddm: rows.iter().map(|r| r.0).collect(),
            otfs: rows.iter().map(|r| r.1).collect(),
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.suites.iter().filter(|s| !s.passed).map(|s| s.name).collect()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            let _ = writeln!(out, "{} {}: {}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.detail);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// CP phase convention of the ODDM matrix checked against the waveform.
    pub cp_phase: CpPhase,
    pub io_trials: usize,
    pub orthogonality_tol: f64,
    pub zero_doppler_tol: f64,
    pub io_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            cp_phase: CpPhase::Correct,
            io_trials: 10,
            orthogonality_tol: 1e-2,
            zero_doppler_tol: 1e-3,
            io_tol: 1e-2,
        }
    }
}

fn suite_pulse(cfg: &SimConfig, opts: &VerifyOptions) -> Result<SuiteResult> {
    let r = verify_orthogonality(cfg, opts.orthogonality_tol)?;
    let passed = r.passed() && r.max_zero_doppler <= opts.zero_doppler_tol && (r.origin.norm() - 1.0).abs() <= 1e-6;
    Ok(SuiteResult {
        name: "pulse-orthogonality",
        passed,
        detail: r.summary(),
    })
}

fn suite_matrix(seed: u64) -> Result<SuiteResult> {
    // small enough for dense comparisons
    let cfg = SimConfig::new(8, 8, 15e3, 2, 0.1, 4, 2, 4, seed)?;
    let mut worst_dense: f64 = 0.0;
    let mut census_ok = true;
    for t in 0..8 {
        let ch = gen_ongrid_channel(4, &cfg, Profile::Uniform, false, &mut stream(seed, "verify-channel", t))?;
        let h = build_h(&ch, &cfg)?;
        let rows = h.rows();
        let mut col_count = vec![0usize; h.dim()];
        for row in &rows {
            census_ok &= row.len() == ch.len();
            for (c, _) in row {
                col_count[*c] += 1;
            }
        }
        census_ok &= col_count.iter().all(|&c| c == ch.len());
        let x = DDFrame::random(cfg.m, cfg.n, &Constellation::qam4(), &mut stream(seed, "verify-x", t));
        let fast = h.apply(x.as_stacked())?;
        let dense = h.to_dense();
        for (r, row) in dense.iter().enumerate() {
            let v: Complex64 = row.iter().zip(x.as_stacked()).map(|(a, b)| a * b).sum();
            worst_dense = worst_dense.max((v - fast[r]).norm());
        }
    }
    Ok(SuiteResult {
        name: "ddmatrix-structure",
        passed: census_ok && worst_dense <= 1e-10,
        detail: format!("row/column census {}; dense vs fast apply max diff {worst_dense:.2e}", if census_ok { "= P" } else { "WRONG" }),
    })
}

fn suite_io(spec: &ExperimentSpec, opts: &VerifyOptions) -> Result<SuiteResult> {
    let r = run_io_check(spec, opts.io_trials, opts.cp_phase)?;
    Ok(SuiteResult {
        name: "io-check",
        passed: r.oddm_max() <= opts.io_tol,
        detail: r.summary(),
    })
}

fn suite_detector(seed: u64) -> Result<SuiteResult> {
    let qam = Constellation::qam4();
    let mut ok = true;
    let mut notes = Vec::new();
    // identity channel, high SNR: MP must return the transmitted symbols
    let cfg = SimConfig::new(16, 4, 15e3, 2, 0.1, 3, 1, 4, seed)?;
    let x = DDFrame::random(cfg.m, cfg.n, &qam, &mut stream(seed, "verify-mp", 0));
    let h = build_h(&PathSet::identity(), &cfg)?;
    let mp = mp_detect(x.as_stacked(), &build_graph(&h), &DetectorSettings::new(1e-4), &qam)?;
    let mp_ok = mp.decisions == frame_indices(&x, &qam) && mp.converged;
    notes.push(format!("mp identity {}", if mp_ok { "ok" } else { "wrong" }));
    ok &= mp_ok;
    // noiseless random channels: MMSE and ML both recover the frame
    let toy = SimConfig::new(3, 2, 15e3, 1, 0.1, 2, 0, 4, seed)?;
    let big = SimConfig::new(16, 8, 15e3, 2, 0.1, 4, 2, 4, seed)?;
    for t in 0..4 {
        let ch = gen_ongrid_channel(2, &toy, Profile::Uniform, false, &mut stream(seed, "verify-ml", t))?;
        let h = build_h(&ch, &toy)?;
        let x = DDFrame::random(toy.m, toy.n, &qam, &mut stream(seed, "verify-mlx", t));
        let y = h.apply(x.as_stacked())?;
        ok &= ml_detect(&y, &h, &qam)? == frame_indices(&x, &qam);
        let ch = gen_ongrid_channel(4, &big, Profile::Uniform, false, &mut stream(seed, "verify-mmse", t))?;
        let h = build_h(&ch, &big)?;
        let x = DDFrame::random(big.m, big.n, &qam, &mut stream(seed, "verify-mmsex", t));
        let y = h.apply(x.as_stacked())?;
        ok &= mmse_detect(&y, &h, 1e-9, &qam)?.decisions == frame_indices(&x, &qam);
    }
    notes.push("noiseless ML/MMSE recovery".into());
    Ok(SuiteResult {
        name: "detector",
        passed: ok,
        detail: notes.join("; "),
    })
}

fn suite_coding(seed: u64) -> Result<SuiteResult> {
    let code = ConvCode::standard();
    let mut ok = true;
    for t in 0..4 {
        let msg = random_bits(32, &mut stream(seed, "verify-code", t));
        let cw = conv_encode(&code, &msg)?;
        for i in 0..cw.len() {
            let mut bad = cw.clone();
            bad[i] ^= 1;
            ok &= viterbi_decode_hard(&code, &bad)? == msg;
        }
    }
    Ok(SuiteResult {
        name: "coding",
        passed: ok,
        detail: "single-bit flips on 32-bit messages".into(),
    })
}

/// Runs every module suite with the spec's configuration. A suite that
/// errors counts as failed.
pub fn run_verify(spec: &ExperimentSpec, opts: &VerifyOptions) -> Result<VerifyReport> {
    spec.validate()?;
    let seed = spec.cfg.seed;
    let wrap = |name: &'static str, r: Result<SuiteResult>| {
        r.unwrap_or_else(|e| SuiteResult {
            name,
            passed: false,
            detail: e.to_string(),
        })
    };
    let suites = spec.in_pool(|| {
        Ok(vec![
            wrap("pulse-orthogonality", suite_pulse(&spec.cfg, opts)),
            wrap("ddmatrix-structure", suite_matrix(seed)),
            wrap("io-check", suite_io(spec, opts)),
            wrap("detector", suite_detector(seed)),
            wrap("coding", suite_coding(seed)),
        ])
    })?;
    Ok(VerifyReport { suites })
}

/// Writes `(file name, contents)` pairs under `dir`, creating it.
pub fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}
