//! C interface to the `oddm` library.
//!
//! Objects are opaque heap handles released by their `_free` function.
//! Every call returns an `int32_t` status; on failure the message is
//! available from `oddm_last_error` on the same thread. Complex arrays are
//! interleaved `re, im` doubles, frames in delay-major order (`m·N + n`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use oddm::channel::{apply_channel, gen_ongrid_channel, Path, PathSet, Profile};
use oddm::config::{make_config, parse_kv};
use oddm::ddmatrix::{build_h, build_otfs_h, DDOperator};
use oddm::detect::{build_graph, mp_detect, DetectorSettings};
use oddm::modem::{OddmModem as OddmTx, OtfsModem};
use oddm::rng::stream;
use oddm::{Complex64, Constellation, DDFrame, Error, SampledWaveform, SimConfig};

pub const ODDM_OK: i32 = 0;
/// A required pointer argument was null.
pub const ODDM_ERR_NULL: i32 = 1;
/// Bad parameter or configuration.
pub const ODDM_ERR_INVALID: i32 = 2;
/// An array length does not match what the call needs.
pub const ODDM_ERR_LENGTH: i32 = 3;
/// Output buffer too small; the needed size was written back.
pub const ODDM_ERR_BUFFER: i32 = 4;
/// Numerical failure inside the library.
pub const ODDM_ERR_COMPUTE: i32 = 5;
/// A Rust panic was caught at the boundary.
pub const ODDM_ERR_PANIC: i32 = 6;

pub const ODDM_SCHEME_ODDM: i32 = 0;
pub const ODDM_SCHEME_OTFS: i32 = 1;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::LengthMismatch { .. } | Error::WaveformTooShort(_) => ODDM_ERR_LENGTH,
            Error::NoConvergence { .. } | Error::PulseDesign(_) => ODDM_ERR_COMPUTE,
            _ => ODDM_ERR_INVALID,
        };
        Failure(code, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ODDM_OK,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            ODDM_ERR_PANIC
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass handles obtained from this library or null
    unsafe { p.as_ref() }.ok_or_else(|| Failure(ODDM_ERR_NULL, format!("{what} is null")))
}

fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(ODDM_ERR_NULL, format!("{what} is null")));
    }
    // SAFETY: the caller guarantees `len` readable elements
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure(ODDM_ERR_NULL, format!("{what} is null")));
    }
    // SAFETY: the caller guarantees `len` writable elements
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(ODDM_ERR_NULL, "output handle pointer is null".into()));
    }
    // SAFETY: checked non-null; the caller owns the slot
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn free<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: `p` came from Box::into_raw in this library
        drop(unsafe { Box::from_raw(p) });
    }
}

fn complex_in(data: &[f64]) -> Vec<Complex64> {
    data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn complex_out(src: &[Complex64], dst: &mut [f64]) {
    for (d, s) in dst.chunks_exact_mut(2).zip(src) {
        d[0] = s.re;
        d[1] = s.im;
    }
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn oddm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn oddm_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oddm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Simulation grid and pulse parameters.
pub struct OddmConfig {
    cfg: SimConfig,
}

#[no_mangle]
pub extern "C" fn oddm_config_new(
    m: usize,
    n: usize,
    delta_f: f64,
    q: usize,
    rolloff: f64,
    l: usize,
    k: usize,
    oversampling: usize,
    seed: u64,
    out: *mut *mut OddmConfig,
) -> i32 {
    guard(|| {
        let cfg = SimConfig::new(m, n, delta_f, q, rolloff, l, k, oversampling, seed)?;
        write_out(out, OddmConfig { cfg })
    })
}

/// Parses the `key = value` configuration text.
#[no_mangle]
pub extern "C" fn oddm_config_parse(text: *const c_char, out: *mut *mut OddmConfig) -> i32 {
    guard(|| {
        if text.is_null() {
            return Err(Failure(ODDM_ERR_NULL, "config text is null".into()));
        }
        // SAFETY: checked non-null, caller passes a NUL-terminated string
        let text = unsafe { CStr::from_ptr(text) }
            .to_str()
            .map_err(|e| Failure(ODDM_ERR_INVALID, format!("config text is not UTF-8: {e}")))?;
        let cfg = make_config(&parse_kv(text)?)?;
        write_out(out, OddmConfig { cfg })
    })
}

/// Writes M·N (the frame length in symbols).
#[no_mangle]
pub extern "C" fn oddm_config_frame_len(cfg: *const OddmConfig, out: *mut usize) -> i32 {
    guard(|| {
        let cfg = non_null(cfg, "config")?;
        *slice_mut(out, 1, "out")?.first_mut().unwrap() = cfg.cfg.frame_len();
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn oddm_config_free(cfg: *mut OddmConfig) {
    free(cfg)
}

enum Tx {
    Oddm(OddmTx),
    Otfs(OtfsModem),
}

/// ODDM (oversampled) or OTFS (symbol-rate) transmitter/receiver.
pub struct OddmModem {
    tx: Tx,
}

#[no_mangle]
pub extern "C" fn oddm_modem_new(cfg: *const OddmConfig, scheme: i32, out: *mut *mut OddmModem) -> i32 {
    guard(|| {
        let cfg = &non_null(cfg, "config")?.cfg;
        let tx = match scheme {
            ODDM_SCHEME_ODDM => Tx::Oddm(OddmTx::new(cfg)?),
            ODDM_SCHEME_OTFS => Tx::Otfs(OtfsModem::new(cfg)),
            other => return Err(Failure(ODDM_ERR_INVALID, format!("unknown scheme {other}"))),
        };
        write_out(out, OddmModem { tx })
    })
}

#[no_mangle]
pub extern "C" fn oddm_modem_free(modem: *mut OddmModem) {
    free(modem)
}

fn modem_cfg(m: &OddmModem) -> &SimConfig {
    match &m.tx {
        Tx::Oddm(t) => &t.cfg,
        Tx::Otfs(t) => &t.cfg,
    }
}

/// Modulates a frame of `2·M·N` doubles. Writes up to `capacity` samples
/// (`2·capacity` doubles) to `samples`, and always writes the sample count,
/// rate in Hz and start time in seconds. Returns `ODDM_ERR_BUFFER` when the
/// buffer is too small, so a first call with `capacity = 0` sizes it.
#[no_mangle]
pub extern "C" fn oddm_modulate(
    modem: *const OddmModem,
    frame: *const f64,
    frame_len: usize,
    samples: *mut f64,
    capacity: usize,
    out_len: *mut usize,
    out_rate: *mut f64,
    out_t0: *mut f64,
) -> i32 {
    guard(|| {
        let modem = non_null(modem, "modem")?;
        let cfg = modem_cfg(modem);
        if frame_len != 2 * cfg.frame_len() {
            return Err(Failure(
                ODDM_ERR_LENGTH,
                format!("frame needs {} doubles, got {frame_len}", 2 * cfg.frame_len()),
            ));
        }
        let x = DDFrame::from_vec(cfg.m, cfg.n, complex_in(slice(frame, frame_len, "frame")?))?;
        let w = match &modem.tx {
            Tx::Oddm(t) => t.modulate(&x)?,
            Tx::Otfs(t) => t.modulate(&x)?,
        };
        slice_mut(out_len, 1, "out_len")?[0] = w.len();
        slice_mut(out_rate, 1, "out_rate")?[0] = w.rate;
        slice_mut(out_t0, 1, "out_t0")?[0] = w.t0;
        if capacity < w.len() {
            return Err(Failure(
                ODDM_ERR_BUFFER,
                format!("waveform has {} samples, buffer holds {capacity}", w.len()),
            ));
        }
        complex_out(&w.samples, slice_mut(samples, 2 * w.len(), "samples")?);
        Ok(())
    })
}

/// Demodulates `len` samples on the grid `t0 + i/rate` into a frame of
/// `2·M·N` doubles.
#[no_mangle]
pub extern "C" fn oddm_demodulate(
    modem: *const OddmModem,
    samples: *const f64,
    len: usize,
    rate: f64,
    t0: f64,
    frame: *mut f64,
    frame_len: usize,
) -> i32 {
    guard(|| {
        let modem = non_null(modem, "modem")?;
        let cfg = modem_cfg(modem);
        if frame_len != 2 * cfg.frame_len() {
            return Err(Failure(
                ODDM_ERR_LENGTH,
                format!("frame needs {} doubles, got {frame_len}", 2 * cfg.frame_len()),
            ));
        }
        let w = SampledWaveform::new(complex_in(slice(samples, 2 * len, "samples")?), rate, t0);
        let x = match &modem.tx {
            Tx::Oddm(t) => t.demodulate(&w)?,
            Tx::Otfs(t) => t.demodulate(&w)?,
        };
        complex_out(x.as_stacked(), slice_mut(frame, frame_len, "frame")?);
        Ok(())
    })
}

/// Set of on-grid paths `(h, l, k)`.
pub struct OddmChannel {
    paths: PathSet,
}

/// Builds a channel from `count` paths: gains as interleaved doubles,
/// integer delay and Doppler bins.
#[no_mangle]
pub extern "C" fn oddm_channel_new(
    gains: *const f64,
    delays: *const u32,
    dopplers: *const i32,
    count: usize,
    out: *mut *mut OddmChannel,
) -> i32 {
    guard(|| {
        let g = complex_in(slice(gains, 2 * count, "gains")?);
        let l = slice(delays, count, "delays")?;
        let k = slice(dopplers, count, "dopplers")?;
        let paths = PathSet::new((0..count).map(|i| Path {
            h: g[i],
            l: l[i] as usize,
            k: k[i] as i64,
        }));
        write_out(out, OddmChannel { paths })
    })
}

/// `paths` distinct random on-grid paths with unit total power, drawn from
/// `(seed, trial)`.
#[no_mangle]
pub extern "C" fn oddm_channel_random(
    cfg: *const OddmConfig,
    paths: usize,
    seed: u64,
    trial: u64,
    out: *mut *mut OddmChannel,
) -> i32 {
    guard(|| {
        let cfg = &non_null(cfg, "config")?.cfg;
        let mut rng = stream(seed, "channel", trial);
        let paths = gen_ongrid_channel(paths, cfg, Profile::Uniform, false, &mut rng)?;
        write_out(out, OddmChannel { paths })
    })
}

#[no_mangle]
pub extern "C" fn oddm_channel_len(channel: *const OddmChannel, out: *mut usize) -> i32 {
    guard(|| {
        let ch = non_null(channel, "channel")?;
        slice_mut(out, 1, "out")?[0] = ch.paths.len();
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn oddm_channel_free(channel: *mut OddmChannel) {
    free(channel)
}

/// Passes a waveform through the channel. Same sizing protocol as
/// [`oddm_modulate`]; the output keeps `rate` and `t0`.
#[no_mangle]
pub extern "C" fn oddm_channel_apply(
    channel: *const OddmChannel,
    cfg: *const OddmConfig,
    samples: *const f64,
    len: usize,
    rate: f64,
    t0: f64,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> i32 {
    guard(|| {
        let ch = non_null(channel, "channel")?;
        let cfg = &non_null(cfg, "config")?.cfg;
        let w = SampledWaveform::new(complex_in(slice(samples, 2 * len, "samples")?), rate, t0);
        let y = apply_channel(&w, &ch.paths, cfg)?;
        slice_mut(out_len, 1, "out_len")?[0] = y.len();
        if capacity < y.len() {
            return Err(Failure(
                ODDM_ERR_BUFFER,
                format!("output has {} samples, buffer holds {capacity}", y.len()),
            ));
        }
        complex_out(&y.samples, slice_mut(out, 2 * y.len(), "out")?);
        Ok(())
    })
}

enum Op {
    Oddm(oddm::ddmatrix::DDChannelMatrix),
    Otfs(oddm::ddmatrix::SparseMatrix),
}

/// Delay-Doppler input-output matrix: exact for ODDM, the classical
/// approximation for OTFS.
pub struct OddmMatrix {
    op: Op,
}

impl OddmMatrix {
    fn op(&self) -> &dyn DDOperator {
        match &self.op {
            Op::Oddm(h) => h,
            Op::Otfs(h) => h,
        }
    }
}

#[no_mangle]
pub extern "C" fn oddm_matrix_new(
    channel: *const OddmChannel,
    cfg: *const OddmConfig,
    scheme: i32,
    out: *mut *mut OddmMatrix,
) -> i32 {
    guard(|| {
        let ch = &non_null(channel, "channel")?.paths;
        let cfg = &non_null(cfg, "config")?.cfg;
        let op = match scheme {
            ODDM_SCHEME_ODDM => Op::Oddm(build_h(ch, cfg)?),
            ODDM_SCHEME_OTFS => Op::Otfs(build_otfs_h(ch, cfg)?),
            other => return Err(Failure(ODDM_ERR_INVALID, format!("unknown scheme {other}"))),
        };
        write_out(out, OddmMatrix { op })
    })
}

#[no_mangle]
pub extern "C" fn oddm_matrix_free(matrix: *mut OddmMatrix) {
    free(matrix)
}

/// `y = H·x`, both `2·M·N` doubles.
#[no_mangle]
pub extern "C" fn oddm_matrix_apply(matrix: *const OddmMatrix, x: *const f64, y: *mut f64, len: usize) -> i32 {
    guard(|| {
        let h = non_null(matrix, "matrix")?.op();
        if len != 2 * h.dim() {
            return Err(Failure(
                ODDM_ERR_LENGTH,
                format!("vectors need {} doubles, got {len}", 2 * h.dim()),
            ));
        }
        let r = h.apply(&complex_in(slice(x, len, "x")?))?;
        complex_out(&r, slice_mut(y, len, "y")?);
        Ok(())
    })
}

/// 4-QAM message-passing detection with default iteration settings.
/// Writes one symbol index (0..3) per DD bin to `decisions` and, when not
/// null, the iteration count.
#[no_mangle]
pub extern "C" fn oddm_mp_detect(
    matrix: *const OddmMatrix,
    y: *const f64,
    len: usize,
    noise_var: f64,
    decisions: *mut u32,
    iterations: *mut usize,
) -> i32 {
    guard(|| {
        let h = non_null(matrix, "matrix")?.op();
        if len != 2 * h.dim() {
            return Err(Failure(
                ODDM_ERR_LENGTH,
                format!("y needs {} doubles, got {len}", 2 * h.dim()),
            ));
        }
        let out = mp_detect(
            &complex_in(slice(y, len, "y")?),
            &build_graph(h),
            &DetectorSettings::new(noise_var),
            &Constellation::qam4(),
        )?;
        for (d, s) in slice_mut(decisions, h.dim(), "decisions")?.iter_mut().zip(&out.decisions) {
            *d = *s as u32;
        }
        if !iterations.is_null() {
            // SAFETY: checked non-null
            unsafe { *iterations = out.iterations };
        }
        Ok(())
    })
}

/// 4-QAM constellation point of `index` as `re, im`.
#[no_mangle]
pub extern "C" fn oddm_qam4_point(index: u32, out: *mut f64) -> i32 {
    guard(|| {
        if index > 3 {
            return Err(Failure(ODDM_ERR_INVALID, format!("4-QAM index {index} out of range")));
        }
        let p = Constellation::qam4().point(index as usize);
        complex_out(&[p], slice_mut(out, 2, "out")?);
        Ok(())
    })
}
