use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use oddm::config::read_kv_file;
use oddm::ddmatrix::CpPhase;
use oddm::frame::{frame_from_csv, frame_to_csv};
use oddm::harness::{run_ber, run_io_check, run_psd, run_verify, write_outputs, ExperimentSpec, Scheme, VerifyOptions};
use oddm::modem::{OddmModem, OtfsModem};
use oddm::pulse::verify_orthogonality;
use oddm::waveform::{waveform_from_csv, waveform_to_csv};
use oddm::Result;

#[derive(Parser)]
#[command(name = "oddm", version, about = "ODDM / OTFS link-level simulator")]
struct Cli {
    /// Key-value config file applied on top of the scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// desk, psd-desk, eva-120 or eva-500.
    #[arg(long, global = true)]
    scenario: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Oddm,
    Otfs,
}

#[derive(Subcommand)]
enum Command {
    /// Ambiguity-function scan of the transmit pulse on the DD grid.
    VerifyPulse {
        #[arg(long, default_value_t = 1e-2)]
        tol: f64,
    },
    /// Waveform chain vs DD matrix residuals over random channels.
    IoCheck {
        #[arg(long)]
        trials: Option<usize>,
        /// Use the wrong CP wrap phase in the ODDM matrix.
        #[arg(long)]
        flip_cp_phase: bool,
    },
    /// Welch PSD and out-of-band emission of ODDM and OTFS.
    Psd,
    /// BER sweep over the scenario's SNR list.
    Ber,
    /// Runs every self-check suite; exits nonzero on any failure.
    Verify {
        #[arg(long)]
        flip_cp_phase: bool,
    },
    /// Frame CSV (m,n,re,im) to waveform CSV (t,re,im).
    Modulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "oddm")]
        scheme: SchemeArg,
        /// Defaults to <out>/waveform.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Waveform CSV (t,re,im) to frame CSV (m,n,re,im).
    Demodulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "oddm")]
        scheme: SchemeArg,
        /// Defaults to <out>/frame.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn build_spec(cli: &Cli) -> Result<ExperimentSpec> {
    let mut raw = match &cli.config {
        Some(p) => read_kv_file(p)?,
        None => Default::default(),
    };
    if let Some(s) = &cli.scenario {
        raw.insert("scenario".into(), s.clone());
    }
    if let Some(seed) = cli.seed {
        raw.insert("seed".into(), seed.to_string());
    }
    let mut spec = ExperimentSpec::from_raw(&raw)?;
    if cli.threads.is_some() {
        spec.threads = cli.threads;
    }
    spec.out_dir = Some(cli.out.clone());
    spec.validate()?;
    Ok(spec)
}

fn run(cli: &Cli) -> Result<bool> {
    let spec = build_spec(cli)?;
    let out = &cli.out;
    let echo = spec.to_kv();
    match &cli.command {
        Command::VerifyPulse { tol } => {
            let r = verify_orthogonality(&spec.cfg, *tol)?;
            println!("{}", r.summary());
            write_outputs(out, &[("ambiguity.csv", r.to_csv()), ("summary.txt", format!("{echo}{}\n", r.summary()))])?;
            Ok(r.passed())
        }
        Command::IoCheck { trials, flip_cp_phase } => {
            let phase = if *flip_cp_phase { CpPhase::Flipped } else { CpPhase::Correct };
            let r = run_io_check(&spec, trials.unwrap_or(spec.io_trials), phase)?;
            println!("{}", r.summary());
            write_outputs(out, &[("io_check.csv", r.to_csv()), ("summary.txt", format!("{echo}{}\n", r.summary()))])?;
            Ok(r.oddm_max() <= 1e-2)
        }
        Command::Psd => {
            let r = run_psd(&spec)?;
            let summary = r.summary(&spec);
            print!("{summary}");
            write_outputs(out, &[("psd.csv", r.to_csv()), ("summary.txt", summary)])?;
            Ok(true)
        }
        Command::Ber => {
            let r = run_ber(&spec)?;
            let summary = r.summary(&spec);
            print!("{summary}");
            write_outputs(out, &[("ber.csv", r.to_csv()), ("summary.txt", summary)])?;
            Ok(true)
        }
        Command::Verify { flip_cp_phase } => {
            let opts = VerifyOptions {
                cp_phase: if *flip_cp_phase { CpPhase::Flipped } else { CpPhase::Correct },
                ..Default::default()
            };
            let r = run_verify(&spec, &opts)?;
            print!("{}", r.summary());
            write_outputs(out, &[("summary.txt", format!("{echo}{}", r.summary()))])?;
            if !r.passed() {
                eprintln!("failed suites: {}", r.failures().join(", "));
            }
            Ok(r.passed())
        }
        Command::Modulate { input, scheme, output } => {
            let cfg = &spec.cfg;
            let x = frame_from_csv(&std::fs::read_to_string(input)?, cfg.m, cfg.n)?;
            let w = match scheme {
                SchemeArg::Oddm => OddmModem::new(cfg)?.modulate(&x)?,
                SchemeArg::Otfs => OtfsModem::new(cfg).modulate(&x)?,
            };
            let path = output.clone().unwrap_or_else(|| out.join("waveform.csv"));
            write_file(&path, &waveform_to_csv(&w))?;
            println!("{} samples at {} Hz -> {}", w.len(), w.rate, path.display());
            Ok(true)
        }
        Command::Demodulate { input, scheme, output } => {
            let cfg = &spec.cfg;
            let w = waveform_from_csv(&std::fs::read_to_string(input)?)?;
            let x = match scheme {
                SchemeArg::Oddm => OddmModem::new(cfg)?.demodulate(&w)?,
                SchemeArg::Otfs => OtfsModem::new(cfg).demodulate(&w)?,
            };
            let path = output.clone().unwrap_or_else(|| out.join("frame.csv"));
            write_file(&path, &frame_to_csv(&x))?;
            println!("{}x{} frame ({}) -> {}", x.m(), x.n(), scheme_name(*scheme), path.display());
            Ok(true)
        }
    }
}

fn scheme_name(s: SchemeArg) -> &'static str {
    match s {
        SchemeArg::Oddm => Scheme::Oddm.as_str(),
        SchemeArg::Otfs => Scheme::Otfs.as_str(),
    }
}

fn write_file(path: &std::path::Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // best effort; per-run pools are built from the spec as well
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
