//! Orthogonal delay-Doppler division multiplexing (ODDM) with an OTFS
//! baseline: pulse design, modulation, doubly-selective channels, the
//! delay-Doppler input-output matrix, detectors and a BER/PSD harness.

pub mod channel;
pub mod coding;
pub mod config;
pub mod ddmatrix;
pub mod detect;
pub mod dft;
pub mod error;
pub mod frame;
pub mod harness;
pub mod modem;
pub mod psd;
pub mod pulse;
pub mod rng;
pub mod waveform;

pub use config::{PulseDesign, SimConfig};
pub use error::{Error, Result};
pub use frame::{Constellation, DDFrame};
pub use num_complex::Complex64;
pub use waveform::SampledWaveform;
