//! Physically parametrized, context-aware gate set tomography for a two-qubit
//! trapped-ion gate set built around the light-shift (LS) entangling gate.
//!
//! The crate is organised bottom-up:
//!
//! * [`qchan`] — states, POVMs, channels and the vectorization conventions.
//! * [`spectra`] — noise spectra, filter functions and the derived noise
//!   parameters of the LS gate.
//! * [`ls_model`] — the noisy LS channel, its context-dependent repetitions and
//!   the motional bookkeeping behind them.
//! * [`gateset`], [`circuits`], [`datagen`] — the full gate set, circuits,
//!   designs and synthetic data.
//! * [`estimator`], [`fisher`], [`metrics`], [`nonmarkov`] — estimation,
//!   precision bounds, channel distances and non-Markovianity measures.
//! * [`runner`] — the experiment drivers used by the command-line tool.

pub mod circuits;
pub mod datagen;
pub mod estimator;
pub mod fisher;
pub mod gateset;
pub mod ls_model;
pub mod metrics;
pub mod nonmarkov;
pub mod qchan;
pub mod quad;
pub mod runner;
pub mod sdp;
pub mod spectra;

pub use num_complex::Complex64 as C64;

/// Dense complex matrix used for every channel and state representation.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense real matrix (Pauli transfer matrices, Fisher matrices).
pub type RMat = nalgebra::DMatrix<f64>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("operator is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("Kraus set is incomplete (deviation {0:.3e})")]
    IncompleteKraus(f64),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("model produced a negative probability {0:.3e}")]
    Unphysical(f64),
    #[error("complete-positivity violation: {0}")]
    CpViolation(String),
    #[error("mode is on resonance (zero detuning)")]
    Resonance,
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("design error: {0}")]
    Design(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("no information on the thermal parameter: amplification vanishes at p = {0}")]
    SensitivityLoss(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
