//! Modelling, fitting and characterization of magnetostatic-wave (MSW)
//! resonators from one-port reflection measurements.
//!
//! The crate is organized by stage of the workflow:
//!
//! * [`spectra`]: Touchstone I/O, S11 <-> Z11 conversion and line loss.
//! * [`circuits`]: equivalent-circuit impedance models.
//! * [`extraction`]: resonance location, Q, kt² and FOM.
//! * [`fitting`]: damped least-squares circuit fits and the two-stage
//!   zero-bias-then-biased protocol.
//! * [`magnetics`]: bias tuning law, photon-magnon anti-crossing and
//!   synthetic sweep generation.
//! * [`plot`]: deterministic SVG output.

pub mod circuits;
pub mod extraction;
pub mod fitting;
pub mod magnetics;
pub mod plot;
pub mod spectra;
pub mod units;

pub use num_complex::Complex64;

use thiserror::Error;

/// Any error raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Spectrum(#[from] spectra::SpectrumError),
    #[error(transparent)]
    Touchstone(#[from] spectra::TouchstoneError),
    #[error(transparent)]
    Circuit(#[from] circuits::CircuitError),
    #[error(transparent)]
    Extraction(#[from] extraction::ExtractionError),
    #[error(transparent)]
    Fit(#[from] fitting::FitError),
    #[error(transparent)]
    Magnetics(#[from] magnetics::MagneticsError),
}
