//! Simulation and DSP toolkit for same-wavelength bi-directional WDM
//! transmission over a single hollow-core fibre span.
//!
//! The crate is organised bottom-up:
//!
//! * [`plan`] builds the multi-band channel grid.
//! * [`fiber`] holds the span model (attenuation, Rayleigh backscatter,
//!   gas-line absorption).
//! * [`budget`] turns those into per-channel SNR breakdowns for both
//!   directions and quantifies the bi-directional penalty.
//! * [`constellation`] estimates GMI for labelled 2D constellations and
//!   optimises their geometry.
//! * [`rate`] maps GMI to decoded rates through a code-rate puncturing
//!   threshold model.
//! * [`waveform`] runs a single-channel, dual-polarisation waveform
//!   simulation with a pilot-aided receiver.
//! * [`scenario`] and [`report`] ingest scenario files, orchestrate runs and
//!   persist results.

pub mod budget;
pub mod constellation;
pub mod error;
pub mod fiber;
pub mod plan;
pub mod rate;
pub mod report;
pub mod scenario;
pub mod seed;
pub mod units;
pub mod waveform;

pub use error::{Error, Result};
