//! Simulation and analysis of Franson-type two-photon interference with a
//! pulsed single-photon source.
//!
//! The crate covers the interferometer physics ([`optics`]), the emitter
//! ([`source`]), a Monte Carlo engine producing detector time tags
//! ([`engine`]), coincidence histogramming and normalization
//! ([`correlator`]), fringe and background analysis ([`analysis`]) and the
//! orchestration used by the `franson` binary ([`pipeline`]).

pub mod analysis;
pub mod config;
pub mod correlator;
pub mod engine;
pub mod error;
pub mod optics;
pub mod pipeline;
pub mod source;

pub use config::{load_config, ExperimentConfig, Mode};
pub use error::{Error, Result};
