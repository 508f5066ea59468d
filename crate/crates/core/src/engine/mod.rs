//! Monte Carlo engine: excitation cycles in, detector time tags out.

mod joint;
mod sim;
mod tagfile;

pub use joint::{joint_outcome_distribution, Outcome, OutcomeDistribution, PhotonClick};
pub(crate) use joint::{sector_overlap, two_photon_table, RouteAmplitudes};
pub use sim::{run_simulation, ClickKind, ClickTruth, SimClick, Simulator, CHUNK_CYCLES};
pub use tagfile::{read_time_tags, write_time_tags};

use crate::error::{check_range, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Detection efficiency of detectors 1..=4.
    pub efficiency: [f64; 4],
    /// Dark count rate of detectors 1..=4, events/s.
    pub dark_count_rate: [f64; 4],
    /// Gaussian timing jitter, ps (truncated at 6 sigma).
    pub timing_jitter_sigma: f64,
    /// Histogram bin width, ps.
    pub bin_width: i64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            efficiency: [1.0, 0.9, 0.95, 0.85],
            dark_count_rate: [100.0; 4],
            timing_jitter_sigma: 50.0,
            bin_width: 50,
        }
    }
}

impl DetectorConfig {
    pub fn ideal() -> Self {
        Self {
            efficiency: [1.0; 4],
            dark_count_rate: [0.0; 4],
            timing_jitter_sigma: 0.0,
            bin_width: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, &e) in self.efficiency.iter().enumerate() {
            check_range(&format!("detectors.efficiency_{}", k + 1), e, 0.0, 1.0)?;
        }
        for (k, &r) in self.dark_count_rate.iter().enumerate() {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::validation(
                    format!("detectors.dark_count_rate_{}", k + 1),
                    "must be finite and >= 0",
                    r,
                ));
            }
        }
        if !(self.timing_jitter_sigma >= 0.0 && self.timing_jitter_sigma.is_finite()) {
            return Err(Error::validation(
                "detectors.timing_jitter_sigma_ps",
                "must be finite and >= 0",
                self.timing_jitter_sigma,
            ));
        }
        if self.bin_width <= 0 {
            return Err(Error::validation(
                "detectors.bin_width_ps",
                "must be > 0",
                self.bin_width,
            ));
        }
        Ok(())
    }

    /// Largest magnitude a jitter draw can take, ps.
    pub fn jitter_bound(&self) -> i64 {
        (6.0 * self.timing_jitter_sigma).ceil() as i64
    }
}

/// A single detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeTag {
    /// Time stamp, ps.
    pub time: i64,
    /// Detector, 1..=4.
    pub channel: u8,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeTagStream {
    /// Clicks ordered by time.
    pub tags: Vec<TimeTag>,
    /// Acquisition length, ps.
    pub duration: i64,
    /// Identifies the configuration that produced the stream.
    pub config_fingerprint: String,
    /// Additional `key: value` header entries, kept in file order.
    pub metadata: Vec<(String, String)>,
}

impl TimeTagStream {
    pub fn validate(&self) -> Result<()> {
        for w in self.tags.windows(2) {
            if w[1].time < w[0].time {
                return Err(Error::Contract(format!(
                    "time tags out of order: {} after {}",
                    w[1].time, w[0].time
                )));
            }
        }
        if let Some(t) = self.tags.iter().find(|t| !(1..=4).contains(&t.channel)) {
            return Err(Error::UnknownChannel(t.channel));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn count_on(&self, channel: u8) -> usize {
        self.tags.iter().filter(|t| t.channel == channel).count()
    }
}
