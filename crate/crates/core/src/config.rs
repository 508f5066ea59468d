//! Experiment configuration: flat `key = value` text with dotted sections.
//!
//! ```text
//! # comment
//! source.g2_zero = 0.015
//! source.tau_slow_ps = 2600
//! optics.coupler_a.reflectance = 0.6
//! run.phase_scan = 0, 1.5707963267948966, 3.141592653589793, 4.71238898038469
//! ```
//!
//! Times are integer picoseconds (`*_ps` keys), probabilities are decimal
//! fractions, phases are radians. Omitted keys keep their defaults; unknown
//! keys are rejected.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::engine::DetectorConfig;
use crate::error::{Error, Result};
use crate::optics::{CouplerParams, InterferometerConfig};
use crate::source::SourceParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Closed-form rates plus the analytic background model.
    Analytic,
    #[default]
    MonteCarlo,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "analytic" => Ok(Mode::Analytic),
            "montecarlo" => Ok(Mode::MonteCarlo),
            other => Err(format!("unknown mode `{other}` (expected analytic or montecarlo)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Analytic => "analytic",
            Mode::MonteCarlo => "montecarlo",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Total cycles of a run; a phase scan splits them evenly over its settings.
    pub n_cycles: u64,
    pub master_seed: u64,
    /// Settings of `phase_h - phase_v`, rad.
    pub phase_scan: Vec<f64>,
    pub mode: Mode,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_cycles: 10_000_000,
            master_seed: 1,
            phase_scan: even_phases(16),
            mode: Mode::MonteCarlo,
            workers: 1,
        }
    }
}

/// `n` settings evenly spread over one fringe period.
pub fn even_phases(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * std::f64::consts::TAU / n as f64).collect()
}

/// Correlation and background windows, ps.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisParams {
    /// Histogram range is `[-half_range, half_range]`.
    pub half_range: i64,
    /// Full width of the window around zero delay that defines the coincidence rate.
    pub central_window: i64,
    pub norm_half_range: i64,
    /// Delay range (both signs) used for the flat background estimate.
    pub background_window: (i64, i64),
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            half_range: 16_000,
            central_window: 600,
            norm_half_range: 16_000,
            background_window: (5_000, 7_500),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub source: SourceParams,
    pub optics: InterferometerConfig,
    pub detectors: DetectorConfig,
    pub run: RunConfig,
    pub analysis: AnalysisParams,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.optics.validate()?;
        self.optics.check_delay_regime(self.source.coherence_time)?;
        self.detectors.validate()?;
        if self.run.n_cycles == 0 {
            return Err(Error::validation("run.n_cycles", "must be >= 1", 0));
        }
        if self.run.workers == 0 {
            return Err(Error::validation("run.workers", "must be >= 1", 0));
        }
        if self.run.phase_scan.is_empty() {
            return Err(Error::validation(
                "run.phase_scan",
                "must list at least one phase",
                "[]",
            ));
        }
        if let Some(p) = self.run.phase_scan.iter().find(|p| !p.is_finite()) {
            return Err(Error::validation("run.phase_scan", "phases must be finite", p));
        }
        let a = &self.analysis;
        let w = self.detectors.bin_width;
        if a.half_range % w != 0 {
            return Err(Error::validation(
                "analysis.half_range_ps",
                format!("must be a multiple of detectors.bin_width_ps = {w}"),
                a.half_range,
            ));
        }
        if a.central_window <= 0 {
            return Err(Error::validation(
                "analysis.central_window_ps",
                "must be > 0",
                a.central_window,
            ));
        }
        if a.norm_half_range * 2 <= a.central_window || a.norm_half_range > a.half_range {
            return Err(Error::validation(
                "analysis.norm_half_range_ps",
                "must exceed half the central window and not exceed analysis.half_range_ps",
                a.norm_half_range,
            ));
        }
        let (lo, hi) = a.background_window;
        if !(lo >= 0 && lo < hi && hi <= a.half_range) {
            return Err(Error::validation(
                "analysis.background_end_ps",
                "background window must satisfy 0 <= start < end <= analysis.half_range_ps",
                format!("{lo}..{hi}"),
            ));
        }
        Ok(())
    }

    /// Canonical `key = value` listing of every setting; parses back to `self`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let src = &self.source;
        line("source.emission_probability", src.emission_probability.to_string());
        line("source.g2_zero", src.g2_zero.to_string());
        line("source.tail_fraction", src.tail_fraction.to_string());
        line("source.tau_fast_ps", src.tau_fast.to_string());
        line("source.tau_slow_ps", src.tau_slow.to_string());
        line("source.coherence_time_ps", src.coherence_time.to_string());
        line("source.intrinsic_overlap", src.intrinsic_overlap.to_string());
        line("source.pulse_separation_ps", src.pulse_separation.to_string());
        line("source.repetition_period_ps", src.repetition_period.to_string());
        let o = &self.optics;
        for (name, c) in [
            ("coupler_0", &o.coupler_0),
            ("coupler_a", &o.coupler_a),
            ("coupler_b", &o.coupler_b),
        ] {
            line(&format!("optics.{name}.reflectance"), c.reflectance.to_string());
            line(&format!("optics.{name}.transmittance"), c.transmittance.to_string());
        }
        line("optics.arm_delay_long_ps", o.arm_delay_long.to_string());
        line("optics.arm_delay_short_ps", o.arm_delay_short.to_string());
        line("optics.phase_h", o.phase_h.to_string());
        line("optics.phase_v", o.phase_v.to_string());
        line("optics.drift_mode", o.drift_mode.to_string());
        line("optics.drift_sigma", o.drift_sigma.to_string());
        let d = &self.detectors;
        for k in 0..4 {
            line(&format!("detectors.efficiency_{}", k + 1), d.efficiency[k].to_string());
        }
        for k in 0..4 {
            line(
                &format!("detectors.dark_count_rate_{}", k + 1),
                d.dark_count_rate[k].to_string(),
            );
        }
        line("detectors.timing_jitter_sigma_ps", d.timing_jitter_sigma.to_string());
        line("detectors.bin_width_ps", d.bin_width.to_string());
        let r = &self.run;
        line("run.n_cycles", r.n_cycles.to_string());
        line("run.master_seed", r.master_seed.to_string());
        line(
            "run.phase_scan",
            r.phase_scan.iter().map(f64::to_string).collect::<Vec<_>>().join(", "),
        );
        line("run.mode", r.mode.to_string());
        line("run.workers", r.workers.to_string());
        let a = &self.analysis;
        line("analysis.half_range_ps", a.half_range.to_string());
        line("analysis.central_window_ps", a.central_window.to_string());
        line("analysis.norm_half_range_ps", a.norm_half_range.to_string());
        line("analysis.background_start_ps", a.background_window.0.to_string());
        line("analysis.background_end_ps", a.background_window.1.to_string());
        s
    }

    /// Short hash of every setting that can change simulated output.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.run.workers = 1;
        let digest = Sha256::digest(canonical.to_config_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "source.emission_probability" => self.source.emission_probability = float(v)?,
            "source.g2_zero" => self.source.g2_zero = float(v)?,
            "source.tail_fraction" => self.source.tail_fraction = float(v)?,
            "source.tau_fast_ps" => self.source.tau_fast = picos(v)?,
            "source.tau_slow_ps" => self.source.tau_slow = picos(v)?,
            "source.coherence_time_ps" => self.source.coherence_time = picos(v)?,
            "source.intrinsic_overlap" => self.source.intrinsic_overlap = float(v)?,
            "source.pulse_separation_ps" => self.source.pulse_separation = picos(v)?,
            "source.repetition_period_ps" => self.source.repetition_period = picos(v)?,
            "optics.arm_delay_long_ps" => self.optics.arm_delay_long = picos(v)?,
            "optics.arm_delay_short_ps" => self.optics.arm_delay_short = picos(v)?,
            "optics.phase_h" => self.optics.phase_h = float(v)?,
            "optics.phase_v" => self.optics.phase_v = float(v)?,
            "optics.drift_mode" => self.optics.drift_mode = v.parse()?,
            "optics.drift_sigma" => self.optics.drift_sigma = float(v)?,
            "detectors.dark_count_rate" => self.detectors.dark_count_rate = [float(v)?; 4],
            "detectors.timing_jitter_sigma_ps" => self.detectors.timing_jitter_sigma = float(v)?,
            "detectors.bin_width_ps" => self.detectors.bin_width = picos(v)?,
            "run.n_cycles" => {
                self.run.n_cycles = v.parse().map_err(|_| format!("expected a cycle count, got `{v}`"))?
            }
            "run.master_seed" => self.run.master_seed = v.parse().map_err(|_| format!("expected a seed, got `{v}`"))?,
            "run.phase_scan" => {
                self.run.phase_scan = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| float(s.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "run.mode" => self.run.mode = v.parse()?,
            "run.workers" => self.run.workers = v.parse().map_err(|_| format!("expected a worker count, got `{v}`"))?,
            "analysis.half_range_ps" => self.analysis.half_range = picos(v)?,
            "analysis.central_window_ps" => self.analysis.central_window = picos(v)?,
            "analysis.norm_half_range_ps" => self.analysis.norm_half_range = picos(v)?,
            "analysis.background_start_ps" => self.analysis.background_window.0 = picos(v)?,
            "analysis.background_end_ps" => self.analysis.background_window.1 = picos(v)?,
            _ => return self.set_indexed(key, v),
        }
        Ok(())
    }

    fn set_indexed(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        if let Some(rest) = key.strip_prefix("optics.") {
            if let Some((name, field)) = rest.split_once('.') {
                let coupler = match name {
                    "coupler_0" => &mut self.optics.coupler_0,
                    "coupler_a" => &mut self.optics.coupler_a,
                    "coupler_b" => &mut self.optics.coupler_b,
                    _ => return Err(format!("unknown key `{key}`")),
                };
                match field {
                    "reflectance" => {
                        let r = float(v)?;
                        *coupler = CouplerParams {
                            reflectance: r,
                            transmittance: 1.0 - r,
                        };
                    }
                    "transmittance" => coupler.transmittance = float(v)?,
                    _ => return Err(format!("unknown key `{key}`")),
                }
                return Ok(());
            }
        }
        let indexed = |prefix: &str| {
            key.strip_prefix(prefix)
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|n| (1..=4).contains(n))
        };
        if let Some(n) = indexed("detectors.efficiency_") {
            self.detectors.efficiency[n - 1] = float(v)?;
        } else if let Some(n) = indexed("detectors.dark_count_rate_") {
            self.detectors.dark_count_rate[n - 1] = float(v)?;
        } else {
            return Err(format!("unknown key `{key}`"));
        }
        Ok(())
    }

    /// Parses configuration text on top of the defaults and validates the result.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |message: String| Error::Parse {
                path: origin.to_string(),
                line: lineno,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            cfg.set(key, value).map_err(perr)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn float(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got `{v}`"))
}

fn picos(v: &str) -> std::result::Result<i64, String> {
    v.parse::<i64>()
        .map_err(|_| format!("expected an integer number of picoseconds, got `{v}`"))
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::parse(&text, &path.display().to_string())
}
