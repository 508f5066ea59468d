//! Two-photon (Hong-Ou-Mandel) interference scan on a same-side detector pair.
//!
//! The pulse separation is detuned from the arm delay difference by the
//! mismatch `m`, so the early-long and late-short wavepackets meet at the
//! output coupler `m` ps apart and coincidences on detectors 1 and 2 appear at
//! delays `±m`. Each point is also evaluated with fully distinguishable photons
//! (zero overlap) in the same window; the ratio removes the window's capture
//! of the peak shape, which changes with `m`.

use crate::config::{ExperimentConfig, Mode};
use crate::correlator::{Binning, CorrelationHistogram, Correlator, Pair, MIN_HALF_RANGE};
use crate::engine::Simulator;
use crate::error::{Error, Result};

use super::model::CorrelationModel;

pub const HOM_PAIR: Pair = (1, 2);

#[derive(Debug, Clone, PartialEq)]
pub struct HomPoint {
    /// Pulse separation minus arm delay difference, ps.
    pub mismatch: i64,
    /// Coincidences per cycle in the central window(s).
    pub rate: f64,
    /// Same, for distinguishable photons.
    pub reference: f64,
}

impl HomPoint {
    pub fn relative_rate(&self) -> f64 {
        self.rate / self.reference
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomScan {
    pub points: Vec<HomPoint>,
    /// Mean relative rate at mismatches beyond the wavepacket gate.
    pub plateau: f64,
    /// `1 - rate(0) / plateau`.
    pub dip_visibility: f64,
    /// Decay constant of an exponential fitted to the dip, ps.
    pub fitted_width: Option<f64>,
    /// Decay constant implied by the overlap kernel, ps.
    pub predicted_width: f64,
}

fn config_at(config: &ExperimentConfig, mismatch: i64) -> Result<ExperimentConfig> {
    let mut cfg = config.clone();
    cfg.source.pulse_separation = config.optics.arm_delay_difference() + mismatch;
    cfg.validate().map_err(|e| match e {
        Error::Validation { constraint, value, .. } => Error::validation(
            "delay_mismatch",
            format!("gives an invalid pulse separation: {constraint}"),
            format!("{mismatch} (pulse separation {value})"),
        ),
        other => other,
    })?;
    Ok(cfg)
}

/// Simulated histograms for `pairs`, streamed without keeping the tags.
pub(crate) fn simulate_histograms(
    config: &ExperimentConfig,
    pairs: &[Pair],
    half_range: i64,
    n_cycles: u64,
    seed: u64,
) -> Result<Vec<CorrelationHistogram>> {
    let sim = Simulator::new(config)?;
    let mut corr = Correlator::new(pairs, half_range, config.detectors.bin_width)?;
    let mut tags = Vec::new();
    sim.run(n_cycles, seed, |batch, _| {
        tags.clear();
        tags.extend(batch.iter().map(|c| c.tag));
        corr.push(&tags)
    })?;
    Ok(corr.finish())
}

/// Coincidences per cycle within `half_window` of `+m` or `-m`.
fn window_rate(binning: &Binning, values: &[f64], mismatch: i64, half_window: f64, n_cycles: f64) -> f64 {
    let m = mismatch.abs() as f64;
    let mass = if m < half_window {
        binning.window_sum(values, -m - half_window, m + half_window)
    } else {
        binning.window_sum(values, -m - half_window, -m + half_window)
            + binning.window_sum(values, m - half_window, m + half_window)
    };
    mass / n_cycles
}

fn point(config: &ExperimentConfig, mismatch: i64) -> Result<HomPoint> {
    let cfg = config_at(config, mismatch)?;
    let mut distinguishable = cfg.clone();
    distinguishable.source.intrinsic_overlap = 0.0;
    let binning = Binning {
        half_range: MIN_HALF_RANGE,
        bin_width: cfg.detectors.bin_width,
    };
    let half_window = cfg.analysis.central_window as f64 / 2.0;
    let phase = cfg.optics.phase_difference();
    let rate_of = |c: &ExperimentConfig| -> Result<f64> {
        match c.run.mode {
            Mode::Analytic => {
                let values = CorrelationModel::new(c, binning)?.expected(HOM_PAIR, phase);
                Ok(window_rate(&binning, &values, mismatch, half_window, 1.0))
            }
            Mode::MonteCarlo => {
                let h = simulate_histograms(c, &[HOM_PAIR], binning.half_range, c.run.n_cycles, c.run.master_seed)?;
                let values = h[0].counts_f64();
                Ok(window_rate(
                    &binning,
                    &values,
                    mismatch,
                    half_window,
                    c.run.n_cycles as f64,
                ))
            }
        }
    };
    let rate = rate_of(&cfg)?;
    let reference = rate_of(&distinguishable)?;
    if !(reference > 0.0) {
        return Err(Error::Degenerate(format!(
            "no distinguishable-photon coincidences at mismatch {mismatch} ps"
        )));
    }
    Ok(HomPoint {
        mismatch,
        rate,
        reference,
    })
}

/// Exponential decay constant of `dip(m) = 1 - relative(m) / plateau`
/// from a log-linear fit over points inside the gate with a positive dip.
fn fit_width(points: &[HomPoint], plateau: f64, gate: f64) -> Option<f64> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| (p.mismatch.abs() as f64) < gate)
        .filter_map(|p| {
            let dip = 1.0 - p.relative_rate() / plateau;
            (dip > 0.0).then(|| (p.mismatch.abs() as f64, dip.ln()))
        })
        .collect();
    let n = data.len() as f64;
    let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|d| (d.0 - mx).powi(2)).sum();
    if data.len() < 2 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -1.0 / slope)
}

/// Coincidence rate on detectors (1,2) versus delay mismatch. Uses
/// `config.run` for the mode, cycles per point and seed.
pub fn hom_scan(config: &ExperimentConfig, delay_mismatches: &[i64]) -> Result<HomScan> {
    config.validate()?;
    if delay_mismatches.is_empty() {
        return Err(Error::validation("delay_mismatches", "must not be empty", 0));
    }
    if !delay_mismatches.contains(&0) {
        return Err(Error::validation("delay_mismatches", "must include 0", "no zero"));
    }
    let gate = config.source.wavepacket_gate();
    let points = delay_mismatches
        .iter()
        .map(|&m| point(config, m))
        .collect::<Result<Vec<_>>>()?;
    let far: Vec<f64> = points
        .iter()
        .filter(|p| p.mismatch.abs() as f64 >= gate)
        .map(HomPoint::relative_rate)
        .collect();
    if far.is_empty() {
        return Err(Error::validation(
            "delay_mismatches",
            format!("need at least one mismatch with |m| >= {gate} ps for the plateau"),
            "none",
        ));
    }
    let plateau = far.iter().sum::<f64>() / far.len() as f64;
    let at_zero = points.iter().find(|p| p.mismatch == 0).expect("checked above");
    Ok(HomScan {
        dip_visibility: 1.0 - at_zero.relative_rate() / plateau,
        fitted_width: fit_width(&points, plateau, gate),
        predicted_width: config.source.coherence_time as f64,
        plateau,
        points,
    })
}
