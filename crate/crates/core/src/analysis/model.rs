//! Correlation-histogram model built from the emission-time profile.
//!
//! A coincidence peak has the shape of the emission profile correlated with
//! itself; the histogram is a sum of such peaks at the delays allowed by the
//! pulse and arm timing, plus a flat accidental level.

use crate::config::ExperimentConfig;
use crate::correlator::{Binning, Pair};
use crate::engine::{two_photon_table, RouteAmplitudes};
use crate::error::{Error, Result};
use crate::optics::{DriftMode, InterferometerConfig, Route};

/// Sampled time profile: `values[m]` is the probability mass in
/// `[t - r/2, t + r/2)` around `t = start + m * r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlTrace {
    pub resolution: i64,
    pub start: i64,
    pub values: Vec<f64>,
}

/// Which photons a trace describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Component {
    /// Prompt and tail photons mixed by the tail fraction.
    All,
    Prompt,
}

fn exp_mass(tau: f64, lo: f64, hi: f64) -> f64 {
    let lo = lo.max(0.0);
    if hi <= lo {
        return 0.0;
    }
    (-lo / tau).exp() - (-hi / tau).exp()
}

/// Emission-time profile of the source as seen through detectors with
/// Gaussian timing jitter `jitter_sigma` (ps).
pub fn emission_trace(config: &ExperimentConfig, resolution: i64) -> Result<PlTrace> {
    trace(config, resolution, Component::All)
}

pub(crate) fn trace(config: &ExperimentConfig, resolution: i64, component: Component) -> Result<PlTrace> {
    if resolution <= 0 {
        return Err(Error::validation("resolution", "must be > 0", resolution));
    }
    let src = &config.source;
    let sigma = config.detectors.timing_jitter_sigma;
    let (tf, ts) = (src.tau_fast as f64, src.tau_slow as f64);
    let (prompt, tail) = match component {
        Component::All => (1.0 - src.tail_fraction, src.tail_fraction),
        Component::Prompt => (1.0, 0.0),
    };
    let longest = if tail > 0.0 { ts } else { tf };
    let r = resolution as f64;
    let n = (14.0 * longest / r).ceil() as usize + 1;
    let raw: Vec<f64> = (0..n)
        .map(|m| {
            let (lo, hi) = (m as f64 * r - r / 2.0, m as f64 * r + r / 2.0);
            prompt * exp_mass(tf, lo, hi) + tail * exp_mass(ts, lo, hi)
        })
        .collect();
    if sigma <= 0.0 {
        return Ok(PlTrace {
            resolution,
            start: 0,
            values: raw,
        });
    }
    let half = (6.0 * sigma / r).ceil() as i64;
    let sub = 16;
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| {
            (0..sub)
                .map(|s| {
                    let t = (k as f64 - 0.5 + (s as f64 + 0.5) / sub as f64) * r;
                    (-0.5 * (t / sigma).powi(2)).exp()
                })
                .sum::<f64>()
        })
        .collect();
    let norm: f64 = kernel.iter().sum();
    let mut values = vec![0.0; n + 2 * half as usize];
    for (m, &v) in raw.iter().enumerate() {
        for (k, &g) in kernel.iter().enumerate() {
            values[m + k] += v * g / norm;
        }
    }
    Ok(PlTrace {
        resolution,
        start: -half * resolution,
        values,
    })
}

/// Autocorrelation of a trace normalized to unit mass; index `n - 1 + l` holds lag `l`.
struct Autocorr {
    resolution: i64,
    half: usize,
    values: Vec<f64>,
}

impl Autocorr {
    fn new(trace: &PlTrace) -> Result<Self> {
        if trace.values.is_empty() {
            return Err(Error::validation("pl_trace", "must not be empty", 0));
        }
        if let Some(v) = trace.values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::validation("pl_trace", "values must be finite and >= 0", v));
        }
        if trace.resolution <= 0 {
            return Err(Error::validation(
                "pl_trace.resolution",
                "must be > 0",
                trace.resolution,
            ));
        }
        let p = &trace.values;
        let n = p.len();
        let mut values = vec![0.0; 2 * n - 1];
        for l in 0..n {
            let s: f64 = p[..n - l].iter().zip(&p[l..]).map(|(a, b)| a * b).sum();
            values[n - 1 + l] = s;
            values[n - 1 - l] = s;
        }
        let total: f64 = values.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate("pl_trace has no mass".into()));
        }
        values.iter_mut().for_each(|v| *v /= total);
        Ok(Self {
            resolution: trace.resolution,
            half: n - 1,
            values,
        })
    }

    /// Adds `weight` copies of the peak centered at `offset` to `out`.
    fn place(&self, offset: i64, weight: f64, binning: &Binning, out: &mut [f64]) {
        let r = self.resolution as f64;
        let w = binning.bin_width as f64;
        let first_edge = binning.center(0) as f64 - w / 2.0;
        for (idx, &v) in self.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let x = offset as f64 + (idx as f64 - self.half as f64) * r;
            let (lo, hi) = (x - r / 2.0, x + r / 2.0);
            let k0 = ((lo - first_edge) / w).floor().max(0.0) as usize;
            let mut k = k0;
            while k < out.len() {
                let edge_lo = first_edge + k as f64 * w;
                if edge_lo >= hi {
                    break;
                }
                let overlap = (hi.min(edge_lo + w) - lo.max(edge_lo)).max(0.0);
                out[k] += weight * v * overlap / r;
                k += 1;
            }
        }
    }
}

/// Model histogram: the trace's self-correlation placed at each offset with
/// the given weight (its total area), plus `dark_level` in every bin.
///
/// The trace resolution must not exceed the histogram bin width.
pub fn reconstruct_correlation(
    pl_trace: &PlTrace,
    peak_offsets: &[i64],
    peak_weights: &[f64],
    dark_level: f64,
    binning: Binning,
) -> Result<Vec<f64>> {
    if peak_offsets.len() != peak_weights.len() {
        return Err(Error::validation(
            "peak_weights",
            format!("need one weight per offset ({})", peak_offsets.len()),
            peak_weights.len(),
        ));
    }
    if pl_trace.resolution > binning.bin_width {
        return Err(Error::validation(
            "pl_trace.resolution",
            format!("must not exceed the bin width {}", binning.bin_width),
            pl_trace.resolution,
        ));
    }
    let ac = Autocorr::new(pl_trace)?;
    let mut out = vec![dark_level; binning.len()];
    for (&o, &w) in peak_offsets.iter().zip(peak_weights) {
        if w != 0.0 {
            ac.place(o, w, &binning, &mut out);
        }
    }
    Ok(out)
}

/// Peak delays of a two-pulse cycle: `k * period + j * separation` for
/// `|k| <= cycles` and `|j| <= 2`, with the relative weights of a balanced
/// network (one photon per pulse, equal arm and detector probabilities).
pub fn satellite_offsets(pulse_separation: i64, repetition_period: i64, cycles: i64) -> Vec<(i64, f64)> {
    // arrival slots of one photon, in units of the separation: 0, 1, 2 with 1/4, 1/2, 1/4
    let inter = [1.0, 4.0, 6.0, 4.0, 1.0].map(|x| x / 4.0);
    // in-cycle: early slot {0,1} vs late slot {1,2}, both orderings
    let intra = [0.25, 0.5, 0.5, 0.5, 0.25];
    let mut out = Vec::new();
    for k in -cycles..=cycles {
        for (idx, j) in (-2..=2).enumerate() {
            let w = if k == 0 { intra[idx] } else { inter[idx] };
            out.push((k * repetition_period + j * pulse_separation, w));
        }
    }
    out
}

fn route_probabilities(optics: &InterferometerConfig) -> [f64; 8] {
    RouteAmplitudes::new(optics).probabilities()
}

/// `(arrival slot within the cycle, probability)` of one photon from
/// `pulse` clicking detector `d`, detection efficiency included.
fn clicks_on(config: &ExperimentConfig, probs: &[f64; 8], pulse: i64, d: u8) -> Vec<(i64, f64)> {
    let eta = config.detectors.efficiency[(d - 1) as usize];
    Route::ALL
        .iter()
        .zip(probs)
        .filter(|(r, _)| r.detector == d)
        .map(|(r, &p)| {
            (
                pulse * config.source.pulse_separation + r.arm_delay(&config.optics),
                p * eta,
            )
        })
        .collect()
}

fn push_peak(out: &mut Vec<(i64, f64)>, offset: i64, weight: f64) {
    if weight == 0.0 {
        return;
    }
    match out.iter_mut().find(|(o, _)| *o == offset) {
        Some(e) => e.1 += weight,
        None => out.push((offset, weight)),
    }
}

/// Expected classical coincidences per cycle for `pair`, grouped by peak
/// delay, over `cycles` neighbouring cycles on each side. No interference
/// and no dark counts.
pub fn classical_peak_pattern(config: &ExperimentConfig, pair: Pair, cycles: i64) -> Vec<(i64, f64)> {
    let src = &config.source;
    let probs = route_probabilities(&config.optics);
    let p = src.emission_probability;
    let q = src.extra_photon_probability();
    let mean = p * (1.0 + q);
    let pairs_same_pulse = 2.0 * p * q;
    let (i, j) = pair;
    let on_i = [clicks_on(config, &probs, 0, i), clicks_on(config, &probs, 1, i)];
    let on_j = [clicks_on(config, &probs, 0, j), clicks_on(config, &probs, 1, j)];
    let mut out = Vec::new();
    for x in 0..2 {
        for y in 0..2 {
            for &(ta, pa) in &on_i[x] {
                for &(tb, pb) in &on_j[y] {
                    for k in -cycles..=cycles {
                        let n = if k == 0 && x == y {
                            pairs_same_pulse
                        } else {
                            mean * mean
                        };
                        push_peak(&mut out, k * src.repetition_period + tb - ta, n * pa * pb);
                    }
                }
            }
        }
    }
    out.sort_by_key(|e| e.0);
    out
}

/// Two-photon table averaged over the configured phase drift.
fn drift_averaged_table(optics: &InterferometerConfig, overlap: f64) -> [f64; 64] {
    let sigma = optics.drift_sigma;
    if optics.drift_mode == DriftMode::None || sigma == 0.0 {
        return two_photon_table(&RouteAmplitudes::new(optics), overlap);
    }
    let nodes = 121;
    let grid: Vec<(f64, f64)> = (0..nodes)
        .map(|k| {
            let z = -6.0 + 12.0 * k as f64 / (nodes - 1) as f64;
            (z * sigma, (-0.5 * z * z).exp())
        })
        .collect();
    let norm: f64 = grid.iter().map(|g| g.1).sum();
    let mut acc = [0.0; 64];
    let mut add = |dh: f64, dv: f64, w: f64| {
        let amps = RouteAmplitudes::with_phases(optics, optics.phase_h + dh, optics.phase_v + dv);
        for (a, t) in acc.iter_mut().zip(two_photon_table(&amps, overlap)) {
            *a += w * t;
        }
    };
    match optics.drift_mode {
        DriftMode::Common => {
            for &(d, w) in &grid {
                add(d, d, w / norm);
            }
        }
        _ => {
            for &(dh, wh) in &grid {
                for &(dv, wv) in &grid {
                    add(dh, dv, wh * wv / (norm * norm));
                }
            }
        }
    }
    acc
}

/// Change of the expected coincidences per cycle caused by two-photon
/// interference, grouped by peak delay.
fn interference_pattern(config: &ExperimentConfig, pair: Pair) -> Vec<(i64, f64)> {
    let src = &config.source;
    let overlap = crate::engine::sector_overlap(&config.optics, src);
    if overlap == 0.0 {
        return Vec::new();
    }
    let probs = route_probabilities(&config.optics);
    let table = drift_averaged_table(&config.optics, overlap);
    let p = src.emission_probability;
    let q = src.extra_photon_probability();
    // exactly one photon per pulse, both prompt
    let weight = (p * (1.0 - q)).powi(2) * (1.0 - src.tail_fraction).powi(2);
    let eta = |d: u8| config.detectors.efficiency[(d - 1) as usize];
    let mut out = Vec::new();
    for (a, early) in Route::ALL.iter().enumerate() {
        for (b, late) in Route::ALL.iter().enumerate() {
            let delta = table[a * 8 + b] - probs[a] * probs[b];
            if delta == 0.0 {
                continue;
            }
            let t_early = early.arm_delay(&config.optics);
            let t_late = src.pulse_separation + late.arm_delay(&config.optics);
            let w = weight * delta * eta(early.detector) * eta(late.detector);
            if (early.detector, late.detector) == pair {
                push_peak(&mut out, t_late - t_early, w);
            }
            if (late.detector, early.detector) == pair {
                push_peak(&mut out, t_early - t_late, w);
            }
        }
    }
    out
}

/// Mean photon clicks per cycle on detector `d`.
fn singles(config: &ExperimentConfig, d: u8) -> f64 {
    let probs = route_probabilities(&config.optics);
    let src = &config.source;
    let mean = src.emission_probability * (1.0 + src.extra_photon_probability());
    (0..2)
        .flat_map(|x| clicks_on(config, &probs, x, d))
        .map(|(_, p)| p * mean)
        .sum()
}

/// Expected coincidence histograms per excitation cycle.
pub struct CorrelationModel {
    config: ExperimentConfig,
    binning: Binning,
    all: Autocorr,
    prompt: Autocorr,
    cycles: i64,
}

impl CorrelationModel {
    pub fn new(config: &ExperimentConfig, binning: Binning) -> Result<Self> {
        config.validate()?;
        let resolution = (1..=5).rev().find(|r| binning.bin_width % r == 0).unwrap_or(1);
        let all = Autocorr::new(&trace(config, resolution, Component::All)?)?;
        let prompt = Autocorr::new(&trace(config, resolution, Component::Prompt)?)?;
        let span = binning.half_range + all.half as i64 * resolution;
        let cycles = span / config.source.repetition_period + 1;
        Ok(Self {
            config: config.clone(),
            binning,
            all,
            prompt,
            cycles,
        })
    }

    /// Expected counts per bin per cycle for `pair` with the short-arm
    /// phase difference set to `phase`.
    pub fn expected(&self, pair: Pair, phase: f64) -> Vec<f64> {
        let mut cfg = self.config.clone();
        cfg.optics.phase_h = phase + cfg.optics.phase_v;
        let d = &cfg.detectors;
        let dark = |ch: u8| d.dark_count_rate[(ch - 1) as usize] * 1e-12;
        let (i, j) = pair;
        let w = self.binning.bin_width as f64;
        let period = cfg.source.repetition_period as f64;
        let flat = singles(&cfg, i) * dark(j) * w + dark(i) * w * singles(&cfg, j) + dark(i) * dark(j) * period * w;
        let mut out = vec![flat; self.binning.len()];
        for (o, wt) in classical_peak_pattern(&cfg, pair, self.cycles) {
            self.all.place(o, wt, &self.binning, &mut out);
        }
        for (o, wt) in interference_pattern(&cfg, pair) {
            self.prompt.place(o, wt, &self.binning, &mut out);
        }
        out
    }

    /// Expected counts per cycle in the central peak that do not come from
    /// the zero-delay pairing: the flat level under the peak from spill-over
    /// of neighbouring peaks and dark counts.
    pub fn spill_under_center(&self, pair: Pair, lo: f64, hi: f64) -> f64 {
        let cfg = &self.config;
        let mut out = vec![0.0; self.binning.len()];
        for (o, wt) in classical_peak_pattern(cfg, pair, self.cycles) {
            if o.abs() > cfg.source.wavepacket_gate() as i64 {
                self.all.place(o, wt, &self.binning, &mut out);
            }
        }
        self.binning.window_sum(&out, lo, hi)
    }
}

/// Expected counts per cycle for `pair` at fringe phase `phase`.
pub fn expected_correlation(config: &ExperimentConfig, pair: Pair, phase: f64, binning: Binning) -> Result<Vec<f64>> {
    Ok(CorrelationModel::new(config, binning)?.expected(pair, phase))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{coincidence_rates, CouplerParams};

    fn binning() -> Binning {
        Binning {
            half_range: 16_000,
            bin_width: 50,
        }
    }

    #[test]
    fn exponential_self_correlation_is_two_sided_exponential() {
        let tau = 400.0;
        let r = 10;
        let values: Vec<f64> = (0..600).map(|m| (-(m as f64) * r as f64 / tau).exp()).collect();
        let t = PlTrace {
            resolution: r,
            start: 0,
            values,
        };
        let b = Binning {
            half_range: 16_000,
            bin_width: 10,
        };
        let out = reconstruct_correlation(&t, &[0], &[1.0], 0.0, b).unwrap();
        let c = out[b.index(0).unwrap()];
        for lag in (-1200..=1200).step_by(10) {
            let v = out[b.index(lag).unwrap()];
            let expect = c * (-(lag as f64).abs() / tau).exp();
            assert!((v - expect).abs() < 0.01 * expect, "lag {lag}: {v} vs {expect}");
        }
    }

    #[test]
    fn delta_trace_gives_single_bin_peak() {
        let t = PlTrace {
            resolution: 50,
            start: 0,
            values: vec![3.0],
        };
        let out = reconstruct_correlation(&t, &[0, 1840], &[1.0, 0.0], 0.0, binning()).unwrap();
        let nonzero: Vec<_> = out.iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(binning().center(nonzero[0].0), 0);
        assert!((nonzero[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_is_linear() {
        let cfg = ExperimentConfig::default();
        let t = emission_trace(&cfg, 5).unwrap();
        let offs = [0, 1840, -3680, 12_500];
        let w1 = [0.3, 0.1, 0.7, 0.2];
        let w2 = [0.0, 0.5, 0.1, 0.9];
        let a = reconstruct_correlation(&t, &offs, &w1, 1e-4, binning()).unwrap();
        let b = reconstruct_correlation(&t, &offs, &w2, 2e-4, binning()).unwrap();
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| 2.0 * x + 3.0 * y).collect();
        let c = reconstruct_correlation(&t, &offs, &sum, 8e-4, binning()).unwrap();
        for k in 0..a.len() {
            assert!((2.0 * a[k] + 3.0 * b[k] - c[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_traces() {
        let empty = PlTrace {
            resolution: 5,
            start: 0,
            values: vec![],
        };
        assert!(reconstruct_correlation(&empty, &[0], &[1.0], 0.0, binning()).is_err());
        let neg = PlTrace {
            resolution: 5,
            start: 0,
            values: vec![1.0, -1.0],
        };
        assert!(reconstruct_correlation(&neg, &[0], &[1.0], 0.0, binning()).is_err());
        let coarse = PlTrace {
            resolution: 100,
            start: 0,
            values: vec![1.0],
        };
        assert!(reconstruct_correlation(&coarse, &[0], &[1.0], 0.0, binning()).is_err());
        let t = PlTrace {
            resolution: 5,
            start: 0,
            values: vec![1.0],
        };
        assert!(reconstruct_correlation(&t, &[0, 1], &[1.0], 0.0, binning()).is_err());
    }

    #[test]
    fn trace_has_unit_mass_and_right_mean() {
        let mut cfg = ExperimentConfig::default();
        cfg.source.tail_fraction = 0.0;
        let t = trace(&cfg, 5, Component::All).unwrap();
        let mass: f64 = t.values.iter().sum();
        assert!((mass - 1.0).abs() < 1e-6);
        let mean: f64 = t
            .values
            .iter()
            .enumerate()
            .map(|(m, v)| v * (t.start + m as i64 * t.resolution) as f64)
            .sum();
        assert!((mean - 170.0).abs() < 1.0, "{mean}");
    }

    #[test]
    fn flat_background_matches_zero_delay_level() {
        // satellites only: the level they leave at zero delay equals the
        // level between 5.0 and 7.5 ns
        let cfg = ExperimentConfig::default();
        let t = emission_trace(&cfg, 5).unwrap();
        let pattern: Vec<(i64, f64)> = satellite_offsets(1840, 12_500, 3)
            .into_iter()
            .filter(|p| p.0 != 0)
            .collect();
        let offs: Vec<i64> = pattern.iter().map(|p| p.0).collect();
        let w: Vec<f64> = pattern.iter().map(|p| p.1).collect();
        let b = binning();
        let out = reconstruct_correlation(&t, &offs, &w, 0.0, b).unwrap();
        let at_zero = out[b.index(0).unwrap()];
        let window = (b.window_sum(&out, 5000.0, 7500.0) + b.window_sum(&out, -7500.0, -5000.0)) / 100.0;
        let rel = (at_zero - window).abs() / window;
        assert!(rel < 0.05, "zero {at_zero} window {window} rel {rel}");
    }

    #[test]
    fn flat_background_holds_for_each_cross_pair() {
        let cfg = ExperimentConfig::default();
        let t = emission_trace(&cfg, 5).unwrap();
        let b = binning();
        for pair in crate::optics::CROSS_PAIRS {
            let pattern: Vec<(i64, f64)> = classical_peak_pattern(&cfg, pair, 3)
                .into_iter()
                .filter(|p| p.0 != 0)
                .collect();
            let offs: Vec<i64> = pattern.iter().map(|p| p.0).collect();
            let w: Vec<f64> = pattern.iter().map(|p| p.1).collect();
            let out = reconstruct_correlation(&t, &offs, &w, 0.0, b).unwrap();
            let at_zero = out[b.index(0).unwrap()];
            let window = (b.window_sum(&out, 5000.0, 7500.0) + b.window_sum(&out, -7500.0, -5000.0)) / 100.0;
            let rel = (at_zero - window).abs() / window;
            assert!(rel < 0.05, "{pair:?}: zero {at_zero} window {window} rel {rel}");
        }
    }

    #[test]
    fn classical_pattern_counts_all_photon_pairs() {
        let mut cfg = ExperimentConfig::default();
        cfg.source.g2_zero = 0.0;
        cfg.detectors.efficiency = [1.0; 4];
        let pat = classical_peak_pattern(&cfg, (1, 3), 0);
        // one photon per pulse: two ordered photon pairs per cycle
        let total: f64 = pat.iter().map(|p| p.1).sum();
        let p = cfg.source.emission_probability;
        let probs = route_probabilities(&cfg.optics);
        let on = |d: u8| -> f64 {
            Route::ALL
                .iter()
                .zip(&probs)
                .filter(|(r, _)| r.detector == d)
                .map(|(_, p)| p)
                .sum()
        };
        assert!((total - 2.0 * p * p * on(1) * on(3)).abs() < 1e-12);
        let offsets: Vec<i64> = pat.iter().map(|p| p.0).collect();
        assert_eq!(offsets, vec![-3680, -1840, 0, 1840, 3680]);
    }

    #[test]
    fn central_peak_follows_closed_form() {
        // ideal source: central areas of the four cross pairs follow the closed-form coincidence ratios
        let mut cfg = ExperimentConfig::default();
        cfg.source.g2_zero = 0.0;
        cfg.source.tail_fraction = 0.0;
        cfg.source.tau_fast = 20;
        cfg.source.intrinsic_overlap = 1.0;
        cfg.detectors = crate::engine::DetectorConfig::ideal();
        let model = CorrelationModel::new(&cfg, binning()).unwrap();
        for phase in [0.0, 1.0, 2.5, 4.0] {
            let central: Vec<f64> = crate::optics::CROSS_PAIRS
                .iter()
                .map(|&pair| {
                    let h = model.expected(pair, phase);
                    binning().window_sum(&h, -1000.0, 1000.0)
                })
                .collect();
            let sum: f64 = central.iter().sum();
            let expected = coincidence_rates(
                &CouplerParams {
                    reflectance: 0.6,
                    transmittance: 0.4,
                },
                &CouplerParams {
                    reflectance: 0.55,
                    transmittance: 0.45,
                },
                phase,
                1.0,
            )
            .unwrap()
            .as_array();
            for (c, e) in central.iter().zip(expected) {
                assert!((c / sum - e).abs() < 1e-3, "phase {phase}: {} vs {e}", c / sum);
            }
        }
    }

    #[test]
    fn independent_drift_damps_fringe() {
        let mut cfg = ExperimentConfig::default();
        cfg.optics.coupler_a = CouplerParams::balanced();
        cfg.optics.coupler_b = CouplerParams::balanced();
        let b = binning();
        let area = |cfg: &ExperimentConfig, phase| {
            let h = expected_correlation(cfg, (1, 3), phase, b).unwrap();
            b.window_sum(&h, -300.0, 300.0)
        };
        let vis = |cfg: &ExperimentConfig| {
            let (hi, lo) = (area(cfg, 0.0), area(cfg, std::f64::consts::PI));
            (hi - lo) / (hi + lo)
        };
        let v0 = vis(&cfg);
        cfg.optics.drift_mode = DriftMode::Common;
        cfg.optics.drift_sigma = 0.5;
        assert!((vis(&cfg) - v0).abs() < 1e-9);
        cfg.optics.drift_mode = DriftMode::Independent;
        let damped = vis(&cfg);
        assert!((damped / v0 - (-0.25f64).exp()).abs() < 1e-3, "{damped} {v0}");
    }
}
