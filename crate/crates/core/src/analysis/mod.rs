//! Everything downstream of the coincidence rates: fringe fits, flat
//! background subtraction, overlap extraction, the peak-shape model and the
//! HOM / HBT source characterizations.

mod hbt;
mod hom;
mod model;
mod summary;

pub use hbt::{hbt_g2, HbtResult, HbtSource, HBT_SATELLITES};
pub(crate) use hom::simulate_histograms;
pub use hom::{hom_scan, HomPoint, HomScan, HOM_PAIR};
pub use model::{
    classical_peak_pattern, emission_trace, expected_correlation, reconstruct_correlation, satellite_offsets,
    CorrelationModel, PlTrace,
};
pub use summary::{load_summary, read_summary, save_summary, write_summary, PairSummary, Summary};

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use nalgebra::{DMatrix, DVector};

use crate::correlator::{NormalizedCorrelation, Pair};
use crate::error::{Error, Result};

/// Overlap needed for the fourth-order visibility to violate a Bell-type
/// inequality.
pub const NONLOCALITY_THRESHOLD: f64 = FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq)]
pub struct FringeResult {
    pub pair: Pair,
    pub offset: f64,
    pub amplitude: f64,
    pub phase_origin: f64,
    /// Visibility of the data as measured (V1).
    pub visibility_raw: f64,
    /// Visibility after flat-background subtraction (V2).
    pub visibility_corrected: Option<f64>,
    pub residual_rms: f64,
    /// Standard error of the raw visibility from the fit covariance; zero when
    /// there are no spare degrees of freedom.
    pub visibility_stderr: f64,
    /// Number of background-subtracted values clipped at zero.
    pub clipped: usize,
}

struct LinearFit {
    coef: [f64; 3],
    residual_rms: f64,
    cov: Option<nalgebra::Matrix3<f64>>,
}

fn check_settings(phases: &[f64]) -> Result<()> {
    if let Some(p) = phases.iter().find(|p| !p.is_finite()) {
        return Err(Error::validation("settings", "phases must be finite", p));
    }
    let mut wrapped: Vec<f64> = phases.iter().map(|p| p.rem_euclid(TAU)).collect();
    wrapped.sort_by(f64::total_cmp);
    wrapped.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if wrapped.len() > 1 && (wrapped[0] + TAU - wrapped[wrapped.len() - 1]) < 1e-9 {
        wrapped.pop();
    }
    if wrapped.len() < 4 {
        return Err(Error::validation(
            "settings",
            "fringe fit needs at least 4 distinct phases",
            wrapped.len(),
        ));
    }
    // the phases must not all fit inside an arc shorter than pi
    let mut largest_gap = wrapped[0] + TAU - wrapped[wrapped.len() - 1];
    for w in wrapped.windows(2) {
        largest_gap = largest_gap.max(w[1] - w[0]);
    }
    if TAU - largest_gap < PI - 1e-9 {
        return Err(Error::validation(
            "settings",
            "phases must span at least pi",
            format!("{:.4} rad", TAU - largest_gap),
        ));
    }
    Ok(())
}

fn linear_fit(samples: &[(f64, f64)]) -> Result<LinearFit> {
    let n = samples.len();
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => samples[i].0.cos(),
        _ => samples[i].0.sin(),
    });
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let xtx = x.transpose() * &x;
    let normal = nalgebra::Matrix3::from_iterator(xtx.iter().copied());
    let inv = normal
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("fringe design matrix is singular".into()))?;
    let xty = x.transpose() * &y;
    let c = inv * nalgebra::Vector3::new(xty[0], xty[1], xty[2]);
    let coef = [c[0], c[1], c[2]];
    let rss: f64 = samples
        .iter()
        .map(|&(p, v)| (v - coef[0] - coef[1] * p.cos() - coef[2] * p.sin()).powi(2))
        .sum();
    Ok(LinearFit {
        coef,
        residual_rms: (rss / n as f64).sqrt(),
        cov: (n > 3).then(|| inv * (rss / (n - 3) as f64)),
    })
}

/// Least-squares fit of `offset * (1 + V cos(phi - origin))` to
/// `(phase, gamma)` samples.
pub fn fit_fringe(settings: &[(f64, f64)], pair: Pair) -> Result<FringeResult> {
    check_settings(&settings.iter().map(|s| s.0).collect::<Vec<_>>())?;
    if let Some(s) = settings.iter().find(|s| !s.1.is_finite()) {
        return Err(Error::validation("settings", "coincidence rates must be finite", s.1));
    }
    let fit = linear_fit(settings)?;
    let [a0, a1, a2] = fit.coef;
    if !(a0 > 0.0) {
        return Err(Error::Degenerate(format!(
            "fringe offset {a0} for pair ({},{}) is not positive",
            pair.0, pair.1
        )));
    }
    let amplitude = a1.hypot(a2);
    let visibility = amplitude / a0;
    let visibility_stderr = match fit.cov {
        Some(cov) => {
            let grad = if amplitude > 0.0 {
                nalgebra::Vector3::new(-amplitude / (a0 * a0), a1 / (amplitude * a0), a2 / (amplitude * a0))
            } else {
                nalgebra::Vector3::new(0.0, FRAC_1_SQRT_2 / a0, FRAC_1_SQRT_2 / a0)
            };
            (grad.transpose() * cov * grad)[0].max(0.0).sqrt()
        }
        None => 0.0,
    };
    Ok(FringeResult {
        pair,
        offset: a0,
        amplitude,
        phase_origin: a2.atan2(a1),
        visibility_raw: visibility,
        visibility_corrected: None,
        residual_rms: fit.residual_rms,
        visibility_stderr,
        clipped: 0,
    })
}

/// One phase setting of a pair: measured Γ and the flat background under it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeSample {
    pub phase: f64,
    pub gamma: f64,
    pub background: f64,
}

/// Fits the raw fringe, then refits after subtracting each setting's
/// background. Negative differences are clipped to zero and counted.
pub fn corrected_visibility(samples: &[FringeSample], pair: Pair) -> Result<FringeResult> {
    let raw: Vec<(f64, f64)> = samples.iter().map(|s| (s.phase, s.gamma)).collect();
    let mut result = fit_fringe(&raw, pair)?;
    let mut clipped = 0;
    let corrected: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| {
            let v = s.gamma - s.background;
            if v < 0.0 {
                clipped += 1;
            }
            (s.phase, v.max(0.0))
        })
        .collect();
    let refit = fit_fringe(&corrected, pair)?;
    result.visibility_corrected = Some(refit.visibility_raw);
    result.clipped = clipped;
    Ok(result)
}

/// Positive delays of every correlation peak within `reach`: multiples of
/// the repetition period combined with up to two pulse separations.
pub fn peak_positions(pulse_separation: i64, repetition_period: i64, reach: i64) -> Vec<i64> {
    let mut out = Vec::new();
    let cycles = reach / repetition_period + 1;
    for k in -cycles..=cycles {
        for j in -2..=2 {
            let t = k * repetition_period + j * pulse_separation;
            if t > 0 && t <= reach {
                out.push(t);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Flat background under the central window, in the units of Γ: the mean
/// normalized value per bin over `window` (and its mirror at negative delay)
/// times the number of bins in the central window.
///
/// `peaks` lists positive peak delays the window must stay clear of.
pub fn estimate_background(norm: &NormalizedCorrelation, window: (i64, i64), peaks: &[i64]) -> Result<f64> {
    let (lo, hi) = window;
    if !(0 <= lo && lo < hi) {
        return Err(Error::validation(
            "background window",
            "needs 0 <= start < end",
            format!("{lo}..{hi}"),
        ));
    }
    if hi > norm.binning.half_range {
        return Err(Error::validation(
            "background window",
            format!("histogram only covers ±{} ps", norm.binning.half_range),
            hi,
        ));
    }
    if let Some(p) = peaks.iter().find(|&&p| p >= lo && p <= hi) {
        return Err(Error::validation(
            "background window",
            format!("overlaps the correlation peak at {p} ps"),
            format!("{lo}..{hi}"),
        ));
    }
    let b = &norm.binning;
    let (lo, hi) = (lo as f64, hi as f64);
    let mass = b.window_sum(&norm.values, lo, hi) + b.window_sum(&norm.values, -hi, -lo);
    let bins = 2.0 * (hi - lo) / b.bin_width as f64;
    Ok(mass / bins * norm.central_window as f64 / b.bin_width as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapResult {
    pub v13: f64,
    /// Multi-photon probability per cycle, `2 g2(0)`.
    pub g: f64,
    pub gamma_squared: f64,
    /// `sqrt(gamma_squared)`, clipped to 1.
    pub gamma: f64,
    /// Set when `gamma_squared` exceeded 1.
    pub out_of_range: bool,
    /// Whether the multi-photon corrected visibility `gamma_squared` exceeds 1/sqrt(2).
    pub exceeds_nonlocality_threshold: bool,
}

/// Wavefunction overlap implied by the (1,3) visibility once multi-photon
/// coincidences are accounted for.
pub fn extract_overlap(v13: f64, g2_zero: f64) -> Result<OverlapResult> {
    crate::error::check_range("v13", v13, 0.0, 1.0)?;
    crate::error::check_range("g2_zero", g2_zero, 0.0, 0.5)?;
    let g = 2.0 * g2_zero;
    let gamma_squared = v13 * (1.0 + 2.0 * g);
    let out_of_range = gamma_squared > 1.0;
    Ok(OverlapResult {
        v13,
        g,
        gamma_squared,
        gamma: gamma_squared.min(1.0).sqrt(),
        out_of_range,
        exceeds_nonlocality_threshold: gamma_squared > NONLOCALITY_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;
    use crate::correlator::Binning;

    fn cosine(n: usize, offset: f64, v: f64, origin: f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let p = k as f64 * TAU / n as f64;
                (p, offset * (1.0 + v * (p - origin).cos()))
            })
            .collect()
    }

    #[test]
    fn noiseless_cosine_is_recovered() {
        let f = fit_fringe(&cosine(8, 0.25, 0.8, 0.0), (1, 3)).unwrap();
        assert!((f.offset - 0.25).abs() < 1e-9);
        assert!((f.visibility_raw - 0.8).abs() < 1e-9);
        assert!(f.phase_origin.abs() < 1e-9);
        assert!(f.residual_rms < 1e-9);
        let g = fit_fringe(&cosine(5, 0.1, 0.3, 2.0), (2, 4)).unwrap();
        assert!((g.phase_origin - 2.0).abs() < 1e-9);
        assert!((g.amplitude - 0.03).abs() < 1e-12);
    }

    #[test]
    fn constant_data_has_no_visibility() {
        let f = fit_fringe(&cosine(6, 0.3, 0.0, 0.0), (1, 4)).unwrap();
        assert!(f.visibility_raw < 1e-12);
    }

    #[test]
    fn rejects_poor_settings() {
        let same: Vec<_> = (0..6).map(|_| (0.3, 0.2)).collect();
        assert!(matches!(fit_fringe(&same, (1, 3)), Err(Error::Validation { .. })));
        let three = cosine(3, 0.25, 0.5, 0.0);
        assert!(fit_fringe(&three, (1, 3)).is_err());
        let narrow: Vec<_> = (0..6).map(|k| (k as f64 * 0.5, 0.2)).collect();
        assert!(fit_fringe(&narrow, (1, 3)).is_err());
        // 0 and 2pi are the same setting
        let wrapped = vec![(0.0, 0.1), (TAU, 0.1), (1.0, 0.1), (2.0, 0.1)];
        assert!(fit_fringe(&wrapped, (1, 3)).is_err());
    }

    #[test]
    fn noisy_fits_stay_close() {
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let errors: Vec<f64> = (0..100)
            .map(|_| {
                let data: Vec<_> = cosine(16, 0.25, 0.8, 0.4)
                    .into_iter()
                    .map(|(p, v)| (p, v + noise.sample(&mut rng)))
                    .collect();
                fit_fringe(&data, (1, 3)).unwrap().visibility_raw - 0.8
            })
            .collect();
        let mean = errors.iter().sum::<f64>() / 100.0;
        let rms = (errors.iter().map(|e| e * e).sum::<f64>() / 100.0).sqrt();
        assert!(mean.abs() < 0.005, "{mean}");
        assert!(rms < 0.02, "{rms}");
    }

    #[test]
    fn stderr_tracks_scatter() {
        let noise = Normal::new(0.0, 0.005).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut z = Vec::new();
        for _ in 0..400 {
            let data: Vec<_> = cosine(16, 0.25, 0.6, 1.0)
                .into_iter()
                .map(|(p, v)| (p, v + noise.sample(&mut rng)))
                .collect();
            let f = fit_fringe(&data, (1, 3)).unwrap();
            z.push((f.visibility_raw - 0.6) / f.visibility_stderr);
        }
        let var = z.iter().map(|x| x * x).sum::<f64>() / z.len() as f64;
        assert!((var - 1.0).abs() < 0.25, "{var}");
    }

    #[test]
    fn background_subtraction() {
        let flat: Vec<_> = cosine(8, 0.25, 0.8, 0.0)
            .into_iter()
            .map(|(phase, gamma)| FringeSample {
                phase,
                gamma,
                background: 0.0,
            })
            .collect();
        let f = corrected_visibility(&flat, (1, 3)).unwrap();
        assert!((f.visibility_corrected.unwrap() - f.visibility_raw).abs() < 1e-12);

        let (a, v, b) = (0.25, 0.8, 0.05);
        let lifted: Vec<_> = cosine(8, a, v, 0.0)
            .into_iter()
            .map(|(phase, gamma)| FringeSample {
                phase,
                gamma: gamma + b,
                background: b,
            })
            .collect();
        let f = corrected_visibility(&lifted, (1, 3)).unwrap();
        assert!((f.visibility_raw - a * v / (a + b)).abs() < 1e-9);
        assert!((f.visibility_corrected.unwrap() - v).abs() < 1e-9);
        assert_eq!(f.clipped, 0);
    }

    #[test]
    fn oversubtraction_is_clipped() {
        let s: Vec<_> = cosine(8, 0.25, 1.0, 0.0)
            .into_iter()
            .map(|(phase, gamma)| FringeSample {
                phase,
                gamma,
                background: 0.02,
            })
            .collect();
        let f = corrected_visibility(&s, (1, 3)).unwrap();
        assert!(f.clipped > 0);
    }

    fn flat_norm(value: f64) -> NormalizedCorrelation {
        let binning = Binning {
            half_range: 16_000,
            bin_width: 50,
        };
        NormalizedCorrelation {
            pair: (1, 3),
            binning,
            values: vec![value; binning.len()],
            central_window: 600,
            gamma_window: 12.0 * value,
        }
    }

    #[test]
    fn background_arithmetic() {
        let peaks = peak_positions(1840, 12_500, 16_000);
        assert_eq!(peaks, vec![1840, 3680, 8820, 10_660, 12_500, 14_340]);
        assert_eq!(estimate_background(&flat_norm(0.0), (5000, 7500), &peaks).unwrap(), 0.0);
        let b = estimate_background(&flat_norm(1e-4), (5000, 7500), &peaks).unwrap();
        assert!((b - 12e-4).abs() < 1e-15);
        assert!(estimate_background(&flat_norm(1e-4), (3000, 7500), &peaks).is_err());
        assert!(estimate_background(&flat_norm(1e-4), (5000, 17_000), &[]).is_err());
    }

    #[test]
    fn overlap_examples() {
        let o = extract_overlap(0.84, 0.015).unwrap();
        assert!((o.g - 0.03).abs() < 1e-15);
        assert!((o.gamma_squared - 0.8904).abs() < 1e-12);
        assert!((o.gamma - 0.943_610_088_966_836).abs() < 1e-12);
        assert!(o.exceeds_nonlocality_threshold && !o.out_of_range);
        assert_eq!(extract_overlap(1.0, 0.0).unwrap().gamma, 1.0);
        assert_eq!(extract_overlap(0.0, 0.2).unwrap().gamma, 0.0);
        let hi = extract_overlap(0.99, 0.3).unwrap();
        assert!(hi.out_of_range && hi.gamma == 1.0);
        assert!(extract_overlap(1.1, 0.0).is_err());
        assert!(extract_overlap(0.5, 0.6).is_err());
    }

    proptest! {
        #[test]
        fn overlap_is_monotone(v in 0.0..1.0f64, dv in 0.0..0.5f64, g in 0.0..0.5f64, dg in 0.0..0.2f64) {
            let base = extract_overlap(v, g).unwrap().gamma_squared;
            prop_assert!(extract_overlap((v + dv).min(1.0), g).unwrap().gamma_squared >= base);
            prop_assert!(extract_overlap(v, (g + dg).min(0.5)).unwrap().gamma_squared >= base);
            prop_assert!((extract_overlap(v, 0.0).unwrap().gamma - v.sqrt()).abs() < 1e-15);
        }

        #[test]
        fn subtraction_recovers_injected_visibility(a in 0.05..1.0f64, v in 0.0..1.0f64, frac in 0.0..1.0f64, origin in -3.0..3.0f64) {
            let b = frac * a;
            let s: Vec<_> = cosine(12, a, v, origin)
                .into_iter()
                .map(|(phase, gamma)| FringeSample { phase, gamma: gamma + b, background: b })
                .collect();
            let f = corrected_visibility(&s, (1, 3)).unwrap();
            prop_assert!((f.visibility_corrected.unwrap() - v).abs() < 1e-9);
        }
    }
}
