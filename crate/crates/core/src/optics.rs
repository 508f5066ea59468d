//! Closed-form model of the folded Franson interferometer.
//!
//! Two photons from consecutive excitation pulses are split at the input
//! coupler `C0`. The rightward photon enters the shared Mach-Zehnder at `C_A`
//! and leaves through `C_B` towards detectors 3/4; the leftward photon
//! (polarization rotated) enters at `C_B` and leaves through `C_A` towards
//! detectors 1/2. When the early photon takes the long arm and the late photon
//! the short arm, both reach the output couplers together and the two
//! exchange-related paths to a detector pair cannot be told apart. The phase
//! `phase_h - phase_v` applied in the short arm then controls the fourth-order
//! interference between detector pairs on opposite sides.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_range, Error, Result};

/// Detector pairs with one detector on each side, in the order used by
/// [`CoincidenceRates`].
pub const CROSS_PAIRS: [(u8, u8); 4] = [(1, 3), (1, 4), (2, 3), (2, 4)];

const SUM_TOLERANCE: f64 = 1e-9;

/// Intensity reflectance and transmittance of a lossless 2x2 fiber coupler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerParams {
    pub reflectance: f64,
    pub transmittance: f64,
}

impl CouplerParams {
    pub fn new(reflectance: f64) -> Result<Self> {
        let c = Self {
            reflectance,
            transmittance: 1.0 - reflectance,
        };
        c.validate("coupler")?;
        Ok(c)
    }

    pub fn balanced() -> Self {
        Self {
            reflectance: 0.5,
            transmittance: 0.5,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        check_range(&format!("{name}.reflectance"), self.reflectance, 0.0, 1.0)?;
        check_range(&format!("{name}.transmittance"), self.transmittance, 0.0, 1.0)?;
        let sum = self.reflectance + self.transmittance;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::validation(
                format!("{name}.transmittance"),
                "reflectance + transmittance must equal 1",
                sum,
            ));
        }
        Ok(())
    }

    /// Field amplitude for the straight-through port.
    fn straight(&self) -> Complex64 {
        Complex64::new(self.transmittance.sqrt(), 0.0)
    }

    /// Field amplitude for the cross port (carries the `i` of a symmetric coupler).
    fn cross(&self) -> Complex64 {
        Complex64::new(0.0, self.reflectance.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DriftMode {
    #[default]
    None,
    /// One phase excursion shared by both traversal directions.
    Common,
    /// Each direction drifts on its own.
    Independent,
}

impl FromStr for DriftMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "none" => Ok(DriftMode::None),
            "common" => Ok(DriftMode::Common),
            "independent" => Ok(DriftMode::Independent),
            other => Err(format!(
                "unknown drift mode `{other}` (expected none, common or independent)"
            )),
        }
    }
}

impl fmt::Display for DriftMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriftMode::None => "none",
            DriftMode::Common => "common",
            DriftMode::Independent => "independent",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferometerConfig {
    pub coupler_0: CouplerParams,
    pub coupler_a: CouplerParams,
    pub coupler_b: CouplerParams,
    /// Optical delay of the long arm, ps.
    pub arm_delay_long: i64,
    /// Optical delay of the short arm, ps.
    pub arm_delay_short: i64,
    /// Short-arm phase seen by the rightward (H) photon, rad.
    pub phase_h: f64,
    /// Short-arm phase seen by the leftward (V) photon, rad.
    pub phase_v: f64,
    pub drift_mode: DriftMode,
    pub drift_sigma: f64,
}

impl Default for InterferometerConfig {
    fn default() -> Self {
        Self {
            coupler_0: CouplerParams::balanced(),
            coupler_a: CouplerParams {
                reflectance: 0.6,
                transmittance: 0.4,
            },
            coupler_b: CouplerParams {
                reflectance: 0.55,
                transmittance: 0.45,
            },
            arm_delay_long: 2840,
            arm_delay_short: 1000,
            phase_h: 0.0,
            phase_v: 0.0,
            drift_mode: DriftMode::None,
            drift_sigma: 0.0,
        }
    }
}

impl InterferometerConfig {
    pub fn validate(&self) -> Result<()> {
        self.coupler_0.validate("optics.coupler_0")?;
        self.coupler_a.validate("optics.coupler_a")?;
        self.coupler_b.validate("optics.coupler_b")?;
        if self.arm_delay_short < 0 {
            return Err(Error::validation(
                "optics.arm_delay_short_ps",
                "must be >= 0",
                self.arm_delay_short,
            ));
        }
        if self.arm_delay_long <= self.arm_delay_short {
            return Err(Error::validation(
                "optics.arm_delay_long_ps",
                "must exceed optics.arm_delay_short_ps",
                self.arm_delay_long,
            ));
        }
        for (name, v) in [("optics.phase_h", self.phase_h), ("optics.phase_v", self.phase_v)] {
            if !v.is_finite() {
                return Err(Error::validation(name, "must be finite", v));
            }
        }
        if !(self.drift_sigma >= 0.0 && self.drift_sigma.is_finite()) {
            return Err(Error::validation(
                "optics.drift_sigma",
                "must be finite and >= 0",
                self.drift_sigma,
            ));
        }
        Ok(())
    }

    /// Arm delay difference, ps.
    pub fn arm_delay_difference(&self) -> i64 {
        self.arm_delay_long - self.arm_delay_short
    }

    /// Nominal fourth-order phase `phase_h - phase_v`.
    pub fn phase_difference(&self) -> f64 {
        self.phase_h - self.phase_v
    }

    /// The regime where the arm imbalance dwarfs the photon coherence time,
    /// so single-photon (second-order) interference averages out.
    pub fn check_delay_regime(&self, coherence_time: i64) -> Result<()> {
        if self.arm_delay_difference() <= 10 * coherence_time {
            return Err(Error::validation(
                "optics.arm_delay_long_ps",
                format!(
                    "arm delay difference must exceed 10 x source.coherence_time_ps = {} ps",
                    10 * coherence_time
                ),
                self.arm_delay_difference(),
            ));
        }
        Ok(())
    }
}

/// Normalized coincidence probabilities for the four cross pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoincidenceRates {
    pub gamma_13: f64,
    pub gamma_14: f64,
    pub gamma_23: f64,
    pub gamma_24: f64,
}

impl CoincidenceRates {
    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            gamma_13: v[0],
            gamma_14: v[1],
            gamma_23: v[2],
            gamma_24: v[3],
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.gamma_13, self.gamma_14, self.gamma_23, self.gamma_24]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }

    pub fn get(&self, pair: (u8, u8)) -> Option<f64> {
        CROSS_PAIRS.iter().position(|&p| p == pair).map(|i| self.as_array()[i])
    }

    fn normalized(v: [f64; 4]) -> Self {
        let total: f64 = v.iter().sum();
        Self::from_array(v.map(|x| x / total))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilitySet {
    pub v13: f64,
    pub v14: f64,
    pub v23: f64,
    pub v24: f64,
}

impl VisibilitySet {
    pub fn as_array(&self) -> [f64; 4] {
        [self.v13, self.v14, self.v23, self.v24]
    }
}

fn validate_inputs(a: &CouplerParams, b: &CouplerParams, overlap: f64) -> Result<()> {
    a.validate("coupler_a")?;
    b.validate("coupler_b")?;
    check_range("overlap", overlap, 0.0, 1.0)
}

/// The four bracketed coincidence expressions with their coupler prefactors,
/// before normalization. Their sum does not depend on `phase_diff`.
pub fn coincidence_terms(a: &CouplerParams, b: &CouplerParams, phase_diff: f64, overlap: f64) -> Result<[f64; 4]> {
    validate_inputs(a, b, overlap)?;
    let (ra, ta, rb, tb) = (a.reflectance, a.transmittance, b.reflectance, b.transmittance);
    let fringe = overlap * overlap * phase_diff.cos();
    Ok([
        ra * ta * rb * tb * (2.0 + 2.0 * fringe),
        ra * ta * (tb * tb + rb * rb - 2.0 * tb * rb * fringe),
        rb * tb * (ta * ta + ra * ra - 2.0 * ta * ra * fringe),
        ta * ta * rb * rb + tb * tb * ra * ra + 2.0 * ta * ra * tb * rb * fringe,
    ])
}

/// Post-selected coincidence probabilities, normalized to sum to one.
///
/// Degenerate couplers (any of R, T equal to zero on both) can make every term
/// vanish; that case is reported as [`Error::Degenerate`].
pub fn coincidence_rates(
    a: &CouplerParams,
    b: &CouplerParams,
    phase_diff: f64,
    overlap: f64,
) -> Result<CoincidenceRates> {
    let terms = coincidence_terms(a, b, phase_diff, overlap)?;
    if terms.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Degenerate(
            "no post-selected coincidences for these couplers".into(),
        ));
    }
    Ok(CoincidenceRates::normalized(terms))
}

/// Fringe visibilities of the four cross pairs.
pub fn visibilities(a: &CouplerParams, b: &CouplerParams, overlap: f64) -> Result<VisibilitySet> {
    validate_inputs(a, b, overlap)?;
    let (ra, ta, rb, tb) = (a.reflectance, a.transmittance, b.reflectance, b.transmittance);
    let g2 = overlap * overlap;
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Ok(VisibilitySet {
        v13: g2,
        v14: ratio(2.0 * tb * rb * g2, tb * tb + rb * rb),
        v23: ratio(2.0 * ta * ra * g2, ta * ta + ra * ra),
        v24: ratio(2.0 * ta * ra * tb * rb * g2, ra * ra * tb * tb + ta * ta * rb * rb),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Enters the Mach-Zehnder at `C_A`, detected on 3 or 4.
    Rightward,
    /// Enters at `C_B`, detected on 1 or 2.
    Leftward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Long,
    Short,
}

/// One single-photon path through the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Route {
    pub direction: Direction,
    pub arm: Arm,
    /// Detector index, 1..=4.
    pub detector: u8,
}

impl Route {
    /// All eight routes, in a fixed order.
    pub const ALL: [Route; 8] = {
        use Arm::*;
        use Direction::*;
        [
            Route {
                direction: Rightward,
                arm: Long,
                detector: 3,
            },
            Route {
                direction: Rightward,
                arm: Long,
                detector: 4,
            },
            Route {
                direction: Rightward,
                arm: Short,
                detector: 3,
            },
            Route {
                direction: Rightward,
                arm: Short,
                detector: 4,
            },
            Route {
                direction: Leftward,
                arm: Long,
                detector: 1,
            },
            Route {
                direction: Leftward,
                arm: Long,
                detector: 2,
            },
            Route {
                direction: Leftward,
                arm: Short,
                detector: 1,
            },
            Route {
                direction: Leftward,
                arm: Short,
                detector: 2,
            },
        ]
    };

    pub fn arm_delay(&self, optics: &InterferometerConfig) -> i64 {
        match self.arm {
            Arm::Long => optics.arm_delay_long,
            Arm::Short => optics.arm_delay_short,
        }
    }
}

/// Field amplitude for a photon entering `C0` to follow `route`, with the
/// given short-arm phases for each polarization.
///
/// Port convention: on both Mach-Zehnder couplers the input port couples
/// straight into the long arm, and the long arm exits straight to the
/// detector on the input port (1 on `C_A`, 3 on `C_B`).
pub fn route_amplitude(optics: &InterferometerConfig, route: Route, phase_h: f64, phase_v: f64) -> Complex64 {
    let (c0, ca, cb) = (&optics.coupler_0, &optics.coupler_a, &optics.coupler_b);
    let (entry, first, second, near_detector, short_phase) = match route.direction {
        Direction::Rightward => (c0.straight(), ca, cb, 3, phase_h),
        Direction::Leftward => (c0.cross(), cb, ca, 1, phase_v),
    };
    let into_arm = match route.arm {
        Arm::Long => first.straight(),
        Arm::Short => first.cross() * Complex64::from_polar(1.0, short_phase),
    };
    let to_near = route.detector == near_detector;
    let out_of_arm = match (route.arm, to_near) {
        (Arm::Long, true) | (Arm::Short, false) => second.straight(),
        (Arm::Long, false) | (Arm::Short, true) => second.cross(),
    };
    entry * into_arm * out_of_arm
}

/// Independent route to the coincidence probabilities: sums the two
/// exchange-related two-photon amplitudes for each detector pair, with the
/// cross term weighted by the squared overlap.
pub fn enumerate_amplitudes(
    a: &CouplerParams,
    b: &CouplerParams,
    phase_diff: f64,
    overlap: f64,
) -> Result<CoincidenceRates> {
    validate_inputs(a, b, overlap)?;
    let optics = InterferometerConfig {
        coupler_a: *a,
        coupler_b: *b,
        ..InterferometerConfig::default()
    };
    let overlap_sq = overlap * overlap;
    let find = |direction, arm, detector| {
        route_amplitude(
            &optics,
            Route {
                direction,
                arm,
                detector,
            },
            phase_diff,
            0.0,
        )
    };
    let mut raw = [0.0; 4];
    for (slot, &(left_det, right_det)) in CROSS_PAIRS.iter().enumerate() {
        // early photon long, late photon short; either may be the rightward one
        let early_right =
            find(Direction::Rightward, Arm::Long, right_det) * find(Direction::Leftward, Arm::Short, left_det);
        let early_left =
            find(Direction::Leftward, Arm::Long, left_det) * find(Direction::Rightward, Arm::Short, right_det);
        raw[slot] =
            early_right.norm_sqr() + early_left.norm_sqr() + 2.0 * overlap_sq * (early_right.conj() * early_left).re;
    }
    if raw.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Degenerate(
            "no post-selected coincidences for these couplers".into(),
        ));
    }
    Ok(CoincidenceRates::normalized(raw))
}

/// Effective phase differences after drift, one per traversal direction.
///
/// Each value is the nominal `phase_h - phase_v` plus the excursion picked up
/// by that direction's photon. The fourth-order fringe only sees the
/// difference of the excursions, see [`DriftedPhases::short_arm_phases`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftedPhases {
    pub left: f64,
    pub right: f64,
}

impl DriftedPhases {
    /// Short-arm phases `(phase_h, phase_v)` including the drift excursions.
    pub fn short_arm_phases(&self, optics: &InterferometerConfig) -> (f64, f64) {
        let nominal = optics.phase_difference();
        (
            optics.phase_h + (self.right - nominal),
            optics.phase_v + (self.left - nominal),
        )
    }

    /// Phase that enters the coincidence fringe.
    pub fn fringe_phase(&self, optics: &InterferometerConfig) -> f64 {
        let (h, v) = self.short_arm_phases(optics);
        h - v
    }
}

pub fn apply_drift<R: Rng + ?Sized>(config: &InterferometerConfig, rng: &mut R) -> Result<DriftedPhases> {
    let sigma = config.drift_sigma;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::validation(
            "optics.drift_sigma",
            "must be finite and >= 0",
            sigma,
        ));
    }
    let nominal = config.phase_difference();
    if sigma == 0.0 || config.drift_mode == DriftMode::None {
        return Ok(DriftedPhases {
            left: nominal,
            right: nominal,
        });
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked above");
    Ok(match config.drift_mode {
        DriftMode::None => unreachable!(),
        DriftMode::Common => {
            let d = normal.sample(rng);
            DriftedPhases {
                left: nominal + d,
                right: nominal + d,
            }
        }
        DriftMode::Independent => DriftedPhases {
            left: nominal + normal.sample(rng),
            right: nominal + normal.sample(rng),
        },
    })
}

/// Wraps a phase into `[0, 2pi)`.
pub fn wrap_phase(phase: f64) -> f64 {
    phase.rem_euclid(TAU)
}
