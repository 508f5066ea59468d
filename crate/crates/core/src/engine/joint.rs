//! Joint click distribution for the photons of one excitation cycle.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::optics::{route_amplitude, Arm, Direction, InterferometerConfig, Route};
use crate::source::{EmissionEvent, SourceParams};

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// One detector click inside an outcome, before detector imperfections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonClick {
    /// Index into the emission list the outcome was built from.
    pub photon: usize,
    pub route: Route,
    /// Arrival time relative to the start of the cycle, ps.
    pub arrival: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub clicks: Vec<PhotonClick>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    pub outcomes: Vec<Outcome>,
}

impl OutcomeDistribution {
    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability).sum()
    }

    /// Probability mass of outcomes where the two given detectors both click
    /// within `window` ps of each other.
    pub fn coincident_mass(&self, pair: (u8, u8), window: f64) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| {
                o.clicks.iter().any(|a| {
                    a.route.detector == pair.0
                        && o.clicks.iter().any(|b| {
                            b.photon != a.photon
                                && b.route.detector == pair.1
                                && (b.arrival - a.arrival).abs() <= window
                        })
                })
            })
            .map(|o| o.probability)
            .sum()
    }

    pub(crate) fn check_normalized(&self) -> Result<()> {
        let total = self.total_probability();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Contract(format!("outcome probabilities sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Route amplitudes for one phase setting, indexed like [`Route::ALL`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct RouteAmplitudes {
    pub amp: [Complex64; 8],
}

impl RouteAmplitudes {
    pub fn new(optics: &InterferometerConfig) -> Self {
        Self::with_phases(optics, optics.phase_h, optics.phase_v)
    }

    pub fn with_phases(optics: &InterferometerConfig, phase_h: f64, phase_v: f64) -> Self {
        Self {
            amp: Route::ALL.map(|r| route_amplitude(optics, r, phase_h, phase_v)),
        }
    }

    pub fn probabilities(&self) -> [f64; 8] {
        self.amp.map(|a| a.norm_sqr())
    }
}

pub(crate) fn route_index(direction: Direction, arm: Arm, detector: u8) -> usize {
    Route::ALL
        .iter()
        .position(|r| r.direction == direction && r.arm == arm && r.detector == detector)
        .expect("every detector is reachable by both arms")
}

fn direction_of(detector: u8) -> Direction {
    if detector <= 2 {
        Direction::Leftward
    } else {
        Direction::Rightward
    }
}

/// 64-entry probability table over (early route, late route) for two photons
/// from opposite pulses. Combinations where the early photon takes the long
/// arm and the late one the short arm carry the exchange interference, the
/// rest are products of single-photon probabilities.
pub(crate) fn two_photon_table(amps: &RouteAmplitudes, overlap: f64) -> [f64; 64] {
    let overlap_sq = overlap * overlap;
    let mut table = [0.0; 64];
    for (i, early) in Route::ALL.iter().enumerate() {
        for (j, late) in Route::ALL.iter().enumerate() {
            let direct = amps.amp[i] * amps.amp[j];
            let classical = direct.norm_sqr();
            table[i * 8 + j] = if early.arm == Arm::Long && late.arm == Arm::Short && overlap_sq > 0.0 {
                let ei = route_index(direction_of(late.detector), Arm::Long, late.detector);
                let li = route_index(direction_of(early.detector), Arm::Short, early.detector);
                let exchanged = amps.amp[ei] * amps.amp[li];
                let both = classical + exchanged.norm_sqr();
                if both > 0.0 {
                    // the cross term is split between the two orderings in
                    // proportion to their classical weights
                    let cross = 2.0 * (direct.conj() * exchanged).re;
                    classical * (1.0 + overlap_sq * cross / both)
                } else {
                    0.0
                }
            } else {
                classical
            };
        }
    }
    table
}

/// Wavepacket overlap for the early-long / late-short pairing, zero outside
/// the arrival gate.
pub(crate) fn sector_overlap(optics: &InterferometerConfig, source: &SourceParams) -> f64 {
    let offset = (source.pulse_separation - optics.arm_delay_difference()) as f64;
    if offset.abs() < source.wavepacket_gate() {
        source.overlap_at_offset(offset)
    } else {
        0.0
    }
}

/// Whether `emissions` is the interfering configuration: exactly two photons,
/// one per pulse.
pub(crate) fn is_pulse_pair(emissions: &[EmissionEvent]) -> bool {
    emissions.len() == 2 && emissions[0].pulse_index != emissions[1].pulse_index
}

fn arrival(e: &EmissionEvent, route: Route, optics: &InterferometerConfig, source: &SourceParams) -> f64 {
    e.time_in_cycle(source) + route.arm_delay(optics) as f64
}

/// Full probability map over click outcomes for one cycle's photons, using
/// the optics' nominal short-arm phases.
///
/// Two photons from opposite pulses interfere where the early photon takes
/// the long arm and the late one the short arm, weighted by their
/// wavepacket overlap (zero unless both are prompt photons). Every other
/// configuration, and any cycle with 0, 1 or more than 2 photons, routes
/// each photon independently.
pub fn joint_outcome_distribution(
    emissions: &[EmissionEvent],
    optics: &InterferometerConfig,
    source: &SourceParams,
) -> Result<OutcomeDistribution> {
    optics.validate()?;
    source.validate()?;
    let amps = RouteAmplitudes::new(optics);
    let mut outcomes = Vec::new();

    if is_pulse_pair(emissions) {
        let (ei, li) = if emissions[0].pulse_index == 0 { (0, 1) } else { (1, 0) };
        let (early, late) = (&emissions[ei], &emissions[li]);
        let overlap = if early.coherent && late.coherent {
            sector_overlap(optics, source)
        } else {
            0.0
        };
        let table = two_photon_table(&amps, overlap);
        for (i, &re) in Route::ALL.iter().enumerate() {
            for (j, &rl) in Route::ALL.iter().enumerate() {
                outcomes.push(Outcome {
                    clicks: vec![
                        PhotonClick {
                            photon: ei,
                            route: re,
                            arrival: arrival(early, re, optics, source),
                        },
                        PhotonClick {
                            photon: li,
                            route: rl,
                            arrival: arrival(late, rl, optics, source),
                        },
                    ],
                    probability: table[i * 8 + j],
                });
            }
        }
    } else {
        let probs = amps.probabilities();
        outcomes.push(Outcome {
            clicks: Vec::new(),
            probability: 1.0,
        });
        for (k, e) in emissions.iter().enumerate() {
            let mut next = Vec::with_capacity(outcomes.len() * 8);
            for o in &outcomes {
                for (r, &route) in Route::ALL.iter().enumerate() {
                    let mut clicks = o.clicks.clone();
                    clicks.push(PhotonClick {
                        photon: k,
                        route,
                        arrival: arrival(e, route, optics, source),
                    });
                    next.push(Outcome {
                        clicks,
                        probability: o.probability * probs[r],
                    });
                }
            }
            outcomes = next;
        }
    }

    let dist = OutcomeDistribution { outcomes };
    dist.check_normalized()?;
    Ok(dist)
}
