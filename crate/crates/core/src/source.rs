//! Pulsed quantum-dot single-photon source.
//!
//! Each repetition cycle carries two excitation pulses `pulse_separation`
//! apart. A pulse yields at most one regular photon, drawn from either the
//! prompt (radiatively limited, interfering) component or the long-lived
//! tail, plus occasionally one extra incoherent photon that sets g2(0).

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{check_range, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SourceParams {
    /// Probability that an excitation pulse yields a photon.
    pub emission_probability: f64,
    pub g2_zero: f64,
    /// Probability that an emitted photon comes from the slow component.
    pub tail_fraction: f64,
    /// Prompt decay time, ps.
    pub tau_fast: i64,
    /// Slow decay time, ps.
    pub tau_slow: i64,
    /// Coherence time of the prompt photons, ps.
    pub coherence_time: i64,
    /// Overlap of two perfectly timed prompt photons.
    pub intrinsic_overlap: f64,
    /// Delay between the two excitation pulses of a cycle, ps.
    pub pulse_separation: i64,
    pub repetition_period: i64,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            emission_probability: 0.9,
            g2_zero: 0.015,
            tail_fraction: 0.08,
            tau_fast: 170,
            tau_slow: 2600,
            coherence_time: 100,
            // squared overlap 0.8904
            intrinsic_overlap: 0.943_610_088_966_836,
            pulse_separation: 1840,
            repetition_period: 12_500,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        check_range("source.emission_probability", self.emission_probability, 0.0, 1.0)?;
        check_range("source.g2_zero", self.g2_zero, 0.0, 1.0)?;
        check_range("source.tail_fraction", self.tail_fraction, 0.0, 1.0)?;
        check_range("source.intrinsic_overlap", self.intrinsic_overlap, 0.0, 1.0)?;
        for (name, v) in [
            ("source.tau_fast_ps", self.tau_fast),
            ("source.tau_slow_ps", self.tau_slow),
            ("source.coherence_time_ps", self.coherence_time),
            ("source.pulse_separation_ps", self.pulse_separation),
            ("source.repetition_period_ps", self.repetition_period),
        ] {
            if v <= 0 {
                return Err(Error::validation(name, "must be > 0", v));
            }
        }
        if self.tau_fast >= self.tau_slow {
            return Err(Error::validation(
                "source.tau_fast_ps",
                "must be smaller than source.tau_slow_ps",
                self.tau_fast,
            ));
        }
        if 2 * self.pulse_separation >= self.repetition_period {
            return Err(Error::validation(
                "source.pulse_separation_ps",
                "twice the pulse separation must fit inside source.repetition_period_ps",
                self.pulse_separation,
            ));
        }
        Ok(())
    }

    /// Probability, per pulse that already produced a photon, of a second
    /// (incoherent) photon. Chosen so a single pulse has
    /// `P(2) = g2_zero * p^2 / 2`, i.e. its g2(0) equals `g2_zero`.
    pub fn extra_photon_probability(&self) -> f64 {
        0.5 * self.g2_zero * self.emission_probability
    }

    /// Overlap of two prompt photons whose wavepackets are offset by `offset` ps.
    pub fn overlap_at_offset(&self, offset: f64) -> f64 {
        self.intrinsic_overlap * (-offset.abs() / (2.0 * self.coherence_time as f64)).exp()
    }

    /// Offset beyond which two wavepackets are treated as not arriving together.
    pub fn wavepacket_gate(&self) -> f64 {
        5.0 * self.coherence_time as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionEvent {
    /// 0 for the first excitation pulse of the cycle, 1 for the second.
    pub pulse_index: u8,
    /// Emission delay after the excitation pulse, ps.
    pub emission_time: f64,
    /// Prompt, time-bandwidth limited photon.
    pub coherent: bool,
    pub extra_photon: bool,
}

impl EmissionEvent {
    /// Emission time relative to the start of its cycle, ps.
    pub fn time_in_cycle(&self, params: &SourceParams) -> f64 {
        self.pulse_index as f64 * params.pulse_separation as f64 + self.emission_time
    }

    /// Absolute emission time for the given cycle, ps.
    pub fn absolute_time(&self, params: &SourceParams, cycle_index: u64) -> f64 {
        cycle_index as f64 * params.repetition_period as f64 + self.time_in_cycle(params)
    }
}

/// Pre-built distributions for one parameter set.
#[derive(Debug, Clone)]
pub struct EmissionSampler {
    params: SourceParams,
    fast: Exp<f64>,
    slow: Exp<f64>,
    extra_probability: f64,
}

impl EmissionSampler {
    pub fn new(params: &SourceParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            fast: Exp::new(1.0 / params.tau_fast as f64).expect("tau validated"),
            slow: Exp::new(1.0 / params.tau_slow as f64).expect("tau validated"),
            extra_probability: params.extra_photon_probability(),
            params: params.clone(),
        })
    }

    pub fn params(&self) -> &SourceParams {
        &self.params
    }

    fn photon<R: Rng + ?Sized>(&self, rng: &mut R, pulse_index: u8) -> EmissionEvent {
        let tail = rng.random::<f64>() < self.params.tail_fraction;
        let emission_time = if tail {
            self.slow.sample(rng)
        } else {
            self.fast.sample(rng)
        };
        EmissionEvent {
            pulse_index,
            emission_time,
            coherent: !tail,
            extra_photon: false,
        }
    }

    /// Appends the emissions of one excitation pulse to `out`.
    pub fn sample_pulse<R: Rng + ?Sized>(&self, rng: &mut R, pulse_index: u8, out: &mut Vec<EmissionEvent>) {
        if rng.random::<f64>() >= self.params.emission_probability {
            return;
        }
        out.push(self.photon(rng, pulse_index));
        if self.extra_probability > 0.0 && rng.random::<f64>() < self.extra_probability {
            let mut extra = self.photon(rng, pulse_index);
            extra.coherent = false;
            extra.extra_photon = true;
            out.push(extra);
        }
    }

    /// Photon of the regular emission mixture, with no pulse bookkeeping.
    pub(crate) fn regular_photon<R: Rng + ?Sized>(&self, rng: &mut R) -> EmissionEvent {
        self.photon(rng, 0)
    }

    /// Appends the emissions of one cycle to `out`, ordered by pulse.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<EmissionEvent>) {
        for pulse_index in 0..2u8 {
            self.sample_pulse(rng, pulse_index, out);
        }
    }
}

/// Samples the photons emitted during one repetition cycle.
pub fn sample_emissions<R: Rng + ?Sized>(params: &SourceParams, rng: &mut R) -> Result<Vec<EmissionEvent>> {
    let sampler = EmissionSampler::new(params)?;
    let mut out = Vec::with_capacity(2);
    sampler.sample_into(rng, &mut out);
    Ok(out)
}

/// Wavefunction overlap of two photons from opposite pulses of one cycle.
pub fn pair_overlap(e1: &EmissionEvent, e2: &EmissionEvent, params: &SourceParams) -> Result<f64> {
    if e1.pulse_index == e2.pulse_index {
        return Err(Error::Contract(format!(
            "pair_overlap needs photons from opposite pulses, both are from pulse {}",
            e1.pulse_index
        )));
    }
    if !(e1.coherent && e2.coherent) {
        return Ok(0.0);
    }
    Ok(params.overlap_at_offset(e1.emission_time - e2.emission_time))
}
