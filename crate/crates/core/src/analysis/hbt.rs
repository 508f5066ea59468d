//! Hanbury-Brown and Twiss measurement of g2(0): the source is excited once
//! per cycle and its photons are split by a 50/50 coupler onto detectors 1
//! and 2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::correlator::{Correlator, MIN_HALF_RANGE};
use crate::engine::{TimeTag, CHUNK_CYCLES};
use crate::error::{Error, Result};
use crate::source::EmissionSampler;

/// Satellite peaks used on each side of zero delay.
pub const HBT_SATELLITES: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HbtSource {
    /// The configured quantum-dot source.
    Configured,
    /// Poisson-distributed photon number per pulse with the configured
    /// emission-time profile, as from an attenuated laser.
    Poissonian { mean_photons: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbtResult {
    pub g2: f64,
    /// Standard error from Poisson counting.
    pub g2_stderr: f64,
    pub central_area: f64,
    /// Areas at `k * period` for `k = -4..=-1, 1..=4`.
    pub satellite_areas: Vec<f64>,
    pub n_cycles: u64,
    /// g2(0) the source model implies for this estimator.
    pub expected: f64,
}

struct HbtSim {
    sampler: EmissionSampler,
    source: HbtSource,
    poisson: Option<Poisson<f64>>,
    efficiency: [f64; 2],
    jitter: Option<Normal<f64>>,
    jitter_bound: f64,
    darks: [Option<Poisson<f64>>; 2],
    period: i64,
}

impl HbtSim {
    fn new(config: &ExperimentConfig, source: HbtSource) -> Result<Self> {
        let poisson = match source {
            HbtSource::Configured => None,
            HbtSource::Poissonian { mean_photons } => {
                if !(mean_photons > 0.0 && mean_photons.is_finite()) {
                    return Err(Error::validation(
                        "mean_photons",
                        "must be finite and > 0",
                        mean_photons,
                    ));
                }
                Some(Poisson::new(mean_photons).expect("checked"))
            }
        };
        let d = &config.detectors;
        let period = config.source.repetition_period;
        let sigma = d.timing_jitter_sigma;
        Ok(Self {
            sampler: EmissionSampler::new(&config.source)?,
            source,
            poisson,
            efficiency: [d.efficiency[0], d.efficiency[1]],
            jitter: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated")),
            jitter_bound: 6.0 * sigma,
            darks: [0, 1].map(|k| {
                let mean = d.dark_count_rate[k] * period as f64 * 1e-12;
                (mean > 0.0).then(|| Poisson::new(mean).expect("finite positive mean"))
            }),
            period,
        })
    }

    fn chunk(&self, seed: u64, chunk: u64, n_cycles: u64) -> Vec<TimeTag> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk);
        let first = chunk * CHUNK_CYCLES;
        let last = (first + CHUNK_CYCLES).min(n_cycles);
        let mut out = Vec::new();
        let mut photons = Vec::with_capacity(4);
        for cycle in first..last {
            let start = cycle as i64 * self.period;
            photons.clear();
            match self.source {
                HbtSource::Configured => self.sampler.sample_pulse(&mut rng, 0, &mut photons),
                HbtSource::Poissonian { .. } => {
                    let n = self.poisson.as_ref().expect("set for poissonian").sample(&mut rng) as usize;
                    for _ in 0..n {
                        photons.push(self.sampler.regular_photon(&mut rng));
                    }
                }
            }
            for e in &photons {
                let ch = if rng.random::<f64>() < 0.5 { 0 } else { 1 };
                if rng.random::<f64>() >= self.efficiency[ch] {
                    continue;
                }
                let jitter = match &self.jitter {
                    Some(n) => n.sample(&mut rng).clamp(-self.jitter_bound, self.jitter_bound),
                    None => 0.0,
                };
                out.push(TimeTag {
                    time: start + (e.emission_time + jitter).round() as i64,
                    channel: ch as u8 + 1,
                });
            }
            for (k, dark) in self.darks.iter().enumerate() {
                let Some(dist) = dark else { continue };
                for _ in 0..dist.sample(&mut rng) as u64 {
                    out.push(TimeTag {
                        time: start + rng.random_range(0..self.period),
                        channel: k as u8 + 1,
                    });
                }
            }
        }
        out.sort();
        out
    }
}

/// Estimates g2(0) as the central-window area over the mean area of the four
/// nearest satellite peaks on each side. Uses the configured seed, workers,
/// jitter, bin width, dark counts and the efficiencies of detectors 1 and 2.
pub fn hbt_g2(config: &ExperimentConfig, n_cycles: u64, source: HbtSource) -> Result<HbtResult> {
    config.validate()?;
    if n_cycles == 0 {
        return Err(Error::validation("n_cycles", "must be >= 1", n_cycles));
    }
    let sim = HbtSim::new(config, source)?;
    let w = config.detectors.bin_width;
    let half_window = config.analysis.central_window as f64 / 2.0;
    let reach = HBT_SATELLITES * sim.period + config.analysis.central_window;
    let round_up = |x: i64| (x + w - 1) / w * w;
    let half_range = round_up(reach.max(MIN_HALF_RANGE));
    let mut corr = Correlator::new(&[(1, 2)], half_range, w)?;

    let workers = config.run.workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource {
            completed_cycles: 0,
            reason: format!("cannot start worker pool: {e}"),
        })?;
    let n_chunks = n_cycles.div_ceil(CHUNK_CYCLES);
    let lead = sim.jitter_bound.ceil() as i64 + 1;
    let seed = config.run.master_seed;
    let mut pending: Vec<TimeTag> = Vec::new();
    let mut first = 0;
    while first < n_chunks {
        let end = (first + 2 * workers as u64).min(n_chunks);
        let chunks: Vec<Vec<TimeTag>> = pool.install(|| {
            (first..end)
                .into_par_iter()
                .map(|c| sim.chunk(seed, c, n_cycles))
                .collect()
        });
        for (c, tags) in (first..end).zip(chunks) {
            pending.extend(tags);
            pending.sort();
            let done = ((c + 1) * CHUNK_CYCLES).min(n_cycles);
            let watermark = done as i64 * sim.period - lead;
            let split = pending.partition_point(|t| t.time < watermark);
            corr.push(&pending[..split])?;
            pending.drain(..split);
        }
        first = end;
    }
    corr.push(&pending)?;
    let hist = corr.finish().remove(0);

    let area = |center: i64| hist.window_sum(center as f64 - half_window, center as f64 + half_window);
    let central_area = area(0);
    let satellite_areas: Vec<f64> = (-HBT_SATELLITES..=HBT_SATELLITES)
        .filter(|&k| k != 0)
        .map(|k| area(k * sim.period))
        .collect();
    let sat_total: f64 = satellite_areas.iter().sum();
    if sat_total <= 0.0 {
        return Err(Error::Degenerate("no coincidences in the satellite peaks".into()));
    }
    let sat_mean = sat_total / satellite_areas.len() as f64;
    let g2 = central_area / sat_mean;
    let g2_stderr = g2 * (1.0 / central_area.max(1.0) + 1.0 / sat_total).sqrt();
    let expected = match source {
        HbtSource::Configured => {
            let q = config.source.extra_photon_probability();
            config.source.g2_zero / (1.0 + q).powi(2)
        }
        HbtSource::Poissonian { .. } => 1.0,
    };
    Ok(HbtResult {
        g2,
        g2_stderr,
        central_area,
        satellite_areas,
        n_cycles,
        expected,
    })
}
