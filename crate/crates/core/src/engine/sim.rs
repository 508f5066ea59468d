use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use super::joint::{is_pulse_pair, sector_overlap, two_photon_table, RouteAmplitudes};
use super::{DetectorConfig, TimeTag, TimeTagStream};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::optics::{apply_drift, DriftMode, InterferometerConfig, Route};
use crate::source::{EmissionEvent, EmissionSampler, SourceParams};

/// Cycles per RNG stream. Output depends on this, never on the worker count.
pub const CHUNK_CYCLES: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClickKind {
    /// Prompt photon.
    Prompt,
    /// Photon from the slow decay component.
    Tail,
    /// Additional multi-photon emission.
    Extra,
    Dark,
}

/// Ground truth attached to a simulated click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClickTruth {
    pub cycle: u64,
    /// Click time without emission delay and jitter: the center of the
    /// correlation peak this click belongs to. Equals the click time for darks.
    pub nominal: i64,
    pub kind: ClickKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SimClick {
    pub tag: TimeTag,
    pub truth: ClickTruth,
}

fn cumulative<const N: usize>(p: &[f64; N]) -> [f64; N] {
    let mut acc = 0.0;
    p.map(|x| {
        acc += x;
        acc
    })
}

fn pick(cum: &[f64], rng: &mut impl Rng) -> usize {
    let u = rng.random::<f64>() * cum[cum.len() - 1];
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

/// Immutable per-run state; chunks can be simulated from any thread.
pub struct Simulator {
    source: SourceParams,
    optics: InterferometerConfig,
    detectors: DetectorConfig,
    sampler: EmissionSampler,
    overlap: f64,
    single_cum: [f64; 8],
    pair_cum: [f64; 64],
    drifting: bool,
    jitter: Option<Normal<f64>>,
    jitter_bound: f64,
    darks: [Option<Poisson<f64>>; 4],
    workers: usize,
}

impl Simulator {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let optics = config.optics.clone();
        let source = config.source.clone();
        let amps = RouteAmplitudes::new(&optics);
        let overlap = sector_overlap(&optics, &source);
        let pair = two_photon_table(&amps, overlap);
        let total: f64 = pair.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("two-photon table sums to {total}")));
        }
        let period_s = source.repetition_period as f64 * 1e-12;
        let darks = config.detectors.dark_count_rate.map(|rate| {
            let mean = rate * period_s;
            (mean > 0.0).then(|| Poisson::new(mean).expect("finite positive mean"))
        });
        let sigma = config.detectors.timing_jitter_sigma;
        Ok(Self {
            sampler: EmissionSampler::new(&source)?,
            overlap,
            single_cum: cumulative(&amps.probabilities()),
            pair_cum: cumulative(&pair),
            drifting: optics.drift_mode != DriftMode::None && optics.drift_sigma > 0.0,
            jitter: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated")),
            jitter_bound: 6.0 * sigma,
            darks,
            detectors: config.detectors.clone(),
            workers: config.run.workers.max(1),
            source,
            optics,
        })
    }

    fn click(&self, rng: &mut ChaCha8Rng, cycle: u64, e: &EmissionEvent, route: Route, out: &mut Vec<SimClick>) {
        let d = route.detector;
        if rng.random::<f64>() >= self.detectors.efficiency[(d - 1) as usize] {
            return;
        }
        let start = cycle as i64 * self.source.repetition_period;
        let delay = route.arm_delay(&self.optics);
        let jitter = match &self.jitter {
            Some(n) => n.sample(rng).clamp(-self.jitter_bound, self.jitter_bound),
            None => 0.0,
        };
        let t = e.time_in_cycle(&self.source) + delay as f64 + jitter;
        let kind = if e.extra_photon {
            ClickKind::Extra
        } else if e.coherent {
            ClickKind::Prompt
        } else {
            ClickKind::Tail
        };
        out.push(SimClick {
            tag: TimeTag {
                time: start + t.round() as i64,
                channel: d,
            },
            truth: ClickTruth {
                cycle,
                nominal: start + e.pulse_index as i64 * self.source.pulse_separation + delay,
                kind,
            },
        });
    }

    fn cycle(&self, rng: &mut ChaCha8Rng, cycle: u64, emissions: &mut Vec<EmissionEvent>, out: &mut Vec<SimClick>) {
        emissions.clear();
        self.sampler.sample_into(rng, emissions);

        let drifted;
        let (single_cum, pair_cum) = if self.drifting {
            let phases = apply_drift(&self.optics, rng).expect("drift sigma validated");
            let (h, v) = phases.short_arm_phases(&self.optics);
            let amps = RouteAmplitudes::with_phases(&self.optics, h, v);
            drifted = (
                cumulative(&amps.probabilities()),
                cumulative(&two_photon_table(&amps, self.overlap)),
            );
            (&drifted.0, &drifted.1)
        } else {
            (&self.single_cum, &self.pair_cum)
        };

        let interfering =
            is_pulse_pair(emissions) && emissions[0].coherent && emissions[1].coherent && self.overlap > 0.0;
        if interfering {
            let (early, late) = if emissions[0].pulse_index == 0 {
                (emissions[0], emissions[1])
            } else {
                (emissions[1], emissions[0])
            };
            let k = pick(pair_cum, rng);
            self.click(rng, cycle, &early, Route::ALL[k / 8], out);
            self.click(rng, cycle, &late, Route::ALL[k % 8], out);
        } else {
            // independent routing is the product distribution, sampled per photon
            for e in emissions.iter() {
                let r = pick(single_cum, rng);
                self.click(rng, cycle, e, Route::ALL[r], out);
            }
        }

        let start = cycle as i64 * self.source.repetition_period;
        for (k, dark) in self.darks.iter().enumerate() {
            let Some(dist) = dark else { continue };
            let n = dist.sample(rng) as u64;
            for _ in 0..n {
                let time = start + rng.random_range(0..self.source.repetition_period);
                out.push(SimClick {
                    tag: TimeTag {
                        time,
                        channel: k as u8 + 1,
                    },
                    truth: ClickTruth {
                        cycle,
                        nominal: time,
                        kind: ClickKind::Dark,
                    },
                });
            }
        }
    }

    /// Simulates cycles `[chunk * CHUNK_CYCLES, ..)` (clipped to `n_cycles`)
    /// with the chunk's own RNG stream. Output is sorted by time.
    pub fn simulate_chunk(&self, master_seed: u64, chunk: u64, n_cycles: u64) -> Vec<SimClick> {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(chunk);
        let first = chunk * CHUNK_CYCLES;
        let last = (first + CHUNK_CYCLES).min(n_cycles);
        let mut out = Vec::with_capacity(((last - first) * 3) as usize);
        let mut emissions = Vec::with_capacity(4);
        for cycle in first..last {
            self.cycle(&mut rng, cycle, &mut emissions, &mut out);
        }
        out.sort_by_key(sort_key);
        out
    }

    /// Runs `n_cycles` and feeds time-ordered batches of clicks to `sink`,
    /// together with the number of cycles whose clicks have all been delivered.
    pub fn run<F>(&self, n_cycles: u64, master_seed: u64, mut sink: F) -> Result<()>
    where
        F: FnMut(&[SimClick], u64) -> Result<()>,
    {
        let n_chunks = n_cycles.div_ceil(CHUNK_CYCLES);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Resource {
                completed_cycles: 0,
                reason: format!("cannot start worker pool: {e}"),
            })?;
        let batch = (self.workers as u64 * 2).max(1);
        let lead = self.jitter_bound.ceil() as i64 + 1;
        let mut pending: Vec<SimClick> = Vec::new();
        let mut first = 0;
        while first < n_chunks {
            let end = (first + batch).min(n_chunks);
            let chunks: Vec<Vec<SimClick>> = pool.install(|| {
                (first..end)
                    .into_par_iter()
                    .map(|c| self.simulate_chunk(master_seed, c, n_cycles))
                    .collect()
            });
            for (c, chunk) in (first..end).zip(chunks) {
                pending.extend(chunk);
                pending.sort_by_key(sort_key);
                // later chunks cannot produce clicks before this watermark
                let done_cycles = ((c + 1) * CHUNK_CYCLES).min(n_cycles);
                let watermark = done_cycles as i64 * self.source.repetition_period - lead;
                let split = pending.partition_point(|x| x.tag.time < watermark);
                sink(&pending[..split], c * CHUNK_CYCLES)?;
                pending.drain(..split);
            }
            first = end;
        }
        sink(&pending, n_cycles)
    }

    /// Runs the simulation and keeps every click with its ground truth.
    pub fn run_labeled(&self, n_cycles: u64, master_seed: u64) -> Result<Vec<SimClick>> {
        let mut all = Vec::new();
        self.run(n_cycles, master_seed, |batch, done| {
            all.try_reserve(batch.len()).map_err(|e| Error::Resource {
                completed_cycles: done,
                reason: e.to_string(),
            })?;
            all.extend_from_slice(batch);
            Ok(())
        })?;
        Ok(all)
    }
}

fn sort_key(c: &SimClick) -> (i64, u8) {
    (c.tag.time, c.tag.channel)
}

/// Simulates `n_cycles` excitation cycles and returns the time-ordered click
/// stream. The result depends only on `(config, n_cycles, master_seed)`.
pub fn run_simulation(config: &ExperimentConfig, n_cycles: u64, master_seed: u64) -> Result<TimeTagStream> {
    if n_cycles == 0 {
        return Err(Error::validation("run.n_cycles", "must be >= 1", n_cycles));
    }
    let sim = Simulator::new(config)?;
    let mut tags = Vec::new();
    sim.run(n_cycles, master_seed, |batch, done| {
        tags.try_reserve(batch.len()).map_err(|e| Error::Resource {
            completed_cycles: done,
            reason: e.to_string(),
        })?;
        tags.extend(batch.iter().map(|c| c.tag));
        Ok(())
    })?;
    Ok(TimeTagStream {
        tags,
        duration: n_cycles as i64 * config.source.repetition_period,
        config_fingerprint: config.fingerprint(),
        metadata: vec![
            ("n_cycles".into(), n_cycles.to_string()),
            ("master_seed".into(), master_seed.to_string()),
        ],
    })
}
