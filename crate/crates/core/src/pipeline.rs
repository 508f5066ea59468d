//! Phase-scan orchestration and file layout.
//!
//! A scan directory holds
//!
//! ```text
//! tags/phase_XX.txt          time tags of setting XX (staged runs only)
//! hist/phase_XX_ij.txt       coincidence counts of pair (i,j) (montecarlo)
//! normalized/phase_XX_ij.txt normalized correlation of pair (i,j)
//! fringes.csv                Γ and flat background per setting and pair
//! summary.txt                fit results and overlap
//! ```
//!
//! The staged path (`simulate`, `correlate`, `analyze`) and [`run_phase_scan`]
//! share every computation, so they write identical files for the same
//! configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    corrected_visibility, estimate_background, extract_overlap, peak_positions, CorrelationModel, FringeResult,
    FringeSample, PairSummary, Summary,
};
use crate::config::{ExperimentConfig, Mode};
use crate::correlator::{
    global_renormalize, load_histogram, normalize_values, save_histogram, save_normalized, Binning,
    CorrelationHistogram, HistogramFile, NormalizedCorrelation, Pair, PhaseSetting,
};
use crate::engine::{run_simulation, TimeTagStream};
use crate::error::{Error, Result};
use crate::optics::CROSS_PAIRS;

/// Marker left in an output directory until a stage finishes.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// Seed of phase setting `index`, derived from the master seed on an RNG
/// stream no simulation chunk uses.
pub fn phase_seed(master_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(u64::MAX - index as u64);
    rng.next_u64()
}

/// The configuration with the fourth-order phase set to `phase`.
pub fn phase_config(config: &ExperimentConfig, phase: f64) -> ExperimentConfig {
    let mut cfg = config.clone();
    cfg.optics.phase_h = cfg.optics.phase_v + phase;
    cfg
}

/// Cycles simulated at each setting: the run total split evenly.
pub fn cycles_per_phase(config: &ExperimentConfig) -> Result<u64> {
    let n = config.run.n_cycles / config.run.phase_scan.len() as u64;
    if n == 0 {
        return Err(Error::validation(
            "run.n_cycles",
            format!(
                "must be at least the number of phase settings ({})",
                config.run.phase_scan.len()
            ),
            config.run.n_cycles,
        ));
    }
    Ok(n)
}

fn binning(config: &ExperimentConfig) -> Binning {
    Binning {
        half_range: config.analysis.half_range,
        bin_width: config.detectors.bin_width,
    }
}

fn pair_tag(pair: Pair) -> String {
    format!("{}{}", pair.0, pair.1)
}

fn phase_meta(index: usize, phase: f64) -> Vec<(String, String)> {
    vec![
        ("phase_index".into(), index.to_string()),
        ("phase".into(), phase.to_string()),
    ]
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Creates `dir` and marks it incomplete until [`finish_dir`].
fn start_dir(dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, "run did not finish\n").map_err(|e| Error::io(marker, e))
}

fn finish_dir(dir: &Path) -> Result<()> {
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::remove_file(&marker).map_err(|e| Error::io(marker, e))
}

/// Coincidence data of one setting, as counts or as model values.
#[derive(Debug, Clone)]
pub struct PhaseData {
    pub index: usize,
    pub phase: f64,
    pub pairs: Vec<PairData>,
}

#[derive(Debug, Clone)]
pub enum PairData {
    Counts(CorrelationHistogram),
    Normalized(NormalizedCorrelation),
}

impl PairData {
    fn pair(&self) -> Pair {
        match self {
            PairData::Counts(h) => h.pair,
            PairData::Normalized(n) => n.pair,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    /// Γ per setting before the global renormalization.
    pub raw_settings: Vec<PhaseSetting>,
    /// Γ per setting after it.
    pub settings: Vec<PhaseSetting>,
    /// Flat background per setting, in the units of `settings`.
    pub backgrounds: Vec<PhaseSetting>,
    pub scale: f64,
    pub fits: Vec<FringeResult>,
    pub summary: Summary,
    /// `normalized[k]` holds the four pairs of setting `k`.
    pub normalized: Vec<Vec<NormalizedCorrelation>>,
    /// Counts behind each Γ; empty for model data.
    pub window_counts: Vec<Vec<WindowCounts>>,
}

/// Counts in the central window and in the rest of the normalization range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowCounts {
    pub pair: Pair,
    pub central: f64,
    pub reference: f64,
}

impl ScanResult {
    pub fn fit(&self, pair: Pair) -> Option<&FringeResult> {
        self.fits.iter().find(|f| f.pair == pair)
    }

    /// Poisson standard error of the renormalized Σ Γ at setting `k`.
    pub fn sum_stderr(&self, k: usize) -> Option<f64> {
        let counts = self.window_counts.get(k)?;
        if counts.is_empty() {
            return None;
        }
        let var: f64 = counts
            .iter()
            .map(|w| {
                let (c, d) = (w.central, w.reference);
                self.scale * self.scale * (c / (d * d) + c * c / (d * d * d))
            })
            .sum();
        Some(var.sqrt())
    }
}

/// Fringe from fewer than four settings: `(max - min) / (max + min)`.
fn extremes_fringe(samples: &[FringeSample], pair: Pair) -> FringeResult {
    let vis = |vals: &[f64]| {
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        if max + min > 0.0 {
            (max - min) / (max + min)
        } else {
            0.0
        }
    };
    let raw: Vec<f64> = samples.iter().map(|s| s.gamma).collect();
    let mut clipped = 0;
    let corrected: Vec<f64> = samples
        .iter()
        .map(|s| {
            let v = s.gamma - s.background;
            if v < 0.0 {
                clipped += 1;
            }
            v.max(0.0)
        })
        .collect();
    let offset = raw.iter().sum::<f64>() / raw.len() as f64;
    let v1 = vis(&raw);
    FringeResult {
        pair,
        offset,
        amplitude: v1 * offset,
        phase_origin: 0.0,
        visibility_raw: v1,
        visibility_corrected: Some(vis(&corrected)),
        residual_rms: 0.0,
        visibility_stderr: 0.0,
        clipped,
    }
}

fn distinct_phases(phases: &[f64]) -> usize {
    let mut w: Vec<f64> = phases.iter().map(|p| p.rem_euclid(std::f64::consts::TAU)).collect();
    w.sort_by(f64::total_cmp);
    w.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    w.len()
}

/// Normalization, background estimation, renormalization and fringe fits.
pub fn analyze(config: &ExperimentConfig, data: &[PhaseData]) -> Result<ScanResult> {
    if data.is_empty() {
        return Err(Error::validation("phase settings", "need at least one", 0));
    }
    let a = &config.analysis;
    let peaks = peak_positions(
        config.source.pulse_separation,
        config.source.repetition_period,
        config.analysis.half_range,
    );
    let mut raw_settings = Vec::new();
    let mut raw_backgrounds = Vec::new();
    let mut normalized = Vec::new();
    let mut window_counts = Vec::new();
    for d in data {
        let mut gammas = Vec::new();
        let mut bgs = Vec::new();
        let mut norms = Vec::new();
        let mut counts = Vec::new();
        for pair in CROSS_PAIRS {
            let pd = d.pairs.iter().find(|p| p.pair() == pair).ok_or_else(|| {
                Error::validation(
                    "histograms",
                    format!("setting {} has no pair ({},{})", d.index, pair.0, pair.1),
                    "missing",
                )
            })?;
            let norm = match pd {
                PairData::Counts(h) => {
                    let values = h.counts_f64();
                    let (half, n) = (a.central_window as f64 / 2.0, a.norm_half_range as f64);
                    let central = h.binning.window_sum(&values, -half, half);
                    counts.push(WindowCounts {
                        pair,
                        central,
                        reference: h.binning.window_sum(&values, -n, n) - central,
                    });
                    normalize_values(pair, h.binning, &values, a.central_window, a.norm_half_range)?
                }
                PairData::Normalized(n) => n.clone(),
            };
            gammas.push((pair, norm.gamma_window));
            bgs.push((pair, estimate_background(&norm, a.background_window, &peaks)?));
            norms.push(norm);
        }
        raw_settings.push(PhaseSetting { phase: d.phase, gammas });
        raw_backgrounds.push(PhaseSetting {
            phase: d.phase,
            gammas: bgs,
        });
        normalized.push(norms);
        window_counts.push(counts);
    }
    let (settings, scale) = global_renormalize(&raw_settings, &CROSS_PAIRS)?;
    let backgrounds: Vec<PhaseSetting> = raw_backgrounds
        .iter()
        .map(|s| PhaseSetting {
            phase: s.phase,
            gammas: s.gammas.iter().map(|&(p, b)| (p, b * scale)).collect(),
        })
        .collect();

    let phases: Vec<f64> = settings.iter().map(|s| s.phase).collect();
    let use_fit = distinct_phases(&phases) >= 4;
    let mut fits = Vec::new();
    let mut pairs = Vec::new();
    for pair in CROSS_PAIRS {
        let samples: Vec<FringeSample> = settings
            .iter()
            .zip(&backgrounds)
            .map(|(s, b)| FringeSample {
                phase: s.phase,
                gamma: s.get(pair).expect("all pairs present"),
                background: b.get(pair).expect("all pairs present"),
            })
            .collect();
        let fit = if use_fit {
            corrected_visibility(&samples, pair)?
        } else {
            extremes_fringe(&samples, pair)
        };
        let mean_bg = samples.iter().map(|s| s.background).sum::<f64>() / samples.len() as f64;
        pairs.push(PairSummary::new(&fit, mean_bg));
        fits.push(fit);
    }
    let v13 = fits[0].visibility_corrected.unwrap_or(fits[0].visibility_raw);
    let overlap = extract_overlap(v13.clamp(0.0, 1.0), config.source.g2_zero)?;
    let max_sum_dev = settings.iter().map(|s| (s.sum() - 1.0).abs()).fold(0.0, f64::max);
    let metadata = vec![
        ("mode".to_string(), config.run.mode.to_string()),
        ("fingerprint".to_string(), config.fingerprint()),
        ("n_phases".to_string(), settings.len().to_string()),
        (
            "fit".to_string(),
            if use_fit { "least_squares" } else { "extremes" }.to_string(),
        ),
        ("renormalization".to_string(), scale.to_string()),
        ("max_sum_deviation".to_string(), max_sum_dev.to_string()),
    ];
    Ok(ScanResult {
        raw_settings,
        settings,
        backgrounds,
        scale,
        fits,
        summary: Summary {
            metadata,
            pairs,
            overlap: Some(overlap),
        },
        normalized,
        window_counts,
    })
}

/// Writes `fringes.csv`, `summary.txt` and the normalized correlations.
pub fn write_results(result: &ScanResult, data: &[PhaseData], dir: &Path) -> Result<()> {
    let ndir = dir.join("normalized");
    create_dir(&ndir)?;
    for (d, norms) in data.iter().zip(&result.normalized) {
        for n in norms {
            let path = ndir.join(format!("phase_{:02}_{}.txt", d.index, pair_tag(n.pair)));
            save_normalized(n, &phase_meta(d.index, d.phase), &path)?;
        }
    }
    let mut csv = String::from("phase_index,phase,pair,gamma,background,gamma_raw\n");
    for (k, ((s, b), raw)) in result
        .settings
        .iter()
        .zip(&result.backgrounds)
        .zip(&result.raw_settings)
        .enumerate()
    {
        for pair in CROSS_PAIRS {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                data[k].index,
                s.phase,
                pair_tag(pair),
                s.get(pair).expect("present"),
                b.get(pair).expect("present"),
                raw.get(pair).expect("present"),
            );
        }
    }
    let path = dir.join("fringes.csv");
    fs::write(&path, csv).map_err(|e| Error::io(path, e))?;
    crate::analysis::save_summary(&result.summary, &dir.join("summary.txt"))
}

fn tag_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("tags").join(format!("phase_{index:02}.txt"))
}

/// Simulates every setting of the scan and writes `tags/phase_XX.txt`.
pub fn simulate_stage(config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let n = cycles_per_phase(config)?;
    start_dir(dir)?;
    create_dir(&dir.join("tags"))?;
    let mut paths = Vec::new();
    for (k, &phase) in config.run.phase_scan.iter().enumerate() {
        let cfg = phase_config(config, phase);
        let mut stream = run_simulation(&cfg, n, phase_seed(config.run.master_seed, k))?;
        stream.metadata.extend(phase_meta(k, phase));
        let path = tag_path(dir, k);
        stream.save(&path)?;
        paths.push(path);
    }
    finish_dir(dir)?;
    Ok(paths)
}

/// Setting index and phase of a tag file: from its header, else the file's
/// position and the matching entry of `run.phase_scan`.
fn stream_phase(stream: &TimeTagStream, position: usize, config: &ExperimentConfig) -> Result<(usize, f64)> {
    let get = |k: &str| {
        stream
            .metadata
            .iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
    };
    let index = match get("phase_index") {
        Some(v) => v
            .parse()
            .map_err(|_| Error::validation("phase_index", "time-tag header value must be an integer", v))?,
        None => position,
    };
    let phase = match get("phase") {
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| Error::validation("phase", "time-tag header value must be a number", v))?,
        None => *config.run.phase_scan.get(index).ok_or_else(|| {
            Error::validation(
                "phase",
                "time-tag file has no `# phase: <rad>` header and run.phase_scan has no entry for it",
                index,
            )
        })?,
    };
    Ok((index, phase))
}

/// Correlates time-tag files into `hist/phase_XX_ij.txt`.
pub fn correlate_stage(config: &ExperimentConfig, tag_files: &[PathBuf], dir: &Path) -> Result<Vec<PhaseData>> {
    config.validate()?;
    if tag_files.is_empty() {
        return Err(Error::validation("tag files", "need at least one", 0));
    }
    start_dir(dir)?;
    let hdir = dir.join("hist");
    create_dir(&hdir)?;
    let b = binning(config);
    let mut out = Vec::new();
    for (k, path) in tag_files.iter().enumerate() {
        let stream = TimeTagStream::load(path)?;
        let (index, phase) = stream_phase(&stream, k, config)?;
        let mut c = crate::correlator::Correlator::new(&CROSS_PAIRS, b.half_range, b.bin_width)?;
        c.push(&stream.tags)?;
        let hists = c.finish();
        for h in &hists {
            let p = hdir.join(format!("phase_{:02}_{}.txt", index, pair_tag(h.pair)));
            save_histogram(h, &phase_meta(index, phase), &p)?;
        }
        out.push(PhaseData {
            index,
            phase,
            pairs: hists.into_iter().map(PairData::Counts).collect(),
        });
    }
    finish_dir(dir)?;
    Ok(out)
}

/// Loads `hist/` (counts) or, when absent, `normalized/` from a scan directory.
pub fn load_scan_data(dir: &Path) -> Result<Vec<PhaseData>> {
    let hist = dir.join("hist");
    let sub = if hist.is_dir() { hist } else { dir.join("normalized") };
    let entries = fs::read_dir(&sub).map_err(|e| Error::io(&sub, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let mut out: Vec<PhaseData> = Vec::new();
    for path in files {
        let loaded = load_histogram(&path)?;
        let origin = path.display().to_string();
        let field = |k: &str| {
            loaded
                .meta(k)
                .ok_or_else(|| Error::validation(k, format!("missing from the header of {origin}"), "none"))
        };
        let index: usize = field("phase_index")?
            .parse()
            .map_err(|_| Error::validation("phase_index", "must be an integer", &origin))?;
        let phase: f64 = field("phase")?
            .parse()
            .map_err(|_| Error::validation("phase", "must be a number", &origin))?;
        let data = match loaded.data {
            HistogramFile::Counts(h) => PairData::Counts(h),
            HistogramFile::Normalized(n) => PairData::Normalized(n),
        };
        match out.iter_mut().find(|d| d.index == index) {
            Some(d) => d.pairs.push(data),
            None => out.push(PhaseData {
                index,
                phase,
                pairs: vec![data],
            }),
        }
    }
    if out.is_empty() {
        return Err(Error::validation(
            "scan directory",
            "has no histograms under hist/ or normalized/",
            dir.display(),
        ));
    }
    out.sort_by_key(|d| d.index);
    Ok(out)
}

/// Analyzes a scan directory in place.
pub fn analyze_stage(config: &ExperimentConfig, dir: &Path) -> Result<ScanResult> {
    config.validate()?;
    let data = load_scan_data(dir)?;
    start_dir(dir)?;
    let result = analyze(config, &data)?;
    write_results(&result, &data, dir)?;
    finish_dir(dir)?;
    Ok(result)
}

/// Model data for every setting of the scan.
fn analytic_data(config: &ExperimentConfig) -> Result<Vec<PhaseData>> {
    let b = binning(config);
    let model = CorrelationModel::new(config, b)?;
    let a = &config.analysis;
    config
        .run
        .phase_scan
        .iter()
        .enumerate()
        .map(|(k, &phase)| {
            let pairs = CROSS_PAIRS
                .iter()
                .map(|&pair| {
                    let values = model.expected(pair, phase);
                    normalize_values(pair, b, &values, a.central_window, a.norm_half_range).map(PairData::Normalized)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PhaseData { index: k, phase, pairs })
        })
        .collect()
}

/// Simulated histograms for every setting, without keeping time tags.
fn montecarlo_data(config: &ExperimentConfig) -> Result<Vec<PhaseData>> {
    let n = cycles_per_phase(config)?;
    let b = binning(config);
    config
        .run
        .phase_scan
        .iter()
        .enumerate()
        .map(|(k, &phase)| {
            let cfg = phase_config(config, phase);
            let hists = crate::analysis::simulate_histograms(
                &cfg,
                &CROSS_PAIRS,
                b.half_range,
                n,
                phase_seed(config.run.master_seed, k),
            )?;
            Ok(PhaseData {
                index: k,
                phase,
                pairs: hists.into_iter().map(PairData::Counts).collect(),
            })
        })
        .collect()
}

/// Full phase scan in the configured mode. With `dir`, writes the same files
/// as the staged commands (minus time tags).
pub fn run_phase_scan(config: &ExperimentConfig, dir: Option<&Path>) -> Result<ScanResult> {
    config.validate()?;
    let data = match config.run.mode {
        Mode::Analytic => analytic_data(config)?,
        Mode::MonteCarlo => montecarlo_data(config)?,
    };
    let result = analyze(config, &data)?;
    if let Some(dir) = dir {
        start_dir(dir)?;
        if config.run.mode == Mode::MonteCarlo {
            let hdir = dir.join("hist");
            create_dir(&hdir)?;
            for d in &data {
                for p in &d.pairs {
                    if let PairData::Counts(h) = p {
                        let path = hdir.join(format!("phase_{:02}_{}.txt", d.index, pair_tag(h.pair)));
                        save_histogram(h, &phase_meta(d.index, d.phase), &path)?;
                    }
                }
            }
        }
        write_results(&result, &data, dir)?;
        finish_dir(dir)?;
    }
    Ok(result)
}
