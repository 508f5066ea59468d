//! Coincidence histograms and their normalization.
//!
//! Bins are centered on multiples of the bin width `w`, at
//! `c = -half_range + k * w`; a delay goes to the nearest center, ties
//! away from zero, so binning commutes with reversing the pair. Window sums weight
//! each bin by the fraction of it that lies inside the window, so a 600 ps
//! window always spans 12 bins of 50 ps.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::engine::{TimeTag, TimeTagStream};
use crate::error::{Error, Result};

/// Smallest histogram half range accepted by [`correlate`], ps.
pub const MIN_HALF_RANGE: i64 = 16_000;

pub type Pair = (u8, u8);

fn check_pair(pair: Pair) -> Result<()> {
    for ch in [pair.0, pair.1] {
        if !(1..=4).contains(&ch) {
            return Err(Error::UnknownChannel(ch));
        }
    }
    Ok(())
}

fn check_binning(half_range: i64, bin_width: i64) -> Result<()> {
    if bin_width <= 0 {
        return Err(Error::validation("bin_width", "must be > 0", bin_width));
    }
    if half_range < MIN_HALF_RANGE {
        return Err(Error::validation(
            "half_range",
            format!("must be >= {MIN_HALF_RANGE} ps to cover the normalization range"),
            half_range,
        ));
    }
    if half_range % bin_width != 0 {
        return Err(Error::validation(
            "half_range",
            format!("must be a multiple of the bin width {bin_width}"),
            half_range,
        ));
    }
    Ok(())
}

/// Center-aligned uniform binning over `[-half_range, half_range]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binning {
    pub half_range: i64,
    pub bin_width: i64,
}

impl Binning {
    pub fn len(&self) -> usize {
        (2 * self.half_range / self.bin_width + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn center(&self, k: usize) -> i64 {
        -self.half_range + k as i64 * self.bin_width
    }

    pub fn centers(&self) -> Vec<i64> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    /// Edges of all bins, one more than the number of bins (may be half-integers).
    pub fn edges(&self) -> Vec<f64> {
        let w = self.bin_width as f64;
        (0..=self.len())
            .map(|k| self.center(0) as f64 - w / 2.0 + k as f64 * w)
            .collect()
    }

    /// Bin holding `delay`, if inside the histogram.
    pub fn index(&self, delay: i64) -> Option<usize> {
        let w = self.bin_width;
        let m = (2 * delay.abs() + w) / (2 * w);
        let q = if delay < 0 { -m } else { m };
        let k = q + self.half_range / w;
        (k >= 0 && (k as usize) < self.len()).then_some(k as usize)
    }

    /// Largest delay magnitude that lands in some bin.
    fn reach(&self) -> i64 {
        self.half_range + (self.bin_width - 1) / 2
    }

    /// Fraction of bin `k` inside `[lo, hi]`.
    pub fn overlap(&self, k: usize, lo: f64, hi: f64) -> f64 {
        let c = self.center(k) as f64;
        let w = self.bin_width as f64;
        let a = (c - w / 2.0).max(lo);
        let b = (c + w / 2.0).min(hi);
        ((b - a) / w).max(0.0)
    }

    /// Weighted sum of `values` over delays in `[lo, hi]`.
    pub fn window_sum(&self, values: &[f64], lo: f64, hi: f64) -> f64 {
        values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| {
                let f = self.overlap(k, lo, hi);
                (f > 0.0).then_some(v * f)
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub pair: Pair,
    pub binning: Binning,
    /// Counts of `t_second - t_first` per bin.
    pub counts: Vec<u64>,
    pub total_events: u64,
}

impl CorrelationHistogram {
    pub fn new(pair: Pair, half_range: i64, bin_width: i64) -> Result<Self> {
        check_pair(pair)?;
        check_binning(half_range, bin_width)?;
        let binning = Binning { half_range, bin_width };
        Ok(Self {
            pair,
            counts: vec![0; binning.len()],
            binning,
            total_events: 0,
        })
    }

    pub fn bin_width(&self) -> i64 {
        self.binning.bin_width
    }

    pub fn bin_centers(&self) -> Vec<i64> {
        self.binning.centers()
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        self.binning.edges()
    }

    fn add(&mut self, delay: i64) {
        if let Some(k) = self.binning.index(delay) {
            self.counts[k] += 1;
            self.total_events += 1;
        }
    }

    /// Adds another histogram of the same pair and binning.
    pub fn merge(&mut self, other: &CorrelationHistogram) -> Result<()> {
        if other.pair != self.pair || other.binning != self.binning {
            return Err(Error::Contract(
                "merging histograms with different pair or binning".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_events += other.total_events;
        Ok(())
    }

    /// Same data seen from the reversed pair.
    pub fn reversed(&self) -> Self {
        let mut counts = self.counts.clone();
        counts.reverse();
        Self {
            pair: (self.pair.1, self.pair.0),
            binning: self.binning,
            counts,
            total_events: self.total_events,
        }
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn window_sum(&self, lo: f64, hi: f64) -> f64 {
        self.binning.window_sum(&self.counts_f64(), lo, hi)
    }
}

/// Histograms several channel pairs in one pass over time-ordered tags.
///
/// Every pair of clicks within range contributes (full correlation, not
/// start-stop). Tags can be pushed in batches; results do not depend on how
/// the stream is split.
pub struct Correlator {
    hists: Vec<CorrelationHistogram>,
    /// `route[a][b]`: histograms fed by an earlier click on `a` and a later
    /// one on `b`, with `true` when the delay enters with a flipped sign.
    route: [[Vec<(usize, bool)>; 5]; 5],
    recent: VecDeque<TimeTag>,
    reach: i64,
    last: Option<TimeTag>,
}

impl Correlator {
    pub fn new(pairs: &[Pair], half_range: i64, bin_width: i64) -> Result<Self> {
        let hists = pairs
            .iter()
            .map(|&p| CorrelationHistogram::new(p, half_range, bin_width))
            .collect::<Result<Vec<_>>>()?;
        let mut route: [[Vec<(usize, bool)>; 5]; 5] = Default::default();
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            route[i as usize][j as usize].push((idx, false));
            if i != j {
                route[j as usize][i as usize].push((idx, true));
            }
        }
        let reach = hists.first().map_or(0, |h| h.binning.reach());
        Ok(Self {
            hists,
            route,
            recent: VecDeque::new(),
            reach,
            last: None,
        })
    }

    pub fn push(&mut self, tags: &[TimeTag]) -> Result<()> {
        for &tag in tags {
            if !(1..=4).contains(&tag.channel) {
                return Err(Error::UnknownChannel(tag.channel));
            }
            if let Some(last) = self.last {
                if tag.time < last.time {
                    return Err(Error::Contract(format!(
                        "time tags out of order: {} after {}",
                        tag.time, last.time
                    )));
                }
            }
            self.last = Some(tag);
            while self.recent.front().is_some_and(|x| tag.time - x.time > self.reach) {
                self.recent.pop_front();
            }
            for x in &self.recent {
                let delay = tag.time - x.time;
                for &(idx, flip) in &self.route[x.channel as usize][tag.channel as usize] {
                    self.hists[idx].add(if flip { -delay } else { delay });
                }
            }
            self.recent.push_back(tag);
        }
        Ok(())
    }

    pub fn finish(self) -> Vec<CorrelationHistogram> {
        self.hists
    }
}

/// Histogram of `t_j - t_i` over all click pairs `(i, j)` within `±half_range`.
pub fn correlate(stream: &TimeTagStream, pair: Pair, half_range: i64, bin_width: i64) -> Result<CorrelationHistogram> {
    let mut c = Correlator::new(&[pair], half_range, bin_width)?;
    c.push(&stream.tags)?;
    Ok(c.finish().remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCorrelation {
    pub pair: Pair,
    pub binning: Binning,
    pub values: Vec<f64>,
    /// Full width of the central window, ps.
    pub central_window: i64,
    /// Sum of `values` over the central window: the coincidence rate Γ.
    pub gamma_window: f64,
}

impl NormalizedCorrelation {
    pub fn bin_centers(&self) -> Vec<i64> {
        self.binning.centers()
    }
}

/// Divides `values` by their total over `±norm_half_range` minus the central
/// window. Shared by measured histograms and model curves.
pub fn normalize_values(
    pair: Pair,
    binning: Binning,
    values: &[f64],
    central_window: i64,
    norm_half_range: i64,
) -> Result<NormalizedCorrelation> {
    if central_window <= 0 {
        return Err(Error::validation("central_window", "must be > 0", central_window));
    }
    if norm_half_range > binning.half_range {
        return Err(Error::validation(
            "norm_half_range",
            format!("histogram only covers ±{} ps", binning.half_range),
            norm_half_range,
        ));
    }
    if 2 * norm_half_range <= central_window {
        return Err(Error::validation(
            "norm_half_range",
            "must exceed half the central window",
            norm_half_range,
        ));
    }
    let n = norm_half_range as f64;
    let half = central_window as f64 / 2.0;
    let total = binning.window_sum(values, -n, n) - binning.window_sum(values, -half, half);
    if !(total > 0.0) {
        return Err(Error::Degenerate(format!(
            "pair ({},{}) has no counts in the normalization region",
            pair.0, pair.1
        )));
    }
    let values: Vec<f64> = values.iter().map(|v| v / total).collect();
    let gamma_window = binning.window_sum(&values, -half, half);
    Ok(NormalizedCorrelation {
        pair,
        binning,
        values,
        central_window,
        gamma_window,
    })
}

pub fn normalize_correlation(
    hist: &CorrelationHistogram,
    central_window: i64,
    norm_half_range: i64,
) -> Result<NormalizedCorrelation> {
    normalize_values(
        hist.pair,
        hist.binning,
        &hist.counts_f64(),
        central_window,
        norm_half_range,
    )
}

/// Γ values of the four detector pairs at one phase setting.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSetting {
    pub phase: f64,
    pub gammas: Vec<(Pair, f64)>,
}

impl PhaseSetting {
    pub fn get(&self, pair: Pair) -> Option<f64> {
        self.gammas.iter().find(|(p, _)| *p == pair).map(|&(_, g)| g)
    }

    pub fn sum(&self) -> f64 {
        self.gammas.iter().map(|(_, g)| g).sum()
    }
}

/// Rescales every Γ by one factor so that Σ Γ averaged over settings is 1.
/// Returns the rescaled settings and the factor.
pub fn global_renormalize(settings: &[PhaseSetting], pairs: &[Pair]) -> Result<(Vec<PhaseSetting>, f64)> {
    if settings.is_empty() {
        return Err(Error::validation("settings", "need at least one phase setting", 0));
    }
    let mut gaps = String::new();
    for s in settings {
        for &p in pairs {
            if s.get(p).is_none() {
                let _ = write!(gaps, " ({},{})@{}", p.0, p.1, s.phase);
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::validation(
            "gammas",
            "every pair needs a value at every phase; missing",
            gaps.trim_start(),
        ));
    }
    let mean: f64 = settings.iter().map(PhaseSetting::sum).sum::<f64>() / settings.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::Degenerate("all coincidence rates are zero".into()));
    }
    let scale = 1.0 / mean;
    let out = settings
        .iter()
        .map(|s| PhaseSetting {
            phase: s.phase,
            gammas: s.gammas.iter().map(|&(p, g)| (p, g * scale)).collect(),
        })
        .collect();
    Ok((out, scale))
}

fn write_header<W: Write>(w: &mut W, pair: Pair, binning: Binning, meta: &[(String, String)]) -> std::io::Result<()> {
    writeln!(w, "# pair: {},{}", pair.0, pair.1)?;
    writeln!(w, "# bin_width_ps: {}", binning.bin_width)?;
    writeln!(w, "# half_range_ps: {}", binning.half_range)?;
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(())
}

pub fn write_histogram<W: Write>(h: &CorrelationHistogram, meta: &[(String, String)], mut w: W) -> std::io::Result<()> {
    write_header(&mut w, h.pair, h.binning, meta)?;
    writeln!(w, "# kind: counts")?;
    for (c, n) in h.binning.centers().iter().zip(&h.counts) {
        writeln!(w, "{c},{n}")?;
    }
    w.flush()
}

pub fn write_normalized<W: Write>(
    n: &NormalizedCorrelation,
    meta: &[(String, String)],
    mut w: W,
) -> std::io::Result<()> {
    write_header(&mut w, n.pair, n.binning, meta)?;
    writeln!(w, "# kind: normalized")?;
    writeln!(w, "# central_window_ps: {}", n.central_window)?;
    writeln!(w, "# gamma_window: {}", n.gamma_window)?;
    for (c, v) in n.binning.centers().iter().zip(&n.values) {
        writeln!(w, "{c},{v}")?;
    }
    w.flush()
}

/// A histogram file of either kind, with unrecognized header entries kept.
#[derive(Debug, Clone, PartialEq)]
pub enum HistogramFile {
    Counts(CorrelationHistogram),
    Normalized(NormalizedCorrelation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedHistogram {
    pub data: HistogramFile,
    pub metadata: Vec<(String, String)>,
}

impl LoadedHistogram {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn read_histogram<R: BufRead>(reader: R, origin: &str) -> Result<LoadedHistogram> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut pair = None;
    let mut bin_width = None;
    let mut half_range = None;
    let mut kind = None;
    let mut central_window = None;
    let mut metadata = Vec::new();
    let mut rows: Vec<(usize, i64, String)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let (k, v) = h
                .split_once(':')
                .ok_or_else(|| err(lineno, format!("header line without `key: value`: {line}")))?;
            let (k, v) = (k.trim(), v.trim());
            let int = |v: &str| v.parse::<i64>().map_err(|_| err(lineno, format!("bad integer `{v}`")));
            match k {
                "pair" => {
                    let (a, b) = v
                        .split_once(',')
                        .ok_or_else(|| err(lineno, format!("bad pair `{v}`")))?;
                    let ch = |s: &str| {
                        s.trim()
                            .parse::<u8>()
                            .map_err(|_| err(lineno, format!("bad channel `{s}`")))
                    };
                    pair = Some((ch(a)?, ch(b)?));
                }
                "bin_width_ps" => bin_width = Some(int(v)?),
                "half_range_ps" => half_range = Some(int(v)?),
                "central_window_ps" => central_window = Some(int(v)?),
                "kind" => kind = Some(v.to_string()),
                "gamma_window" => {}
                _ => metadata.push((k.to_string(), v.to_string())),
            }
            continue;
        }
        let (c, v) = line
            .split_once(',')
            .ok_or_else(|| err(lineno, format!("expected `bin_center_ps,value`, got `{line}`")))?;
        let c = c
            .trim()
            .parse::<i64>()
            .map_err(|_| err(lineno, format!("bad bin center `{c}`")))?;
        rows.push((lineno, c, v.trim().to_string()));
    }
    let pair = pair.ok_or_else(|| err(0, "missing `# pair` header".into()))?;
    check_pair(pair)?;
    let bin_width = bin_width.ok_or_else(|| err(0, "missing `# bin_width_ps` header".into()))?;
    if bin_width <= 0 {
        return Err(err(0, format!("bin width {bin_width} must be > 0")));
    }
    let half_range = match half_range {
        Some(h) => h,
        None => rows.first().map_or(0, |r| -r.1),
    };
    let binning = Binning { half_range, bin_width };
    if rows.len() != binning.len() {
        return Err(err(
            0,
            format!(
                "expected {} bins for ±{half_range} ps, found {}",
                binning.len(),
                rows.len()
            ),
        ));
    }
    for (k, (lineno, c, _)) in rows.iter().enumerate() {
        if *c != binning.center(k) {
            return Err(err(
                *lineno,
                format!("bin center {c} out of sequence (expected {})", binning.center(k)),
            ));
        }
    }
    let data = match kind.as_deref() {
        Some("normalized") => {
            let values = rows
                .iter()
                .map(|(l, _, v)| v.parse::<f64>().map_err(|_| err(*l, format!("bad value `{v}`"))))
                .collect::<Result<Vec<_>>>()?;
            let central_window = central_window.ok_or_else(|| err(0, "missing `# central_window_ps` header".into()))?;
            let half = central_window as f64 / 2.0;
            HistogramFile::Normalized(NormalizedCorrelation {
                pair,
                binning,
                gamma_window: binning.window_sum(&values, -half, half),
                values,
                central_window,
            })
        }
        Some("counts") | None => {
            let counts = rows
                .iter()
                .map(|(l, _, v)| v.parse::<u64>().map_err(|_| err(*l, format!("bad count `{v}`"))))
                .collect::<Result<Vec<_>>>()?;
            HistogramFile::Counts(CorrelationHistogram {
                pair,
                binning,
                total_events: counts.iter().sum(),
                counts,
            })
        }
        Some(other) => return Err(err(0, format!("unknown histogram kind `{other}`"))),
    };
    Ok(LoadedHistogram { data, metadata })
}

pub fn save_histogram(h: &CorrelationHistogram, meta: &[(String, String)], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_histogram(h, meta, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn save_normalized(n: &NormalizedCorrelation, meta: &[(String, String)], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_normalized(n, meta, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_histogram(path: &Path) -> Result<LoadedHistogram> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_histogram(BufReader::new(f), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn stream(tags: &[(u8, i64)]) -> TimeTagStream {
        TimeTagStream {
            tags: tags.iter().map(|&(channel, time)| TimeTag { time, channel }).collect(),
            duration: tags.last().map_or(0, |t| t.1 + 1),
            ..Default::default()
        }
    }

    #[test]
    fn binning_layout() {
        let b = Binning {
            half_range: 16_000,
            bin_width: 50,
        };
        assert_eq!(b.len(), 641);
        assert_eq!(b.index(0), Some(320));
        assert_eq!(b.index(24), Some(320));
        assert_eq!(b.index(25), Some(321));
        assert_eq!(b.index(-24), Some(320));
        assert_eq!(b.index(-25), Some(319));
        assert_eq!(b.index(16_024), Some(640));
        assert_eq!(b.index(16_025), None);
        assert_eq!(b.index(-16_024), Some(0));
        assert_eq!(b.index(-16_025), None);
        let ones = vec![1.0; b.len()];
        assert!((b.window_sum(&ones, -300.0, 300.0) - 12.0).abs() < 1e-12);
        let edges = b.edges();
        assert_eq!(edges.len(), 642);
        assert_eq!(edges[0], -16_025.0);
    }

    #[test]
    fn single_channel_gives_empty_cross_histogram() {
        let s = stream(&[(1, 0), (1, 500), (1, 9000)]);
        let h = correlate(&s, (1, 3), 16_000, 50).unwrap();
        assert!(h.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn two_clicks_by_hand() {
        let s = stream(&[(1, 1000), (3, 1400)]);
        let h = correlate(&s, (1, 3), 16_000, 100).unwrap();
        assert_eq!(h.total_events, 1);
        let k = h.counts.iter().position(|&c| c == 1).unwrap();
        assert_eq!(h.bin_centers()[k], 400);
        let r = correlate(&s, (3, 1), 16_000, 100).unwrap();
        assert_eq!(r.bin_centers()[r.counts.iter().position(|&c| c == 1).unwrap()], -400);
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = stream(&[(1, 0)]);
        assert!(matches!(
            correlate(&s, (1, 5), 16_000, 50),
            Err(Error::UnknownChannel(5))
        ));
        assert!(correlate(&s, (1, 3), 8_000, 50).is_err());
        assert!(correlate(&s, (1, 3), 16_000, 70).is_err());
        let empty = correlate(&TimeTagStream::default(), (2, 4), 16_000, 50).unwrap();
        assert_eq!(empty.total_events, 0);
    }

    #[test]
    fn uncorrelated_poisson_streams_are_flat() {
        // rate r per channel: expected r^2 * duration * w per bin
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let duration: i64 = 2_000_000_000;
        let r = 2e-5; // per ps
        let mut tags = Vec::new();
        for ch in [1u8, 3] {
            let n = (r * duration as f64) as usize;
            for _ in 0..n {
                tags.push(TimeTag {
                    time: rng.random_range(0..duration),
                    channel: ch,
                });
            }
        }
        tags.sort();
        let s = TimeTagStream {
            tags,
            duration,
            ..Default::default()
        };
        let h = correlate(&s, (1, 3), 16_000, 400).unwrap();
        let expect = r * r * duration as f64 * 400.0;
        let mean = h.counts.iter().sum::<u64>() as f64 / h.counts.len() as f64;
        let se = (expect / h.counts.len() as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "mean {mean} expect {expect}");
        let chi2: f64 = h.counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        let dof = h.counts.len() as f64;
        assert!((chi2 - dof).abs() < 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2}");
    }

    #[test]
    fn normalization_arithmetic() {
        let mut h = CorrelationHistogram::new((1, 3), 16_000, 50).unwrap();
        // 50 counts at zero delay, 1000 spread outside the window
        h.counts[320] = 50;
        for k in 0..100 {
            h.counts[k * 2 + 2] += 10;
        }
        let n = normalize_correlation(&h, 600, 16_000).unwrap();
        assert!((n.gamma_window - 0.05).abs() < 1e-12);
        let mut scaled = h.clone();
        scaled.counts.iter_mut().for_each(|c| *c *= 7);
        let m = normalize_correlation(&scaled, 600, 16_000).unwrap();
        assert_eq!(n.values.len(), m.values.len());
        for (a, b) in n.values.iter().zip(&m.values) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
        assert!((n.gamma_window - m.gamma_window).abs() < 1e-15);
    }

    #[test]
    fn empty_normalization_region_is_degenerate() {
        let mut h = CorrelationHistogram::new((1, 3), 16_000, 50).unwrap();
        h.counts[320] = 5;
        assert!(matches!(
            normalize_correlation(&h, 600, 16_000),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn renormalization() {
        let pairs = [(1, 3), (1, 4), (2, 3), (2, 4)];
        let s = PhaseSetting {
            phase: 0.0,
            gammas: pairs.iter().copied().zip([0.2, 0.1, 0.1, 0.2]).collect(),
        };
        let (out, scale) = global_renormalize(&[s], &pairs).unwrap();
        assert!((scale - 1.0 / 0.6).abs() < 1e-12);
        assert!((out[0].sum() - 1.0).abs() < 1e-12);

        let unit = PhaseSetting {
            phase: 1.0,
            gammas: pairs.iter().copied().zip([0.4, 0.1, 0.1, 0.4]).collect(),
        };
        let (same, scale) = global_renormalize(std::slice::from_ref(&unit), &pairs).unwrap();
        assert_eq!(scale, 1.0);
        assert_eq!(same[0], unit);

        let gap = PhaseSetting {
            phase: 2.0,
            gammas: vec![((1, 3), 0.3)],
        };
        let e = global_renormalize(&[unit, gap], &pairs).unwrap_err().to_string();
        assert!(e.contains("(1,4)@2") && e.contains("(2,4)@2"), "{e}");
    }

    #[test]
    fn file_round_trip() {
        let mut h = CorrelationHistogram::new((2, 4), 16_000, 50).unwrap();
        h.counts[3] = 7;
        h.counts[320] = 11;
        h.total_events = 18;
        let meta = vec![("phase".to_string(), "0.5".to_string())];
        let mut buf = Vec::new();
        write_histogram(&h, &meta, &mut buf).unwrap();
        let back = read_histogram(buf.as_slice(), "mem").unwrap();
        assert_eq!(back.data, HistogramFile::Counts(h.clone()));
        assert_eq!(back.meta("phase"), Some("0.5"));

        h.counts[100] = 40;
        let n = normalize_correlation(&h, 600, 16_000).unwrap();
        let mut buf2 = Vec::new();
        write_normalized(&n, &meta, &mut buf2).unwrap();
        let back = read_histogram(buf2.as_slice(), "mem").unwrap();
        assert_eq!(back.data, HistogramFile::Normalized(n.clone()));
        let mut again = Vec::new();
        write_normalized(&n, &back.metadata, &mut again).unwrap();
        assert_eq!(buf2, again);
    }

    fn tag_strategy() -> impl Strategy<Value = Vec<TimeTag>> {
        proptest::collection::vec((1u8..=4, 0i64..200_000), 0..120).prop_map(|raw| {
            let mut tags: Vec<TimeTag> = raw
                .into_iter()
                .map(|(channel, time)| TimeTag { time, channel })
                .collect();
            tags.sort();
            tags
        })
    }

    proptest! {
        #[test]
        fn reversal_symmetry(tags in tag_strategy(), i in 1u8..=4, j in 1u8..=4) {
            prop_assume!(i != j);
            let s = TimeTagStream { tags, duration: 200_000, ..Default::default() };
            let a = correlate(&s, (i, j), 16_000, 50).unwrap();
            let b = correlate(&s, (j, i), 16_000, 50).unwrap();
            prop_assert_eq!(a.reversed(), b);
        }

        #[test]
        fn batching_does_not_matter(tags in tag_strategy(), cut in 0usize..120) {
            let pairs = [(1, 3), (1, 4), (2, 3), (2, 4)];
            let mut whole = Correlator::new(&pairs, 16_000, 50).unwrap();
            whole.push(&tags).unwrap();
            let mut split = Correlator::new(&pairs, 16_000, 50).unwrap();
            let cut = cut.min(tags.len());
            split.push(&tags[..cut]).unwrap();
            split.push(&tags[cut..]).unwrap();
            prop_assert_eq!(whole.finish(), split.finish());
        }

        #[test]
        fn matches_brute_force(tags in tag_strategy()) {
            let s = TimeTagStream { tags: tags.clone(), duration: 200_000, ..Default::default() };
            let h = correlate(&s, (1, 3), 16_000, 50).unwrap();
            let mut expect = vec![0u64; h.counts.len()];
            for a in tags.iter().filter(|t| t.channel == 1) {
                for b in tags.iter().filter(|t| t.channel == 3) {
                    if let Some(k) = h.binning.index(b.time - a.time) {
                        expect[k] += 1;
                    }
                }
            }
            prop_assert_eq!(h.counts, expect);
        }
    }
}
