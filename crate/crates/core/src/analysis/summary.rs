//! Plain-text results summary: `key: value` lines, one block per pair and an
//! overlap block.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::correlator::Pair;
use crate::error::{Error, Result};

use super::{FringeResult, OverlapResult};

const FORMAT: &str = "franson-summary/1";

#[derive(Debug, Clone, PartialEq)]
pub struct PairSummary {
    pub pair: Pair,
    pub v1: f64,
    pub v1_stderr: f64,
    pub v2: Option<f64>,
    /// Mean flat background over the settings, in units of Γ.
    pub background: f64,
    pub residual_rms: f64,
    pub offset: f64,
    pub phase_origin: f64,
    pub clipped: usize,
}

impl PairSummary {
    pub fn new(fit: &FringeResult, background: f64) -> Self {
        Self {
            pair: fit.pair,
            v1: fit.visibility_raw,
            v1_stderr: fit.visibility_stderr,
            v2: fit.visibility_corrected,
            background,
            residual_rms: fit.residual_rms,
            offset: fit.offset,
            phase_origin: fit.phase_origin,
            clipped: fit.clipped,
        }
    }

    pub fn key(&self) -> String {
        format!("pair.{}{}", self.pair.0, self.pair.1)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    /// Run description (mode, seed, fingerprint...), written first.
    pub metadata: Vec<(String, String)>,
    pub pairs: Vec<PairSummary>,
    pub overlap: Option<OverlapResult>,
}

impl Summary {
    pub fn pair(&self, pair: Pair) -> Option<&PairSummary> {
        self.pairs.iter().find(|p| p.pair == pair)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn write_summary<W: Write>(s: &Summary, mut w: W) -> std::io::Result<()> {
    let mut out = String::new();
    writeln!(out, "# format: {FORMAT}").unwrap();
    for (k, v) in &s.metadata {
        writeln!(out, "{k}: {v}").unwrap();
    }
    for p in &s.pairs {
        let k = p.key();
        writeln!(out, "{k}.v1: {}", p.v1).unwrap();
        writeln!(out, "{k}.v1_stderr: {}", p.v1_stderr).unwrap();
        writeln!(out, "{k}.v2: {}", opt(p.v2)).unwrap();
        writeln!(out, "{k}.background: {}", p.background).unwrap();
        writeln!(out, "{k}.residual_rms: {}", p.residual_rms).unwrap();
        writeln!(out, "{k}.offset: {}", p.offset).unwrap();
        writeln!(out, "{k}.phase_origin: {}", p.phase_origin).unwrap();
        writeln!(out, "{k}.clipped: {}", p.clipped).unwrap();
    }
    if let Some(o) = &s.overlap {
        writeln!(out, "overlap.v13: {}", o.v13).unwrap();
        writeln!(out, "overlap.g: {}", o.g).unwrap();
        writeln!(out, "overlap.gamma_squared: {}", o.gamma_squared).unwrap();
        writeln!(out, "overlap.gamma: {}", o.gamma).unwrap();
        writeln!(out, "overlap.out_of_range: {}", o.out_of_range).unwrap();
        writeln!(
            out,
            "overlap.exceeds_nonlocality_threshold: {}",
            o.exceeds_nonlocality_threshold
        )
        .unwrap();
    }
    w.write_all(out.as_bytes())
}

fn parse_err(origin: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: origin.to_string(),
        line,
        message: message.into(),
    }
}

pub fn read_summary<R: BufRead>(reader: R, origin: &str) -> Result<Summary> {
    let mut s = Summary::default();
    let mut overlap: Vec<(String, String)> = Vec::new();
    let mut saw_format = false;
    for (idx, line) in reader.lines().enumerate() {
        let n = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(f) = rest.trim().strip_prefix("format:") {
                if f.trim() != FORMAT {
                    return Err(parse_err(origin, n, format!("unsupported format `{}`", f.trim())));
                }
                saw_format = true;
            }
            continue;
        }
        let (key, value) = line
            .split_once(": ")
            .or_else(|| line.strip_suffix(':').map(|k| (k, "")))
            .ok_or_else(|| parse_err(origin, n, "expected `key: value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| parse_err(origin, n, format!("`{key}` is not a number: `{v}`")))
        };
        if let Some(rest) = key.strip_prefix("pair.") {
            let (pk, field) = rest
                .split_once('.')
                .ok_or_else(|| parse_err(origin, n, format!("bad pair key `{key}`")))?;
            let b = pk.as_bytes();
            if b.len() != 2 || !b.iter().all(|c| (b'1'..=b'4').contains(c)) {
                return Err(parse_err(origin, n, format!("bad pair `{pk}`")));
            }
            let pair = (b[0] - b'0', b[1] - b'0');
            if s.pairs.last().is_none_or(|p| p.pair != pair) {
                s.pairs.push(PairSummary {
                    pair,
                    v1: f64::NAN,
                    v1_stderr: f64::NAN,
                    v2: None,
                    background: f64::NAN,
                    residual_rms: f64::NAN,
                    offset: f64::NAN,
                    phase_origin: f64::NAN,
                    clipped: 0,
                });
            }
            let p = s.pairs.last_mut().expect("pushed above");
            match field {
                "v1" => p.v1 = num(value)?,
                "v1_stderr" => p.v1_stderr = num(value)?,
                "v2" => p.v2 = if value == "none" { None } else { Some(num(value)?) },
                "background" => p.background = num(value)?,
                "residual_rms" => p.residual_rms = num(value)?,
                "offset" => p.offset = num(value)?,
                "phase_origin" => p.phase_origin = num(value)?,
                "clipped" => {
                    p.clipped = value
                        .parse()
                        .map_err(|_| parse_err(origin, n, format!("`{key}` is not a count: `{value}`")))?
                }
                other => return Err(parse_err(origin, n, format!("unknown pair field `{other}`"))),
            }
        } else if let Some(field) = key.strip_prefix("overlap.") {
            overlap.push((field.to_string(), value.to_string()));
        } else {
            s.metadata.push((key.to_string(), value.to_string()));
        }
    }
    if !saw_format {
        return Err(parse_err(origin, 1, format!("missing `# format: {FORMAT}` header")));
    }
    if !overlap.is_empty() {
        let get = |k: &str| -> Result<&str> {
            overlap
                .iter()
                .find(|(f, _)| f == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| parse_err(origin, 0, format!("overlap block lacks `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            let v = get(k)?;
            v.parse()
                .map_err(|_| parse_err(origin, 0, format!("overlap.{k} is not a number: `{v}`")))
        };
        let flag = |k: &str| -> Result<bool> {
            let v = get(k)?;
            v.parse()
                .map_err(|_| parse_err(origin, 0, format!("overlap.{k} is not a boolean: `{v}`")))
        };
        s.overlap = Some(OverlapResult {
            v13: num("v13")?,
            g: num("g")?,
            gamma_squared: num("gamma_squared")?,
            gamma: num("gamma")?,
            out_of_range: flag("out_of_range")?,
            exceeds_nonlocality_threshold: flag("exceeds_nonlocality_threshold")?,
        });
    }
    Ok(s)
}

pub fn save_summary(s: &Summary, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_summary(s, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_summary(path: &Path) -> Result<Summary> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_summary(std::io::BufReader::new(f), &path.display().to_string())
}
