//! Text format for time-tag streams.
//!
//! ```text
//! # format: franson-timetags/1
//! # fingerprint: 3f2a...
//! # duration_ps: 125000000
//! # n_cycles: 10000
//! 1,4181
//! 3,4190
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{TimeTag, TimeTagStream};
use crate::error::{Error, Result};

const FORMAT: &str = "franson-timetags/1";

pub fn write_time_tags<W: Write>(stream: &TimeTagStream, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# format: {FORMAT}")?;
    writeln!(w, "# fingerprint: {}", stream.config_fingerprint)?;
    writeln!(w, "# duration_ps: {}", stream.duration)?;
    for (k, v) in &stream.metadata {
        writeln!(w, "# {k}: {v}")?;
    }
    for t in &stream.tags {
        writeln!(w, "{},{}", t.channel, t.time)?;
    }
    w.flush()
}

pub fn read_time_tags<R: BufRead>(reader: R, origin: &str) -> Result<TimeTagStream> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut stream = TimeTagStream::default();
    let mut saw_duration = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let (key, value) = header
                .split_once(':')
                .ok_or_else(|| err(lineno, format!("header line without `key: value`: {line}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "format" if value != FORMAT => {
                    return Err(err(lineno, format!("unsupported format `{value}`")));
                }
                "format" => {}
                "fingerprint" => stream.config_fingerprint = value.to_string(),
                "duration_ps" => {
                    stream.duration = value
                        .parse()
                        .map_err(|_| err(lineno, format!("bad duration `{value}`")))?;
                    saw_duration = true;
                }
                _ => stream.metadata.push((key.to_string(), value.to_string())),
            }
            continue;
        }
        let (ch, t) = line
            .split_once(',')
            .ok_or_else(|| err(lineno, format!("expected `channel,time_ps`, got `{line}`")))?;
        let channel: u8 = ch
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad channel `{ch}`")))?;
        if !(1..=4).contains(&channel) {
            return Err(err(lineno, format!("channel {channel} outside 1..=4")));
        }
        let time: i64 = t.trim().parse().map_err(|_| err(lineno, format!("bad time `{t}`")))?;
        if let Some(prev) = stream.tags.last() {
            if time < prev.time {
                return Err(err(lineno, format!("time {time} precedes previous tag {}", prev.time)));
            }
        }
        stream.tags.push(TimeTag { time, channel });
    }
    if !saw_duration {
        // externally produced files may omit it; fall back to the span of the data
        stream.duration = stream.tags.last().map_or(0, |t| t.time + 1);
    }
    Ok(stream)
}

impl TimeTagStream {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        write_time_tags(self, BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        read_time_tags(BufReader::new(f), &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn hand_written_file() {
        let text = "# fingerprint: abc\n1,1000\n3,1400\n\n2,1500\n";
        let s = read_time_tags(text.as_bytes(), "mem").unwrap();
        assert_eq!(s.config_fingerprint, "abc");
        assert_eq!(s.tags.len(), 3);
        assert_eq!(s.tags[1], TimeTag { time: 1400, channel: 3 });
        assert_eq!(s.duration, 1501);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = read_time_tags("# duration_ps: 5\n1,10\n7,20\n".as_bytes(), "f.txt").unwrap_err();
        assert!(e.to_string().starts_with("f.txt:3:"), "{e}");
        let e = read_time_tags("1,10\n1,5\n".as_bytes(), "f.txt").unwrap_err();
        assert!(e.to_string().contains("f.txt:2"), "{e}");
        let e = read_time_tags("1;10\n".as_bytes(), "f.txt").unwrap_err();
        assert!(e.to_string().contains("f.txt:1"), "{e}");
    }

    fn stream_strategy() -> impl Strategy<Value = TimeTagStream> {
        (
            proptest::collection::vec((1u8..=4, 0i64..1_000_000), 0..200),
            "[a-f0-9]{0,16}",
            proptest::collection::vec(("[a-z_]{1,8}", "[a-z0-9 .]{0,10}"), 0..3),
        )
            .prop_map(|(mut raw, fp, meta)| {
                raw.sort_by_key(|&(c, t)| (t, c));
                TimeTagStream {
                    tags: raw
                        .into_iter()
                        .map(|(channel, time)| TimeTag { time, channel })
                        .collect(),
                    duration: 1_000_000,
                    config_fingerprint: fp,
                    metadata: meta
                        .into_iter()
                        .filter(|(k, _)| !matches!(k.as_str(), "format" | "fingerprint" | "duration_ps"))
                        .map(|(k, v)| (k, v.trim().to_string()))
                        .collect(),
                }
            })
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(s in stream_strategy()) {
            let mut buf = Vec::new();
            write_time_tags(&s, &mut buf).unwrap();
            let back = read_time_tags(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(&back, &s);
            let mut again = Vec::new();
            write_time_tags(&back, &mut again).unwrap();
            prop_assert_eq!(buf, again);
        }
    }
}
