//! Line-oriented file formats and atomic file writes.
//!
//! Every file opens with a header `#bidshade-<kind> v<N>`; readers refuse
//! other kinds and versions. Body lines are space-separated `key=value`
//! pairs. Features use the `index:value,...` form, `-` when empty.
//!
//! ```text
//! #bidshade-feedback v1 dim=10
//! #vocabulary [{"name":"exchange","categories":["ex0","ex1"]}, ...]
//! features=0:1,4:1 bid=0.42 value=1.1 won=1 mbtw=0.37
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::landscape::{FeedbackRecord, Request};
use crate::policy::Decision;
use crate::winrate::{FeatureVector, Vocabulary};

pub const FEEDBACK_VERSION: u32 = 1;
pub const REQUESTS_VERSION: u32 = 1;
pub const DECISIONS_VERSION: u32 = 1;

const VOCABULARY_PREFIX: &str = "#vocabulary ";

/// Write `contents` to `path` through a temporary file in the same
/// directory, renamed into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

struct Header {
    dim: Option<usize>,
}

fn parse_header(
    line: Option<&str>,
    kind: &'static str,
    expected: u32,
    location: &str,
) -> Result<Header> {
    let line =
        line.ok_or_else(|| Error::format(location, format!("missing #bidshade-{kind} header")))?;
    let mut parts = line.split_whitespace();
    let tag = format!("#bidshade-{kind}");
    if parts.next() != Some(tag.as_str()) {
        return Err(Error::format(location, format!("expected a {tag} header")));
    }
    let version = parts
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| Error::format(location, "header lacks a version"))?;
    if version != expected {
        return Err(Error::Version {
            what: kind,
            found: version,
            expected,
        });
    }
    let mut header = Header { dim: None };
    for p in parts {
        match p.split_once('=') {
            Some(("dim", d)) => {
                header.dim = Some(
                    d.parse()
                        .map_err(|_| Error::format(location, format!("bad dim `{d}`")))?,
                )
            }
            _ => {
                return Err(Error::format(
                    location,
                    format!("unexpected header field `{p}`"),
                ))
            }
        }
    }
    Ok(header)
}

fn fields<'a>(line: &'a str, location: &str) -> Result<BTreeMap<&'a str, &'a str>> {
    let mut out = BTreeMap::new();
    for token in line.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| Error::format(location, format!("`{token}` is not key=value")))?;
        if out.insert(k, v).is_some() {
            return Err(Error::format(location, format!("duplicate key `{k}`")));
        }
    }
    Ok(out)
}

fn take<'a>(map: &mut BTreeMap<&str, &'a str>, key: &str, location: &str) -> Result<&'a str> {
    map.remove(key)
        .ok_or_else(|| Error::format(location, format!("missing `{key}`")))
}

fn number(text: &str, key: &str, location: &str) -> Result<f64> {
    let x: f64 = text
        .parse()
        .map_err(|_| Error::format(location, format!("`{key}` is not a number: `{text}`")))?;
    if !x.is_finite() {
        return Err(Error::format(location, format!("`{key}` is not finite")));
    }
    Ok(x)
}

fn no_leftovers(map: &BTreeMap<&str, &str>, location: &str) -> Result<()> {
    match map.keys().next() {
        Some(k) => Err(Error::format(location, format!("unknown key `{k}`"))),
        None => Ok(()),
    }
}

fn body_lines<'a>(text: &'a str, name: &'a str) -> impl Iterator<Item = (String, &'a str)> + 'a {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(move |(i, l)| (format!("{name}:{}", i + 1), l))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackFile {
    pub dim: usize,
    pub vocabulary: Option<Vocabulary>,
    pub records: Vec<FeedbackRecord>,
}

pub fn write_feedback(
    dim: usize,
    vocabulary: Option<&Vocabulary>,
    records: &[FeedbackRecord],
) -> String {
    let mut s = format!("#bidshade-feedback v{FEEDBACK_VERSION} dim={dim}\n");
    if let Some(v) = vocabulary {
        s.push_str(VOCABULARY_PREFIX);
        s.push_str(&serde_json::to_string(v).expect("vocabulary serialises"));
        s.push('\n');
    }
    for r in records {
        s.push_str(&format!(
            "features={} bid={} value={} won={}",
            r.features,
            r.bid,
            r.value,
            u8::from(r.won)
        ));
        if let Some(m) = r.min_bid_to_win {
            s.push_str(&format!(" mbtw={m}"));
        }
        s.push('\n');
    }
    s
}

pub fn parse_feedback(text: &str, name: &str) -> Result<FeedbackFile> {
    let header = parse_header(
        text.lines().next(),
        "feedback",
        FEEDBACK_VERSION,
        &format!("{name}:1"),
    )?;
    let dim = header
        .dim
        .ok_or_else(|| Error::format(format!("{name}:1"), "feedback header lacks dim"))?;
    let mut vocabulary = None;
    for (i, line) in text.lines().enumerate().skip(1) {
        if let Some(json) = line.strip_prefix(VOCABULARY_PREFIX) {
            let v: Vocabulary = serde_json::from_str(json)
                .map_err(|e| Error::format(format!("{name}:{}", i + 1), e.to_string()))?;
            if v.dim() != dim {
                return Err(Error::format(
                    format!("{name}:{}", i + 1),
                    format!("vocabulary has dim {} but header says {dim}", v.dim()),
                ));
            }
            vocabulary = Some(v);
        }
    }
    let mut records = Vec::new();
    for (loc, line) in body_lines(text, name) {
        let mut f = fields(line, &loc)?;
        let features = FeatureVector::parse(take(&mut f, "features", &loc)?, dim)
            .map_err(|e| Error::format(&loc, e.to_string()))?;
        let bid = number(take(&mut f, "bid", &loc)?, "bid", &loc)?;
        let value = number(take(&mut f, "value", &loc)?, "value", &loc)?;
        let won = match take(&mut f, "won", &loc)? {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::format(
                    &loc,
                    format!("`won` must be 0 or 1, got `{other}`"),
                ))
            }
        };
        let min_bid_to_win = f
            .remove("mbtw")
            .map(|m| number(m, "mbtw", &loc))
            .transpose()?;
        no_leftovers(&f, &loc)?;
        records.push(FeedbackRecord {
            features,
            bid,
            value,
            won,
            min_bid_to_win,
        });
    }
    Ok(FeedbackFile {
        dim,
        vocabulary,
        records,
    })
}

pub fn write_requests(dim: usize, requests: &[Request]) -> String {
    let mut s = format!("#bidshade-requests v{REQUESTS_VERSION} dim={dim}\n");
    for r in requests {
        s.push_str(&format!("features={} value={}\n", r.features, r.value));
    }
    s
}

/// A zero-byte file reads as no requests.
pub fn parse_requests(text: &str, name: &str) -> Result<Vec<Request>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let header = parse_header(
        text.lines().next(),
        "requests",
        REQUESTS_VERSION,
        &format!("{name}:1"),
    )?;
    let dim = header
        .dim
        .ok_or_else(|| Error::format(format!("{name}:1"), "requests header lacks dim"))?;
    body_lines(text, name)
        .map(|(loc, line)| {
            let mut f = fields(line, &loc)?;
            let features = FeatureVector::parse(take(&mut f, "features", &loc)?, dim)
                .map_err(|e| Error::format(&loc, e.to_string()))?;
            let value = number(take(&mut f, "value", &loc)?, "value", &loc)?;
            no_leftovers(&f, &loc)?;
            Ok(Request { features, value })
        })
        .collect()
}

fn optional<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map_or_else(|| "-".to_string(), |v| v.to_string())
}

pub fn write_decisions(decisions: &[Decision]) -> String {
    let mut s = format!("#bidshade-decisions v{DECISIONS_VERSION}\n");
    for d in decisions {
        s.push_str(&format!(
            "bid={} win_rate={} surplus={} iterations={}\n",
            d.bid,
            optional(d.expected_win_rate),
            optional(d.expected_surplus),
            optional(d.iterations)
        ));
    }
    s
}

pub fn parse_decisions(text: &str, name: &str) -> Result<Vec<Decision>> {
    parse_header(
        text.lines().next(),
        "decisions",
        DECISIONS_VERSION,
        &format!("{name}:1"),
    )?;
    body_lines(text, name)
        .map(|(loc, line)| {
            let mut f = fields(line, &loc)?;
            let opt = |v: &str, key: &str| -> Result<Option<f64>> {
                if v == "-" {
                    Ok(None)
                } else {
                    number(v, key, &loc).map(Some)
                }
            };
            let bid = number(take(&mut f, "bid", &loc)?, "bid", &loc)?;
            let expected_win_rate = opt(take(&mut f, "win_rate", &loc)?, "win_rate")?;
            let expected_surplus = opt(take(&mut f, "surplus", &loc)?, "surplus")?;
            let iterations = match take(&mut f, "iterations", &loc)? {
                "-" => None,
                n => Some(
                    n.parse()
                        .map_err(|_| Error::format(&loc, format!("bad iterations `{n}`")))?,
                ),
            };
            no_leftovers(&f, &loc)?;
            Ok(Decision {
                bid,
                expected_win_rate,
                expected_surplus,
                iterations,
            })
        })
        .collect()
}
