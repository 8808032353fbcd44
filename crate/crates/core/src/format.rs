//! Text and JSON encodings of [`AnonymizedHistogram`].
//!
//! The canonical text format is one `count<TAB>prevalence` pair per line in
//! ascending count order. Blank lines and lines starting with `#` are ignored.
//! The JSON form is an array of `[count, prevalence]` pairs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::histogram::AnonymizedHistogram;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Json,
}

impl Format {
    /// Picks JSON for `.json` paths and TSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Tsv,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Format::Tsv),
            "json" => Ok(Format::Json),
            other => Err(Error::Parameter(format!("unknown format '{other}' (expected tsv or json)"))),
        }
    }
}

pub fn parse_tsv(text: &str) -> Result<AnonymizedHistogram> {
    let mut entries: Vec<(u64, u64)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let mut fields = line.split('\t');
        let (Some(c), Some(p), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(format!("expected 'count<TAB>prevalence', got '{line}'")));
        };
        let count: u64 = c
            .trim()
            .parse()
            .map_err(|_| err(format!("invalid count '{c}'")))?;
        let prevalence: u64 = p
            .trim()
            .parse()
            .map_err(|_| err(format!("invalid prevalence '{p}'")))?;
        if count == 0 || prevalence == 0 {
            return Err(err("count and prevalence must be positive".into()));
        }
        if let Some(&(prev, _)) = entries.last() {
            if count <= prev {
                return Err(err(format!("counts must be strictly increasing ({prev} then {count})")));
            }
        }
        entries.push((count, prevalence));
    }
    AnonymizedHistogram::new(entries)
}

pub fn to_tsv(h: &AnonymizedHistogram) -> String {
    let mut out = String::new();
    for &(c, p) in h.entries() {
        writeln!(out, "{c}\t{p}").unwrap();
    }
    out
}

pub fn parse_json(text: &str) -> Result<AnonymizedHistogram> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn to_json(h: &AnonymizedHistogram) -> String {
    serde_json::to_string(h).expect("histograms always serialize")
}

pub fn parse(text: &str, format: Format) -> Result<AnonymizedHistogram> {
    match format {
        Format::Tsv => parse_tsv(text),
        Format::Json => parse_json(text),
    }
}

pub fn render(h: &AnonymizedHistogram, format: Format) -> String {
    match format {
        Format::Tsv => to_tsv(h),
        Format::Json => to_json(h) + "\n",
    }
}

pub fn read_histogram(path: &Path, format: Option<Format>) -> Result<AnonymizedHistogram> {
    let text = std::fs::read_to_string(path)?;
    parse(&text, format.unwrap_or_else(|| Format::from_path(path)))
}

pub fn write_histogram(path: &Path, h: &AnonymizedHistogram, format: Option<Format>) -> Result<()> {
    let format = format.unwrap_or_else(|| Format::from_path(path));
    std::fs::write(path, render(h, format))?;
    Ok(())
}
