//! File formats: unit-record CSV, JSON configs and reports, content digests.
//!
//! The CSV header is a subsequence of `stratum,f,r,y,d,y_true` in that order; `r` and `y`
//! are required. `y` is empty exactly when `r = 0`. An empty `stratum`, `f` or `d` cell
//! means the value is absent.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::simlab::LabeledRecord;
use crate::tables::UnitRecord;

pub const SCHEMA_VERSION: &str = "1.0";

const COLUMNS: [&str; 6] = ["stratum", "f", "r", "y", "d", "y_true"];

/// Parsed CSV contents.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<UnitRecord>,
    /// Hidden outcomes, present only when the file has a `y_true` column.
    pub y_true: Option<Vec<u32>>,
    pub columns: Vec<String>,
}

impl Dataset {
    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    /// Fully labeled view: `y_true` when present, else every record must be observed.
    pub fn labeled(&self) -> Result<Vec<LabeledRecord>> {
        match &self.y_true {
            Some(t) => Ok(self
                .records
                .iter()
                .zip(t)
                .map(|(r, &y)| LabeledRecord { stratum: r.stratum.clone(), f: r.f, y })
                .collect()),
            None => crate::simlab::mask::labeled_from_records(&self.records),
        }
    }
}

fn parse_err<T>(line: u64, reason: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, reason: reason.into() })
}

fn check_header(header: &csv::StringRecord) -> Result<Vec<usize>> {
    let mut idx = Vec::with_capacity(header.len());
    for name in header.iter() {
        let Some(i) = COLUMNS.iter().position(|c| *c == name) else {
            return parse_err(1, format!("unknown column '{name}'"));
        };
        if idx.contains(&i) {
            return parse_err(1, format!("duplicate column '{name}'"));
        }
        if idx.last().is_some_and(|&prev| prev > i) {
            return parse_err(1, format!("column '{name}' out of order; expected order {}", COLUMNS.join(",")));
        }
        idx.push(i);
    }
    for required in ["r", "y"] {
        if !header.iter().any(|h| h == required) {
            return parse_err(1, format!("missing required column '{required}'"));
        }
    }
    Ok(idx)
}

fn level(cell: &str, line: u64, name: &str) -> Result<Option<u32>> {
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<u32>() {
        Ok(v) if v >= 1 => Ok(Some(v)),
        _ => parse_err(line, format!("{name} must be a positive integer, got '{cell}'")),
    }
}

fn flag(cell: &str, line: u64, name: &str) -> Result<u8> {
    match cell {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => parse_err(line, format!("{name} must be 0 or 1, got '{cell}'")),
    }
}

/// Parses unit records from CSV text.
pub fn parse_records(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let idx = check_header(&header)?;
    let has_true = idx.contains(&5);
    let mut out = Dataset {
        columns: header.iter().map(str::to_string).collect(),
        y_true: has_true.then(Vec::new),
        ..Dataset::default()
    };
    for (k, row) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| Error::Parse { line, reason: e.to_string() })?;
        if row.len() != idx.len() {
            return parse_err(line, format!("expected {} fields, found {}", idx.len(), row.len()));
        }
        let mut cells = [""; 6];
        for (cell, &i) in row.iter().zip(&idx) {
            cells[i] = cell;
        }
        let r = flag(cells[2], line, "r")? == 1;
        let y = level(cells[3], line, "y")?;
        if r != y.is_some() {
            return parse_err(line, "y must be present exactly when r = 1");
        }
        let d = if cells[4].is_empty() { None } else { Some(flag(cells[4], line, "d")?) };
        out.records.push(UnitRecord {
            stratum: (!cells[0].is_empty()).then(|| cells[0].to_string()),
            f: level(cells[1], line, "f")?,
            r,
            y,
            d,
        });
        if let Some(t) = out.y_true.as_mut() {
            match level(cells[5], line, "y_true")? {
                Some(v) if y.is_none_or(|y| y == v) => t.push(v),
                Some(_) => return parse_err(line, "y_true disagrees with y"),
                None => return parse_err(line, "y_true must be present on every row"),
            }
        }
    }
    Ok(out)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_records(read_bytes(path.as_ref())?.as_slice())
}

/// Reads a fully labeled dataset for masking.
pub fn read_labeled(path: impl AsRef<Path>) -> Result<Vec<LabeledRecord>> {
    read_records(path)?.labeled()
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

/// Writes records as CSV. The `d` column appears when any record has an arm; `y_true` when given.
pub fn write_records(records: &[UnitRecord], y_true: Option<&[u32]>, writer: impl Write) -> Result<()> {
    let with_d = records.iter().any(|r| r.d.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["stratum", "f", "r", "y"];
    if with_d {
        header.push("d");
    }
    if y_true.is_some() {
        header.push("y_true");
    }
    w.write_record(&header)?;
    for (i, rec) in records.iter().enumerate() {
        let mut row = vec![
            rec.stratum.clone().unwrap_or_default(),
            opt(&rec.f),
            if rec.r { "1" } else { "0" }.to_string(),
            opt(&rec.y),
        ];
        if with_d {
            row.push(opt(&rec.d));
        }
        if let Some(t) = y_true {
            row.push(t[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a fully labeled dataset (all `r = 1`).
pub fn write_labeled(data: &[LabeledRecord], writer: impl Write) -> Result<()> {
    let records: Vec<UnitRecord> = data
        .iter()
        .map(|l| UnitRecord { stratum: l.stratum.clone(), f: l.f, r: true, y: Some(l.y), d: None })
        .collect();
    write_records(&records, None, writer)
}

/// Reads a JSON config, rejecting unknown keys wherever the target type does.
pub fn read_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_slice(&read_bytes(path.as_ref())?)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path.as_ref())?))
}

/// Digest of the compact JSON serialization.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(cfg)?))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    /// File name to sha256.
    pub files: std::collections::BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// Command-line settings that shaped the results.
    pub settings: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub command: String,
    pub inputs: Inputs,
    pub results: Value,
    pub warnings: Vec<String>,
    /// Wall-clock seconds; null unless requested so that reports stay byte-stable.
    pub timing: Option<f64>,
}

impl Report {
    pub fn new(command: &str, inputs: Inputs, results: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            command: command.to_string(),
            inputs,
            results,
            warnings: Vec::new(),
            timing: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Dataset> {
        parse_records(s.as_bytes())
    }

    #[test]
    fn parses_optional_columns() {
        let d = parse("stratum,f,r,y,d\na,2,1,3,0\n,1,0,,1\n").unwrap();
        assert_eq!(d.records[0], UnitRecord::observed(3, Some(2)).with_stratum("a").with_arm(0));
        assert_eq!(d.records[1], UnitRecord::missing(Some(1)).with_arm(1));
        let minimal = parse("r,y\n1,2\n0,\n").unwrap();
        assert_eq!(minimal.records[1], UnitRecord::missing(None));
    }

    #[test]
    fn rejects_bad_headers() {
        for h in ["r,y,z", "r,r,y", "y,r", "f,r"] {
            assert!(matches!(parse(&format!("{h}\n")), Err(Error::Parse { line: 1, .. })), "{h}");
        }
    }

    #[test]
    fn reports_line_numbers() {
        let e = parse("f,r,y\n1,1,2\n1,0,3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse("f,r,y\n1,2,2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse("f,r,y\n1,1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn round_trip_with_truth() {
        let recs = vec![UnitRecord::observed(2, Some(1)), UnitRecord::missing(Some(3)).with_stratum("s")];
        let mut buf = Vec::new();
        write_records(&recs, Some(&[2, 4]), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "stratum,f,r,y,y_true\n,1,1,2,2\ns,3,0,,4\n");
        let d = parse_records(buf.as_slice()).unwrap();
        assert_eq!(d.records, recs);
        assert_eq!(d.labeled().unwrap()[1].y, 4);
    }

    #[test]
    fn hashes_compact_json() {
        assert_eq!(config_hash(&1u8).unwrap(), sha256_hex(b"1"));
    }
}
