//! Versioned file formats.
//!
//! Matrices go to CSV with a one-line `#` preamble carrying the kind, format
//! version, feature mode and row count. Bundles and metadata are JSON inside
//! an envelope `{format_version, kind, payload}`. Every write goes to a
//! temporary file in the target directory that is then renamed over the
//! destination.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_err(path: &Path, line: usize, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        field: field.into(),
        message: message.into(),
    }
}

/// Parsed `# padloop <kind> key=value ...` preamble.
#[derive(Debug, Clone, PartialEq)]
pub struct Preamble {
    pub kind: String,
    pub fields: BTreeMap<String, String>,
}

impl Preamble {
    pub fn render(kind: &str, fields: &[(&str, String)]) -> String {
        let mut s = format!("# padloop {kind} format_version={FORMAT_VERSION}");
        for (k, v) in fields {
            s.push_str(&format!(" {k}={v}"));
        }
        s.push('\n');
        s
    }

    pub fn get(&self, path: &Path, key: &str) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| parse_err(path, 1, key, "missing from preamble"))
    }

    pub fn get_usize(&self, path: &Path, key: &str) -> Result<usize> {
        let v = self.get(path, key)?;
        v.parse()
            .map_err(|_| parse_err(path, 1, key, format!("`{v}` is not a non-negative integer")))
    }
}

/// Splits off and checks the preamble. Returns it with the CSV body.
pub fn split_preamble<'a>(path: &Path, text: &'a str, kind: &str) -> Result<(Preamble, &'a str)> {
    if !text.ends_with('\n') {
        return Err(parse_err(
            path,
            text.lines().count().max(1),
            "end of file",
            "file does not end with a newline; it may be truncated",
        ));
    }
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let mut tokens = first.split_whitespace();
    if tokens.next() != Some("#") || tokens.next() != Some("padloop") {
        return Err(parse_err(path, 1, "preamble", "expected `# padloop <kind> ...`"));
    }
    let found_kind = tokens.next().unwrap_or_default().to_string();
    let mut fields = BTreeMap::new();
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| parse_err(path, 1, t, "expected key=value"))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let pre = Preamble {
        kind: found_kind,
        fields,
    };
    let version = pre.get(path, "format_version")?;
    let found: u32 = version
        .parse()
        .map_err(|_| parse_err(path, 1, "format_version", format!("`{version}` is not an integer")))?;
    if found != FORMAT_VERSION {
        return Err(Error::Version {
            found,
            supported: FORMAT_VERSION,
        });
    }
    if pre.kind != kind {
        return Err(parse_err(path, 1, "kind", format!("expected `{kind}`, found `{}`", pre.kind)));
    }
    Ok((pre, body))
}

/// Reads the CSV body, checking the header and the row count announced in
/// the preamble. Each record is handed to `row` with its 1-based file line.
pub fn read_csv_body(
    path: &Path,
    body: &str,
    header: &[String],
    rows: usize,
    mut row: impl FnMut(usize, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let found = rdr.headers().map_err(|e| parse_err(path, 2, "header", e.to_string()))?.clone();
    if found.len() != header.len() || found.iter().zip(header).any(|(a, b)| a != b) {
        let first_bad = found
            .iter()
            .zip(header)
            .position(|(a, b)| a != b)
            .unwrap_or(found.len().min(header.len()));
        return Err(parse_err(
            path,
            2,
            header.get(first_bad).cloned().unwrap_or_else(|| "header".into()),
            format!("header has {} columns, expected {}", found.len(), header.len()),
        ));
    }
    let mut count = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize + 1);
            parse_err(path, line, "record", e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize + 1);
        row(line, &rec)?;
        count += 1;
    }
    if count != rows {
        return Err(parse_err(
            path,
            count + 3,
            "rows",
            format!("preamble announces {rows} rows but the file has {count}"),
        ));
    }
    Ok(())
}

pub fn parse_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(path, line, field, format!("`{s}` is not a number")))
}

pub fn csv_line(fields: impl IntoIterator<Item = String>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(fields.into_iter())
        .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv: {e}")))
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format_version: u32,
    kind: &'a str,
    payload: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    format_version: u32,
    kind: String,
    payload: serde_json::Value,
}

pub fn to_json_envelope<T: Serialize>(kind: &str, payload: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&EnvelopeOut {
        format_version: FORMAT_VERSION,
        kind,
        payload,
    })
    .map_err(|e| Error::invalid(format!("serializing {kind}: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn save_json<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<()> {
    write_atomic(path, &to_json_envelope(kind, payload)?)
}

pub fn from_json_envelope<T: DeserializeOwned>(path: &Path, text: &str, kind: &str) -> Result<T> {
    let json_err = |e: serde_json::Error, field: &str| parse_err(path, e.line(), field, e.to_string());
    let env: EnvelopeIn = serde_json::from_str(text).map_err(|e| json_err(e, "envelope"))?;
    if env.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: env.format_version,
            supported: FORMAT_VERSION,
        });
    }
    if env.kind != kind {
        return Err(parse_err(path, 1, "kind", format!("expected `{kind}`, found `{}`", env.kind)));
    }
    serde_json::from_value(env.payload).map_err(|e| json_err(e, "payload"))
}

pub fn load_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    from_json_envelope(path, &read_text(path)?, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 123456.789, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn preamble_checks() {
        let p = Path::new("x.csv");
        let ok = "# padloop thing format_version=1 rows=0\na,b\n";
        let (pre, body) = split_preamble(p, ok, "thing").unwrap();
        assert_eq!(pre.get_usize(p, "rows").unwrap(), 0);
        assert_eq!(body, "a,b\n");
        let newer = "# padloop thing format_version=7 rows=0\na,b\n";
        assert!(matches!(
            split_preamble(p, newer, "thing"),
            Err(Error::Version { found: 7, supported: 1 })
        ));
        assert!(matches!(split_preamble(p, ok, "other"), Err(Error::Parse { .. })));
        assert!(matches!(split_preamble(p, "# padloop thing format_version=1", "thing"), Err(Error::Parse { .. })));
    }

    #[test]
    fn json_envelope_version() {
        let p = Path::new("b.json");
        let bytes = to_json_envelope("k", &vec![1.5, 2.0]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let back: Vec<f64> = from_json_envelope(p, &text, "k").unwrap();
        assert_eq!(back, vec![1.5, 2.0]);
        let newer = text.replace("\"format_version\": 1", "\"format_version\": 2");
        let err = from_json_envelope::<Vec<f64>>(p, &newer, "k").unwrap_err();
        assert!(err.to_string().contains('2') && err.to_string().contains('1'));
        assert!(from_json_envelope::<Vec<f64>>(p, &text[..text.len() / 2], "k").is_err());
    }
}
