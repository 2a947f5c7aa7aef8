//! Canonical JSON output: sorted keys and a fixed 17-significant-digit
//! float format, so reruns produce byte-identical files.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::{Error, Result};

struct CanonicalFormatter;

impl Formatter for CanonicalFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        // 17 significant digits round-trip every finite f64 exactly.
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.8e}")
    }
}

/// Serializes to canonical JSON: object keys sorted, floats in fixed
/// scientific notation.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // Round-tripping through Value sorts object keys (serde_json's default
    // map is ordered).
    let tree: serde_json::Value =
        serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter);
    serde::Serialize::serialize(&tree, &mut ser).map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(out).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_canonical_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut text = to_canonical_json(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}
