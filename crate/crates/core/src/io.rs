//! Shared text serialization helpers: lossless float formatting, FNV-1a
//! hashing for config fingerprints, and simple tab-separated matrix IO.

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip any f64
/// exactly. Non-finite values map to `inf`, `-inf`, `nan`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.17e}")
}

/// Parses floats written by [`fmt_f64`], plus plain literals.
pub fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        "nan" => Ok(f64::NAN),
        _ => s
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("bad float '{s}'"))),
    }
}

/// 64-bit FNV-1a over a byte string.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Serializes a row-major matrix as tab-separated lines.
pub fn write_matrix(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&line.join("\t"));
        out.push('\n');
    }
    out
}

/// Parses tab-separated float lines, skipping blanks and `#` comments.
pub fn read_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        rows.push(
            line.split('\t')
                .map(|f| parse_f64(f.trim()))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(rows)
}
