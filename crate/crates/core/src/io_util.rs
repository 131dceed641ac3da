//! Serialization helpers shared by the on-disk formats.

use std::fmt;

use serde::de::Deserializer;
use serde::ser::{Error as _, Serializer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits (exact round trip for `f64`).
pub fn format17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `f64` that serializes to JSON with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("cannot serialize {}", self.0)));
        }
        let raw = serde_json::value::RawValue::from_string(format17(self.0))
            .map_err(S::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for F17 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(deserializer).map(F17)
    }
}

pub fn f17_vec(xs: impl IntoIterator<Item = f64>) -> Vec<F17> {
    xs.into_iter().map(F17).collect()
}

pub fn unwrap_f17(xs: &[F17]) -> Vec<f64> {
    xs.iter().map(|x| x.0).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex_string(&Sha256::digest(bytes))
}

/// Content hash in the style of a git blob id, over SHA-256.
pub fn git_style_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex_string(&h.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    struct Hex<'a>(&'a [u8]);
    impl fmt::Display for Hex<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            self.0.iter().try_for_each(|b| write!(f, "{b:02x}"))
        }
    }
    Hex(bytes).to_string()
}

/// Binary PGM (P5), 8 bits per pixel.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parses a binary PGM with maxval 255. Returns `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8], path: &str) -> Result<(usize, usize, Vec<u8>)> {
    let err = |line: usize, msg: &str| Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.to_string(),
    };
    let mut pos = 0usize;
    let mut line = 1usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            if bytes[pos] == b'\n' {
                line += 1;
            }
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err(line, "truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err(line, "bad header"))?);
    }
    if tokens[0] != "P5" {
        return Err(err(1, "not a binary PGM (expected P5)"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| err(line, "bad header number"));
    let (width, height, maxval) = (parse(tokens[1])?, parse(tokens[2])?, parse(tokens[3])?);
    if maxval != 255 {
        return Err(err(line, "only maxval 255 is supported"));
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(err(
            line,
            &format!(
                "truncated raster at byte offset {}: need {need} pixels, have {}",
                bytes.len(),
                bytes.len().saturating_sub(pos)
            ),
        ));
    }
    Ok((width, height, bytes[pos..pos + need].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f17_round_trips_exactly() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 123456789.123456789, 0.0] {
            let s = serde_json::to_string(&F17(x)).unwrap();
            let back: F17 = serde_json::from_str(&s).unwrap();
            assert_eq!(back.0.to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(format17(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn pgm_round_trip_and_truncation() {
        let px: Vec<u8> = (0..12).collect();
        let enc = encode_pgm(4, 3, &px);
        assert_eq!(decode_pgm(&enc, "x").unwrap(), (4, 3, px));
        let err = decode_pgm(&enc[..enc.len() - 2], "x").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
