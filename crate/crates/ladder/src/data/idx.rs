//! IDX container parsing (the MNIST distribution format).
//!
//! An IDX file is a big-endian header — 4-byte magic, then one 4-byte size
//! per dimension — followed by the raw payload. Magic 2051 (`0x00000803`)
//! holds `count x rows x cols` unsigned bytes; magic 2049 (`0x00000801`)
//! holds `count` label bytes. Files may arrive gzip-compressed; compression
//! is detected from the gzip magic bytes.

use crate::error::{Error, Result};
use flate2::read::GzDecoder;
use std::io::Read;

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;

/// Decoded contents of one IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxPayload {
    /// `count` images of `rows x cols` raw bytes (row-major, concatenated).
    Images { count: usize, rows: usize, cols: usize, pixels: Vec<u8> },
    /// One class byte per example.
    Labels(Vec<u8>),
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    let end = at + 4;
    if bytes.len() < end {
        return Err(Error::Data(format!("idx: truncated before {what}")));
    }
    Ok(u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]))
}

/// Parse an IDX payload, transparently decompressing gzip input.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxPayload> {
    let raw: Vec<u8>;
    let bytes = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut dec = GzDecoder::new(bytes);
        let mut out = Vec::new();
        dec.read_to_end(&mut out)
            .map_err(|e| Error::Data(format!("idx: gzip decompression failed: {e}")))?;
        raw = out;
        &raw[..]
    } else {
        bytes
    };

    let magic = be_u32(bytes, 0, "magic")?;
    match magic {
        MAGIC_IMAGES => {
            let count = be_u32(bytes, 4, "image count")? as usize;
            let rows = be_u32(bytes, 8, "row count")? as usize;
            let cols = be_u32(bytes, 12, "column count")? as usize;
            let want = count
                .checked_mul(rows)
                .and_then(|v| v.checked_mul(cols))
                .ok_or_else(|| Error::Data("idx: image dimensions overflow".into()))?;
            let body = &bytes[16..];
            if body.len() != want {
                return Err(Error::Data(format!(
                    "idx: image payload holds {} bytes, header promises {want} ({count} x {rows} x {cols})",
                    body.len()
                )));
            }
            Ok(IdxPayload::Images { count, rows, cols, pixels: body.to_vec() })
        }
        MAGIC_LABELS => {
            let count = be_u32(bytes, 4, "label count")? as usize;
            let body = &bytes[8..];
            if body.len() != count {
                return Err(Error::Data(format!(
                    "idx: label payload holds {} bytes, header promises {count}",
                    body.len()
                )));
            }
            Ok(IdxPayload::Labels(body.to_vec()))
        }
        other => Err(Error::Data(format!(
            "idx: unrecognized magic 0x{other:08x} (expected 0x{MAGIC_IMAGES:08x} images or 0x{MAGIC_LABELS:08x} labels)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn image_file(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(&MAGIC_IMAGES.to_be_bytes());
        f.extend_from_slice(&count.to_be_bytes());
        f.extend_from_slice(&rows.to_be_bytes());
        f.extend_from_slice(&cols.to_be_bytes());
        f.extend_from_slice(pixels);
        f
    }

    fn label_file(labels: &[u8]) -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(&MAGIC_LABELS.to_be_bytes());
        f.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        f.extend_from_slice(labels);
        f
    }

    #[test]
    fn parses_an_image_file() {
        let pixels: Vec<u8> = (0..8).collect();
        let parsed = parse_idx(&image_file(2, 2, 2, &pixels)).unwrap();
        assert_eq!(parsed, IdxPayload::Images { count: 2, rows: 2, cols: 2, pixels });
    }

    #[test]
    fn parses_a_label_file() {
        let parsed = parse_idx(&label_file(&[3, 1, 4])).unwrap();
        assert_eq!(parsed, IdxPayload::Labels(vec![3, 1, 4]));
    }

    #[test]
    fn gzip_round_trip_matches_raw() {
        let raw = image_file(1, 2, 3, &[9, 8, 7, 6, 5, 4]);
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&raw).unwrap();
        let gz = enc.finish().unwrap();
        assert_eq!(parse_idx(&gz).unwrap(), parse_idx(&raw).unwrap());
    }

    #[test]
    fn rejects_bad_magic() {
        let mut f = image_file(1, 1, 1, &[0]);
        f[3] = 0x99;
        let err = parse_idx(&f).unwrap_err();
        assert!(err.to_string().contains("magic"), "got: {err}");
    }

    #[test]
    fn rejects_truncation_without_partial_output() {
        let full = image_file(2, 2, 2, &(0..8).collect::<Vec<u8>>());
        for cut in [2usize, 9, 14, 20] {
            assert!(parse_idx(&full[..cut]).is_err(), "cut at {cut} must fail");
        }
        let labels = label_file(&[1, 2, 3]);
        assert!(parse_idx(&labels[..labels.len() - 1]).is_err());
    }

    #[test]
    fn rejects_surplus_bytes() {
        let mut f = image_file(1, 1, 1, &[7]);
        f.push(42);
        assert!(parse_idx(&f).is_err(), "dimension/payload mismatch must fail");
    }
}
