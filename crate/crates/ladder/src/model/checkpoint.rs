//! Model serialization.
//!
//! Checkpoints are JSON documents (gzip-compressed when the path ends in
//! `.gz`) carrying a format tag, the numeric precision they were written
//! with, and the full model including running statistics. Loading verifies
//! the tag, the precision, and the model's structural invariants.

use super::Model;
use crate::error::{Error, Result};
use crate::numerics::Scalar;
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Format tag written into every checkpoint.
pub const CHECKPOINT_FORMAT: &str = "ladder-checkpoint-v1";

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
struct CheckpointFile<S: Scalar> {
    format: String,
    precision: String,
    model: Model<S>,
}

/// Write `model` to `path` as JSON, gzipped iff the extension is `.gz`.
pub fn save_checkpoint<S: Scalar>(model: &Model<S>, path: &Path) -> Result<()> {
    model.validate()?;
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        precision: S::LABEL.to_string(),
        model: model.clone(),
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let out = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(out, Compression::default());
        serde_json::to_writer(&mut enc, &file)?;
        enc.finish()?.flush()?;
    } else {
        let mut out = out;
        serde_json::to_writer(&mut out, &file)?;
        out.flush()?;
    }
    Ok(())
}

/// Load a checkpoint written by [`save_checkpoint`]; compression is detected
/// from the gzip magic bytes, not the extension.
pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Model<S>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let json = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut dec = GzDecoder::new(&bytes[..]);
        let mut out = Vec::new();
        dec.read_to_end(&mut out)?;
        out
    } else {
        bytes
    };
    let file: CheckpointFile<S> = serde_json::from_slice(&json)?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Data(format!(
            "unsupported checkpoint format '{}', expected '{CHECKPOINT_FORMAT}'",
            file.format
        )));
    }
    if file.precision != S::LABEL {
        return Err(Error::Data(format!(
            "checkpoint precision is '{}' but '{}' was requested",
            file.precision,
            S::LABEL
        )));
    }
    file.model.validate()?;
    Ok(file.model)
}
