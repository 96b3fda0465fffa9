use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{EpisodeRecord, EvalError};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Append-only JSONL transcript file, one record per line.
#[derive(Debug)]
pub struct EpisodeWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl EpisodeWriter {
    pub fn append(path: &Path) -> Result<Self, EvalError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(EpisodeWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &EpisodeRecord) -> Result<(), EvalError> {
        let line = serde_json::to_string(record).map_err(|source| EvalError::Json {
            path: self.path.display().to_string(),
            line: 0,
            source,
        })?;
        writeln!(self.out, "{line}").map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))
    }
}

/// Replaces `path` with `records`.
pub fn write_episodes(path: &Path, records: &[EpisodeRecord]) -> Result<(), EvalError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|source| EvalError::Json {
            path: path.display().to_string(),
            line: 0,
            source,
        })?;
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeRecord>, EvalError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpisodeRecord =
            serde_json::from_str(&line).map_err(|source| EvalError::Json {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })?;
        records.push(record);
    }
    Ok(records)
}
