use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::Verdict;
use crate::census::VerdictLogInfo;
use crate::error::{Error, Result};

/// Append-only JSON-lines verdict log.
///
/// Each record is one line. A record counts only once its newline is on
/// disk; a torn final line left by a crash is dropped on open.
#[derive(Debug)]
pub struct VerdictLog {
    path: PathBuf,
    file: File,
    records: u64,
    hasher: Sha256,
}

impl VerdictLog {
    /// Opens or creates the log and returns it with every intact record.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<Verdict>)> {
        let path = path.as_ref().to_path_buf();
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let (verdicts, intact) = parse_log(&bytes).map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        if intact < bytes.len() {
            file.set_len(intact as u64)
                .map_err(|e| Error::io(&path, e))?;
            file.sync_all().map_err(|e| Error::io(&path, e))?;
        }
        let mut hasher = Sha256::new();
        hasher.update(&bytes[..intact]);
        let mut log = Self {
            path,
            file,
            records: verdicts.len() as u64,
            hasher,
        };
        log.seek_end()?;
        Ok((log, verdicts))
    }

    fn seek_end(&mut self) -> Result<()> {
        use std::io::Seek;
        self.file
            .seek(std::io::SeekFrom::End(0))
            .map_err(|e| Error::io(&self.path, e))?;
        Ok(())
    }

    /// Writes one record and syncs it before returning.
    pub fn append(&mut self, verdict: &Verdict) -> Result<()> {
        let mut line = serde_json::to_vec(verdict)?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))?;
        self.hasher.update(&line);
        self.records += 1;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn info(&self) -> VerdictLogInfo {
        VerdictLogInfo {
            path: self.path.clone(),
            records: self.records,
            sha256: hex::encode(self.hasher.clone().finalize()),
        }
    }
}

/// Parses complete lines; returns the verdicts and the length of the
/// intact prefix. A malformed line followed by more data is corruption.
pub fn parse_log(bytes: &[u8]) -> Result<(Vec<Verdict>, usize)> {
    let mut verdicts = Vec::new();
    let mut pos = 0;
    let mut line_no = 0;
    while let Some(nl) = bytes[pos..].iter().position(|b| *b == b'\n') {
        line_no += 1;
        let line = &bytes[pos..pos + nl];
        let verdict: Verdict = serde_json::from_slice(line)
            .map_err(|e| Error::InvalidInput(format!("verdict log line {line_no}: {e}")))?;
        verdicts.push(verdict);
        pos += nl + 1;
    }
    Ok((verdicts, pos))
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
