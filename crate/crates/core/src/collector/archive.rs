//! JSON Lines archive: a header line followed by one record per line.
//!
//! Records are never rewritten. A record is committed once its trailing
//! newline is on disk, so a crash can leave at most one partial line at the
//! end of the file; replay stops there and reports the truncation.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{AttemptRecord, CollectorError, ConfigKey};

pub const ARCHIVE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub format_version: u32,
    pub created: DateTime<Utc>,
    pub tool_version: String,
    /// Request parameters in force when the archive was started.
    #[serde(default)]
    pub request_defaults: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_hash: Option<String>,
}

impl ArchiveHeader {
    pub fn new(created: DateTime<Utc>, request_defaults: serde_json::Value) -> Self {
        Self {
            format_version: ARCHIVE_FORMAT_VERSION,
            created,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            request_defaults,
            corpus_hash: None,
        }
    }
}

/// A scheduled query that was never issued (process down, clock skew).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub config: ConfigKey,
    pub query_index: u32,
    pub scheduled_for: DateTime<Utc>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ArchiveEntry {
    Header(ArchiveHeader),
    Attempt(AttemptRecord),
    Gap(GapRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchivedRecord {
    /// Byte offset of the record's line.
    pub offset: u64,
    pub entry: ArchiveEntry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub offset: u64,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub header: ArchiveHeader,
    /// Every intact record after the header, in append order.
    pub records: Vec<ArchivedRecord>,
    pub truncation: Option<Truncation>,
}

impl Replay {
    pub fn attempts(&self) -> impl Iterator<Item = (u64, &AttemptRecord)> {
        self.records.iter().filter_map(|r| match &r.entry {
            ArchiveEntry::Attempt(a) => Some((r.offset, a)),
            _ => None,
        })
    }

    pub fn gaps(&self) -> impl Iterator<Item = &GapRecord> {
        self.records.iter().filter_map(|r| match &r.entry {
            ArchiveEntry::Gap(g) => Some(g),
            _ => None,
        })
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CollectorError + '_ {
    move |source| CollectorError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads every intact record. Fails only when the header itself is missing
/// or unreadable.
pub fn replay(path: &Path) -> Result<Replay, CollectorError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut offset = 0u64;
    let mut line_no = 0usize;
    let mut buf = Vec::new();
    let mut header = None;
    let mut records = Vec::new();
    let mut truncation = None;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.last() == Some(&b'\n');
        let parsed = if complete {
            std::str::from_utf8(&buf[..n - 1])
                .map_err(|e| e.to_string())
                .and_then(|s| serde_json::from_str::<ArchiveEntry>(s).map_err(|e| e.to_string()))
        } else {
            Err("partial record without newline".to_string())
        };
        match (parsed, header.is_some()) {
            (Ok(ArchiveEntry::Header(h)), false) => {
                if h.format_version != ARCHIVE_FORMAT_VERSION {
                    return Err(CollectorError::Format {
                        path: path.display().to_string(),
                        reason: format!("unsupported format version {}", h.format_version),
                    });
                }
                header = Some(h);
            }
            (Ok(_), false) | (Err(_), false) => {
                return Err(CollectorError::Format {
                    path: path.display().to_string(),
                    reason: "first record is not a valid header".into(),
                })
            }
            (Ok(ArchiveEntry::Header(_)), true) => {
                truncation = Some(Truncation {
                    offset,
                    line: line_no,
                    reason: "unexpected second header".into(),
                });
                break;
            }
            (Ok(entry), true) => records.push(ArchivedRecord { offset, entry }),
            (Err(reason), true) => {
                truncation = Some(Truncation {
                    offset,
                    line: line_no,
                    reason,
                });
                break;
            }
        }
        offset += n as u64;
    }
    let header = header.ok_or_else(|| CollectorError::Format {
        path: path.display().to_string(),
        reason: "empty archive".into(),
    })?;
    if let Some(t) = &truncation {
        log::warn!(
            "{}: replay stopped at line {} (offset {}): {}",
            path.display(),
            t.line,
            t.offset,
            t.reason
        );
    }
    Ok(Replay {
        header,
        records,
        truncation,
    })
}

/// Single writer for an archive file.
#[derive(Debug)]
pub struct ArchiveWriter {
    path: PathBuf,
    file: File,
    len: u64,
}

impl ArchiveWriter {
    /// Opens an archive for appending, writing `header` if the file is new.
    /// A partial trailing line left by a crash is cut off first.
    pub fn open(path: &Path, header: ArchiveHeader) -> Result<Self, CollectorError> {
        let err = io_err(path);
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .map_err(&err)?;
        let mut contents = Vec::new();
        file.read_to_end(&mut contents).map_err(&err)?;
        let keep = match contents.iter().rposition(|b| *b == b'\n') {
            Some(i) => i as u64 + 1,
            None => 0,
        };
        if keep < contents.len() as u64 {
            log::warn!(
                "{}: dropping {} bytes of partial trailing record",
                path.display(),
                contents.len() as u64 - keep
            );
            file.set_len(keep).map_err(&err)?;
        }
        file.seek(SeekFrom::Start(keep)).map_err(&err)?;
        let mut writer = Self {
            path: path.to_path_buf(),
            file,
            len: keep,
        };
        if keep == 0 {
            writer.append(&ArchiveEntry::Header(header))?;
        } else {
            // validates the existing header
            replay(path)?;
        }
        Ok(writer)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one record as a single write; returns its byte offset.
    pub fn append(&mut self, entry: &ArchiveEntry) -> Result<u64, CollectorError> {
        let mut line = serde_json::to_vec(entry).map_err(|e| CollectorError::Format {
            path: self.path.display().to_string(),
            reason: e.to_string(),
        })?;
        line.push(b'\n');
        let offset = self.len;
        let err = io_err(&self.path);
        self.file.write_all(&line).map_err(&err)?;
        self.file.flush().map_err(&err)?;
        self.len += line.len() as u64;
        Ok(offset)
    }
}
