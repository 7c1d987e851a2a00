//! ECG record and manifest files.
//!
//! A record is a small line-oriented CSV:
//!
//! ```text
//! fs_hz,512
//! subject,S01
//! session,a
//! n,adc
//! 0,-12
//! 1,-9
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest sample rate the detector is specified for.
pub const MIN_FS: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcgRecord {
    pub subject_id: String,
    pub session_id: String,
    pub fs: u32,
    pub samples: Vec<i32>,
}

impl EcgRecord {
    pub fn validate(&self) -> Result<()> {
        if self.fs < MIN_FS {
            return Err(Error::InvalidRecord(format!(
                "sample rate {} Hz below minimum {MIN_FS} Hz",
                self.fs
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::InvalidRecord("record has no samples".into()));
        }
        for (what, id) in [("subject", &self.subject_id), ("session", &self.session_id)] {
            if id.is_empty() || id.contains([',', '\n', '\r']) {
                return Err(Error::InvalidRecord(format!("bad {what} id {id:?}")));
            }
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs as f64
    }
}

fn header_line<R: BufRead>(
    lines: &mut std::io::Lines<R>,
    path: &Path,
    key: &str,
) -> Result<String> {
    let line = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => {
            return Err(Error::Format {
                path: path.into(),
                msg: format!("missing `{key}` header line"),
            })
        }
    };
    match line.trim_end_matches('\r').split_once(',') {
        Some((k, v)) if k == key => Ok(v.to_string()),
        _ => Err(Error::Format {
            path: path.into(),
            msg: format!("expected `{key},<value>` header, found {line:?}"),
        }),
    }
}

/// Streaming reader over the sample rows of a record file.
pub struct RecordReader<R: BufRead> {
    pub subject_id: String,
    pub session_id: String,
    pub fs: u32,
    lines: std::io::Lines<R>,
    path: PathBuf,
    next_n: u64,
}

impl RecordReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::new(file), path)
    }
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R, path: &Path) -> Result<Self> {
        let mut lines = reader.lines();
        let fs_raw = header_line(&mut lines, path, "fs_hz")?;
        let fs = fs_raw
            .parse::<u32>()
            .ok()
            .filter(|&f| f > 0)
            .ok_or_else(|| Error::Format {
                path: path.into(),
                msg: format!("invalid sample rate {fs_raw:?}"),
            })?;
        let subject_id = header_line(&mut lines, path, "subject")?;
        let session_id = header_line(&mut lines, path, "session")?;
        match lines.next() {
            Some(Ok(l)) if l.trim_end_matches('\r') == "n,adc" => {}
            _ => {
                return Err(Error::Format {
                    path: path.into(),
                    msg: "expected `n,adc` column header on line 4".into(),
                })
            }
        }
        Ok(RecordReader {
            subject_id,
            session_id,
            fs,
            lines,
            path: path.into(),
            next_n: 0,
        })
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<i32>;

    fn next(&mut self) -> Option<Self::Item> {
        let line_no = self.next_n as usize + 5;
        let line = match self.lines.next()? {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::io(&self.path, e))),
        };
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            return self.next();
        }
        let parse_err = |msg: String| {
            Some(Err(Error::Parse {
                path: self.path.clone(),
                line: line_no,
                msg,
            }))
        };
        let Some((n, adc)) = line.split_once(',') else {
            return parse_err(format!("expected `<n>,<adc>`, found {line:?}"));
        };
        match n.parse::<u64>() {
            Ok(v) if v == self.next_n => {}
            _ => return parse_err(format!("sample index {n:?}, expected {}", self.next_n)),
        }
        let Ok(value) = adc.parse::<i32>() else {
            return parse_err(format!("non-integer sample {adc:?}"));
        };
        self.next_n += 1;
        Some(Ok(value))
    }
}

pub fn read_record(path: impl AsRef<Path>) -> Result<EcgRecord> {
    let mut reader = RecordReader::open(path)?;
    let samples = reader.by_ref().collect::<Result<Vec<i32>>>()?;
    Ok(EcgRecord {
        subject_id: reader.subject_id,
        session_id: reader.session_id,
        fs: reader.fs,
        samples,
    })
}

pub fn write_record(record: &EcgRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    record.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "fs_hz,{}", record.fs).map_err(io)?;
    writeln!(w, "subject,{}", record.subject_id).map_err(io)?;
    writeln!(w, "session,{}", record.session_id).map_err(io)?;
    writeln!(w, "n,adc").map_err(io)?;
    for (n, v) in record.samples.iter().enumerate() {
        writeln!(w, "{n},{v}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// What a manifest entry may be used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    /// Owner enrollment session.
    Enroll,
    /// Owner held-out session, genuine test data only.
    Test,
    /// Only ever replayed as an intruder.
    IntruderPool,
    /// Negative training data; also usable as an intruder.
    Population,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Enroll => "enroll",
            Role::Test => "test",
            Role::IntruderPool => "intruder-pool",
            Role::Population => "population",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enroll" => Ok(Role::Enroll),
            "test" => Ok(Role::Test),
            "intruder-pool" => Ok(Role::IntruderPool),
            "population" => Ok(Role::Population),
            other => Err(Error::Manifest(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub session_id: String,
    pub path: PathBuf,
    pub role: Role,
}

/// The list of records and the role each plays in enrollment/evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordManifest {
    pub entries: Vec<ManifestEntry>,
}

impl RecordManifest {
    /// Reads a manifest; relative record paths resolve against the
    /// manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut lines = BufReader::new(file).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim_end_matches('\r') == "subject,session,path,role" => {}
            _ => {
                return Err(Error::Format {
                    path: path.into(),
                    msg: "expected header `subject,session,path,role`".into(),
                })
            }
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Parse {
                    path: path.into(),
                    line: i + 2,
                    msg: format!("expected 4 columns, found {}", cols.len()),
                });
            }
            let rel = PathBuf::from(cols[2]);
            entries.push(ManifestEntry {
                subject_id: cols[0].to_string(),
                session_id: cols[1].to_string(),
                path: if rel.is_absolute() {
                    rel
                } else {
                    base.join(rel)
                },
                role: cols[3].parse().map_err(|e: Error| Error::Parse {
                    path: path.into(),
                    line: i + 2,
                    msg: e.to_string(),
                })?,
            });
        }
        let manifest = RecordManifest { entries };
        manifest.validate()?;
        for e in &manifest.entries {
            if !e.path.is_file() {
                return Err(Error::Manifest(format!(
                    "record for {}/{} not found at {}",
                    e.subject_id,
                    e.session_id,
                    e.path.display()
                )));
            }
        }
        Ok(manifest)
    }

    /// Writes the manifest with paths relative to `dir` where possible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "subject,session,path,role").map_err(io)?;
        for e in &self.entries {
            let p = e.path.strip_prefix(base).unwrap_or(&e.path);
            writeln!(
                w,
                "{},{},{},{}",
                e.subject_id,
                e.session_id,
                p.display(),
                e.role
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Enforces unique (subject, session) pairs and unique record paths, so
    /// no session can serve both enrollment and testing.
    pub fn validate(&self) -> Result<()> {
        let mut pairs = HashSet::new();
        let mut paths = HashSet::new();
        for e in &self.entries {
            if !pairs.insert((&e.subject_id, &e.session_id)) {
                return Err(Error::Manifest(format!(
                    "session {}/{} listed more than once",
                    e.subject_id, e.session_id
                )));
            }
            if !paths.insert(&e.path) {
                return Err(Error::Manifest(format!(
                    "record {} listed more than once",
                    e.path.display()
                )));
            }
        }
        Ok(())
    }

    /// Subject ids in first-appearance order.
    pub fn subjects(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.subject_id.as_str()))
            .map(|e| e.subject_id.clone())
            .collect()
    }

    pub fn records_of<'a>(&'a self, subject: &'a str) -> impl Iterator<Item = &'a ManifestEntry> {
        self.entries.iter().filter(move |e| e.subject_id == subject)
    }

    /// Subjects with both enrollment and held-out test sessions.
    pub fn multi_session_subjects(&self) -> Vec<String> {
        self.subjects()
            .into_iter()
            .filter(|s| {
                let roles: Vec<Role> = self.records_of(s).map(|e| e.role).collect();
                roles.contains(&Role::Enroll) && roles.contains(&Role::Test)
            })
            .collect()
    }
}
