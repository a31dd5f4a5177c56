//! Idle-period traces: data model, the line-delimited interchange format and
//! CSV ingestion of externally recorded waits.
//!
//! A trace file is one JSON object per line. The first line is the header,
//! every following line one record:
//!
//! ```text
//! {"type":"header","format_version":1,"ranks":4,"cycles":10,"clock_hz":2100000000,"config_fingerprint":"…","source":"simulated"}
//! {"type":"record","rank":0,"cycle":0,"peer":1,"dir":"right","start":1000410,"end":1000920}
//! ```
//!
//! Records are kept sorted by `(start, rank)`; zero-length waits are stored.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Cycles, Rank};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Left => "left",
            Direction::Right => "right",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" | "L" => Ok(Direction::Left),
            "right" | "R" => Ok(Direction::Right),
            other => Err(format!("invalid direction {other:?} (expected left, right, L or R)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IdleRecord {
    pub rank: Rank,
    pub cycle: u64,
    pub peer: Option<Rank>,
    pub dir: Direction,
    pub wait_start: Cycles,
    pub wait_end: Cycles,
}

impl IdleRecord {
    pub fn duration(&self) -> Cycles {
        self.wait_end - self.wait_start
    }

    fn sort_key(&self) -> (Cycles, Rank, u64, Direction) {
        (self.wait_start, self.rank, self.cycle, self.dir)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceSource {
    Simulated,
    Ingested,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub ranks: u32,
    pub cycles: u64,
    pub clock_hz: u64,
    pub config_fingerprint: String,
    pub source: TraceSource,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid record: {message}")]
    Validation { line: usize, message: String },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("schema error: {0}")]
    Schema(String),
}

/// An immutable, validated trace with records sorted by `(start, rank)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    header: TraceHeader,
    records: Vec<IdleRecord>,
}

fn check_header(h: &TraceHeader) -> Result<(), String> {
    if h.format_version != FORMAT_VERSION {
        return Err(format!("unsupported format_version {}", h.format_version));
    }
    if h.clock_hz == 0 {
        return Err("clock_hz must be positive".into());
    }
    if h.ranks == 0 {
        return Err("ranks must be positive".into());
    }
    Ok(())
}

fn check_record(h: &TraceHeader, r: &IdleRecord) -> Result<(), String> {
    if r.wait_end < r.wait_start {
        return Err(format!(
            "end {} precedes start {} (rank {}, cycle {})",
            r.wait_end, r.wait_start, r.rank, r.cycle
        ));
    }
    if r.rank >= h.ranks {
        return Err(format!("rank {} out of range (trace has {} ranks)", r.rank, h.ranks));
    }
    if let Some(peer) = r.peer {
        if peer == r.rank {
            return Err(format!("rank {} lists itself as peer", r.rank));
        }
        if peer >= h.ranks {
            return Err(format!("peer {peer} out of range (trace has {} ranks)", h.ranks));
        }
    }
    if r.cycle >= h.cycles {
        return Err(format!("cycle {} out of range (trace has {} cycles)", r.cycle, h.cycles));
    }
    Ok(())
}

impl Trace {
    pub fn new(header: TraceHeader, mut records: Vec<IdleRecord>) -> Result<Self, TraceError> {
        check_header(&header).map_err(TraceError::Invalid)?;
        for r in &records {
            check_record(&header, r).map_err(TraceError::Invalid)?;
        }
        records.sort_by_key(IdleRecord::sort_key);
        Ok(Self { header, records })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    pub fn records(&self) -> &[IdleRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn ranks(&self) -> u32 {
        self.header.ranks
    }

    pub fn clock_hz(&self) -> u64 {
        self.header.clock_hz
    }

    /// Latest wait end in the trace (0 when empty).
    pub fn span(&self) -> Cycles {
        self.records.iter().map(|r| r.wait_end).max().unwrap_or(0)
    }

    pub fn records_of(&self, rank: Rank) -> impl Iterator<Item = &IdleRecord> {
        self.records.iter().filter(move |r| r.rank == rank)
    }

    pub fn write_to(&self, mut out: impl Write) -> io::Result<()> {
        serde_json::to_writer(&mut out, &Line::Header(self.header.clone()))?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, &Line::Record(RecordLine::from(*r)))?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(input: impl BufRead) -> Result<Self, TraceError> {
        let mut header = None;
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| TraceError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            match (parsed, &header) {
                (Line::Header(h), None) => {
                    check_header(&h).map_err(|message| TraceError::Validation { line: lineno, message })?;
                    header = Some(h);
                }
                (Line::Header(_), Some(_)) => {
                    return Err(TraceError::Parse {
                        line: lineno,
                        message: "duplicate header".into(),
                    })
                }
                (Line::Record(_), None) => {
                    return Err(TraceError::Parse {
                        line: lineno,
                        message: "record before header".into(),
                    })
                }
                (Line::Record(r), Some(h)) => {
                    let rec = IdleRecord::from(r);
                    check_record(h, &rec).map_err(|message| TraceError::Validation { line: lineno, message })?;
                    records.push(rec);
                }
            }
        }
        let header = header.ok_or_else(|| TraceError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        records.sort_by_key(IdleRecord::sort_key);
        Ok(Self { header, records })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Header(TraceHeader),
    Record(RecordLine),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    rank: Rank,
    cycle: u64,
    peer: Option<Rank>,
    dir: Direction,
    start: Cycles,
    end: Cycles,
}

impl From<IdleRecord> for RecordLine {
    fn from(r: IdleRecord) -> Self {
        Self {
            rank: r.rank,
            cycle: r.cycle,
            peer: r.peer,
            dir: r.dir,
            start: r.wait_start,
            end: r.wait_end,
        }
    }
}

impl From<RecordLine> for IdleRecord {
    fn from(r: RecordLine) -> Self {
        Self {
            rank: r.rank,
            cycle: r.cycle,
            peer: r.peer,
            dir: r.dir,
            wait_start: r.start,
            wait_end: r.end,
        }
    }
}

pub fn write_trace(trace: &Trace, path: &Path) -> Result<(), TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    trace.write_to(BufWriter::new(file)).map_err(io_err)
}

pub fn read_trace(path: &Path) -> Result<Trace, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Trace::read_from(BufReader::new(file))
}

const CSV_COLUMNS: [&str; 6] = ["rank", "cycle", "peer", "dir", "start", "end"];

/// Ingests `rank,cycle,peer,dir,start,end` rows (header row required).
/// An empty, `-` or out-of-range peer is recorded as unknown. Row numbers in
/// errors count the header as row 1.
pub fn ingest_csv(mut source: impl Read, clock_hz: u64, ranks: u32) -> Result<Trace, TraceError> {
    let mut raw = Vec::new();
    source
        .read_to_end(&mut raw)
        .map_err(|e| TraceError::Parse { line: 0, message: e.to_string() })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(raw.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| TraceError::Schema(e.to_string()))?
        .clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TraceError::Schema(format!("missing column {name:?}")))?;
    }

    let provisional = TraceHeader {
        format_version: FORMAT_VERSION,
        ranks,
        cycles: u64::MAX,
        clock_hz,
        config_fingerprint: String::new(),
        source: TraceSource::Ingested,
    };
    check_header(&provisional).map_err(TraceError::Invalid)?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let rowno = i + 2;
        let row = row.map_err(|e| TraceError::Parse { line: rowno, message: e.to_string() })?;
        let field = |k: usize| row.get(idx[k]).unwrap_or("");
        let num = |k: usize| -> Result<u64, TraceError> {
            field(k).parse::<u64>().map_err(|_| TraceError::Parse {
                line: rowno,
                message: format!("column {:?}: expected a non-negative integer, got {:?}", CSV_COLUMNS[k], field(k)),
            })
        };
        let rank = u32::try_from(num(0)?).map_err(|_| TraceError::Parse {
            line: rowno,
            message: "rank does not fit in 32 bits".into(),
        })?;
        let peer = match field(2) {
            "" | "-" => None,
            _ => u32::try_from(num(2)?).ok().filter(|&p| p < ranks && p != rank),
        };
        let dir = field(3)
            .parse::<Direction>()
            .map_err(|message| TraceError::Parse { line: rowno, message })?;
        let rec = IdleRecord {
            rank,
            cycle: num(1)?,
            peer,
            dir,
            wait_start: num(4)?,
            wait_end: num(5)?,
        };
        check_record(&provisional, &rec).map_err(|message| TraceError::Validation { line: rowno, message })?;
        records.push(rec);
    }

    let cycles = records.iter().map(|r| r.cycle + 1).max().unwrap_or(1);
    let header = TraceHeader {
        cycles,
        config_fingerprint: fingerprint(&raw),
        ..provisional
    };
    Trace::new(header, records)
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn fingerprint(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}
