//! CSV logging of sample records and of simulator ground truth.
//!
//! # Record log
//!
//! ```text
//! timestamp,seq,ch0_counts,ch0_volts,ch0_value[°C],ch0_flag,ch1_counts,...
//! 2026-01-01T00:00:00.000Z,0,512,2.5024,25.024,ok,...
//! ```
//!
//! One header row, then one LF-terminated row per record. Every enabled
//! channel contributes four columns in ascending channel order. Timestamps
//! are ISO-8601 UTC with milliseconds, volts have 4 decimals and values the
//! configured precision (at least 3). Channels without a calibration map
//! have an empty unit in the header and empty value and flag fields.
//!
//! Rows are only ever written whole, so a writer killed mid-run leaves a
//! file whose every line is complete. A final line with no terminator is
//! therefore reported as truncated.
//!
//! # Ground truth
//!
//! ```text
//! t_s,seq,ch0[°C],ch1[%RH]
//! 0,0,0,50
//! ```
//!
//! Values are written in shortest round-trip form, so they read back exactly.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{LogConfig, SampleRecord, Sink, SinkError};
use crate::codec::{RawCounts, CHANNELS, FULL_SCALE};
use crate::conversion::{LinearMap, QualityFlag};
use crate::time::Timestamp;

/// Fewest decimal places that keep one humidity code (0.0978 %RH) distinct.
pub const MIN_VALUE_PRECISION: usize = 3;
pub const DEFAULT_VOLTS_PRECISION: usize = 4;
pub const DEFAULT_FILE_PATTERN: &str = "das_%Y%m%d_%H%M%S.csv";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: truncated row (no line terminator)")]
    Truncated { line: u64 },
    #[error("header: {0}")]
    Schema(String),
    #[error("invalid log policy: {0}")]
    Policy(String),
}

impl From<csv::Error> for LogError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(e) => LogError::Io(e),
            other => LogError::Malformed {
                line,
                message: format!("{other:?}"),
            },
        }
    }
}

/// How and where records are logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPolicy {
    pub directory: PathBuf,
    /// `strftime` pattern for file names, expanded with the session start time.
    pub file_pattern: String,
    /// Rows buffered between flushes.
    pub flush_interval: usize,
    pub value_precision: usize,
    pub volts_precision: usize,
}

impl LogPolicy {
    pub fn new(directory: impl Into<PathBuf>) -> Self {
        LogPolicy {
            directory: directory.into(),
            file_pattern: DEFAULT_FILE_PATTERN.to_owned(),
            flush_interval: 1,
            value_precision: MIN_VALUE_PRECISION,
            volts_precision: DEFAULT_VOLTS_PRECISION,
        }
    }

    pub fn validate(&self) -> Result<(), LogError> {
        if self.value_precision < MIN_VALUE_PRECISION {
            return Err(LogError::Policy(format!(
                "value precision {} is below the minimum of {MIN_VALUE_PRECISION}",
                self.value_precision
            )));
        }
        if self.volts_precision < DEFAULT_VOLTS_PRECISION {
            return Err(LogError::Policy(format!(
                "volts precision {} is below the minimum of {DEFAULT_VOLTS_PRECISION}",
                self.volts_precision
            )));
        }
        if self.flush_interval == 0 {
            return Err(LogError::Policy("flush interval must be >= 1".into()));
        }
        Ok(())
    }
}

impl From<&LogConfig> for LogPolicy {
    fn from(c: &LogConfig) -> Self {
        LogPolicy {
            value_precision: c.precision,
            ..LogPolicy::new(&c.directory)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogChannel {
    pub channel: u8,
    /// `None` for channels without a calibration map.
    pub unit: Option<String>,
}

/// Column layout of a record log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSchema {
    pub channels: Vec<LogChannel>,
}

impl LogSchema {
    /// Layout for `enabled` channels, sorted ascending, with units from `maps`.
    pub fn new(enabled: &[u8], maps: &[Option<LinearMap>; CHANNELS]) -> Self {
        let mut chans: Vec<u8> = enabled.to_vec();
        chans.sort_unstable();
        chans.dedup();
        LogSchema {
            channels: chans
                .into_iter()
                .filter(|&c| usize::from(c) < CHANNELS)
                .map(|c| LogChannel {
                    channel: c,
                    unit: maps[usize::from(c)].as_ref().map(|m| m.unit().to_owned()),
                })
                .collect(),
        }
    }

    pub fn channel_ids(&self) -> Vec<u8> {
        self.channels.iter().map(|c| c.channel).collect()
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["timestamp".to_owned(), "seq".to_owned()];
        for c in &self.channels {
            let n = c.channel;
            h.push(format!("ch{n}_counts"));
            h.push(format!("ch{n}_volts"));
            h.push(format!("ch{n}_value[{}]", c.unit.as_deref().unwrap_or("")));
            h.push(format!("ch{n}_flag"));
        }
        h
    }

    fn parse_header(fields: &csv::StringRecord) -> Result<Self, LogError> {
        let f: Vec<&str> = fields.iter().collect();
        if f.len() < 2 || f[0] != "timestamp" || f[1] != "seq" {
            return Err(LogError::Schema(
                "expected header to start with timestamp,seq".into(),
            ));
        }
        let rest = &f[2..];
        if !rest.len().is_multiple_of(4) {
            return Err(LogError::Schema(format!(
                "{} channel columns is not a multiple of 4",
                rest.len()
            )));
        }
        let mut channels = Vec::new();
        for group in rest.chunks(4) {
            let n = group[0]
                .strip_prefix("ch")
                .and_then(|s| s.strip_suffix("_counts"))
                .and_then(|s| s.parse::<u8>().ok())
                .filter(|&n| usize::from(n) < CHANNELS)
                .ok_or_else(|| LogError::Schema(format!("unknown column {:?}", group[0])))?;
            if group[1] != format!("ch{n}_volts") || group[3] != format!("ch{n}_flag") {
                return Err(LogError::Schema(format!(
                    "columns for channel {n} are not counts,volts,value,flag"
                )));
            }
            let unit = group[2]
                .strip_prefix(&format!("ch{n}_value["))
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| LogError::Schema(format!("unknown column {:?}", group[2])))?;
            if channels.iter().any(|c: &LogChannel| c.channel == n) {
                return Err(LogError::Schema(format!("channel {n} appears twice")));
            }
            channels.push(LogChannel {
                channel: n,
                unit: (!unit.is_empty()).then(|| unit.to_owned()),
            });
        }
        Ok(LogSchema { channels })
    }
}

/// One logged channel as it reads back from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogCell {
    pub channel: u8,
    pub counts: RawCounts,
    pub volts: f64,
    pub value: Option<(f64, QualityFlag)>,
}

/// One logged record, at the precision it was written with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub host_time: Timestamp,
    pub seq: u8,
    pub cells: Vec<LogCell>,
}

fn round_to(x: f64, places: usize) -> f64 {
    format!("{x:.places$}").parse().unwrap_or(x)
}

impl LogRow {
    /// What `record` looks like once written under `schema` and `policy`.
    pub fn from_record(record: &SampleRecord, schema: &LogSchema, policy: &LogPolicy) -> Self {
        LogRow {
            host_time: record.host_time,
            seq: record.seq,
            cells: schema
                .channels
                .iter()
                .map(|c| {
                    let i = usize::from(c.channel);
                    LogCell {
                        channel: c.channel,
                        counts: record.counts[i],
                        volts: round_to(record.volts[i].0, policy.volts_precision),
                        value: c.unit.as_ref().and_then(|_| {
                            record
                                .value(c.channel)
                                .map(|v| (round_to(v.value, policy.value_precision), v.flag))
                        }),
                    }
                })
                .collect(),
        }
    }

    pub fn cell(&self, channel: u8) -> Option<&LogCell> {
        self.cells.iter().find(|c| c.channel == channel)
    }

    fn fields(&self, policy: &LogPolicy) -> Vec<String> {
        let mut f = Vec::with_capacity(2 + 4 * self.cells.len());
        f.push(self.host_time.to_string());
        f.push(self.seq.to_string());
        for c in &self.cells {
            f.push(c.counts.to_string());
            f.push(format!("{:.*}", policy.volts_precision, c.volts));
            match c.value {
                Some((v, flag)) => {
                    f.push(format!("{:.*}", policy.value_precision, v));
                    f.push(flag.as_str().to_owned());
                }
                None => {
                    f.push(String::new());
                    f.push(String::new());
                }
            }
        }
        f
    }
}

/// A parsed record log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFile {
    pub schema: LogSchema,
    pub rows: Vec<LogRow>,
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(Vec::new())
}

/// Writes a complete log: header, then one row per record.
pub fn write_log<W: Write>(
    mut out: W,
    schema: &LogSchema,
    records: &[SampleRecord],
    policy: &LogPolicy,
) -> Result<(), LogError> {
    policy.validate()?;
    let mut w = csv_writer();
    w.write_record(schema.header())?;
    for r in records {
        w.write_record(LogRow::from_record(r, schema, policy).fields(policy))?;
    }
    w.flush()?;
    out.write_all(w.get_ref())?;
    out.flush()?;
    Ok(())
}

pub fn write_log_file(
    path: impl AsRef<Path>,
    schema: &LogSchema,
    records: &[SampleRecord],
    policy: &LogPolicy,
) -> Result<(), LogError> {
    write_log(File::create(path)?, schema, records, policy)
}

fn parse_row(rec: &csv::StringRecord, schema: &LogSchema, line: u64) -> Result<LogRow, LogError> {
    let bad = |message: String| LogError::Malformed { line, message };
    let expected = 2 + 4 * schema.channels.len();
    if rec.len() != expected {
        return Err(bad(format!("expected {expected} fields, found {}", rec.len())));
    }
    let host_time: Timestamp = rec[0].parse().map_err(|e| bad(format!("{e}")))?;
    let seq: u8 = rec[1]
        .parse()
        .map_err(|_| bad(format!("bad seq {:?}", &rec[1])))?;
    let mut cells = Vec::with_capacity(schema.channels.len());
    for (i, ch) in schema.channels.iter().enumerate() {
        let f = |k: usize| &rec[2 + 4 * i + k];
        let n = ch.channel;
        let counts = f(0)
            .parse::<u16>()
            .ok()
            .and_then(|c| RawCounts::new(c).ok())
            .ok_or_else(|| bad(format!("ch{n}: bad counts {:?} (0..={FULL_SCALE})", f(0))))?;
        let volts: f64 = f(1)
            .parse()
            .map_err(|_| bad(format!("ch{n}: bad volts {:?}", f(1))))?;
        let value = match (ch.unit.is_some(), f(2), f(3)) {
            (false, "", "") => None,
            (true, v, flag) if !v.is_empty() => {
                let v: f64 = v
                    .parse()
                    .map_err(|_| bad(format!("ch{n}: bad value {v:?}")))?;
                let flag = QualityFlag::parse(flag)
                    .ok_or_else(|| bad(format!("ch{n}: bad flag {flag:?}")))?;
                Some((v, flag))
            }
            (_, v, flag) => {
                return Err(bad(format!(
                    "ch{n}: value {v:?} / flag {flag:?} inconsistent with the header"
                )))
            }
        };
        cells.push(LogCell {
            channel: n,
            counts,
            volts,
            value,
        });
    }
    Ok(LogRow {
        host_time,
        seq,
        cells,
    })
}

/// Line number of the last line in `data`, 1-based.
fn last_line_number(data: &[u8]) -> u64 {
    data.iter().filter(|&&b| b == b'\n').count() as u64 + 1
}

/// Parses a record log. Accepts LF or CRLF terminators and trailing blank
/// lines; rejects an unterminated final line.
pub fn read_log<R: Read>(mut input: R) -> Result<LogFile, LogError> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    if data.is_empty() {
        return Err(LogError::Schema("empty file".into()));
    }
    if data.last() != Some(&b'\n') {
        return Err(LogError::Truncated {
            line: last_line_number(&data),
        });
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(data.as_slice());
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| LogError::Schema("missing header".into()))??;
    let schema = LogSchema::parse_header(&header)?;
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push(parse_row(&rec, &schema, line)?);
    }
    Ok(LogFile { schema, rows })
}

pub fn read_log_file(path: impl AsRef<Path>) -> Result<LogFile, LogError> {
    read_log(File::open(path)?)
}

struct OpenLog {
    path: PathBuf,
    file: File,
    schema: LogSchema,
    rows: csv::Writer<Vec<u8>>,
    buffered: usize,
}

impl OpenLog {
    fn flush(&mut self) -> Result<(), LogError> {
        let bytes = std::mem::replace(&mut self.rows, csv_writer())
            .into_inner()
            .map_err(|e| e.into_error())?;
        self.file.write_all(&bytes)?;
        self.file.flush()?;
        self.buffered = 0;
        Ok(())
    }
}

/// Streaming record logger. Starts a new file whenever the channel
/// selection of incoming records changes, since the column layout is fixed
/// per file.
pub struct CsvLogger {
    policy: LogPolicy,
    maps: [Option<LinearMap>; CHANNELS],
    stem: String,
    current: Option<OpenLog>,
    files: Vec<PathBuf>,
}

impl CsvLogger {
    /// Creates the first file (header only) right away.
    pub fn create(
        policy: LogPolicy,
        maps: [Option<LinearMap>; CHANNELS],
        enabled: &[u8],
        started: chrono::DateTime<chrono::Utc>,
    ) -> Result<Self, LogError> {
        policy.validate()?;
        fs::create_dir_all(&policy.directory)?;
        let name = started.format(&policy.file_pattern).to_string();
        let mut logger = CsvLogger {
            policy,
            maps,
            stem: name,
            current: None,
            files: Vec::new(),
        };
        let schema = LogSchema::new(enabled, &logger.maps);
        logger.open(schema)?;
        Ok(logger)
    }

    /// Files written so far, oldest first.
    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    fn next_path(&self, attempt: usize) -> PathBuf {
        let stem = Path::new(&self.stem);
        let base = stem.file_stem().and_then(|s| s.to_str()).unwrap_or("das");
        let ext = stem.extension().and_then(|s| s.to_str()).unwrap_or("csv");
        let part = self.files.len() + attempt;
        let name = if part == 0 {
            format!("{base}.{ext}")
        } else {
            format!("{base}_part{part}.{ext}")
        };
        self.policy.directory.join(name)
    }

    fn open(&mut self, schema: LogSchema) -> Result<(), LogError> {
        if let Some(mut old) = self.current.take() {
            old.flush()?;
        }
        let mut attempt = 0;
        let (path, file) = loop {
            let path = self.next_path(attempt);
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(f) => break (path, f),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists && attempt < 1000 => attempt += 1,
                Err(e) => return Err(e.into()),
            }
        };
        let mut log = OpenLog {
            path: path.clone(),
            file,
            rows: csv_writer(),
            schema,
            buffered: 0,
        };
        log.rows.write_record(log.schema.header())?;
        log.flush()?;
        self.files.push(path);
        self.current = Some(log);
        Ok(())
    }

    pub fn write(&mut self, record: &SampleRecord) -> Result<(), LogError> {
        let wanted = LogSchema::new(&record.enabled_channels, &self.maps);
        if self.current.as_ref().map(|l| &l.schema) != Some(&wanted) {
            self.open(wanted)?;
        }
        let log = self.current.as_mut().expect("opened above");
        let row = LogRow::from_record(record, &log.schema, &self.policy);
        log.rows.write_record(row.fields(&self.policy))?;
        log.buffered += 1;
        if log.buffered >= self.policy.flush_interval {
            log.flush()?;
        }
        Ok(())
    }

    /// Flushes buffered rows and closes the current file.
    pub fn close(&mut self) -> Result<(), LogError> {
        if let Some(mut log) = self.current.take() {
            log.flush()?;
            log::debug!("closed log {}", log.path.display());
        }
        Ok(())
    }
}

impl Sink for CsvLogger {
    fn record(&mut self, record: &SampleRecord) -> Result<(), SinkError> {
        Ok(self.write(record)?)
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        Ok(self.close()?)
    }
}

/// One generated frame's pre-noise values, for the assigned channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub seq: u8,
    pub t_s: f64,
    pub values: Vec<f64>,
}

/// Exact signal values behind every frame a simulator generated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthLedger {
    channels: Vec<(u8, String)>,
    rows: Vec<TruthRow>,
}

impl TruthLedger {
    pub fn new(channels: Vec<(u8, String)>) -> Self {
        TruthLedger {
            channels,
            rows: Vec::new(),
        }
    }

    pub fn channels(&self) -> &[(u8, String)] {
        &self.channels
    }

    pub fn rows(&self) -> &[TruthRow] {
        &self.rows
    }

    pub fn push(&mut self, seq: u8, t_s: f64, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.channels.len());
        self.rows.push(TruthRow { seq, t_s, values });
    }

    /// `(time_s, value)` pairs for one channel.
    pub fn channel_points(&self, channel: u8) -> Option<Vec<(f64, f64)>> {
        let idx = self.channels.iter().position(|(c, _)| *c == channel)?;
        Some(self.rows.iter().map(|r| (r.t_s, r.values[idx])).collect())
    }

    pub fn unit(&self, channel: u8) -> Option<&str> {
        self.channels
            .iter()
            .find(|(c, _)| *c == channel)
            .map(|(_, u)| u.as_str())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LogError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .quote_style(csv::QuoteStyle::Never)
            .from_writer(out);
        let mut header = vec!["t_s".to_owned(), "seq".to_owned()];
        header.extend(self.channels.iter().map(|(c, u)| format!("ch{c}[{u}]")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut f = vec![r.t_s.to_string(), r.seq.to_string()];
            f.extend(r.values.iter().map(f64::to_string));
            w.write_record(&f)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<(), LogError> {
        self.write_csv(io::BufWriter::new(File::create(path)?))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, LogError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| LogError::Schema("missing header".into()))??;
        if header.len() < 2 || &header[0] != "t_s" || &header[1] != "seq" {
            return Err(LogError::Schema("expected header to start with t_s,seq".into()));
        }
        let channels = header
            .iter()
            .skip(2)
            .map(|h| {
                let (c, u) = h
                    .strip_prefix("ch")
                    .and_then(|s| s.strip_suffix(']'))
                    .and_then(|s| s.split_once('['))
                    .ok_or_else(|| LogError::Schema(format!("unknown column {h:?}")))?;
                let c: u8 = c
                    .parse()
                    .map_err(|_| LogError::Schema(format!("unknown column {h:?}")))?;
                Ok((c, u.to_owned()))
            })
            .collect::<Result<Vec<_>, LogError>>()?;
        let mut ledger = TruthLedger::new(channels);
        for rec in records {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| LogError::Malformed { line, message };
            if rec.len() != 2 + ledger.channels.len() {
                return Err(bad(format!("expected {} fields", 2 + ledger.channels.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
            let t_s = num(&rec[0])?;
            let seq = rec[1].parse().map_err(|_| bad(format!("bad seq {:?}", &rec[1])))?;
            let values = rec.iter().skip(2).map(num).collect::<Result<_, _>>()?;
            ledger.rows.push(TruthRow { seq, t_s, values });
        }
        Ok(ledger)
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self, LogError> {
        Self::read_csv(File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::RawFrame;

    fn maps() -> [Option<LinearMap>; CHANNELS] {
        let mut m: [Option<LinearMap>; CHANNELS] = Default::default();
        m[0] = Some(LinearMap::temperature());
        m[1] = Some(LinearMap::humidity());
        m
    }

    fn record(seq: u8, counts: [u16; 8], enabled: &[u8]) -> SampleRecord {
        let f = RawFrame::from_raw(u32::from(seq), &counts).unwrap();
        SampleRecord::from_frame(&f, Timestamp(1_767_225_600_000 + i64::from(seq)), &maps(), enabled)
    }

    fn policy() -> LogPolicy {
        LogPolicy::new(".")
    }

    fn render(schema: &LogSchema, records: &[SampleRecord]) -> String {
        let mut out = Vec::new();
        write_log(&mut out, schema, records, &policy()).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn temperature_row_layout() {
        let schema = LogSchema::new(&[0], &maps());
        let text = render(&schema, &[record(0, [512, 0, 0, 0, 0, 0, 0, 0], &[0])]);
        assert_eq!(
            text,
            "timestamp,seq,ch0_counts,ch0_volts,ch0_value[°C],ch0_flag\n\
             2026-01-01T00:00:00.000Z,0,512,2.5024,25.024,ok\n"
        );
    }

    #[test]
    fn empty_log_is_header_only() {
        let schema = LogSchema::new(&[0, 2], &maps());
        let text = render(&schema, &[]);
        assert_eq!(
            text,
            "timestamp,seq,ch0_counts,ch0_volts,ch0_value[°C],ch0_flag,\
             ch2_counts,ch2_volts,ch2_value[],ch2_flag\n"
        );
        let parsed = read_log(text.as_bytes()).unwrap();
        assert!(parsed.rows.is_empty());
        assert_eq!(parsed.schema, schema);
    }

    #[test]
    fn unmapped_channels_have_empty_value_fields() {
        let schema = LogSchema::new(&[3], &maps());
        let text = render(&schema, &[record(9, [0, 0, 0, 1023, 0, 0, 0, 0], &[3])]);
        assert!(text.ends_with(",9,1023,5.0000,,\n"), "{text}");
        let parsed = read_log(text.as_bytes()).unwrap();
        assert_eq!(parsed.rows[0].cells[0].value, None);
    }

    #[test]
    fn round_trip_and_newline_tolerance() {
        let schema = LogSchema::new(&[0, 1], &maps());
        let recs: Vec<_> = (0..20)
            .map(|i| record(i, [i as u16 * 50, 1023 - i as u16 * 40, 0, 0, 0, 0, 0, 0], &[0, 1]))
            .collect();
        let text = render(&schema, &recs);
        let expected: Vec<_> = recs
            .iter()
            .map(|r| LogRow::from_record(r, &schema, &policy()))
            .collect();
        assert_eq!(read_log(text.as_bytes()).unwrap().rows, expected);
        let crlf = text.replace('\n', "\r\n");
        assert_eq!(read_log(crlf.as_bytes()).unwrap().rows, expected);
        let trailing = format!("{text}\n\n");
        assert_eq!(read_log(trailing.as_bytes()).unwrap().rows, expected);
    }

    #[test]
    fn truncated_last_line_is_reported() {
        let schema = LogSchema::new(&[0], &maps());
        let recs: Vec<_> = (0..3).map(|i| record(i, [100; 8], &[0])).collect();
        let text = render(&schema, &recs);
        let cut = &text[..text.len() - 4];
        match read_log(cut.as_bytes()) {
            Err(LogError::Truncated { line }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rows_cite_their_line() {
        let schema = LogSchema::new(&[0], &maps());
        let recs: Vec<_> = (0..3).map(|i| record(i, [100; 8], &[0])).collect();
        let text = render(&schema, &recs).replacen(",100,", ",1100,", 2);
        // Rows on lines 2 and 3 are both corrupted; the first one is reported.
        match read_log(text.as_bytes()) {
            Err(LogError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let text = render(&schema, &recs).replace(",ok", ",fine");
        assert!(matches!(read_log(text.as_bytes()), Err(LogError::Malformed { line: 2, .. })));
    }

    #[test]
    fn unknown_header_is_a_schema_error() {
        assert!(matches!(read_log("time,seq\n".as_bytes()), Err(LogError::Schema(_))));
        assert!(matches!(
            read_log("timestamp,seq,ch9_counts,ch9_volts,ch9_value[],ch9_flag\n".as_bytes()),
            Err(LogError::Schema(_))
        ));
        assert!(matches!(
            read_log("timestamp,seq,ch0_counts,ch0_volts\n".as_bytes()),
            Err(LogError::Schema(_))
        ));
    }

    #[test]
    fn precision_floor_is_enforced() {
        let p = LogPolicy {
            value_precision: 2,
            ..policy()
        };
        assert!(matches!(p.validate(), Err(LogError::Policy(_))));
    }

    #[test]
    fn logger_rotates_on_selection_change_and_flushes_whole_rows() {
        let dir = tempfile::tempdir().unwrap();
        let policy = LogPolicy {
            flush_interval: 4,
            ..LogPolicy::new(dir.path())
        };
        let started = chrono::DateTime::from_timestamp(1_767_225_600, 0).unwrap();
        let mut logger = CsvLogger::create(policy, maps(), &[0], started).unwrap();
        for i in 0..6 {
            logger.write(&record(i, [10; 8], &[0])).unwrap();
        }
        // Rows 4 and 5 are still buffered; simulate a crash by reading now.
        let first = logger.files()[0].clone();
        assert_eq!(read_log_file(&first).unwrap().rows.len(), 4);
        logger.write(&record(6, [10; 8], &[0, 1])).unwrap();
        logger.close().unwrap();
        assert_eq!(logger.files().len(), 2);
        assert_eq!(read_log_file(&first).unwrap().rows.len(), 6);
        let second = read_log_file(&logger.files()[1]).unwrap();
        assert_eq!(second.schema.channel_ids(), vec![0, 1]);
        assert_eq!(second.rows.len(), 1);
        assert!(first.ends_with("das_20260101_000000.csv"));
        assert!(logger.files()[1].ends_with("das_20260101_000000_part1.csv"));
    }

    #[test]
    fn truth_csv_round_trip_is_exact() {
        let mut ledger = TruthLedger::new(vec![(0, "°C".into()), (1, "%RH".into())]);
        ledger.push(0, 0.0, vec![0.1, 50.0]);
        ledger.push(1, 1.0, vec![1.0 / 3.0, 50.0 + 20.0 * 0.7f64.sin()]);
        let mut out = Vec::new();
        ledger.write_csv(&mut out).unwrap();
        assert!(String::from_utf8_lossy(&out).starts_with("t_s,seq,ch0[°C],ch1[%RH]\n"));
        assert_eq!(TruthLedger::read_csv(out.as_slice()).unwrap(), ledger);
        assert_eq!(ledger.channel_points(1).unwrap()[0], (0.0, 50.0));
    }
}
