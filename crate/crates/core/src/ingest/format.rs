//! Line-oriented sensor log.
//!
//! ```text
//! # slamlog v1 stationary_until=5 max_range=80 x0=0 y0=0 theta0=0
//! S <t> <v>
//! G <t> <wx> <wy> <wz>
//! L <t> <r0> ... <r360>
//! O <t> <id> <range|-> <bearing|->
//! ```
//!
//! Only `stationary_until` is required in the header. `O` lines carry
//! simulated observations with known landmark identity; `-` marks a
//! component the sensor did not report.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::models::Pose;
use crate::perception::{LaserScan, BEAM_COUNT};

pub const HEADER_MAGIC: &str = "# slamlog v1";
pub const DEFAULT_MAX_RANGE: f64 = 80.0;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
}

impl ParseError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ParseError::Malformed {
            line,
            message: message.into(),
        }
    }

    /// 1-based line number of a format error.
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Malformed { line, .. } => Some(*line),
            ParseError::Io(_) => None,
        }
    }
}

/// A simulated range/bearing sighting of an identified landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkSighting {
    pub id: u64,
    pub range: Option<f64>,
    pub bearing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorPayload {
    Speed(f64),
    /// Angular rate about x, y, z in rad/s.
    Gyro([f64; 3]),
    Scan(LaserScan),
    Landmark(LandmarkSighting),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord {
    pub timestamp: f64,
    pub payload: SensorPayload,
}

impl SensorRecord {
    pub fn speed(timestamp: f64, v: f64) -> Self {
        Self {
            timestamp,
            payload: SensorPayload::Speed(v),
        }
    }

    pub fn gyro(timestamp: f64, rates: [f64; 3]) -> Self {
        Self {
            timestamp,
            payload: SensorPayload::Gyro(rates),
        }
    }

    pub fn scan(scan: LaserScan) -> Self {
        Self {
            timestamp: scan.timestamp,
            payload: SensorPayload::Scan(scan),
        }
    }

    pub fn landmark(timestamp: f64, sighting: LandmarkSighting) -> Self {
        Self {
            timestamp,
            payload: SensorPayload::Landmark(sighting),
        }
    }

    pub fn is_control(&self) -> bool {
        matches!(self.payload, SensorPayload::Speed(_) | SensorPayload::Gyro(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogHeader {
    /// The robot is declared stationary until this time.
    pub stationary_until: f64,
    pub max_range: f64,
    pub initial_pose: Pose,
}

impl Default for LogHeader {
    fn default() -> Self {
        Self {
            stationary_until: 0.0,
            max_range: DEFAULT_MAX_RANGE,
            initial_pose: Pose::origin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorLog {
    pub header: LogHeader,
    /// Sorted by timestamp; ties keep file order.
    pub records: Vec<SensorRecord>,
}

impl SensorLog {
    pub fn new(header: LogHeader, mut records: Vec<SensorRecord>) -> Self {
        sort_records(&mut records);
        Self { header, records }
    }
}

pub fn sort_records(records: &mut [SensorRecord]) {
    records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
}

fn number(tok: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| ParseError::at(line, format!("invalid {what} `{tok}`")))?;
    if !v.is_finite() {
        return Err(ParseError::at(line, format!("non-finite {what} `{tok}`")));
    }
    Ok(v)
}

fn optional(tok: &str, line: usize, what: &str) -> Result<Option<f64>, ParseError> {
    if tok == "-" {
        Ok(None)
    } else {
        number(tok, line, what).map(Some)
    }
}

fn parse_header(text: &str, line: usize) -> Result<LogHeader, ParseError> {
    let rest = text
        .strip_prefix(HEADER_MAGIC)
        .ok_or_else(|| ParseError::at(line, format!("expected header `{HEADER_MAGIC} ...`")))?;
    let mut header = LogHeader::default();
    let mut seen_stationary = false;
    let (mut x0, mut y0, mut theta0) = (0.0, 0.0, 0.0);
    for kv in rest.split_whitespace() {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| ParseError::at(line, format!("header field `{kv}` is not key=value")))?;
        let v = number(value, line, key)?;
        match key {
            "stationary_until" => {
                header.stationary_until = v;
                seen_stationary = true;
            }
            "max_range" if v > 0.0 => header.max_range = v,
            "max_range" => return Err(ParseError::at(line, "max_range must be positive")),
            "x0" => x0 = v,
            "y0" => y0 = v,
            "theta0" => theta0 = v,
            other => return Err(ParseError::at(line, format!("unknown header field `{other}`"))),
        }
    }
    if !seen_stationary {
        return Err(ParseError::at(line, "header is missing stationary_until"));
    }
    header.initial_pose = Pose::new(x0, y0, theta0);
    Ok(header)
}

fn parse_record(text: &str, line: usize, max_range: f64) -> Result<SensorRecord, ParseError> {
    let mut toks = text.split_whitespace();
    let kind = toks.next().unwrap_or_default();
    let fields: Vec<&str> = toks.collect();
    let arity = |n: usize| {
        if fields.len() == n {
            Ok(())
        } else {
            Err(ParseError::at(
                line,
                format!("`{kind}` record needs {n} fields, got {}", fields.len()),
            ))
        }
    };
    let t = |fields: &[&str]| number(fields[0], line, "timestamp");
    match kind {
        "S" => {
            arity(2)?;
            Ok(SensorRecord::speed(t(&fields)?, number(fields[1], line, "speed")?))
        }
        "G" => {
            arity(4)?;
            let mut w = [0.0; 3];
            for (k, f) in fields[1..].iter().enumerate() {
                w[k] = number(f, line, "angular rate")?;
            }
            Ok(SensorRecord::gyro(t(&fields)?, w))
        }
        "L" => {
            arity(1 + BEAM_COUNT)?;
            let ranges = fields[1..]
                .iter()
                .map(|f| number(f, line, "range"))
                .collect::<Result<Vec<_>, _>>()?;
            let scan = LaserScan::new(t(&fields)?, ranges, max_range)
                .map_err(|e| ParseError::at(line, e.to_string()))?;
            Ok(SensorRecord::scan(scan))
        }
        "O" => {
            arity(4)?;
            let id: u64 = fields[1]
                .parse()
                .map_err(|_| ParseError::at(line, format!("invalid landmark id `{}`", fields[1])))?;
            let range = optional(fields[2], line, "range")?;
            let bearing = optional(fields[3], line, "bearing")?;
            if range.is_some_and(|r| r <= 0.0) {
                return Err(ParseError::at(line, "observed range must be positive"));
            }
            Ok(SensorRecord::landmark(
                t(&fields)?,
                LandmarkSighting { id, range, bearing },
            ))
        }
        other => Err(ParseError::at(line, format!("unknown record type `{other}`"))),
    }
}

/// Reads a log, returning its records ordered by timestamp.
pub fn parse_log<R: BufRead>(reader: R) -> Result<SensorLog, ParseError> {
    let mut header: Option<LogHeader> = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match header {
            None => header = Some(parse_header(text, line_no)?),
            Some(h) => {
                if text.starts_with('#') {
                    continue;
                }
                records.push(parse_record(text, line_no, h.max_range)?);
            }
        }
    }
    Ok(SensorLog::new(header.unwrap_or_default(), records))
}

pub fn parse_log_str(text: &str) -> Result<SensorLog, ParseError> {
    parse_log(text.as_bytes())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

/// Formats one record as a log line without the terminator.
pub fn format_record(rec: &SensorRecord) -> String {
    let t = rec.timestamp;
    match &rec.payload {
        SensorPayload::Speed(v) => format!("S {t} {v}"),
        SensorPayload::Gyro([wx, wy, wz]) => format!("G {t} {wx} {wy} {wz}"),
        SensorPayload::Scan(scan) => {
            let mut s = format!("L {t}");
            for r in scan.ranges() {
                let _ = write!(s, " {r}");
            }
            s
        }
        SensorPayload::Landmark(o) => {
            format!("O {t} {} {} {}", o.id, opt(o.range), opt(o.bearing))
        }
    }
}

pub fn format_header(h: &LogHeader) -> String {
    let p = h.initial_pose;
    format!(
        "{HEADER_MAGIC} stationary_until={} max_range={} x0={} y0={} theta0={}",
        h.stationary_until, h.max_range, p.x, p.y, p.theta
    )
}

pub fn write_log<W: Write>(log: &SensorLog, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", format_header(&log.header))?;
    for rec in &log.records {
        writeln!(out, "{}", format_record(rec))?;
    }
    Ok(())
}

pub fn log_to_string(log: &SensorLog) -> String {
    let mut buf = Vec::new();
    write_log(log, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("log output is ASCII")
}
