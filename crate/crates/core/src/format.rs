//! Text formats for detection logs, edge lists and detection matrices.
//!
//! All three are comma-separated with a mandatory header row. Leading lines
//! starting with `#` carry metadata (logs) or a human-readable rendering
//! (matrices) and are skipped by CSV readers that honor `#` comments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::engine::{matrix_label, DetectionLog, DetectionMatrix, REFERENCE_MATRIX};
use crate::time::SimTime;
use crate::types::{Detection, MacAddress, SocialGraph, StableId};

pub const LOG_HEADER: [&str; 5] = ["t_us", "scanner_id", "observed_mac", "service_confirmed", "resolved_id"];
pub const GRAPH_HEADER: [&str; 3] = ["id_a", "id_b", "weight_seconds"];
pub const MATRIX_HEADER: [&str; 5] = ["row", "column", "result", "row_saw_col", "col_saw_row"];

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
}

impl FormatError {
    fn at(line: u64, reason: impl Into<String>) -> Self {
        FormatError::Malformed {
            line,
            reason: reason.into(),
        }
    }
}

impl From<csv::Error> for FormatError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => FormatError::Io(io),
            other => FormatError::at(line, format!("{other:?}")),
        }
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Reads the header row and checks it against `expected`.
fn expect_header<R: Read>(records: &mut csv::StringRecordsIter<'_, R>, expected: &[&str]) -> Result<(), FormatError> {
    match records.next() {
        None => Err(FormatError::at(1, format!("missing header row {}", expected.join(",")))),
        Some(rec) => {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let got: Vec<&str> = rec.iter().collect();
            if got != expected {
                return Err(FormatError::at(
                    line,
                    format!("expected header {}, got {}", expected.join(","), got.join(",")),
                ));
            }
            Ok(())
        }
    }
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, name: &str, line: u64) -> Result<&'a str, FormatError> {
    rec.get(i).ok_or_else(|| FormatError::at(line, format!("missing column {name}")))
}

pub fn write_log<W: Write>(log: &DetectionLog, mut w: W) -> Result<(), FormatError> {
    writeln!(w, "# seed={}", log.seed)?;
    writeln!(w, "# duration_us={}", log.duration.as_micros())?;
    let mut out = csv_writer(w);
    out.write_record(LOG_HEADER)?;
    for d in &log.detections {
        out.write_record([
            d.timestamp.as_micros().to_string(),
            d.scanner.to_string(),
            d.observed_mac.to_string(),
            d.service_confirmed().to_string(),
            d.resolved_id().map(|id| id.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn log_to_string(log: &DetectionLog) -> String {
    let mut buf = Vec::new();
    write_log(log, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("log text is ASCII")
}

fn parse_bool(text: &str, line: u64) -> Result<bool, FormatError> {
    match text {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(FormatError::at(line, format!("service_confirmed {other:?} is not a boolean"))),
    }
}

/// Parses a detection log. Missing metadata falls back to seed 0 and a
/// duration just past the last detection.
pub fn read_log<R: Read>(r: R) -> Result<DetectionLog, FormatError> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;

    let mut seed = None;
    let mut duration = None;
    for (n, line) in text.lines().enumerate() {
        let Some(meta) = line.trim().strip_prefix('#') else { break };
        let lineno = n as u64 + 1;
        if let Some((key, value)) = meta.trim().split_once('=') {
            let value = value.trim();
            match key.trim() {
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| FormatError::at(lineno, "bad seed"))?),
                "duration_us" => {
                    duration = Some(SimTime::from_micros(
                        value.parse::<u64>().map_err(|_| FormatError::at(lineno, "bad duration_us"))?,
                    ))
                }
                _ => {}
            }
        }
    }

    let mut reader = csv_reader(text.as_bytes());
    let mut records = reader.records();
    expect_header(&mut records, &LOG_HEADER)?;
    let mut detections = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != LOG_HEADER.len() {
            return Err(FormatError::at(line, format!("expected {} columns, got {}", LOG_HEADER.len(), rec.len())));
        }
        let t = field(&rec, 0, "t_us", line)?
            .parse::<u64>()
            .map_err(|_| FormatError::at(line, "t_us is not a non-negative integer"))?;
        let scanner: StableId = field(&rec, 1, "scanner_id", line)?
            .parse()
            .map_err(|e| FormatError::at(line, format!("{e}")))?;
        let mac: MacAddress = field(&rec, 2, "observed_mac", line)?
            .parse()
            .map_err(|e| FormatError::at(line, format!("{e}")))?;
        let confirmed = parse_bool(field(&rec, 3, "service_confirmed", line)?, line)?;
        let resolved = match field(&rec, 4, "resolved_id", line)? {
            "" => None,
            text => Some(text.parse::<StableId>().map_err(|e| FormatError::at(line, format!("{e}")))?),
        };
        let det = Detection::new(SimTime::from_micros(t), scanner, mac, confirmed, resolved)
            .map_err(|e| FormatError::at(line, e.to_string()))?;
        detections.push(det);
    }
    let duration = duration.unwrap_or_else(|| {
        detections
            .iter()
            .map(|d| d.timestamp + SimTime::from_micros(1))
            .max()
            .unwrap_or(SimTime::ZERO)
    });
    Ok(DetectionLog::new(seed.unwrap_or(0), duration, detections))
}

/// Writes the edge list sorted by canonical pair.
pub fn write_graph<W: Write>(graph: &SocialGraph, w: W) -> Result<(), FormatError> {
    let mut out = csv_writer(w);
    out.write_record(GRAPH_HEADER)?;
    for (&(a, b), weight) in graph.edges() {
        out.write_record([a.to_string(), b.to_string(), weight.secs_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn graph_to_string(graph: &SocialGraph) -> String {
    let mut buf = Vec::new();
    write_graph(graph, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("graph text is ASCII")
}

pub fn read_graph<R: Read>(r: R) -> Result<SocialGraph, FormatError> {
    let mut reader = csv_reader(r);
    let mut records = reader.records();
    expect_header(&mut records, &GRAPH_HEADER)?;
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeMap::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse_id = |i, name| -> Result<StableId, FormatError> {
            field(&rec, i, name, line)?
                .parse()
                .map_err(|e| FormatError::at(line, format!("{e}")))
        };
        let a = parse_id(0, "id_a")?;
        let b = parse_id(1, "id_b")?;
        let w = SimTime::parse_secs(field(&rec, 2, "weight_seconds", line)?)
            .map_err(|e| FormatError::at(line, e.to_string()))?;
        nodes.insert(a);
        nodes.insert(b);
        if edges.insert((a, b), w).is_some() {
            return Err(FormatError::at(line, format!("duplicate edge ({a}, {b})")));
        }
    }
    SocialGraph::new(nodes, edges).map_err(|e| FormatError::at(0, e.to_string()))
}

/// Human-readable 6x6 table.
pub fn matrix_text(m: &DetectionMatrix) -> String {
    let labels: Vec<String> = (0..6).map(matrix_label).collect();
    let width = labels.iter().map(String::len).max().unwrap_or(0) + 2;
    let mut s = String::new();
    let _ = write!(s, "{:width$}", "");
    for l in &labels {
        let _ = write!(s, "{l:>width$}");
    }
    s.push('\n');
    let passes = m.passes();
    for (r, row) in passes.iter().enumerate() {
        let _ = write!(s, "{:width$}", labels[r]);
        for &pass in row {
            let _ = write!(s, "{:>width$}", if pass { "Pass" } else { "Fail" });
        }
        s.push('\n');
    }
    let fails = 36 - m.pass_count();
    let _ = writeln!(s, "{} Pass / {} Fail", m.pass_count(), fails);
    s
}

/// Machine-readable rows preceded by the human table as `#` comments.
pub fn write_matrix<W: Write>(m: &DetectionMatrix, mut w: W) -> Result<(), FormatError> {
    for line in matrix_text(m).lines() {
        writeln!(w, "# {line}")?;
    }
    let mut out = csv_writer(w);
    out.write_record(MATRIX_HEADER)?;
    for r in 0..6 {
        for c in 0..6 {
            let cell = m.cells[r][c];
            out.write_record([
                matrix_label(r),
                matrix_label(c),
                if cell.pass() { "Pass".to_string() } else { "Fail".to_string() },
                cell.row_saw_col.to_string(),
                cell.col_saw_row.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads back the Pass/Fail grid written by [`write_matrix`].
pub fn read_matrix_passes<R: Read>(r: R) -> Result<[[bool; 6]; 6], FormatError> {
    let labels: Vec<String> = (0..6).map(matrix_label).collect();
    let mut reader = csv_reader(r);
    let mut records = reader.records();
    expect_header(&mut records, &MATRIX_HEADER)?;
    let mut out = [[None; 6]; 6];
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let index = |i, name| -> Result<usize, FormatError> {
            let text = field(&rec, i, name, line)?;
            labels
                .iter()
                .position(|l| l == text)
                .ok_or_else(|| FormatError::at(line, format!("unknown label {text:?}")))
        };
        let (r, c) = (index(0, "row")?, index(1, "column")?);
        let pass = match field(&rec, 2, "result", line)? {
            "Pass" => true,
            "Fail" => false,
            other => return Err(FormatError::at(line, format!("result {other:?} is not Pass/Fail"))),
        };
        out[r][c] = Some(pass);
    }
    let mut grid = REFERENCE_MATRIX;
    for r in 0..6 {
        for c in 0..6 {
            grid[r][c] = out[r][c].ok_or_else(|| FormatError::at(0, format!("missing cell {r},{c}")))?;
        }
    }
    Ok(grid)
}
