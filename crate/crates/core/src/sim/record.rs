use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// An order was submitted.
    Order,
    /// An execution; continuous trades carry the aggressor's agent id and
    /// side, auction trades carry neither.
    Trade,
    /// A call auction cleared; `signed_volume` is the total executed volume.
    Auction,
    /// The selected agent placed nothing because its provider failed.
    Skip,
    /// End-of-step market state.
    Snapshot,
}

/// One row of the tick stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub step: u64,
    pub day: u64,
    pub event: EventKind,
    pub agent_id: Option<usize>,
    pub price: f64,
    pub signed_volume: i64,
    pub market_price: f64,
    pub mid_price: f64,
    pub ofi: f64,
}

pub const CSV_HEADER: [&str; 9] = [
    "step",
    "day",
    "event",
    "agent_id",
    "price",
    "signed_volume",
    "market_price",
    "mid_price",
    "ofi",
];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing or unexpected header: {0}")]
    Header(String),
    #[error("steps go backwards at row {0}")]
    Unordered(usize),
}

pub fn write_csv<W: Write>(records: &[TickRecord], out: W) -> Result<(), RecordError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<TickRecord>, RecordError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(RecordError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let records = r.deserialize().collect::<Result<Vec<TickRecord>, _>>()?;
    check_order(&records)?;
    Ok(records)
}

pub fn write_jsonl<W: Write>(records: &[TickRecord], mut out: W) -> Result<(), RecordError> {
    let header = serde_json::json!({ "columns": CSV_HEADER });
    writeln!(out, "{header}")?;
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|source| RecordError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<TickRecord>, RecordError> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| RecordError::Header("empty file".into()))??;
    let header: serde_json::Value =
        serde_json::from_str(&first).map_err(|source| RecordError::Json { line: 1, source })?;
    let expected = serde_json::json!({ "columns": CSV_HEADER });
    if header != expected {
        return Err(RecordError::Header(first));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| RecordError::Json { line: i + 2, source })?;
        records.push(rec);
    }
    check_order(&records)?;
    Ok(records)
}

fn check_order(records: &[TickRecord]) -> Result<(), RecordError> {
    match records.windows(2).position(|w| w[1].step < w[0].step) {
        Some(i) => Err(RecordError::Unordered(i + 1)),
        None => Ok(()),
    }
}
