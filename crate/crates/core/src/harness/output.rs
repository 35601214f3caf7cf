use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{SweepRow, TraceEvent, TraceRecord};
use crate::subflow::Phase;

pub const TRACE_CSV_HEADER: [&str; 6] = ["time_s", "subflow", "cwnd_mss", "ssthresh_mss", "phase", "event"];

pub const SWEEP_CSV_HEADER: [&str; 10] = [
    "param_value",
    "completion_time_s",
    "goodput_bps",
    "bytes_sf1",
    "bytes_sf2",
    "retx_sf1",
    "retx_sf2",
    "fast_retx",
    "rtos",
    "spurious_detections",
];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("nothing to plot: the trace is empty")]
    EmptyTrace,
}

#[derive(Debug, Error)]
pub enum TraceCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {found:?}")]
    Header { found: Vec<String> },
    #[error("row {row}: column `{column}`: cannot parse {value:?}")]
    Field {
        row: usize,
        column: &'static str,
        value: String,
    },
}

/// Formats with six significant digits and no trimming, so output is stable
/// across platforms and runs.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000".to_string();
    }
    // The exponent of the already-rounded value decides the decimals.
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("exponent");
    if exp > 5 {
        let rounded: f64 = sci.parse().expect("round trip");
        format!("{rounded:.0}")
    } else {
        format!("{x:.*}", (5 - exp) as usize)
    }
}

/// Header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn from_trace(records: &[TraceRecord]) -> Self {
        CsvTable {
            header: TRACE_CSV_HEADER.iter().map(|s| s.to_string()).collect(),
            rows: records
                .iter()
                .map(|r| {
                    vec![
                        format_sig6(r.time),
                        r.subflow.to_string(),
                        format_sig6(r.cwnd),
                        format_sig6(r.ssthresh),
                        r.phase.to_string(),
                        r.event.to_string(),
                    ]
                })
                .collect(),
        }
    }

    /// Failed points keep their value and leave the other cells empty.
    pub fn from_sweep(rows: &[SweepRow]) -> Self {
        CsvTable {
            header: SWEEP_CSV_HEADER.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|row| {
                    let mut cells = vec![format_sig6(row.value)];
                    match &row.result {
                        Ok(s) => {
                            let sf = |i: usize| s.subflows.get(i).cloned().unwrap_or_default();
                            cells.push(s.completion_time.map(format_sig6).unwrap_or_default());
                            cells.push(format_sig6(s.goodput));
                            cells.push(sf(0).bytes.to_string());
                            cells.push(sf(1).bytes.to_string());
                            cells.push(sf(0).retransmissions.to_string());
                            cells.push(sf(1).retransmissions.to_string());
                            cells.push(s.fast_retransmits().to_string());
                            cells.push(s.rtos().to_string());
                            cells.push(s.spurious_detections().to_string());
                        }
                        Err(_) => cells.resize(SWEEP_CSV_HEADER.len(), String::new()),
                    }
                    cells
                })
                .collect(),
        }
    }

    pub fn write_to<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("cells are UTF-8")
    }
}

pub fn emit_csv(table: &CsvTable, path: impl AsRef<Path>) -> Result<(), OutputError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    table.write_to(io::BufWriter::new(file)).map_err(|source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_trace_csv(records: &[TraceRecord], path: impl AsRef<Path>) -> Result<(), OutputError> {
    emit_csv(&CsvTable::from_trace(records), path)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<(), OutputError> {
    emit_csv(&CsvTable::from_sweep(rows), path)
}

/// Reads a trace CSV back into records.
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>, TraceCsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers()?;
    if header.iter().ne(TRACE_CSV_HEADER.iter().copied()) {
        return Err(TraceCsvError::Header {
            found: header.iter().map(str::to_string).collect(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let cell = |idx: usize| rec.get(idx).unwrap_or("");
        let field = |idx: usize| TraceCsvError::Field {
            row,
            column: TRACE_CSV_HEADER[idx],
            value: cell(idx).to_string(),
        };
        let num = |idx: usize| -> Result<f64, TraceCsvError> {
            cell(idx).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| field(idx))
        };
        out.push(TraceRecord {
            time: num(0)?,
            subflow: cell(1).parse().map_err(|_| field(1))?,
            cwnd: num(2)?,
            ssthresh: num(3)?,
            phase: cell(4).parse::<Phase>().map_err(|_| field(4))?,
            event: cell(5).parse::<TraceEvent>().map_err(|_| field(5))?,
        });
    }
    Ok(out)
}
