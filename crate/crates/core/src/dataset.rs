//! The profiling table exchanged between the simulator, the screening step
//! and the regressor, plus its CSV form.
//!
//! Columns: `seed`, the eight parameter symbols in config-space order, then
//! the measured outputs. Floats are written in shortest round-trip
//! scientific notation so a read-back dataset is bit-identical.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::Param;
use crate::sim::ExperimentResult;

pub const RESPONSE: &str = "avg_residual_energy";

const OUTPUT_COLUMNS: [&str; 6] = [
    RESPONSE,
    "received_packets",
    "generated_events",
    "detected_events",
    "dropped",
    "performance_ok",
];

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub seed: u64,
    /// One value per sampled parameter, config-space order.
    pub params: Vec<f64>,
    pub avg_residual_energy: f64,
    pub received_packets: u64,
    pub generated_events: u64,
    pub detected_events: u64,
    pub dropped: u64,
    pub performance_ok: bool,
}

impl From<&ExperimentResult> for DatasetRow {
    fn from(r: &ExperimentResult) -> Self {
        DatasetRow {
            seed: r.seed,
            params: r.config.values.clone(),
            avg_residual_energy: r.avg_residual_energy,
            received_packets: r.received_data_packets,
            generated_events: r.generated_events,
            detected_events: r.detected_events,
            dropped: r.dropped_packets,
            performance_ok: r.performance_ok,
        }
    }
}

/// M experiments: parameter values plus the residual-energy response.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
}

/// A labelled column of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

pub fn header() -> Vec<&'static str> {
    let mut h = vec!["seed"];
    h.extend(Param::ALL.iter().map(|p| p.symbol()));
    h.extend(OUTPUT_COLUMNS);
    h
}

impl Dataset {
    /// Rows are ordered by seed whatever the completion order of the runs.
    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a ExperimentResult>) -> Self {
        let mut rows: Vec<DatasetRow> = results.into_iter().map(DatasetRow::from).collect();
        rows.sort_by_key(|r| r.seed);
        Dataset { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.seed).collect()
    }

    pub fn response(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.avg_residual_energy).collect()
    }

    /// Parameter column by name or symbol, or one of the numeric outputs.
    pub fn column(&self, key: &str) -> Result<Vec<f64>, DatasetError> {
        if let Some(p) = Param::lookup(key) {
            return Ok(self.rows.iter().map(|r| r.params[p.index()]).collect());
        }
        let pick: fn(&DatasetRow) -> f64 = match key {
            RESPONSE => |r| r.avg_residual_energy,
            "received_packets" => |r| r.received_packets as f64,
            "generated_events" => |r| r.generated_events as f64,
            "detected_events" => |r| r.detected_events as f64,
            "dropped" => |r| r.dropped as f64,
            _ => return Err(DatasetError::UnknownColumn(key.to_string())),
        };
        Ok(self.rows.iter().map(pick).collect())
    }

    pub fn series(&self, key: &str) -> Result<Series, DatasetError> {
        Ok(Series {
            label: key.to_string(),
            values: self.column(key)?,
        })
    }

    pub fn performance_filtered(&self) -> Dataset {
        Dataset {
            rows: self.rows.iter().filter(|r| r.performance_ok).cloned().collect(),
        }
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header())?;
        for r in &self.rows {
            let mut rec: Vec<String> = Vec::with_capacity(16);
            rec.push(r.seed.to_string());
            rec.extend(r.params.iter().map(|v| format!("{v:e}")));
            rec.push(format!("{:e}", r.avg_residual_energy));
            rec.push(r.received_packets.to_string());
            rec.push(r.generated_events.to_string());
            rec.push(r.detected_events.to_string());
            rec.push(r.dropped.to_string());
            rec.push(r.performance_ok.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf).expect("in-memory csv write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Dataset, DatasetError> {
        let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Dataset::read_csv_from(file)
    }

    pub fn read_csv_from<R: Read>(input: R) -> Result<Dataset, DatasetError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let parse_err = |line: u64, message: String| DatasetError::Parse { line, message };
        let found = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let expected = header();
        if found.iter().ne(expected.iter().copied()) {
            return Err(parse_err(
                1,
                format!("header mismatch: expected `{}`", expected.join(",")),
            ));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize| record.get(i).unwrap_or_default();
            let float = |i: usize| -> Result<f64, DatasetError> {
                let v: f64 = field(i).parse().map_err(|_| {
                    parse_err(
                        line,
                        format!("column `{}`: `{}` is not a number", expected[i], field(i)),
                    )
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(line, format!("column `{}`: non-finite value", expected[i])))
                }
            };
            let int = |i: usize| -> Result<u64, DatasetError> {
                field(i)
                    .parse()
                    .map_err(|_| parse_err(line, format!("column `{}`: `{}` is not a count", expected[i], field(i))))
            };
            let np = Param::ALL.len();
            let params = (1..=np).map(float).collect::<Result<Vec<_>, _>>()?;
            let flag = field(np + 6);
            let performance_ok = match flag {
                "true" => true,
                "false" => false,
                other => {
                    return Err(parse_err(
                        line,
                        format!("column `performance_ok`: `{other}` is not a boolean"),
                    ))
                }
            };
            rows.push(DatasetRow {
                seed: int(0)?,
                params,
                avg_residual_energy: float(np + 1)?,
                received_packets: int(np + 2)?,
                generated_events: int(np + 3)?,
                detected_events: int(np + 4)?,
                dropped: int(np + 5)?,
                performance_ok,
            });
        }
        Ok(Dataset { rows })
    }

    /// Hex SHA-256 of the CSV serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }
}
