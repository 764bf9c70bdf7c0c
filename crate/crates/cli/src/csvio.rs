//! Reading and writing repeated-measures data as CSV.
//!
//! The wide layout has one row per subject: `group,subject,<time>...`.
//! The long layout has one row per measurement: `group,subject,time,value`.

use std::collections::HashMap;

use csv::{ReaderBuilder, StringRecord, Trim};
use rmpower_core::rmanova::{validate_dataset, GroupBlock, RMDataset};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CsvError {
    #[error("no data rows")]
    NoDataRows,

    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("line {line}: duplicate entry for group '{group}', subject '{subject}' (first seen on line {first})")]
    Duplicate {
        line: u64,
        first: u64,
        group: String,
        subject: String,
    },

    #[error(transparent)]
    Data(#[from] rmpower_core::Error),
}

const LONG_HEADER: [&str; 4] = ["group", "subject", "time", "value"];

fn reader(text: &str) -> csv::Reader<&[u8]> {
    ReaderBuilder::new()
        .flexible(true)
        .trim(Trim::All)
        .from_reader(text.trim_start_matches('\u{feff}').as_bytes())
}

fn header(rdr: &mut csv::Reader<&[u8]>) -> Result<StringRecord, CsvError> {
    let h = rdr.headers().map_err(|e| syntax_from(&e))?.clone();
    if h.is_empty() || (h.len() == 1 && h[0].is_empty()) {
        return Err(CsvError::NoDataRows);
    }
    Ok(h)
}

fn syntax_from(e: &csv::Error) -> CsvError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    CsvError::Syntax {
        line,
        column: 0,
        message: e.to_string(),
    }
}

fn is_long_header(h: &StringRecord) -> bool {
    h.len() == 4 && h.iter().zip(LONG_HEADER).all(|(a, b)| a.eq_ignore_ascii_case(b))
}

/// Parses either layout, picking long when the header is exactly
/// `group,subject,time,value`.
pub fn parse_csv(text: &str) -> Result<RMDataset, CsvError> {
    let mut rdr = reader(text);
    let h = header(&mut rdr)?;
    if is_long_header(&h) {
        parse_long_csv(text)
    } else {
        parse_wide_csv(text)
    }
}

fn parse_value(raw: &str, line: u64, column: usize, time: &str) -> Result<f64, CsvError> {
    let err = |message: String| CsvError::Syntax {
        line,
        column,
        message,
    };
    if raw.is_empty() {
        return Err(err(format!("empty cell for time '{time}'")));
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(err(format!("'{raw}' is not a finite number"))),
    }
}

/// Blocks in order of first appearance, keyed by group label.
#[derive(Default)]
struct Blocks {
    order: Vec<GroupBlock>,
    index: HashMap<String, usize>,
    seen: HashMap<(String, String), u64>,
}

impl Blocks {
    fn block(&mut self, group: &str) -> &mut GroupBlock {
        let k = *self.index.entry(group.to_string()).or_insert_with(|| {
            self.order.push(GroupBlock {
                label: group.to_string(),
                subjects: Vec::new(),
                rows: Vec::new(),
            });
            self.order.len() - 1
        });
        &mut self.order[k]
    }

    fn claim(&mut self, group: &str, subject: &str, line: u64) -> Result<(), CsvError> {
        match self.seen.insert((group.to_string(), subject.to_string()), line) {
            Some(first) => Err(CsvError::Duplicate {
                line,
                first,
                group: group.to_string(),
                subject: subject.to_string(),
            }),
            None => Ok(()),
        }
    }
}

fn check_labels(rec: &StringRecord, line: u64) -> Result<(), CsvError> {
    for (column, name) in [(1, "group"), (2, "subject")] {
        if rec[column - 1].is_empty() {
            return Err(CsvError::Syntax {
                line,
                column,
                message: format!("empty {name} label"),
            });
        }
    }
    Ok(())
}

pub fn parse_wide_csv(text: &str) -> Result<RMDataset, CsvError> {
    let mut rdr = reader(text);
    let h = header(&mut rdr)?;
    for (i, name) in ["group", "subject"].iter().enumerate() {
        if h.get(i).is_none_or(|c| !c.eq_ignore_ascii_case(name)) {
            return Err(CsvError::Syntax {
                line: 1,
                column: i + 1,
                message: format!("header must start with 'group,subject', found '{}'", h.get(i).unwrap_or("")),
            });
        }
    }
    let time_labels: Vec<String> = h.iter().skip(2).map(str::to_string).collect();
    if let Some(j) = time_labels.iter().position(|l| l.is_empty()) {
        return Err(CsvError::Syntax {
            line: 1,
            column: j + 3,
            message: "empty time label".into(),
        });
    }

    let mut blocks = Blocks::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| syntax_from(&e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != h.len() {
            return Err(CsvError::Syntax {
                line,
                column: rec.len().min(h.len()) + 1,
                message: format!("expected {} fields, found {}", h.len(), rec.len()),
            });
        }
        check_labels(&rec, line)?;
        let (group, subject) = (&rec[0], &rec[1]);
        blocks.claim(group, subject, line)?;
        let row = rec
            .iter()
            .skip(2)
            .zip(&time_labels)
            .enumerate()
            .map(|(j, (raw, time))| parse_value(raw, line, j + 3, time))
            .collect::<Result<Vec<f64>, _>>()?;
        let block = blocks.block(group);
        block.subjects.push(subject.to_string());
        block.rows.push(row);
    }
    if blocks.order.is_empty() {
        return Err(CsvError::NoDataRows);
    }
    Ok(validate_dataset(RMDataset {
        time_labels,
        groups: blocks.order,
    })?)
}

/// Long layout. Time points are ordered by first appearance; a subject
/// lacking one of them is reported as a missing cell.
pub fn parse_long_csv(text: &str) -> Result<RMDataset, CsvError> {
    let mut rdr = reader(text);
    let h = header(&mut rdr)?;
    if !is_long_header(&h) {
        return Err(CsvError::Syntax {
            line: 1,
            column: 1,
            message: "long format header must be 'group,subject,time,value'".into(),
        });
    }

    let mut time_labels: Vec<String> = Vec::new();
    let mut time_index: HashMap<String, usize> = HashMap::new();
    let mut blocks = Blocks::default();
    let mut cells: HashMap<(String, String, usize), u64> = HashMap::new();
    // (group, subject) -> (time index, value) pairs
    let mut subject_rows: HashMap<(String, String), Vec<(usize, f64)>> = HashMap::new();

    for rec in rdr.records() {
        let rec = rec.map_err(|e| syntax_from(&e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(CsvError::Syntax {
                line,
                column: rec.len().min(4) + 1,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        check_labels(&rec, line)?;
        let (group, subject, time) = (&rec[0], &rec[1], &rec[2]);
        if time.is_empty() {
            return Err(CsvError::Syntax {
                line,
                column: 3,
                message: "empty time label".into(),
            });
        }
        let value = parse_value(&rec[3], line, 4, time)?;
        let j = *time_index.entry(time.to_string()).or_insert_with(|| {
            time_labels.push(time.to_string());
            time_labels.len() - 1
        });
        let key = (group.to_string(), subject.to_string());
        if let Some(&first) = cells.get(&(key.0.clone(), key.1.clone(), j)) {
            return Err(CsvError::Duplicate {
                line,
                first,
                group: key.0,
                subject: format!("{} at time '{time}'", key.1),
            });
        }
        cells.insert((key.0.clone(), key.1.clone(), j), line);
        let entry = subject_rows.entry(key).or_default();
        if entry.is_empty() {
            let block = blocks.block(group);
            block.subjects.push(subject.to_string());
        }
        entry.push((j, value));
    }
    if blocks.order.is_empty() {
        return Err(CsvError::NoDataRows);
    }

    let t = time_labels.len();
    for block in &mut blocks.order {
        for subject in &block.subjects {
            let mut row = vec![f64::NAN; t];
            for &(j, v) in &subject_rows[&(block.label.clone(), subject.clone())] {
                row[j] = v;
            }
            block.rows.push(row);
        }
    }
    Ok(validate_dataset(RMDataset {
        time_labels,
        groups: blocks.order,
    })?)
}

/// Wide CSV text for a dataset. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn to_wide_csv(data: &RMDataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["group".to_string(), "subject".to_string()];
    header.extend(data.time_labels.iter().cloned());
    w.write_record(&header).expect("write to memory");
    for block in &data.groups {
        for (subject, row) in block.subjects.iter().zip(&block.rows) {
            let mut rec = vec![block.label.clone(), subject.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("write to memory");
        }
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}

/// Long CSV text for a dataset.
pub fn to_long_csv(data: &RMDataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LONG_HEADER).expect("write to memory");
    for block in &data.groups {
        for (subject, row) in block.subjects.iter().zip(&block.rows) {
            for (time, v) in data.time_labels.iter().zip(row) {
                w.write_record([&block.label, subject, time, &v.to_string()])
                    .expect("write to memory");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}
