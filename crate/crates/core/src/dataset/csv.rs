//! The per-subject CSV format: header `ch1,...,ch12,stimulus,repetition`, one row per sample.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Recording, NUM_CHANNELS, NUM_MOVEMENTS, NUM_REPETITIONS};
use crate::error::{Error, Result};

pub fn subject_file_name(subject_id: u32) -> String {
    format!("subject_{subject_id}.csv")
}

fn subject_from_path(path: &Path) -> Result<u32> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    stem.strip_prefix("subject_")
        .and_then(|id| id.parse::<u32>().ok())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            msg: "file name must be subject_<id>.csv".into(),
        })
}

fn expected_header() -> Vec<String> {
    (1..=NUM_CHANNELS)
        .map(|c| format!("ch{c}"))
        .chain(["stimulus".to_string(), "repetition".to_string()])
        .collect()
}

/// Parse one subject file. Row numbers in errors count data rows from 1 (the header is row 0).
pub fn load_csv(path: &Path) -> Result<Recording> {
    let subject_id = subject_from_path(path)?;
    let perr = |row: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let want = expected_header();
    if header != want {
        let missing = want.iter().find(|w| !header.contains(w));
        let msg = match missing {
            Some(col) => format!("missing column {col}"),
            None => format!("header must be {}", want.join(",")),
        };
        return Err(perr(0, msg));
    }

    let mut channels = vec![Vec::new(); NUM_CHANNELS];
    let mut stimulus = Vec::new();
    let mut repetition = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record.position().map_or(0, |p| p.line() as usize - 1);
        if record.len() != NUM_CHANNELS + 2 {
            return Err(perr(row, format!("expected {} cells, found {}", NUM_CHANNELS + 2, record.len())));
        }
        for (c, cell) in record.iter().take(NUM_CHANNELS).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| perr(row, format!("non-numeric value {cell:?} in ch{}", c + 1)))?;
            if !v.is_finite() {
                return Err(perr(row, format!("non-finite value in ch{}", c + 1)));
            }
            channels[c].push(v);
        }
        let int_cell = |name: &str, cell: &str, max: u8| -> Result<u8> {
            let v: i64 = cell
                .parse()
                .map_err(|_| perr(row, format!("non-integer {name} {cell:?}")))?;
            if !(0..=max as i64).contains(&v) {
                return Err(perr(row, format!("{name} {v} outside 0..={max}")));
            }
            Ok(v as u8)
        };
        stimulus.push(int_cell("stimulus", &record[NUM_CHANNELS], NUM_MOVEMENTS as u8)?);
        repetition.push(int_cell("repetition", &record[NUM_CHANNELS + 1], NUM_REPETITIONS)?);
    }
    Recording::new(subject_id, channels, stimulus, repetition)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| (p.line() as usize).saturating_sub(1));
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            row,
            msg: format!("{other:?}"),
        },
    }
}

/// Load every `subject_<id>.csv` in `dir`, sorted by subject id.
pub fn load_dir(dir: &Path) -> Result<Vec<Recording>> {
    let mut paths: Vec<(u32, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_subject = path.extension().is_some_and(|e| e == "csv")
            && path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("subject_"));
        if is_subject {
            paths.push((subject_from_path(&path)?, path));
        }
    }
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no subject_<id>.csv files in {}", dir.display())));
    }
    paths.sort();
    paths.iter().map(|(_, p)| load_csv(p)).collect()
}

/// Write a recording in the CSV format. Floats use the shortest round-trip representation.
pub fn write_csv(r: &Recording, path: &Path) -> Result<()> {
    let werr = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Internal(format!("csv writer: {other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(werr)?;
    w.write_record(expected_header()).map_err(werr)?;
    let mut row = Vec::with_capacity(NUM_CHANNELS + 2);
    for t in 0..r.len() {
        row.clear();
        row.extend(r.channels.iter().map(|ch| ch[t].to_string()));
        row.push(r.stimulus[t].to_string());
        row.push(r.repetition[t].to_string());
        w.write_record(&row).map_err(werr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
