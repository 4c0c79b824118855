//! Comma-separated observation series files.
//!
//! The header names the columns: `t`, then the observed components
//! (`position`, `velocity`), then optionally `truth_position,truth_velocity`.
//! One row per observation time, LF line endings, 17 significant digits.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fenkf_core::{DataError, ObservationMask, ObservationSeries, StateVector};
use thiserror::Error;

use crate::format::g17;

const COMPONENTS: [&str; 2] = ["position", "velocity"];
const TRUTH: [&str; 2] = ["truth_position", "truth_velocity"];

#[derive(Debug, Error)]
pub enum SeriesIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("empty file")]
    Empty,
    #[error("bad header `{0}`: expected t, observed components, optional truth columns")]
    Header(String),
    #[error("line {line}: expected {expected} fields, found {actual}")]
    FieldCount {
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("line {line}: `{field}` is not a number")]
    Number { line: usize, field: String },
    #[error("file has a header but no data rows")]
    NoRows,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Header fields for a series with the given mask.
pub fn header(mask: &ObservationMask, with_truth: bool) -> Vec<&'static str> {
    let mut cols = vec!["t"];
    cols.extend(mask.observed_indices().map(|i| COMPONENTS[i]));
    if with_truth {
        cols.extend(TRUTH);
    }
    cols
}

pub fn write_series<W: Write>(mut w: W, series: &ObservationSeries) -> io::Result<()> {
    let truth = series.truth();
    writeln!(w, "{}", header(series.mask(), truth.is_some()).join(","))?;
    for (j, (&t, row)) in series.times().iter().zip(series.rows()).enumerate() {
        let mut fields = vec![g17(t)];
        fields.extend(row.iter().map(|&v| g17(v)));
        if let Some(truth) = truth {
            fields.extend(truth[j].to_array().iter().map(|&v| g17(v)));
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()
}

pub fn read_series<R: BufRead>(r: R) -> Result<ObservationSeries, SeriesIoError> {
    let mut lines = r.lines().enumerate();
    let head = loop {
        match lines.next() {
            None => return Err(SeriesIoError::Empty),
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
        }
    };
    let (mask, with_truth) = parse_header(&head)?;
    let width = 1 + mask.observed_count() + if with_truth { 2 } else { 0 };

    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut truth = Vec::new();
    for (index, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(SeriesIoError::FieldCount {
                line: index + 1,
                expected: width,
                actual: fields.len(),
            });
        }
        let nums = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| SeriesIoError::Number {
                    line: index + 1,
                    field: f.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        times.push(nums[0]);
        let obs_end = 1 + mask.observed_count();
        values.extend_from_slice(&nums[1..obs_end]);
        if with_truth {
            truth.push(StateVector::from_slice(&nums[obs_end..]));
        }
    }
    if times.is_empty() {
        return Err(SeriesIoError::NoRows);
    }
    let truth = with_truth.then_some(truth);
    Ok(ObservationSeries::new(times, values, mask, truth)?)
}

fn parse_header(line: &str) -> Result<(ObservationMask, bool), SeriesIoError> {
    let bad = || SeriesIoError::Header(line.to_string());
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") {
        return Err(bad());
    }
    let mut rest = &cols[1..];
    let mut observed = [false; 2];
    let mut last = None;
    while let Some(i) = rest
        .first()
        .and_then(|c| COMPONENTS.iter().position(|n| n == c))
    {
        if last.is_some_and(|l| l >= i) {
            return Err(bad());
        }
        observed[i] = true;
        last = Some(i);
        rest = &rest[1..];
    }
    let with_truth = match rest {
        [] => false,
        [a, b] if *a == TRUTH[0] && *b == TRUTH[1] => true,
        _ => return Err(bad()),
    };
    let mask = ObservationMask::new(observed.to_vec()).map_err(|_| bad())?;
    Ok((mask, with_truth))
}

pub fn save_series(path: &Path, series: &ObservationSeries) -> io::Result<()> {
    write_series(BufWriter::new(File::create(path)?), series)
}

pub fn load_series(path: &Path) -> Result<ObservationSeries, SeriesIoError> {
    read_series(BufReader::new(File::open(path)?))
}
