//! Station file ingestion: parsing, grid completion, gap interpolation and
//! in-sample/out-of-sample splitting of 10-minute wind speed series.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{data, Error, Result};

/// Sampling interval of the station data, in seconds.
pub const STEP_SECONDS: i64 = 600;

/// Observations per day on the 10-minute grid.
pub const STEPS_PER_DAY: usize = 144;

/// Longest run of consecutive missing points that will be interpolated (6 hours).
pub const DEFAULT_MAX_GAP: usize = 36;

/// Column mapping and missing-value conventions of a station file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvFormat {
    pub timestamp_column: String,
    pub speed_column: String,
    /// Numeric marker for a missing value, e.g. `-999`. Empty fields are
    /// always treated as missing.
    pub missing_sentinel: Option<f64>,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".to_string(),
            speed_column: "speed_ms".to_string(),
            missing_sentinel: Some(-999.0),
        }
    }
}

/// A wind speed series on a regular 10-minute grid.
///
/// Points that were missing in the source (absent rows or missing values)
/// are flagged in `gap_mask`. Before [`interpolate_gaps`] they hold `NaN`;
/// afterwards they hold the interpolated value and stay flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindSeries {
    pub start: DateTime<Utc>,
    pub step_seconds: i64,
    pub values: Vec<f64>,
    pub gap_mask: Vec<bool>,
}

impl WindSeries {
    /// Builds a gap-free series, validating that every value is finite and
    /// non-negative.
    pub fn new(start: DateTime<Utc>, values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(data(format!("value {v} at index {i} is not a finite non-negative speed")));
        }
        let gap_mask = vec![false; values.len()];
        Ok(Self {
            start,
            step_seconds: STEP_SECONDS,
            values,
            gap_mask,
        })
    }

    /// Builds a series without any value checks, for synthetic data that
    /// may go negative.
    pub fn unchecked(start: DateTime<Utc>, values: Vec<f64>) -> Self {
        let gap_mask = vec![false; values.len()];
        Self {
            start,
            step_seconds: STEP_SECONDS,
            values,
            gap_mask,
        }
    }

    /// The first `n` points (all of them if `n >= len()`).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            start: self.start,
            step_seconds: self.step_seconds,
            values: self.values[..n].to_vec(),
            gap_mask: self.gap_mask[..n].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.step_seconds * index as i64)
    }

    /// Calendar month (1..=12) of the point at `index`.
    pub fn month(&self, index: usize) -> u32 {
        self.timestamp(index).month()
    }

    /// Day `r` (1-based) and intraday slot `o` (1..=144) of a point, so that
    /// `index = 144 (r - 1) + (o - 1)`.
    pub fn day_and_slot(&self, index: usize) -> (usize, usize) {
        (index / STEPS_PER_DAY + 1, index % STEPS_PER_DAY + 1)
    }

    /// Index of the first grid point at or after `ts`, which may equal `len()`.
    pub fn index_at_or_after(&self, ts: DateTime<Utc>) -> Option<usize> {
        let offset = (ts - self.start).num_seconds();
        if offset < 0 {
            return None;
        }
        let step = self.step_seconds;
        Some(((offset + step - 1) / step) as usize)
    }

    pub fn gap_count(&self) -> usize {
        self.gap_mask.iter().filter(|g| **g).count()
    }

    /// Writes the series in the station CSV layout. Unfilled gaps are
    /// written as empty fields.
    pub fn write_csv<W: Write>(&self, writer: W, format: &CsvFormat) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| data(format!("csv write: {e}"));
        w.write_record([format.timestamp_column.as_str(), format.speed_column.as_str()])
            .map_err(io)?;
        for (i, v) in self.values.iter().enumerate() {
            let ts = self.timestamp(i).format("%Y-%m-%dT%H:%M:%SZ").to_string();
            let speed = if v.is_nan() { String::new() } else { format!("{v}") };
            w.write_record([ts, speed]).map_err(io)?;
        }
        w.flush().map_err(|e| data(format!("csv write: {e}")))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path, format: &CsvFormat) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file), format)
    }
}

/// Contiguous in-sample and out-of-sample index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSplit {
    pub in_sample: Range<usize>,
    pub out_sample: Range<usize>,
}

impl SampleSplit {
    /// Splits `len` points at `boundary`, which must lie strictly inside.
    pub fn at_index(len: usize, boundary: usize) -> Result<Self> {
        if boundary == 0 || boundary >= len {
            return Err(data(format!(
                "split boundary index {boundary} is not strictly inside a series of length {len}"
            )));
        }
        Ok(Self {
            in_sample: 0..boundary,
            out_sample: boundary..len,
        })
    }
}

/// RFC 3339, or a naive `YYYY-MM-DD[T ]HH:MM[:SS]` read as UTC.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        .map(|naive| Utc.from_utc_datetime(&naive))
}

/// Parses a station CSV file onto a regular 10-minute grid.
///
/// Missing rows are inserted as gaps and missing values (empty fields, the
/// sentinel, `NA`, `NaN`) are flagged; neither is filled here.
pub fn parse_station_csv(path: &Path, format: &CsvFormat) -> Result<WindSeries> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_station_reader(std::io::BufReader::new(file), path, format)
}

/// As [`parse_station_csv`], reading from any source. `path` is only used in
/// error messages.
pub fn parse_station_reader<R: Read>(reader: R, path: &Path, format: &CsvFormat) -> Result<WindSeries> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, format!("unreadable header: {e}")))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let ts_col = column(&format.timestamp_column)?;
    let speed_col = column(&format.speed_column)?;

    let mut start: Option<DateTime<Utc>> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut gap_mask: Vec<bool> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        // header is line 1
        let line = row + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        let raw_ts = record
            .get(ts_col)
            .ok_or_else(|| parse_err(line, "missing timestamp field".into()))?;
        let ts = parse_timestamp(raw_ts)
            .ok_or_else(|| parse_err(line, format!("unparseable timestamp `{raw_ts}`")))?;
        let raw_speed = record.get(speed_col).unwrap_or("");
        let speed = parse_speed(raw_speed, format.missing_sentinel)
            .map_err(|m| parse_err(line, m))?;

        let start_ts = *start.get_or_insert(ts);
        let offset = (ts - start_ts).num_seconds();
        if offset % STEP_SECONDS != 0 {
            return Err(parse_err(line, format!("timestamp {raw_ts} is off the 10-minute grid")));
        }
        if offset < 0 {
            return Err(parse_err(line, format!("timestamp {raw_ts} is not increasing")));
        }
        let index = (offset / STEP_SECONDS) as usize;
        if index < values.len() {
            let msg = if index + 1 == values.len() {
                format!("duplicate timestamp {raw_ts}")
            } else {
                format!("timestamp {raw_ts} is not increasing")
            };
            return Err(parse_err(line, msg));
        }
        while values.len() < index {
            values.push(f64::NAN);
            gap_mask.push(true);
        }
        match speed {
            Some(v) => {
                values.push(v);
                gap_mask.push(false);
            }
            None => {
                values.push(f64::NAN);
                gap_mask.push(true);
            }
        }
    }
    let start = start.ok_or_else(|| data(format!("{}: no data rows", path.display())))?;
    Ok(WindSeries {
        start,
        step_seconds: STEP_SECONDS,
        values,
        gap_mask,
    })
}

fn parse_speed(raw: &str, sentinel: Option<f64>) -> std::result::Result<Option<f64>, String> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| format!("speed `{raw}` is not numeric"))?;
    if sentinel == Some(v) {
        return Ok(None);
    }
    if !v.is_finite() {
        return Err(format!("speed `{raw}` is not finite"));
    }
    if v < 0.0 {
        return Err(format!("negative speed {v}"));
    }
    Ok(Some(v))
}

/// Fills every gap by linear interpolation between the nearest present
/// neighbours. The gap mask is preserved, so the operation is idempotent.
pub fn interpolate_gaps(series: &WindSeries, max_gap: usize) -> Result<WindSeries> {
    let n = series.len();
    if n == 0 {
        return Err(data("empty series"));
    }
    if series.gap_mask[0] {
        return Err(data("leading gap: first value is missing"));
    }
    if series.gap_mask[n - 1] {
        return Err(data("trailing gap: last value is missing"));
    }
    let mut values = series.values.clone();
    let mut i = 0;
    while i < n {
        if !series.gap_mask[i] {
            i += 1;
            continue;
        }
        let left = i - 1;
        let mut right = i;
        while series.gap_mask[right] {
            right += 1;
        }
        let len = right - left - 1;
        if len > max_gap {
            return Err(data(format!(
                "gap of {len} points starting at index {i} exceeds the maximum of {max_gap}"
            )));
        }
        let (a, b) = (series.values[left], series.values[right]);
        let span = (right - left) as f64;
        for (k, v) in values.iter_mut().enumerate().take(right).skip(i) {
            let w = (k - left) as f64 / span;
            *v = a + (b - a) * w;
        }
        i = right;
    }
    Ok(WindSeries {
        start: series.start,
        step_seconds: series.step_seconds,
        values,
        gap_mask: series.gap_mask.clone(),
    })
}

/// Splits the series at `boundary`: in-sample covers `[start, boundary)`,
/// out-of-sample `[boundary, end]`.
pub fn split(series: &WindSeries, boundary: DateTime<Utc>) -> Result<SampleSplit> {
    if boundary <= series.start {
        return Err(data(format!(
            "split boundary {boundary} is not after the series start {}",
            series.start
        )));
    }
    let idx = series
        .index_at_or_after(boundary)
        .ok_or_else(|| data("split boundary before series start"))?;
    SampleSplit::at_index(series.len(), idx)
}
