//! Popularity series, event logs, and the audience/revisit split.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOUR: f64 = 3600.0;
pub const DAY: f64 = 86_400.0;
pub const WEEK: f64 = 7.0 * DAY;
/// A "month" window is exactly 30 days.
pub const MONTH: f64 = 30.0 * DAY;

/// A uniformly windowed, non-negative count series.
///
/// Counts are reals so the same type carries observed data and model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesJson")]
pub struct PopularitySeries {
    window_length: f64,
    start_time: Option<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct SeriesJson {
    window_length: f64,
    start_time: Option<f64>,
    values: Vec<f64>,
}

impl TryFrom<SeriesJson> for PopularitySeries {
    type Error = Error;

    fn try_from(raw: SeriesJson) -> Result<Self> {
        PopularitySeries::new(raw.values, raw.window_length, raw.start_time)
    }
}

impl PopularitySeries {
    pub fn new(values: Vec<f64>, window_length: f64, start_time: Option<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("series must have at least one window"));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::invalid(format!(
                "window {i} has value {v}; counts must be finite and non-negative"
            )));
        }
        if !(window_length.is_finite() && window_length > 0.0) {
            return Err(Error::invalid(format!(
                "window length must be positive, got {window_length}"
            )));
        }
        if let Some(t) = start_time {
            if !t.is_finite() {
                return Err(Error::invalid("start time must be finite"));
            }
        }
        Ok(Self {
            window_length,
            start_time,
            values,
        })
    }

    /// Daily series without an anchor time.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(values, DAY, None)
    }

    /// Builds a series from model output, clamping tiny negative round-off to zero.
    pub(crate) fn from_model_output(mut values: Vec<f64>) -> Self {
        for v in &mut values {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
        Self {
            window_length: DAY,
            start_time: None,
            values,
        }
    }

    pub fn with_window_length(mut self, window_length: f64) -> Result<Self> {
        if !(window_length.is_finite() && window_length > 0.0) {
            return Err(Error::invalid("window length must be positive"));
        }
        self.window_length = window_length;
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false: a series has at least one window.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn window_length(&self) -> f64 {
        self.window_length
    }

    pub fn start_time(&self) -> Option<f64> {
        self.start_time
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Windows `[start, end)` as a new series; the anchor time moves with the slice.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::invalid(format!(
                "window range {start}..{end} outside series of length {}",
                self.len()
            )));
        }
        Ok(Self {
            window_length: self.window_length,
            start_time: self
                .start_time
                .map(|t| t + start as f64 * self.window_length),
            values: self.values[start..end].to_vec(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// On-disk layout of a series file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesFormat {
    /// `window,value` rows, optional header, any order, gaps filled with zero.
    CsvIndexed,
    /// One value per line.
    PlainLines,
}

impl SeriesFormat {
    /// Guesses the format from the first non-empty line.
    pub fn detect(first_line: &str) -> Self {
        if first_line.contains(',') {
            SeriesFormat::CsvIndexed
        } else {
            SeriesFormat::PlainLines
        }
    }
}

pub fn load_series(path: impl AsRef<Path>, format: SeriesFormat) -> Result<PopularitySeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_series(BufReader::new(file), format)
}

/// Loads a series, detecting the format from its content: a JSON export, or
/// CSV/plain lines judged by the first non-empty line.
pub fn load_series_auto(path: impl AsRef<Path>) -> Result<PopularitySeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with('{') {
        return Ok(serde_json::from_str(&text)?);
    }
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    read_series(text.as_bytes(), SeriesFormat::detect(first))
}

pub fn read_series<R: BufRead>(reader: R, format: SeriesFormat) -> Result<PopularitySeries> {
    let mut plain = Vec::new();
    let mut indexed: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
    let mut seen_data = false;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match format {
            SeriesFormat::PlainLines => plain.push(parse_count(line, lineno)?),
            SeriesFormat::CsvIndexed => {
                let mut fields = line.split(',').map(str::trim);
                let (Some(w), Some(v), None) = (fields.next(), fields.next(), fields.next())
                else {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected `window,value`, got `{line}`"),
                    });
                };
                if !seen_data && w.eq_ignore_ascii_case("window") {
                    seen_data = true;
                    continue;
                }
                seen_data = true;
                let window: u64 = w.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("window index `{w}` is not a non-negative integer"),
                })?;
                let value = parse_count(v, lineno)?;
                if let Some((_, first)) = indexed.insert(window, (value, lineno)) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("window {window} already given on line {first}"),
                    });
                }
            }
        }
    }

    let values = match format {
        SeriesFormat::PlainLines => plain,
        SeriesFormat::CsvIndexed => {
            let Some((&last, _)) = indexed.last_key_value() else {
                return Err(Error::invalid("series file has no data rows"));
            };
            let mut values = vec![0.0; last as usize + 1];
            for (w, (v, _)) in indexed {
                values[w as usize] = v;
            }
            values
        }
    };
    if values.is_empty() {
        return Err(Error::invalid("series file has no data rows"));
    }
    PopularitySeries::from_values(values)
}

fn parse_count(field: &str, line: u64) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("`{field}` is not finite"),
        });
    }
    if v < 0.0 {
        return Err(Error::Parse {
            line,
            message: format!("negative count {v}"),
        });
    }
    Ok(v)
}

/// One access of a user to an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp: f64,
    pub user_id: String,
    pub object_id: String,
}

impl EventRecord {
    pub fn new(timestamp: f64, user_id: impl Into<String>, object_id: impl Into<String>) -> Self {
        Self {
            timestamp,
            user_id: user_id.into(),
            object_id: object_id.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.timestamp.is_finite() && self.timestamp >= 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "event timestamp {} must be finite and non-negative",
                self.timestamp
            )))
        }
    }
}

const EVENT_HEADER: [&str; 3] = ["timestamp", "user_id", "object_id"];

pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(BufReader::new(file))
}

/// Reads `timestamp,user_id,object_id` rows one record at a time.
pub fn read_events<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != EVENT_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `timestamp,user_id,object_id`, got `{}`", got.join(",")),
        });
    }

    let mut events = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    message: e.to_string(),
                })
            }
        }
        let line = record.position().map_or(line, |p| p.line());
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 columns, found {}", record.len()),
            });
        }
        let ts = record[0].trim();
        let timestamp: i64 = ts.parse().map_err(|_| Error::Parse {
            line,
            message: format!("timestamp `{ts}` is not an integer"),
        })?;
        if timestamp < 0 {
            return Err(Error::Parse {
                line,
                message: format!("negative timestamp {timestamp}"),
            });
        }
        events.push(EventRecord {
            timestamp: timestamp as f64,
            user_id: record[1].trim().to_string(),
            object_id: record[2].trim().to_string(),
        });
    }
    Ok(events)
}

/// Per-access counts; `popularity = audience + revisits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActivitySplit {
    pub popularity: u64,
    pub audience: u64,
    pub revisits: u64,
}

impl ActivitySplit {
    fn record(&mut self, first_visit: bool) {
        self.popularity += 1;
        if first_visit {
            self.audience += 1;
        } else {
            self.revisits += 1;
        }
    }

    /// Revisits per audience member; `+inf` when every access is a revisit.
    pub fn revisit_ratio(&self) -> f64 {
        if self.audience == 0 {
            if self.revisits == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.revisits as f64 / self.audience as f64
        }
    }
}

/// Popularity, audience and revisit series of one object on aligned windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedActivity {
    pub popularity: PopularitySeries,
    pub audience: PopularitySeries,
    pub revisits: PopularitySeries,
}

/// Events of one object, stably sorted by timestamp.
pub(crate) fn group_by_object(events: &[EventRecord]) -> Result<BTreeMap<&str, Vec<&EventRecord>>> {
    let mut groups: BTreeMap<&str, Vec<&EventRecord>> = BTreeMap::new();
    for e in events {
        e.validate()?;
        groups.entry(e.object_id.as_str()).or_default().push(e);
    }
    for list in groups.values_mut() {
        list.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    }
    Ok(groups)
}

/// Whole-log totals for one object's sorted events.
pub(crate) fn object_totals(sorted: &[&EventRecord]) -> ActivitySplit {
    let mut seen = HashSet::new();
    let mut split = ActivitySplit::default();
    for e in sorted {
        split.record(seen.insert(e.user_id.as_str()));
    }
    split
}

/// Per-window splits for one object's sorted events, anchored at its first event.
pub(crate) fn object_windows(sorted: &[&EventRecord], window_length: f64) -> Vec<ActivitySplit> {
    let Some(first) = sorted.first() else {
        return Vec::new();
    };
    let t0 = first.timestamp;
    let last = sorted.last().map_or(t0, |e| e.timestamp);
    let n = ((last - t0) / window_length).floor() as usize + 1;
    let mut cells = vec![ActivitySplit::default(); n];
    let mut seen = HashSet::new();
    for e in sorted {
        let w = ((e.timestamp - t0) / window_length).floor() as usize;
        cells[w].record(seen.insert(e.user_id.as_str()));
    }
    cells
}

pub(crate) fn check_window_length(window_length: f64) -> Result<()> {
    if window_length.is_finite() && window_length > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "window length must be positive, got {window_length}"
        )))
    }
}

/// Splits one object's accesses into popularity, audience and revisit series.
///
/// A user counts toward the audience only in the window holding their first
/// access to the object anywhere in `events`. Windows start at the object's
/// first event.
pub fn window_events(
    events: &[EventRecord],
    object: &str,
    window_length: f64,
) -> Result<WindowedActivity> {
    check_window_length(window_length)?;
    let mut mine: Vec<&EventRecord> = Vec::new();
    for e in events {
        if e.object_id == object {
            e.validate()?;
            mine.push(e);
        }
    }
    if mine.is_empty() {
        return Err(Error::UnknownObject(object.to_string()));
    }
    mine.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let start = mine[0].timestamp;
    let cells = object_windows(&mine, window_length);

    let build = |f: fn(&ActivitySplit) -> u64| {
        PopularitySeries::new(
            cells.iter().map(|c| f(c) as f64).collect(),
            window_length,
            Some(start),
        )
    };
    Ok(WindowedActivity {
        popularity: build(|c| c.popularity)?,
        audience: build(|c| c.audience)?,
        revisits: build(|c| c.revisits)?,
    })
}
