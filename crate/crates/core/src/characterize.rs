//! Revisit-vs-audience statistics over event logs.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::series::{check_window_length, group_by_object, object_totals, object_windows, EventRecord};

pub const DEFAULT_MIN_POPULARITY: u64 = 500;
pub const DEFAULT_MIN_WINDOW_POPULARITY: u64 = 20;

/// Whole-log ratio statistics over objects that pass the popularity filter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub min_popularity: u64,
    pub objects_included: usize,
    /// revisits / audience per object.
    #[serde(serialize_with = "ser_ratio_map")]
    pub per_object_ratio: BTreeMap<String, f64>,
    /// `(threshold, fraction of objects with ratio >= threshold)`.
    #[serde(serialize_with = "ser_points")]
    pub ccdf: Vec<(f64, f64)>,
    pub medians: RatioMedians,
    /// Fraction of objects whose revisits outnumber their audience.
    pub pct_dominated: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioMedians {
    #[serde(serialize_with = "ser_ratio")]
    pub revisits_over_audience: f64,
    pub revisits_over_popularity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowedQuartiles {
    pub window_length: f64,
    #[serde(serialize_with = "ser_ratio")]
    pub q25: f64,
    #[serde(serialize_with = "ser_ratio")]
    pub median: f64,
    #[serde(serialize_with = "ser_ratio")]
    pub q75: f64,
    pub windows_counted: usize,
}

// JSON has no infinity; revisit-only cells are written as "inf".
fn ser_ratio<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn ser_ratio_map<S: Serializer>(
    m: &BTreeMap<String, f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        if v.is_infinite() {
            map.serialize_entry(k, "inf")?;
        } else {
            map.serialize_entry(k, v)?;
        }
    }
    map.end()
}

fn ser_points<S: Serializer>(pts: &[(f64, f64)], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(pts.len()))?;
    for &(t, f) in pts {
        let t = if t.is_infinite() {
            serde_json::Value::from("inf")
        } else {
            serde_json::Value::from(t)
        };
        seq.serialize_element(&serde_json::json!({ "threshold": t, "fraction": f }))?;
    }
    seq.end()
}

/// Quantile by linear interpolation between order statistics of sorted data.
///
/// `+inf` entries sort last; interpolating toward one yields `+inf` unless the
/// position falls exactly on a finite order statistic.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || frac == 0.0 {
        a
    } else if b.is_infinite() {
        f64::INFINITY
    } else {
        a + (b - a) * frac
    }
}

fn sort_ratios(v: &mut [f64]) {
    v.sort_by(|a, b| a.total_cmp(b));
}

/// `(threshold, P[ratio >= threshold])` at every distinct ratio value.
pub fn ccdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sort_ratios(&mut sorted);
    let n = sorted.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i];
        out.push((t, (sorted.len() - i) as f64 / n));
        while i < sorted.len() && sorted[i] == t {
            i += 1;
        }
    }
    out
}

/// Long-run ratios on whole-log totals for objects with popularity above `min_popularity`.
pub fn long_run_report(events: &[EventRecord], min_popularity: u64) -> Result<RatioReport> {
    if events.is_empty() {
        return Err(Error::invalid("event log is empty"));
    }
    let groups = group_by_object(events)?;
    let mut per_object_ratio = BTreeMap::new();
    let mut over_popularity = Vec::new();
    for (object, list) in &groups {
        let split = object_totals(list);
        if split.popularity <= min_popularity {
            continue;
        }
        per_object_ratio.insert(object.to_string(), split.revisit_ratio());
        over_popularity.push(split.revisits as f64 / split.popularity as f64);
    }
    if per_object_ratio.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no object has popularity above {min_popularity}"
        )));
    }

    let mut ratios: Vec<f64> = per_object_ratio.values().copied().collect();
    sort_ratios(&mut ratios);
    sort_ratios(&mut over_popularity);
    let dominated = ratios.iter().filter(|&&r| r > 1.0).count();

    Ok(RatioReport {
        min_popularity,
        objects_included: ratios.len(),
        ccdf: ccdf(&ratios),
        medians: RatioMedians {
            revisits_over_audience: quantile_sorted(&ratios, 0.5),
            revisits_over_popularity: quantile_sorted(&over_popularity, 0.5),
        },
        pct_dominated: dominated as f64 / ratios.len() as f64,
        per_object_ratio,
    })
}

/// Revisit/audience ratios of every (object, window) cell with popularity above the threshold.
pub fn window_ratios(
    events: &[EventRecord],
    window_length: f64,
    min_window_popularity: u64,
) -> Result<Vec<f64>> {
    check_window_length(window_length)?;
    let groups = group_by_object(events)?;
    let mut pooled = Vec::new();
    for list in groups.values() {
        pooled.extend(
            object_windows(list, window_length)
                .iter()
                .filter(|c| c.popularity > min_window_popularity)
                .map(|c| c.revisit_ratio()),
        );
    }
    Ok(pooled)
}

/// Quartiles of the revisit/audience ratio pooled across all qualifying (object, window) cells.
pub fn windowed_quartiles(
    events: &[EventRecord],
    window_length: f64,
    min_window_popularity: u64,
) -> Result<WindowedQuartiles> {
    if events.is_empty() {
        return Err(Error::invalid("event log is empty"));
    }
    let mut pooled = window_ratios(events, window_length, min_window_popularity)?;
    if pooled.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no window has popularity above {min_window_popularity}"
        )));
    }
    sort_ratios(&mut pooled);
    Ok(WindowedQuartiles {
        window_length,
        q25: quantile_sorted(&pooled, 0.25),
        median: quantile_sorted(&pooled, 0.5),
        q75: quantile_sorted(&pooled, 0.75),
        windows_counted: pooled.len(),
    })
}
