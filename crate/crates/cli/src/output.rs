use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use phoenix_core::PopularitySeries;
use serde::Serialize;

/// Writes to `path`, or to stdout when no path is given.
pub fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize + ?Sized>(path: Option<&Path>, value: &T) -> Result<()> {
    write_bytes(path, &json_bytes(value)?)
}

pub fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[derive(Serialize)]
struct SeriesRow {
    window: usize,
    value: f64,
}

/// `window,value` rows.
pub fn series_csv(series: &PopularitySeries) -> Result<Vec<u8>> {
    csv_bytes(
        series
            .values()
            .iter()
            .enumerate()
            .map(|(window, &value)| SeriesRow { window, value }),
    )
}

pub fn series_bytes(series: &PopularitySeries, format: crate::Format) -> Result<Vec<u8>> {
    match format {
        crate::Format::Csv => series_csv(series),
        crate::Format::Json => json_bytes(series),
    }
}
