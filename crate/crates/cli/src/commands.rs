use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use log::{info, warn};
use phoenix_core::characterize::{
    long_run_report, windowed_quartiles, RatioReport, DEFAULT_MIN_POPULARITY,
    DEFAULT_MIN_WINDOW_POPULARITY,
};
use phoenix_core::fit::{fit_phoenix_r, FitConfig, FitResult};
use phoenix_core::forecast::{compare_models, ForecastReport, ModelKind};
use phoenix_core::model::{simulate as run_model, DAILY_PERIOD, HOURLY_PERIOD};
use phoenix_core::peaks::{find_peaks_with, PeakFinderConfig};
use phoenix_core::series::{load_events, load_series_auto, DAY, HOUR, MONTH, WEEK};
use phoenix_core::synthetic::{gen_synthetic as draw_synthetic, SyntheticSpec};
use phoenix_core::{PhoenixRModel, PopularitySeries};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{csv_bytes, json_bytes, series_bytes, write_bytes, write_json};
use crate::{out_path_format, Format, GlobalArgs};

fn load_model(path: &Path) -> Result<PhoenixRModel> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    PhoenixRModel::from_json(&text).with_context(|| format!("model {}", path.display()))
}

fn load_series(path: &Path) -> Result<PopularitySeries> {
    Ok(load_series_auto(path)?)
}

/// Non-empty, non-comment lines of a list file, resolved against its directory.
fn read_list(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let entries: Vec<_> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| (l.to_string(), base.join(l)))
        .collect();
    if entries.is_empty() {
        bail!("{} lists no series", path.display());
    }
    Ok(entries)
}

fn thread_pool(global: &GlobalArgs) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = global.jobs {
        builder = builder.num_threads(j as usize);
    }
    Ok(builder.build()?)
}

/// `dir/name.ext` becomes `dir/name.{tag}.ext`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.{tag}.{ext}"),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Emit {
    Audience,
    Revisits,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Number of windows.
    #[arg(long)]
    n: usize,
    /// Output series; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra series written next to the output as NAME.audience.EXT / NAME.revisits.EXT.
    #[arg(long, value_enum, value_delimiter = ',', requires = "out")]
    emit: Vec<Emit>,
}

pub fn simulate(global: &GlobalArgs, args: &SimulateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let sim = run_model(&model, args.n)?;
    if sim.clamped_steps > 0 {
        warn!("{} simulation steps needed flow clamping", sim.clamped_steps);
    }
    let format = out_path_format(args.out.as_ref(), global.format, Format::Csv);
    write_bytes(args.out.as_deref(), &series_bytes(&sim.popularity, format)?)?;
    if let Some(out) = &args.out {
        for e in args.emit.iter().collect::<BTreeSet<_>>() {
            let (tag, series) = match e {
                Emit::Audience => ("audience", &sim.audience),
                Emit::Revisits => ("revisits", &sim.revisits),
            };
            write_bytes(Some(&sibling(out, tag)), &series_bytes(series, format)?)?;
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct PeaksArgs {
    /// Series CSV (`window,value` or one value per line) or JSON.
    #[arg(long)]
    series: PathBuf,
    /// Peak list output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PeakRow {
    start: usize,
    k: usize,
    l: f64,
    snr: f64,
    ridge_length: usize,
}

pub fn peaks(global: &GlobalArgs, args: &PeaksArgs) -> Result<()> {
    let series = load_series(&args.series)?;
    if series.len() < 2 {
        bail!("peak detection needs at least two windows");
    }
    let found = find_peaks_with(series.values(), &PeakFinderConfig::default());
    info!("{} peaks, {} candidate starts", found.peaks.len(), found.starts.len());
    let bytes = match out_path_format(args.out.as_ref(), global.format, Format::Json) {
        Format::Json => json_bytes(&found)?,
        Format::Csv => csv_bytes(found.peaks.iter().map(|p| PeakRow {
            start: (p.k as f64 - p.l).round().max(0.0) as usize,
            k: p.k,
            l: p.l,
            snr: p.snr,
            ridge_length: p.ridge_length,
        }))?,
    };
    write_bytes(args.out.as_deref(), &bytes)
}

#[derive(Debug, Clone, Args)]
pub struct FitOptions {
    /// Hourly windows: a 24-window period.
    #[arg(long, conflicts_with = "daily")]
    hourly: bool,
    /// Daily windows: a 7-window period (the default).
    #[arg(long)]
    daily: bool,
    /// Fit the periodic modulation of the visit rate.
    #[arg(long)]
    period: bool,
    /// Relative description-length increase tolerated before stopping.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Random initializations per start configuration.
    #[arg(long, default_value_t = FitConfig::default().restarts)]
    restarts: usize,
    /// Levenberg-Marquardt iteration cap per fit.
    #[arg(long, default_value_t = FitConfig::default().max_lm_iterations)]
    max_iterations: usize,
}

impl FitOptions {
    fn config(&self, seed: u64) -> Result<FitConfig> {
        let config = FitConfig {
            epsilon: self.epsilon,
            rng_seed: seed,
            period_enabled: self.period,
            period_e: if self.hourly { HOURLY_PERIOD } else { DAILY_PERIOD },
            restarts: self.restarts,
            max_lm_iterations: self.max_iterations,
            ..FitConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Series CSV (`window,value` or one value per line) or JSON.
    #[arg(long)]
    series: PathBuf,
    #[command(flatten)]
    options: FitOptions,
    /// Fit output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitDocument<'a> {
    series: String,
    n: usize,
    window_length: f64,
    seed: u64,
    period_enabled: bool,
    period_e: f64,
    #[serde(flatten)]
    result: &'a FitResult,
}

#[derive(Serialize)]
struct ShockRow {
    s: usize,
    #[serde(rename = "S0")]
    s0: f64,
    beta: f64,
    gamma: f64,
    omega: f64,
}

fn fit_one(path: &Path, label: &str, config: &FitConfig, format: Format) -> Result<(FitResult, Vec<u8>)> {
    let series = load_series(path)?;
    let result = fit_phoenix_r(&series, config).with_context(|| format!("fitting {label}"))?;
    info!(
        "{label}: {} shocks, rmse {:.4}, {} candidates",
        result.model.shocks.len(),
        result.rmse,
        result.shocks_tried
    );
    let bytes = match format {
        Format::Json => json_bytes(&FitDocument {
            series: label.to_string(),
            n: series.len(),
            window_length: series.window_length(),
            seed: config.rng_seed,
            period_enabled: config.period_enabled,
            period_e: config.period_e,
            result: &result,
        })?,
        Format::Csv => csv_bytes(result.model.shocks.iter().map(|s| ShockRow {
            s: s.s,
            s0: s.s0,
            beta: s.beta,
            gamma: s.gamma,
            omega: s.omega,
        }))?,
    };
    Ok((result, bytes))
}

pub fn fit(global: &GlobalArgs, args: &FitArgs) -> Result<()> {
    let config = args.options.config(global.seed)?;
    let format = out_path_format(args.out.as_ref(), global.format, Format::Json);
    let label = args.series.display().to_string();
    let (_, bytes) = fit_one(&args.series, &label, &config, format)?;
    write_bytes(args.out.as_deref(), &bytes)
}

#[derive(Debug, Args)]
pub struct FitBatchArgs {
    /// File with one series path per line, relative to the list's directory.
    #[arg(long)]
    list: PathBuf,
    #[command(flatten)]
    options: FitOptions,
    /// Directory for per-series fits and summary.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct BatchRow {
    series: String,
    output: String,
    shocks: Option<usize>,
    rmse: Option<f64>,
    bic: Option<f64>,
    mdl_total: Option<f64>,
    error: Option<String>,
}

pub fn fit_batch(global: &GlobalArgs, args: &FitBatchArgs) -> Result<()> {
    let entries = read_list(&args.list)?;
    let config = args.options.config(global.seed)?;
    let format = global.format.unwrap_or(Format::Json);
    let ext = match format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    let mut names = BTreeSet::new();
    let outputs: Vec<String> = entries
        .iter()
        .map(|(label, path)| {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
            let name = format!("{stem}.fit.{ext}");
            if names.insert(name.clone()) {
                Ok(name)
            } else {
                Err(anyhow!("two listed series would both write {name} (from {label})"))
            }
        })
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let pool = thread_pool(global)?;
    let rows: Vec<BatchRow> = pool.install(|| {
        entries
            .par_iter()
            .zip(outputs.par_iter())
            .map(|((label, path), name)| {
                let outcome = fit_one(path, label, &config, format).and_then(|(r, bytes)| {
                    write_bytes(Some(&args.out.join(name)), &bytes)?;
                    Ok(r)
                });
                match outcome {
                    Ok(r) => BatchRow {
                        series: label.clone(),
                        output: name.clone(),
                        shocks: Some(r.model.shocks.len()),
                        rmse: Some(r.rmse),
                        bic: Some(r.bic),
                        mdl_total: Some(r.mdl.total),
                        error: None,
                    },
                    Err(e) => {
                        warn!("{label}: {e:#}");
                        BatchRow {
                            series: label.clone(),
                            output: String::new(),
                            shocks: None,
                            rmse: None,
                            bic: None,
                            mdl_total: None,
                            error: Some(format!("{e:#}")),
                        }
                    }
                }
            })
            .collect()
    });
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    write_bytes(Some(&args.out.join("summary.csv")), &csv_bytes(&rows)?)?;
    if failed > 0 {
        bail!("{failed} of {} series failed; see summary.csv", rows.len());
    }
    Ok(())
}

/// Window length in seconds from `N[s|h|d|w|m]`, `m` meaning a 30-day month.
pub fn parse_window(text: &str) -> Result<f64> {
    let t = text.trim();
    let (num, unit) = match t.find(|c: char| c.is_ascii_alphabetic()) {
        Some(i) => (&t[..i], &t[i..]),
        None => (t, "s"),
    };
    let scale = match unit {
        "s" => 1.0,
        "h" => HOUR,
        "d" => DAY,
        "w" => WEEK,
        "m" => MONTH,
        other => bail!("unknown window unit {other:?} in {text:?} (use s, h, d, w or m)"),
    };
    let count: f64 = if num.is_empty() {
        1.0
    } else {
        num.parse()
            .map_err(|_| anyhow!("bad window length {text:?}"))?
    };
    let w = count * scale;
    if !(w.is_finite() && w > 0.0) {
        bail!("window length must be positive, got {text:?}");
    }
    Ok(w)
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    /// Event CSV with a `timestamp,user_id,object_id` header.
    #[arg(long)]
    events: PathBuf,
    /// Window lengths, e.g. 1h,1d,1w,1m (m is 30 days) or plain seconds.
    #[arg(long, value_delimiter = ',', default_value = "1h,1d,1w,1m")]
    windows: Vec<String>,
    /// Objects need more than this many accesses in total.
    #[arg(long, default_value_t = DEFAULT_MIN_POPULARITY)]
    min_pop: u64,
    /// Windows need more than this many accesses.
    #[arg(long, default_value_t = DEFAULT_MIN_WINDOW_POPULARITY)]
    min_window_pop: u64,
    /// Report output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the ratio CCDF as `threshold,fraction` rows.
    #[arg(long)]
    ccdf_csv: Option<PathBuf>,
}

fn ratio_value(v: f64) -> serde_json::Value {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.into()
    }
}

#[derive(Serialize)]
struct WindowEntry {
    label: String,
    window_length: f64,
    windows_counted: usize,
    q25: Option<serde_json::Value>,
    median: Option<serde_json::Value>,
    q75: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct CharacterizeDocument {
    events: usize,
    min_popularity: u64,
    min_window_popularity: u64,
    long_run: RatioReport,
    windows: Vec<WindowEntry>,
}

#[derive(Serialize)]
struct WindowRow<'a> {
    window: &'a str,
    window_length: f64,
    windows_counted: usize,
    q25: String,
    median: String,
    q75: String,
}

pub fn characterize(global: &GlobalArgs, args: &CharacterizeArgs) -> Result<()> {
    let lengths: Vec<(String, f64)> = args
        .windows
        .iter()
        .map(|w| Ok((w.trim().to_string(), parse_window(w)?)))
        .collect::<Result<_>>()?;
    let events = load_events(&args.events)?;
    let long_run = long_run_report(&events, args.min_pop)?;

    let mut windows = Vec::new();
    for (label, len) in lengths {
        let entry = match windowed_quartiles(&events, len, args.min_window_pop) {
            Ok(q) => WindowEntry {
                label,
                window_length: len,
                windows_counted: q.windows_counted,
                q25: Some(ratio_value(q.q25)),
                median: Some(ratio_value(q.median)),
                q75: Some(ratio_value(q.q75)),
            },
            Err(phoenix_core::Error::EmptySelection(msg)) => {
                warn!("{label}: {msg}");
                WindowEntry {
                    label,
                    window_length: len,
                    windows_counted: 0,
                    q25: None,
                    median: None,
                    q75: None,
                }
            }
            Err(e) => return Err(e.into()),
        };
        windows.push(entry);
    }

    if let Some(path) = &args.ccdf_csv {
        #[derive(Serialize)]
        struct CcdfRow {
            threshold: String,
            fraction: f64,
        }
        let rows = long_run.ccdf.iter().map(|&(t, fraction)| CcdfRow {
            threshold: if t.is_infinite() { "inf".into() } else { format!("{t:?}") },
            fraction,
        });
        write_bytes(Some(path), &csv_bytes(rows)?)?;
    }

    let bytes = match out_path_format(args.out.as_ref(), global.format, Format::Json) {
        Format::Json => json_bytes(&CharacterizeDocument {
            events: events.len(),
            min_popularity: args.min_pop,
            min_window_popularity: args.min_window_pop,
            long_run,
            windows,
        })?,
        Format::Csv => {
            let text = |v: &Option<serde_json::Value>| match v {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
                None => String::new(),
            };
            csv_bytes(windows.iter().map(|w| WindowRow {
                window: &w.label,
                window_length: w.window_length,
                windows_counted: w.windows_counted,
                q25: text(&w.q25),
                median: text(&w.median),
                q75: text(&w.q75),
            }))?
        }
    };
    write_bytes(args.out.as_deref(), &bytes)
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// File with one series path per line, relative to the list's directory.
    #[arg(long)]
    list: PathBuf,
    /// Training fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.25,0.5")]
    splits: Vec<f64>,
    /// Validation/test horizons in windows.
    #[arg(long, value_delimiter = ',', default_value = "1,7,30")]
    deltas: Vec<usize>,
    /// Model families: phoenix, td.
    #[arg(long, value_delimiter = ',', default_value = "phoenix,td")]
    models: Vec<String>,
    /// Fitted models per series and cell.
    #[arg(long, default_value_t = phoenix_core::forecast::DEFAULT_ENSEMBLE_SIZE)]
    ensemble: usize,
    #[command(flatten)]
    options: FitOptions,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat `series,model,split,delta,rmse` rows; defaults to the report path with a .csv extension.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvaluateDocument<'a> {
    seed: u64,
    ensemble_size: usize,
    #[serde(flatten)]
    report: &'a ForecastReport,
}

pub fn evaluate(global: &GlobalArgs, args: &EvaluateArgs) -> Result<()> {
    let models: Vec<ModelKind> = args
        .models
        .iter()
        .map(|m| m.trim().parse())
        .collect::<phoenix_core::Result<_>>()?;
    let config = args.options.config(global.seed)?;
    let corpus: Vec<(String, PopularitySeries)> = read_list(&args.list)?
        .into_iter()
        .map(|(label, path)| Ok((label, load_series(&path)?)))
        .collect::<Result<_>>()?;
    let pool = thread_pool(global)?;
    let report = pool.install(|| {
        compare_models(
            &corpus,
            &models,
            &args.splits,
            &args.deltas,
            args.ensemble,
            global.seed,
            &config,
        )
    })?;

    let doc = EvaluateDocument {
        seed: global.seed,
        ensemble_size: args.ensemble,
        report: &report,
    };
    write_json(args.out.as_deref(), &doc)?;
    let csv_path = args
        .csv
        .clone()
        .or_else(|| args.out.as_ref().map(|p| p.with_extension("csv")));
    if let Some(path) = csv_path {
        let mut bytes = Vec::new();
        report.write_csv(&mut bytes)?;
        write_bytes(Some(&path), &bytes)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    /// Model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Number of windows.
    #[arg(long)]
    n: usize,
    /// Noise standard deviation as a fraction of the clean peak.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Series output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth JSON; defaults to NAME.truth.json next to the series.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Serialize)]
struct TruthDocument<'a> {
    model: &'a PhoenixRModel,
    n: usize,
    noise: f64,
    seed: u64,
}

pub fn gen_synthetic(global: &GlobalArgs, args: &GenSyntheticArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let spec = SyntheticSpec {
        model,
        n: args.n,
        noise: args.noise,
    };
    let syn = draw_synthetic(&spec, global.seed)?;
    let format = out_path_format(args.out.as_ref(), global.format, Format::Csv);
    write_bytes(args.out.as_deref(), &series_bytes(&syn.series, format)?)?;
    let truth = args
        .truth
        .clone()
        .or_else(|| args.out.as_ref().map(|p| sibling(p, "truth").with_extension("json")));
    if let Some(path) = truth {
        write_json(
            Some(&path),
            &TruthDocument {
                model: &syn.truth,
                n: args.n,
                noise: args.noise,
                seed: global.seed,
            },
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_units() {
        assert_eq!(parse_window("1h").unwrap(), 3600.0);
        assert_eq!(parse_window("2d").unwrap(), 172_800.0);
        assert_eq!(parse_window("1w").unwrap(), 604_800.0);
        assert_eq!(parse_window("1m").unwrap(), 2_592_000.0);
        assert_eq!(parse_window("90").unwrap(), 90.0);
        assert!(parse_window("1y").is_err());
        assert!(parse_window("0h").is_err());
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("a/s.csv"), "audience"), PathBuf::from("a/s.audience.csv"));
        assert_eq!(sibling(Path::new("s"), "truth"), PathBuf::from("s.truth"));
    }
}
