//! Forecasting protocol and head-to-head evaluation against exponential-smoothing baselines.
//!
//! A series is cut into a training prefix of `ceil(train_fraction * n)`
//! windows, a validation block of `delta` windows, and a test block of
//! `delta` windows. Each model family fits an ensemble on the training prefix,
//! keeps the member with the lowest validation RMSE, and is scored on the test
//! block. Validation windows are never folded back into training.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_phoenix_r, rmse, FitConfig, MIN_FIT_WINDOWS};
use crate::model::simulate;
use crate::series::PopularitySeries;

/// Season length of the seasonal baseline (a week of daily windows).
pub const SEASON: usize = 7;
pub const DEFAULT_ENSEMBLE_SIZE: usize = 10;
pub const DEFAULT_TRAIN_FRACTIONS: [f64; 3] = [0.05, 0.25, 0.50];
pub const DEFAULT_DELTAS: [usize; 3] = [1, 7, 30];

const SMOOTHING_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const MIN_TRAIN: usize = 4;
/// z-score of a two-sided 95% normal interval.
const Z95: f64 = 1.96;
/// Cell means closer than this (absolutely, or relative to the larger) are a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastVariant {
    Ses,
    HoltTrend,
    HoltWintersSeasonal,
    LinearTrend,
}

impl ForecastVariant {
    pub const ALL: [ForecastVariant; 4] = [
        ForecastVariant::Ses,
        ForecastVariant::HoltTrend,
        ForecastVariant::HoltWintersSeasonal,
        ForecastVariant::LinearTrend,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ForecastVariant::Ses => "ses",
            ForecastVariant::HoltTrend => "holt_trend",
            ForecastVariant::HoltWintersSeasonal => "holt_winters_seasonal",
            ForecastVariant::LinearTrend => "linear_trend",
        }
    }

    /// Shortest training series the variant accepts.
    pub fn min_train(self) -> usize {
        match self {
            ForecastVariant::HoltWintersSeasonal => (2 * SEASON).max(MIN_TRAIN),
            _ => MIN_TRAIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "phoenix")]
    PhoenixR,
    #[serde(rename = "td")]
    TemporalDynamics,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PhoenixR => "phoenix",
            ModelKind::TemporalDynamics => "td",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phoenix" | "phoenix_r" | "phoenix-r" => Ok(ModelKind::PhoenixR),
            "td" | "temporal_dynamics" => Ok(ModelKind::TemporalDynamics),
            other => Err(Error::invalid(format!(
                "unknown model kind {other:?} (expected phoenix or td)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Validation and test horizon, in windows.
    pub delta: usize,
    pub ensemble_size: usize,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, delta: usize) -> Self {
        Self {
            train_fraction,
            delta,
            ensemble_size: DEFAULT_ENSEMBLE_SIZE,
        }
    }

    pub fn train_len(&self, n: usize) -> usize {
        (self.train_fraction * n as f64).ceil() as usize
    }

    /// `(train, validation, test)` index ranges for a series of length `n`.
    pub fn ranges(
        &self,
        n: usize,
    ) -> Result<(std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>)> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InfeasibleSplit(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.delta == 0 {
            return Err(Error::InfeasibleSplit("delta must be >= 1".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::InfeasibleSplit("ensemble size must be >= 1".into()));
        }
        let train = self.train_len(n);
        if train + 2 * self.delta > n {
            return Err(Error::InfeasibleSplit(format!(
                "{train} training + 2 x {} windows exceed series length {n}",
                self.delta
            )));
        }
        let v = train + self.delta;
        Ok((0..train, train..v, v..v + self.delta))
    }
}

/// Fitted exponential-smoothing state, ready to forecast.
#[derive(Debug, Clone, PartialEq)]
struct Smoother {
    level: f64,
    trend: f64,
    /// The last full season of seasonal terms, oldest first.
    season: Vec<f64>,
    sse: f64,
}

impl Smoother {
    fn forecast(&self, horizon: usize) -> Vec<f64> {
        (1..=horizon)
            .map(|h| {
                let s = if self.season.is_empty() {
                    0.0
                } else {
                    self.season[(h - 1) % self.season.len()]
                };
                (self.level + h as f64 * self.trend + s).max(0.0)
            })
            .collect()
    }
}

fn ses(y: &[f64], alpha: f64) -> Smoother {
    let mut level = y[0];
    let mut sse = 0.0;
    for &v in &y[1..] {
        let e = v - level;
        sse += e * e;
        level += alpha * e;
    }
    Smoother { level, trend: 0.0, season: Vec::new(), sse }
}

fn holt(y: &[f64], alpha: f64, beta: f64) -> Smoother {
    let mut level = y[0];
    let mut trend = y[1] - y[0];
    let mut sse = 0.0;
    for &v in &y[1..] {
        let e = v - (level + trend);
        sse += e * e;
        let prev = level;
        level = alpha * v + (1.0 - alpha) * (level + trend);
        trend = beta * (level - prev) + (1.0 - beta) * trend;
    }
    Smoother { level, trend, season: Vec::new(), sse }
}

fn holt_winters(y: &[f64], m: usize, alpha: f64, beta: f64, gamma: f64) -> Smoother {
    let first: f64 = y[..m].iter().sum::<f64>() / m as f64;
    let second: f64 = y[m..2 * m].iter().sum::<f64>() / m as f64;
    let mut level = first;
    let mut trend = (second - first) / m as f64;
    let mut season: Vec<f64> = y[..m].iter().map(|v| v - first).collect();
    let mut sse = 0.0;
    for (t, &v) in y.iter().enumerate().skip(m) {
        let s = season[t - m];
        let e = v - (level + trend + s);
        sse += e * e;
        let prev = level;
        level = alpha * (v - s) + (1.0 - alpha) * (level + trend);
        trend = beta * (level - prev) + (1.0 - beta) * trend;
        season.push(gamma * (v - level) + (1.0 - gamma) * s);
    }
    let season = season[season.len() - m..].to_vec();
    Smoother { level, trend, season, sse }
}

fn linear_trend(y: &[f64]) -> Smoother {
    let n = y.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, &v) in y.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (v - y_mean);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = y_mean - slope * t_mean;
    let sse = y
        .iter()
        .enumerate()
        .map(|(t, v)| (v - intercept - slope * t as f64).powi(2))
        .sum();
    Smoother {
        level: intercept + slope * (n - 1.0),
        trend: slope,
        season: Vec::new(),
        sse,
    }
}

fn best_of(candidates: impl Iterator<Item = Smoother>) -> Smoother {
    candidates
        .reduce(|best, c| if c.sse < best.sse { c } else { best })
        .expect("smoothing grid is non-empty")
}

fn fit_smoother(y: &[f64], variant: ForecastVariant) -> Result<Smoother> {
    if y.len() < variant.min_train() {
        return Err(Error::invalid(format!(
            "{} needs at least {} training windows, got {}",
            variant.name(),
            variant.min_train(),
            y.len()
        )));
    }
    let grid = &SMOOTHING_GRID;
    Ok(match variant {
        ForecastVariant::Ses => best_of(grid.iter().map(|&a| ses(y, a))),
        ForecastVariant::HoltTrend => best_of(
            grid.iter()
                .flat_map(|&a| grid.iter().map(move |&b| holt(y, a, b))),
        ),
        ForecastVariant::HoltWintersSeasonal => best_of(grid.iter().flat_map(|&a| {
            grid.iter().flat_map(move |&b| {
                grid.iter().map(move |&g| holt_winters(y, SEASON, a, b, g))
            })
        })),
        ForecastVariant::LinearTrend => linear_trend(y),
    })
}

/// Forecasts `horizon` windows past the end of `train`, clamped at zero.
///
/// Smoothing constants are picked from `{0.1, ..., 0.9}` by one-step-ahead
/// squared error on the training data.
pub fn holt_winters_forecast(
    train: &PopularitySeries,
    horizon: usize,
    variant: ForecastVariant,
) -> Result<PopularitySeries> {
    let fitted = fit_smoother(train.values(), variant)?;
    PopularitySeries::new(fitted.forecast(horizon), train.window_length(), None)
}

/// One ensemble member scored on the validation block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    /// Seed for a fitted model, variant name for a baseline.
    pub label: String,
    pub validation_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub model: ModelKind,
    pub selected: String,
    pub validation_rmse: f64,
    pub test_rmse: f64,
    pub members: Vec<EnsembleMember>,
}

/// Runs one model family through the train/validation/test protocol.
///
/// `config` is used for every fitted-model ensemble member, with the seed
/// replaced by `seed + j` for member `j`.
pub fn run_protocol(
    series: &PopularitySeries,
    model: ModelKind,
    split: &SplitSpec,
    seed: u64,
    config: &FitConfig,
) -> Result<ProtocolOutcome> {
    let values = series.values();
    let (train, validation, test) = split.ranges(values.len())?;
    let horizon = 2 * split.delta;
    let train_values = &values[train.clone()];

    // each member is (label, forecast of validation + test windows)
    let members: Vec<(String, Vec<f64>)> = match model {
        ModelKind::PhoenixR => {
            let train_series = series.slice(train.start, train.end)?;
            (0..split.ensemble_size as u64)
                .map(|j| {
                    let s = seed.wrapping_add(j);
                    let fit = fit_phoenix_r(&train_series, &FitConfig { rng_seed: s, ..config.clone() })?;
                    let path = simulate(&fit.model, train.end + horizon)?.popularity;
                    Ok((format!("seed {s}"), path.values()[train.end..].to_vec()))
                })
                .collect::<Result<_>>()?
        }
        ModelKind::TemporalDynamics => {
            let feasible: Vec<_> = ForecastVariant::ALL
                .iter()
                .filter(|v| train_values.len() >= v.min_train())
                .take(split.ensemble_size)
                .collect();
            if feasible.is_empty() {
                return Err(Error::InfeasibleSplit(format!(
                    "{} training windows are too few for any baseline",
                    train_values.len()
                )));
            }
            feasible
                .into_iter()
                .map(|&v| Ok((v.name().to_string(), fit_smoother(train_values, v)?.forecast(horizon))))
                .collect::<Result<_>>()?
        }
    };

    let d = split.delta;
    let scored: Vec<EnsembleMember> = members
        .iter()
        .map(|(label, f)| {
            Ok(EnsembleMember {
                label: label.clone(),
                validation_rmse: rmse(&values[validation.clone()], &f[..d])?,
            })
        })
        .collect::<Result<_>>()?;
    // first member wins ties, keeping selection independent of float noise in ordering
    let best = (0..scored.len())
        .reduce(|b, i| if scored[i].validation_rmse < scored[b].validation_rmse { i } else { b })
        .expect("ensemble is non-empty");
    let test_rmse = rmse(&values[test], &members[best].1[d..])?;

    Ok(ProtocolOutcome {
        model,
        selected: scored[best].label.clone(),
        validation_rmse: scored[best].validation_rmse,
        test_rmse,
        members: scored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub series: String,
    pub model: ModelKind,
    pub split: f64,
    pub delta: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: ModelKind,
    pub split: f64,
    pub delta: usize,
    pub mean_rmse: f64,
    /// Half-width of the normal-approximation 95% interval of the mean.
    pub ci_half_width: f64,
    pub series_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub split: f64,
    pub delta: usize,
    /// Lowest mean RMSE; `None` when the best means tie.
    pub winner: Option<ModelKind>,
    /// The winner's interval does not overlap any other model's.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub per_series: Vec<ForecastRow>,
    pub aggregate: Vec<CellSummary>,
    pub cells: Vec<CellComparison>,
}

impl ForecastReport {
    /// Flat `series,model,split,delta,rmse` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.per_series {
            w.serialize(r).map_err(|e| Error::invalid(format!("csv output: {e}")))?;
        }
        w.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }
}

/// Mean and 95% half-width `1.96 * sd / sqrt(n)` with the sample standard deviation.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Z95 * var.sqrt() / (n as f64).sqrt())
}

/// Runs every model kind over every `(train fraction, delta)` cell.
///
/// Series are processed in parallel; rows come out in input order, then by
/// model, split and delta.
pub fn compare_models(
    series: &[(String, PopularitySeries)],
    models: &[ModelKind],
    train_fractions: &[f64],
    deltas: &[usize],
    ensemble_size: usize,
    seed: u64,
    config: &FitConfig,
) -> Result<ForecastReport> {
    if series.len() < 2 {
        return Err(Error::invalid("comparison needs at least two series"));
    }
    if models.is_empty() || train_fractions.is_empty() || deltas.is_empty() {
        return Err(Error::invalid("models, splits and deltas must be non-empty"));
    }
    let per_series: Vec<Vec<ForecastRow>> = series
        .par_iter()
        .map(|(id, s)| {
            let mut feasible = Vec::new();
            for &f in train_fractions {
                for &delta in deltas {
                    let split = SplitSpec { train_fraction: f, delta, ensemble_size };
                    match cell_feasible(s.len(), &split, models) {
                        Ok(()) => feasible.push(split),
                        Err(why) => log::warn!("series {id}: skipping split {f}, delta {delta}: {why}"),
                    }
                }
            }
            let mut rows = Vec::new();
            for &model in models {
                for split in &feasible {
                    let out = run_protocol(s, model, split, seed, config)
                        .map_err(|e| Error::invalid(format!("series {id}: {e}")))?;
                    rows.push(ForecastRow {
                        series: id.clone(),
                        model,
                        split: split.train_fraction,
                        delta: split.delta,
                        rmse: out.test_rmse,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let per_series: Vec<ForecastRow> = per_series.into_iter().flatten().collect();

    let mut aggregate = Vec::new();
    let mut cells = Vec::new();
    for &f in train_fractions {
        for &delta in deltas {
            let summaries: Vec<CellSummary> = models
                .iter()
                .map(|&model| {
                    let v: Vec<f64> = per_series
                        .iter()
                        .filter(|r| r.model == model && r.split == f && r.delta == delta)
                        .map(|r| r.rmse)
                        .collect();
                    let (mean_rmse, ci_half_width) = mean_ci(&v);
                    CellSummary { model, split: f, delta, mean_rmse, ci_half_width, series_count: v.len() }
                })
                .collect();
            cells.push(compare_cell(f, delta, &summaries));
            aggregate.extend(summaries);
        }
    }
    Ok(ForecastReport { per_series, aggregate, cells })
}

// Checked once for all models so that every cell compares the same series.
fn cell_feasible(n: usize, split: &SplitSpec, models: &[ModelKind]) -> Result<()> {
    split.ranges(n)?;
    let train = split.train_len(n);
    let needed = models
        .iter()
        .map(|m| match m {
            ModelKind::PhoenixR => MIN_FIT_WINDOWS,
            ModelKind::TemporalDynamics => ForecastVariant::Ses.min_train(),
        })
        .max()
        .unwrap_or(0);
    if train < needed {
        return Err(Error::InfeasibleSplit(format!(
            "{train} training windows, need {needed}"
        )));
    }
    Ok(())
}

fn compare_cell(split: f64, delta: usize, summaries: &[CellSummary]) -> CellComparison {
    if summaries.iter().any(|s| s.series_count == 0) {
        return CellComparison { split, delta, winner: None, significant: false };
    }
    let best = summaries
        .iter()
        .min_by(|a, b| a.mean_rmse.total_cmp(&b.mean_rmse))
        .expect("at least one model");
    let tie = |s: &CellSummary| {
        let scale = best.mean_rmse.abs().max(s.mean_rmse.abs()).max(1.0);
        (s.mean_rmse - best.mean_rmse).abs() <= TIE_TOLERANCE * scale
    };
    if summaries.iter().filter(|s| tie(s)).count() > 1 {
        return CellComparison { split, delta, winner: None, significant: false };
    }
    let significant = summaries.iter().filter(|s| s.model != best.model).all(|s| {
        best.mean_rmse + best.ci_half_width < s.mean_rmse - s.ci_half_width
    });
    CellComparison { split, delta, winner: Some(best.model), significant }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PhoenixRModel, ShockParams};

    fn series(v: Vec<f64>) -> PopularitySeries {
        PopularitySeries::from_values(v).unwrap()
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let s = series(vec![5.0; 30]);
        for v in ForecastVariant::ALL {
            let f = holt_winters_forecast(&s, 10, v).unwrap();
            assert!(f.values().iter().all(|x| (x - 5.0).abs() < 1e-12), "{v:?}: {:?}", f.values());
        }
    }

    #[test]
    fn holt_extrapolates_a_ramp() {
        let s = series((0..20).map(|t| 3.0 + 2.0 * t as f64).collect());
        let f = holt_winters_forecast(&s, 5, ForecastVariant::HoltTrend).unwrap();
        for (h, v) in f.values().iter().enumerate() {
            assert!((v - (3.0 + 2.0 * (19 + h + 1) as f64)).abs() < 1e-6);
        }
        let f = holt_winters_forecast(&s, 5, ForecastVariant::LinearTrend).unwrap();
        assert!((f.values()[4] - 51.0).abs() < 1e-9);
    }

    #[test]
    fn forecasts_are_clamped() {
        let s = series((0..10).map(|t| 90.0 - 10.0 * t as f64).collect());
        let f = holt_winters_forecast(&s, 20, ForecastVariant::LinearTrend).unwrap();
        assert!(f.values().iter().all(|&v| v >= 0.0));
        assert_eq!(f.values()[19], 0.0);
    }

    #[test]
    fn short_training_rejected() {
        let s = series(vec![1.0, 2.0, 3.0]);
        assert!(holt_winters_forecast(&s, 1, ForecastVariant::Ses).is_err());
        let s = series(vec![1.0; 13]);
        assert!(holt_winters_forecast(&s, 1, ForecastVariant::HoltWintersSeasonal).is_err());
        assert!(holt_winters_forecast(&s, 1, ForecastVariant::Ses).is_ok());
    }

    #[test]
    fn split_ranges_are_contiguous() {
        let (a, b, c) = SplitSpec::new(0.25, 7).ranges(100).unwrap();
        assert_eq!((a, b, c), (0..25, 25..32, 32..39));
        assert!(SplitSpec::new(0.5, 30).ranges(100).is_err());
        assert!(SplitSpec::new(0.5, 25).ranges(100).is_ok());
        assert!(matches!(SplitSpec::new(0.5, 0).ranges(100), Err(Error::InfeasibleSplit(_))));
    }

    #[test]
    fn td_on_constant_is_exact() {
        let s = series(vec![4.0; 60]);
        let out = run_protocol(&s, ModelKind::TemporalDynamics, &SplitSpec::new(0.5, 7), 0, &FitConfig::default()).unwrap();
        assert_eq!(out.test_rmse, 0.0);
        assert_eq!(out.members.len(), 4);
    }

    #[test]
    fn selected_member_has_min_validation_rmse() {
        let s = series((0..80).map(|t| 50.0 + 10.0 * (t as f64 * 0.9).sin() + t as f64).collect());
        let out = run_protocol(&s, ModelKind::TemporalDynamics, &SplitSpec::new(0.5, 7), 0, &FitConfig::default()).unwrap();
        let min = out.members.iter().map(|m| m.validation_rmse).fold(f64::INFINITY, f64::min);
        assert_eq!(out.validation_rmse, min);
    }

    #[test]
    fn phoenix_forecasts_its_own_dynamics() {
        let truth = PhoenixRModel::new(
            vec![
                ShockParams { s: 0, s0: 2000.0, beta: 0.6 / 2000.0, gamma: 0.2, omega: 1.0 },
                ShockParams { s: 40, s0: 2500.0, beta: 0.7 / 2500.0, gamma: 0.25, omega: 1.0 },
            ],
            None,
        )
        .unwrap();
        let s = simulate(&truth, 200).unwrap().popularity;
        let split = SplitSpec { train_fraction: 0.5, delta: 7, ensemble_size: 3 };
        let out = run_protocol(&s, ModelKind::PhoenixR, &split, 0, &FitConfig::default()).unwrap();
        let test_mean = s.values()[107..114].iter().sum::<f64>() / 7.0;
        assert!(out.test_rmse <= 0.1 * test_mean, "{} vs {}", out.test_rmse, test_mean);
        assert_eq!(out.members.len(), 3);
    }

    #[test]
    fn mean_ci_values() {
        assert_eq!(mean_ci(&[2.0]), (2.0, 0.0));
        let (m, h) = mean_ci(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((h - 1.96 * 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_corpus_ties() {
        let corpus: Vec<_> = (0..3).map(|i| (format!("s{i}"), series(vec![0.0; 80]))).collect();
        let report = compare_models(
            &corpus,
            &[ModelKind::PhoenixR, ModelKind::TemporalDynamics],
            &[0.25, 0.5],
            &[1, 7],
            2,
            0,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(report.per_series.len(), 3 * 2 * 2 * 2);
        assert!(report.per_series.iter().all(|r| r.rmse < 1e-12), "{:?}", report.per_series);
        assert!(report.cells.iter().all(|c| c.winner.is_none()));
    }
}
