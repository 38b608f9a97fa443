//! Least-squares fitting of the model and selection of the number of shocks.
//!
//! Shock starts come from [`find_peaks`](crate::peaks::find_peaks): a
//! mandatory start at 0 followed by starts in descending order of peak
//! volume. Shocks are added one at a time; each candidate is refit with
//! Levenberg-Marquardt and scored by its description length, and the loop
//! stops once a candidate costs more than `(1 + epsilon)` times the best so far.

pub mod lm;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdl::{total_cost, MdlBreakdown};
use crate::model::{accumulate, PeriodParams, PhoenixRModel, ShockParams, DAILY_PERIOD};
use crate::peaks::{find_peaks_with, PeakFinderConfig};
use crate::series::PopularitySeries;

pub use lm::{levenberg_marquardt, LmOptions, LmOutcome};

/// Shortest series accepted by [`fit_phoenix_r`].
pub const MIN_FIT_WINDOWS: usize = 8;
/// Floor added to the mean squared error inside the BIC logarithm.
pub const BIC_FLOOR: f64 = 1e-12;
/// Random initializations tried before giving up on a non-finite objective.
const INIT_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Tolerated relative MDL increase over the best candidate before stopping.
    pub epsilon: f64,
    /// Initial susceptible populations tried for the first shock.
    pub s1_grid: Vec<f64>,
    pub max_lm_iterations: usize,
    pub lm_tolerance: f64,
    pub rng_seed: u64,
    pub period_enabled: bool,
    /// Period length in windows (7 for daily series, 24 for hourly).
    pub period_e: f64,
    /// Random initializations per start configuration; the best is kept.
    pub restarts: usize,
    pub peaks: PeakFinderConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            s1_grid: vec![1e3, 1e4, 1e5, 1e6],
            max_lm_iterations: 200,
            lm_tolerance: 1e-8,
            rng_seed: 0,
            period_enabled: false,
            period_e: DAILY_PERIOD,
            restarts: 2,
            peaks: PeakFinderConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be > 0"));
        }
        if self.s1_grid.is_empty() || self.s1_grid.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("s1_grid must be non-empty and positive"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be >= 1"));
        }
        if !(self.period_e > 0.0) {
            return Err(Error::invalid("period_e must be > 0"));
        }
        Ok(())
    }

    fn lm_options(&self) -> LmOptions {
        LmOptions {
            max_iterations: self.max_lm_iterations,
            tolerance: self.lm_tolerance,
            ..LmOptions::default()
        }
    }
}

/// One evaluated shock count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub shocks: usize,
    pub sse: f64,
    pub mdl_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: PhoenixRModel,
    pub mdl: MdlBreakdown,
    pub rmse: f64,
    pub bic: f64,
    /// Candidate shock counts evaluated before stopping.
    pub shocks_tried: usize,
    pub converged: bool,
    /// Clamped simulation steps of the selected model.
    pub clamp_events: usize,
    /// All candidate starts offered by the peak finder.
    pub starts: Vec<usize>,
    pub candidates: Vec<Candidate>,
}

/// Output of a single least-squares fit with fixed shock starts.
#[derive(Debug, Clone, PartialEq)]
pub struct LmFit {
    pub model: PhoenixRModel,
    pub sse: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after every accepted step.
    pub trace: Vec<f64>,
}

/// Maps an unconstrained vector onto valid model parameters.
///
/// Per shock: `ln S0`, `ln(beta * S0)`, `logit gamma`, `ln omega`; then
/// `logit m` and `h` when a period is fitted.
#[derive(Debug, Clone)]
struct Layout {
    starts: Vec<usize>,
    period_e: Option<f64>,
}

const GAMMA_EDGE: f64 = 1e-9;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(GAMMA_EDGE, 1.0 - GAMMA_EDGE);
    (p / (1.0 - p)).ln()
}

impl Layout {
    fn len(&self) -> usize {
        4 * self.starts.len() + if self.period_e.is_some() { 2 } else { 0 }
    }

    fn decode(&self, x: &[f64]) -> PhoenixRModel {
        let shocks = self
            .starts
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let v = &x[4 * i..4 * i + 4];
                let s0 = v[0].exp();
                ShockParams {
                    s,
                    s0,
                    beta: v[1].exp() / s0,
                    gamma: sigmoid(v[2]),
                    omega: v[3].exp(),
                }
            })
            .collect();
        let period = self.period_e.map(|e| {
            let base = 4 * self.starts.len();
            PeriodParams {
                m: sigmoid(x[base]),
                h: x[base + 1],
                e,
            }
        });
        PhoenixRModel { shocks, period }
    }

    fn encode(&self, model: &PhoenixRModel) -> Vec<f64> {
        let tiny = f64::MIN_POSITIVE;
        let mut x = Vec::with_capacity(self.len());
        for s in &model.shocks {
            x.push(s.s0.max(tiny).ln());
            x.push((s.beta * s.s0).max(tiny).ln());
            x.push(logit(s.gamma));
            x.push(s.omega.max(tiny).ln());
        }
        if self.period_e.is_some() {
            let p = model.period.unwrap_or(PeriodParams {
                m: 0.5,
                h: 0.0,
                e: self.period_e.unwrap_or(DAILY_PERIOD),
            });
            x.push(logit(p.m));
            x.push(p.h);
        }
        x
    }
}

/// Writes `observed - model` for the decoded parameters.
fn residuals(layout: &Layout, observed: &[f64], x: &[f64], out: &mut [f64]) {
    let model = layout.decode(x);
    out.fill(0.0);
    accumulate(&model, out, None);
    for (r, o) in out.iter_mut().zip(observed) {
        *r = o - *r;
    }
}

/// A random shock that always spreads: its reproduction number `beta * S0 / gamma`
/// lies in `[1, 4]`, and `omega` is log-uniform on `[0.1, 10]`.
fn random_shock(rng: &mut ChaCha8Rng, s: usize, s0: f64) -> ShockParams {
    let gamma: f64 = rng.random_range(0.01..0.99);
    let reproduction: f64 = rng.random_range(1.0..4.0);
    let omega = 10f64.powf(rng.random_range(-1.0..1.0));
    ShockParams {
        s,
        s0,
        beta: reproduction * gamma / s0,
        gamma,
        omega,
    }
}

fn random_period(rng: &mut ChaCha8Rng, e: f64) -> PeriodParams {
    PeriodParams {
        m: rng.random(),
        h: rng.random::<f64>() * e,
        e,
    }
}

fn run_lm(
    observed: &[f64],
    layout: &Layout,
    init: &PhoenixRModel,
    config: &FitConfig,
) -> LmFit {
    let x0 = layout.encode(init);
    let out = levenberg_marquardt(
        &x0,
        observed.len(),
        |x, r| residuals(layout, observed, x, r),
        &config.lm_options(),
    );
    LmFit {
        model: layout.decode(&out.params),
        sse: out.objective,
        converged: out.converged,
        iterations: out.iterations,
        trace: out.trace,
    }
}

fn sse_of(observed: &[f64], layout: &Layout, model: &PhoenixRModel) -> f64 {
    let mut r = vec![0.0; observed.len()];
    residuals(layout, observed, &layout.encode(model), &mut r);
    r.iter().map(|v| v * v).sum()
}

/// Fits with starts held fixed; random initialization when `init` is `None`.
///
/// The random draw uses `config.rng_seed`, with the first shock's population
/// taken from the first entry of `s1_grid` and later shocks from 1000.
pub fn lm_fit(
    series: &PopularitySeries,
    starts: &[usize],
    config: &FitConfig,
    init: Option<&PhoenixRModel>,
) -> Result<LmFit> {
    config.validate()?;
    let n = series.len();
    if starts.is_empty() {
        return Err(Error::invalid("need at least one shock start"));
    }
    if let Some(&bad) = starts.iter().find(|&&s| s >= n) {
        return Err(Error::invalid(format!("shock start {bad} outside series of length {n}")));
    }
    let layout = Layout {
        starts: starts.to_vec(),
        period_e: config.period_enabled.then_some(config.period_e),
    };
    let init = match init {
        Some(m) => {
            m.validate()?;
            if m.shocks.len() != starts.len() {
                return Err(Error::invalid("initial model and starts disagree on shock count"));
            }
            let mut m = m.clone();
            for (shock, &s) in m.shocks.iter_mut().zip(starts) {
                shock.s = s;
            }
            m
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            draw_finite(series.values(), &layout, |rng| {
                let shocks = starts
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| random_shock(rng, s, if i == 0 { config.s1_grid[0] } else { 1e3 }))
                    .collect();
                let period = layout.period_e.map(|e| random_period(rng, e));
                PhoenixRModel { shocks, period }
            }, &mut rng)?
        }
    };
    Ok(run_lm(series.values(), &layout, &init, config))
}

/// Draws initial models until one gives a finite objective.
fn draw_finite(
    observed: &[f64],
    layout: &Layout,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> PhoenixRModel,
    rng: &mut ChaCha8Rng,
) -> Result<PhoenixRModel> {
    for _ in 0..INIT_REDRAWS {
        let model = draw(rng);
        if sse_of(observed, layout, &model).is_finite() {
            return Ok(model);
        }
    }
    Err(Error::Fit(format!(
        "objective not finite after {INIT_REDRAWS} random initializations"
    )))
}

/// Best of several initializations: the previous fit plus a random newest
/// shock, and fully random draws with every shock at its peak volume (the
/// first shock cycling through the population grid).
fn fit_candidate(
    observed: &[f64],
    layout: &Layout,
    previous: Option<&PhoenixRModel>,
    volumes: &[f64],
    config: &FitConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LmFit> {
    let new_start = *layout.starts.last().expect("layout has shocks");
    let mut inits = Vec::new();
    if let Some(prev) = previous {
        let s0 = volumes[layout.starts.len() - 1].max(1.0);
        for _ in 0..config.restarts {
            inits.push(draw_finite(observed, layout, |rng| {
                let mut m = prev.clone();
                m.shocks.push(random_shock(rng, new_start, s0));
                m
            }, rng)?);
        }
    }
    for &s1 in &config.s1_grid {
        for _ in 0..config.restarts {
            inits.push(draw_finite(observed, layout, |rng| PhoenixRModel {
                shocks: layout
                    .starts
                    .iter()
                    .enumerate()
                    .map(|(j, &s)| random_shock(rng, s, if j == 0 { s1 } else { volumes[j].max(1.0) }))
                    .collect(),
                period: layout.period_e.map(|e| random_period(rng, e)),
            }, rng)?);
        }
    }
    let mut best: Option<LmFit> = None;
    for init in &inits {
        let fit = run_lm(observed, layout, init, config);
        if best.as_ref().is_none_or(|b| fit.sse < b.sse) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one initialization"))
}

/// Fits the model and selects the number of shocks by description length.
pub fn fit_phoenix_r(series: &PopularitySeries, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let n = series.len();
    if n < MIN_FIT_WINDOWS {
        return Err(Error::invalid(format!(
            "need at least {MIN_FIT_WINDOWS} windows to fit, got {n}"
        )));
    }
    let observed = series.values();
    let candidates_list = find_peaks_with(observed, &config.peaks);
    let starts = candidates_list.starts.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut previous: Option<PhoenixRModel> = None;
    let mut best: Option<(LmFit, MdlBreakdown)> = None;
    let mut min_cost = f64::INFINITY;
    let mut candidates = Vec::new();
    let mut modeled = vec![0.0; n];

    for i in 1..=starts.len() {
        let layout = Layout {
            starts: starts[..i].to_vec(),
            period_e: config.period_enabled.then_some(config.period_e),
        };
        let fit = fit_candidate(
            observed,
            &layout,
            previous.as_ref(),
            &candidates_list.peak_volumes[..i],
            config,
            &mut rng,
        )?;
        modeled.fill(0.0);
        accumulate(&fit.model, &mut modeled, None);
        let mdl = total_cost(observed, &modeled, &fit.model, n)?;
        debug!("{i} shocks: sse {:.6e}, mdl {:.3}", fit.sse, mdl.total);
        candidates.push(Candidate {
            shocks: i,
            sse: fit.sse,
            mdl_total: mdl.total,
        });
        previous = Some(fit.model.clone());
        if mdl.total < min_cost {
            min_cost = mdl.total;
            best = Some((fit, mdl));
        }
        // residual code lengths go negative on near-exact fits, so scale by |min|
        if mdl.total > min_cost + config.epsilon * min_cost.abs() {
            break;
        }
    }

    let (fit, mdl) = best.expect("the zero start is always evaluated");
    modeled.fill(0.0);
    let clamp_events = accumulate(&fit.model, &mut modeled, None);
    Ok(FitResult {
        rmse: rmse(observed, &modeled)?,
        bic: bic(observed, &modeled, parameter_count(&fit.model))?,
        shocks_tried: candidates.len(),
        converged: fit.converged,
        clamp_events,
        starts,
        candidates,
        mdl,
        model: fit.model,
    })
}

/// Free parameters for BIC: five per shock plus two for a period.
pub fn parameter_count(model: &PhoenixRModel) -> usize {
    5 * model.shocks.len() + if model.period.is_some() { 2 } else { 0 }
}

pub fn rmse(observed: &[f64], modeled: &[f64]) -> Result<f64> {
    if observed.len() != modeled.len() {
        return Err(Error::LengthMismatch {
            observed: observed.len(),
            modeled: modeled.len(),
        });
    }
    if observed.is_empty() {
        return Err(Error::invalid("rmse of an empty series"));
    }
    let sse: f64 = observed
        .iter()
        .zip(modeled)
        .map(|(o, m)| (o - m) * (o - m))
        .sum();
    Ok((sse / observed.len() as f64).sqrt())
}

/// Gaussian-likelihood BIC: `n ln(SSE/n + floor) + k ln n`.
pub fn bic(observed: &[f64], modeled: &[f64], k: usize) -> Result<f64> {
    if observed.len() != modeled.len() {
        return Err(Error::LengthMismatch {
            observed: observed.len(),
            modeled: modeled.len(),
        });
    }
    if observed.is_empty() {
        return Err(Error::invalid("bic of an empty series"));
    }
    let n = observed.len() as f64;
    let sse: f64 = observed
        .iter()
        .zip(modeled)
        .map(|(o, m)| (o - m) * (o - m))
        .sum();
    Ok(n * (sse / n + BIC_FLOOR).ln() + k as f64 * n.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;

    fn truth() -> PhoenixRModel {
        PhoenixRModel::new(
            vec![ShockParams {
                s: 0,
                s0: 2000.0,
                beta: 0.0004,
                gamma: 0.2,
                omega: 0.8,
            }],
            None,
        )
        .unwrap()
    }

    #[test]
    fn rmse_values() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 12.5f64.sqrt());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bic_values() {
        let x = vec![1.0; 100];
        let perfect = bic(&x, &x, 5).unwrap();
        assert_eq!(perfect, 100.0 * BIC_FLOOR.ln() + 5.0 * 100f64.ln());
        let y = vec![2.0; 100];
        assert!(bic(&x, &y, 6).unwrap() > bic(&x, &y, 5).unwrap());
    }

    #[test]
    fn layout_round_trip() {
        let layout = Layout {
            starts: vec![0, 12],
            period_e: Some(7.0),
        };
        let model = PhoenixRModel {
            shocks: vec![truth().shocks[0], ShockParams { s: 12, s0: 50.0, beta: 0.01, gamma: 0.5, omega: 2.0 }],
            period: Some(PeriodParams { m: 0.3, h: 1.5, e: 7.0 }),
        };
        let back = layout.decode(&layout.encode(&model));
        for (a, b) in model.shocks.iter().zip(&back.shocks) {
            assert!((a.s0 - b.s0).abs() < 1e-9 * a.s0);
            assert!((a.beta - b.beta).abs() < 1e-12);
            assert!((a.gamma - b.gamma).abs() < 1e-12);
            assert!((a.omega - b.omega).abs() < 1e-12);
        }
        let p = back.period.unwrap();
        assert!((p.m - 0.3).abs() < 1e-12 && p.h == 1.5 && p.e == 7.0);
    }

    #[test]
    fn zero_residual_start_stays_put() {
        let m = truth();
        let series = simulate(&m, 60).unwrap().popularity;
        let fit = lm_fit(&series, &[0], &FitConfig::default(), Some(&m)).unwrap();
        assert!(fit.sse < 1e-12, "{}", fit.sse);
    }

    #[test]
    fn accepted_steps_never_increase_objective() {
        let series = simulate(&truth(), 60).unwrap().popularity;
        let fit = lm_fit(&series, &[0], &FitConfig { rng_seed: 3, ..FitConfig::default() }, None).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.sse <= fit.trace[0]);
    }

    #[test]
    fn lm_fit_rejects_bad_starts() {
        let series = simulate(&truth(), 20).unwrap().popularity;
        assert!(lm_fit(&series, &[], &FitConfig::default(), None).is_err());
        assert!(lm_fit(&series, &[20], &FitConfig::default(), None).is_err());
    }

    #[test]
    fn too_short_to_fit() {
        let s = PopularitySeries::from_values(vec![1.0; 7]).unwrap();
        assert!(fit_phoenix_r(&s, &FitConfig::default()).is_err());
    }

    #[test]
    fn zero_series_fits_one_silent_shock() {
        let s = PopularitySeries::from_values(vec![0.0; 40]).unwrap();
        let fit = fit_phoenix_r(&s, &FitConfig::default()).unwrap();
        assert_eq!(fit.model.shocks.len(), 1);
        assert_eq!(fit.model.shocks[0].s, 0);
        assert!(fit.rmse < 1e-6, "{}", fit.rmse);
    }

    #[test]
    fn same_seed_same_fit() {
        let series = simulate(&truth(), 80).unwrap().popularity;
        let cfg = FitConfig { rng_seed: 11, ..FitConfig::default() };
        let a = fit_phoenix_r(&series, &cfg).unwrap();
        let b = fit_phoenix_r(&series, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
