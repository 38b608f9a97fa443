//! Forward simulation of the multi-shock SIR-with-revisits model.
//!
//! Each shock is an isolated SIR population seeded with one infected
//! individual. Infected individuals visit the object at a Poisson rate
//! `omega`, so a shock contributes `omega * I(t)` accesses per window. The
//! model output is the sum of all shocks, each shifted to its start window.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::PopularitySeries;

/// Period length for daily series (one week).
pub const DAILY_PERIOD: f64 = 7.0;
/// Period length for hourly series (one day).
pub const HOURLY_PERIOD: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockParams {
    /// Start window.
    pub s: usize,
    /// Initial susceptible population.
    #[serde(rename = "S0")]
    pub s0: f64,
    /// Infection strength per susceptible-infected pair per window.
    pub beta: f64,
    /// Recovery rate per window.
    pub gamma: f64,
    /// Visits per infected individual per window.
    pub omega: f64,
}

impl ShockParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.s0) && self.s0 > 0.0) {
            return Err(Error::invalid(format!("S0 must be > 0, got {}", self.s0)));
        }
        if !(ok(self.omega) && self.omega > 0.0) {
            return Err(Error::invalid(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(ok(self.beta) && self.beta >= 0.0) {
            return Err(Error::invalid(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(ok(self.gamma) && self.gamma >= 0.0) {
            return Err(Error::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Window at which this shock's own clock reads zero.
    ///
    /// A shock at `s = 0` is present from the first window; later shocks
    /// first contribute at `s + 1`.
    pub fn offset(&self) -> usize {
        if self.s == 0 {
            0
        } else {
            self.s + 1
        }
    }
}

/// Sinusoidal modulation of the visit rate shared by all shocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodParams {
    /// Amplitude in `[0, 1]`.
    pub m: f64,
    /// Phase shift in windows.
    pub h: f64,
    /// Period length in windows.
    pub e: f64,
}

impl PeriodParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && (0.0..=1.0).contains(&self.m)) {
            return Err(Error::invalid(format!("period m must lie in [0, 1], got {}", self.m)));
        }
        if !self.h.is_finite() {
            return Err(Error::invalid("period h must be finite"));
        }
        if !(self.e.is_finite() && self.e > 0.0) {
            return Err(Error::invalid(format!("period e must be > 0, got {}", self.e)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoenixRModel {
    pub shocks: Vec<ShockParams>,
    pub period: Option<PeriodParams>,
}

impl PhoenixRModel {
    pub fn new(shocks: Vec<ShockParams>, period: Option<PeriodParams>) -> Result<Self> {
        let model = Self { shocks, period };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shocks.is_empty() {
            return Err(Error::invalid("model needs at least one shock"));
        }
        for (i, s) in self.shocks.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::invalid(format!("shocks[{i}]: {e}")))?;
        }
        if let Some(p) = &self.period {
            p.validate().map_err(|e| Error::invalid(format!("period: {e}")))?;
        }
        Ok(())
    }

    /// Total population, `sum(S0_i + 1)`.
    pub fn population(&self) -> f64 {
        self.shocks.iter().map(|s| s.s0 + 1.0).sum()
    }

    /// Parses and validates model JSON, reporting the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let model: PhoenixRModel = serde_path_to_error::deserialize(de).map_err(|e| {
            Error::invalid(format!("model JSON at `{}`: {}", e.path(), e.inner()))
        })?;
        model.validate()?;
        Ok(model)
    }
}

/// Compartment sizes of one shock at one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShockState {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

#[derive(Debug, Clone)]
pub struct ShockRun {
    pub popularity: PopularitySeries,
    pub audience: PopularitySeries,
    pub states: Vec<ShockState>,
    /// Steps where a flow had to be clamped to keep compartments non-negative.
    pub clamped_steps: usize,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub popularity: PopularitySeries,
    pub audience: PopularitySeries,
    /// `popularity - audience`, floored at zero.
    pub revisits: PopularitySeries,
    pub clamped_steps: usize,
}

/// Modulated visit rate at window `t`.
pub fn omega_at(base_omega: f64, period: &PeriodParams, t: f64) -> f64 {
    let wave = (2.0 * PI * (t + period.h) / period.e).sin() + 1.0;
    base_omega * (1.0 - period.m / 2.0 * wave)
}

/// Probability of `k` visits in `tau` windows at Poisson rate `omega`.
pub fn visit_probability(omega: f64, tau: f64, k: u64) -> f64 {
    let mean = omega * tau;
    if mean <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
    (k as f64 * mean.ln() - mean - ln_fact).exp()
}

/// Probability that an infected individual visits at least once before recovering.
pub(crate) fn first_visit_probability(omega: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        -(-omega / gamma).exp_m1()
    }
}

/// Steps one shock for `len` windows of its own clock.
///
/// `visit(tau, state, entering)` is called for every window, where `entering`
/// is the number of individuals newly infected at `tau` (the seed at 0).
/// Returns the number of clamped steps.
#[inline]
pub(crate) fn run_shock(
    params: &ShockParams,
    len: usize,
    mut visit: impl FnMut(usize, ShockState, f64),
) -> usize {
    let mut st = ShockState {
        s: params.s0,
        i: 1.0,
        r: 0.0,
    };
    let mut clamped = 0;
    if len == 0 {
        return 0;
    }
    visit(0, st, 1.0);
    for tau in 1..len {
        let mut infections = params.beta * st.s * st.i;
        let mut recoveries = params.gamma * st.i;
        let mut hit = false;
        if infections > st.s {
            infections = st.s;
            hit = true;
        }
        if recoveries > st.i {
            recoveries = st.i;
            hit = true;
        }
        clamped += hit as usize;
        st = ShockState {
            s: st.s - infections,
            i: st.i + infections - recoveries,
            r: st.r + recoveries,
        };
        visit(tau, st, infections);
    }
    clamped
}

pub fn simulate_shock(params: &ShockParams, n: usize) -> Result<ShockRun> {
    if n < 1 {
        return Err(Error::invalid("need at least one window"));
    }
    params.validate()?;
    let q = first_visit_probability(params.omega, params.gamma);
    let mut p = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let clamped_steps = run_shock(params, n, |_, st, entering| {
        p.push(params.omega * st.i);
        a.push(q * entering);
        states.push(st);
    });
    Ok(ShockRun {
        popularity: PopularitySeries::from_model_output(p),
        audience: PopularitySeries::from_model_output(a),
        states,
        clamped_steps,
    })
}

/// Adds every shock's popularity (and optionally audience) into the buffers.
pub(crate) fn accumulate(
    model: &PhoenixRModel,
    popularity: &mut [f64],
    mut audience: Option<&mut [f64]>,
) -> usize {
    let n = popularity.len();
    let mut clamped = 0;
    for shock in &model.shocks {
        let offset = shock.offset();
        if offset >= n {
            continue;
        }
        let len = n - offset;
        match &model.period {
            None => {
                let q = first_visit_probability(shock.omega, shock.gamma);
                clamped += run_shock(shock, len, |tau, st, entering| {
                    popularity[offset + tau] += shock.omega * st.i;
                    if let Some(a) = audience.as_deref_mut() {
                        a[offset + tau] += q * entering;
                    }
                });
            }
            Some(period) => {
                clamped += run_shock(shock, len, |tau, st, entering| {
                    let t = offset + tau;
                    let w = omega_at(shock.omega, period, t as f64);
                    popularity[t] += w * st.i;
                    if let Some(a) = audience.as_deref_mut() {
                        a[t] += first_visit_probability(w, shock.gamma) * entering;
                    }
                });
            }
        }
    }
    clamped
}

pub fn simulate(model: &PhoenixRModel, n: usize) -> Result<Simulation> {
    if n < 1 {
        return Err(Error::invalid("need at least one window"));
    }
    model.validate()?;
    let mut p = vec![0.0; n];
    let mut a = vec![0.0; n];
    let clamped_steps = accumulate(model, &mut p, Some(&mut a));
    let r: Vec<f64> = p.iter().zip(&a).map(|(p, a)| (p - a).max(0.0)).collect();
    Ok(Simulation {
        popularity: PopularitySeries::from_model_output(p),
        audience: PopularitySeries::from_model_output(a),
        revisits: PopularitySeries::from_model_output(r),
        clamped_steps,
    })
}
