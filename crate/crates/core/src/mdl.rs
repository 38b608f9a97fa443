//! Description length of a fitted model, in bits.
//!
//! Total cost = cost of the series length + cost of the parameters + cost of
//! the residuals under a Gaussian fitted to them. Logarithms are base 2.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PhoenixRModel;

/// Bits charged per real-valued parameter.
pub const FLOAT_COST: f64 = 64.0;
/// Residual standard deviation floor.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdlBreakdown {
    pub data_size_cost: f64,
    pub param_cost: f64,
    pub residual_cost: f64,
    pub total: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// Universal code length for a positive integer.
pub fn log_star(x: u64) -> Result<f64> {
    if x < 1 {
        return Err(Error::invalid("log* is defined for integers >= 1"));
    }
    Ok(log_star_real(x as f64))
}

fn log_star_real(mut x: f64) -> f64 {
    let mut bits = 1.0;
    while x > 1.0 {
        x = x.log2();
        bits += 1.0;
    }
    bits
}

/// S0 as coded: nearest integer, at least 1.
fn coded_population(s0: f64) -> u64 {
    if s0.is_finite() && s0 > 1.0 {
        s0.round() as u64
    } else {
        1
    }
}

/// Per shock: start time, initial population, and three rates; plus the shock count.
///
/// Period parameters are left out: they cost the same for every candidate.
pub fn param_cost(model: &PhoenixRModel, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::invalid("series length must be >= 1"));
    }
    if model.shocks.is_empty() {
        return Err(Error::invalid("model needs at least one shock"));
    }
    let start_cost = log_star(n as u64)?;
    let mut cost = 0.0;
    for shock in &model.shocks {
        cost += start_cost + log_star(coded_population(shock.s0))? + 3.0 * FLOAT_COST;
    }
    Ok(cost + log_star(model.shocks.len() as u64)?)
}

/// Residual coding cost with its fitted Gaussian `(bits, mu, sigma)`.
pub fn residual_cost(observed: &[f64], modeled: &[f64]) -> Result<(f64, f64, f64)> {
    if observed.len() != modeled.len() {
        return Err(Error::LengthMismatch {
            observed: observed.len(),
            modeled: modeled.len(),
        });
    }
    if observed.is_empty() {
        return Err(Error::invalid("cannot code an empty series"));
    }
    let residuals: Vec<f64> = observed.iter().zip(modeled).map(|(o, m)| o - m).collect();
    Ok(gaussian_code_length(&residuals))
}

pub(crate) fn gaussian_code_length(residuals: &[f64]) -> (f64, f64, f64) {
    let n = residuals.len() as f64;
    let mu = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt().max(SIGMA_FLOOR);
    let norm = (sigma * (2.0 * PI).sqrt()).ln();
    let nats: f64 = residuals
        .iter()
        .map(|r| (r - mu).powi(2) / (2.0 * sigma * sigma) + norm)
        .sum();
    (nats / LN_2, mu, sigma)
}

pub fn total_cost(
    observed: &[f64],
    modeled: &[f64],
    model: &PhoenixRModel,
    n: usize,
) -> Result<MdlBreakdown> {
    let data_size_cost = log_star(n as u64)?;
    let param_cost = param_cost(model, n)?;
    let (residual_cost, mu, sigma) = residual_cost(observed, modeled)?;
    Ok(MdlBreakdown {
        data_size_cost,
        param_cost,
        residual_cost,
        total: data_size_cost + param_cost + residual_cost,
        mu,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ShockParams;

    fn rec(x: f64) -> f64 {
        if x > 1.0 {
            1.0 + rec(x.log2())
        } else {
            1.0
        }
    }

    fn model(n_shocks: usize, s0: f64) -> PhoenixRModel {
        let shock = ShockParams {
            s: 0,
            s0,
            beta: 0.001,
            gamma: 0.1,
            omega: 1.0,
        };
        PhoenixRModel::new(vec![shock; n_shocks], None).unwrap()
    }

    #[test]
    fn log_star_small_values() {
        assert_eq!(log_star(1).unwrap(), 1.0);
        assert_eq!(log_star(2).unwrap(), 2.0);
        assert_eq!(log_star(1000).unwrap(), rec(1000.0));
        assert_eq!(log_star(1000).unwrap(), 5.0);
        assert!(log_star(0).is_err());
    }

    #[test]
    fn one_shock_param_cost() {
        let got = param_cost(&model(1, 1000.0), 100).unwrap();
        assert_eq!(got, rec(100.0) + rec(1000.0) + 192.0 + rec(1.0));
    }

    #[test]
    fn more_shocks_cost_more() {
        let one = param_cost(&model(1, 1000.0), 100).unwrap();
        let two = param_cost(&model(2, 1000.0), 100).unwrap();
        let shock_term = one - 1.0;
        assert!(two - log_star(2).unwrap() >= 2.0 * shock_term);
        assert!(two > 2.0 * one - 2.0);
        assert!(two > one);
    }

    #[test]
    fn fractional_population_is_rounded() {
        let a = param_cost(&model(1, 0.2), 10).unwrap();
        let b = param_cost(&model(1, 1.0), 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perfect_fit_hits_sigma_floor() {
        let x = [1.0, 2.0, 3.0];
        let (bits, mu, sigma) = residual_cost(&x, &x).unwrap();
        assert_eq!((mu, sigma), (0.0, SIGMA_FLOOR));
        let per = -(1.0 / (SIGMA_FLOOR * (2.0 * PI).sqrt())).log2();
        assert!((bits - 3.0 * per).abs() < 1e-9);
        assert!(bits < 0.0);
    }

    #[test]
    fn smaller_residuals_cost_less() {
        let obs = [0.0; 6];
        let wide = [3.0, -3.0, 2.0, -2.0, 1.0, -1.0];
        let narrow: Vec<f64> = wide.iter().map(|r| r / 2.0).collect();
        let (a, _, _) = residual_cost(&obs, &wide).unwrap();
        let (b, _, _) = residual_cost(&obs, &narrow).unwrap();
        assert!(b < a);
    }

    #[test]
    fn residual_cost_checks_lengths() {
        assert!(matches!(
            residual_cost(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn total_adds_components() {
        let m = model(1, 500.0);
        let obs = [5.0, 7.0, 6.0, 9.0];
        let fit = [5.5, 6.0, 6.5, 8.0];
        let b = total_cost(&obs, &fit, &m, 4).unwrap();
        assert_eq!(b.total, b.data_size_cost + b.param_cost + b.residual_cost);
        let extra = total_cost(&obs, &fit, &model(2, 500.0), 4).unwrap();
        assert!(extra.param_cost > b.param_cost);
        assert_eq!(extra.residual_cost, b.residual_cost);
        assert!(extra.total > b.total);
    }
}
