//! Noisy series drawn from a known model, for recovery experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{simulate, PhoenixRModel};
use crate::series::PopularitySeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub model: PhoenixRModel,
    pub n: usize,
    /// Noise standard deviation as a fraction of the clean series' peak.
    pub noise: f64,
}

/// Generated series together with the model that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSeries {
    pub series: PopularitySeries,
    pub clean: PopularitySeries,
    pub truth: PhoenixRModel,
    pub noise: f64,
    pub seed: u64,
}

/// `simulate(model, n)` plus Gaussian noise, floored at zero.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticSeries> {
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(Error::invalid(format!("noise must be >= 0, got {}", spec.noise)));
    }
    let clean = simulate(&spec.model, spec.n)?.popularity;
    let sd = spec.noise * clean.max();
    let values = if sd > 0.0 {
        let normal = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        clean
            .values()
            .iter()
            .map(|v| (v + normal.sample(&mut rng)).max(0.0))
            .collect()
    } else {
        clean.values().to_vec()
    };
    Ok(SyntheticSeries {
        series: PopularitySeries::from_values(values)?,
        clean,
        truth: spec.model.clone(),
        noise: spec.noise,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ShockParams;

    fn flat(level: f64) -> PhoenixRModel {
        PhoenixRModel::new(
            vec![ShockParams {
                s: 0,
                s0: 10.0,
                beta: 0.0,
                gamma: 0.0,
                omega: level,
            }],
            None,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_equals_simulation() {
        let spec = SyntheticSpec { model: flat(3.0), n: 20, noise: 0.0 };
        let out = gen_synthetic(&spec, 1).unwrap();
        assert_eq!(out.series, simulate(&spec.model, 20).unwrap().popularity);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let spec = SyntheticSpec { model: flat(100.0), n: 50, noise: 0.1 };
        assert_eq!(gen_synthetic(&spec, 9).unwrap(), gen_synthetic(&spec, 9).unwrap());
        assert_ne!(gen_synthetic(&spec, 9).unwrap().series, gen_synthetic(&spec, 10).unwrap().series);
    }

    #[test]
    fn noise_scale_follows_peak() {
        let spec = SyntheticSpec { model: flat(1000.0), n: 20_000, noise: 0.05 };
        let out = gen_synthetic(&spec, 4).unwrap();
        let dev: Vec<f64> = out.series.values().iter().map(|v| v - 1000.0).collect();
        let mean = dev.iter().sum::<f64>() / dev.len() as f64;
        let sd = (dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (dev.len() - 1) as f64).sqrt();
        // standard error of the sample sd is about 50 / sqrt(2 * 20000) = 0.25
        assert!((sd - 50.0).abs() < 1.25, "{sd}");
        assert!(mean.abs() < 2.0);
    }

    #[test]
    fn negative_noise_rejected() {
        let spec = SyntheticSpec { model: flat(1.0), n: 5, noise: -0.1 };
        assert!(gen_synthetic(&spec, 0).is_err());
    }
}
