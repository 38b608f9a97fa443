//! Peak detection with a Mexican-hat continuous wavelet transform.
//!
//! Local maxima of the transform are chained across scales into ridge lines,
//! coarse to fine. A ridge that persists across enough scales and stands out
//! from the fine-scale noise marks a peak. The ridge's finest-scale position
//! is the peak position, the scale where the ridge is strongest gives its
//! half-width, and `position - half_width` gives the start of the shock that
//! produced it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::characterize::quantile_sorted;
use crate::error::{Error, Result};
use crate::series::PopularitySeries;

/// Half-widths searched for peaks.
pub const DEFAULT_SCALES: [f64; 9] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0];

/// Kernel support, in multiples of the scale, on each side of the center.
const KERNEL_HALF_WIDTH: f64 = 8.0;

/// Noise levels below this fraction of the largest fine-scale coefficient are
/// treated as numerical zero, so that round-off ripples never pass as peaks.
const NOISE_FLOOR_FRACTION: f64 = 1e-3;

/// Windows before the first peak count as quiet below this fraction of its height.
const QUIET_PREFIX_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFinderConfig {
    pub scales: Vec<f64>,
    /// Rows a ridge may skip before it is closed; `None` means `ceil(smallest scale)`.
    pub gap_thresh: Option<usize>,
    /// A maximum links to a ridge no further than `scale * max_distance_factor` columns away.
    pub max_distance_factor: f64,
    /// `None` means a quarter of the scales in use, rounded up.
    pub min_ridge_length: Option<usize>,
    pub min_snr: f64,
    /// Percentile of the absolute fine-scale coefficients taken as the noise level.
    pub noise_percentile: f64,
    /// Half-width of the noise window around a peak; `None` means a window
    /// spanning a twentieth of the series.
    pub noise_window: Option<usize>,
    /// Wavelet width used for a half-width `l` is `sigma_per_half_width * l`.
    pub sigma_per_half_width: f64,
}

impl Default for PeakFinderConfig {
    fn default() -> Self {
        Self {
            scales: DEFAULT_SCALES.to_vec(),
            gap_thresh: None,
            max_distance_factor: 0.25,
            min_ridge_length: None,
            min_snr: 3.0,
            noise_percentile: 95.0,
            noise_window: None,
            sigma_per_half_width: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub k: usize,
    pub l: f64,
    pub snr: f64,
    pub ridge_length: usize,
}

/// Candidate shock starts: a leading 0, then starts by descending peak volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockCandidateList {
    pub starts: Vec<usize>,
    /// Series value at the peak behind each start (the first window for a bare leading 0).
    pub peak_volumes: Vec<f64>,
    /// Every accepted peak, by position.
    pub peaks: Vec<Peak>,
}

/// Mexican hat wavelet of width `sigma` at offset `t`.
pub fn mexican_hat(t: f64, sigma: f64) -> f64 {
    let a = 2.0 / ((3.0 * sigma).sqrt() * PI.powf(0.25));
    let x = t / sigma;
    a * (1.0 - x * x) * (-0.5 * x * x).exp()
}

/// Index into `0..n` under symmetric (edge-repeating) reflection.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// One row per scale, each the same length as `values`.
pub fn cwt(values: &[f64], scales: &[f64]) -> Result<Vec<Vec<f64>>> {
    if values.len() < 2 {
        return Err(Error::invalid("wavelet transform needs at least two windows"));
    }
    if scales.is_empty() || scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::invalid("scales must be non-empty and positive"));
    }
    let n = values.len();
    let max_half = scales
        .iter()
        .map(|s| (KERNEL_HALF_WIDTH * s).ceil() as usize)
        .max()
        .unwrap_or(0);
    let padded: Vec<f64> = (-(max_half as isize)..(n + max_half) as isize)
        .map(|i| values[reflect(i, n)])
        .collect();

    Ok(scales
        .iter()
        .map(|&sigma| {
            let half = (KERNEL_HALF_WIDTH * sigma).ceil() as usize;
            let kernel: Vec<f64> = (0..=2 * half)
                .map(|j| mexican_hat(j as f64 - half as f64, sigma))
                .collect();
            (0..n)
                .map(|i| {
                    // the kernel is symmetric, so correlation equals convolution
                    let base = i + max_half - half;
                    padded[base..base + kernel.len()]
                        .iter()
                        .zip(&kernel)
                        .map(|(x, k)| x * k)
                        .sum()
                })
                .collect()
        })
        .collect())
}

fn local_maxima(row: &[f64]) -> Vec<usize> {
    (1..row.len().saturating_sub(1))
        .filter(|&i| row[i] > row[i - 1] && row[i] > row[i + 1])
        .collect()
}

#[derive(Debug, Clone)]
struct Ridge {
    /// `(row, col)` points, coarse to fine.
    points: Vec<(usize, usize)>,
    gap: usize,
}

/// Chains local maxima from the coarsest row with any maximum down to row 0.
fn ridge_lines(coefs: &[Vec<f64>], max_distances: &[f64], gap_thresh: usize) -> Vec<Ridge> {
    let maxima: Vec<Vec<usize>> = coefs.iter().map(|r| local_maxima(r)).collect();
    let Some(start_row) = maxima.iter().rposition(|m| !m.is_empty()) else {
        return Vec::new();
    };
    let mut active: Vec<Ridge> = maxima[start_row]
        .iter()
        .map(|&c| Ridge {
            points: vec![(start_row, c)],
            gap: 0,
        })
        .collect();
    let mut done = Vec::new();

    for row in (0..start_row).rev() {
        for r in &mut active {
            r.gap += 1;
        }
        let mut order: Vec<(usize, usize)> = active
            .iter()
            .enumerate()
            .map(|(idx, r)| (r.points.last().unwrap().1, idx))
            .collect();
        order.sort_unstable();
        let mut taken = vec![false; active.len()];
        let mut fresh = Vec::new();

        for &col in &maxima[row] {
            let pos = order.partition_point(|&(c, _)| c < col);
            let mut best: Option<(usize, usize)> = None;
            // nearest free ridge on either side
            let mut consider = |k: usize| {
                let (c, idx) = order[k];
                if taken[idx] {
                    return;
                }
                let d = c.abs_diff(col);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, idx));
                }
            };
            let mut k = pos;
            while k < order.len() {
                if order[k].0.abs_diff(col) as f64 > max_distances[row] {
                    break;
                }
                consider(k);
                if !taken[order[k].1] {
                    break;
                }
                k += 1;
            }
            let mut k = pos;
            while k > 0 {
                k -= 1;
                if order[k].0.abs_diff(col) as f64 > max_distances[row] {
                    break;
                }
                consider(k);
                if !taken[order[k].1] {
                    break;
                }
            }
            match best {
                Some((d, idx)) if d as f64 <= max_distances[row] => {
                    taken[idx] = true;
                    active[idx].points.push((row, col));
                    active[idx].gap = 0;
                }
                _ => fresh.push(Ridge {
                    points: vec![(row, col)],
                    gap: 0,
                }),
            }
        }
        active.extend(fresh);
        let (keep, closed): (Vec<_>, Vec<_>) =
            active.into_iter().partition(|r| r.gap <= gap_thresh);
        active = keep;
        done.extend(closed);
    }
    done.extend(active);
    done
}

/// Detects peaks and turns them into candidate shock starts.
pub fn find_peaks(series: &PopularitySeries) -> ShockCandidateList {
    find_peaks_with(series.values(), &PeakFinderConfig::default())
}

pub fn find_peaks_with(values: &[f64], config: &PeakFinderConfig) -> ShockCandidateList {
    let n = values.len();
    let peaks = detect_peaks(values, config);

    let start_of = |p: &Peak| ((p.k as f64 - p.l).round().max(0.0) as usize).min(n.saturating_sub(1));
    // A cascade seeded by one individual stays near zero for a while, so a
    // first peak preceded only by quiet windows belongs to the leading shock
    // even when its rise is longer than the peak's half-width.
    let absorbed = peaks
        .first()
        .filter(|p| {
            let s = start_of(p);
            s > 0 && values[..s].iter().all(|&v| v <= QUIET_PREFIX_FRACTION * values[p.k])
        })
        .map(|p| p.k);

    let mut ranked: Vec<&Peak> = peaks.iter().collect();
    ranked.sort_by(|a, b| values[b.k].total_cmp(&values[a.k]).then(a.k.cmp(&b.k)));

    let mut starts = vec![0];
    let mut peak_volumes = vec![values.first().copied().unwrap_or(0.0)];
    for p in ranked {
        let s = if absorbed == Some(p.k) { 0 } else { start_of(p) };
        if s == 0 {
            // the mandatory leading start takes the volume of its peak
            if peak_volumes[0] == values[0] {
                peak_volumes[0] = values[p.k];
            }
            continue;
        }
        if !starts.contains(&s) {
            starts.push(s);
            peak_volumes.push(values[p.k]);
        }
    }
    ShockCandidateList {
        starts,
        peak_volumes,
        peaks,
    }
}

/// Ridge-filtered peaks ordered by position.
pub fn detect_peaks(values: &[f64], config: &PeakFinderConfig) -> Vec<Peak> {
    let n = values.len();
    let scales: Vec<f64> = config
        .scales
        .iter()
        .copied()
        .filter(|&s| s <= n as f64 / 2.0)
        .collect();
    let sigmas: Vec<f64> = scales.iter().map(|l| l * config.sigma_per_half_width).collect();
    let Ok(coefs) = cwt(values, &sigmas) else {
        return Vec::new();
    };

    let gap_thresh = config
        .gap_thresh
        .unwrap_or_else(|| scales[0].ceil() as usize);
    let max_distances: Vec<f64> = scales.iter().map(|s| s * config.max_distance_factor).collect();
    let min_len = config
        .min_ridge_length
        .unwrap_or_else(|| scales.len().div_ceil(4))
        .max(1);
    let window = config
        .noise_window
        .unwrap_or_else(|| (n.div_ceil(20) / 2).max(1));

    let fine: Vec<f64> = coefs[0].iter().map(|c| c.abs()).collect();
    let floor = NOISE_FLOOR_FRACTION * fine.iter().copied().fold(0.0, f64::max);
    let noise_at = |col: usize| {
        let lo = col.saturating_sub(window);
        let hi = (col + window + 1).min(n);
        let mut w = fine[lo..hi].to_vec();
        w.sort_by(|a, b| a.total_cmp(b));
        quantile_sorted(&w, config.noise_percentile / 100.0).max(floor)
    };

    let mut peaks: Vec<Peak> = ridge_lines(&coefs, &max_distances, gap_thresh)
        .into_iter()
        .filter(|r| r.points.len() >= min_len)
        .filter_map(|r| {
            let &(row, col) = r
                .points
                .iter()
                .max_by(|a, b| coefs[a.0][a.1].total_cmp(&coefs[b.0][b.1]))?;
            let strength = coefs[row][col];
            if !(strength > 0.0) {
                return None;
            }
            // coarse rows blur neighbouring bumps together, so locate at the finest row
            let k = r.points.iter().min_by_key(|p| p.0).map_or(col, |p| p.1);
            let noise = noise_at(k);
            let snr = if noise > 0.0 { strength / noise } else { f64::INFINITY };
            (snr >= config.min_snr).then_some(Peak {
                k,
                l: scales[row],
                snr,
                ridge_length: r.points.len(),
            })
        })
        .collect();
    peaks.sort_by(|a, b| a.k.cmp(&b.k).then(a.l.total_cmp(&b.l)));
    peaks.dedup_by_key(|p| p.k);
    peaks
}
