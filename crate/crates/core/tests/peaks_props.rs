use std::f64::consts::PI;

use phoenix_core::peaks::{cwt, detect_peaks, find_peaks_with, mexican_hat, PeakFinderConfig};
use proptest::prelude::*;

/// Direct sum over the mirror-extended signal, one output at a time.
fn naive_cwt(values: &[f64], sigma: f64) -> Vec<f64> {
    let n = values.len() as isize;
    let half = (8.0 * sigma).ceil() as isize;
    let mirror = |mut i: isize| {
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - 1 - i;
            } else {
                return values[i as usize];
            }
        }
    };
    (0..n)
        .map(|t| {
            (-half..=half)
                .map(|j| {
                    let x = j as f64 / sigma;
                    let psi = 2.0 / ((3.0 * sigma).sqrt() * PI.powf(0.25)) * (1.0 - x * x) * (-x * x / 2.0).exp();
                    mirror(t + j) * psi
                })
                .sum()
        })
        .collect()
}

fn bumps(n: usize, centers: &[(usize, f64, f64)]) -> Vec<f64> {
    (0..n)
        .map(|t| {
            centers
                .iter()
                .map(|&(c, w, h)| h * (-((t as f64 - c as f64) / w).powi(2) / 2.0).exp())
                .sum()
        })
        .collect()
}

#[test]
fn wavelet_matches_closed_form() {
    let s = 2.5;
    for t in [-3.0, 0.0, 1.0, 2.5, 7.0] {
        let x: f64 = t / s;
        let expected = 2.0 / ((3.0 * s).sqrt() * PI.powf(0.25)) * (1.0 - x * x) * (-x * x / 2.0).exp();
        assert!((mexican_hat(t, s) - expected).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn transform_matches_naive_convolution(
        v in prop::collection::vec(-100.0f64..100.0, 2..120),
        sigma in 0.3f64..40.0,
    ) {
        let fast = cwt(&v, &[sigma]).unwrap();
        let slow = naive_cwt(&v, sigma);
        let scale = v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        for (a, b) in fast[0].iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn peaks_ignore_amplitude(
        c1 in 60usize..120, gap in 70usize..150, w in 3.0f64..10.0,
        h1 in 10.0f64..1000.0, h2 in 10.0f64..1000.0, k in 0.01f64..100.0,
    ) {
        let v = bumps(400, &[(c1, w, h1), (c1 + gap, w, h2)]);
        let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
        let config = PeakFinderConfig::default();
        let a: Vec<_> = detect_peaks(&v, &config).iter().map(|p| (p.k, p.l)).collect();
        let b: Vec<_> = detect_peaks(&scaled, &config).iter().map(|p| (p.k, p.l)).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn peaks_follow_shifts(
        c1 in 150usize..200, gap in 80usize..150, w in 3.0f64..8.0, shift in 1usize..40,
    ) {
        // enough zero padding on both sides that edge reflection sees only zeros
        let n = 700;
        let a = bumps(n, &[(c1, w, 500.0), (c1 + gap, w, 300.0)]);
        let b = bumps(n, &[(c1 + shift, w, 500.0), (c1 + gap + shift, w, 300.0)]);
        let config = PeakFinderConfig::default();
        let pa: Vec<_> = detect_peaks(&a, &config).iter().map(|p| (p.k + shift, p.l)).collect();
        let pb: Vec<_> = detect_peaks(&b, &config).iter().map(|p| (p.k, p.l)).collect();
        prop_assert_eq!(pa, pb);
    }

    #[test]
    fn candidate_list_is_well_formed(v in prop::collection::vec(0.0f64..1000.0, 2..300)) {
        let list = find_peaks_with(&v, &PeakFinderConfig::default());
        prop_assert_eq!(list.starts.first(), Some(&0));
        prop_assert_eq!(list.starts.len(), list.peak_volumes.len());
        let mut uniq = list.starts.clone();
        uniq.sort_unstable();
        uniq.dedup();
        prop_assert_eq!(uniq.len(), list.starts.len());
        prop_assert!(list.starts.iter().all(|&s| s < v.len()));
        prop_assert!(list.peaks.windows(2).all(|w| w[0].k <= w[1].k));
        // later starts are ranked by the series value at their peak
        prop_assert!(list.peak_volumes[1..].windows(2).all(|w| w[0] >= w[1]));
    }
}
