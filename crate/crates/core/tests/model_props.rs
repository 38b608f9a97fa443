use phoenix_core::model::{omega_at, simulate, simulate_shock};
use phoenix_core::{PeriodParams, PhoenixRModel, ShockParams};
use proptest::prelude::*;

fn shock(max_start: usize) -> impl Strategy<Value = ShockParams> {
    (0..max_start, 0.0f64..5.0, 0.0f64..3.0, 0.0f64..1.0, 0.01f64..5.0).prop_map(
        |(s, log_s0, contact, gamma, omega)| {
            let s0 = 10f64.powf(log_s0);
            ShockParams { s, s0, beta: contact / s0, gamma, omega }
        },
    )
}

fn period() -> impl Strategy<Value = Option<PeriodParams>> {
    prop::option::of((0.0f64..=1.0, -10.0f64..10.0, prop::sample::select(vec![7.0, 24.0, 3.5]))
        .prop_map(|(m, h, e)| PeriodParams { m, h, e }))
}

fn model() -> impl Strategy<Value = PhoenixRModel> {
    (prop::collection::vec(shock(150), 1..5), period())
        .prop_map(|(shocks, period)| PhoenixRModel::new(shocks, period).unwrap())
}

proptest! {
    #[test]
    fn compartments_conserve_population(p in shock(1), n in 1usize..400) {
        let run = simulate_shock(&p, n).unwrap();
        let total = p.s0 + 1.0;
        for st in &run.states {
            prop_assert!(st.s >= 0.0 && st.i >= 0.0 && st.r >= 0.0);
            prop_assert!(((st.s + st.i + st.r) - total).abs() <= 1e-9 * total);
        }
        prop_assert!(run.popularity.values().iter().all(|&v| v >= 0.0));
        prop_assert!(run.audience.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn multi_shock_is_sum_of_single_shocks(m in model(), n in 1usize..300) {
        let sim = simulate(&m, n).unwrap();
        let mut pop = vec![0.0; n];
        let mut aud = vec![0.0; n];
        for s in &m.shocks {
            let single = simulate(&PhoenixRModel::new(vec![*s], m.period).unwrap(), n).unwrap();
            for t in 0..n {
                pop[t] += single.popularity.values()[t];
                aud[t] += single.audience.values()[t];
            }
        }
        prop_assert_eq!(sim.popularity.values(), &pop[..]);
        prop_assert_eq!(sim.audience.values(), &aud[..]);
        for ((p, a), r) in sim.popularity.values().iter().zip(sim.audience.values()).zip(sim.revisits.values()) {
            prop_assert!(*p >= 0.0 && *a >= 0.0);
            prop_assert_eq!(*r, (p - a).max(0.0));
        }
    }

    #[test]
    fn single_shock_is_shifted_shock_run(p in shock(150), n in 1usize..300) {
        let sim = simulate(&PhoenixRModel::new(vec![p], None).unwrap(), n).unwrap();
        let offset = if p.s == 0 { 0 } else { p.s + 1 };
        let mut expected = vec![0.0; n];
        if offset < n {
            let run = simulate_shock(&p, n - offset).unwrap();
            expected[offset..].copy_from_slice(run.popularity.values());
        }
        prop_assert_eq!(sim.popularity.values(), &expected[..]);
    }

    #[test]
    fn simulation_prefix_is_stable(m in model(), n in 2usize..200, cut in 1usize..200) {
        let cut = cut.min(n);
        let long = simulate(&m, n).unwrap();
        let short = simulate(&m, cut).unwrap();
        prop_assert_eq!(&long.popularity.values()[..cut], short.popularity.values());
    }

    #[test]
    fn modulated_rate_stays_in_band(omega in 0.01f64..10.0, m in 0.0f64..=1.0, h in -20.0f64..20.0, t in 0.0f64..1000.0) {
        let w = omega_at(omega, &PeriodParams { m, h, e: 7.0 }, t);
        prop_assert!(w >= omega * (1.0 - m) - 1e-12 && w <= omega + 1e-12);
    }
}

#[test]
fn shock_order_changes_nothing_without_overlap_in_time() {
    let a = ShockParams { s: 0, s0: 1000.0, beta: 0.0005, gamma: 0.2, omega: 1.0 };
    let b = ShockParams { s: 40, s0: 800.0, beta: 0.0008, gamma: 0.3, omega: 0.7 };
    let ab = simulate(&PhoenixRModel::new(vec![a, b], None).unwrap(), 100).unwrap();
    let ba = simulate(&PhoenixRModel::new(vec![b, a], None).unwrap(), 100).unwrap();
    for t in 0..41 {
        assert_eq!(ab.popularity.values()[t], ba.popularity.values()[t]);
    }
    for (x, y) in ab.popularity.values().iter().zip(ba.popularity.values()) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }
}
