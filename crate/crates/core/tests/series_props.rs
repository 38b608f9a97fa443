use std::collections::HashSet;

use phoenix_core::series::{read_series, window_events, SeriesFormat};
use phoenix_core::EventRecord;
use proptest::prelude::*;

fn log() -> impl Strategy<Value = Vec<EventRecord>> {
    prop::collection::vec((0u32..5000, 0u8..12, 0u8..3), 1..300).prop_map(|rows| {
        rows.into_iter()
            .map(|(t, u, o)| EventRecord::new(t as f64, format!("u{u}"), format!("o{o}")))
            .collect()
    })
}

proptest! {
    #[test]
    fn popularity_is_audience_plus_revisits(events in log(), w in 1.0f64..2000.0) {
        for o in ["o0", "o1", "o2"] {
            let Ok(act) = window_events(&events, o, w) else { continue };
            let mine: Vec<_> = events.iter().filter(|e| e.object_id == o).collect();
            let users: HashSet<_> = mine.iter().map(|e| &e.user_id).collect();
            prop_assert_eq!(act.audience.total(), users.len() as f64);
            prop_assert_eq!(act.popularity.total(), mine.len() as f64);
            for ((p, a), r) in act.popularity.values().iter().zip(act.audience.values()).zip(act.revisits.values()) {
                prop_assert_eq!(*p, a + r);
                prop_assert!(a <= p);
            }
        }
    }

    #[test]
    fn input_order_does_not_matter(events in log(), w in 1.0f64..2000.0, seed in any::<u64>()) {
        // a stable sort by time only ties same-timestamp events, whose order we keep
        let mut shuffled = events.clone();
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let j = (state % (i as u64 + 1)) as usize;
            shuffled.swap(i, j);
        }
        let mut ordered = events.clone();
        ordered.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        shuffled.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        for o in ["o0", "o1", "o2"] {
            let a = window_events(&ordered, o, w);
            let b = window_events(&shuffled, o, w);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.popularity, b.popularity);
                    prop_assert_eq!(a.audience.total(), b.audience.total());
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "one order failed"),
            }
        }
    }

    #[test]
    fn plain_and_indexed_series_agree(v in prop::collection::vec(0u32..100_000, 1..100)) {
        let plain: String = v.iter().map(|x| format!("{x}\n")).collect();
        let csv: String = std::iter::once("window,value\n".to_string())
            .chain(v.iter().enumerate().map(|(i, x)| format!("{i},{x}\n")))
            .collect();
        let a = read_series(plain.as_bytes(), SeriesFormat::PlainLines).unwrap();
        let b = read_series(csv.as_bytes(), SeriesFormat::CsvIndexed).unwrap();
        prop_assert_eq!(a.values(), b.values());
        prop_assert_eq!(a.len(), v.len());
    }
}
