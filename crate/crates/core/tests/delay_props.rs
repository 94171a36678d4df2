use delayfw::{DelaySchedule, FeedbackBuffer};
use proptest::prelude::*;

fn delays() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..12, 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn every_origin_is_released_once_or_dropped(d in delays()) {
        let s = DelaySchedule::from_delays(d.clone()).unwrap();
        let horizon = d.len();
        let sets = s.release_sets();
        let mut seen = vec![0usize; horizon + 1];
        for (t, set) in sets.iter().enumerate() {
            for &origin in set {
                prop_assert!(origin <= t + 1);
                prop_assert_eq!(s.release_round(origin), t + 1);
                seen[origin] += 1;
            }
        }
        for origin in 1..=horizon {
            let expected = usize::from(origin + d[origin - 1] - 1 <= horizon);
            prop_assert_eq!(seen[origin], expected);
        }
    }

    #[test]
    fn buffer_agrees_with_release_sets(d in delays()) {
        let s = DelaySchedule::from_delays(d.clone()).unwrap();
        let sets = s.release_sets();
        let mut b = FeedbackBuffer::new();
        for t in 1..=d.len() {
            b.push(t, d[t - 1]).unwrap();
            prop_assert_eq!(b.release(t).unwrap(), sets[t - 1].clone());
            prop_assert_eq!(b.pending_len(), s.outstanding_count(t));
        }
    }

    #[test]
    fn missing_feedback_sums_to_total_delay(d in delays()) {
        // Extend the horizon so every feedback arrives before the end.
        let horizon = d.len() + d.iter().max().unwrap();
        let mut full = d.clone();
        full.resize(horizon, 1);
        let s = DelaySchedule::from_delays(full.clone()).unwrap();
        let before: usize = (1..=horizon).map(|t| s.missing_before(t)).sum();
        let through: usize = (1..=horizon).map(|t| s.missing_through(t)).sum();
        prop_assert_eq!(before, full.iter().map(|d| d - 1).sum::<usize>());
        prop_assert_eq!(through, s.total_delay());
    }

    #[test]
    fn uniform_schedules_are_seeded_and_bounded(seed in any::<u64>(), dmax in 1usize..30) {
        let a = DelaySchedule::uniform(80, dmax, seed).unwrap();
        let b = DelaySchedule::uniform(80, dmax, seed).unwrap();
        prop_assert_eq!(a.delays(), b.delays());
        prop_assert!(a.delays().iter().all(|&d| (1..=dmax).contains(&d)));
    }
}

#[test]
fn schedule_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let s = DelaySchedule::uniform(25, 6, 3).unwrap();
    let mut f = std::fs::File::create(&path).unwrap();
    s.write_csv(&mut f).unwrap();
    drop(f);
    assert_eq!(DelaySchedule::read_csv(&path).unwrap().delays(), s.delays());
    std::fs::write(&path, "d\n1\n0\n").unwrap();
    assert!(DelaySchedule::read_csv(&path).is_err());
}
