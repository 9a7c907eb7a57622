use std::collections::HashSet;

use proptest::prelude::*;
use proxtrace_core::contact_store::{intervals_per_day, susceptible_of, ContactLog, InfectionRegistry, IntervalWindow, RetentionPolicy};
use proxtrace_core::geo::GeoPoint;
use proxtrace_core::tracing::{ContactEvent, ContactPair};
use proxtrace_core::UserId;

const INTERVAL_MIN: f64 = 2.5;

fn events() -> impl Strategy<Value = Vec<ContactEvent>> {
    prop::collection::vec((0u64..30, 0u64..30, 0u64..200), 0..80).prop_map(|v| {
        v.into_iter()
            .filter_map(|(a, b, t)| {
                Some(ContactEvent {
                    pair: ContactPair::new(UserId(a), UserId(b))?,
                    snapshot_from: t,
                    snapshot_to: t + 1,
                    location: GeoPoint { lat: 22.7, lon: 75.8 },
                })
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn log_is_symmetric(evs in events()) {
        let mut log = ContactLog::new();
        log.record_events(&evs);
        for (u, r) in log.entries() {
            prop_assert!(log.contacts_of(r.contact).any(|b| b.contact == u && b.interval == r.interval));
        }
    }

    #[test]
    fn replay_is_idempotent(evs in events()) {
        let mut log = ContactLog::new();
        log.record_events(&evs);
        let once = log.entries();
        log.record_events(&evs);
        prop_assert_eq!(once, log.entries());
    }

    #[test]
    fn vectors_stay_sorted(evs in events()) {
        let mut log = ContactLog::new();
        log.record_events(&evs);
        let users: Vec<UserId> = log.users().collect();
        for u in users {
            let iv: Vec<u64> = log.contacts_of(u).map(|r| r.interval).collect();
            prop_assert!(iv.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn prune_keeps_exactly_the_window(evs in events(), now in 0u64..400, days in 1u32..3) {
        let policy = RetentionPolicy::new(days).unwrap();
        let mut log = ContactLog::new();
        log.record_events(&evs);
        let before = log.entries();
        log.prune(now, &policy, INTERVAL_MIN);
        let start = policy.window_ending(now, INTERVAL_MIN).start;
        let want: Vec<_> = before.into_iter().filter(|(_, r)| r.interval >= start).collect();
        prop_assert_eq!(log.entries(), want);
    }

    #[test]
    fn susceptibles_exclude_positives(evs in events(), pos in prop::collection::vec(0u64..30, 0..6), hops in 1u32..4) {
        let mut log = ContactLog::new();
        log.record_events(&evs);
        let mut reg = InfectionRegistry::new();
        for p in &pos {
            reg.mark_positive(UserId(*p), 0);
        }
        let s = susceptible_of(&log, &reg, IntervalWindow::ALL, hops);
        prop_assert!(s.iter().all(|u| !reg.is_positive(*u)));
        // More hops never shrink the set.
        let wider = susceptible_of(&log, &reg, IntervalWindow::ALL, hops + 1);
        prop_assert!(s.is_subset(&wider));
    }

    #[test]
    fn one_hop_is_direct_contact(evs in events(), pos in prop::collection::vec(0u64..30, 1..6)) {
        let mut log = ContactLog::new();
        log.record_events(&evs);
        let mut reg = InfectionRegistry::new();
        for p in &pos {
            reg.mark_positive(UserId(*p), 0);
        }
        let mut want = HashSet::new();
        for e in &evs {
            for (x, y) in [(e.pair.user_a(), e.pair.user_b()), (e.pair.user_b(), e.pair.user_a())] {
                if reg.is_positive(x) && !reg.is_positive(y) {
                    want.insert(y);
                }
            }
        }
        let got: HashSet<UserId> = susceptible_of(&log, &reg, IntervalWindow::ALL, 1).into_iter().collect();
        prop_assert_eq!(got, want);
    }
}

#[test]
fn fourteen_day_retention_at_default_cadence() {
    assert_eq!(intervals_per_day(INTERVAL_MIN), 576);
    let policy = RetentionPolicy::new(14).unwrap();
    assert_eq!(policy.window_intervals(INTERVAL_MIN), 14 * 576);
    let now = 20_000;
    let mut log = ContactLog::new();
    let loc = GeoPoint { lat: 22.7, lon: 75.8 };
    for t in [now - 14 * 576 - 1, now - 14 * 576, now] {
        log.record_events(&[ContactEvent {
            pair: ContactPair::new(UserId(1), UserId(2)).unwrap(),
            snapshot_from: t,
            snapshot_to: t + 1,
            location: loc,
        }]);
    }
    log.prune(now, &policy, INTERVAL_MIN);
    let kept: Vec<u64> = log.contacts_of(UserId(1)).map(|r| r.interval).collect();
    assert_eq!(kept, vec![now - 14 * 576, now]);
}
