use proptest::prelude::*;
use proxtrace_core::contact_store::{ContactLog, InfectionRegistry};
use proxtrace_core::geo::{haversine_m, GeoPoint};
use proxtrace_core::hotspot::{arcminute_window, detect, users_in_radius, HotspotMode, HotspotQuery};
use proxtrace_core::simgen::{gen_uniform, BoundingBox, ScenarioSpec};
use proxtrace_core::tracing::{ContactEvent, ContactPair, DetectorConfig, Snapshot};
use proxtrace_core::{GeoRecord, UserId};

fn population(seed: u64, centre: (f64, f64)) -> (Vec<GeoRecord>, Snapshot) {
    let spec = ScenarioSpec { n_users: 10_000, seed, bbox: BoundingBox::square(centre.0, centre.1, 0.6), ..Default::default() };
    let recs = gen_uniform(&spec).unwrap().swap_remove(0).records;
    let snap = Snapshot::build(&recs, &DetectorConfig::default(), 0).unwrap();
    (recs, snap)
}

#[test]
fn area_users_match_linear_scan() {
    for (seed, centre, radius) in [(1, (22.72, 75.86), 10.0), (2, (30.0, 80.0), 10.0), (3, (12.0, 77.6), 3.0), (4, (34.0, 74.0), 25.0)] {
        let (recs, snap) = population(seed, centre);
        let reference = GeoPoint { lat: centre.0, lon: centre.1 };
        let got: Vec<u64> = users_in_radius(&snap, &reference, radius).unwrap().iter().map(|a| a.user.0).collect();
        let mut want: Vec<u64> = recs.iter().filter(|r| haversine_m(&reference, &r.point) <= radius * 1000.0).map(|r| r.user.0).collect();
        want.sort_unstable();
        assert!(!want.is_empty());
        assert_eq!(got, want, "seed {seed}");
    }
}

#[test]
fn ten_km_window() {
    let w = arcminute_window(10.0);
    assert!((5.3..=5.5).contains(&w), "{w}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mode_and_threshold_monotone(pos in prop::collection::vec(0u64..10_000, 0..30), contacts in prop::collection::vec((0u64..10_000, 0u64..10_000), 0..30), thr in 1u32..10) {
        let (_, snap) = population(5, (22.72, 75.86));
        let mut reg = InfectionRegistry::new();
        for p in &pos {
            reg.mark_positive(UserId(*p), 0);
        }
        let mut log = ContactLog::new();
        let evs: Vec<ContactEvent> = contacts
            .iter()
            .filter_map(|&(a, b)| ContactPair::new(UserId(a), UserId(b)))
            .map(|pair| ContactEvent { pair, snapshot_from: 0, snapshot_to: 1, location: GeoPoint { lat: 22.7, lon: 75.8 } })
            .collect();
        log.record_events(&evs);
        let q = HotspotQuery::new(GeoPoint { lat: 22.72, lon: 75.86 }, 10.0, thr);
        let at = detect(&q, &snap, &log, &reg).unwrap();
        let above = detect(&HotspotQuery { positive_threshold: thr + 1, ..q }, &snap, &log, &reg).unwrap();
        let any = detect(&HotspotQuery { mode: HotspotMode::AnyPositive, ..q }, &snap, &log, &reg).unwrap();
        prop_assert!(!above.is_potential_hotspot || at.is_potential_hotspot);
        prop_assert!(!at.is_potential_hotspot || any.is_potential_hotspot);
        prop_assert_eq!(at.is_potential_hotspot, at.positives_in_area.len() >= thr as usize);
        for s in &at.susceptibles_in_area {
            prop_assert!(!reg.is_positive(s.user));
        }
    }
}
