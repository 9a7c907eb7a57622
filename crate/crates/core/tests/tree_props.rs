use proptest::prelude::*;
use proxtrace_core::geo::{axis_distance_m, AxisConfig, GeoPoint, Region};
use proxtrace_core::simgen::{gen_uniform, BoundingBox, ScenarioSpec};
use proxtrace_core::tree::{BucketPath, LeafIndex, SnapshotTree, TreeConfig};

fn configs() -> Vec<TreeConfig> {
    vec![
        TreeConfig::latitude(),
        TreeConfig::longitude(),
        TreeConfig::with_partitions(AxisConfig::latitude().with_contact_distance(5.0), 6, Region::INDIA).unwrap(),
        TreeConfig::with_partitions(AxisConfig::latitude(), 1, Region::INDIA).unwrap(),
    ]
}

/// One bucket step forward with explicit DMS carries.
fn step(path: BucketPath, m: u32) -> BucketPath {
    let mut p = path;
    p.partition += 1;
    if p.partition == m {
        p.partition = 0;
        p.second += 1;
        if p.second == 60 {
            p.second = 0;
            p.minute += 1;
            if p.minute == 60 {
                p.minute = 0;
                p.degree += 1;
            }
        }
    }
    p
}

proptest! {
    #[test]
    fn index_path_bijection(cfg_i in 0usize..4, raw in any::<u64>()) {
        let cfg = configs()[cfg_i];
        let leaf = LeafIndex(raw % cfg.leaf_count());
        let path = cfg.path_of(leaf).unwrap();
        prop_assert!(path.minute < 60 && path.second < 60 && path.partition < cfg.partitions);
        prop_assert_eq!(cfg.leaf_index(&path), leaf);
    }

    #[test]
    fn adjacent_indices_differ_by_one_carry_step(cfg_i in 0usize..4, raw in any::<u64>()) {
        let cfg = configs()[cfg_i];
        let leaf = LeafIndex(raw % (cfg.leaf_count() - 1));
        let a = cfg.path_of(leaf).unwrap();
        let b = cfg.path_of(LeafIndex(leaf.0 + 1)).unwrap();
        prop_assert_eq!(step(a, cfg.partitions), b);
    }

    #[test]
    fn bucket_path_is_pure_and_consistent(lat in 7.0f64..37.0, lon in 68.0f64..97.0, cfg_i in 0usize..4) {
        let cfg = configs()[cfg_i];
        let p = GeoPoint { lat, lon };
        let path = cfg.bucket_path(&p).unwrap();
        prop_assert_eq!(path, cfg.bucket_path(&p).unwrap());
        let leaf = cfg.leaf_index(&path);
        prop_assert_eq!(cfg.path_of(leaf).unwrap(), path);
    }
}

#[test]
fn co_bucket_entries_within_bucket_width() {
    let spec = ScenarioSpec { n_users: 20_000, seed: 3, bbox: BoundingBox::square(22.0, 75.8, 0.02), ..Default::default() };
    let batch = &gen_uniform(&spec).unwrap()[0];
    for cfg in configs() {
        let tree = SnapshotTree::build(&batch.records, cfg, 0).unwrap();
        let w = cfg.bucket_width_m();
        for (_, entries) in tree.leaves() {
            for a in entries {
                for b in entries {
                    assert!(axis_distance_m(&a.point, &b.point, &cfg.axis_config) <= w + 1e-9);
                }
            }
        }
    }
}

#[test]
fn insert_counts_add_up() {
    let spec = ScenarioSpec { n_users: 10_000, seed: 5, bbox: BoundingBox::INDIA, ..Default::default() };
    let batch = &gen_uniform(&spec).unwrap()[0];
    for cfg in configs() {
        let tree = SnapshotTree::build(&batch.records, cfg, 0).unwrap();
        assert_eq!(tree.len(), 10_000);
        assert_eq!(tree.leaves().map(|(_, e)| e.len()).sum::<usize>(), 10_000);
        for r in batch.records.iter().take(200) {
            let leaf = tree.leaf_of_user(r.user).unwrap();
            assert_eq!(cfg.leaf_of(&r.point).unwrap(), leaf);
            assert!(tree.leaf(leaf).iter().any(|e| e.user == r.user));
        }
    }
}

#[test]
fn neighbor_leaves_across_minute_boundary() {
    let cfg = TreeConfig::latitude();
    let mut tree = SnapshotTree::new(cfg, 0);
    // 22°00'59.95" and 22°01'00.05": 3 m apart across a minute carry.
    let a = GeoPoint { lat: 22.0 + 59.95 / 3600.0, lon: 75.0 };
    let b = GeoPoint { lat: 22.0 + 60.05 / 3600.0, lon: 75.0 };
    let la = tree.insert(proxtrace_core::UserId(1), a).unwrap();
    let lb = tree.insert(proxtrace_core::UserId(2), b).unwrap();
    assert_eq!(lb.0 - la.0, 1);
    assert_eq!(tree.neighbor_leaves(la, 1), vec![la, lb]);
    assert_eq!(tree.neighbor_leaves(lb, 1), vec![la, lb]);
}
