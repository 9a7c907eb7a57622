//! Thread-pool detector: axis jobs split into disjoint anchor-leaf ranges.

use std::ops::RangeInclusive;
use std::time::{Duration, Instant};

use anyhow::Result;
use log::warn;
use proxtrace_core::tracing::{
    events_for, intersect_pair_lists, interval_pairs_in, jobs_for, AxisJob, ContactPair, DetectorConfig, PairSet, Snapshot, SnapshotBatch,
    SnapshotGap, TraceOutput,
};
use proxtrace_core::tree::{LeafIndex, SnapshotTree};
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;

/// Ranges per worker; a few more than one balances uneven leaves.
const CHUNKS_PER_THREAD: usize = 4;

pub fn pool(threads: usize) -> Result<ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?)
}

/// Splits the occupied leaves of `tree` into at most `chunks` contiguous,
/// disjoint ranges.
pub fn anchor_chunks(tree: &SnapshotTree, chunks: usize) -> Vec<RangeInclusive<LeafIndex>> {
    let keys: Vec<LeafIndex> = tree.leaf_keys().collect();
    if keys.is_empty() {
        return Vec::new();
    }
    let per = keys.len().div_ceil(chunks.max(1));
    keys.chunks(per).map(|c| c[0]..=c[c.len() - 1]).collect()
}

/// Axis pairs for one job, each pair listed once.
pub fn axis_pairs_parallel(pool: &ThreadPool, t: &SnapshotTree, t1: &SnapshotTree, job: &AxisJob) -> Vec<ContactPair> {
    let n = pool.current_num_threads();
    if n == 1 {
        return interval_pairs_in(t, t1, job, LeafIndex(0)..=LeafIndex(u64::MAX));
    }
    let ranges = anchor_chunks(t, n * CHUNKS_PER_THREAD);
    // Anchor ranges are disjoint, so the per-range outputs are too.
    let parts: Vec<Vec<_>> = pool.install(|| ranges.into_par_iter().map(|r| interval_pairs_in(t, t1, job, r)).collect());
    parts.concat()
}

pub fn run_axis_job_parallel(pool: &ThreadPool, t: &SnapshotTree, t1: &SnapshotTree, job: &AxisJob) -> PairSet {
    axis_pairs_parallel(pool, t, t1, job).into_iter().collect()
}

/// Phase times for one or more intervals, mirroring map/intersect per axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub map_lat_ms: f64,
    pub map_lon_ms: f64,
    pub intersect_lat_ms: f64,
    pub intersect_lon_ms: f64,
    pub combine_ms: f64,
}

impl Timings {
    pub fn total_ms(&self) -> f64 {
        self.map_lat_ms + self.map_lon_ms + self.intersect_lat_ms + self.intersect_lon_ms + self.combine_ms
    }

    fn add(&mut self, o: &Timings) {
        self.map_lat_ms += o.map_lat_ms;
        self.map_lon_ms += o.map_lon_ms;
        self.intersect_lat_ms += o.intersect_lat_ms;
        self.intersect_lon_ms += o.intersect_lon_ms;
        self.combine_ms += o.combine_ms;
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, ms(start.elapsed()))
}

/// Builds both axis trees for two snapshots and intersects them.
pub struct Detector<'a> {
    pub cfg: &'a DetectorConfig,
    pub pool: &'a ThreadPool,
}

impl Detector<'_> {
    /// Trees for one snapshot, with the map time per axis.
    pub fn map(&self, batch: &SnapshotBatch) -> Result<(Snapshot, f64, f64)> {
        let (lat, lat_ms) = timed(|| SnapshotTree::build(&batch.records, self.cfg.lat, batch.snapshot));
        let (lon, lon_ms) = timed(|| SnapshotTree::build(&batch.records, self.cfg.lon, batch.snapshot));
        Ok((Snapshot { id: batch.snapshot, lat: lat?, lon: lon? }, lat_ms, lon_ms))
    }

    pub fn intersect(&self, t: &Snapshot, t1: &Snapshot) -> (PairSet, Timings) {
        let mut tm = Timings::default();
        let mut out = PairSet::new();
        for (lat_job, lon_job) in jobs_for(self.cfg, self.cfg.mode) {
            let (lat, a) = timed(|| axis_pairs_parallel(self.pool, &t.lat, &t1.lat, &lat_job));
            let (lon, b) = timed(|| axis_pairs_parallel(self.pool, &t.lon, &t1.lon, &lon_job));
            let (both, c) = timed(|| intersect_pair_lists(&lat, &lon));
            out.extend(both);
            tm.intersect_lat_ms += a;
            tm.intersect_lon_ms += b;
            tm.combine_ms += c;
        }
        (out, tm)
    }

    /// Pairs for one interval, both snapshot maps included in the timings.
    pub fn interval(&self, t: &SnapshotBatch, t1: &SnapshotBatch) -> Result<(PairSet, Timings)> {
        let (s0, a0, b0) = self.map(t)?;
        let (s1, a1, b1) = self.map(t1)?;
        let (pairs, mut tm) = self.intersect(&s0, &s1);
        tm.map_lat_ms = a0 + a1;
        tm.map_lon_ms = b0 + b1;
        Ok((pairs, tm))
    }

    /// Streams consecutive batches, each snapshot mapped once. Gaps are
    /// logged and skipped.
    pub fn trace(&self, batches: &[SnapshotBatch]) -> Result<(TraceOutput, Timings)> {
        let mut out = TraceOutput::default();
        let mut total = Timings::default();
        let mut prev: Option<Snapshot> = None;
        for b in batches {
            let (snap, lat_ms, lon_ms) = self.map(b)?;
            total.map_lat_ms += lat_ms;
            total.map_lon_ms += lon_ms;
            if let Some(p) = &prev {
                if snap.id == p.id + 1 {
                    let (pairs, tm) = self.intersect(p, &snap);
                    total.add(&tm);
                    out.events.extend(events_for(&pairs, p, &snap));
                } else {
                    warn!("snapshot gap {} -> {}, interval skipped", p.id, snap.id);
                    out.gaps.push(SnapshotGap { from: p.id, to: snap.id });
                }
            }
            prev = Some(snap);
        }
        Ok((out, total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proxtrace_core::simgen::{build_scenario, ScenarioSpec, WalkerPlan};
    use proxtrace_core::tracing::{detect_interval, trace_stream};

    #[test]
    fn chunks_cover_every_leaf_once() {
        let spec = ScenarioSpec { n_users: 3000, ..Default::default() };
        let cfg = DetectorConfig::default();
        let sc = build_scenario(&spec, &cfg).unwrap();
        let tree = SnapshotTree::build(&sc.batches[0].records, cfg.lat, 0).unwrap();
        for n in [1, 3, 16, 100_000] {
            let ranges = anchor_chunks(&tree, n);
            assert!(ranges.len() <= n);
            let covered: usize = ranges.iter().map(|r| tree.leaves_in(r.clone()).count()).sum();
            assert_eq!(covered, tree.occupied_leaves());
            assert!(ranges.windows(2).all(|w| w[0].end() < w[1].start()));
        }
    }

    #[test]
    fn parallel_equals_serial() {
        let spec = ScenarioSpec {
            n_users: 4000,
            seed: 3,
            snapshot_count: 3,
            walker_pairs: WalkerPlan { count: 30, ..Default::default() },
            ..Default::default()
        };
        let cfg = DetectorConfig::default();
        let sc = build_scenario(&spec, &cfg).unwrap();
        let t = Snapshot::build(&sc.batches[0].records, &cfg, 0).unwrap();
        let t1 = Snapshot::build(&sc.batches[1].records, &cfg, 1).unwrap();
        let want = detect_interval(&t, &t1, &cfg).unwrap();
        for threads in [1, 2, 4] {
            let pool = pool(threads).unwrap();
            let d = Detector { cfg: &cfg, pool: &pool };
            assert_eq!(d.interval(&sc.batches[0], &sc.batches[1]).unwrap().0, want);
            assert_eq!(d.trace(&sc.batches).unwrap().0, trace_stream(&sc.batches, &cfg).unwrap());
        }
    }

    #[test]
    fn empty_batches_zero_pairs() {
        let cfg = DetectorConfig::default();
        let pool = pool(2).unwrap();
        let d = Detector { cfg: &cfg, pool: &pool };
        let empty = [SnapshotBatch { snapshot: 0, records: vec![] }, SnapshotBatch { snapshot: 1, records: vec![] }];
        let (out, _) = d.trace(&empty).unwrap();
        assert!(out.events.is_empty() && out.gaps.is_empty());
    }
}
