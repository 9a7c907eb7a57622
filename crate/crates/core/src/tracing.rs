//! Contact detection between two consecutive snapshots.
//!
//! The contact predicate is the axis rectangle: two users are in contact at
//! an instant when their latitude separation is at most `d_lat` and their
//! longitude separation is at most `d_lon`. A contact event requires the
//! predicate at both ends of a sampling interval.
//!
//! Each axis is handled by its own tree. For every occupied leaf `p` at time
//! `t`, members are kept when they are found at `t + Δt` within `max_shift`
//! buckets of `p` (0 for the static detector, the pedestrian window for the
//! dynamic one). Kept members of `p` are paired with each other and with the
//! kept members of the next `window` leaves, and each candidate is checked at
//! both instants. Per-axis pair sets are intersected by [`combine_axes`].

use alloc::vec::Vec;
use core::ops::{Range, RangeInclusive};

use hashbrown::{HashMap, HashSet};
use thiserror::Error;

use crate::geo::{axis_distance_m, AxisConfig, GeoError, GeoPoint, Region};
use crate::tree::{ceil_ratio, LeafIndex, SnapshotTree, TreeConfig, TreeError};
use crate::{GeoRecord, UserId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("snapshot trees were built with different configs")]
    ConfigMismatch,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("invalid trace config: {0}")]
    InvalidConfig(&'static str),
}

impl From<GeoError> for TraceError {
    fn from(e: GeoError) -> Self {
        TraceError::Tree(TreeError::Geo(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceConfig {
    /// Minimum contact duration `t`, minutes.
    pub contact_duration_min: f64,
    pub d_lat_m: f64,
    pub d_lon_m: f64,
    pub pedestrian_speed_mps: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self { contact_duration_min: 5.0, d_lat_m: 3.0, d_lon_m: 4.0, pedestrian_speed_mps: 1.4 }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.contact_duration_min) {
            return Err(TraceError::InvalidConfig("contact duration must be positive"));
        }
        if !positive(self.d_lat_m) || !positive(self.d_lon_m) {
            return Err(TraceError::InvalidConfig("axis contact distances must be positive"));
        }
        if !(self.pedestrian_speed_mps.is_finite() && self.pedestrian_speed_mps >= 0.0) {
            return Err(TraceError::InvalidConfig("speed must be non-negative"));
        }
        Ok(())
    }

    /// Sampling cadence `t/2`, minutes.
    pub fn snapshot_interval_min(&self) -> f64 {
        self.contact_duration_min / 2.0
    }

    /// Diagonal of the axis rectangle.
    pub fn circular_distance_m(&self) -> f64 {
        libm::hypot(self.d_lat_m, self.d_lon_m)
    }

    /// Arcseconds a pedestrian covers in `t`: `ceil(speed * t * 60 / mps)`.
    pub fn dynamic_window_seconds(&self, meters_per_arcsecond: f64) -> u64 {
        ceil_ratio(self.pedestrian_speed_mps * self.contact_duration_min * 60.0 / meters_per_arcsecond)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DetectorMode {
    Static,
    Dynamic,
    /// Union of the static and dynamic outputs.
    #[default]
    Both,
}

/// How meters map onto arcseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ScaleMode {
    /// 30 m per arcsecond on both axes.
    #[default]
    Nominal,
    /// 30.866 m on latitude, scaled by `cos(reference_lat)` on longitude.
    Refined { reference_lat: f64 },
}

/// Everything a detector needs: durations, both tree configs and the mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub trace: TraceConfig,
    pub lat: TreeConfig,
    pub lon: TreeConfig,
    pub mode: DetectorMode,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::new(TraceConfig::default(), Region::INDIA, ScaleMode::Nominal).expect("default detector config")
    }
}

impl DetectorConfig {
    pub fn new(trace: TraceConfig, region: Region, scale: ScaleMode) -> Result<Self, TraceError> {
        trace.validate()?;
        let (lat_axis, lon_axis) = match scale {
            ScaleMode::Nominal => {
                (AxisConfig::latitude().with_contact_distance(trace.d_lat_m), AxisConfig::longitude().with_contact_distance(trace.d_lon_m))
            }
            ScaleMode::Refined { reference_lat } => {
                (AxisConfig::refined_latitude(trace.d_lat_m), AxisConfig::refined_longitude(trace.d_lon_m, reference_lat))
            }
        };
        Ok(Self {
            trace,
            lat: TreeConfig::for_axis(lat_axis, region)?,
            lon: TreeConfig::for_axis(lon_axis, region)?,
            mode: DetectorMode::default(),
        })
    }

    pub fn with_partitions(mut self, lat_m: u32, lon_m: u32) -> Result<Self, TraceError> {
        self.lat = TreeConfig::with_partitions(self.lat.axis_config, lat_m, self.lat.region)?;
        self.lon = TreeConfig::with_partitions(self.lon.axis_config, lon_m, self.lon.region)?;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: DetectorMode) -> Self {
        self.mode = mode;
        self
    }

    /// The axis predicate on a pair of positions at one instant.
    pub fn axis_predicate(&self, a: &GeoPoint, b: &GeoPoint) -> bool {
        axis_distance_m(a, b, &self.lat.axis_config) <= self.trace.d_lat_m
            && axis_distance_m(a, b, &self.lon.axis_config) <= self.trace.d_lon_m
    }
}

/// Unordered user pair stored as `(smaller, larger)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContactPair {
    a: UserId,
    b: UserId,
}

impl ContactPair {
    /// `None` for a self-pair.
    pub fn new(x: UserId, y: UserId) -> Option<Self> {
        match x.cmp(&y) {
            core::cmp::Ordering::Less => Some(Self { a: x, b: y }),
            core::cmp::Ordering::Greater => Some(Self { a: y, b: x }),
            core::cmp::Ordering::Equal => None,
        }
    }

    pub fn user_a(&self) -> UserId {
        self.a
    }

    pub fn user_b(&self) -> UserId {
        self.b
    }

    pub fn contains(&self, u: UserId) -> bool {
        self.a == u || self.b == u
    }

    pub fn other(&self, u: UserId) -> Option<UserId> {
        if u == self.a {
            Some(self.b)
        } else if u == self.b {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub pair: ContactPair,
    pub snapshot_from: u64,
    pub snapshot_to: u64,
    /// Position of `pair.user_a()` at `snapshot_to`.
    pub location: GeoPoint,
}

pub type PairSet = HashSet<ContactPair>;

/// Distance, neighbour reach and allowed drift for one axis pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisJob {
    pub d_axis: f64,
    /// Leaves scanned to the right of each anchor leaf.
    pub window: u64,
    /// Largest leaf displacement between the two snapshots; `None` accepts any.
    pub max_shift: Option<u64>,
}

impl AxisJob {
    pub fn static_for(cfg: &TreeConfig) -> Self {
        Self { d_axis: cfg.axis_config.contact_distance_m, window: cfg.neighbor_window(), max_shift: Some(0) }
    }

    /// `q` arcseconds either side, expanded to `q * m` buckets.
    pub fn dynamic_for(cfg: &TreeConfig, trace: &TraceConfig) -> Self {
        let q = trace.dynamic_window_seconds(cfg.axis_config.meters_per_arcsecond);
        Self { d_axis: cfg.axis_config.contact_distance_m, window: cfg.neighbor_window(), max_shift: Some(q * u64::from(cfg.partitions)) }
    }
}

fn close(cfg: &TreeConfig, d: f64, la: LeafIndex, pa: &GeoPoint, lb: LeafIndex, pb: &GeoPoint) -> bool {
    if la == lb && cfg.bucket_width_m() <= d {
        return true;
    }
    axis_distance_m(pa, pb, &cfg.axis_config) <= d
}

/// Calls `f(x, y)` with entry positions for every pair within `d` anchored at
/// a leaf in `anchors`. Neighbour leaves are reached by walking forward over
/// the sorted occupied keys.
fn for_close_pairs(tree: &SnapshotTree, d: f64, window: u64, anchors: RangeInclusive<LeafIndex>, mut f: impl FnMut(usize, usize)) {
    let cfg = tree.config();
    let keys = tree.keys();
    let entries = tree.entries();
    for i in tree.key_positions(anchors) {
        let p = keys[i];
        let here = tree.entry_span(i);
        for x in here.clone() {
            for y in x + 1..here.end {
                if close(cfg, d, p, &entries[x].point, p, &entries[y].point) {
                    f(x, y);
                }
            }
        }
        if window == 0 {
            continue;
        }
        let end = *cfg.window_range(p, window).end();
        for (j, _) in keys.iter().enumerate().skip(i + 1).take_while(|(_, q)| **q <= end) {
            for x in here.clone() {
                for y in tree.entry_span(j) {
                    if axis_distance_m(&entries[x].point, &entries[y].point, &cfg.axis_config) <= d {
                        f(x, y);
                    }
                }
            }
        }
    }
}

/// Entry positions reachable from anchors in `anchors` with reach `window`.
fn reachable_entries(tree: &SnapshotTree, window: u64, anchors: RangeInclusive<LeafIndex>) -> Range<usize> {
    let keys = tree.key_positions(anchors);
    if keys.is_empty() {
        return 0..0;
    }
    let last = tree.keys()[keys.end - 1];
    let reach = tree.key_positions(last..=*tree.config().window_range(last, window).end());
    tree.entry_span(keys.start).start..tree.entry_span(reach.end - 1).end
}

fn check_same_config(a: &SnapshotTree, b: &SnapshotTree) -> Result<(), TraceError> {
    if a.config() != b.config() {
        return Err(TraceError::ConfigMismatch);
    }
    Ok(())
}

/// Pairs anchored at leaves of `tree_t` inside `anchors` that satisfy the axis
/// bound at both snapshots. Anchoring at the lower leaf makes disjoint anchor
/// ranges produce disjoint outputs, so ranges can be processed independently.
pub fn interval_pairs_in(
    tree_t: &SnapshotTree,
    tree_t1: &SnapshotTree,
    job: &AxisJob,
    anchors: RangeInclusive<LeafIndex>,
) -> Vec<ContactPair> {
    let cfg = tree_t.config();
    let d = job.d_axis;
    let entries = tree_t.entries();
    // Position in `tree_t1` per reachable entry; `NONE` when absent or drifted too far.
    const NONE: usize = usize::MAX;
    let span = reachable_entries(tree_t, job.window, anchors.clone());
    let mut later = Vec::with_capacity(span.len());
    for i in tree_t.key_positions(anchors.clone()).start..tree_t.keys().len() {
        let leaf_span = tree_t.entry_span(i);
        if leaf_span.start >= span.end {
            break;
        }
        let here = tree_t.keys()[i];
        for e in &entries[leaf_span] {
            let pos = tree_t1.position_of(e.user).filter(|&p| job.max_shift.is_none_or(|m| tree_t1.entry_leaf(p).distance(here) <= m));
            later.push(pos.unwrap_or(NONE));
        }
    }
    let at_t1 = tree_t1.entries();
    let mut out = Vec::new();
    for_close_pairs(tree_t, d, job.window, anchors, |x, y| {
        let (x1, y1) = (later[x - span.start], later[y - span.start]);
        if x1 == NONE || y1 == NONE {
            return;
        }
        if close(cfg, d, tree_t1.entry_leaf(x1), &at_t1[x1].point, tree_t1.entry_leaf(y1), &at_t1[y1].point) {
            out.extend(ContactPair::new(entries[x].user, entries[y].user));
        }
    });
    out
}

/// Pairs within `d_axis` at a single instant, anchored at leaves in `anchors`.
pub fn close_pairs_in(tree: &SnapshotTree, d_axis: f64, window: u64, anchors: RangeInclusive<LeafIndex>) -> Vec<ContactPair> {
    let mut out = Vec::new();
    let entries = tree.entries();
    for_close_pairs(tree, d_axis, window, anchors, |x, y| out.extend(ContactPair::new(entries[x].user, entries[y].user)));
    out
}

fn all_leaves() -> RangeInclusive<LeafIndex> {
    LeafIndex(0)..=LeafIndex(u64::MAX)
}

/// Every pair within `d_axis` on the tree's axis. `window` must be at least
/// `ceil(d_axis / bucket width)` for the result to be complete.
pub fn axis_close_pairs(tree: &SnapshotTree, d_axis: f64, window: u64) -> PairSet {
    close_pairs_in(tree, d_axis, window, all_leaves()).into_iter().collect()
}

pub fn run_axis_job(tree_t: &SnapshotTree, tree_t1: &SnapshotTree, job: &AxisJob) -> Result<PairSet, TraceError> {
    check_same_config(tree_t, tree_t1)?;
    Ok(interval_pairs_in(tree_t, tree_t1, job, all_leaves()).into_iter().collect())
}

/// Pairs close at both instants among users whose leaf is unchanged.
pub fn static_contacts(tree_t: &SnapshotTree, tree_t1: &SnapshotTree, d_axis: f64, window: u64) -> Result<PairSet, TraceError> {
    run_axis_job(tree_t, tree_t1, &AxisJob { d_axis, window, max_shift: Some(0) })
}

/// Pairs close at both instants among users that stayed inside the
/// pedestrian window (`q` arcseconds, `q * m` leaves) between snapshots.
pub fn dynamic_contacts(tree_t: &SnapshotTree, tree_t1: &SnapshotTree, cfg: &TraceConfig) -> Result<PairSet, TraceError> {
    run_axis_job(tree_t, tree_t1, &AxisJob::dynamic_for(tree_t.config(), cfg))
}

/// Intersection of the latitude and longitude pair sets.
pub fn combine_axes(lat_pairs: &PairSet, lon_pairs: &PairSet) -> PairSet {
    let (small, large) = if lat_pairs.len() <= lon_pairs.len() { (lat_pairs, lon_pairs) } else { (lon_pairs, lat_pairs) };
    small.iter().filter(|p| large.contains(*p)).copied().collect()
}

/// Lists at most this long are hashed directly.
const JOIN_DIRECT: usize = 1 << 15;
/// Filter bits per listed pair; one probe gives about 6% false positives.
const FILTER_BITS_PER_PAIR: usize = 16;

/// One-probe bit filter over a pair list: no false negatives.
struct PairFilter {
    words: Vec<u64>,
    shift: u32,
}

impl PairFilter {
    fn new(pairs: &[ContactPair]) -> Self {
        let slots = (pairs.len() * FILTER_BITS_PER_PAIR).next_power_of_two().max(64);
        let mut f = Self { words: alloc::vec![0; slots / 64], shift: u64::BITS - slots.trailing_zeros() };
        for p in pairs {
            let s = f.slot(p);
            f.words[s >> 6] |= 1 << (s & 63);
        }
        f
    }

    fn slot(&self, p: &ContactPair) -> usize {
        let h = (p.user_a().0 ^ p.user_b().0.rotate_left(32)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        (h >> self.shift) as usize
    }

    fn may_contain(&self, p: &ContactPair) -> bool {
        let s = self.slot(p);
        self.words[s >> 6] & (1 << (s & 63)) != 0
    }
}

fn hash_join(a: &[ContactPair], b: &[ContactPair]) -> PairSet {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let index: PairSet = small.iter().copied().collect();
    large.iter().filter(|p| index.contains(*p)).copied().collect()
}

/// Pairs present in both lists. Long lists are first cut down to the pairs
/// that pass a bit filter built from the other list.
pub fn intersect_pair_lists(a: &[ContactPair], b: &[ContactPair]) -> PairSet {
    if a.len().min(b.len()) <= JOIN_DIRECT {
        return hash_join(a, b);
    }
    let (fa, fb) = (PairFilter::new(a), PairFilter::new(b));
    let a: Vec<_> = a.iter().filter(|p| fb.may_contain(p)).copied().collect();
    let b: Vec<_> = b.iter().filter(|p| fa.may_contain(p)).copied().collect();
    hash_join(&a, &b)
}

/// Latitude and longitude trees for one sampling instant.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub id: u64,
    pub lat: SnapshotTree,
    pub lon: SnapshotTree,
}

impl Snapshot {
    pub fn build(records: &[GeoRecord], cfg: &DetectorConfig, id: u64) -> Result<Self, TraceError> {
        Ok(Self { id, lat: SnapshotTree::build(records, cfg.lat, id)?, lon: SnapshotTree::build(records, cfg.lon, id)? })
    }

    pub fn len(&self) -> usize {
        self.lat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lat.is_empty()
    }
}

/// Axis jobs for a detector mode, in `(latitude, longitude)` order.
pub fn jobs_for(cfg: &DetectorConfig, mode: DetectorMode) -> Vec<(AxisJob, AxisJob)> {
    let st = (AxisJob::static_for(&cfg.lat), AxisJob::static_for(&cfg.lon));
    let dy = (AxisJob::dynamic_for(&cfg.lat, &cfg.trace), AxisJob::dynamic_for(&cfg.lon, &cfg.trace));
    match mode {
        DetectorMode::Static => alloc::vec![st],
        DetectorMode::Dynamic => alloc::vec![dy],
        // Zero drift is inside every dynamic window, so the static pass adds nothing.
        DetectorMode::Both => alloc::vec![dy],
    }
}

/// Final pair set for one interval under `cfg.mode`.
pub fn detect_interval(t: &Snapshot, t1: &Snapshot, cfg: &DetectorConfig) -> Result<PairSet, TraceError> {
    let mut out = PairSet::new();
    for (lat_job, lon_job) in jobs_for(cfg, cfg.mode) {
        check_same_config(&t.lat, &t1.lat)?;
        check_same_config(&t.lon, &t1.lon)?;
        let lat = interval_pairs_in(&t.lat, &t1.lat, &lat_job, all_leaves());
        let lon = interval_pairs_in(&t.lon, &t1.lon, &lon_job, all_leaves());
        out.extend(intersect_pair_lists(&lat, &lon));
    }
    Ok(out)
}

/// All-pairs reference: a pair is a contact iff both users are present at
/// both instants and satisfy the axis predicate at each. Quadratic.
pub fn brute_force_contacts(records_t: &[GeoRecord], records_t1: &[GeoRecord], cfg: &DetectorConfig) -> PairSet {
    let later: HashMap<UserId, GeoPoint> = records_t1.iter().map(|r| (r.user, r.point)).collect();
    let both: Vec<(UserId, GeoPoint, GeoPoint)> =
        records_t.iter().filter_map(|r| later.get(&r.user).map(|p1| (r.user, r.point, *p1))).collect();
    let mut out = PairSet::new();
    for (i, (u, a0, a1)) in both.iter().enumerate() {
        for (v, b0, b1) in &both[i + 1..] {
            if cfg.axis_predicate(a0, b0) && cfg.axis_predicate(a1, b1) {
                out.extend(ContactPair::new(*u, *v));
            }
        }
    }
    out
}

/// Sorted events for one interval.
pub fn events_for(pairs: &PairSet, t: &Snapshot, t1: &Snapshot) -> Vec<ContactEvent> {
    let mut sorted: Vec<ContactPair> = pairs.iter().copied().collect();
    sorted.sort_unstable();
    sorted
        .into_iter()
        .filter_map(|pair| {
            let location = t1.lat.point_of_user(pair.user_a())?;
            Some(ContactEvent { pair, snapshot_from: t.id, snapshot_to: t1.id, location })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBatch {
    pub snapshot: u64,
    pub records: Vec<GeoRecord>,
}

/// Two adjacent batches whose indices are not consecutive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotGap {
    pub from: u64,
    pub to: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceOutput {
    pub events: Vec<ContactEvent>,
    pub gaps: Vec<SnapshotGap>,
}

/// Runs the detector over each consecutive pair of batches. Non-consecutive
/// neighbours are reported as gaps and skipped.
pub fn trace_stream(batches: &[SnapshotBatch], cfg: &DetectorConfig) -> Result<TraceOutput, TraceError> {
    let mut out = TraceOutput::default();
    let mut prev: Option<Snapshot> = None;
    for batch in batches {
        let snap = Snapshot::build(&batch.records, cfg, batch.snapshot)?;
        if let Some(p) = prev.as_ref() {
            if snap.id == p.id + 1 {
                let pairs = detect_interval(p, &snap, cfg)?;
                out.events.extend(events_for(&pairs, p, &snap));
            } else {
                out.gaps.push(SnapshotGap { from: p.id, to: snap.id });
            }
        }
        prev = Some(snap);
    }
    Ok(out)
}

/// A run of events for one pair over consecutive intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContactChain {
    pub pair: ContactPair,
    pub first_snapshot: u64,
    pub intervals: u64,
}

impl ContactChain {
    /// Lower bound on contact time implied by the chain, minutes.
    pub fn certified_minutes(&self, cfg: &TraceConfig) -> f64 {
        self.intervals as f64 * cfg.snapshot_interval_min()
    }
}

/// Groups events into maximal runs of consecutive intervals per pair.
pub fn chain_events(events: &[ContactEvent]) -> Vec<ContactChain> {
    let mut keyed: Vec<(ContactPair, u64)> = events.iter().map(|e| (e.pair, e.snapshot_from)).collect();
    keyed.sort_unstable();
    keyed.dedup();
    let mut chains: Vec<ContactChain> = Vec::new();
    for (pair, from) in keyed {
        match chains.last_mut() {
            Some(c) if c.pair == pair && c.first_snapshot + c.intervals == from => c.intervals += 1,
            _ => chains.push(ContactChain { pair, first_snapshot: from, intervals: 1 }),
        }
    }
    chains
}
