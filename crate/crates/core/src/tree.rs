//! The per-axis DMS bucket index.
//!
//! A coordinate is routed degree → minute → second → partition, where the
//! seconds fraction is split into `m` equal slices. Each slice is a leaf.
//! Leaves are addressed by a linear [`LeafIndex`] so that neighbouring leaves
//! differ by one even across second, minute and degree carries.
//!
//! Storage is sparse: only non-empty leaves exist. [`capacity_report`] still
//! reports the dense slot arithmetic.

use alloc::vec::Vec;
use core::ops::{Range, RangeInclusive};

use hashbrown::HashMap;
use thiserror::Error;

use crate::geo::{to_dms, Axis, AxisConfig, DmsCoordinate, GeoError, GeoPoint, Region};
use crate::{GeoRecord, UserId};

/// Slack absorbed when turning a real ratio into a whole bucket count.
const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("user {0} already present in snapshot")]
    DuplicateUser(UserId),
    #[error("record for snapshot {found} passed to snapshot {expected}")]
    SnapshotMismatch { expected: u64, found: u64 },
    #[error("invalid tree config: {0}")]
    InvalidConfig(&'static str),
}

/// `ceil(x)` that ignores float noise just above an integer.
pub(crate) fn ceil_ratio(x: f64) -> u64 {
    let c = libm::ceil(x - RATIO_SLACK);
    if c < 0.0 {
        0
    } else {
        c as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub axis_config: AxisConfig,
    /// Number of equal slices per arcsecond (`m`).
    pub partitions: u32,
    pub region: Region,
}

impl TreeConfig {
    /// Builds a config with `m = ceil(meters_per_arcsecond / d)`, so a bucket is never wider than `d`.
    pub fn for_axis(axis_config: AxisConfig, region: Region) -> Result<Self, TreeError> {
        axis_config.validate()?;
        let m = ceil_ratio(axis_config.meters_per_arcsecond / axis_config.contact_distance_m).max(1);
        Self::with_partitions(axis_config, m as u32, region)
    }

    pub fn with_partitions(axis_config: AxisConfig, partitions: u32, region: Region) -> Result<Self, TreeError> {
        axis_config.validate()?;
        if partitions == 0 {
            return Err(TreeError::InvalidConfig("partitions must be at least 1"));
        }
        let (min, max) = region.bounds(axis_config.axis);
        if min >= max {
            return Err(TreeError::InvalidConfig("empty region"));
        }
        Ok(Self { axis_config, partitions, region })
    }

    /// Latitude, 3 m contact distance, `m = 10`, India region.
    pub fn latitude() -> Self {
        Self::for_axis(AxisConfig::latitude(), Region::INDIA).expect("default latitude config")
    }

    /// Longitude, 4 m contact distance, `m = 8`, India region.
    pub fn longitude() -> Self {
        Self::for_axis(AxisConfig::longitude(), Region::INDIA).expect("default longitude config")
    }

    pub fn axis(&self) -> Axis {
        self.axis_config.axis
    }

    /// Axis width of one leaf in meters.
    pub fn bucket_width_m(&self) -> f64 {
        self.axis_config.meters_per_arcsecond / f64::from(self.partitions)
    }

    /// Buckets a neighbour scan must cover so that every pair within
    /// `contact_distance_m` is reachable: `ceil(d / w)`, at least 1.
    pub fn neighbor_window(&self) -> u64 {
        self.window_for_distance(self.axis_config.contact_distance_m)
    }

    pub fn window_for_distance(&self, meters: f64) -> u64 {
        ceil_ratio(meters / self.bucket_width_m()).max(1)
    }

    /// Whether two entries sharing a leaf are within the contact distance without measuring.
    pub fn same_leaf_is_contact(&self) -> bool {
        self.bucket_width_m() <= self.axis_config.contact_distance_m
    }

    pub fn degree_span(&self) -> u16 {
        let (min, max) = self.region.bounds(self.axis());
        max - min
    }

    pub fn leaf_count(&self) -> u64 {
        u64::from(self.degree_span()) * 3600 * u64::from(self.partitions)
    }

    /// Routes the coordinate on this tree's axis to its bucket. Constant time.
    pub fn bucket_path(&self, p: &GeoPoint) -> Result<BucketPath, TreeError> {
        let value = p.coordinate(self.axis());
        self.region.check_axis(self.axis(), value)?;
        let dms = to_dms(value)?;
        Ok(self.path_from_dms(&dms))
    }

    fn path_from_dms(&self, dms: &DmsCoordinate) -> BucketPath {
        let m = self.partitions;
        // Non-negative, so the cast floors.
        let partition = ((dms.seconds_frac * f64::from(m)) as u32).min(m - 1);
        BucketPath { degree: dms.degrees, minute: dms.minutes, second: dms.seconds_whole, partition }
    }

    pub fn leaf_index(&self, path: &BucketPath) -> LeafIndex {
        let (min_deg, _) = self.region.bounds(self.axis());
        let deg = u64::from(path.degree - min_deg);
        let secs = (deg * 60 + u64::from(path.minute)) * 60 + u64::from(path.second);
        LeafIndex(secs * u64::from(self.partitions) + u64::from(path.partition))
    }

    /// Inverse of [`TreeConfig::leaf_index`]; `None` outside the region.
    pub fn path_of(&self, leaf: LeafIndex) -> Option<BucketPath> {
        if leaf.0 >= self.leaf_count() {
            return None;
        }
        let m = u64::from(self.partitions);
        let partition = (leaf.0 % m) as u32;
        let secs = leaf.0 / m;
        let (min_deg, _) = self.region.bounds(self.axis());
        Some(BucketPath { degree: min_deg + (secs / 3600) as u16, minute: ((secs / 60) % 60) as u8, second: (secs % 60) as u8, partition })
    }

    pub fn leaf_of(&self, p: &GeoPoint) -> Result<LeafIndex, TreeError> {
        Ok(self.leaf_index(&self.bucket_path(p)?))
    }

    /// Leaf indices within `window` of `leaf`, clipped to the region.
    pub fn window_range(&self, leaf: LeafIndex, window: u64) -> RangeInclusive<LeafIndex> {
        let lo = leaf.0.saturating_sub(window);
        let hi = leaf.0.saturating_add(window).min(self.leaf_count().saturating_sub(1));
        LeafIndex(lo)..=LeafIndex(hi)
    }
}

/// Degree, minute, second and partition of a leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BucketPath {
    pub degree: u16,
    pub minute: u8,
    pub second: u8,
    pub partition: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeafIndex(pub u64);

impl LeafIndex {
    pub fn distance(self, other: LeafIndex) -> u64 {
        self.0.abs_diff(other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafEntry {
    pub user: UserId,
    pub point: GeoPoint,
}

impl From<&GeoRecord> for LeafEntry {
    fn from(r: &GeoRecord) -> Self {
        Self { user: r.user, point: r.point }
    }
}

/// Bucket index for one axis at one sampling instant.
///
/// Occupied leaves are kept as a sorted key array with offsets into one
/// entry array, so a neighbour scan is a forward walk over adjacent slots.
#[derive(Debug, Clone)]
pub struct SnapshotTree {
    config: TreeConfig,
    snapshot_id: u64,
    keys: Vec<LeafIndex>,
    /// `keys.len() + 1` offsets; leaf `i` owns `entries[starts[i]..starts[i + 1]]`.
    starts: Vec<usize>,
    entries: Vec<LeafEntry>,
    /// Leaf of each entry, parallel to `entries`.
    entry_leaf: Vec<LeafIndex>,
    /// Position in `entries` per user.
    users: HashMap<UserId, usize>,
}

impl SnapshotTree {
    pub fn new(config: TreeConfig, snapshot_id: u64) -> Self {
        Self::with_capacity(config, snapshot_id, 0)
    }

    pub fn with_capacity(config: TreeConfig, snapshot_id: u64, users: usize) -> Self {
        let mut starts = Vec::with_capacity(users + 1);
        starts.push(0);
        Self {
            config,
            snapshot_id,
            keys: Vec::with_capacity(users),
            starts,
            entries: Vec::with_capacity(users),
            entry_leaf: Vec::with_capacity(users),
            users: HashMap::with_capacity(users),
        }
    }

    /// Indexes every record. All records must carry `snapshot_id`. Entries
    /// within a leaf keep record order.
    pub fn build(records: &[GeoRecord], config: TreeConfig, snapshot_id: u64) -> Result<Self, TreeError> {
        let idx_bits = usize::BITS - records.len().leading_zeros();
        let leaf_bits = u64::BITS - config.leaf_count().leading_zeros();
        let packed = (leaf_bits > 0 && idx_bits + leaf_bits <= u64::BITS).then_some(idx_bits);
        Self::build_sorted(records, config, snapshot_id, packed)
    }

    /// `packed` is the position width when `(leaf, position)` fits one `u64`
    /// sort key; `None` sorts tuples.
    fn build_sorted(records: &[GeoRecord], config: TreeConfig, snapshot_id: u64, packed: Option<u32>) -> Result<Self, TreeError> {
        let mut tree = Self::with_capacity(config, snapshot_id, records.len());
        let leaf_of = |r: &GeoRecord| {
            if r.snapshot != snapshot_id {
                return Err(TreeError::SnapshotMismatch { expected: snapshot_id, found: r.snapshot });
            }
            config.leaf_of(&r.point)
        };
        if let Some(bits) = packed {
            let mut keys = Vec::with_capacity(records.len());
            for (i, r) in records.iter().enumerate() {
                keys.push((leaf_of(r)?.0 << bits) | i as u64);
            }
            keys.sort_unstable();
            let mask = (1u64 << bits) - 1;
            tree.entries.extend(keys.iter().map(|k| LeafEntry::from(&records[(k & mask) as usize])));
            tree.entry_leaf.extend(keys.iter().map(|k| LeafIndex(k >> bits)));
        } else {
            let mut keys = Vec::with_capacity(records.len());
            for (i, r) in records.iter().enumerate() {
                keys.push((leaf_of(r)?, i));
            }
            keys.sort_unstable();
            tree.entries.extend(keys.iter().map(|&(_, i)| LeafEntry::from(&records[i])));
            tree.entry_leaf.extend(keys.iter().map(|&(l, _)| l));
        }
        for (pos, &leaf) in tree.entry_leaf.iter().enumerate() {
            if tree.keys.last() != Some(&leaf) {
                if pos > 0 {
                    tree.starts.push(pos);
                }
                tree.keys.push(leaf);
            }
        }
        if !tree.keys.is_empty() {
            tree.starts.push(tree.entries.len());
        }
        for (pos, e) in tree.entries.iter().enumerate() {
            if tree.users.insert(e.user, pos).is_some() {
                return Err(TreeError::DuplicateUser(e.user));
            }
        }
        Ok(tree)
    }

    /// Adds one user. Linear in the tree size; use [`SnapshotTree::build`] for batches.
    pub fn insert(&mut self, user: UserId, point: GeoPoint) -> Result<LeafIndex, TreeError> {
        let leaf = self.config.leaf_of(&point)?;
        if self.users.contains_key(&user) {
            return Err(TreeError::DuplicateUser(user));
        }
        let k = match self.keys.binary_search(&leaf) {
            Ok(k) => k,
            Err(k) => {
                self.keys.insert(k, leaf);
                self.starts.insert(k + 1, self.starts[k]);
                k
            }
        };
        let pos = self.starts[k + 1];
        self.entries.insert(pos, LeafEntry { user, point });
        self.entry_leaf.insert(pos, leaf);
        self.starts[k + 1..].iter_mut().for_each(|s| *s += 1);
        self.users.values_mut().filter(|p| **p >= pos).for_each(|p| *p += 1);
        self.users.insert(user, pos);
        Ok(leaf)
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn snapshot_id(&self) -> u64 {
        self.snapshot_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Occupied leaf keys, ascending.
    pub fn keys(&self) -> &[LeafIndex] {
        &self.keys
    }

    /// Entries of the `i`-th occupied leaf.
    pub fn entries_at(&self, i: usize) -> &[LeafEntry] {
        &self.entries[self.entry_span(i)]
    }

    /// All entries in leaf order.
    pub fn entries(&self) -> &[LeafEntry] {
        &self.entries
    }

    /// Positions in [`SnapshotTree::entries`] of the `i`-th occupied leaf.
    pub fn entry_span(&self, i: usize) -> Range<usize> {
        self.starts[i]..self.starts[i + 1]
    }

    /// Positions in [`SnapshotTree::keys`] of the occupied leaves inside `range`.
    pub fn key_positions(&self, range: RangeInclusive<LeafIndex>) -> Range<usize> {
        let lo = self.keys.partition_point(|k| k < range.start());
        let hi = self.keys.partition_point(|k| k <= range.end());
        lo..hi.max(lo)
    }

    pub fn leaf(&self, leaf: LeafIndex) -> &[LeafEntry] {
        match self.keys.binary_search(&leaf) {
            Ok(i) => self.entries_at(i),
            Err(_) => &[],
        }
    }

    /// Leaf and position of `user`.
    pub fn locate(&self, user: UserId) -> Option<(LeafIndex, GeoPoint)> {
        self.position_of(user).map(|i| (self.entry_leaf[i], self.entries[i].point))
    }

    /// Index of `user` in [`SnapshotTree::entries`].
    pub fn position_of(&self, user: UserId) -> Option<usize> {
        self.users.get(&user).copied()
    }

    /// Leaf of the entry at `pos`.
    pub fn entry_leaf(&self, pos: usize) -> LeafIndex {
        self.entry_leaf[pos]
    }

    pub fn leaf_of_user(&self, user: UserId) -> Option<LeafIndex> {
        self.locate(user).map(|(l, _)| l)
    }

    pub fn point_of_user(&self, user: UserId) -> Option<GeoPoint> {
        self.locate(user).map(|(_, p)| p)
    }

    /// Non-empty leaves in ascending index order.
    pub fn leaves(&self) -> impl Iterator<Item = (LeafIndex, &[LeafEntry])> + '_ {
        self.keys.iter().enumerate().map(|(i, k)| (*k, self.entries_at(i)))
    }

    pub fn leaves_in(&self, range: RangeInclusive<LeafIndex>) -> impl Iterator<Item = (LeafIndex, &[LeafEntry])> + '_ {
        self.key_positions(range).map(|i| (self.keys[i], self.entries_at(i)))
    }

    pub fn occupied_leaves(&self) -> usize {
        self.keys.len()
    }

    pub fn leaf_keys(&self) -> impl Iterator<Item = LeafIndex> + '_ {
        self.keys.iter().copied()
    }

    /// Non-empty leaves with index in `[leaf - window, leaf + window]`, carry-aware.
    pub fn neighbor_leaves(&self, leaf: LeafIndex, window: u64) -> Vec<LeafIndex> {
        self.leaves_in(self.config.window_range(leaf, window)).map(|(k, _)| k).collect()
    }

    pub fn max_leaf_population(&self) -> usize {
        self.starts.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Leaves holding more than `bound` entries.
    pub fn overfull_leaves(&self, bound: usize) -> Vec<(LeafIndex, usize)> {
        self.leaves().filter(|(_, v)| v.len() > bound).map(|(k, v)| (k, v.len())).collect()
    }
}

/// Dense slot counts for a fully allocated tree over the config's degree span.
///
/// Counting convention: every level is one slot per key, so the total is
/// `D + 60D + 3600D + 3600Dm` for `D` degrees, leaves included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityReport {
    pub degree_nodes: u64,
    pub minute_nodes: u64,
    pub second_nodes: u64,
    pub leaf_slots: u64,
    pub total_slots: u64,
    /// `total_slots` at 8 bytes per slot.
    pub dense_bytes: u64,
}

pub fn capacity_report(cfg: &TreeConfig) -> CapacityReport {
    capacity_for_span(u64::from(cfg.degree_span()), u64::from(cfg.partitions))
}

pub fn capacity_for_span(degrees: u64, partitions: u64) -> CapacityReport {
    let minute_nodes = degrees * 60;
    let second_nodes = minute_nodes * 60;
    let leaf_slots = second_nodes * partitions;
    let total_slots = degrees + minute_nodes + second_nodes + leaf_slots;
    CapacityReport { degree_nodes: degrees, minute_nodes, second_nodes, leaf_slots, total_slots, dense_bytes: total_slots * 8 }
}
