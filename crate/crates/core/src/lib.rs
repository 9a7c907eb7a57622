//! Proximity-contact detection over a multi-level DMS bucket index.
//!
//! User snapshots are bucketed per axis into [`tree::SnapshotTree`]s, pairs
//! co-located across two consecutive snapshots are found by leaf
//! intersection ([`tracing`]), and the resulting contact log drives exposure
//! queries ([`contact_store`]), hotspot detection ([`hotspot`]) and
//! hotspot-avoiding routing ([`routing`]). [`simgen`] produces seeded
//! synthetic populations with planted ground truth.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod contact_store;
pub mod geo;
pub mod hotspot;
pub mod routing;
pub mod simgen;
pub mod tracing;
pub mod tree;

use core::fmt;

pub use geo::{AxisConfig, GeoPoint, Region};
pub use tracing::{ContactEvent, ContactPair, DetectorConfig, DetectorMode, TraceConfig};
pub use tree::{LeafIndex, SnapshotTree, TreeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One user's position at one sampling instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoRecord {
    pub user: UserId,
    pub point: GeoPoint,
    pub snapshot: u64,
}
