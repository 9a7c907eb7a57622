//! Potential-hotspot queries around a reference point.
//!
//! Candidates come from the leaves within an arcminute window of the
//! reference on both axis trees; the exact great-circle distance then filters
//! them to the radius. Positives are joined from the registry, and the
//! susceptible contacts of in-area positives are tallied against the area.

use alloc::vec::Vec;

use hashbrown::HashSet;
use thiserror::Error;

use crate::contact_store::{susceptible_from, ContactLog, InfectionRegistry, IntervalWindow};
use crate::geo::{haversine_m, GeoError, GeoPoint, REFINED_METERS_PER_ARCSECOND};
use crate::tracing::Snapshot;
use crate::tree::{SnapshotTree, TreeError};
use crate::UserId;

/// Widening applied to the longitude window to absorb the spherical approximation.
const LON_WINDOW_MARGIN: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HotspotError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("invalid hotspot query: {0}")]
    InvalidQuery(&'static str),
}

impl From<GeoError> for HotspotError {
    fn from(e: GeoError) -> Self {
        HotspotError::Tree(TreeError::Geo(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HotspotMode {
    /// Flag when in-area positives reach the threshold.
    #[default]
    Threshold,
    /// Flag when any positive or susceptible user is in the area.
    AnyPositive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotspotQuery {
    pub reference: GeoPoint,
    pub radius_km: f64,
    pub positive_threshold: u32,
    pub mode: HotspotMode,
    /// Contact intervals considered when collecting susceptibles.
    pub window: IntervalWindow,
    pub hops: u32,
}

impl HotspotQuery {
    pub fn new(reference: GeoPoint, radius_km: f64, positive_threshold: u32) -> Self {
        Self { reference, radius_km, positive_threshold, mode: HotspotMode::Threshold, window: IntervalWindow::ALL, hops: 1 }
    }

    pub fn validate(&self) -> Result<(), HotspotError> {
        if !(self.radius_km.is_finite() && self.radius_km > 0.0) {
            return Err(HotspotError::InvalidQuery("radius must be positive"));
        }
        if self.positive_threshold == 0 {
            return Err(HotspotError::InvalidQuery("threshold must be at least 1"));
        }
        if self.hops == 0 {
            return Err(HotspotError::InvalidQuery("hops must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaUser {
    pub user: UserId,
    pub point: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HotspotReport {
    /// All users in the radius, ascending id.
    pub users_in_area: Vec<AreaUser>,
    pub positives_in_area: Vec<AreaUser>,
    pub susceptibles_in_area: Vec<AreaUser>,
    /// Contacts of in-area positives who are no longer in the area.
    pub susceptibles_departed: Vec<UserId>,
    pub is_potential_hotspot: bool,
}

impl HotspotReport {
    pub fn status_of(&self, user: UserId) -> MarkerStatus {
        let has = |v: &[AreaUser]| v.binary_search_by_key(&user, |a| a.user).is_ok();
        if has(&self.positives_in_area) {
            MarkerStatus::Positive
        } else if has(&self.susceptibles_in_area) {
            MarkerStatus::Susceptible
        } else {
            MarkerStatus::Normal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerStatus {
    Normal,
    Positive,
    Susceptible,
}

impl MarkerStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MarkerStatus::Normal => "normal",
            MarkerStatus::Positive => "positive",
            MarkerStatus::Susceptible => "susceptible",
        }
    }
}

/// Latitude window in arcminutes covering `radius_km`, at 30.866 m per arcsecond.
pub fn arcminute_window(radius_km: f64) -> f64 {
    radius_km * 1000.0 / (60.0 * REFINED_METERS_PER_ARCSECOND)
}

/// Longitude window in arcminutes. Uses the cosine of the farthest latitude
/// the radius can reach so the window never under-covers.
pub fn longitude_arcminute_window(radius_km: f64, reference_lat: f64) -> f64 {
    let lat_window = arcminute_window(radius_km);
    let far_lat = (reference_lat.abs() + lat_window / 60.0).min(89.0);
    lat_window / libm::cos(far_lat.to_radians()) * LON_WINDOW_MARGIN
}

fn window_users(tree: &SnapshotTree, reference: &GeoPoint, arcminutes: f64) -> Result<HashSet<UserId>, HotspotError> {
    let cfg = tree.config();
    let centre = cfg.leaf_of(reference)?;
    let buckets = libm::ceil(arcminutes * 60.0 * f64::from(cfg.partitions)) as u64;
    let range = cfg.window_range(centre, buckets);
    Ok(tree.leaves_in(range).flat_map(|(_, es)| es.iter().map(|e| e.user)).collect())
}

/// Users within `radius_km` of the reference in the given snapshot.
pub fn users_in_radius(snapshot: &Snapshot, reference: &GeoPoint, radius_km: f64) -> Result<Vec<AreaUser>, HotspotError> {
    let lat_users = window_users(&snapshot.lat, reference, arcminute_window(radius_km))?;
    let lon_users = window_users(&snapshot.lon, reference, longitude_arcminute_window(radius_km, reference.lat))?;
    let radius_m = radius_km * 1000.0;
    let mut out: Vec<AreaUser> = lat_users
        .intersection(&lon_users)
        .filter_map(|u| {
            let point = snapshot.lat.point_of_user(*u)?;
            (haversine_m(reference, &point) <= radius_m).then_some(AreaUser { user: *u, point })
        })
        .collect();
    out.sort_unstable_by_key(|a| a.user);
    Ok(out)
}

pub fn detect(
    query: &HotspotQuery,
    snapshot: &Snapshot,
    log: &ContactLog,
    registry: &InfectionRegistry,
) -> Result<HotspotReport, HotspotError> {
    query.validate()?;
    snapshot.lat.config().region.check(&query.reference)?;
    let users_in_area = users_in_radius(snapshot, &query.reference, query.radius_km)?;
    let positives_in_area: Vec<AreaUser> = users_in_area.iter().filter(|a| registry.is_positive(a.user)).copied().collect();
    let sources: Vec<UserId> = positives_in_area.iter().map(|a| a.user).collect();
    let suspects = susceptible_from(log, registry, &sources, query.window, query.hops);

    let susceptibles_in_area: Vec<AreaUser> = users_in_area.iter().filter(|a| suspects.contains(&a.user)).copied().collect();
    let in_area: HashSet<UserId> = users_in_area.iter().map(|a| a.user).collect();
    let mut susceptibles_departed: Vec<UserId> = suspects.iter().filter(|u| !in_area.contains(*u)).copied().collect();
    susceptibles_departed.sort_unstable();

    let is_potential_hotspot = match query.mode {
        HotspotMode::Threshold => positives_in_area.len() >= query.positive_threshold as usize,
        HotspotMode::AnyPositive => !positives_in_area.is_empty() || !susceptibles_in_area.is_empty(),
    };
    Ok(HotspotReport { users_in_area, positives_in_area, susceptibles_in_area, susceptibles_departed, is_potential_hotspot })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracing::{ContactEvent, ContactPair, DetectorConfig};
    use crate::GeoRecord;
    use alloc::vec;

    fn snapshot(points: &[(u64, f64, f64)]) -> Snapshot {
        let recs: Vec<GeoRecord> =
            points.iter().map(|&(u, lat, lon)| GeoRecord { user: UserId(u), point: GeoPoint { lat, lon }, snapshot: 0 }).collect();
        Snapshot::build(&recs, &DetectorConfig::default(), 0).unwrap()
    }

    #[test]
    fn window_sizes() {
        assert!((arcminute_window(10.0) - 5.3997).abs() < 1e-3);
        assert!((arcminute_window(0.001) - 0.00054).abs() < 1e-5);
        assert!((arcminute_window(1.855) - 1.0).abs() < 2e-3);
        assert!(longitude_arcminute_window(10.0, 22.0) > arcminute_window(10.0));
    }

    #[test]
    fn tiny_window_keeps_reference_leaf() {
        let s = snapshot(&[(1, 22.5, 75.5)]);
        let users = users_in_radius(&s, &GeoPoint { lat: 22.5, lon: 75.5 }, 0.001).unwrap();
        assert_eq!(users.len(), 1);
    }

    #[test]
    fn no_positives_no_hotspot() {
        let s = snapshot(&[(1, 22.5, 75.5), (2, 22.51, 75.5)]);
        let q = HotspotQuery::new(GeoPoint { lat: 22.5, lon: 75.5 }, 10.0, 1);
        let r = detect(&q, &s, &ContactLog::new(), &InfectionRegistry::new()).unwrap();
        assert_eq!(r.users_in_area.len(), 2);
        assert!(!r.is_potential_hotspot);
    }

    #[test]
    fn reference_outside_region() {
        let s = snapshot(&[(1, 22.5, 75.5)]);
        let q = HotspotQuery::new(GeoPoint { lat: 50.0, lon: 75.5 }, 10.0, 1);
        assert!(matches!(detect(&q, &s, &ContactLog::new(), &InfectionRegistry::new()), Err(HotspotError::Tree(_))));
        let bad = HotspotQuery { positive_threshold: 0, ..HotspotQuery::new(GeoPoint { lat: 22.5, lon: 75.5 }, 10.0, 1) };
        assert!(detect(&bad, &s, &ContactLog::new(), &InfectionRegistry::new()).is_err());
    }

    #[test]
    fn departed_susceptibles_reported() {
        // User 3 met positive 1 but is now 50 km away.
        let s = snapshot(&[(1, 22.5, 75.5), (2, 22.501, 75.5), (3, 23.0, 75.5)]);
        let mut reg = InfectionRegistry::new();
        reg.mark_positive(UserId(1), 0);
        let mut log = ContactLog::new();
        let at = GeoPoint { lat: 22.5, lon: 75.5 };
        let ev =
            |a, b| ContactEvent { pair: ContactPair::new(UserId(a), UserId(b)).unwrap(), snapshot_from: 0, snapshot_to: 1, location: at };
        log.record_events(&[ev(1, 2), ev(1, 3)]);
        let q = HotspotQuery { mode: HotspotMode::AnyPositive, ..HotspotQuery::new(at, 10.0, 1) };
        let r = detect(&q, &s, &log, &reg).unwrap();
        assert_eq!(r.susceptibles_in_area.iter().map(|a| a.user).collect::<Vec<_>>(), vec![UserId(2)]);
        assert_eq!(r.susceptibles_departed, vec![UserId(3)]);
        assert!(r.is_potential_hotspot);
        assert_eq!(r.status_of(UserId(1)), MarkerStatus::Positive);
        assert_eq!(r.status_of(UserId(2)), MarkerStatus::Susceptible);
        assert_eq!(r.status_of(UserId(9)), MarkerStatus::Normal);
    }
}
