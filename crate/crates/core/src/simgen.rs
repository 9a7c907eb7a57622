//! Seeded synthetic populations with planted ground truth.
//!
//! Positions are drawn from ChaCha8 with the scenario seed as key and the
//! user block index as stream id, so a block's output does not depend on how
//! generation is sharded.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::tracing::{ContactPair, DetectorConfig, SnapshotBatch};
use crate::{GeoRecord, UserId};

/// Identifier recorded in file headers for the generator in use.
pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64/stream=block";

/// Users per RNG stream.
pub const BLOCK_USERS: u64 = 4096;

/// Stream id reserved for planting decisions.
const PLANT_STREAM: u64 = u64::MAX;

/// Fraction of the axis distance used for planted offsets, per side.
const PLANT_SPREAD: f64 = 0.45;

const HEADING_RETRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: &'static str },
}

fn invalid(field: &'static str, reason: &'static str) -> ScenarioError {
    ScenarioError::InvalidField { field, reason }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub const INDIA: BoundingBox = BoundingBox { lat_min: 7.0, lat_max: 37.0, lon_min: 68.0, lon_max: 97.0 };

    /// A `size_deg` square with its south-west corner at `(lat, lon)`.
    pub fn square(lat: f64, lon: f64, size_deg: f64) -> Self {
        Self { lat_min: lat, lat_max: lat + size_deg, lon_min: lon, lon_max: lon + size_deg }
    }

    /// 0.1° square used by correctness scenarios.
    pub fn correctness() -> Self {
        Self::square(22.0, 75.8, 0.1)
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.lat_min..self.lat_max).contains(&p.lat) && (self.lon_min..self.lon_max).contains(&p.lon)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let ok = |a: f64, b: f64| a.is_finite() && b.is_finite() && a >= 0.0 && a < b;
        if !ok(self.lat_min, self.lat_max) || self.lat_max > 90.0 {
            return Err(invalid("bbox.lat", "need 0 <= lat_min < lat_max <= 90"));
        }
        if !ok(self.lon_min, self.lon_max) || self.lon_max > 180.0 {
            return Err(invalid("bbox.lon", "need 0 <= lon_min < lon_max <= 180"));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> GeoPoint {
        GeoPoint { lat: rng.gen_range(self.lat_min..self.lat_max), lon: rng.gen_range(self.lon_min..self.lon_max) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Heading {
    #[default]
    Uniform,
    /// Degrees clockwise from north.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupPlan {
    pub count: u64,
    pub size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerPlan {
    pub count: u64,
    pub speed_mps: f64,
    pub heading: Heading,
}

impl Default for WalkerPlan {
    fn default() -> Self {
        Self { count: 0, speed_mps: 1.4, heading: Heading::Uniform }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub n_users: u64,
    pub bbox: BoundingBox,
    pub seed: u64,
    pub snapshot_count: u32,
    /// Minutes between snapshots.
    pub snapshot_interval_min: f64,
    pub static_groups: GroupPlan,
    pub walker_pairs: WalkerPlan,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_users: 1000,
            bbox: BoundingBox::correctness(),
            seed: 0,
            snapshot_count: 2,
            snapshot_interval_min: 2.5,
            static_groups: GroupPlan::default(),
            walker_pairs: WalkerPlan::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.bbox.validate()?;
        if self.snapshot_count == 0 {
            return Err(invalid("snapshot_count", "need at least one snapshot"));
        }
        if !(self.snapshot_interval_min.is_finite() && self.snapshot_interval_min > 0.0) {
            return Err(invalid("snapshot_interval_min", "must be positive"));
        }
        if self.static_groups.count > 0 && self.static_groups.size < 2 {
            return Err(invalid("static_groups.size", "groups need at least 2 members"));
        }
        if !(self.walker_pairs.speed_mps.is_finite() && self.walker_pairs.speed_mps >= 0.0) {
            return Err(invalid("walker_pairs.speed_mps", "must be non-negative"));
        }
        if self.planted_users() > self.n_users {
            return Err(invalid("n_users", "fewer users than planted groups and walkers need"));
        }
        Ok(())
    }

    pub fn planted_users(&self) -> u64 {
        self.static_groups.count * self.static_groups.size + 2 * self.walker_pairs.count
    }

    pub fn snapshot_interval_s(&self) -> f64 {
        self.snapshot_interval_min * 60.0
    }
}

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Positions for users `[block * BLOCK_USERS, ...)`, at most `BLOCK_USERS` of them.
pub fn gen_block(spec: &ScenarioSpec, block: u64) -> Vec<(UserId, GeoPoint)> {
    let first = block * BLOCK_USERS;
    let end = (first + BLOCK_USERS).min(spec.n_users);
    let mut rng = block_rng(spec.seed, block);
    (first..end).map(|u| (UserId(u), spec.bbox.sample(&mut rng))).collect()
}

pub fn block_count(n_users: u64) -> u64 {
    n_users.div_ceil(BLOCK_USERS)
}

/// Replicates stationary positions into `snapshot_count` batches.
pub fn batches_from_positions(positions: &[(UserId, GeoPoint)], snapshot_count: u32) -> Vec<SnapshotBatch> {
    (0..u64::from(snapshot_count))
        .map(|s| SnapshotBatch {
            snapshot: s,
            records: positions.iter().map(|&(user, point)| GeoRecord { user, point, snapshot: s }).collect(),
        })
        .collect()
}

/// Uniform stationary users, one batch per snapshot.
pub fn gen_uniform(spec: &ScenarioSpec) -> Result<Vec<SnapshotBatch>, ScenarioError> {
    spec.validate()?;
    let positions: Vec<(UserId, GeoPoint)> = (0..block_count(spec.n_users)).flat_map(|b| gen_block(spec, b)).collect();
    Ok(batches_from_positions(&positions, spec.snapshot_count))
}

fn offset_degrees(cfg: &DetectorConfig, d_lat_m: f64, d_lon_m: f64) -> (f64, f64) {
    (d_lat_m / cfg.lat.axis_config.meters_per_arcsecond / 3600.0, d_lon_m / cfg.lon.axis_config.meters_per_arcsecond / 3600.0)
}

fn random_offset(cfg: &DetectorConfig, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let s = PLANT_SPREAD;
    let dl = rng.gen_range(-s..=s) * cfg.trace.d_lat_m;
    let dn = rng.gen_range(-s..=s) * cfg.trace.d_lon_m;
    offset_degrees(cfg, dl, dn)
}

fn set_position(batch: &mut SnapshotBatch, user: UserId, point: GeoPoint) {
    match batch.records.iter_mut().find(|r| r.user == user) {
        Some(r) => r.point = point,
        None => batch.records.push(GeoRecord { user, point, snapshot: batch.snapshot }),
    }
}

fn all_pairs(members: &[UserId]) -> Vec<ContactPair> {
    let mut out = Vec::new();
    for (i, a) in members.iter().enumerate() {
        for b in &members[i + 1..] {
            out.extend(ContactPair::new(*a, *b));
        }
    }
    out
}

/// Places `members` within half the axis distances of `anchor` at every
/// snapshot, so every member pair satisfies the predicate. Returns those pairs.
pub fn plant_static_group(
    batches: &mut [SnapshotBatch],
    members: &[UserId],
    anchor: GeoPoint,
    cfg: &DetectorConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<ContactPair> {
    for u in members {
        let (dlat, dlon) = random_offset(cfg, rng);
        let p = GeoPoint { lat: anchor.lat + dlat, lon: anchor.lon + dlon };
        for b in batches.iter_mut() {
            set_position(b, *u, p);
        }
    }
    all_pairs(members)
}

/// Moves each pair along a shared heading at `speed_mps`, keeping a fixed
/// in-predicate offset between the two members. A heading that would leave
/// `bbox` is redrawn.
#[allow(clippy::too_many_arguments)]
pub fn plant_walkers(
    batches: &mut [SnapshotBatch],
    pairs: &[(UserId, UserId)],
    speed_mps: f64,
    heading: Heading,
    interval_s: f64,
    bbox: &BoundingBox,
    cfg: &DetectorConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<ContactPair> {
    let steps = batches.len().saturating_sub(1) as f64;
    let mut planted = Vec::new();
    for &(lead, follower) in pairs {
        let (off_lat, off_lon) = random_offset(cfg, rng);
        let mut chosen = None;
        for _ in 0..HEADING_RETRIES {
            let start = bbox.sample(rng);
            let theta = match heading {
                Heading::Uniform => rng.gen_range(0.0..360.0f64),
                Heading::Fixed(deg) => deg,
            }
            .to_radians();
            let step = speed_mps * interval_s;
            let (step_lat, step_lon) = offset_degrees(cfg, step * libm::cos(theta), step * libm::sin(theta));
            let end = GeoPoint { lat: start.lat + steps * step_lat, lon: start.lon + steps * step_lon };
            let end2 = GeoPoint { lat: end.lat + off_lat, lon: end.lon + off_lon };
            let start2 = GeoPoint { lat: start.lat + off_lat, lon: start.lon + off_lon };
            if [end, end2, start2].iter().all(|p| bbox.contains(p)) {
                chosen = Some((start, step_lat, step_lon));
                break;
            }
        }
        let Some((start, step_lat, step_lon)) = chosen else { continue };
        for (k, b) in batches.iter_mut().enumerate() {
            let k = k as f64;
            let p = GeoPoint { lat: start.lat + k * step_lat, lon: start.lon + k * step_lon };
            set_position(b, lead, p);
            set_position(b, follower, GeoPoint { lat: p.lat + off_lat, lon: p.lon + off_lon });
        }
        planted.extend(ContactPair::new(lead, follower));
    }
    planted
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub batches: Vec<SnapshotBatch>,
    pub planted_static: Vec<ContactPair>,
    pub planted_walkers: Vec<ContactPair>,
}

impl Scenario {
    pub fn planted(&self) -> impl Iterator<Item = &ContactPair> + '_ {
        self.planted_static.iter().chain(&self.planted_walkers)
    }
}

/// Uniform population with the spec's groups and walkers planted on the
/// lowest user ids: groups first, then walker pairs.
pub fn build_scenario(spec: &ScenarioSpec, cfg: &DetectorConfig) -> Result<Scenario, ScenarioError> {
    let mut batches = gen_uniform(spec)?;
    let mut rng = block_rng(spec.seed, PLANT_STREAM);
    let mut next = 0u64;
    let mut planted_static = Vec::new();
    for _ in 0..spec.static_groups.count {
        let members: Vec<UserId> = (next..next + spec.static_groups.size).map(UserId).collect();
        next += spec.static_groups.size;
        let anchor = spec.bbox.sample(&mut rng);
        planted_static.extend(plant_static_group(&mut batches, &members, anchor, cfg, &mut rng));
    }
    let pairs: Vec<(UserId, UserId)> = (0..spec.walker_pairs.count).map(|i| (UserId(next + 2 * i), UserId(next + 2 * i + 1))).collect();
    let w = spec.walker_pairs;
    let planted_walkers =
        plant_walkers(&mut batches, &pairs, w.speed_mps, w.heading, spec.snapshot_interval_s(), &spec.bbox, cfg, &mut rng);
    Ok(Scenario { batches, planted_static, planted_walkers })
}

/// Two users who are co-located only during `[start_min, end_min]` and
/// `apart_m` meters apart in latitude otherwise, sampled every `interval_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encounter {
    pub anchor: GeoPoint,
    pub start_min: f64,
    pub end_min: f64,
    pub interval_min: f64,
    pub snapshot_count: u32,
    pub apart_m: f64,
}

impl Encounter {
    pub fn sample_time(&self, snapshot: u64) -> f64 {
        snapshot as f64 * self.interval_min
    }

    pub fn batches(&self, cfg: &DetectorConfig) -> Vec<SnapshotBatch> {
        let (a, b) = (UserId(0), UserId(1));
        let (near_lat, near_lon) = offset_degrees(cfg, 0.3 * cfg.trace.d_lat_m, 0.3 * cfg.trace.d_lon_m);
        let (far_lat, _) = offset_degrees(cfg, self.apart_m, 0.0);
        (0..u64::from(self.snapshot_count))
            .map(|s| {
                let t = self.sample_time(s);
                let together = t >= self.start_min && t <= self.end_min;
                let other = if together {
                    GeoPoint { lat: self.anchor.lat + near_lat, lon: self.anchor.lon + near_lon }
                } else {
                    GeoPoint { lat: self.anchor.lat + far_lat, lon: self.anchor.lon }
                };
                SnapshotBatch {
                    snapshot: s,
                    records: alloc::vec![
                        GeoRecord { user: a, point: self.anchor, snapshot: s },
                        GeoRecord { user: b, point: other, snapshot: s },
                    ],
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_population() {
        let spec = ScenarioSpec { n_users: 0, ..Default::default() };
        let b = gen_uniform(&spec).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|x| x.records.is_empty()));
    }

    #[test]
    fn deterministic_and_in_box() {
        let spec = ScenarioSpec { n_users: 10_000, seed: 42, ..Default::default() };
        let a = gen_uniform(&spec).unwrap();
        let b = gen_uniform(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a[0].records.iter().all(|r| spec.bbox.contains(&r.point)));
        assert_eq!(a[0].records, a[1].records.iter().map(|r| GeoRecord { snapshot: 0, ..*r }).collect::<Vec<_>>());
        let other = gen_uniform(&ScenarioSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn blocks_independent_of_population() {
        let small = ScenarioSpec { n_users: 5000, seed: 7, ..Default::default() };
        let large = ScenarioSpec { n_users: 9000, ..small };
        assert_eq!(gen_block(&small, 0), gen_block(&large, 0));
        assert_eq!(gen_block(&small, 1)[..], gen_block(&large, 1)[..(5000 - BLOCK_USERS) as usize]);
    }

    #[test]
    fn group_pair_counts() {
        let cfg = DetectorConfig::default();
        let mut rng = block_rng(1, 0);
        let mut batches = gen_uniform(&ScenarioSpec { n_users: 10, ..Default::default() }).unwrap();
        let anchor = GeoPoint { lat: 22.05, lon: 75.85 };
        assert_eq!(plant_static_group(&mut batches, &[UserId(0), UserId(1)], anchor, &cfg, &mut rng).len(), 1);
        let trio = [UserId(2), UserId(3), UserId(4)];
        let pairs = plant_static_group(&mut batches, &trio, anchor, &cfg, &mut rng);
        assert_eq!(pairs.len(), 3);
        for b in &batches {
            let at = |u: UserId| b.records.iter().find(|r| r.user == u).unwrap().point;
            for p in &pairs {
                assert!(cfg.axis_predicate(&at(p.user_a()), &at(p.user_b())));
            }
        }
    }

    #[test]
    fn walker_displacement() {
        let cfg = DetectorConfig::default();
        let spec = ScenarioSpec {
            n_users: 2,
            walker_pairs: WalkerPlan { count: 1, speed_mps: 1.4, heading: Heading::Fixed(0.0) },
            ..Default::default()
        };
        let s = build_scenario(&spec, &cfg).unwrap();
        assert_eq!(s.planted_walkers.len(), 1);
        let lat = |k: usize| s.batches[k].records.iter().find(|r| r.user == UserId(0)).unwrap().point.lat;
        // 1.4 m/s * 150 s = 210 m = 7 arcseconds at 30 m.
        assert!(((lat(1) - lat(0)) * 3600.0 - 7.0).abs() < 1e-6);
    }

    #[test]
    fn zero_speed_walkers_stay_put() {
        let cfg = DetectorConfig::default();
        let spec = ScenarioSpec {
            n_users: 2,
            walker_pairs: WalkerPlan { count: 1, speed_mps: 0.0, heading: Heading::Uniform },
            ..Default::default()
        };
        let s = build_scenario(&spec, &cfg).unwrap();
        let p = |k: usize| s.batches[k].records.iter().map(|r| r.point).collect::<Vec<_>>();
        assert_eq!(p(0), p(1));
    }

    #[test]
    fn spec_validation_names_field() {
        let bad = ScenarioSpec { n_users: 3, static_groups: GroupPlan { count: 2, size: 2 }, ..Default::default() };
        assert_eq!(bad.validate(), Err(invalid("n_users", "fewer users than planted groups and walkers need")));
        let bad = ScenarioSpec { static_groups: GroupPlan { count: 1, size: 1 }, ..Default::default() };
        assert!(matches!(bad.validate(), Err(ScenarioError::InvalidField { field: "static_groups.size", .. })));
    }
}
