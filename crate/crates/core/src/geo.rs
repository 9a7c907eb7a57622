//! Coordinates, DMS conversion and distances on the sphere and along a single axis.

use libm::{asin, cos, sin, sqrt};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Coarse arcsecond length used by default on both axes.
pub const NOMINAL_METERS_PER_ARCSECOND: f64 = 30.0;

/// Arcsecond of latitude used by the refined scale mode.
pub const REFINED_METERS_PER_ARCSECOND: f64 = 30.866;

const ARCSEC_PER_DEGREE: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeoError {
    #[error("coordinate {0} is not finite")]
    NotFinite(f64),
    #[error("coordinate {value} outside region [{min}, {max})")]
    OutOfRegion { value: f64, min: f64, max: f64 },
    #[error("invalid DMS component: {0}")]
    InvalidDms(&'static str),
    #[error("invalid axis config: {0}")]
    InvalidAxis(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Latitude,
    Longitude,
}

/// A position in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Builds a point, rejecting non-finite and negative coordinates.
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        for v in [lat, lon] {
            if !v.is_finite() {
                return Err(GeoError::NotFinite(v));
            }
        }
        if !(0.0..90.0).contains(&lat) {
            return Err(GeoError::OutOfRegion { value: lat, min: 0.0, max: 90.0 });
        }
        if !(0.0..180.0).contains(&lon) {
            return Err(GeoError::OutOfRegion { value: lon, min: 0.0, max: 180.0 });
        }
        Ok(Self { lat, lon })
    }

    pub fn coordinate(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Latitude => self.lat,
            Axis::Longitude => self.lon,
        }
    }
}

/// Whole-degree region bounds, lower-inclusive and upper-exclusive on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub lat_min: u16,
    pub lat_max: u16,
    pub lon_min: u16,
    pub lon_max: u16,
}

impl Region {
    /// Latitude 7–37, longitude 68–97.
    pub const INDIA: Region = Region { lat_min: 7, lat_max: 37, lon_min: 68, lon_max: 97 };

    pub fn new(lat_min: u16, lat_max: u16, lon_min: u16, lon_max: u16) -> Result<Self, GeoError> {
        if lat_min >= lat_max || lat_max > 90 {
            return Err(GeoError::InvalidAxis("latitude bounds"));
        }
        if lon_min >= lon_max || lon_max > 180 {
            return Err(GeoError::InvalidAxis("longitude bounds"));
        }
        Ok(Self { lat_min, lat_max, lon_min, lon_max })
    }

    pub fn bounds(&self, axis: Axis) -> (u16, u16) {
        match axis {
            Axis::Latitude => (self.lat_min, self.lat_max),
            Axis::Longitude => (self.lon_min, self.lon_max),
        }
    }

    pub fn check_axis(&self, axis: Axis, value: f64) -> Result<(), GeoError> {
        let (min, max) = self.bounds(axis);
        let (min, max) = (f64::from(min), f64::from(max));
        if !value.is_finite() {
            return Err(GeoError::NotFinite(value));
        }
        if value < min || value >= max {
            return Err(GeoError::OutOfRegion { value, min, max });
        }
        Ok(())
    }

    pub fn check(&self, p: &GeoPoint) -> Result<(), GeoError> {
        self.check_axis(Axis::Latitude, p.lat)?;
        self.check_axis(Axis::Longitude, p.lon)
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        self.check(p).is_ok()
    }
}

impl Default for Region {
    fn default() -> Self {
        Self::INDIA
    }
}

/// Degree/minute/second form of a non-negative angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmsCoordinate {
    pub degrees: u16,
    pub minutes: u8,
    pub seconds_whole: u8,
    /// Fractional part of the seconds, in `[0, 1)`.
    pub seconds_frac: f64,
}

impl DmsCoordinate {
    pub fn new(degrees: u16, minutes: u8, seconds_whole: u8, seconds_frac: f64) -> Result<Self, GeoError> {
        if minutes > 59 {
            return Err(GeoError::InvalidDms("minutes"));
        }
        if seconds_whole > 59 {
            return Err(GeoError::InvalidDms("seconds"));
        }
        if !(0.0..1.0).contains(&seconds_frac) {
            return Err(GeoError::InvalidDms("fractional seconds"));
        }
        Ok(Self { degrees, minutes, seconds_whole, seconds_frac })
    }

    /// Total whole arcseconds, `degrees*3600 + minutes*60 + seconds_whole`.
    pub fn whole_arcseconds(&self) -> u64 {
        u64::from(self.degrees) * 3600 + u64::from(self.minutes) * 60 + u64::from(self.seconds_whole)
    }
}

/// Splits a decimal-degree value into DMS.
///
/// Negative values are rejected; the bucket index only covers the NE quadrant.
pub fn to_dms(value: f64) -> Result<DmsCoordinate, GeoError> {
    if !value.is_finite() {
        return Err(GeoError::NotFinite(value));
    }
    if !(0.0..180.0).contains(&value) {
        return Err(GeoError::OutOfRegion { value, min: 0.0, max: 180.0 });
    }
    let total = value * ARCSEC_PER_DEGREE;
    // total >= 0, so truncation is floor; x - floor(x) is exact, so frac stays in [0, 1).
    let whole = total as u64;
    let frac = total - whole as f64;
    Ok(DmsCoordinate {
        degrees: (whole / 3600) as u16,
        minutes: ((whole / 60) % 60) as u8,
        seconds_whole: (whole % 60) as u8,
        seconds_frac: frac,
    })
}

pub fn from_dms(c: &DmsCoordinate) -> f64 {
    f64::from(c.degrees) + f64::from(c.minutes) / 60.0 + (f64::from(c.seconds_whole) + c.seconds_frac) / ARCSEC_PER_DEGREE
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let s1 = sin(dphi / 2.0);
    let s2 = sin(dlambda / 2.0);
    let h = s1 * s1 + cos(phi1) * cos(phi2) * s2 * s2;
    2.0 * EARTH_RADIUS_M * asin(sqrt(h.min(1.0)))
}

/// Per-axis scale and contact distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisConfig {
    pub axis: Axis,
    pub meters_per_arcsecond: f64,
    pub contact_distance_m: f64,
}

impl AxisConfig {
    pub fn new(axis: Axis, meters_per_arcsecond: f64, contact_distance_m: f64) -> Result<Self, GeoError> {
        let cfg = Self { axis, meters_per_arcsecond, contact_distance_m };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 30 m per arcsecond, 3 m contact distance.
    pub fn latitude() -> Self {
        Self { axis: Axis::Latitude, meters_per_arcsecond: NOMINAL_METERS_PER_ARCSECOND, contact_distance_m: 3.0 }
    }

    /// 30 m per arcsecond, 4 m contact distance.
    pub fn longitude() -> Self {
        Self { axis: Axis::Longitude, meters_per_arcsecond: NOMINAL_METERS_PER_ARCSECOND, contact_distance_m: 4.0 }
    }

    pub fn refined_latitude(contact_distance_m: f64) -> Self {
        Self { axis: Axis::Latitude, meters_per_arcsecond: REFINED_METERS_PER_ARCSECOND, contact_distance_m }
    }

    /// Longitude arcseconds shrink with the cosine of the reference latitude.
    pub fn refined_longitude(contact_distance_m: f64, reference_lat: f64) -> Self {
        Self {
            axis: Axis::Longitude,
            meters_per_arcsecond: REFINED_METERS_PER_ARCSECOND * cos(reference_lat.to_radians()),
            contact_distance_m,
        }
    }

    pub fn with_contact_distance(mut self, d: f64) -> Self {
        self.contact_distance_m = d;
        self
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let mps = self.meters_per_arcsecond;
        let d = self.contact_distance_m;
        if !(mps.is_finite() && mps > 0.0) {
            return Err(GeoError::InvalidAxis("meters_per_arcsecond must be positive"));
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(GeoError::InvalidAxis("contact distance must be positive"));
        }
        if d > mps {
            return Err(GeoError::InvalidAxis("contact distance exceeds one arcsecond"));
        }
        Ok(())
    }

    /// Converts meters along this axis into arcseconds.
    pub fn meters_to_arcseconds(&self, meters: f64) -> f64 {
        meters / self.meters_per_arcsecond
    }
}

/// Separation of `a` and `b` along `cfg.axis` only.
pub fn axis_distance_m(a: &GeoPoint, b: &GeoPoint, cfg: &AxisConfig) -> f64 {
    let delta = a.coordinate(cfg.axis) - b.coordinate(cfg.axis);
    delta.abs() * ARCSEC_PER_DEGREE * cfg.meters_per_arcsecond
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dms_lat(sec_frac: f64) -> f64 {
        from_dms(&DmsCoordinate { degrees: 28, minutes: 50, seconds_whole: 30, seconds_frac: sec_frac })
    }

    #[test]
    fn worked_example_latitude_splits() {
        let v = 28.0 + 50.0 / 60.0 + 30.12462 / 3600.0;
        let c = to_dms(v).unwrap();
        assert_eq!((c.degrees, c.minutes, c.seconds_whole), (28, 50, 30));
        assert!((c.seconds_frac - 0.12462).abs() < 1e-9);
    }

    #[test]
    fn zero_splits_to_zero() {
        let c = to_dms(0.0).unwrap();
        assert_eq!(c, DmsCoordinate { degrees: 0, minutes: 0, seconds_whole: 0, seconds_frac: 0.0 });
        assert_eq!(from_dms(&c), 0.0);
    }

    #[test]
    fn near_upper_bound_carries_nothing() {
        let v = from_dms(&DmsCoordinate { degrees: 36, minutes: 59, seconds_whole: 59, seconds_frac: 0.999 });
        let c = to_dms(v).unwrap();
        assert_eq!((c.degrees, c.minutes, c.seconds_whole), (36, 59, 59));
        assert!((c.seconds_frac - 0.999).abs() < 1e-6);
        assert!((from_dms(&c) - v).abs() < 1e-9);
    }

    #[test]
    fn from_dms_examples() {
        assert!((dms_lat(0.12462) - 28.841701283333333).abs() < 1e-12);
        let v = from_dms(&DmsCoordinate { degrees: 7, minutes: 0, seconds_whole: 0, seconds_frac: 0.5 });
        assert!((v - (7.0 + 0.5 / 3600.0)).abs() < 1e-15);
    }

    #[test]
    fn to_dms_rejects_negative() {
        assert!(matches!(to_dms(-0.5), Err(GeoError::OutOfRegion { .. })));
        assert!(matches!(to_dms(f64::NAN), Err(GeoError::NotFinite(_))));
    }

    #[test]
    fn dms_components_validated() {
        assert!(DmsCoordinate::new(1, 60, 0, 0.0).is_err());
        assert!(DmsCoordinate::new(1, 0, 60, 0.0).is_err());
        assert!(DmsCoordinate::new(1, 0, 0, 1.0).is_err());
        assert!(DmsCoordinate::new(1, 59, 59, 0.5).is_ok());
    }

    #[test]
    fn haversine_identity() {
        let p = GeoPoint::new(28.0, 77.0).unwrap();
        assert_eq!(haversine_m(&p, &p), 0.0);
    }

    #[test]
    fn haversine_ten_meters_of_latitude() {
        let a = GeoPoint::new(10.0, 70.0).unwrap();
        let b = GeoPoint::new(10.00008983, 70.0).unwrap();
        // r * dphi for a pure latitude step.
        let expected = EARTH_RADIUS_M * (0.00008983f64).to_radians();
        assert!((haversine_m(&a, &b) - expected).abs() < 1e-6);
        // 111.195 km per degree on this sphere, so slightly under 10 m.
        assert!((haversine_m(&a, &b) - 9.988640260480711).abs() < 0.01);
    }

    #[test]
    fn axis_distance_worked_examples() {
        let cfg = AxisConfig::latitude();
        let at = |frac| GeoPoint { lat: dms_lat(frac), lon: 77.0 };
        let u1 = at(0.12462);
        assert_eq!(axis_distance_m(&u1, &u1, &cfg), 0.0);
        assert!((axis_distance_m(&u1, &at(0.05462), &cfg) - 2.1).abs() < 1e-6);
        assert!((axis_distance_m(&u1, &at(0.17462), &cfg) - 1.5).abs() < 1e-6);
    }

    #[test]
    fn axis_config_validation() {
        assert!(AxisConfig::new(Axis::Latitude, 30.0, 31.0).is_err());
        assert!(AxisConfig::new(Axis::Latitude, 0.0, 1.0).is_err());
        assert!(AxisConfig::new(Axis::Latitude, 30.0, -1.0).is_err());
        assert!(AxisConfig::latitude().validate().is_ok());
        assert!(AxisConfig::longitude().validate().is_ok());
    }

    #[test]
    fn region_is_half_open() {
        let r = Region::INDIA;
        assert!(r.check_axis(Axis::Latitude, 7.0).is_ok());
        assert!(r.check_axis(Axis::Latitude, 36.9999).is_ok());
        assert!(r.check_axis(Axis::Latitude, 37.0).is_err());
        assert!(r.check_axis(Axis::Longitude, 67.99).is_err());
        assert!(Region::new(10, 10, 0, 1).is_err());
    }
}
