//! GeoJSON marker export for hotspot reports.

use proxtrace_core::hotspot::HotspotReport;
use serde_json::{json, Value};

/// One Point feature per user in the area, ascending user id, with a
/// `status` of `normal`, `positive` or `susceptible`.
pub fn export_markers(report: &HotspotReport) -> Value {
    let features: Vec<Value> = report
        .users_in_area
        .iter()
        .map(|a| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [a.point.lon, a.point.lat] },
                "properties": { "user_id": a.user.0, "status": report.status_of(a.user).as_str() },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

/// Structural check against the GeoJSON grammar for the subset we emit.
pub fn validate_feature_collection(doc: &Value) -> Result<(), String> {
    if doc["type"] != "FeatureCollection" {
        return Err("top-level type must be FeatureCollection".into());
    }
    let features = doc["features"].as_array().ok_or("features must be an array")?;
    for (i, f) in features.iter().enumerate() {
        let err = |m: &str| format!("feature {i}: {m}");
        if f["type"] != "Feature" {
            return Err(err("type must be Feature"));
        }
        if !(f["properties"].is_object() || f["properties"].is_null()) {
            return Err(err("properties must be an object or null"));
        }
        let g = &f["geometry"];
        if g["type"] != "Point" {
            return Err(err("geometry must be a Point"));
        }
        let c = g["coordinates"].as_array().ok_or_else(|| err("coordinates must be an array"))?;
        if !(2..=3).contains(&c.len()) || !c.iter().all(Value::is_f64) {
            return Err(err("a position is 2 or 3 numbers"));
        }
        let (lon, lat) = (c[0].as_f64().unwrap(), c[1].as_f64().unwrap());
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(err("position out of range"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proxtrace_core::geo::GeoPoint;
    use proxtrace_core::hotspot::AreaUser;
    use proxtrace_core::UserId;

    #[test]
    fn empty_report() {
        let doc = export_markers(&HotspotReport::default());
        assert_eq!(doc["features"].as_array().unwrap().len(), 0);
        validate_feature_collection(&doc).unwrap();
    }

    #[test]
    fn statuses_and_order() {
        let at = |u| AreaUser { user: UserId(u), point: GeoPoint { lat: 22.7, lon: 75.8 } };
        let report = HotspotReport {
            users_in_area: vec![at(1), at(2), at(3)],
            positives_in_area: vec![at(2)],
            susceptibles_in_area: vec![at(3)],
            ..Default::default()
        };
        let doc = export_markers(&report);
        validate_feature_collection(&doc).unwrap();
        let st: Vec<&str> = doc["features"].as_array().unwrap().iter().map(|f| f["properties"]["status"].as_str().unwrap()).collect();
        assert_eq!(st, ["normal", "positive", "susceptible"]);
        assert_eq!(doc["features"][0]["geometry"]["coordinates"][0], 75.8);
    }

    #[test]
    fn validator_rejects_bad_shapes() {
        assert!(validate_feature_collection(&json!({ "type": "Feature" })).is_err());
        let bad = json!({ "type": "FeatureCollection", "features": [{ "type": "Feature", "properties": {}, "geometry": { "type": "Point", "coordinates": [1.0] } }] });
        assert!(validate_feature_collection(&bad).is_err());
    }
}
