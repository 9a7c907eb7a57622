//! Subcommand bodies. `main` only parses flags and prints.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use proxtrace_core::contact_store::{ContactLog, RetentionPolicy};
use proxtrace_core::geo::GeoPoint;
use proxtrace_core::hotspot::{self, HotspotMode, HotspotQuery, HotspotReport};
use proxtrace_core::routing::{baseline_route, safe_route, RouteResult};
use proxtrace_core::simgen::{build_scenario, RNG_ALGORITHM};
use proxtrace_core::tracing::{Snapshot, SnapshotBatch, TraceOutput};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, ScenarioFile};
use crate::formats::{self, header};
use crate::geojson::export_markers;
use crate::parallel::{pool, Detector, Timings};

pub struct Generated {
    pub snapshots: Vec<PathBuf>,
    pub planted: Option<PathBuf>,
}

/// Writes one snapshot file per instant, plus `planted.csv` listing the
/// planted pairs when there are any.
pub fn generate(cfg: &RunConfig, scenario: &ScenarioFile, out_dir: &Path, binary: bool) -> Result<Generated> {
    let spec = scenario.to_spec(cfg)?;
    let detector = cfg.detector()?;
    let sc = build_scenario(&spec, &detector)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let hash = cfg.hash();
    let mut snapshots = Vec::new();
    for b in &sc.batches {
        let ext = if binary { "bin" } else { "csv" };
        let path = out_dir.join(format!("snapshot_{:04}.{ext}", b.snapshot));
        let head = header(
            "proxtrace-snapshot",
            &hash,
            json!({ "snapshot": b.snapshot, "seed": spec.seed, "rng": RNG_ALGORITHM, "spec": scenario }),
        );
        formats::write_snapshot_file(&path, &head, b, binary)?;
        snapshots.push(path);
    }
    let mut planted: Vec<_> = sc.planted().copied().collect();
    planted.sort_unstable();
    let planted = if planted.is_empty() {
        None
    } else {
        let path = out_dir.join("planted.csv");
        formats::write_file(&path, |w| {
            use std::io::Write;
            writeln!(w, "{}", header("proxtrace-planted", &hash, json!({ "seed": spec.seed })))?;
            writeln!(w, "user_a,user_b")?;
            for p in &planted {
                writeln!(w, "{},{}", p.user_a(), p.user_b())?;
            }
            Ok(())
        })?;
        Some(path)
    };
    Ok(Generated { snapshots, planted })
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub config_hash: String,
    pub mode: crate::config::ModeArg,
    pub snapshots: usize,
    pub users: usize,
    pub events: usize,
    pub gaps: Vec<(u64, u64)>,
    pub serial: Timings,
    /// Present when more than one thread was configured.
    pub parallel: Option<Timings>,
    pub threads: usize,
}

pub fn load_batches(inputs: &[PathBuf]) -> Result<Vec<SnapshotBatch>> {
    let mut batches = inputs.iter().map(|p| formats::read_snapshot_file(p)).collect::<Result<Vec<_>>>()?;
    batches.sort_by_key(|b| b.snapshot);
    if let Some(w) = batches.windows(2).find(|w| w[0].snapshot == w[1].snapshot) {
        bail!("snapshot {} supplied twice", w[0].snapshot);
    }
    Ok(batches)
}

/// Detects contacts over the inputs and writes the contact CSV. With more
/// than one thread the detector runs serially first, then on the pool, and
/// the two outputs must agree.
pub fn trace(cfg: &RunConfig, inputs: &[PathBuf], out: &Path, checkpoint: Option<&Path>) -> Result<(TraceOutput, TraceReport)> {
    let detector = cfg.detector()?;
    let batches = load_batches(inputs)?;
    let serial_pool = pool(1)?;
    let (output, serial) = Detector { cfg: &detector, pool: &serial_pool }.trace(&batches)?;
    let parallel = if cfg.threads > 1 {
        let p = pool(cfg.threads)?;
        let (par_out, t) = Detector { cfg: &detector, pool: &p }.trace(&batches)?;
        ensure!(par_out == output, "parallel and serial runs disagree");
        Some(t)
    } else {
        None
    };

    let hash = cfg.hash();
    let head = header("proxtrace-contacts", &hash, json!({ "mode": cfg.mode, "snapshots": batches.len() }));
    formats::write_file(out, |w| formats::write_contacts(w, &head, &output.events))?;

    if let Some(path) = checkpoint {
        let mut log = ContactLog::new();
        log.record_events(&output.events);
        let policy = RetentionPolicy::new(cfg.retention_days).context("retention_days must be at least 1")?;
        if let Some(last) = batches.last() {
            log.prune(last.snapshot, &policy, cfg.trace().snapshot_interval_min());
        }
        let head = header("proxtrace-checkpoint", &hash, json!({ "retention_days": cfg.retention_days }));
        formats::write_file(path, |w| formats::write_checkpoint(w, &head, &log))?;
    }

    let users: BTreeSet<u64> = batches.iter().flat_map(|b| b.records.iter().map(|r| r.user.0)).collect();
    let report = TraceReport {
        config_hash: hash,
        mode: cfg.mode,
        snapshots: batches.len(),
        users: users.len(),
        events: output.events.len(),
        gaps: output.gaps.iter().map(|g| (g.from, g.to)).collect(),
        serial,
        parallel,
        threads: cfg.threads,
    };
    Ok((output, report))
}

pub struct HotspotInputs<'a> {
    pub snapshot: &'a Path,
    pub checkpoint: &'a Path,
    pub registry: &'a Path,
    pub reference: (f64, f64),
}

pub fn hotspot_query(cfg: &RunConfig, reference: GeoPoint, snapshot: u64) -> Result<HotspotQuery> {
    let h = cfg.hotspot;
    let threshold = h.threshold.context("hotspot.threshold: required, set it in the config or pass --threshold")?;
    let policy = RetentionPolicy::new(cfg.retention_days).context("retention_days must be at least 1")?;
    let q = HotspotQuery {
        mode: if h.any_positive { HotspotMode::AnyPositive } else { HotspotMode::Threshold },
        window: policy.window_ending(snapshot, cfg.trace().snapshot_interval_min()),
        hops: h.hops,
        ..HotspotQuery::new(reference, h.radius_km, threshold)
    };
    q.validate()?;
    Ok(q)
}

pub fn report_json(cfg: &RunConfig, q: &HotspotQuery, r: &HotspotReport) -> Value {
    let ids = |v: &[hotspot::AreaUser]| v.iter().map(|a| a.user.0).collect::<Vec<_>>();
    json!({
        "format": "proxtrace-hotspot",
        "config_hash": cfg.hash(),
        "reference": { "lat": q.reference.lat, "lon": q.reference.lon },
        "radius_km": q.radius_km,
        "threshold": q.positive_threshold,
        "mode": match q.mode { HotspotMode::Threshold => "threshold", HotspotMode::AnyPositive => "any_positive" },
        "hops": q.hops,
        "users_in_area": ids(&r.users_in_area),
        "positives_in_area": ids(&r.positives_in_area),
        "susceptibles_in_area": ids(&r.susceptibles_in_area),
        "susceptibles_departed": r.susceptibles_departed.iter().map(|u| u.0).collect::<Vec<_>>(),
        "is_potential_hotspot": r.is_potential_hotspot,
    })
}

/// Runs the query and returns the report plus its JSON and GeoJSON forms.
pub fn hotspot(cfg: &RunConfig, inputs: &HotspotInputs<'_>) -> Result<(HotspotReport, Value, Value)> {
    let detector = cfg.detector()?;
    let batch = formats::read_snapshot_file(inputs.snapshot)?;
    let log = formats::read_checkpoint_file(inputs.checkpoint)?;
    let registry = formats::read_registry_file(inputs.registry)?;
    let (lat, lon) = inputs.reference;
    let reference = GeoPoint::new(lat, lon).context("reference point")?;
    let q = hotspot_query(cfg, reference, batch.snapshot)?;
    let snap = Snapshot::build(&batch.records, &detector, batch.snapshot)?;
    let report = hotspot::detect(&q, &snap, &log, &registry).context("reference point")?;
    let mut geo = export_markers(&report);
    geo["proxtrace"] = header("proxtrace-markers", &cfg.hash(), json!({}));
    Ok((report.clone(), report_json(cfg, &q, &report), geo))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteReport {
    pub safe: RouteResult,
    pub baseline: RouteResult,
}

pub fn route(graph: &Path, hotspots: Option<&Path>, from: &str, to: &str) -> Result<RouteReport> {
    let mut g = formats::read_graph_file(graph)?;
    if let Some(path) = hotspots {
        for city in formats::read_hotspots_file(path)? {
            g.set_hotspot(&city, true).with_context(|| format!("hotspot list {}", path.display()))?;
        }
    }
    let baseline = baseline_route(&g, from, to)?;
    let safe = safe_route(&g, from, to)?;
    Ok(RouteReport { safe, baseline })
}

pub fn describe_route(r: &RouteResult) -> String {
    match r {
        RouteResult::Found(route) => format!("{} ({} km)", route.path.join(" -> "), route.total_km),
        RouteResult::NoPath => "No Path".into(),
    }
}
