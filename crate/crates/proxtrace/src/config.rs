//! Run configuration and scenario spec files (TOML), plus the config hash
//! stamped into every output header.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use proxtrace_core::geo::Region;
use proxtrace_core::simgen::{BoundingBox, GroupPlan, Heading, ScenarioSpec, WalkerPlan};
use proxtrace_core::tracing::{DetectorConfig, DetectorMode, ScaleMode, TraceConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Static,
    Dynamic,
    #[default]
    Both,
}

impl From<ModeArg> for DetectorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Static => DetectorMode::Static,
            ModeArg::Dynamic => DetectorMode::Dynamic,
            ModeArg::Both => DetectorMode::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub lat_min: u16,
    pub lat_max: u16,
    pub lon_min: u16,
    pub lon_max: u16,
}

impl Default for RegionSpec {
    fn default() -> Self {
        let r = Region::INDIA;
        Self { lat_min: r.lat_min, lat_max: r.lat_max, lon_min: r.lon_min, lon_max: r.lon_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScaleSpec {
    #[default]
    Nominal,
    Refined {
        reference_lat: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HotspotSettings {
    pub radius_km: f64,
    /// No default: a query must set it here or with `--threshold`.
    pub threshold: Option<u32>,
    pub hops: u32,
    pub any_positive: bool,
}

impl Default for HotspotSettings {
    fn default() -> Self {
        Self { radius_km: 10.0, threshold: None, hops: 1, any_positive: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub t_minutes: f64,
    pub d_lat_m: f64,
    pub d_lon_m: f64,
    pub speed_mps: f64,
    /// Partitions per arcsecond; derived from the contact distance when unset.
    pub lat_partitions: Option<u32>,
    pub lon_partitions: Option<u32>,
    pub region: RegionSpec,
    pub scale: ScaleSpec,
    pub mode: ModeArg,
    pub retention_days: u32,
    pub threads: usize,
    pub hotspot: HotspotSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TraceConfig::default();
        Self {
            t_minutes: t.contact_duration_min,
            d_lat_m: t.d_lat_m,
            d_lon_m: t.d_lon_m,
            speed_mps: t.pedestrian_speed_mps,
            lat_partitions: None,
            lon_partitions: None,
            region: RegionSpec::default(),
            scale: ScaleSpec::default(),
            mode: ModeArg::default(),
            retention_days: 14,
            threads: 1,
            hotspot: HotspotSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            bail!("threads: must be at least 1");
        }
        if self.retention_days == 0 {
            bail!("retention_days: must be at least 1");
        }
        self.detector()?;
        Ok(())
    }

    pub fn trace(&self) -> TraceConfig {
        TraceConfig {
            contact_duration_min: self.t_minutes,
            d_lat_m: self.d_lat_m,
            d_lon_m: self.d_lon_m,
            pedestrian_speed_mps: self.speed_mps,
        }
    }

    pub fn region(&self) -> Result<Region> {
        let r = self.region;
        Region::new(r.lat_min, r.lat_max, r.lon_min, r.lon_max).context("region")
    }

    pub fn detector(&self) -> Result<DetectorConfig> {
        let scale = match self.scale {
            ScaleSpec::Nominal => ScaleMode::Nominal,
            ScaleSpec::Refined { reference_lat } => ScaleMode::Refined { reference_lat },
        };
        let mut cfg = DetectorConfig::new(self.trace(), self.region()?, scale)?;
        if self.lat_partitions.is_some() || self.lon_partitions.is_some() {
            let lat_m = self.lat_partitions.unwrap_or(cfg.lat.partitions);
            let lon_m = self.lon_partitions.unwrap_or(cfg.lon.partitions);
            cfg = cfg.with_partitions(lat_m, lon_m)?;
        }
        Ok(cfg.with_mode(self.mode.into()))
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(json)[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl From<BoundingBox> for BoxSpec {
    fn from(b: BoundingBox) -> Self {
        Self { lat_min: b.lat_min, lat_max: b.lat_max, lon_min: b.lon_min, lon_max: b.lon_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub count: u64,
    pub size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerSpec {
    pub count: u64,
    pub speed_mps: f64,
    /// Degrees clockwise from north; uniform when absent.
    pub heading_deg: Option<f64>,
}

impl Default for WalkerSpec {
    fn default() -> Self {
        Self { count: 0, speed_mps: 1.4, heading_deg: None }
    }
}

/// Generator input. Field names are what `generate` reports on errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n_users: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_snapshots")]
    pub snapshot_count: u32,
    /// Minutes; defaults to half the configured contact duration.
    #[serde(default)]
    pub snapshot_interval_min: Option<f64>,
    #[serde(default = "default_bbox")]
    pub bbox: BoxSpec,
    #[serde(default)]
    pub static_groups: GroupSpec,
    #[serde(default)]
    pub walker_pairs: WalkerSpec,
}

fn default_snapshots() -> u32 {
    2
}

fn default_bbox() -> BoxSpec {
    BoundingBox::correctness().into()
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing scenario spec {}", path.display()))
    }

    pub fn to_spec(&self, cfg: &RunConfig) -> Result<ScenarioSpec> {
        let b = self.bbox;
        let spec = ScenarioSpec {
            n_users: self.n_users,
            bbox: BoundingBox { lat_min: b.lat_min, lat_max: b.lat_max, lon_min: b.lon_min, lon_max: b.lon_max },
            seed: self.seed,
            snapshot_count: self.snapshot_count,
            snapshot_interval_min: self.snapshot_interval_min.unwrap_or(cfg.t_minutes / 2.0),
            static_groups: GroupPlan { count: self.static_groups.count, size: self.static_groups.size },
            walker_pairs: WalkerPlan {
                count: self.walker_pairs.count,
                speed_mps: self.walker_pairs.speed_mps,
                heading: self.walker_pairs.heading_deg.map_or(Heading::Uniform, Heading::Fixed),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}
