use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use proxtrace::bench::{self, BenchPlan};
use proxtrace::commands::{self, describe_route, HotspotInputs};
use proxtrace::config::{ModeArg, RunConfig, ScenarioFile};
use proxtrace::core::routing::RouteResult;
use proxtrace::core::simgen::BoundingBox;
use proxtrace::parallel::{pool, Timings};

/// Large per-snapshot buffers are reused instead of being freshly mapped and faulted in.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Exit status when the safe route does not exist.
const EXIT_NO_PATH: u8 = 3;

#[derive(Parser)]
#[command(name = "proxtrace", version, about = "Proximity contact tracing over DMS bucket trees")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    d_lat: Option<f64>,
    #[arg(long, global = true)]
    d_lon: Option<f64>,
    #[arg(long, global = true)]
    t_minutes: Option<f64>,
    #[arg(long, global = true)]
    radius_km: Option<f64>,
    #[arg(long, global = true)]
    threshold: Option<u32>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate snapshot files from a scenario spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Length-prefixed binary snapshots instead of CSV.
        #[arg(long)]
        binary: bool,
    },
    /// Detect contacts across consecutive snapshot files.
    Trace {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the contact log checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write the timing report as JSON.
        #[arg(long)]
        timings: Option<PathBuf>,
    },
    /// Compare the tree pipeline against the all-pairs baseline.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1_000u64, 10_000, 50_000])]
        sizes: Vec<u64>,
        #[arg(long, default_value_t = 50_000)]
        baseline_cap: u64,
        /// Population box as lat_min,lat_max,lon_min,lon_max; all of India by default.
        #[arg(long, value_delimiter = ',')]
        bbox: Option<Vec<f64>>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Potential-hotspot query around a reference point.
    Hotspot {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        lat: f64,
        #[arg(long)]
        lon: f64,
        #[arg(long)]
        any_positive: bool,
        #[arg(long)]
        hops: Option<u32>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        geojson: PathBuf,
    },
    /// Safe and baseline routes between two cities.
    Route {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        hotspots: Option<PathBuf>,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
}

fn run_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.mode = g.mode.unwrap_or(cfg.mode);
    cfg.threads = g.threads.unwrap_or(cfg.threads);
    cfg.d_lat_m = g.d_lat.unwrap_or(cfg.d_lat_m);
    cfg.d_lon_m = g.d_lon.unwrap_or(cfg.d_lon_m);
    cfg.t_minutes = g.t_minutes.unwrap_or(cfg.t_minutes);
    cfg.hotspot.radius_km = g.radius_km.unwrap_or(cfg.hotspot.radius_km);
    cfg.hotspot.threshold = g.threshold.or(cfg.hotspot.threshold);
    cfg.validate()?;
    Ok(cfg)
}

fn print_timings(label: &str, t: &Timings) {
    println!(
        "{label:<9} map lat {:>10.3} ms  map lon {:>10.3} ms  intersect lat {:>10.3} ms  intersect lon {:>10.3} ms  combine {:>8.3} ms",
        t.map_lat_ms, t.map_lon_ms, t.intersect_lat_ms, t.intersect_lon_ms, t.combine_ms
    );
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = run_config(&cli.global)?;
    match cli.cmd {
        Cmd::Generate { spec, out, binary } => {
            let mut scenario = ScenarioFile::load(&spec)?;
            scenario.seed = cli.global.seed.unwrap_or(scenario.seed);
            let g = commands::generate(&cfg, &scenario, &out, binary)?;
            for p in g.snapshots.iter().chain(&g.planted) {
                let size = std::fs::metadata(p)?.len();
                println!("{}\t{size} bytes", p.display());
            }
        }
        Cmd::Trace { inputs, out, checkpoint, timings } => {
            let (_, report) = commands::trace(&cfg, &inputs, &out, checkpoint.as_deref())?;
            println!("{} events over {} snapshots, {} users, config {}", report.events, report.snapshots, report.users, report.config_hash);
            for (a, b) in &report.gaps {
                println!("gap: snapshot {a} -> {b} skipped");
            }
            print_timings("serial", &report.serial);
            if let Some(p) = &report.parallel {
                print_timings(&format!("{} thr", report.threads), p);
                let speedup = (report.serial.intersect_lat_ms + report.serial.intersect_lon_ms) / (p.intersect_lat_ms + p.intersect_lon_ms);
                println!("intersection speedup {speedup:.2}x");
            }
            if let Some(path) = timings {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Cmd::Bench { sizes, baseline_cap, bbox, json } => {
            let bbox = match bbox.as_deref() {
                None => BoundingBox::INDIA,
                Some(&[lat_min, lat_max, lon_min, lon_max]) => BoundingBox { lat_min, lat_max, lon_min, lon_max },
                Some(_) => bail!("--bbox: need lat_min,lat_max,lon_min,lon_max"),
            };
            let plan = BenchPlan { sizes, baseline_cap, seed: cli.global.seed.unwrap_or(0), bbox };
            let rows = bench::run(&plan, &cfg.detector()?, &pool(cfg.threads)?)?;
            print!("{}", bench::render_csv(&rows));
            if let Some(path) = json {
                let doc = serde_json::json!({ "config_hash": cfg.hash(), "threads": cfg.threads, "rows": rows });
                std::fs::write(&path, serde_json::to_string_pretty(&doc)?).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Cmd::Hotspot { snapshot, checkpoint, registry, lat, lon, any_positive, hops, report, geojson } => {
            cfg.hotspot.any_positive |= any_positive;
            cfg.hotspot.hops = hops.unwrap_or(cfg.hotspot.hops);
            let inputs = HotspotInputs { snapshot: &snapshot, checkpoint: &checkpoint, registry: &registry, reference: (lat, lon) };
            let (r, doc, geo) = commands::hotspot(&cfg, &inputs)?;
            std::fs::write(&report, serde_json::to_string_pretty(&doc)?).with_context(|| format!("writing {}", report.display()))?;
            std::fs::write(&geojson, serde_json::to_string_pretty(&geo)?).with_context(|| format!("writing {}", geojson.display()))?;
            println!(
                "{} users in area, {} positive, {} susceptible ({} departed): {}",
                r.users_in_area.len(),
                r.positives_in_area.len(),
                r.susceptibles_in_area.len(),
                r.susceptibles_departed.len(),
                if r.is_potential_hotspot { "potential hotspot" } else { "not a hotspot" }
            );
        }
        Cmd::Route { graph, hotspots, from, to } => {
            let r = commands::route(&graph, hotspots.as_deref(), &from, &to)?;
            println!("baseline: {}", describe_route(&r.baseline));
            println!("safe:     {}", describe_route(&r.safe));
            if r.safe == RouteResult::NoPath {
                return Ok(ExitCode::from(EXIT_NO_PATH));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
