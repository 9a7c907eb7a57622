//! Tree pipeline vs all-pairs baseline.
//!
//! Every measurement runs once as warm-up, then three times; the median of
//! the three is reported.

use std::time::Instant;

use anyhow::Result;
use proxtrace_core::simgen::{gen_uniform, BoundingBox, ScenarioSpec};
use proxtrace_core::tracing::{brute_force_contacts, DetectorConfig, PairSet, SnapshotBatch};
use rayon::ThreadPool;
use serde::Serialize;

use crate::parallel::Detector;

pub const MEASURED_RUNS: usize = 3;

/// Runs `f` once unmeasured, then `MEASURED_RUNS` times; returns the last
/// result and the median wall time in milliseconds.
pub fn median_ms<T>(mut f: impl FnMut() -> T) -> (T, f64) {
    drop(f());
    let mut times = Vec::with_capacity(MEASURED_RUNS);
    let mut last = None;
    for _ in 0..MEASURED_RUNS {
        let start = Instant::now();
        let v = f();
        times.push(start.elapsed().as_secs_f64() * 1e3);
        // Dropped outside the timed region.
        last = Some(v);
    }
    times.sort_by(f64::total_cmp);
    (last.expect("at least one run"), times[MEASURED_RUNS / 2])
}

/// Two identical snapshots of `n` stationary users uniform in `bbox`.
pub fn uniform_batches(n: u64, seed: u64, bbox: BoundingBox) -> Result<Vec<SnapshotBatch>> {
    Ok(gen_uniform(&ScenarioSpec { n_users: n, seed, bbox, snapshot_count: 2, ..Default::default() })?)
}

/// Build plus intersect for one interval.
pub fn tree_pipeline(batches: &[SnapshotBatch], cfg: &DetectorConfig, pool: &ThreadPool) -> Result<PairSet> {
    let d = Detector { cfg, pool };
    Ok(d.interval(&batches[0], &batches[1])?.0)
}

pub fn baseline(batches: &[SnapshotBatch], cfg: &DetectorConfig) -> PairSet {
    brute_force_contacts(&batches[0].records, &batches[1].records, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n_users: u64,
    pub tree_ms: f64,
    /// `None` when `n_users` is above the baseline cap.
    pub baseline_ms: Option<f64>,
    pub pairs: usize,
    pub agree: Option<bool>,
}

impl BenchRow {
    pub fn speedup(&self) -> Option<f64> {
        self.baseline_ms.map(|b| b / self.tree_ms)
    }
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub sizes: Vec<u64>,
    pub baseline_cap: u64,
    pub seed: u64,
    pub bbox: BoundingBox,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self { sizes: vec![1_000, 10_000, 50_000], baseline_cap: 50_000, seed: 0, bbox: BoundingBox::INDIA }
    }
}

pub fn run(plan: &BenchPlan, cfg: &DetectorConfig, pool: &ThreadPool) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in &plan.sizes {
        let batches = uniform_batches(n, plan.seed, plan.bbox)?;
        let (pairs, tree_ms) = median_ms(|| tree_pipeline(&batches, cfg, pool));
        let pairs = pairs?;
        let (baseline_ms, agree) = if n <= plan.baseline_cap {
            let (want, ms) = median_ms(|| baseline(&batches, cfg));
            (Some(ms), Some(want == pairs))
        } else {
            (None, None)
        };
        log::info!("n={n} tree={tree_ms:.1}ms baseline={baseline_ms:?}");
        rows.push(BenchRow { n_users: n, tree_ms, baseline_ms, pairs: pairs.len(), agree });
    }
    Ok(rows)
}

/// Comma-separated table; capped baseline cells read `skipped`.
pub fn render_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("n_users,tree_ms,baseline_ms,speedup,pairs,agree\n");
    for r in rows {
        let cell = |v: Option<String>| v.unwrap_or_else(|| "skipped".into());
        s.push_str(&format!(
            "{},{:.3},{},{},{},{}\n",
            r.n_users,
            r.tree_ms,
            cell(r.baseline_ms.map(|b| format!("{b:.3}"))),
            cell(r.speedup().map(|x| format!("{x:.1}"))),
            r.pairs,
            cell(r.agree.map(|a| a.to_string())),
        ));
    }
    s
}
