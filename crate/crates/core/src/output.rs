//! On-disk formats of mission and batch results.
//!
//! A mission directory holds:
//!
//! * `timeseries.csv`: one row per step per agent, columns [`TIMESERIES_HEADER`];
//! * `estimates.csv`: one row per estimate made, columns [`ESTIMATES_HEADER`];
//! * `summary.toml`: a `[summary]` table and the fully resolved `[config]`;
//! * `forest.toml`: the forest, loadable with [`Forest::load`](crate::environment::Forest::load).
//!
//! A batch directory holds `batch.csv` (one row per run), `batch_summary.toml`
//! and one mission directory per run named `run_000`, `run_001`, ...
//!
//! Numbers are written in shortest round-trip form, so equal inputs give
//! byte-identical files.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::sim::{BatchAggregate, BatchSummary, MissionLog, MissionSummary};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const FOREST_FILE: &str = "forest.toml";
pub const BATCH_FILE: &str = "batch.csv";
pub const BATCH_SUMMARY_FILE: &str = "batch_summary.toml";

/// Columns of `timeseries.csv`.
///
/// `time` is `step * dt` in seconds. `vx, vy` is the command applied during the
/// step, `nav_*` and `avoid_*` its navigation and avoidance parts. `fsm` is
/// `q0` (hold), `q1` (follow) or `q2` (goal); `target_id` is empty unless
/// following. `tree_distance` is the distance to the nearest tree center. The
/// `pair_dist_*` and `order` columns describe the whole swarm at that step and
/// repeat on each of its rows; the pair columns are empty for a single agent.
pub const TIMESERIES_HEADER: [&str; 24] = [
    "step",
    "time",
    "uav",
    "informed",
    "x",
    "y",
    "vx",
    "vy",
    "nav_x",
    "nav_y",
    "avoid_x",
    "avoid_y",
    "fsm",
    "target_id",
    "target_x",
    "target_y",
    "waypoint_x",
    "waypoint_y",
    "n_neighbors",
    "tree_distance",
    "pair_dist_min",
    "pair_dist_max",
    "pair_dist_mean",
    "order",
];

/// Columns of `estimates.csv`: the observer's estimate of the observed UAV's
/// position and whether it was made with line of sight.
pub const ESTIMATES_HEADER: [&str; 6] = ["step", "observer", "observed", "x", "y", "los"];

/// Columns of `batch.csv`.
pub const BATCH_HEADER: [&str; 9] = [
    "run",
    "master_seed",
    "forest_seed",
    "completed",
    "completion_step",
    "completion_time",
    "min_pair_distance",
    "min_tree_distance",
    "final_order",
];

#[derive(Serialize)]
struct TimeseriesRow {
    step: u64,
    time: f64,
    uav: usize,
    informed: bool,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    nav_x: f64,
    nav_y: f64,
    avoid_x: f64,
    avoid_y: f64,
    fsm: &'static str,
    target_id: Option<usize>,
    target_x: f64,
    target_y: f64,
    waypoint_x: f64,
    waypoint_y: f64,
    n_neighbors: usize,
    tree_distance: f64,
    pair_dist_min: Option<f64>,
    pair_dist_max: Option<f64>,
    pair_dist_mean: Option<f64>,
    order: f64,
}

#[derive(Serialize)]
struct EstimateRow {
    step: u64,
    observer: usize,
    observed: usize,
    x: f64,
    y: f64,
    los: bool,
}

#[derive(Serialize)]
struct BatchRow {
    run: usize,
    master_seed: u64,
    forest_seed: u64,
    completed: bool,
    completion_step: Option<u64>,
    completion_time: Option<f64>,
    min_pair_distance: f64,
    min_tree_distance: f64,
    final_order: f64,
}

/// Contents of `summary.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryDocument {
    pub summary: MissionSummary,
    pub config: ScenarioConfig,
}

/// Contents of `batch_summary.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchDocument {
    pub aggregate: BatchAggregate,
    pub config: ScenarioConfig,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn toml_string<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Format(e.to_string()))
}

/// Writes the time series of `log` to `path`. An empty log gives a header-only file.
pub fn write_timeseries(log: &MissionLog, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TIMESERIES_HEADER).map_err(|e| csv_err(path, e))?;
    for r in &log.records {
        for a in &r.agents {
            let d = a.decision;
            let row = TimeseriesRow {
                step: r.k,
                time: r.k as f64 * log.config.dt,
                uav: a.id.index(),
                informed: a.informed,
                x: a.position.x,
                y: a.position.y,
                vx: d.u.x,
                vy: d.u.y,
                nav_x: d.nav.x,
                nav_y: d.nav.y,
                avoid_x: d.avoid.x,
                avoid_y: d.avoid.y,
                fsm: d.fsm.as_str(),
                target_id: d.target_id.map(|j| j.index()),
                target_x: d.target.x,
                target_y: d.target.y,
                waypoint_x: d.waypoint.x,
                waypoint_y: d.waypoint.y,
                n_neighbors: a.n_neighbors,
                tree_distance: a.tree_distance,
                pair_dist_min: r.pair_distance.map(|p| p.min),
                pair_dist_max: r.pair_distance.map(|p| p.max),
                pair_dist_mean: r.pair_distance.map(|p| p.mean),
                order: r.order,
            };
            w.serialize(row).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_estimates(log: &MissionLog, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(ESTIMATES_HEADER).map_err(|e| csv_err(path, e))?;
    for r in &log.records {
        for e in &r.estimates {
            let row = EstimateRow {
                step: r.k,
                observer: e.observer.index(),
                observed: e.observed.index(),
                x: e.position.x,
                y: e.position.y,
                los: e.los,
            };
            w.serialize(row).map_err(|err| csv_err(path, err))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every mission file into `dir`, creating it if needed.
pub fn write_outputs(log: &MissionLog, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_timeseries(log, &dir.join(TIMESERIES_FILE))?;
    write_estimates(log, &dir.join(ESTIMATES_FILE))?;
    let doc = SummaryDocument {
        summary: log.summary.clone(),
        config: log.config.clone(),
    };
    write_text(&dir.join(SUMMARY_FILE), &toml_string(&doc)?)?;
    log.forest.save(&dir.join(FOREST_FILE))
}

/// Directory of run `r` inside a batch directory.
pub fn run_dir(batch_dir: &Path, r: usize) -> PathBuf {
    batch_dir.join(format!("run_{r:03}"))
}

/// Writes `batch.csv` and `batch_summary.toml` into `dir`.
pub fn write_batch(batch: &BatchSummary, config: &ScenarioConfig, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let path = dir.join(BATCH_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(BATCH_HEADER).map_err(|e| csv_err(&path, e))?;
    for r in &batch.runs {
        let s = &r.summary;
        let row = BatchRow {
            run: r.run,
            master_seed: r.master_seed,
            forest_seed: r.forest_seed,
            completed: s.completed,
            completion_step: s.completion_step,
            completion_time: s.completion_time,
            min_pair_distance: s.min_pair_distance,
            min_tree_distance: s.min_tree_distance,
            final_order: s.final_order,
        };
        w.serialize(row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let doc = BatchDocument {
        aggregate: batch.aggregate.clone(),
        config: config.clone(),
    };
    write_text(&dir.join(BATCH_SUMMARY_FILE), &toml_string(&doc)?)
}

/// Reads back a `summary.toml`.
pub fn read_summary(path: &Path) -> Result<SummaryDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::sim::{run_batch, run_mission};

    fn short(steps: u64) -> ScenarioConfig {
        let mut c = ScenarioConfig::preset(Preset::Case1A);
        c.max_steps = steps;
        c
    }

    #[test]
    fn empty_log_gives_header_only() {
        let mut c = short(10);
        c.goal = c.spawn_center;
        c.goal_radius = 20.0;
        let log = run_mission(&c).unwrap();
        assert!(log.records.is_empty());
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&log, dir.path()).unwrap();
        let ts = fs::read_to_string(dir.path().join(TIMESERIES_FILE)).unwrap();
        assert_eq!(ts, format!("{}\n", TIMESERIES_HEADER.join(",")));
        let doc = read_summary(&dir.path().join(SUMMARY_FILE)).unwrap();
        assert!(doc.summary.completed);
        assert_eq!(doc.summary.completion_step, Some(0));
    }

    #[test]
    fn timeseries_shape() {
        let log = run_mission(&short(20)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&log, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(TIMESERIES_FILE)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 20 * 3);
        for l in &lines {
            assert_eq!(l.split(',').count(), TIMESERIES_HEADER.len());
        }
        assert!(lines[1].starts_with("0,0.0,0,true,"));
        let doc = read_summary(&dir.path().join(SUMMARY_FILE)).unwrap();
        assert!(!doc.summary.completed);
        assert_eq!(doc.config, log.config);
        assert!(doc.config.forest.seed.is_some());
        let forest = crate::environment::Forest::load(&dir.path().join(FOREST_FILE)).unwrap();
        assert_eq!(forest, log.forest);
    }

    #[test]
    fn rewriting_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_outputs(&run_mission(&short(50)).unwrap(), a.path()).unwrap();
        write_outputs(&run_mission(&short(50)).unwrap(), b.path()).unwrap();
        for f in [TIMESERIES_FILE, ESTIMATES_FILE, SUMMARY_FILE, FOREST_FILE] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn batch_files() {
        let c = short(30);
        let batch = run_batch(&c, 2, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_batch(&batch, &c, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(BATCH_FILE)).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap(), BATCH_HEADER.join(","));
        let doc: BatchDocument =
            toml::from_str(&fs::read_to_string(dir.path().join(BATCH_SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(doc.aggregate.n_runs, 2);
        assert_eq!(run_dir(dir.path(), 7), dir.path().join("run_007"));
    }

    #[test]
    fn unwritable_directory_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let log = run_mission(&short(1)).unwrap();
        match write_outputs(&log, &blocker.join("sub")) {
            Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
            other => panic!("expected an i/o error, got {other:?}"),
        }
    }
}
