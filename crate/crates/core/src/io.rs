//! Run configuration, trial execution with artifact emission, and the
//! on-disk formats: TOML configs and logs, PGM/CSV map snapshots and the
//! move/switch trace.
//!
//! Every file is written to a temporary sibling first and renamed into
//! place, so readers never observe a partial artifact.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldMap, Grid};
use crate::model::{
    build_model, AttentionModel, EventKind, Limits, ModelConfig, TargetSpec, TrialLog,
};
use crate::scenario::{Extent, Gaze, Stimulus, World};

/// Environment variable that replaces `output.dir` when set.
pub const OUTPUT_DIR_ENV: &str = "FOVEA_OUTPUT_DIR";

pub const LOG_FILE: &str = "log.toml";
pub const TRACE_FILE: &str = "trace.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// World position imaged at the fovea when the trial starts.
    #[serde(default)]
    pub gaze: [f64; 2],
    #[serde(default)]
    pub stimuli: Vec<Stimulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Extent>,
}

impl SceneConfig {
    pub fn world(&self) -> World {
        World {
            stimuli: self.stimuli.clone(),
            extent: self.extent,
        }
    }

    pub fn gaze(&self) -> Gaze {
        Gaze { center: self.gaze }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Dump the configured maps every this many steps; omitted disables
    /// periodic snapshots.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<u64>,
    /// Network map names to dump, e.g. `focus`, `wm`, `v4_blue`.
    pub maps: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            snapshot_every: None,
            maps: ["saliency", "focus", "wm"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: TargetSpec,
    pub scene: SceneConfig,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn new(target: TargetSpec, world: World, gaze: Gaze) -> Self {
        RunConfig {
            target,
            scene: SceneConfig {
                gaze: gaze.center,
                stimuli: world.stimuli,
                extent: world.extent,
            },
            limits: Limits::default(),
            output: OutputConfig::default(),
            model: ModelConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.scene.world().validate()?;
        if !self.scene.gaze.iter().all(|v| v.is_finite()) {
            return Err(Error::config("scene.gaze", "coordinates must be finite"));
        }
        if self.limits.max_steps == 0 {
            return Err(Error::config("limits.max_steps", "must be >= 1"));
        }
        if self.limits.max_attends == 0 {
            return Err(Error::config("limits.max_attends", "must be >= 1"));
        }
        if self.output.snapshot_every == Some(0) {
            return Err(Error::config("output.snapshot_every", "must be >= 1"));
        }
        let model = build_model(self.model.clone(), self.target)?;
        for (i, name) in self.output.maps.iter().enumerate() {
            if model.network().map_by_name(name).is_none() {
                return Err(Error::config(
                    format!("output.maps[{i}]"),
                    format!("no map named `{name}`"),
                ));
            }
        }
        Ok(())
    }
}

pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

/// Reads and validates a run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

pub fn config_to_string(config: &RunConfig) -> Result<String> {
    toml::to_string(config)
        .map_err(|e| Error::InvalidParameter(format!("cannot serialize config: {e}")))
}

pub fn write_config(path: &Path, config: &RunConfig) -> Result<()> {
    write_atomic(path, config_to_string(config)?.as_bytes())
}

pub fn log_to_string(log: &TrialLog) -> Result<String> {
    toml::to_string(log).map_err(|e| Error::InvalidParameter(format!("cannot serialize log: {e}")))
}

pub fn parse_log(text: &str, origin: &Path) -> Result<TrialLog> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `bytes` to a hidden sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .map_err(|e| Error::io(&tmp, e))
        .and_then(|()| fs::rename(&tmp, path).map_err(|e| Error::io(path, e)));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// 8-bit grayscale P5 image, rows top to bottom, value `round(255·u)`.
pub fn encode_pgm(grid: Grid, activity: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width, grid.height).into_bytes();
    out.extend(
        activity
            .iter()
            .map(|&u| (255.0 * u.clamp(0.0, 1.0)).round() as u8),
    );
    out
}

/// Raw activities as `x,y,u`, one row per cell in row-major order.
pub fn encode_activity_csv(grid: Grid, activity: &[f64]) -> String {
    let mut out = String::from("x,y,u\n");
    for y in 0..grid.height {
        for x in 0..grid.width {
            let _ = writeln!(out, "{x},{y},{}", activity[grid.index(x, y)]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub move_activity: f64,
    pub switch_activity: f64,
}

pub fn encode_trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("step,move,switch\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.step, r.move_activity, r.switch_activity);
    }
    out
}

/// Writes `<dir>/<name>.pgm` and `<dir>/<name>.csv`.
pub fn write_map_snapshot(dir: &Path, name: &str, map: &FieldMap) -> Result<Vec<PathBuf>> {
    let grid = map.grid();
    let pgm = dir.join(format!("{name}.pgm"));
    let csv = dir.join(format!("{name}.csv"));
    write_atomic(&pgm, &encode_pgm(grid, map.activity()))?;
    write_atomic(&csv, encode_activity_csv(grid, map.activity()).as_bytes())?;
    Ok(vec![pgm, csv])
}

pub fn snapshot_dir(root: &Path, step: u64) -> PathBuf {
    root.join(SNAPSHOT_DIR).join(format!("step_{step:06}"))
}

fn dump_maps(model: &AttentionModel, maps: &[String], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for name in maps {
        let id = model
            .network()
            .map_by_name(name)
            .ok_or_else(|| Error::UnknownId(format!("map `{name}`")))?;
        files.extend(write_map_snapshot(dir, name, model.map(id))?);
    }
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Budget,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Done => 0,
            Outcome::Budget => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcome: Outcome,
    pub log: TrialLog,
    pub steps: u64,
    pub files: Vec<PathBuf>,
}

/// Runs one trial and writes the log, the trace and the periodic snapshots
/// under `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    let mut model = build_model(config.model.clone(), config.target)?;
    let world = config.scene.world();
    let mut trace = Vec::new();
    let mut files = Vec::new();
    let mut failure = None;
    let every = config.output.snapshot_every;
    let mut observer = |m: &AttentionModel| {
        trace.push(TraceRow {
            step: m.steps(),
            move_activity: m.move_activity(),
            switch_activity: m.switch_activity(),
        });
        if let Some(k) = every {
            if m.steps().is_multiple_of(k) {
                match dump_maps(m, &config.output.maps, &snapshot_dir(out_dir, m.steps())) {
                    Ok(f) => files.extend(f),
                    Err(e) => {
                        failure = Some(e);
                        return ControlFlow::Break(());
                    }
                }
            }
        }
        ControlFlow::Continue(())
    };
    let log =
        model.run_trial_observed(&world, config.scene.gaze(), config.limits, &mut observer)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let log_path = out_dir.join(LOG_FILE);
    write_atomic(&log_path, log_to_string(&log)?.as_bytes())?;
    let trace_path = out_dir.join(TRACE_FILE);
    write_atomic(&trace_path, encode_trace_csv(&trace).as_bytes())?;
    files.push(log_path);
    files.push(trace_path);
    let outcome = match log.last_kind() {
        Some(EventKind::Done) => Outcome::Done,
        _ => Outcome::Budget,
    };
    Ok(RunReport {
        outcome,
        log,
        steps: model.steps(),
        files,
    })
}

#[derive(Debug, Clone)]
pub struct SnapshotReport {
    /// Step actually dumped; smaller than requested when the trial ended
    /// first.
    pub step: u64,
    pub files: Vec<PathBuf>,
}

/// Runs the trial up to `step` and dumps every configured map into
/// `<out_dir>/snapshots/step_NNNNNN/`.
pub fn snapshot(config: &RunConfig, step: u64, out_dir: &Path) -> Result<SnapshotReport> {
    let mut model = build_model(config.model.clone(), config.target)?;
    if step > 0 {
        let world = config.scene.world();
        let mut observer = |m: &AttentionModel| {
            if m.steps() >= step {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        };
        model.run_trial_observed(&world, config.scene.gaze(), config.limits, &mut observer)?;
    }
    let reached = model.steps();
    let files = dump_maps(&model, &config.output.maps, &snapshot_dir(out_dir, reached))?;
    Ok(SnapshotReport {
        step: reached,
        files,
    })
}
