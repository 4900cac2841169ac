use std::fs;
use std::path::{Path, PathBuf};

use fovea_core::io::*;
use fovea_core::*;

fn config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    load_config(&path).unwrap()
}

/// Reads a `x,y,u` sidecar back into a field.
fn read_csv(path: &Path) -> FieldMap {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,u"));
    let grid = Grid::default();
    let mut u = grid.zeros();
    let mut seen = 0;
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        let (x, y): (usize, usize) = (parts[0].parse().unwrap(), parts[1].parse().unwrap());
        u[grid.index(x, y)] = parts[2].parse().unwrap();
        seen += 1;
    }
    assert_eq!(seen, grid.len());
    let mut f = FieldMap::new(grid, 1.0).unwrap();
    f.set_activity(&u).unwrap();
    f
}

fn pgm_pixels(path: &Path) -> Vec<u8> {
    let bytes = fs::read(path).unwrap();
    let header = b"P5\n40 40\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    bytes[header.len()..].to_vec()
}

fn map_files(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.pgm")),
        dir.join(format!("{name}.csv")),
    )
}

#[test]
fn config_round_trips_through_a_file() {
    let c = config("fig3.toml");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.toml");
    write_config(&path, &c).unwrap();
    assert_eq!(load_config(&path).unwrap(), c);
}

#[test]
fn fig3_config_holds_one_target_among_four_bars() {
    let c = config("fig3.toml");
    assert_eq!(c.scene.stimuli.len(), 4);
    let targets = c
        .scene
        .stimuli
        .iter()
        .filter(|s| c.target.matches(s.color, s.orientation))
        .count();
    assert_eq!(targets, 1);
    c.validate().unwrap();
}

#[test]
fn log_round_trips_through_text() {
    let c = config("no_target.toml");
    let dir = tempfile::tempdir().unwrap();
    let report = run(&c, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(parse_log(&text, Path::new(LOG_FILE)).unwrap(), report.log);
    assert_eq!(report.outcome, Outcome::Budget);
}

#[test]
fn reruns_write_identical_bytes() {
    let c = config("fig3.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run(&c, a.path()).unwrap();
    let rb = run(&c, b.path()).unwrap();
    assert_eq!(ra.outcome, Outcome::Done);
    assert_eq!(ra.files.len(), rb.files.len());
    for (fa, fb) in ra.files.iter().zip(&rb.files) {
        assert_eq!(fa.strip_prefix(a.path()), fb.strip_prefix(b.path()));
        assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{fa:?}");
    }
}

#[test]
fn trace_has_one_row_per_step() {
    let c = config("fig3.toml");
    let dir = tempfile::tempdir().unwrap();
    let report = run(&c, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,move,switch"));
    let steps: Vec<u64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(steps, (1..=report.steps).collect::<Vec<_>>());
}

#[test]
fn step_zero_snapshot_is_blank() {
    let c = config("fig3.toml");
    let dir = tempfile::tempdir().unwrap();
    let report = snapshot(&c, 0, dir.path()).unwrap();
    assert_eq!(report.step, 0);
    assert_eq!(report.files.len(), 2 * c.output.maps.len());
    let step_dir = snapshot_dir(dir.path(), 0);
    for name in &c.output.maps {
        let (pgm, _) = map_files(&step_dir, name);
        assert!(pgm_pixels(&pgm).iter().all(|&p| p == 0), "{name}");
    }
}

#[test]
fn pgm_pixels_quantize_the_csv_sidecar() {
    let c = config("fig3.toml");
    let dir = tempfile::tempdir().unwrap();
    snapshot(&c, 40, dir.path()).unwrap();
    let step_dir = snapshot_dir(dir.path(), 40);
    for name in &c.output.maps {
        let (pgm, csv) = map_files(&step_dir, name);
        let field = read_csv(&csv);
        let expected: Vec<u8> = field
            .activity()
            .iter()
            .map(|u| (255.0 * u).round() as u8)
            .collect();
        assert_eq!(pgm_pixels(&pgm), expected, "{name}");
    }
}

#[test]
fn mid_trial_saliency_shows_every_bar_and_focus_one() {
    let c = config("no_target.toml");
    let dir = tempfile::tempdir().unwrap();
    // Between the first attend and its switch.
    snapshot(&c, 80, dir.path()).unwrap();
    let step_dir = snapshot_dir(dir.path(), 80);
    let saliency = read_csv(&map_files(&step_dir, "saliency").1);
    let focus = read_csv(&map_files(&step_dir, "focus").1);
    assert_eq!(find_bubbles(&saliency, 0.1).len(), 4);
    assert_eq!(find_bubbles(&focus, 0.5).len(), 1);
}

#[test]
fn memory_holds_three_bars_after_three_switches() {
    let c = config("no_target.toml");
    let dir = tempfile::tempdir().unwrap();
    snapshot(&c, 290, dir.path()).unwrap();
    let wm = read_csv(&map_files(&snapshot_dir(dir.path(), 290), "wm").1);
    assert_eq!(find_bubbles(&wm, 0.5).len(), 3);
}

#[test]
fn snapshot_past_the_end_reports_the_last_step() {
    let c = config("fig3.toml");
    let dir = tempfile::tempdir().unwrap();
    let total = run(&c, dir.path()).unwrap().steps;
    let report = snapshot(&c, total + 500, dir.path()).unwrap();
    assert_eq!(report.step, total);
}
