use std::path::{Path, PathBuf};

use har_cli::main_with_args;

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    /// One 600 s record at 256 Hz plus a config that points at it.
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::create_dir_all(root.join("data")).unwrap();
        let samples: String = (0..600 * 256).map(|i| format!("{}\n", (i as f64 * 0.05).sin())).collect();
        std::fs::write(root.join("data/walk_a.txt"), samples).unwrap();
        std::fs::write(
            root.join("data/manifest.toml"),
            "[[record]]\npath = \"walk_a.txt\"\nsubject_id = \"a\"\nactivity = \"walk\"\n",
        )
        .unwrap();
        std::fs::write(
            root.join("har.toml"),
            format!("out = \"out\"\n{extra}\n[dataset]\nmanifest = \"data/manifest.toml\"\n"),
        )
        .unwrap();
        Self { _dir: dir, root }
    }

    fn config(&self) -> String {
        self.root.join("har.toml").display().to_string()
    }

    fn har(&self, args: &[&str]) -> i32 {
        let cfg = self.config();
        let mut all = vec!["har", "--config", cfg.as_str()];
        all.extend_from_slice(args);
        main_with_args(all)
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.root.join("out").join(rel)
    }
}

fn file_count(dir: &Path) -> usize {
    std::fs::read_dir(dir).unwrap().count()
}

#[test]
fn ten_minute_record_yields_297_window_files() {
    let ws = Workspace::new("");
    assert_eq!(ws.har(&["ingest"]), 0);
    assert_eq!(ws.har(&["window"]), 0);
    assert_eq!(file_count(&ws.out("windows/data")), 297);
    let index = std::fs::read_to_string(ws.out("windows/index.csv")).unwrap();
    assert_eq!(index.lines().count(), 298);
}

#[test]
fn rerunning_a_stage_reproduces_its_outputs() {
    let ws = Workspace::new("");
    assert_eq!(ws.har(&["ingest"]), 0);
    assert_eq!(ws.har(&["window"]), 0);
    let first = std::fs::read(ws.out("windows/outputs.manifest")).unwrap();
    assert_eq!(ws.har(&["window"]), 0);
    assert_eq!(std::fs::read(ws.out("windows/outputs.manifest")).unwrap(), first);
    assert_eq!(file_count(&ws.out("windows/data")), 297);
}

#[test]
fn verify_detects_tampering() {
    let ws = Workspace::new("");
    assert_eq!(ws.har(&["ingest"]), 0);
    assert_eq!(ws.har(&["window"]), 0);
    assert_eq!(ws.har(&["verify"]), 0);
    let victim = ws.out("windows/index.csv");
    let mut text = std::fs::read_to_string(&victim).unwrap();
    text.push('\n');
    std::fs::write(&victim, text).unwrap();
    assert_eq!(ws.har(&["verify"]), 4);
}

#[test]
fn missing_stage_input_exits_2() {
    let ws = Workspace::new("");
    assert_eq!(ws.har(&["window"]), 2);
    assert_eq!(ws.har(&["embed"]), 2);
    std::fs::remove_file(ws.root.join("data/walk_a.txt")).unwrap();
    assert_eq!(ws.har(&["ingest"]), 2);
}

#[test]
fn missing_config_file_exits_2() {
    assert_eq!(main_with_args(["har", "--config", "/nonexistent/har.toml", "ingest"]), 2);
}

#[test]
fn invalid_configuration_exits_3() {
    let ws = Workspace::new("jobs = 0");
    assert_eq!(ws.har(&["ingest"]), 3);
    let ws = Workspace::new("unknown_key = 1");
    assert_eq!(ws.har(&["ingest"]), 3);
    let ws = Workspace::new("[window]\nwindow_s = -8.0");
    assert_eq!(ws.har(&["ingest"]), 3);
    assert_eq!(main_with_args(["har", "no-such-command"]), 3);
}
