use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

struct Sandbox {
    root: TempDir,
    cwd: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self { root: tempfile::tempdir().unwrap(), cwd: tempfile::tempdir().unwrap() }
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_reposer"))
            .args(args)
            .env("REPOSER_OUTPUT_ROOT", self.root.path())
            .current_dir(self.cwd.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        out
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.path().join(rel)
    }

    fn train(&self, out: &str, extra: &[&str]) {
        let mut args = vec!["train", "--profile", "smoke", "--out", out];
        args.extend_from_slice(extra);
        self.ok(&args);
    }

    fn assert_cwd_untouched(&self) {
        assert_eq!(fs::read_dir(self.cwd.path()).unwrap().count(), 0, "files written outside the output root");
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn manifests(dir: &Path) -> usize {
    fs::read_dir(dir).unwrap().filter(|e| e.as_ref().unwrap().file_name() == "manifest.json").count()
}

#[test]
fn dry_run_prints_config_and_writes_nothing() {
    let s = Sandbox::new();
    let out = s.ok(&["train", "--dry-run", "--profile", "smoke", "--seed", "5"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed = 5"), "{text}");
    assert_eq!(fs::read_dir(s.root.path()).unwrap().count(), 0);
    s.assert_cwd_untouched();
}

#[test]
fn training_is_deterministic_and_writes_one_manifest() {
    let (a, b) = (Sandbox::new(), Sandbox::new());
    a.train("run", &[]);
    b.train("run", &[]);
    for file in ["run/metrics.jsonl", "run/policy.rpck", "run/checkpoints/latest.rpck"] {
        assert_eq!(fs::read(a.path(file)).unwrap(), fs::read(b.path(file)).unwrap(), "{file}");
    }
    assert_eq!(manifests(&a.path("run")), 1);
    assert!(!a.path("run/.reposer.lock").exists());
    let m: serde_json::Value = serde_json::from_slice(&fs::read(a.path("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "train");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    a.assert_cwd_untouched();
}

#[test]
fn interrupted_then_resumed_matches_uninterrupted() {
    let (full, split) = (Sandbox::new(), Sandbox::new());
    full.train("run", &[]);
    split.train("run", &["--max-iterations", "1"]);
    assert_eq!(fs::read_to_string(split.path("run/metrics.jsonl")).unwrap().lines().count(), 1);
    assert!(!split.path("run/policy.rpck").exists());
    split.train("run", &["--resume"]);
    for file in ["run/metrics.jsonl", "run/policy.rpck"] {
        assert_eq!(fs::read(full.path(file)).unwrap(), fs::read(split.path(file)).unwrap(), "{file}");
    }
}

#[test]
fn evaluation_protocols_and_exit_codes() {
    let s = Sandbox::new();
    s.train("run", &[]);
    let common = ["--profile", "smoke", "--out", "run"];
    let with = |head: &[&str], tail: &[&str]| -> Vec<String> { head.iter().chain(&common).chain(tail).map(|a| a.to_string()).collect() };
    let run = |args: Vec<String>| s.run(&args.iter().map(String::as_str).collect::<Vec<_>>());

    let first = run(with(&["eval"], &["--trials", "6"]));
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let report = fs::read(s.path("run/eval-eval/report.json")).unwrap();
    assert!(run(with(&["eval"], &["--trials", "6"])).status.success());
    assert_eq!(report, fs::read(s.path("run/eval-eval/report.json")).unwrap());
    assert_eq!(manifests(&s.path("run/eval-eval")), 1);

    assert!(run(with(&["eval"], &["--trials", "0", "--name", "empty"])).status.success());
    let empty: serde_json::Value = serde_json::from_slice(&fs::read(s.path("run/eval-empty/report.json")).unwrap()).unwrap();
    assert_eq!(empty["trials"], 0);

    assert!(run(with(&["sweep"], &["--parameter", "mass", "--grid", "0.5,1.0", "--trials", "4"])).status.success());
    assert!(s.path("run/sweep-mass/sweep.svg").exists());
    assert!(run(with(&["heatmap"], &["--trials", "4"])).status.success());
    assert!(s.path("run/heatmap/heatmap.svg").exists());
    assert!(run(with(&["objects"], &["--objects", "sphere:3.75", "--trials", "4"])).status.success());

    assert_eq!(code(&run(with(&["sweep"], &["--parameter", "scale", "--grid"]))), 2);
    assert_eq!(code(&run(with(&["objects"], &["--objects", "ycb:mustard"]))), 2);
    assert_eq!(code(&run(with(&["eval"], &["--set", "ppo.no_such_key=1"]))), 2);
    assert_eq!(code(&run(with(&["eval"], &["--set", "task.observation=\"pos_quat\""]))), 4);
    assert_eq!(code(&run(with(&["plot"], &["--input", "missing.jsonl"]))), 3);
    s.assert_cwd_untouched();
}

#[test]
fn single_point_plot_is_reproducible() {
    let s = Sandbox::new();
    s.train("run", &["--max-iterations", "1"]);
    let input = s.path("run/metrics.jsonl");
    let input = input.to_str().unwrap();
    s.ok(&["plot", "--profile", "smoke", "--out", "run", "--input", input]);
    let svg = fs::read_to_string(s.path("run/plots/metrics.svg")).unwrap();
    assert!(svg.contains("<circle") && !svg.contains("<polyline"));
    s.ok(&["plot", "--profile", "smoke", "--out", "run", "--input", input]);
    assert_eq!(svg, fs::read_to_string(s.path("run/plots/metrics.svg")).unwrap());
    s.assert_cwd_untouched();
}

#[test]
fn locked_output_directory_is_refused() {
    let s = Sandbox::new();
    fs::create_dir_all(s.path("run")).unwrap();
    fs::write(s.path("run/.reposer.lock"), "424242").unwrap();
    let out = s.run(&["train", "--profile", "smoke", "--out", "run"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("424242"));
    assert!(!s.path("run/metrics.jsonl").exists());
}
