use std::path::Path;
use std::process::{Command, Output};

const QUICK: &str = "\
[sim]
duration = 1800.0
[sim.profiles]
dz_brake_probability = 1.0
[train]
epochs = 200
";

fn dzkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dzkit"))
        .args(args)
        .output()
        .expect("dzkit runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = dzkit(args);
    assert!(
        out.status.success(),
        "dzkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn chain(config: &Path, dir: &Path, seed: Option<&str>) {
    let dir = dir.to_str().unwrap();
    let config = config.to_str().unwrap();
    for step in ["simulate", "mine", "train-detector", "evaluate", "export-roc"] {
        let mut args = vec![step, "--config", config, "--output", dir];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        run_ok(&args);
    }
}

#[test]
fn detection_chain_writes_a_report_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, QUICK).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    chain(&config, &a, None);
    chain(&config, &b, None);

    let report = std::fs::read_to_string(a.join("report.txt")).unwrap();
    for key in ["windows", "fpr", "recall", "f1", "auc", "baseline_auc", "iou", "iou_all_windows"] {
        assert!(
            report.lines().any(|l| l.starts_with(&format!("{key} = "))),
            "report lacks {key}:\n{report}"
        );
    }
    let roc = std::fs::read_to_string(a.join("roc.csv")).unwrap();
    assert!(roc.starts_with("threshold,fpr,tpr\n"));
    for name in ["trajectories.csv", "events.csv", "mined.csv", "detector.json", "report.txt", "roc.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn seed_flag_changes_the_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, "[sim]\nduration = 300.0\n").unwrap();
    let c = config.to_str().unwrap();
    let dirs = ["s1", "s2", "s1again"].map(|d| tmp.path().join(d));
    for (dir, seed) in dirs.iter().zip(["1", "2", "1"]) {
        run_ok(&["simulate", "--config", c, "--seed", seed, "--output", dir.to_str().unwrap()]);
    }
    let read = |d: &Path| std::fs::read(d.join("trajectories.csv")).unwrap();
    assert_ne!(read(&dirs[0]), read(&dirs[1]));
    assert_eq!(read(&dirs[0]), read(&dirs[2]));
}

#[test]
fn input_directory_is_separate_from_output() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, "[sim]\nduration = 300.0\n").unwrap();
    let c = config.to_str().unwrap();
    let (src, dst) = (tmp.path().join("src"), tmp.path().join("dst"));
    run_ok(&["simulate", "--config", c, "--output", src.to_str().unwrap()]);
    let summary = run_ok(&[
        "export-deviations",
        "--config",
        c,
        "--input",
        src.to_str().unwrap(),
        "--output",
        dst.to_str().unwrap(),
    ]);
    assert!(summary.contains("deviation windows"));
    let csv = std::fs::read_to_string(dst.join("deviations.csv")).unwrap();
    assert!(csv.starts_with("agent_id,frame,time,d1,d2,d3,d4,sum,max_step_ratio,is_dz"));
    assert!(!src.join("deviations.csv").exists());
}

#[test]
fn errors_are_classified() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();

    let out = dzkit(&["mine", "--output", dir]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]"));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[sim]\nwarp = 9\n").unwrap();
    let out = dzkit(&["simulate", "--config", bad.to_str().unwrap(), "--output", dir]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]"));

    let out = dzkit(&["teleport", "--output", dir]);
    assert_eq!(out.status.code(), Some(2));
}
