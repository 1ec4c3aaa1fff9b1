use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qoe-sched"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(args: &[&std::ffi::OsStr]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"{
  "name": "small",
  "workers": {"count": 2},
  "containers": [
    {"profile": "ResNet-50", "objective": 40}, {"profile": "VGG-16", "objective": 60},
    {"profile": "ResNet-50", "objective": 10}, {"profile": "Xception", "objective": 90}
  ],
  "schedule": {"kind": "fixed", "gap": 20},
  "duration": 600,
  "seed": 3
}"#;

#[test]
fn run_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&[
        "run".as_ref(),
        cfg.as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with(
        "time,worker_id,container_id,model,objective,perf,quality,class,limit,share\n"
    ));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["controller"], "dqoes");
    assert!(String::from_utf8_lossy(&o.stdout).contains("satisfied:"));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&[
            "run".as_ref(),
            cfg.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
            "--seed".as_ref(),
            "11".as_ref(),
        ]);
        assert!(o.status.success());
        bytes.push(std::fs::read(out.join("report.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut bytes = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        let o = run(&[
            "run".as_ref(),
            cfg.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
            "--seed".as_ref(),
            seed.as_ref(),
        ]);
        assert!(o.status.success());
        bytes.push(std::fs::read(out.join("report.csv")).unwrap());
    }
    assert_ne!(bytes[0], bytes[1]);
}

#[test]
fn compare_against_even_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let cand = dir.path().join("dqoes");
    let base = dir.path().join("even");
    for (out, kind) in [(&cand, "dqoes"), (&base, "even")] {
        let o = run(&[
            "run".as_ref(),
            cfg.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
            "--controller".as_ref(),
            kind.as_ref(),
        ]);
        assert!(o.status.success());
    }
    let o = run(&[
        "compare".as_ref(),
        cand.join("report.csv").as_os_str(),
        base.join("report.csv").as_os_str(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("ratio"), "{text}");
    assert!(text.contains("total"), "{text}");
}

#[test]
fn compare_rejects_different_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = write_config(dir.path(), SMALL);
    assert!(run(&[
        "run".as_ref(),
        cfg.as_os_str(),
        "--out".as_ref(),
        a.as_os_str()
    ])
    .status
    .success());
    let other = scenario("burst_achievable.json");
    assert!(run(&[
        "run".as_ref(),
        other.as_os_str(),
        "--out".as_ref(),
        b.as_os_str()
    ])
    .status
    .success());
    let o = run(&[
        "compare".as_ref(),
        a.join("report.csv").as_os_str(),
        b.join("report.csv").as_os_str(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("different scenarios"));
}

#[test]
fn plot_writes_svgs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert!(run(&[
        "run".as_ref(),
        cfg.as_os_str(),
        "--out".as_ref(),
        out.as_os_str()
    ])
    .status
    .success());
    let plots = dir.path().join("plots");
    let o = run(&[
        "plot".as_ref(),
        out.join("report.csv").as_os_str(),
        "--out".as_ref(),
        plots.as_os_str(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for w in [1, 2] {
        for kind in ["quality", "share"] {
            let svg = std::fs::read_to_string(plots.join(format!("{kind}_w{w}.svg"))).unwrap();
            assert!(svg.contains("<svg"));
        }
    }
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"containers": [], "duration": -1}"#);
    let o = run(&[
        "run".as_ref(),
        cfg.as_os_str(),
        "--out".as_ref(),
        dir.path().as_os_str(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
}

#[test]
fn unknown_field_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"containers": [{"profile": "ResNet-50", "objective": 40}], "duration": 10, "bogus": 1}"#,
    );
    let o = run(&["run".as_ref(), cfg.as_os_str()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_exits_with_two() {
    let o = run(&["run".as_ref(), "/nonexistent/cfg.json".as_ref()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_csv_exits_with_three() {
    let o = run(&["plot".as_ref(), "/nonexistent/report.csv".as_ref()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_controller_is_a_usage_error() {
    let o = run(&[
        "run".as_ref(),
        scenario("burst_achievable.json").as_os_str(),
        "--controller".as_ref(),
        "fifo".as_ref(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown controller"));
}
