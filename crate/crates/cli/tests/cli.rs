use std::path::Path;
use std::process::{Command, Output};

use hdlscale_core::suite::save_suite_jsonl;
use hdlscale_core::types::Problem;

fn hdlscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdlscale")).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write_suite(dir: &Path) -> String {
    let problems: Vec<Problem> = (0..4)
        .map(|i| Problem {
            id: format!("t{i}"),
            spec_text: format!("Build block {i}."),
            testbench_source: "// tb".into(),
            ref_code: Some(format!("module t{i}(input a, output y); assign y = a; endmodule")),
            tags: if i % 2 == 0 { ["math-related".to_string()].into() } else { Default::default() },
            suite: "cli".into(),
            pass_regex: None,
            fail_regex: None,
        })
        .collect();
    let path = dir.join("suite.jsonl");
    save_suite_jsonl(&problems, &path).unwrap();
    path.to_str().unwrap().to_string()
}

/// Runs a small mock campaign and returns the store path.
fn mock_store(dir: &Path, extra: &[&str]) -> String {
    let suite = write_suite(dir);
    let store = dir.join("store").to_str().unwrap().to_string();
    let mut args = vec!["run", "--mock", "--suite", &suite, "-o", &store, "--max-samples", "8", "--seed", "3"];
    args.extend_from_slice(extra);
    let out = hdlscale(&args);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("done: 4/4 problems terminal"), "{}", text(&out.stdout));
    store
}

#[test]
fn missing_config_exits_2_and_names_the_file() {
    let out = hdlscale(&["run", "-c", "/nonexistent/campaign.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("/nonexistent/campaign.toml"), "{}", text(&out.stderr));
}

#[test]
fn run_without_config_or_mock_is_rejected() {
    let out = hdlscale(&["run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("no config file"));
}

#[test]
fn stop_mode_flag_reaches_the_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let store = mock_store(dir.path(), &["--stop-mode", "fixedn"]);
    let snapshot = std::fs::read_to_string(Path::new(&store).join("campaign.json")).unwrap();
    assert!(snapshot.contains("\"fixed-n\""), "{snapshot}");
    for i in 0..4 {
        let log = std::fs::read_to_string(Path::new(&store).join(format!("problems/t{i}/samples.jsonl"))).unwrap();
        assert_eq!(log.lines().count(), 8);
    }
}

#[test]
fn rerun_with_changed_settings_is_a_config_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let store = mock_store(dir.path(), &[]);
    let suite = dir.path().join("suite.jsonl");
    let out = hdlscale(&["run", "--mock", "--suite", suite.to_str().unwrap(), "-o", &store, "--max-samples", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("config mismatch"), "{}", text(&out.stderr));
}

#[test]
fn resume_of_a_complete_store_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let store = mock_store(dir.path(), &[]);
    let before = std::fs::read(Path::new(&store).join("problems/t1/samples.jsonl")).unwrap();
    let out = hdlscale(&["resume", &store]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("requests this run"));
    assert_eq!(std::fs::read(Path::new(&store).join("problems/t1/samples.jsonl")).unwrap(), before);
}

#[test]
fn report_without_pricing_succeeds_and_omits_cost() {
    let dir = tempfile::tempdir().unwrap();
    let store = mock_store(dir.path(), &[]);
    let out = hdlscale(&["report", &store, "--checkpoints", "1,4,8"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("cost omitted"), "{stdout}");
    let report = Path::new(&store).join("report");
    for f in ["hit_curve.csv", "first_pass.csv", "checkpoints.csv", "tags.csv", "fit.json", "summary.json"] {
        assert!(report.join(f).exists(), "{f} missing");
    }
    assert!(!report.join("cost.csv").exists());
    let checkpoints = std::fs::read_to_string(report.join("checkpoints.csv")).unwrap();
    assert_eq!(checkpoints.lines().count(), 4);
    let hit = std::fs::read_to_string(report.join("hit_curve.csv")).unwrap();
    assert_eq!(hit.lines().count(), 1 + 8);
}

#[test]
fn analyze_is_reproducible_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let store = mock_store(dir.path(), &["--stop-mode", "fixed-n"]);
    let snapshot = |root: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = std::fs::read_dir(root.join("analysis"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files.iter().map(|p| (p.display().to_string(), std::fs::read(p).unwrap())).collect()
    };
    let out = hdlscale(&["analyze", &store, "--seed", "4"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let first = snapshot(Path::new(&store));
    assert!(first.iter().any(|(p, _)| p.ends_with("scatter.csv")));
    assert!(first.iter().any(|(p, _)| p.ends_with("bins.csv")));
    assert!(first.iter().any(|(p, _)| p.ends_with("heatmap_t0.csv")));
    let out = hdlscale(&["analyze", &store, "--seed", "4"]);
    assert!(out.status.success());
    assert_eq!(snapshot(Path::new(&store)), first);
}

#[test]
fn analyze_rejects_unknown_problem() {
    let dir = tempfile::tempdir().unwrap();
    let store = mock_store(dir.path(), &[]);
    let out = hdlscale(&["analyze", &store, "--problem", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("nope"));
}

#[test]
fn report_on_a_directory_without_a_campaign_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = hdlscale(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).starts_with("error:"));
}

#[test]
fn sweep_writes_combined_tables() {
    let dir = tempfile::tempdir().unwrap();
    let suite = write_suite(dir.path());
    std::fs::write(
        dir.path().join("base.toml"),
        format!(
            "suite_path = \"{suite}\"\noutput_dir = \"sweep\"\nprovider = \"mock\"\nsim_profile = \"mock\"\n\
             max_samples = 6\nstop_mode = \"fixed-n\"\n"
        ),
    )
    .unwrap();
    let plan = dir.path().join("plan.toml");
    std::fs::write(&plan, "base_config = \"base.toml\"\ntemperatures = [0.0, 0.5]\noutput_dir = \"sw\"\n").unwrap();
    let out = hdlscale(&["sweep", plan.to_str().unwrap(), "--parallel", "2"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let root = dir.path().join("sw");
    let hit = std::fs::read_to_string(root.join("sweep_hit.csv")).unwrap();
    assert_eq!(hit.lines().next(), Some("schema_version,temperature,k,hit_rate"));
    assert_eq!(hit.lines().count(), 1 + 2 * 6);
    assert!(root.join("temp_0/report/summary.json").exists());
    assert!(root.join("temp_0.5/campaign.json").exists());
}
