use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .canonicalize()
        .unwrap()
}

fn fixture_config() -> PathBuf {
    data_dir().join("fixture/config.toml")
}

fn socpath(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socpath"))
        .arg("--config")
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(config: &Path, out: &Path, args: &[&str]) {
    let o = socpath(config, out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn manifest(dir: &Path, stage: &str) -> BTreeMap<String, String> {
    fs::read_to_string(dir.join(format!("{stage}.manifest")))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn num(m: &BTreeMap<String, String>, k: &str) -> usize {
    m.get(k)
        .unwrap_or_else(|| panic!("manifest lacks {k}"))
        .parse()
        .unwrap()
}

fn body(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.split_once('\n').unwrap().1.to_string()
}

/// Artifact files in `dir` other than manifests.
fn artifacts(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.ends_with(".manifest"))
        .collect();
    names.sort();
    names
}

/// Config mirroring the fixture with absolute paths and a replaced backend section.
fn config_with_backend(dir: &Path, backend: &str) -> PathBuf {
    let d = data_dir();
    let f = d.join("fixture");
    let text = format!(
        r#"seed = 42
[paths]
profiles = "{f}/profiles.jsonl"
taxonomy = "{d}/taxonomy_2019.csv"
crosswalks = ["{d}/2009_to_2010.csv", "{d}/2010_to_2019.csv"]
wages = ["{f}/wages.csv"]
gdp = "{f}/gdp.csv"
shots = "{d}/fewsoc_shots.txt"
output_dir = "out"
[backend]
{backend}
"#,
        f = f.display(),
        d = d.display()
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn filter_writes_retained_profiles_and_ledger() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&fixture_config(), tmp.path(), &["filter"]);
    let m = manifest(tmp.path(), "filter");
    assert_eq!(num(&m, "input_profiles"), 200);
    assert_eq!(num(&m, "parse_errors"), 2);
    assert_eq!(
        num(&m, "retained_profiles") + num(&m, "rejected_profiles"),
        200
    );
    assert!(num(&m, "retained_profiles") > 0);
    let per_criterion: usize = m
        .iter()
        .filter(|(k, _)| k.starts_with("ledger.criterion"))
        .map(|(_, v)| v.parse::<usize>().unwrap())
        .sum();
    assert_eq!(per_criterion, num(&m, "ledger_entries"));
    let ledger = body(&tmp.path().join("filter_ledger.csv"));
    assert_eq!(ledger.lines().count() - 1, num(&m, "ledger_entries"));
    assert!(ledger.starts_with("profile_id,scope,record_index,criterion,detail"));
    let retained = body(&tmp.path().join("filtered.jsonl"));
    assert_eq!(retained.lines().count(), num(&m, "retained_profiles"));
}

#[test]
fn every_artifact_names_stage_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&fixture_config(), tmp.path(), &["all"]);
    let names = artifacts(tmp.path());
    assert!(names.len() >= 20, "{names:?}");
    let mut hashes = std::collections::BTreeSet::new();
    for n in fs::read_dir(tmp.path()).unwrap() {
        let path = n.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        let rest = first
            .strip_prefix("# stage=")
            .unwrap_or_else(|| panic!("{} header {first:?}", path.display()));
        let (stage, hash) = rest.split_once(" config=").unwrap();
        assert!([
            "partition",
            "filter",
            "classify",
            "trajectories",
            "enrich",
            "analyze",
            "eval"
        ]
        .contains(&stage));
        assert_eq!(hash.len(), 64);
        hashes.insert(hash.to_string());
    }
    assert_eq!(hashes.len(), 1);
}

#[test]
fn classify_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&fixture_config(), d.path(), &["filter"]);
        ok(
            &fixture_config(),
            d.path(),
            &["classify", "--backend", "mock"],
        );
    }
    let x = fs::read(a.path().join("classifications.jsonl")).unwrap();
    let y = fs::read(b.path().join("classifications.jsonl")).unwrap();
    assert!(!x.is_empty());
    assert_eq!(x, y);
    assert!(!a.path().join("classify.checkpoint").exists());
}

#[test]
fn batch_size_does_not_change_codes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&fixture_config(), a.path(), &["filter"]);
    ok(&fixture_config(), b.path(), &["filter"]);
    ok(
        &fixture_config(),
        a.path(),
        &["classify", "--batch-size", "1"],
    );
    ok(
        &fixture_config(),
        b.path(),
        &["classify", "--batch-size", "5"],
    );
    let one = body(&a.path().join("classifications.jsonl"));
    let five = body(&b.path().join("classifications.jsonl"));
    let codes = |s: &str| -> Vec<(String, String, String)> {
        s.lines()
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                (
                    v["title"].to_string(),
                    v["company"].to_string(),
                    v["final_code"].to_string(),
                )
            })
            .collect()
    };
    assert_eq!(codes(&one), codes(&five));
    assert_eq!(num(&manifest(a.path(), "classify"), "batch_size"), 1);
}

#[test]
fn stages_run_separately_match_all() {
    let whole = tempfile::tempdir().unwrap();
    let staged = tempfile::tempdir().unwrap();
    ok(&fixture_config(), whole.path(), &["all"]);
    for s in [
        "partition",
        "filter",
        "classify",
        "trajectories",
        "enrich",
        "analyze",
        "eval",
    ] {
        ok(&fixture_config(), staged.path(), &[s]);
    }
    let names = artifacts(whole.path());
    assert_eq!(names, artifacts(staged.path()));
    for n in &names {
        assert_eq!(
            fs::read(whole.path().join(n)).unwrap(),
            fs::read(staged.path().join(n)).unwrap(),
            "{n} differs"
        );
    }
}

#[test]
fn full_run_reports_tables() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&fixture_config(), tmp.path(), &["all"]);
    let report = body(&tmp.path().join("report.txt"));
    for needle in [
        "Upward mobility:",
        "Growth",
        "Transitions between major groups",
        "Model 1",
        "Model 2",
        "Model 3",
        "Model 4 Male",
        "Model 4 Female",
        "Female x Type-2 Change",
    ] {
        assert!(report.contains(needle), "report lacks {needle:?}");
    }
    let matrix = body(&tmp.path().join("transition_matrix.csv"));
    let mut lines = matrix.lines();
    let labels: Vec<&str> = lines.next().unwrap().split(',').skip(1).collect();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let i = labels.iter().position(|l| *l == cells[0]).unwrap();
        assert_eq!(cells[i + 1], "0", "diagonal cell for {}", cells[0]);
    }
    let m = manifest(tmp.path(), "analyze");
    assert!(num(&m, "records") > 0);
    assert!(num(&m, "transition_off_diagonal") > 0);
}

#[test]
fn model_table_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&fixture_config(), tmp.path(), &["all"]);
    let golden = fs::read_to_string(data_dir().join("golden/fixture_model_table.txt")).unwrap();
    assert_eq!(body(&tmp.path().join("model_table.txt")), golden);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = socpath(&tmp.path().join("missing.toml"), tmp.path(), &["filter"]);
    assert_eq!(o.status.code(), Some(2));
    let bad = tmp.path().join("bad.toml");
    fs::write(
        &bad,
        fs::read_to_string(fixture_config()).unwrap() + "\n[unknown]\nx = 1\n",
    )
    .unwrap();
    assert_eq!(
        socpath(&bad, tmp.path(), &["filter"]).status.code(),
        Some(2)
    );
    // http without an endpoint fails validation
    assert_eq!(
        socpath(
            &fixture_config(),
            tmp.path(),
            &["classify", "--backend", "http"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        socpath(
            &fixture_config(),
            tmp.path(),
            &["classify", "--batch-size", "6"]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn missing_upstream_artifact_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    for stage in ["classify", "trajectories", "enrich", "analyze", "eval"] {
        let o = socpath(&fixture_config(), tmp.path(), &[stage]);
        assert_eq!(o.status.code(), Some(3), "{stage}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("missing upstream artifact"));
    }
}

#[test]
fn backend_failure_exits_4_and_keeps_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let backend = r#"kind = "http"
endpoint = "http://127.0.0.1:9/v1/chat/completions"
credentials_env_var = "SOCPATH_CLI_TEST_KEY"
max_attempts = 1
initial_backoff_ms = 1
timeout_secs = 2"#;
    let cfg = config_with_backend(tmp.path(), backend);
    let out = tmp.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_socpath"))
        .arg("--config")
        .arg(&cfg)
        .arg("filter")
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_socpath"))
        .arg("--config")
        .arg(&cfg)
        .arg("classify")
        .env("SOCPATH_CLI_TEST_KEY", "k")
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(out.join("classify.checkpoint").exists());
    let m = manifest(&out, "classify");
    assert_eq!(num(&m, "unclassified"), num(&m, "jobs"));
}

#[test]
fn resume_completes_from_checkpoint() {
    let full = tempfile::tempdir().unwrap();
    ok(&fixture_config(), full.path(), &["filter"]);
    ok(&fixture_config(), full.path(), &["classify"]);
    let expected = fs::read_to_string(full.path().join("classifications.jsonl")).unwrap();
    let (header, outcomes) = expected.split_once('\n').unwrap();

    let part = tempfile::tempdir().unwrap();
    ok(&fixture_config(), part.path(), &["filter"]);
    let mut ckpt = format!("{header}\n");
    for (i, line) in outcomes
        .lines()
        .enumerate()
        .filter(|(i, _)| i % 3 != 1)
        .take(150)
    {
        ckpt.push_str(&format!("{{\"index\":{i},\"outcome\":{line}}}\n"));
    }
    fs::write(part.path().join("classify.checkpoint"), &ckpt).unwrap();
    ok(&fixture_config(), part.path(), &["classify", "--resume"]);
    assert_eq!(
        fs::read_to_string(part.path().join("classifications.jsonl")).unwrap(),
        expected
    );
    let m = manifest(part.path(), "classify");
    assert_eq!(num(&m, "resumed_from_checkpoint"), 150);
    assert!(num(&m, "backend_calls") < num(&manifest(full.path(), "classify"), "backend_calls"));
}

#[test]
fn resume_rejects_checkpoint_from_other_config() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&fixture_config(), tmp.path(), &["filter"]);
    fs::write(
        tmp.path().join("classify.checkpoint"),
        format!("# stage=classify config={}\n", "0".repeat(64)),
    )
    .unwrap();
    assert_eq!(
        socpath(&fixture_config(), tmp.path(), &["classify", "--resume"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn help_documents_flags() {
    let o = Command::new(env!("CARGO_BIN_EXE_socpath"))
        .arg("--help")
        .output()
        .unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    for flag in [
        "--config",
        "--output-dir",
        "--backend",
        "--batch-size",
        "--workers",
        "--resume",
        "--window-years",
        "--mobility-cap",
        "--models",
        "--metric",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
    for sub in [
        "partition",
        "filter",
        "classify",
        "trajectories",
        "enrich",
        "analyze",
        "eval",
        "all",
    ] {
        assert!(text.contains(sub), "{sub}");
    }
}
