mod common;

use std::fs;

use common::{snapshot, Workspace};

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn commands_name_the_missing_upstream_step() {
    let ws = Workspace::new("");
    let out = ws.run(&["--mock-llm", "index"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("run `ingest` first"), "{}", stderr(&out));

    ws.run_ok(&["ingest"]);
    let out = ws.run(&["--mock-llm", "retrieve"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("run `index` first"), "{}", stderr(&out));

    let out = ws.run(&["--mock-llm", "generate"]);
    assert!(stderr(&out).contains("run `retrieve` first"), "{}", stderr(&out));

    let out = ws.run(&["--mock-llm", "optimize"]);
    assert!(stderr(&out).contains("run `generate` first"), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_with_one_and_name_the_field() {
    let ws = Workspace::new("");
    let path = ws.path().join("assaymol.toml");
    let original = fs::read_to_string(&path).unwrap();

    fs::write(&path, original.replacen("seed = 11", "", 1)).unwrap();
    let out = ws.run(&["--mock-llm", "ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`seed`"), "{}", stderr(&out));
    ws.run_ok(&["--seed", "3", "ingest"]);

    fs::write(&path, original.replacen("seed = 11", "seed = 11\ncolour = \"red\"", 1)).unwrap();
    let out = ws.run(&["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("colour"), "{}", stderr(&out));

    fs::write(&path, format!("{original}\n[hyperparameters]\nbatch_size = 200\n")).unwrap();
    let out = ws.run(&["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("hyperparameters"), "{}", stderr(&out));
}

#[test]
fn provider_failure_exits_with_two() {
    let ws = Workspace::new(
        "\n[providers.embedder]\nbase_url = \"http://127.0.0.1:9\"\napi_key_env = \"ASSAYMOL_TEST_UNSET_KEY\"\nmodel_id = \"embed-test\"\nmax_retries = 0\nrequest_timeout = 2\n",
    );
    ws.run_ok(&["ingest"]);
    let out = ws.run(&["index"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn seed_override_selects_a_separate_run_directory() {
    let ws = Workspace::new("");
    ws.run_ok(&["--mock-llm", "pipeline"]);
    ws.run_ok(&["--mock-llm", "--seed", "12", "retrieve"]);
    let runs = fs::read_dir(ws.path().join("out")).unwrap().count();
    assert_eq!(runs, 2);
}

#[test]
fn parallel_targets_match_sequential_results() {
    let ws = Workspace::new("");
    let targets = concat!(
        r#"{"target_id": "K1", "description": "Protein kinase K1 driving cell-cycle entry.", "reference_score": -7.0}"#,
        "\n",
        r#"{"target_id": "K2/alt", "description": "Kinase K2 in a cell-free inhibition format.", "mode": "full-description"}"#,
        "\n",
        r#"{"target_id": "K3", "description": "Kinase K3 screen with ATP incubation.", "keywords": "kinase K3, ATP"}"#,
        "\n",
    );
    fs::write(ws.path().join("targets.jsonl"), targets).unwrap();

    let mut snaps = Vec::new();
    for parallel in ["1", "3"] {
        ws.reset();
        let summary = ws.run_ok(&[
            "--mock-llm",
            "--targets",
            "targets.jsonl",
            "--parallel",
            parallel,
            "pipeline",
        ]);
        assert!(summary.contains("evaluated 3 targets"), "{summary}");
        snaps.push(snapshot(&ws.path().join("out")));
    }
    assert!(snaps[0].iter().any(|(n, _)| n.contains("K2_alt")));
    assert_eq!(snaps[0], snaps[1]);

    let manifest = fs::read_to_string(ws.run_dir().join("manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["targets"], serde_json::json!(["K1", "K2/alt", "K3"]));
    assert_eq!(m["mock_llm"], serde_json::json!(true));
}
