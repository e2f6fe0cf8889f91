use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const DOCTOR: &str = "A full-color headshot of a doctor";

fn fairtarget(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairtarget"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn fixture(dir: &Path) -> String {
    let path = dir.join("fixture.json");
    std::fs::write(
        &path,
        serde_json::json!({
            "doctor@us": {
                "concept": "doctor",
                "scope": "United States",
                "groups": [
                    {"label": "White", "proportion": 0.63},
                    {"label": "Asian", "proportion": 0.2},
                    {"label": "Hispanic", "proportion": 0.1},
                    {"label": "Black", "proportion": 0.07}
                ],
                "confidence": 0.8,
                "sources": ["workforce survey"]
            },
            "nurse@us": "{\"concept\": \"nurse\", \"groups\": []}"
        })
        .to_string(),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn plan_uniform_fifty_splits_seventeen_seventeen_sixteen() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = fairtarget(&["plan", "--prompt", DOCTOR, "--target", "uniform", "--n", "50", "--seed", "42", "--out", out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plan = read(&dir.path().join("plan.json"));
    let counts: Vec<u64> = plan["alloc"].as_array().unwrap().iter().map(|e| e["count"].as_u64().unwrap()).collect();
    assert_eq!(counts, vec![17, 17, 16]);
    assert_eq!(plan["seed_root"], 42);
}

#[test]
fn audit_before_generate_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = fairtarget(&["audit", "--run", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 7);
    assert!(stderr(&o).contains("run `generate` first"));
}

#[test]
fn audit_of_empty_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().to_str().unwrap();
    assert_eq!(code(&fairtarget(&["plan", "--prompt", DOCTOR, "--n", "0", "--out", run])), 0);
    assert_eq!(code(&fairtarget(&["generate", "--run", run])), 0);
    let o = fairtarget(&["audit", "--run", run]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("no records"));
}

#[test]
fn missing_api_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fairtarget(&["retrieve", "--prompt", DOCTOR, "--no-cache", "--cache-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("OPENAI_API_KEY"));
    let o = fairtarget(&["generate", "--run", dir.path().to_str().unwrap(), "--backend", "openai-images"]);
    assert_eq!(code(&o), 7, "plan is checked before credentials");
}

#[test]
fn retrieve_with_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let cache = dir.path().join("cache");
    let cache = cache.to_str().unwrap();
    let o = fairtarget(&["retrieve", "--prompt", DOCTOR, "--scope", "us", "--fixture", &fx, "--cache-dir", cache]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["result"]["confidence"], 0.8);
    assert_eq!(v["routing"]["outcome"], "use_demographics");
    assert_eq!(std::fs::read_dir(cache).unwrap().count(), 1);

    let o = fairtarget(&["retrieve", "--prompt", "a happy person", "--fixture", &fx, "--no-cache"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["result"]["confidence"], 0.0);
    assert_eq!(v["routing"]["reason"], "no_data");
    assert!(stderr(&o).contains("--fallback"));
}

#[test]
fn schema_violation_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let o = fairtarget(&["retrieve", "--prompt", "A full-color headshot of a nurse", "--fixture", &fx, "--no-cache"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn retrieved_plan_records_query_and_routing() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    let o = fairtarget(&[
        "plan", "--prompt", DOCTOR, "--target", "intermediate", "--alpha", "0.5", "--n", "40", "--fixture", &fx,
        "--no-cache", "--out", out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plan = read(&Path::new(out).join("plan.json"));
    assert_eq!(plan["retrieval"]["routing"]["use_demographics"], true);
    assert_eq!(plan["target"]["setting"]["variant"], "intermediate");
    let total: u64 = plan["alloc"].as_array().unwrap().iter().map(|e| e["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 40);
    assert!(plan["items"][0]["prompt"].as_str().unwrap().contains("who is"));

    let o = fairtarget(&[
        "plan", "--prompt", "a happy person", "--target", "intermediate", "--n", "12", "--fixture", &fx, "--no-cache",
        "--out", out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plan = read(&Path::new(out).join("plan.json"));
    assert_eq!(plan["target"]["setting"]["variant"], "fallback");
    assert_eq!(plan["retrieval"]["routing"]["reason"], "no_data");
    assert_eq!(plan["alloc"].as_array().unwrap().len(), 6);
}

#[test]
fn forced_fallback_skips_the_provider() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = fairtarget(&["plan", "--prompt", DOCTOR, "--target", "intermediate", "--fallback", "--n", "12", "--out", out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plan = read(&dir.path().join("plan.json"));
    assert_eq!(plan["target"]["setting"]["variant"], "fallback");
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&fairtarget(&["plan", "--prompt", DOCTOR, "--n", "5", "--target", "extreme", "--out", out])), 2);
    assert_eq!(
        code(&fairtarget(&["plan", "--prompt", DOCTOR, "--n", "5", "--target", "explicit", "--distribution", "0.5,0.4", "--out", out])),
        2
    );
    assert_eq!(code(&fairtarget(&["plan", "--prompt", DOCTOR])), 2);
}

#[test]
fn stages_chain_into_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("baseline");
    let t = dir.path().join("treated");
    let (b, t) = (b.to_str().unwrap(), t.to_str().unwrap());
    for (run, target) in [(b, "baseline"), (t, "uniform")] {
        assert_eq!(code(&fairtarget(&["plan", "--prompt", DOCTOR, "--target", target, "--n", "24", "--seed", "7", "--out", run])), 0);
        let o = fairtarget(&["generate", "--run", run, "--width", "96", "--height", "64"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(code(&fairtarget(&["audit", "--run", run])), 0);
    }
    let out = dir.path().to_str().unwrap();
    let o = fairtarget(&["report", "--baseline", b, "--treated", t, "--out", out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("High-Status"));
    let report = read(&dir.path().join("report.json"));
    assert_eq!(report["reference"], "declared_target");
    assert!(dir.path().join("report.csv").exists());
    assert!(dir.path().join("histogram.csv").exists());

    // Reruns reproduce the audit byte for byte (timestamps pinned).
    let before = std::fs::read(Path::new(t).join("audit.json")).unwrap();
    assert_eq!(code(&fairtarget(&["audit", "--run", t])), 0);
    assert_eq!(before, std::fs::read(Path::new(t).join("audit.json")).unwrap());

    let o = fairtarget(&["report", "--baseline", b, "--treated", dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(code(&o), 7);
    assert!(stderr(&o).contains("run `audit` first"));
}

#[test]
fn simulate_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = fairtarget(&["simulate", "--preset", "smiling", "--n", "120", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS"));
    assert!(dir.path().join("scenario.json").exists());
    assert_eq!(code(&fairtarget(&["simulate", "--preset", "nope", "--out", dir.path().to_str().unwrap()])), 2);
}
