use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jsonschema::{Retrieve, Uri};
use serde_json::Value;

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

struct SchemaDir;

impl Retrieve for SchemaDir {
    fn retrieve(&self, uri: &Uri<String>) -> Result<Value, Box<dyn std::error::Error + Send + Sync>> {
        let name = uri.path().as_str().rsplit('/').next().unwrap_or_default().to_string();
        let text = std::fs::read_to_string(schema_dir().join(name))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn assert_schema(name: &str, doc: &Value) {
    let text = std::fs::read_to_string(schema_dir().join(name)).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let v = jsonschema::options().with_retriever(SchemaDir).build(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

struct Run {
    out: Output,
    manifest: Value,
}

impl Run {
    fn code(&self) -> i32 {
        self.out.status.code().unwrap()
    }

    fn stdout(&self) -> String {
        String::from_utf8(self.out.stdout.clone()).unwrap()
    }

    fn json(&self) -> Value {
        serde_json::from_slice(&self.out.stdout).unwrap()
    }
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let dir = std::env::temp_dir().join(format!("l3split-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let manifest = dir.join(format!("{}.json", args.join("_").replace(['/', ':'], "-")));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_l3split"));
    cmd.args(args).arg("--manifest").arg(&manifest).env_remove("L3SPLIT_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    let manifest = std::fs::read_to_string(&manifest)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or(Value::Null);
    Run { out, manifest }
}

fn run(args: &[&str]) -> Run {
    run_env(args, &[])
}

fn ok(args: &[&str]) -> Run {
    let r = run(args);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.out.stderr));
    assert_schema("run_manifest.schema.json", &r.manifest);
    assert_eq!(r.manifest["status"], "ok");
    r
}

#[test]
fn lagrange_is_deterministic_and_valid() {
    let a = ok(&["lagrange", "--mu", "1e-3"]);
    let b = ok(&["lagrange", "--mu", "1e-3"]);
    assert_eq!(a.out.stdout, b.out.stdout);
    let doc = a.json();
    assert_schema("lagrange_report.schema.json", &doc);
    let l3 = doc["points"].as_array().unwrap().iter().find(|p| p["label"] == "L3").unwrap();
    assert!((l3["state"]["q1"].as_f64().unwrap() - (1.0 + 5.0 * 1e-3 / 12.0)).abs() < 1e-8);
    assert!(l3["gradient_norm"].as_f64().unwrap() <= 1e-11);
}

#[test]
fn lagrange_csv_has_five_rows() {
    let r = ok(&["lagrange", "--mu", "1e-3", "--format", "csv"]);
    let text = r.stdout();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("label,q1,q2,p1,p2,gradient_norm"));
}

#[test]
fn invalid_inputs_exit_with_validation_code() {
    let r = run(&["lagrange", "--mu", "0.6"]);
    assert_eq!(r.code(), 1);
    assert_eq!(r.manifest["status"], "validation-error");
    assert!(r.out.stdout.is_empty());
    assert_eq!(run(&["lagrange"]).code(), 1);
    assert_eq!(run(&["sweep", "--mu-grid", "1e-3:1e-2:cubic:4"]).code(), 1);
    assert_eq!(run(&["stokes", "--rho", "2"]).code(), 1);
}

#[test]
fn native_below_policy_exits_with_numerical_code() {
    let r = run(&["splitting", "--mu", "1e-4", "--precision", "native"]);
    assert_eq!(r.code(), 2);
    assert_eq!(r.manifest["status"], "numerical-failure");
}

#[test]
fn constant_a_methods_agree() {
    let r = ok(&["constant-a"]);
    let doc = r.json();
    assert_schema("constant_a_report.schema.json", &doc);
    assert!(doc["agreement"].as_f64().unwrap() <= 1e-10);
    for res in doc["results"].as_array().unwrap() {
        assert!((res["value"].as_f64().unwrap() - 0.1778).abs() < 1e-4);
    }
    let single = ok(&["constant-a", "--method", "x-integral"]).json();
    assert_eq!(single["results"].as_array().unwrap().len(), 1);
    assert!(single["agreement"].is_null());
}

#[test]
fn separatrix_csv_and_json() {
    let text = ok(&["separatrix", "--t-min", "-1", "--t-max", "1", "--step", "0.5"]).stdout();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,lambda_h,Lambda_h");
    assert_eq!(lines.len(), 6);
    let doc = ok(&["separatrix", "--t-min", "-1", "--t-max", "1", "--step", "0.5", "--json"]).json();
    assert_schema("separatrix_samples.schema.json", &doc);
}

#[test]
fn splitting_reports_match_schemas() {
    let doc = ok(&["splitting", "--mu", "1e-3"]).json();
    assert_schema("splitting_report.schema.json", &doc);
    assert_eq!(doc["precision"], "native");
    assert!(doc["d"].as_f64().unwrap() > 0.0);
    let doc = ok(&["splitting", "--mu", "1e-3", "--section", "lambda"]).json();
    assert_schema("scaled_splitting_report.schema.json", &doc);
}

#[test]
fn sweep_csv_header_and_worker_independence() {
    let args = ["sweep", "--mu-grid", "2e-3:1e-2:log:4", "--format", "csv"];
    let r = ok(&args);
    let text = r.stdout();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "mu,theta_star,d,C,delta_r,delta_R,delta_G,tof_u,tof_s,precision,status"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("2e-3,"));
    assert!(lines[4].starts_with("1e-2,"));
    let single = run_env(&args, &[("L3SPLIT_WORKERS", "1")]);
    assert_eq!(single.code(), 0);
    assert_eq!(single.out.stdout, r.out.stdout);
    assert_eq!(single.manifest["config"]["command"]["workers"], 1);
}

#[test]
fn sweep_json_with_fit() {
    let doc = ok(&["sweep", "--mu-grid", "1e-3:1e-2:log:6", "--fit", "--json"]).json();
    assert_schema("sweep_report.schema.json", &doc);
    assert_eq!(doc["fit"]["n"], 6);
}

#[test]
fn stokes_single_level() {
    let r = ok(&["stokes", "--rho", "12"]);
    let doc = r.json();
    assert_schema("stokes_report.schema.json", &doc);
    let a = doc["estimate"]["abs_theta"].as_f64().unwrap();
    assert!((1.55..=1.71).contains(&a), "{a}");
}

#[test]
fn check_coords_is_deterministic() {
    let a = ok(&["check-coords", "--samples", "100", "--seed", "7"]);
    let b = ok(&["check-coords", "--samples", "100", "--seed", "7"]);
    assert_eq!(a.out.stdout, b.out.stdout);
    let doc = a.json();
    assert_schema("check_report.schema.json", &doc);
    assert_eq!(doc["all_passed"], true);
}
