use std::path::PathBuf;
use std::process::{Command, Output};

fn conic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conic")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("conic-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../core/tests/golden/{name}.csv", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn constraints_presets_are_bit_exact() {
    for name in ["bell20", "nhanes24"] {
        let out = stdout(&conic(&["constraints", "--preset", name]));
        let strip = |s: &str| s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(&out), strip(&golden(name)));
    }
}

#[test]
fn constraints_from_spec_file() {
    let spec = scratch("spec.json", r#"{"n": 4, "terms": [{"kind": "regime", "start": 1, "end": 4, "shape": "increasing"}, {"kind": "boundary", "index": 1, "shape": "nonneg"}]}"#);
    let out = stdout(&conic(&["constraints", "--spec", spec.to_str().unwrap()]));
    assert_eq!(out, "-1,1,0,0\n0,-1,1,0\n0,0,-1,1\n1,0,0,0\n");
}

#[test]
fn convert_and_verify_round_trip() {
    let a = scratch("a.csv", "1,0,0\n0,1,0\n-1,-1,1\n");
    let rays = stdout(&conic(&["cone", "convert", "--matrix", a.to_str().unwrap()]));
    let rays_path = scratch("rays.csv", &rays);
    let report = stdout(&conic(&["cone", "verify", "--matrix", a.to_str().unwrap(), "--rays", rays_path.to_str().unwrap()]));
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["clean"], true);
    assert_eq!(json["rays"], 3);
    let back = stdout(&conic(&["cone", "convert", "--rays", rays_path.to_str().unwrap()]));
    assert_eq!(back.lines().count(), 3);
}

#[test]
fn verify_fails_with_nonzero_exit() {
    let a = scratch("a2.csv", "1,0\n0,1\n");
    let wrong = scratch("wrong.csv", "1,-1\n0,1\n");
    let out = conic(&["cone", "verify", "--matrix", a.to_str().unwrap(), "--rays", wrong.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn adjacency_and_cliques_use_one_based_indices() {
    let a = scratch("a3.csv", "1,0,0\n0,1,0\n0,0,1\n");
    let edges = stdout(&conic(&["cone", "adjacency", "--matrix", a.to_str().unwrap()]));
    assert_eq!(edges, "i,j\n1,2\n1,3\n2,3\n");
    let cliques = stdout(&conic(&["cone", "cliques", "--matrix", a.to_str().unwrap()]));
    assert_eq!(cliques, "clique,size,members\n1,3,1 2 3\n");
    let n = stdout(&conic(&["cone", "cliques", "--preset", "bell20"])).lines().count();
    assert!(n > 1);
}

#[test]
fn projection_clips_to_the_orthant() {
    let a = scratch("a4.csv", "1,0\n0,1\n");
    let y = scratch("y.csv", "2\n-3\n");
    assert_eq!(stdout(&conic(&["cone", "project", "--matrix", a.to_str().unwrap(), "--y", y.to_str().unwrap()])), "2\n0\n");
}

#[test]
fn bad_input_exits_nonzero() {
    assert!(!conic(&["constraints", "--preset", "nope"]).status.success());
    let ragged = scratch("ragged.csv", "1,0\n1\n");
    assert!(!conic(&["cone", "convert", "--matrix", ragged.to_str().unwrap()]).status.success());
    assert!(!conic(&["cone", "convert", "--preset", "bell20", "--linearity", "99"]).status.success());
    assert!(!conic(&["fit", "--preset", "bell20"]).status.success());
}

#[test]
fn plain_fit_writes_report_and_mean() {
    let y: String = (0..20).map(|j| format!("{}\n", 2.0 - ((j as f64 - 9.5) / 5.0).powi(2))).collect();
    let y = scratch("yfit.csv", &y);
    let out = scratch("mu.csv", "");
    let report = stdout(&conic(&["fit", "--preset", "bell20", "--y", y.to_str().unwrap(), "-o", out.to_str().unwrap()]));
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["mu_hat"].as_array().unwrap().len(), 20);
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 20);
}

#[test]
fn mixed_fit_and_loglik_from_config() {
    let mut csv = String::from("subject,time,value\n");
    for i in 0..30 {
        for j in 1..=20 {
            let x = -2.0 + 4.0 * (j - 1) as f64 / 19.0;
            let v = 2.4 * (-2.0 * x * x).exp() + 0.1 * ((i * 7 + j * 3) % 11) as f64 / 11.0;
            csv.push_str(&format!("s{i},{j},{v}\n"));
        }
    }
    let data = scratch("long.csv", &csv);
    let config = scratch(
        "config.json",
        &format!(r#"{{"preset": "bell20", "data": "{}", "train": 20, "test": 10, "splits": 2, "seed": 5}}"#, data.display()),
    );
    let report = stdout(&conic(&["--config", config.to_str().unwrap(), "fit", "--mixed"]));
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(json["sigma2"].as_f64().unwrap() > 0.0);
    let ll = stdout(&conic(&["--config", config.to_str().unwrap(), "loglik"]));
    let json: serde_json::Value = serde_json::from_str(&ll).unwrap();
    assert_eq!(json["splits"].as_array().unwrap().len(), 2);
    // flag overrides the config value
    let ll = stdout(&conic(&["--config", config.to_str().unwrap(), "loglik", "--splits", "1"]));
    let json: serde_json::Value = serde_json::from_str(&ll).unwrap();
    assert_eq!(json["splits"].as_array().unwrap().len(), 1);
}

#[test]
fn prior_sample_rows() {
    let out = stdout(&conic(&["prior-sample", "--preset", "nhanes24", "--draws", "5", "--seed", "3"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("clique,dense,b1,"));
    assert_eq!(out, stdout(&conic(&["prior-sample", "--preset", "nhanes24", "--draws", "5", "--seed", "3"])));
}

#[test]
fn unknown_config_field_is_rejected() {
    let config = scratch("bad.json", r#"{"presett": "bell20"}"#);
    assert!(!conic(&["--config", config.to_str().unwrap(), "cone", "cliques"]).status.success());
}

#[test]
fn small_simulation_prints_tables() {
    let dir = std::env::temp_dir().join(format!("conic-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("study.csv");
    let out = stdout(&conic(&[
        "simulate", "--replications", "2", "--subjects", "12", "--sigmas", "1", "--scenarios", "dense", "-o", csv.to_str().unwrap(),
    ]));
    assert!(out.contains("Median MSE and mean MSE (dense truth)"));
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 5);
}
