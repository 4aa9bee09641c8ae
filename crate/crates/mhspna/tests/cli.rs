//! End-to-end runs of the real binary: exit codes, file formats and
//! determinism of every subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mhspna::config::ProjectConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mhspna"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn full_battery_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/full_battery.json")
        .display()
        .to_string()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// counts-schema CSV -> (point_id, year) -> flow
fn read_counts_csv(path: &Path) -> Vec<(String, String, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("point_id,x,y,year,flow"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[3].to_string(), f[4].parse().unwrap())
        })
        .collect()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

/// Small config: two elastic columns and a north-lot column, mild
/// randomization, manual tiny penalty so noise-free planting is recovered.
fn small_config(f: &Fixture) -> String {
    let cfg = r#"{
        "seed": 11,
        "metric": {"a": 0.5, "sigma": 0.5, "clamp": [0.1, 10.0], "oversample": 2},
        "analyses": [
            {"key": "e2s", "type": "elastic", "origin_field": "everywhere",
             "destination_weight_field": "retail_m2", "radii": [300, 600]},
            {"key": "n2s", "type": "elastic", "origin_field": "parking_north",
             "destination_weight_field": "retail_m2", "radii": [500]}
        ],
        "lambda_w": 0.7,
        "folds": 5,
        "repetitions": 10,
        "lambda_r": 1e-8
    }"#;
    write(&f.path("small.json"), cfg);
    f.arg("small.json")
}

#[test]
fn exit_codes_follow_the_contract() {
    let f = Fixture::new();
    assert_eq!(code(&["prepare", "--input", "/no/such/file.geojson", "--output", &f.arg("o")]), 2);
    write(&f.path("bad.json"), r#"{"surprise": true}"#);
    assert_eq!(
        code(&["--config", &f.arg("bad.json"), "synth", "--rows", "3", "--cols", "3", "--output", &f.arg("o")]),
        2
    );
    // clap usage error
    assert_eq!(code(&["analyze", "--no-such-flag"]), 2);
    // missing mode inputs
    ok(&["synth", "--rows", "3", "--cols", "3", "--output", &f.arg("n.geojson")]);
    assert_eq!(code(&["synth", "--rows", "1", "--cols", "3", "--output", &f.arg("o")]), 2);
    // analyze without analyses
    assert_eq!(
        code(&["analyze", "--network", &f.arg("n.geojson"), "--output", &f.arg("o")]),
        2
    );
    // success is 0
    assert_eq!(code(&["synth", "--rows", "2", "--cols", "2", "--output", &f.arg("n2.geojson")]), 0);
}

#[test]
fn synth_grid_combinatorics() {
    let f = Fixture::new();
    let out = ok(&["synth", "--rows", "3", "--cols", "3", "--output", &f.arg("n.geojson")]);
    assert!(out.contains("12 links, 9 junctions"), "{out}");
    let doc = read_json(&f.path("n.geojson"));
    assert_eq!(doc["features"].as_array().unwrap().len(), 12);
    assert_eq!(doc["schema_version"], 1);
    // fixed seed, fixed bytes
    ok(&["synth", "--rows", "3", "--cols", "3", "--output", &f.arg("n2.geojson")]);
    assert_eq!(
        std::fs::read(f.path("n.geojson")).unwrap(),
        std::fs::read(f.path("n2.geojson")).unwrap()
    );
}

#[test]
fn prepare_counts_duplicates_and_is_idempotent() {
    let f = Fixture::new();
    write(
        &f.path("raw.geojson"),
        r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[0,0],[100,0]]},"properties":{"id":"a"}},
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[0,0],[100,0]]},"properties":{"id":"a_dup"}},
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[100,0],[200,0]]},"properties":{"id":"b"}}
        ]}"#,
    );
    let out = ok(&[
        "prepare",
        "--input", &f.arg("raw.geojson"),
        "--output", &f.arg("clean.geojson"),
        "--report", &f.arg("report.json"),
    ]);
    assert!(out.contains("prepared: 2 links"), "{out}");
    let report = read_json(&f.path("report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["duplicates_removed"], serde_json::json!(["a_dup"]));
    // already-clean input passes through unchanged with an empty report
    ok(&[
        "prepare",
        "--input", &f.arg("clean.geojson"),
        "--output", &f.arg("clean2.geojson"),
        "--report", &f.arg("report2.json"),
    ]);
    assert_eq!(
        std::fs::read(f.path("clean.geojson")).unwrap(),
        std::fs::read(f.path("clean2.geojson")).unwrap()
    );
    let report2 = read_json(&f.path("report2.json"));
    assert_eq!(report2["duplicates_removed"].as_array().unwrap().len(), 0);
    assert_eq!(report2["splits"].as_array().unwrap().len(), 0);
    assert_eq!(report2["removed_length"], 0.0);
}

#[test]
fn analyze_is_byte_identical_across_runs_and_thread_counts() {
    let f = Fixture::new();
    let cfg = small_config(&f);
    ok(&["synth", "--rows", "6", "--cols", "6", "--plan", "default", "--output", &f.arg("n.geojson")]);
    let net = f.arg("n.geojson");
    for (tag, threads) in [("a", None), ("b", None), ("c", Some("3"))] {
        let geo = f.arg(&format!("f{tag}.geojson"));
        let csv = f.arg(&format!("f{tag}.csv"));
        let mut args = vec!["--config", &cfg];
        if let Some(t) = threads {
            args.extend(["--threads", t]);
        }
        args.extend(["analyze", "--network", &net, "--output", &geo, "--csv", &csv]);
        ok(&args);
    }
    let base = std::fs::read(f.path("fa.geojson")).unwrap();
    assert_eq!(base, std::fs::read(f.path("fb.geojson")).unwrap());
    assert_eq!(base, std::fs::read(f.path("fc.geojson")).unwrap());
    let base = std::fs::read(f.path("fa.csv")).unwrap();
    assert_eq!(base, std::fs::read(f.path("fb.csv")).unwrap());
    assert_eq!(base, std::fs::read(f.path("fc.csv")).unwrap());
}

#[test]
fn full_battery_template_emits_13_columns() {
    let f = Fixture::new();
    let cfg = full_battery_config();
    ok(&["--config", &cfg, "synth", "--rows", "10", "--cols", "10", "--plan", "default", "--output", &f.arg("n.geojson")]);
    let out = ok(&[
        "--config", &cfg,
        "analyze",
        "--network", &f.arg("n.geojson"),
        "--output", &f.arg("flows.geojson"),
        "--csv", &f.arg("flows.csv"),
    ]);
    assert!(out.contains("analyzed: 13 columns"), "{out}");
    let doc = read_json(&f.path("flows.geojson"));
    let props = doc["features"][0]["properties"].as_object().unwrap();
    for label in [
        "e2s@400", "e2s@800", "e2s@1200", "s2s@200", "s2s@400", "sq2s@600", "sq2s@1000",
        "sc2s@600", "sc2s@1000", "p2s@600", "p2s@1000", "n2s@600", "n2s@1000",
    ] {
        assert!(props.contains_key(label), "missing flow property {label}");
    }
}

#[test]
fn config_template_round_trips() {
    let text = std::fs::read_to_string(full_battery_config()).unwrap();
    let cfg: ProjectConfig = serde_json::from_str(&text).unwrap();
    let json = serde_json::to_string(&cfg).unwrap();
    let back: ProjectConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(cfg, back);
    assert_eq!(cfg.analyses.len(), 6);
    let columns: usize = cfg.analyses.iter().map(|a| a.radii.len()).sum();
    assert_eq!(columns, 13);
}

/// synth + analyze + calibrate on a planted linear model, through the CLI.
fn planted_pipeline(f: &Fixture, cfg: &str, noise: &str) {
    ok(&[
        "--config", cfg,
        "synth",
        "--rows", "8", "--cols", "8",
        "--plan", "default",
        "--output", &f.arg("n.geojson"),
        "--counts", &f.arg("counts.csv"),
        "--plant-points", "30",
        "--plant-intercept", "50",
        "--plant-coeff", "e2s@300=0.01",
        "--plant-coeff", "e2s@600=0.004",
        "--plant-coeff", "n2s@500=0.05",
        "--plant-noise", noise,
    ]);
    ok(&[
        "--config", cfg,
        "analyze",
        "--network", &f.arg("n.geojson"),
        "--output", &f.arg("flows.geojson"),
        "--csv", &f.arg("flows.csv"),
    ]);
}

#[test]
fn calibrate_recovers_planted_coefficients_and_prints_cv_r2() {
    let f = Fixture::new();
    let cfg = small_config(&f);
    planted_pipeline(&f, &cfg, "0");
    let out = ok(&[
        "--config", &cfg,
        "calibrate",
        "--network", &f.arg("n.geojson"),
        "--flows", &f.arg("flows.csv"),
        "--counts", &f.arg("counts.csv"),
        "--year", "2007",
        "--model", &f.arg("model.json"),
        "--coefficients", &f.arg("coeffs.csv"),
    ]);
    assert!(out.contains("(manual)"), "manual lambda_r must skip the grid: {out}");
    let cv_r2: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("cv_r2 = "))
        .expect("cv_r2 printed")
        .parse()
        .unwrap();
    assert!(cv_r2 >= 0.99, "cv_r2 = {cv_r2}");
    let model = read_json(&f.path("model.json"));
    assert_eq!(model["schema_version"], 1);
    assert_eq!(model["model"]["lambda_r"], 1e-8);
    let planted = [("e2s", 300.0, 0.01), ("e2s", 600.0, 0.004), ("n2s", 500.0, 0.05)];
    for c in model["model"]["columns"].as_array().unwrap() {
        let key = c["column"]["analysis"].as_str().unwrap();
        let radius = c["column"]["radius"].as_f64().unwrap();
        let coeff = c["coeff"].as_f64().unwrap();
        let want = planted
            .iter()
            .find(|(k, r, _)| *k == key && *r == radius)
            .map(|(_, _, v)| *v)
            .expect("all columns planted");
        assert!(
            ((coeff - want) / want).abs() < 0.01,
            "{key}@{radius}: planted {want}, got {coeff}"
        );
        // the coefficient table keeps the identity stdcoeff = coeff * std
        let std = c["std"].as_f64().unwrap();
        assert_eq!(c["stdcoeff"].as_f64().unwrap(), coeff * std);
    }
    // coefficients CSV mirrors the model file
    let text = std::fs::read_to_string(f.path("coeffs.csv")).unwrap();
    assert!(text.starts_with("variable,radius,coeff,std,stdcoeff\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn direct_predictions_are_the_linear_response_of_the_flows() {
    let f = Fixture::new();
    let cfg = small_config(&f);
    planted_pipeline(&f, &cfg, "0");
    ok(&[
        "--config", &cfg,
        "calibrate",
        "--network", &f.arg("n.geojson"),
        "--flows", &f.arg("flows.csv"),
        "--counts", &f.arg("counts.csv"),
        "--year", "2007",
        "--model", &f.arg("model.json"),
    ]);
    ok(&[
        "--config", &cfg,
        "predict",
        "--model", &f.arg("model.json"),
        "--mode", "direct",
        "--network", &f.arg("n.geojson"),
        "--output", &f.arg("direct.geojson"),
    ]);
    let model = read_json(&f.path("model.json"));
    let intercept = model["model"]["intercept"].as_f64().unwrap();
    let coeffs: Vec<(String, f64)> = model["model"]["columns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            let label = format!(
                "{}@{}",
                c["column"]["analysis"].as_str().unwrap(),
                c["column"]["radius"].as_f64().unwrap() as i64
            );
            (label, c["coeff"].as_f64().unwrap())
        })
        .collect();
    let flows = read_json(&f.path("flows.geojson"));
    let direct = read_json(&f.path("direct.geojson"));
    for (ff, df) in flows["features"]
        .as_array()
        .unwrap()
        .iter()
        .zip(direct["features"].as_array().unwrap())
    {
        let mut want = intercept;
        for (label, c) in &coeffs {
            want += c * ff["properties"][label].as_f64().unwrap();
        }
        let got = df["properties"]["prediction"].as_f64().unwrap();
        assert!((got - want.max(0.0)).abs() <= 1e-9, "prediction {got} vs linear {want}");
    }
}

#[test]
fn null_mode_echoes_the_baseline_and_identical_epochs_match_it() {
    let f = Fixture::new();
    let cfg = small_config(&f);
    planted_pipeline(&f, &cfg, "0");
    ok(&[
        "--config", &cfg,
        "calibrate",
        "--network", &f.arg("n.geojson"),
        "--flows", &f.arg("flows.csv"),
        "--counts", &f.arg("counts.csv"),
        "--year", "2007",
        "--model", &f.arg("model.json"),
    ]);
    ok(&[
        "--config", &cfg,
        "predict",
        "--model", &f.arg("model.json"),
        "--mode", "null",
        "--baseline", &f.arg("counts.csv"),
        "--year", "2007",
        "--output", &f.arg("null.csv"),
    ]);
    let baseline = read_counts_csv(&f.path("counts.csv"));
    let null = read_counts_csv(&f.path("null.csv"));
    assert_eq!(null.len(), baseline.len());
    for ((bid, _, bv), (nid, nyear, nv)) in baseline.iter().zip(&null) {
        assert_eq!(bid, nid);
        assert_eq!(nyear, "predicted");
        assert_eq!(bv, nv, "null prediction must echo the baseline");
    }
    // identical epochs: incremental == null, byte for byte
    ok(&[
        "--config", &cfg,
        "predict",
        "--model", &f.arg("model.json"),
        "--mode", "incremental",
        "--network-t1", &f.arg("n.geojson"),
        "--network-t2", &f.arg("n.geojson"),
        "--baseline", &f.arg("counts.csv"),
        "--year", "2007",
        "--output", &f.arg("incr.csv"),
    ]);
    assert_eq!(
        std::fs::read(f.path("null.csv")).unwrap(),
        std::fs::read(f.path("incr.csv")).unwrap()
    );
    // mode/input mismatch: null without a baseline
    assert_eq!(
        code(&[
            "predict",
            "--model", &f.arg("model.json"),
            "--mode", "null",
            "--output", &f.arg("x.csv"),
        ]),
        2
    );
}

#[test]
fn tampered_model_files_are_rejected() {
    let f = Fixture::new();
    let cfg = small_config(&f);
    planted_pipeline(&f, &cfg, "0");
    ok(&[
        "--config", &cfg,
        "calibrate",
        "--network", &f.arg("n.geojson"),
        "--flows", &f.arg("flows.csv"),
        "--counts", &f.arg("counts.csv"),
        "--year", "2007",
        "--model", &f.arg("model.json"),
    ]);
    let text = std::fs::read_to_string(f.path("model.json")).unwrap();
    let tampered = text.replace("\"sigma\": 0.5", "\"sigma\": 0.75");
    assert_ne!(text, tampered);
    write(&f.path("model.json"), &tampered);
    assert_eq!(
        code(&[
            "predict",
            "--model", &f.arg("model.json"),
            "--mode", "direct",
            "--network", &f.arg("n.geojson"),
            "--output", &f.arg("d.geojson"),
        ]),
        1
    );
}

#[test]
fn evaluate_scores_predictions() {
    let f = Fixture::new();
    write(
        &f.path("obs.csv"),
        "point_id,x,y,year,flow\np1,0,0,2007,100\np2,10,0,2007,200\np3,20,0,2007,400\np4,30,0,2007,50\n",
    );
    write(
        &f.path("perfect.csv"),
        "point_id,x,y,year,flow\np1,0,0,predicted,100\np2,10,0,predicted,200\np3,20,0,predicted,400\np4,30,0,predicted,50\n",
    );
    let out = ok(&[
        "evaluate",
        "--predictions", &f.arg("perfect.csv"),
        "--pred-year", "predicted",
        "--observations", &f.arg("obs.csv"),
        "--obs-year", "2007",
        "--report", &f.arg("eval.json"),
    ]);
    assert!(out.contains("r2 = 1"), "{out}");
    assert!(out.contains("geh_mean = 0"), "{out}");
    let report = read_json(&f.path("eval.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["r2"], 1.0);
    assert_eq!(report["geh_under_5_fraction"], 1.0);
    // scaling keeps r2 at 1 but costs GEH
    write(
        &f.path("scaled.csv"),
        "point_id,x,y,year,flow\np1,0,0,predicted,200\np2,10,0,predicted,400\np3,20,0,predicted,800\np4,30,0,predicted,100\n",
    );
    let out = ok(&[
        "evaluate",
        "--predictions", &f.arg("scaled.csv"),
        "--pred-year", "predicted",
        "--observations", &f.arg("obs.csv"),
        "--obs-year", "2007",
    ]);
    assert!(out.contains("r2 = 1"), "{out}");
    let geh: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("geh_mean = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(geh > 0.0);
    // fewer than 3 matched points is an error
    write(&f.path("two.csv"), "point_id,x,y,year,flow\np1,0,0,2007,1\np2,10,0,2007,2\n");
    assert_eq!(
        code(&[
            "evaluate",
            "--predictions", &f.arg("two.csv"),
            "--pred-year", "2007",
            "--observations", &f.arg("two.csv"),
            "--obs-year", "2007",
        ]),
        1
    );
}

#[test]
fn sweep_sigma_emits_one_row_per_cell() {
    let f = Fixture::new();
    let cfg = small_config(&f);
    planted_pipeline(&f, &cfg, "0");
    ok(&[
        "--config", &cfg,
        "sweep-sigma",
        "--network", &f.arg("n.geojson"),
        "--counts", &f.arg("counts.csv"),
        "--year", "2007",
        "--analysis", "e2s",
        "--radius", "600",
        "--sigma-grid", "0,0.5,1",
        "--a-grid", "0.25,0.5",
        "--output", &f.arg("sweep.csv"),
    ]);
    let text = std::fs::read_to_string(f.path("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("a,sigma,r2"));
    assert_eq!(lines.count(), 6);
    // single cell
    ok(&[
        "--config", &cfg,
        "sweep-sigma",
        "--network", &f.arg("n.geojson"),
        "--counts", &f.arg("counts.csv"),
        "--year", "2007",
        "--analysis", "e2s",
        "--radius", "600",
        "--sigma-grid", "1",
        "--output", &f.arg("one.csv"),
    ]);
    let text = std::fs::read_to_string(f.path("one.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    // empty grid
    assert_eq!(
        code(&[
            "--config", &cfg,
            "sweep-sigma",
            "--network", &f.arg("n.geojson"),
            "--counts", &f.arg("counts.csv"),
            "--year", "2007",
            "--analysis", "e2s",
            "--radius", "600",
            "--sigma-grid", "",
            "--output", &f.arg("none.csv"),
        ]),
        2
    );
}
