use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_benchirt");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn read_csv(path: impl AsRef<Path>) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn write_csv(path: &Path, rows: &[Vec<String>]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    for r in rows {
        w.write_record(r).unwrap();
    }
    w.flush().unwrap();
}

/// Simulates a 2PL matrix into `<dir>/sim` and fits it into `<dir>/fit`.
fn simulated_fit(dir: &Path, spec: &str) -> (PathBuf, PathBuf) {
    ok(dir, &["--out", "sim", "simulate", spec]);
    ok(dir, &["--out", "fit", "fit", "sim/simulated.csv"]);
    (dir.join("sim/simulated.csv"), dir.join("fit/model.json"))
}

#[test]
fn simulate_is_byte_deterministic() {
    let d = TempDir::new().unwrap();
    let spec = "2pl:agents=50,items=12,seed=7";
    ok(d.path(), &["--out", "a", "simulate", spec]);
    ok(d.path(), &["--out", "b", "simulate", spec]);
    for f in ["simulated.csv", "simulated.json"] {
        assert_eq!(
            fs::read(d.path().join("a").join(f)).unwrap(),
            fs::read(d.path().join("b").join(f)).unwrap()
        );
    }
    let truth = json(d.path().join("a/simulated.json"));
    assert_eq!(truth["agents"].as_array().unwrap().len(), 50);
    assert_eq!(truth["items"].as_array().unwrap().len(), 12);
}

#[test]
fn simulate_constant_gives_identical_values() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["--out", "o", "simulate", "constant:0.75 n=100"]);
    let rows = read_csv(d.path().join("o/simulated.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].len(), 101);
    assert!(rows[1][1..].iter().all(|v| v == "0.75"));
}

#[test]
fn simulate_categorical_variance_converges() {
    let d = TempDir::new().unwrap();
    ok(
        d.path(),
        &["--out", "o", "simulate", "categorical:0.6:0.5,0.9:0.5 n=100000"],
    );
    let side = json(d.path().join("o/simulated.json"));
    let v = side["sample_variance"].as_f64().unwrap();
    assert!((v - 0.0225).abs() / 0.0225 < 0.01, "variance {v}");
    assert!((side["analytic_variance"].as_f64().unwrap() - 0.0225).abs() < 1e-12);
}

#[test]
fn simulate_grammar_errors_are_input_errors() {
    let d = TempDir::new().unwrap();
    let out = run(d.path(), &["--out", "o", "simulate", "categorical:0.6:0.5,0.9"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("position"));
}

#[test]
fn fit_writes_reports_and_is_deterministic_across_workers() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["--out", "sim", "simulate", "2pl:agents=120,items=16,seed=5"]);
    ok(d.path(), &["--out", "a", "--jobs", "1", "fit", "sim/simulated.csv"]);
    ok(d.path(), &["--out", "b", "--jobs", "4", "fit", "sim/simulated.csv"]);
    for f in ["model.json", "convergence.json", "filter_report.json"] {
        assert_eq!(
            fs::read(d.path().join("a").join(f)).unwrap(),
            fs::read(d.path().join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
    let conv = json(d.path().join("a/convergence.json"));
    assert_eq!(conv["converged"], true);
    let trace: Vec<f64> = conv["log_likelihood_trace"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-8));
    let model = json(d.path().join("a/model.json"));
    assert_eq!(model["items"].as_array().unwrap().len(), 16);
    assert!(model["binning"].is_object());
}

#[test]
fn constant_columns_are_reported_and_dropped() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["--out", "sim", "simulate", "2pl:agents=80,items=10,seed=2"]);
    let mut rows = read_csv(d.path().join("sim/simulated.csv"));
    rows[0].push("always".into());
    for r in rows.iter_mut().skip(1) {
        r.push("1".into());
    }
    write_csv(&d.path().join("with_const.csv"), &rows);
    ok(d.path(), &["--out", "o", "fit", "with_const.csv"]);
    let report = json(d.path().join("o/filter_report.json"));
    assert_eq!(report["removed_constant_items"], serde_json::json!(["always"]));
    let model = json(d.path().join("o/model.json"));
    assert!(model["items"]
        .as_array()
        .unwrap()
        .iter()
        .all(|p| p["id"] != "always"));
}

#[test]
fn seeds_flag_attaches_consistency_report() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["--out", "sim", "simulate", "2pl:agents=200,items=20,seed=11"]);
    ok(d.path(), &["--out", "o", "fit", "sim/simulated.csv", "--seeds", "3"]);
    let sc = json(d.path().join("o/seed_consistency.json"));
    assert_eq!(sc["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(sc["consistent"], true);
}

#[test]
fn exit_codes_follow_the_contract() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&run(d.path(), &["--help"])), 0);
    assert_eq!(code(&run(d.path(), &["fit", "nope.csv"])), 2);
    assert_eq!(code(&run(d.path(), &["fit"])), 2);
    ok(d.path(), &["--out", "sim", "simulate", "2pl:agents=60,items=10,seed=4"]);
    let out = run(
        d.path(),
        &["--out", "o", "fit", "sim/simulated.csv", "--max-iters", "1"],
    );
    assert_eq!(code(&out), 3);
    assert!(d.path().join("o/model.json").exists());
    let mut rows = read_csv(d.path().join("sim/simulated.csv"));
    rows.truncate(2);
    rows[0].push("stranger".into());
    rows[1].push("1".into());
    write_csv(&d.path().join("unknown.csv"), &rows);
    let out = run(
        d.path(),
        &["--out", "s", "score-agent", "--bank", "o/model.json", "--responses", "unknown.csv"],
    );
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("stranger"));
}

#[test]
fn analyze_marks_step_agents_unbounded_and_duplicates_match() {
    let d = TempDir::new().unwrap();
    let (sim, model_path) = simulated_fit(d.path(), "2pl:agents=200,items=40,seed=9");
    let model = json(&model_path);
    let assignment = model["binning"]["bin_assignment"].as_object().unwrap().clone();
    let mut rows = read_csv(&sim);
    let header = rows[0].clone();
    let mut step = vec!["step".to_string()];
    for id in &header[1..] {
        let h = assignment.get(id).map(|v| v.as_u64().unwrap()).unwrap_or(9);
        step.push(if h < 2 { "1" } else { "0" }.to_string());
    }
    let mut twin = rows[3].clone();
    twin[0] = "twin".into();
    rows.push(step);
    rows.push(twin);
    write_csv(&d.path().join("scores.csv"), &rows);
    ok(
        d.path(),
        &[
            "--out", "an", "--format", "json", "analyze", "--model", "fit/model.json", "--scores",
            "scores.csv",
        ],
    );
    let ind = json(d.path().join("an/indicators.json"));
    let rows = ind.as_array().unwrap();
    let by_id = |id: &str| rows.iter().find(|r| r["agent_id"] == id).unwrap().clone();
    assert_eq!(by_id("step")["generality"], "unbounded");
    let (mut a, mut b) = (by_id(&read_csv(&sim)[3][0]), by_id("twin"));
    a["agent_id"] = Value::Null;
    b["agent_id"] = Value::Null;
    assert_eq!(a, b);
    assert!(d.path().join("an/correlations.json").exists());
    assert!(d.path().join("an/binning.json").exists());
    let dom = json(d.path().join("an/dominance.json"));
    assert!(dom.as_array().is_some());
}

#[test]
fn curves_select_and_emit_series() {
    let d = TempDir::new().unwrap();
    let (_, model_path) = simulated_fit(d.path(), "2pl:agents=150,items=20,seed=21");
    ok(
        d.path(),
        &[
            "--out", "c", "--format", "json", "curves", "--model", "fit/model.json", "--top-k",
            "difficulty", "--k", "3", "--scores", "sim/simulated.csv",
        ],
    );
    let model = json(&model_path);
    let mut positive: Vec<(f64, String)> = model["items"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["a"].as_f64().unwrap() > 0.0)
        .map(|p| (p["b"].as_f64().unwrap(), p["id"].as_str().unwrap().to_string()))
        .collect();
    positive.sort_by(|x, y| y.0.total_cmp(&x.0));
    let icc = json(d.path().join("c/icc.json"));
    let subjects: Vec<&str> = icc
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["subject"].as_str().unwrap())
        .collect();
    let expected: Vec<&str> = positive[..3].iter().map(|p| p.1.as_str()).collect();
    assert_eq!(subjects, expected);
    for s in icc.as_array().unwrap() {
        let pts = s["points"].as_array().unwrap();
        assert_eq!(pts.len(), 201);
        let xs: Vec<f64> = pts.iter().map(|p| p["x"].as_f64().unwrap()).collect();
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        assert!(pts.iter().all(|p| (0.0..=1.0).contains(&p["y"].as_f64().unwrap())));
    }
    let env = json(d.path().join("c/variance_envelope.json"));
    let mid = &env[0]["points"][50];
    assert_eq!(mid["x"].as_f64().unwrap(), 0.5);
    assert_eq!(mid["y"].as_f64().unwrap(), 0.25);
    assert!(d.path().join("c/acc_theoretical.json").exists());
    assert!(d.path().join("c/acc_empirical.json").exists());
}

#[test]
fn empty_selection_writes_no_icc_file() {
    let d = TempDir::new().unwrap();
    simulated_fit(d.path(), "2pl:agents=150,items=20,seed=21");
    let out = ok(
        d.path(),
        &["--out", "c", "curves", "--model", "fit/model.json", "--negative-discrimination-only"],
    );
    assert!(!d.path().join("c/icc.csv").exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn empirical_accs_of_able_agents_are_monotone() {
    let d = TempDir::new().unwrap();
    simulated_fit(d.path(), "2pl:agents=400,items=60,seed=13");
    ok(
        d.path(),
        &[
            "--out", "c", "--format", "json", "curves", "--model", "fit/model.json", "--scores",
            "sim/simulated.csv",
        ],
    );
    let model = json(d.path().join("fit/model.json"));
    let able: Vec<&str> = model["abilities"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a["theta"].as_f64().unwrap() > 1.0)
        .map(|a| a["id"].as_str().unwrap())
        .collect();
    assert!(!able.is_empty());
    let counts: Vec<f64> = model["binning"]["bin_counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_f64().unwrap())
        .collect();
    let acc = json(d.path().join("c/acc_empirical.json"));
    for s in acc.as_array().unwrap() {
        if !able.contains(&s["subject"].as_str().unwrap()) {
            continue;
        }
        let pts = s["points"].as_array().unwrap();
        for (h, w) in pts.windows(2).enumerate() {
            let (p, q) = (&w[0], &w[1]);
            // two-proportion standard error with the pooled success rate
            let (yp, yq) = (p["y"].as_f64().unwrap(), q["y"].as_f64().unwrap());
            let (np, nq) = (counts[h], counts[h + 1]);
            let pooled = (yp * np + yq * nq) / (np + nq);
            let slack = 2.0 * (pooled * (1.0 - pooled) * (1.0 / np + 1.0 / nq)).sqrt();
            assert!(
                yq <= yp + slack + 1e-12,
                "agent {} rises between bins {h} and {}",
                s["subject"],
                h + 1
            );
        }
    }
}

#[test]
fn score_agent_uses_the_frozen_bank() {
    let d = TempDir::new().unwrap();
    let (sim, model_path) = simulated_fit(d.path(), "2pl:agents=200,items=30,seed=3");
    let before = fs::read(&model_path).unwrap();
    let rows = read_csv(&sim);
    let n = rows[0].len() - 1;
    let source = &rows[6];
    let mut clone = source.clone();
    clone[0] = "clone".into();
    let mut half = source.clone();
    half[0] = "half".into();
    for v in half.iter_mut().skip(1 + n / 2) {
        v.clear();
    }
    let mut ace = vec!["ace".to_string()];
    ace.extend(std::iter::repeat_n("1".to_string(), n));
    write_csv(&d.path().join("new.csv"), &[rows[0].clone(), clone, half, ace]);
    ok(
        d.path(),
        &["--out", "s", "score-agent", "--bank", "fit/model.json", "--responses", "new.csv"],
    );
    assert_eq!(fs::read(&model_path).unwrap(), before);
    let model = json(&model_path);
    let stored = model["abilities"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["id"] == source[0].as_str())
        .unwrap()
        .clone();
    let scored = json(d.path().join("s/scored_agents.json"));
    let get = |id: &str| {
        scored
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["ability"]["id"] == id)
            .unwrap()["ability"]
            .clone()
    };
    let clone = get("clone");
    assert!((clone["theta"].as_f64().unwrap() - stored["theta"].as_f64().unwrap()).abs() < 0.05);
    assert!(get("half")["se"].as_f64().unwrap() > clone["se"].as_f64().unwrap());
    let ace = get("ace");
    assert_eq!(ace["boundary"], true);
    assert_eq!(ace["theta"].as_f64().unwrap(), 6.0);
}

#[test]
fn config_file_fills_in_flags_and_command_line_wins() {
    let d = TempDir::new().unwrap();
    fs::write(
        d.path().join("run.conf"),
        "# defaults\nout = from_config\nseed = 5\nformat = json\nmax-iters = 1\n",
    )
    .unwrap();
    ok(
        d.path(),
        &["--config", "run.conf", "simulate", "constant:0.5 n=3"],
    );
    let side = json(d.path().join("from_config/simulated.json"));
    assert_eq!(side["seed"], 5);
    ok(
        d.path(),
        &["--config", "run.conf", "--seed", "8", "simulate", "constant:0.5 n=3"],
    );
    assert_eq!(json(d.path().join("from_config/simulated.json"))["seed"], 8);
    fs::write(d.path().join("typo.conf"), "sede = 1\n").unwrap();
    let out = run(d.path(), &["--config", "typo.conf", "simulate", "random"]);
    assert_eq!(code(&out), 2);
}
