use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use koopman_pe::config::{self, ExperimentFile};
use koopman_pe_core::eval::ExperimentConfig;
use koopman_pe_core::Region;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_koopman-pe"))
        .current_dir(root())
        .args(args)
        .arg("--out")
        .arg(out)
        .env("KOOPMAN_PE_LOG", "error")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn simulate_preset_writes_one_thousand_and_one_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--config", "presets/simulate"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
    let text = std::fs::read_to_string(dir.path().join("trajectory_000.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,x3,x4,x5,x6"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1001);
    assert!(rows[1000].starts_with("1.0000000000000000e2,"));
}

#[test]
fn negative_step_is_a_config_error_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        "{\n  \"system\": {\"kind\": \"linear\", \"a\": [[-1]]},\n  \"initial_conditions\": [[1]],\n  \"sim\": {\"tf\": 1.0, \"dt_int\": -0.01, \"dt_sample\": 0.1}\n}\n",
    );
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn config_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.json", "{\"system\": {\"kind\": \"linear\", \"a\": [[-1]]}, \"initial_conditions\": [[1]], \"colour\": 1}");
    let o = run(&["simulate", "--config", unknown.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));

    let o = run(&["simulate"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["simulate", "--config", dir.path().join("missing.json").to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn blow_up_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "blow.json",
        "{\"system\": {\"kind\": \"quadratic\", \"dim\": 1, \"coefficient\": 1.0}, \"initial_conditions\": [[1.0]], \"sim\": {\"tf\": 3.0}}",
    );
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("non-finite state"), "{}", stderr(&o));
}

#[test]
fn constant_signal_is_not_persistently_exciting() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,x1\n");
    for k in 0..50 {
        csv.push_str(&format!("{},2.5\n", k as f64 * 0.1));
    }
    write(dir.path(), "const.csv", &csv);
    let cfg = write(dir.path(), "pe.json", "{\"signals\": [\"const.csv\"], \"order\": 2}");
    let out = dir.path().join("out");
    let o = run(&["pe", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let cert = json(&out.join("certificate.json"));
    assert_eq!(cert["certificate"]["is_pe"], false);
    assert_eq!(cert["certificate"]["spectral_line_count"], 1);
    for f in ["periodogram.csv", "rank.csv"] {
        assert!(out.join(f).exists());
    }
    let header = std::fs::read_to_string(out.join("periodogram.csv")).unwrap();
    assert!(header.starts_with("omega,channel,power\n"));

    let o = run(&["pe", "--config", cfg.to_str().unwrap(), "--center"], &out);
    assert!(o.status.success());
    let cert = json(&out.join("certificate.json"));
    assert_eq!(cert["certificate"]["centered"], true);
    assert_eq!(cert["certificate"]["spectral_line_count"], 0);
}

#[test]
fn fit_then_predict_round_trip_on_linear_data() {
    let dir = tempfile::tempdir().unwrap();
    let sim = write(
        dir.path(),
        "sim.json",
        "{\"system\": {\"kind\": \"linear\", \"a\": [[-0.1, 1.0], [-1.0, -0.1]]},
          \"initial_conditions\": [[1, 0], [0, 1], [0.5, -0.3]],
          \"sim\": {\"tf\": 10.0}}",
    );
    let data = dir.path().join("data");
    assert!(run(&["simulate", "--config", sim.to_str().unwrap()], &data).status.success());

    let fit = write(
        dir.path(),
        "fit.json",
        "{\"trajectories\": [\"data/trajectory_000.csv\", \"data/trajectory_001.csv\"], \"dictionary\": {\"basis\": \"state\"}}",
    );
    let model_dir = dir.path().join("model");
    let o = run(&["fit", "--config", fit.to_str().unwrap()], &model_dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let digest = koopman_pe::formats::sha256_file(&model_dir.join("model.json")).unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains(&digest));

    let predict = write(
        dir.path(),
        "predict.json",
        &format!("{{\"model\": \"model/model.json\", \"model_sha256\": \"{digest}\", \"truth\": [\"data/trajectory_002.csv\"]}}"),
    );
    let pred_dir = dir.path().join("pred");
    let o = run(&["predict", "--config", predict.to_str().unwrap()], &pred_dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&pred_dir.join("predict_report.json"));
    let err = report["mean_error"]["finite"].as_f64().unwrap();
    assert!(err < 1e-8, "{err}");
    assert_eq!(report["model_sha256"], digest.as_str());

    let tampered = write(
        dir.path(),
        "tampered.json",
        "{\"model\": \"model/model.json\", \"model_sha256\": \"00\", \"initial_conditions\": [[1, 0]], \"steps\": 3}",
    );
    let o = run(&["predict", "--config", tampered.to_str().unwrap()], &pred_dir);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("digest mismatch"));
}

#[test]
fn exhausted_design_exits_with_four_and_keeps_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "design.json",
        "{\"system\": {\"kind\": \"linear\", \"a\": [[0.0]]},
          \"dictionary\": {\"basis\": \"state\"},
          \"region\": {\"kind\": \"point\", \"x\": [0.0]},
          \"design\": {\"max_iter\": 2, \"sim\": {\"tf\": 2.0}}}",
    );
    let out = dir.path().join("out");
    let o = run(&["design", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let report = json(&out.join("design_report.json"));
    assert_eq!(report["success"], false);
    assert_eq!(report["certificate"]["spectral_line_count"], 0);
    assert_eq!(report["accepted_ics"].as_array().unwrap().len(), 4);
}

#[test]
fn design_output_feeds_an_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "design.json",
        "{\"system\": {\"kind\": \"repressilator\"},
          \"dictionary\": {\"basis\": \"hermite\", \"max_degree\": 2},
          \"region\": {\"kind\": \"ball\", \"center\": [0,0,0,0,0,0], \"radius\": 1.0, \"nonnegative\": true},
          \"design\": {\"target_lines\": 1, \"batch\": 2, \"max_iter\": 8, \"seed\": 3}}",
    );
    let out = dir.path().join("design");
    let o = run(&["design", "--config", cfg.to_str().unwrap(), "--seed", "11"], &out);
    assert!(matches!(o.status.code(), Some(0) | Some(4)), "{}", stderr(&o));
    let report = json(&out.join("design_report.json"));
    assert_eq!(report["rng_seed"], 11);
    let n = report["accepted_ics"].as_array().unwrap().len();
    let trace = report["trace"].as_array().unwrap();
    assert!(trace.windows(2).all(|w| w[0]["stacked_rank"].as_u64() <= w[1]["stacked_rank"].as_u64()));

    let exp = write(
        dir.path(),
        "exp.json",
        "{\"train_ics_csv\": \"design/design_ics.csv\",
          \"experiment\": {\"dictionary\": {\"basis\": \"hermite\", \"max_degree\": 2}, \"n_test_ics\": 2, \"test_horizon\": 30.0}}",
    );
    let out = dir.path().join("exp");
    let o = run(&["experiment", "--config", exp.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let rep = json(&out.join("report.json"));
    assert_eq!(rep["train_ics"].as_array().unwrap().len(), n);
    assert_eq!(rep["train_ics"], report["accepted_ics"]);
}

#[test]
fn experiment_report_is_consistent_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.json",
        "// short run\n{\"experiment\": {\"n_test_ics\": 2, \"test_horizon\": 30.0}}",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&["experiment", "--config", cfg.to_str().unwrap(), "--seed", "5", "--threads", threads], out);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut names: Vec<String> =
        std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    for n in &names {
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap(), "{n}");
    }
    let report = json(&a.join("report.json"));
    assert_eq!(report["config"]["seed"], 5);
    for f in report["files"].as_array().unwrap().iter().chain([&report["model"]]) {
        let p = a.join(f["path"].as_str().unwrap());
        assert_eq!(koopman_pe::formats::sha256_file(&p).unwrap(), f["sha256"].as_str().unwrap());
    }
    // 6 train, 2 truth, 2 predictions, portrait, two periodograms, rank, model, report
    assert_eq!(names.len(), 16);
    let rank = std::fs::read_to_string(a.join("rank.csv")).unwrap();
    assert!(rank.starts_with("n_freq_used,rank\n"));
    let portrait = std::fs::read_to_string(a.join("phase_portrait.csv")).unwrap();
    assert!(portrait.starts_with("set,index,t,p_lacI,p_tetR,p_cI\n"));
    let residual = report["training_residual"].as_f64().unwrap();
    assert!((report["one_step_error"].as_f64().unwrap() - residual).abs() < 1e-10);
}

#[test]
fn presets_parse_to_the_intended_experiments() {
    let load = |name: &str| {
        let (f, _): (ExperimentFile, _) = config::load(&root().join("presets").join(name)).unwrap();
        f.experiment.0
    };
    assert_eq!(load("fig1"), ExperimentConfig::default());
    let fig2 = load("fig2.json");
    assert_eq!(fig2.train_region, Region::shell(6, 1.0, 3.0).nonnegative());
    assert_eq!(fig2.test_region, Region::ball(6, 1.0).nonnegative());
    assert_eq!(ExperimentConfig { train_region: fig2.test_region.clone(), test_region: fig2.train_region.clone(), ..fig2 }, load("fig1"));
}
