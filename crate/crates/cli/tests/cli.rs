use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hfprec_cli::io::{emit_matrix, emit_panel, ingest_panel, read_matrix, PanelFormat};
use hfprec_core::PathPanel;
use nalgebra::DMatrix;

fn hfprec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfprec"))
        .args(args)
        .env_remove("HIFREQ_THREADS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

/// Simulated design-1 panels (d = 20, three factors) written by the binary.
fn simulated_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let sim = dir.join("sim");
    let out = hfprec(&[
        "simulate", "--design", "1", "--d", "20", "--n", "120", "--reps", "1", "--seed", "11",
        "--methods", "rc", "--emit-panels", "--out", path_str(&sim),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (sim.join("panel_y_rep0.csv"), sim.join("panel_x_rep0.csv"))
}

#[test]
fn ingest_small_panel() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "y.csv", "t,a,b\n0,1.0,2.0\n1,1.5,1.0\n2,0.5,3.0\n");
    let panel = ingest_panel(&p, PanelFormat::Levels).unwrap();
    assert_eq!((panel.n(), panel.dim()), (2, 2));
    assert_eq!(panel.values()[(2, 1)], 3.0);

    // equidistant timestamps are accepted despite decimal rounding
    let p = write(dir.path(), "ts.csv", "time,a\n0.0,1\n0.1,2\n0.2,3\n0.30000000000000004,4\n");
    assert_eq!(ingest_panel(&p, PanelFormat::Levels).unwrap().n(), 3);
}

#[test]
fn ingest_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let nan = write(dir.path(), "nan.csv", "t,a,b\n0,1,2\n1,1,2\n2,1,2\n3,1,2\n4,NaN,2\n5,1,2\n");
    let e = ingest_panel(&nan, PanelFormat::Levels).unwrap_err().to_string();
    assert!(e.contains("row 5"), "{e}");

    let ragged = write(dir.path(), "ragged.csv", "t,a,b\n0,1,2\n1,1\n2,1,2\n");
    let e = ingest_panel(&ragged, PanelFormat::Levels).unwrap_err().to_string();
    assert!(e.contains("row 2"), "{e}");

    let uneven = write(dir.path(), "uneven.csv", "t,a\n0,1\n1,2\n2,3\n4,4\n5,5\n");
    let e = ingest_panel(&uneven, PanelFormat::Levels).unwrap_err().to_string();
    assert!(e.contains("row 4") && e.contains("equidistant"), "{e}");

    let out = hfprec(&["estimate", "--y", path_str(&nan), "--out", path_str(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "input");
}

#[test]
fn emit_then_ingest_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let vals = [
        0.1,
        -1.0 / 3.0,
        std::f64::consts::PI * 1e-300,
        f64::MIN_POSITIVE,
        6.02214076e23,
        -0.0,
        1.0 + f64::EPSILON,
        123456.789,
    ];
    let m = DMatrix::from_fn(4, 2, |i, j| vals[2 * i + j]);
    let panel = PathPanel::new(m.clone()).unwrap();
    let p = dir.path().join("panel.csv");
    emit_panel(&p, &panel).unwrap();
    let back = ingest_panel(&p, PanelFormat::Levels).unwrap();
    for (a, b) in back.values().iter().zip(m.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    let q = dir.path().join("m.csv");
    emit_matrix(&q, &m).unwrap();
    let back = read_matrix(&q).unwrap();
    assert!(back.iter().zip(m.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn estimate_writes_contract_files() {
    let dir = tempfile::tempdir().unwrap();
    let (y, x) = simulated_inputs(dir.path());
    let out = dir.path().join("est");
    let res = hfprec(&["estimate", "--y", path_str(&y), "--x", path_str(&x), "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    for f in ["theta_z.csv", "theta_z_triplets.csv", "sigma_y.csv", "precision_y.csv", "beta.csv", "bic.json", "run_config.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let theta = read_matrix(&out.join("theta_z.csv")).unwrap();
    let sigma = read_matrix(&out.join("sigma_y.csv")).unwrap();
    let prec = read_matrix(&out.join("precision_y.csv")).unwrap();
    assert_eq!(theta.shape(), (20, 20));
    assert_eq!(read_matrix(&out.join("beta.csv")).unwrap().shape(), (20, 3));
    let resid = (&sigma * &prec - DMatrix::identity(20, 20)).amax();
    assert!(resid < 1e-8, "Σ̂_Y · Σ̂_Y⁻¹ − I = {resid}");

    // triplets list exactly the nonzero upper triangle, 1-based
    let mut rdr = csv::Reader::from_path(out.join("theta_z_triplets.csv")).unwrap();
    let mut count = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (i, j): (usize, usize) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
        let v: f64 = rec[2].parse().unwrap();
        assert!(1 <= i && i <= j && j <= 20);
        assert_eq!(v.to_bits(), theta[(i - 1, j - 1)].to_bits());
        count += 1;
    }
    let nonzero = (0..20).flat_map(|j| (0..=j).map(move |i| (i, j))).filter(|&(i, j)| theta[(i, j)] != 0.0).count();
    assert_eq!(count, nonzero);

    let bic: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("bic.json")).unwrap()).unwrap();
    assert_eq!(bic["path"].as_array().unwrap().len(), 10);
    assert_eq!(bic["config"]["m"], 10);
    let k = bic["selected_index"].as_u64().unwrap() as usize;
    assert_eq!(bic["path"][k]["lambda"], bic["selected_lambda"]);
    let best = bic["path"].as_array().unwrap().iter().filter_map(|r| r["bic"].as_f64()).fold(f64::INFINITY, f64::min);
    assert_eq!(bic["path"][k]["bic"].as_f64().unwrap(), best);
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (y, _) = simulated_inputs(dir.path());
    let cfg = write(dir.path(), "cfg.json", r#"{"m": 3, "penalty": "unweighted"}"#);
    let out = dir.path().join("a");
    let res = hfprec(&["estimate", "--config", path_str(&cfg), "--y", path_str(&y), "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let bic: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("bic.json")).unwrap()).unwrap();
    assert_eq!(bic["path"].as_array().unwrap().len(), 3);
    assert_eq!(bic["config"]["penalty"], "unweighted");

    let out = dir.path().join("b");
    let res = hfprec(&["estimate", "--config", path_str(&cfg), "--m", "4", "--y", path_str(&y), "--out", path_str(&out)]);
    assert!(res.status.success());
    let bic: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("bic.json")).unwrap()).unwrap();
    assert_eq!(bic["path"].as_array().unwrap().len(), 4);
}

#[test]
fn unknown_config_key_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"m": 3, "lamda": 0.1}"#);
    let res = hfprec(&["estimate", "--config", path_str(&cfg), "--y", "unused.csv", "--out", path_str(dir.path())]);
    assert_eq!(res.status.code(), Some(2));
    let e = stderr_json(&res);
    assert_eq!(e["exit_code"], 2);
    assert!(e["message"].as_str().unwrap().contains("lamda"));
}

#[test]
fn returns_input_matches_levels() {
    let dir = tempfile::tempdir().unwrap();
    let (y, _) = simulated_inputs(dir.path());
    let levels = ingest_panel(&y, PanelFormat::Levels).unwrap();
    let v = levels.values();
    let mut body = String::from("t");
    for j in 0..v.ncols() {
        body += &format!(",{}", j + 1);
    }
    body.push('\n');
    for h in 1..v.nrows() {
        body += &h.to_string();
        for j in 0..v.ncols() {
            body += &format!(",{:.16e}", v[(h, j)] - v[(h - 1, j)]);
        }
        body.push('\n');
    }
    let r = write(dir.path(), "returns.csv", &body);
    let (a, b) = (dir.path().join("lv"), dir.path().join("rt"));
    assert!(hfprec(&["estimate", "--y", path_str(&y), "--lambda", "0.1", "--out", path_str(&a)]).status.success());
    assert!(hfprec(&["estimate", "--y", path_str(&r), "--returns", "--lambda", "0.1", "--out", path_str(&b)])
        .status
        .success());
    let ta = read_matrix(&a.join("theta_z.csv")).unwrap();
    let tb = read_matrix(&b.join("theta_z.csv")).unwrap();
    assert!((ta - tb).amax() < 1e-9);
}

#[test]
fn infer_two_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let (y, x) = simulated_inputs(dir.path());
    let out = dir.path().join("inf");
    let res = hfprec(&[
        "infer", "--y", path_str(&y), "--x", path_str(&x), "--pairs", "1,2;3,4", "--level", "0.95", "--draws", "400",
        "--seed", "5", "--out", path_str(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut rdr = csv::Reader::from_path(out.join("inference.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!((&rows[0][0], &rows[0][1]), ("1", "2"));
    assert_eq!((&rows[1][0], &rows[1][1]), ("3", "4"));
    for r in &rows {
        let f = |k: usize| r[k].parse::<f64>().unwrap();
        let (point, se, lo, hi, blo, bhi) = (f(2), f(3), f(4), f(5), f(6), f(7));
        assert!(se > 0.0);
        assert!(((hi - lo) / (2.0 * se) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((point - 0.5 * (lo + hi)).abs() < 1e-12 * point.abs().max(1.0));
        // the simultaneous band is at least as wide as the pointwise interval
        assert!(blo <= lo && bhi >= hi);
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("inference.json")).unwrap()).unwrap();
    assert_eq!(json["entries"].as_array().unwrap().len(), 2);
    assert_eq!(json["num_multiplier_draws"], 400);
    assert_eq!(json["config"]["pairs"], "1,2;3,4");

    let res = hfprec(&["infer", "--y", path_str(&y), "--pairs", "1,21", "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let res = hfprec(&[
            "--threads", threads, "simulate", "--design", "2", "--d", "15", "--n", "80", "--reps", "6", "--seed", "7",
            "--out", path_str(&out),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        out
    };
    let a = run("a", "1");
    let b = run("b", "4");
    for f in ["summary.json", "replications.csv", "coverage.csv", "run_config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let mut rdr = csv::Reader::from_path(a.join("replications.csv")).unwrap();
    assert_eq!(rdr.records().count(), 6 * 6);
}

#[test]
fn threads_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_hfprec"))
        .args(["bench", "--dims", "10", "--repeats", "1", "--out", path_str(dir.path())])
        .env("HIFREQ_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    let res = Command::new(env!("CARGO_BIN_EXE_hfprec"))
        .args(["bench", "--dims", "10", "--repeats", "1", "--out", path_str(dir.path())])
        .env("HIFREQ_THREADS", "2")
        .output()
        .unwrap();
    assert!(res.status.success());
    let table = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(table.starts_with("d,n,lambda,iters,solve_ms,path_ms\n10,390,"));
}

#[test]
fn non_convergence_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let (y, _) = simulated_inputs(dir.path());
    let res = hfprec(&[
        "estimate", "--y", path_str(&y), "--lambda", "0.05", "--max-iter", "1", "--tol", "1e-14", "--out",
        path_str(&dir.path().join("o")),
    ]);
    assert_eq!(res.status.code(), Some(4));
    assert_eq!(stderr_json(&res)["error"], "non_convergence");

    // the same through the BIC path, where every grid point fails
    let res = hfprec(&[
        "estimate", "--y", path_str(&y), "--max-iter", "1", "--tol", "1e-14", "--out", path_str(&dir.path().join("p")),
    ]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(hfprec(&["estimate"]).status.code(), Some(2));
    assert_eq!(hfprec(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let res = hfprec(&["simulate", "--design", "3", "--out", path_str(dir.path())]);
    assert_eq!(res.status.code(), Some(2));
}
