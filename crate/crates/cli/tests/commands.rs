use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use shapealign_cli::formats::{read_curves, read_partition, read_responses, read_scores, write_responses, write_scores};
use shapealign::funcdata::{build_fourier_basis, project_scores, ScoreMatrix};

fn shapealign(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapealign"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("SHAPEALIGN_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = shapealign(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn simulated(n: &str, s: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", n, "--s", s, "--seed", "1"]);
    dir
}

fn dir_str(d: &tempfile::TempDir) -> &str {
    d.path().to_str().unwrap()
}

#[test]
fn simulate_is_reproducible_and_matches_table_layout() {
    let a = simulated("40", "1");
    let b = simulated("40", "1");
    for f in ["curves.csv", "scores.csv", "responses.csv", "truth.txt", "coefficients.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let truth = read_partition(&a.path().join("truth.txt")).unwrap();
    assert_eq!(truth.to_one_based(), vec![vec![1, 2, 3], vec![4, 5, 6, 7], vec![8, 9, 10]]);
    let scores = read_scores(&a.path().join("scores.csv")).unwrap();
    assert_eq!((scores.n_samples(), scores.n_covariates(), scores.dim()), (40, 10, 5));

    let m = json(&a.path().join("simulate.manifest.json"));
    assert_eq!(m["seed"], 1);
    assert_eq!(m["rng"], "ChaCha8Rng");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 5);
}

#[test]
fn noiseless_simulation_has_exact_signal() {
    let d = simulated("30", "0");
    let scores = read_scores(&d.path().join("scores.csv")).unwrap();
    let y = read_responses(&d.path().join("responses.csv")).unwrap();
    let text = std::fs::read_to_string(d.path().join("coefficients.csv")).unwrap();
    let mut b = vec![vec![0.0; 5]; 10];
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        b[f[0].parse::<usize>().unwrap() - 1][f[1].parse::<usize>().unwrap() - 1] = f[2].parse().unwrap();
    }
    for (n, yn) in y.iter().enumerate() {
        let signal: f64 = (0..10).flat_map(|j| (0..5).map(move |k| (j, k))).map(|(j, k)| scores.get(n, j, k) * b[j][k]).sum();
        assert!((signal - yn).abs() < 1e-12);
    }
}

#[test]
fn written_files_read_back_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut scores = ScoreMatrix::zeros(3, 2, 2);
    let vals = [0.1, -1.0 / 3.0, 1e-300, 2.0f64.sqrt(), std::f64::consts::PI, -0.0, 7.0, 1e17, -5e-324, 0.3, 9.99, 1.0 / 7.0];
    for (k, v) in vals.iter().enumerate() {
        scores.set(k / 4, (k / 2) % 2, k % 2, *v);
    }
    let path = dir.path().join("s.csv");
    write_scores(&path, &scores).unwrap();
    let back = read_scores(&path).unwrap();
    assert!(back.design().iter().zip(scores.design().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let y = vec![1.0 / 3.0, -2.5e-8, 6.02e23];
    let ry = dir.path().join("y.csv");
    write_responses(&ry, &y).unwrap();
    assert_eq!(read_responses(&ry).unwrap(), y);
}

#[test]
fn curves_reproject_onto_stored_scores() {
    let d = simulated("20", "1");
    let curves = read_curves(&d.path().join("curves.csv")).unwrap();
    let y = read_responses(&d.path().join("responses.csv")).unwrap();
    let curves = curves.into_curve_set(y).unwrap();
    let basis = build_fourier_basis(5, curves.grid()).unwrap();
    let projected = project_scores(&curves, &basis).unwrap();
    let stored = read_scores(&d.path().join("scores.csv")).unwrap();
    let err = projected.design().iter().zip(stored.design().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn rows_in_any_order_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("y.csv");
    std::fs::write(&p, "sample_id,y\n2,5.0\n1,4.0\n").unwrap();
    assert_eq!(read_responses(&p).unwrap(), vec![4.0, 5.0]);
}

#[test]
fn malformed_csv_reports_line_and_exits_2() {
    let d = simulated("20", "1");
    let bad = d.path().join("bad.csv");
    let mut text = std::fs::read_to_string(d.path().join("scores.csv")).unwrap();
    text = text.replacen("\n1,1,3,", "\n1,1,3,oops", 1);
    std::fs::write(&bad, &text).unwrap();
    let o = shapealign(d.path(), &["detect", "--data", dir_str(&d), "--scores", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.csv:4:"), "{err}");

    std::fs::write(&bad, "sample_id,y\n1,1.0\n1,2.0\n").unwrap();
    let o = shapealign(d.path(), &["detect", "--data", dir_str(&d), "--responses", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.csv:3: duplicate"));
}

#[test]
fn zero_lambda_grid_gives_single_ols_record() {
    let d = simulated("60", "1");
    ok(d.path(), &["detect", "--data", dir_str(&d), "--lambda-grid", "0"]);
    let path = json(&d.path().join("path.json"));
    assert_eq!(path["schema_version"], 1);
    let points = path["points"].as_array().unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0]["lambda"], 0.0);
    assert_eq!(points[0]["misalignment"].as_array().unwrap().len(), 10);
    assert!(points[0]["converged"].as_bool().unwrap());
}

#[test]
fn default_dataset_path_contains_true_partition() {
    let d = simulated("300", "1");
    ok(d.path(), &["detect", "--data", dir_str(&d), "--penalty", "mcp", "--gamma", "2.1"]);
    let path = json(&d.path().join("path.json"));
    let truth = serde_json::json!([[1, 2, 3], [4, 5, 6, 7], [8, 9, 10]]);
    assert!(path["points"].as_array().unwrap().iter().any(|p| p["partition"] == truth));
}

#[test]
fn invalid_scad_gamma_is_a_config_error() {
    let d = simulated("20", "1");
    let o = shapealign(d.path(), &["detect", "--data", dir_str(&d), "--penalty", "scad", "--gamma", "2.0", "--theta", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.path().join("path.json").exists());
}

#[test]
fn fourier_and_score_inputs_agree() {
    let d = simulated("80", "1");
    ok(d.path(), &["fit", "--data", dir_str(&d), "--partition", d.path().join("truth.txt").to_str().unwrap()]);
    let a = json(&d.path().join("model.json"));
    ok(d.path(), &["fit", "--data", dir_str(&d), "--basis", "fourier", "--groups", "1,2,3;4,5,6,7;8,9,10"]);
    let b = json(&d.path().join("model.json"));
    assert_eq!(b["basis"]["kind"], "fourier");
    let (ra, rb) = (a["train_rmse"].as_f64().unwrap(), b["train_rmse"].as_f64().unwrap());
    assert!((ra - rb).abs() < 1e-8, "{ra} {rb}");
}

#[test]
fn fit_writes_normalized_model_and_fitted_values() {
    let d = simulated("50", "0");
    ok(d.path(), &["fit", "--data", dir_str(&d), "--groups", "1,2,3;4,5,6,7;8,9,10"]);
    let model = json(&d.path().join("model.json"));
    assert!(model["train_rmse"].as_f64().unwrap() < 1e-6);
    for alpha in model["model"]["alpha"].as_array().unwrap() {
        let a: Vec<f64> = alpha.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!((a.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a[0] > 0.0);
    }
    let fitted = std::fs::read_to_string(d.path().join("fitted.csv")).unwrap();
    assert_eq!(fitted.lines().count(), 51);
}

#[test]
fn partition_must_cover_every_covariate() {
    let d = simulated("20", "1");
    for groups in ["1,2,3;4,5", "1,2;2,3,4,5,6,7,8,9,10"] {
        let o = shapealign(d.path(), &["fit", "--data", dir_str(&d), "--groups", groups]);
        assert_eq!(o.status.code(), Some(2), "{groups}");
    }
}

#[test]
fn cv_report_is_byte_identical_across_runs_and_jobs() {
    let d = simulated("90", "1");
    let args = ["cv", "--data", dir_str(&d), "--reps", "8", "--seed", "3", "--n-lambda", "8"];
    ok(d.path(), &args);
    let first = std::fs::read(d.path().join("cv_report.json")).unwrap();
    let mut parallel = vec!["--jobs", "4"];
    parallel.extend_from_slice(&args);
    ok(d.path(), &parallel);
    assert_eq!(first, std::fs::read(d.path().join("cv_report.json")).unwrap());
}

#[test]
fn single_candidate_single_rep_report() {
    let d = simulated("30", "1");
    ok(d.path(), &["cv", "--data", dir_str(&d), "--reps", "1", "--candidate", "1,2,3;4,5,6,7;8,9,10"]);
    let report = json(&d.path().join("cv_report.json"));
    let cands = report["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 1);
    assert_eq!(cands[0]["score"]["replicate_rmse"].as_array().unwrap().len(), 1);
    assert_eq!(report["selected"], 0);
}

#[test]
fn true_grouping_beats_ordinary_and_matrix_candidates() {
    let d = simulated("300", "1");
    let singletons = (1..=10).map(|j| j.to_string()).collect::<Vec<_>>().join(";");
    let all = (1..=10).map(|j| j.to_string()).collect::<Vec<_>>().join(",");
    ok(
        d.path(),
        &["cv", "--data", dir_str(&d), "--reps", "20", "--candidate", &singletons, "--candidate", &all, "--candidate", "1,2,3;4,5,6,7;8,9,10"],
    );
    let report = json(&d.path().join("cv_report.json"));
    let mean = |i: usize| report["candidates"][i]["score"]["mean_rmse"].as_f64().unwrap();
    assert!(mean(2) <= mean(0) && mean(2) <= mean(1), "{} {} {}", mean(0), mean(1), mean(2));
    assert_eq!(report["selected"], 2);
}

#[test]
fn oracle_without_truth_is_rejected() {
    let d = simulated("30", "1");
    let o = shapealign(d.path(), &["baselines", "--data", dir_str(&d), "--oracle"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--truth"));
}

#[test]
fn noiseless_homogeneous_baselines_are_exact() {
    // Every covariate shares one shape, so all four models are correctly specified.
    let dir = tempfile::tempdir().unwrap();
    let (n, p, dim) = (40, 3, 3);
    let mut scores = ScoreMatrix::zeros(n, p, dim);
    let mut y = vec![0.5; n];
    for (i, yi) in y.iter_mut().enumerate() {
        for j in 0..p {
            for k in 0..dim {
                let v = (((i * 31 + j * 7 + k * 3) % 17) as f64 - 8.0) / 5.0 + 0.01 * (i * k) as f64;
                scores.set(i, j, k, v);
                *yi += v * (j + 1) as f64 * [1.0, 0.5, 0.25][k];
            }
        }
    }
    write_scores(&dir.path().join("scores.csv"), &scores).unwrap();
    write_responses(&dir.path().join("responses.csv"), &y).unwrap();
    std::fs::write(dir.path().join("truth.txt"), "1,2,3\n").unwrap();
    ok(
        dir.path(),
        &["baselines", "--data", dir_str(&dir), "--truth", dir.path().join("truth.txt").to_str().unwrap(), "--reps", "5", "--n-lambda", "6"],
    );
    let report = json(&dir.path().join("baselines.json"));
    let methods = report["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 4);
    for m in methods {
        assert!(m["score"]["mean_rmse"].as_f64().unwrap() < 1e-6, "{m}");
    }
}

#[test]
fn single_covariate_models_coincide() {
    let dir = tempfile::tempdir().unwrap();
    let (n, dim) = (36, 3);
    let mut scores = ScoreMatrix::zeros(n, 1, dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut yi = 1.0 + ((i * 13 % 7) as f64 - 3.0) * 0.3;
        for k in 0..dim {
            let v = ((i * 5 + k * 11) % 9) as f64 - 4.0 + 0.1 * k as f64;
            scores.set(i, 0, k, v);
            yi += v * [0.7, -0.2, 0.4][k];
        }
        y.push(yi);
    }
    write_scores(&dir.path().join("scores.csv"), &scores).unwrap();
    write_responses(&dir.path().join("responses.csv"), &y).unwrap();
    ok(dir.path(), &["baselines", "--data", dir_str(&dir), "--reps", "6", "--lambda-grid", "0,1"]);
    let report = json(&dir.path().join("baselines.json"));
    let reps = |name: &str| -> Vec<f64> {
        let m = report["methods"].as_array().unwrap().iter().find(|m| m["name"] == name).unwrap();
        m["score"]["replicate_rmse"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
    };
    let ordinary = reps("ordinary");
    for other in ["matrix", "grouped"] {
        for (a, b) in ordinary.iter().zip(reps(other)) {
            assert!((a - b).abs() < 1e-6, "{other}: {a} {b}");
        }
    }
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("nested");
    let o = Command::new(env!("CARGO_BIN_EXE_shapealign"))
        .args(["simulate", "--n", "10"])
        .env("SHAPEALIGN_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("scores.csv").exists());
    assert!(target.join("simulate.manifest.json").exists());
}

#[test]
fn unwritable_output_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let o = shapealign(&file.join("sub"), &["simulate", "--n", "10"]);
    assert_eq!(o.status.code(), Some(2));
}
