//! CLI contract tests plus the determinism acceptance criterion: every
//! command run twice with the same configuration produces byte-identical
//! outputs (the bench timing column, which records wall time by design, is
//! excluded from the byte comparison).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

use funreg_core::{FittedModel, FunctionalDataset, SolverWorkspace};

static DIR_COUNTER: AtomicUsize = AtomicUsize::new(0);

fn scratch_dir(tag: &str) -> PathBuf {
    let n = DIR_COUNTER.fetch_add(1, Ordering::SeqCst);
    let dir = std::env::temp_dir().join(format!(
        "funreg-cli-test-{}-{tag}-{n}",
        std::process::id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn funreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_funreg"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn funreg_ok(args: &[&str]) -> Output {
    let out = funreg(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Drops the runtime column of a bench CSV so the deterministic remainder
/// can be compared byte for byte.
fn strip_runtime_column(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            if line.starts_with('#') || line.starts_with("scenario,") {
                line.to_string()
            } else {
                match line.rsplit_once(',') {
                    Some((rest, _runtime)) => rest.to_string(),
                    None => line.to_string(),
                }
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_10_byte_determinism_of_all_commands() {
    let mut all_equal = true;
    let mut detail = String::new();

    let run_twice = |cmd_args: &dyn Fn(&Path) -> Vec<String>, files: &[&str], tag: &str| -> bool {
        let dirs = [scratch_dir(&format!("{tag}-a")), scratch_dir(&format!("{tag}-b"))];
        for dir in &dirs {
            let args: Vec<String> = cmd_args(dir);
            let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
            funreg_ok(&arg_refs);
        }
        files.iter().all(|f| {
            let a = read(&dirs[0].join(f));
            let b = read(&dirs[1].join(f));
            if f == &"bench.csv" {
                strip_runtime_column(&a) == strip_runtime_column(&b)
            } else {
                a == b
            }
        })
    };

    // simulate
    let sim = |dir: &Path| -> Vec<String> {
        vec![
            "simulate".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            dir.display().to_string(),
            "scenario=B".into(),
            "n=6".into(),
            "t=14".into(),
            "q=4".into(),
            "kappa=1.0".into(),
            "p=2".into(),
        ]
    };
    let ok = run_twice(&sim, &["train.csv", "test.csv", "oracle.txt"], "sim");
    all_equal &= ok;
    detail.push_str(&format!("simulate={ok} "));

    // A shared dataset for the downstream commands.
    let data_dir = scratch_dir("data");
    funreg_ok(&[
        "simulate",
        "--seed",
        "11",
        "--out",
        data_dir.to_str().unwrap(),
        "scenario=B",
        "n=6",
        "t=14",
        "q=4",
        "kappa=1.0",
        "p=2",
    ]);
    let train = data_dir.join("train.csv").display().to_string();
    let test = data_dir.join("test.csv").display().to_string();

    // fit
    let train_arg = format!("data={train}");
    let fit = move |dir: &Path| -> Vec<String> {
        vec![
            "fit".into(),
            "--out".into(),
            dir.display().to_string(),
            train_arg.clone(),
            "lambda1=1e-4".into(),
            "lambda2=1e-6".into(),
            "lambda3=0.5".into(),
        ]
    };
    let ok = run_twice(&fit, &["model.txt"], "fit");
    all_equal &= ok;
    detail.push_str(&format!("fit={ok} "));

    // predict (needs a model)
    let model_dir = scratch_dir("model");
    funreg_ok(&[
        "fit",
        "--out",
        model_dir.to_str().unwrap(),
        &format!("data={train}"),
        "lambda1=1e-4",
    ]);
    let model = model_dir.join("model.txt").display().to_string();
    let pred_args = (format!("model={model}"), format!("data={test}"));
    let predict = move |dir: &Path| -> Vec<String> {
        vec![
            "predict".into(),
            "--out".into(),
            dir.display().to_string(),
            pred_args.0.clone(),
            pred_args.1.clone(),
        ]
    };
    let ok = run_twice(&predict, &["predictions.csv"], "predict");
    all_equal &= ok;
    detail.push_str(&format!("predict={ok} "));

    // cv
    let cv_arg = format!("data={train}");
    let cv = move |dir: &Path| -> Vec<String> {
        vec![
            "cv".into(),
            "--seed".into(),
            "3".into(),
            "--out".into(),
            dir.display().to_string(),
            cv_arg.clone(),
            "lambda1_grid=1e-6,1e-4,1e-2".into(),
            "lambda2_grid=1e-6".into(),
            "lambda3_grid=0.5".into(),
            "folds=4".into(),
        ]
    };
    let ok = run_twice(&cv, &["cv_scores.csv", "cv_selection.txt"], "cv");
    all_equal &= ok;
    detail.push_str(&format!("cv={ok} "));

    // bench (runtime column excluded: it records wall time)
    let bench = |dir: &Path| -> Vec<String> {
        vec![
            "bench".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            dir.display().to_string(),
            "scenario=A".into(),
            "n=5".into(),
            "t=20".into(),
            "q=5".into(),
            "kappa=1.0".into(),
            "p=0".into(),
            "replicates=3".into(),
            "lambda1_grid=1e-6,1e-4,1e-2".into(),
        ]
    };
    let ok = run_twice(&bench, &["bench.csv"], "bench");
    all_equal &= ok;
    detail.push_str(&format!("bench={ok}"));

    println!(
        "acceptance criterion 10 (byte determinism): {} [{detail}]",
        if all_equal { "PASS" } else { "FAIL" }
    );
    assert!(all_equal, "{detail}");
}

#[test]
fn simulate_writes_study_sized_files() {
    let dir = scratch_dir("sizes");
    funreg_ok(&[
        "simulate",
        "--seed",
        "1",
        "--out",
        dir.to_str().unwrap(),
        "scenario=A",
        "n=5",
        "t=50",
        "q=5",
        "kappa=1.0",
    ]);
    let train = FunctionalDataset::load_csv(dir.join("train.csv")).unwrap();
    let test = FunctionalDataset::load_csv(dir.join("test.csv")).unwrap();
    assert_eq!(train.subjects(), 50);
    assert_eq!(test.subjects(), 25);

    let tiny = scratch_dir("tiny");
    funreg_ok(&[
        "simulate",
        "--seed",
        "1",
        "--out",
        tiny.to_str().unwrap(),
        "scenario=A",
        "n=4",
        "t=3",
        "q=2",
        "kappa=1.0",
    ]);
    let test = FunctionalDataset::load_csv(tiny.join("test.csv")).unwrap();
    assert_eq!(test.subjects(), 1);
}

#[test]
fn fit_then_predict_reproduces_in_sample_values() {
    let dir = scratch_dir("insample");
    funreg_ok(&[
        "simulate",
        "--seed",
        "9",
        "--out",
        dir.to_str().unwrap(),
        "scenario=B",
        "n=5",
        "t=12",
        "q=3",
        "kappa=1.0",
        "p=1",
    ]);
    let train_path = dir.join("train.csv");
    funreg_ok(&[
        "fit",
        "--out",
        dir.to_str().unwrap(),
        &format!("data={}", train_path.display()),
        "lambda1=1e-3",
        "lambda2=1e-5",
        "lambda3=0.1",
    ]);
    funreg_ok(&[
        "predict",
        "--out",
        dir.to_str().unwrap(),
        &format!("model={}", dir.join("model.txt").display()),
        &format!("data={}", train_path.display()),
    ]);

    let train = FunctionalDataset::load_csv(&train_path).unwrap();
    let model = FittedModel::load(dir.join("model.txt")).unwrap();
    let ws = SolverWorkspace::new(&train, model.kernel).unwrap();
    let in_sample = ws.fitted_values(&model.r, &model.b).unwrap();

    let text = read(&dir.join("predictions.csv"));
    let mut lines = text.lines();
    lines.next().unwrap(); // targets header
    for (t, line) in lines.enumerate() {
        for (j, tok) in line.split(',').enumerate() {
            let v: f64 = tok.parse().unwrap();
            assert!(
                (v - in_sample[[j, t]]).abs() <= 1e-10,
                "subject {t} point {j}: {v} vs {}",
                in_sample[[j, t]]
            );
        }
    }
}

#[test]
fn predict_with_mismatched_p_fails_with_shape_class() {
    let dir = scratch_dir("mismatch");
    funreg_ok(&[
        "simulate",
        "--seed",
        "2",
        "--out",
        dir.to_str().unwrap(),
        "scenario=A",
        "n=4",
        "t=8",
        "q=3",
        "kappa=1.0",
        "p=2",
    ]);
    funreg_ok(&[
        "fit",
        "--out",
        dir.to_str().unwrap(),
        &format!("data={}", dir.join("train.csv").display()),
        "lambda1=1e-3",
    ]);
    // A p = 0 dataset against the p = 2 model.
    let other = scratch_dir("mismatch-other");
    funreg_ok(&[
        "simulate",
        "--seed",
        "2",
        "--out",
        other.to_str().unwrap(),
        "scenario=A",
        "n=4",
        "t=8",
        "q=3",
        "kappa=1.0",
        "p=0",
    ]);
    let out = funreg(&[
        "predict",
        "--out",
        dir.to_str().unwrap(),
        &format!("model={}", dir.join("model.txt").display()),
        &format!("data={}", other.join("train.csv").display()),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("class=shape"), "stderr: {stderr}");
}

#[test]
fn malformed_dataset_fails_with_parse_class_and_line() {
    let dir = scratch_dir("malformed");
    let path = dir.join("bad.csv");
    std::fs::write(&path, "#x_grid: 0.25,1.5\n#y_grid: 0.5\n#p: 0\n1,2,3\n").unwrap();
    let out = funreg(&[
        "fit",
        "--out",
        dir.to_str().unwrap(),
        &format!("data={}", path.display()),
        "lambda1=1e-3",
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("class=parse"), "stderr: {stderr}");
    assert!(stderr.contains("line 1"), "stderr: {stderr}");
}

#[test]
fn cv_with_singleton_grids_matches_direct_fit() {
    let dir = scratch_dir("cv-singleton");
    funreg_ok(&[
        "simulate",
        "--seed",
        "4",
        "--out",
        dir.to_str().unwrap(),
        "scenario=A",
        "n=5",
        "t=12",
        "q=4",
        "kappa=1.0",
        "p=0",
    ]);
    funreg_ok(&[
        "cv",
        "--seed",
        "4",
        "--out",
        dir.to_str().unwrap(),
        &format!("data={}", dir.join("train.csv").display()),
        "lambda1_grid=1e-4",
        "lambda2_grid=0",
        "lambda3_grid=0",
        "folds=4",
    ]);
    let selection = read(&dir.join("cv_selection.txt"));
    let expected = format!("#lambda: {:.17e},{:.17e},{:.17e}", 1e-4, 0.0, 0.0);
    assert!(selection.contains(&expected), "{selection}");
    let scores = read(&dir.join("cv_scores.csv"));
    // Header plus one row per fold for the single grid point.
    assert_eq!(scores.lines().count(), 1 + 4);
}

#[test]
fn bench_with_one_replicate_aggregates_to_itself() {
    let dir = scratch_dir("bench-one");
    funreg_ok(&[
        "bench",
        "--seed",
        "6",
        "--out",
        dir.to_str().unwrap(),
        "scenario=A",
        "n=5",
        "t=10",
        "q=3",
        "kappa=1.0",
        "p=0",
        "replicates=1",
        "lambda1_grid=1e-4,1e-2",
    ]);
    let text = read(&dir.join("bench.csv"));
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("scenario,"))
        .collect();
    assert_eq!(rows.len(), 2);
    let value = |row: &str| row.split(',').nth(7).unwrap().to_string();
    assert_eq!(value(rows[0]), value(rows[1]));
    assert!(rows[1].contains(",avg,"));
}

#[test]
fn config_file_supplies_keys_and_flags_win() {
    let dir = scratch_dir("config");
    let cfg_path = dir.join("run.conf");
    std::fs::write(
        &cfg_path,
        "# study settings\nscenario = A\nn = 4\nt = 6\nq = 3\nkappa = 1.0\np = 0\nseed = 1\n",
    )
    .unwrap();
    let out_a = scratch_dir("config-a");
    funreg_ok(&[
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    // Same config but the seed overridden on the command line.
    let out_b = scratch_dir("config-b");
    funreg_ok(&[
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    // And the same effective settings expressed via key=value overrides.
    let out_c = scratch_dir("config-c");
    funreg_ok(&[
        "simulate",
        "--out",
        out_c.to_str().unwrap(),
        "scenario=A",
        "n=4",
        "t=6",
        "q=3",
        "kappa=1.0",
        "p=0",
        "seed=2",
    ]);
    let a = read(&out_a.join("train.csv"));
    let b = read(&out_b.join("train.csv"));
    let c = read(&out_c.join("train.csv"));
    assert_ne!(a, b, "the --seed flag must override the config seed");
    assert_eq!(b, c);
}

#[test]
fn parallel_bench_matches_sequential_output() {
    let args = |dir: &Path, parallel: &str| -> Vec<String> {
        vec![
            "bench".into(),
            "--seed".into(),
            "4".into(),
            "--out".into(),
            dir.display().to_string(),
            "scenario=B".into(),
            "n=4".into(),
            "t=12".into(),
            "q=3".into(),
            "kappa=1.0".into(),
            "p=0".into(),
            "replicates=4".into(),
            "lambda1_grid=1e-5,1e-3".into(),
            format!("parallel={parallel}"),
        ]
    };
    let seq_dir = scratch_dir("bench-seq");
    let par_dir = scratch_dir("bench-par");
    for (dir, mode) in [(&seq_dir, "false"), (&par_dir, "true")] {
        let a = args(dir, mode);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        funreg_ok(&refs);
    }
    let seq = strip_runtime_column(&read(&seq_dir.join("bench.csv")));
    let par = strip_runtime_column(&read(&par_dir.join("bench.csv")));
    assert_eq!(seq, par);
}

#[test]
fn bench_reports_published_reference_for_known_cells() {
    let dir = scratch_dir("bench-ref");
    funreg_ok(&[
        "bench",
        "--seed",
        "3",
        "--out",
        dir.to_str().unwrap(),
        "scenario=A",
        "n=5",
        "t=50",
        "q=5",
        "kappa=1.0",
        "p=0",
        "replicates=1",
        "lambda1_grid=1e-4",
    ]);
    let text = read(&dir.join("bench.csv"));
    assert!(text.starts_with("#published_rkhs_rmise_x100: 9.14\n"), "{text}");
}
