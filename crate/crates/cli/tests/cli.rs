use otlab_cli::run;

fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

#[test]
fn w1_identical_files_is_zero_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    std::fs::write(&a, "0,0\n1,1\n2,0\n").unwrap();
    let out = dir.path().join("out");
    let code = run(args(&[
        "w1",
        "--a",
        a.to_str().unwrap(),
        "--b",
        a.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("w1.csv")).unwrap();
    let value: f64 = csv.lines().nth(1).unwrap().parse().unwrap();
    assert_eq!(value, 0.0);
    assert!(out.join("w1.manifest.json").exists());
}

#[test]
fn w1_missing_file_exit_one_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let present = dir.path().join("b.csv");
    std::fs::write(&present, "0\n").unwrap();
    let code = run(args(&[
        "w1",
        "--a",
        missing.to_str().unwrap(),
        "--b",
        present.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]));
    assert_eq!(code, 1);
}

#[test]
fn bernoulli_bias_csv_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let code = run(args(&[
        "exp-bernoulli",
        "--n",
        "1",
        "--theta-star",
        "0.5",
        "--grid",
        "0.4",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("bernoulli-bias.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let bias_col = header.iter().position(|c| *c == "bias").unwrap();
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row[bias_col], 1.0);
}

#[test]
fn unknown_flag_rejected() {
    let code = run(args(&["exp-bernoulli", "--n", "1", "--theta-star", "0.5", "--grid", "0.4", "--frobnicate"]));
    assert_eq!(code, 1);
}

#[test]
fn replay_reproduces_csv_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("first");
    let code = run(args(&[
        "exp-sample-complexity",
        "--d",
        "2",
        "--sizes",
        "10,20",
        "--reps",
        "5",
        "--seed",
        "31",
        "--out-dir",
        out1.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let original = std::fs::read(out1.join("sample-complexity.csv")).unwrap();

    let out2 = dir.path().join("second");
    let manifest = out1.join("sample-complexity.manifest.json");
    let code = run(args(&[
        "--replay",
        manifest.to_str().unwrap(),
        "--out-dir",
        out2.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let replayed = std::fs::read(out2.join("sample-complexity.csv")).unwrap();
    assert_eq!(original, replayed);
}

#[test]
fn config_file_overlay_with_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "n = 2\ntheta-star = 0.6\ngrid = 0.3,0.5\n").unwrap();
    let out = dir.path().join("out");
    // --n 4 on the command line must beat n = 2 from the file.
    let code = run(args(&[
        "exp-bernoulli",
        "--config",
        conf.to_str().unwrap(),
        "--n",
        "4",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("bernoulli-bias.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config"]["n"], 4);
    assert_eq!(manifest["config"]["theta_star"], 0.6);
}

#[test]
fn config_file_with_unknown_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "does-not-exist = 1\n").unwrap();
    let code = run(args(&[
        "exp-bernoulli",
        "--config",
        conf.to_str().unwrap(),
        "--n",
        "1",
        "--theta-star",
        "0.5",
        "--grid",
        "0.4",
    ]));
    assert_eq!(code, 1);
}

#[test]
fn sinkhorn_subcommand_divergence_of_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    std::fs::write(&a, "0,0\n1,1\n0,1\n").unwrap();
    let out = dir.path().join("out");
    let code = run(args(&[
        "sinkhorn",
        "--a",
        a.to_str().unwrap(),
        "--b",
        a.to_str().unwrap(),
        "--epsilon",
        "0.5",
        "--divergence",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("sinkhorn.csv")).unwrap();
    let value: f64 = csv.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert_eq!(value, 0.0);
}

#[test]
fn kmedians_subcommand_writes_centroids() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    // Two tight clusters near (0,0) and (10,10).
    let mut content = String::new();
    for i in 0..10 {
        content.push_str(&format!("{},{}\n", 0.01 * i as f64, 0.0));
        content.push_str(&format!("{},{}\n", 10.0 + 0.01 * i as f64, 10.0));
    }
    std::fs::write(&data, content).unwrap();
    let out = dir.path().join("out");
    let code = run(args(&[
        "kmedians",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "2",
        "--n-init",
        "5",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("kmedians.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + 2 centroids
}

#[test]
fn train_smoke_run_writes_log_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let code = run(args(&[
        "train",
        "--target",
        "gaussian:2",
        "--ng",
        "3",
        "--nd",
        "1",
        "--batch-n",
        "8",
        "--gen-hidden",
        "8",
        "--disc-hidden",
        "8",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    assert!(out.join("train.csv").exists());
    assert!(out.join("train_generator.ckpt").exists());
    assert!(out.join("train.manifest.json").exists());
    let csv = std::fs::read_to_string(out.join("train.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4); // header + 3 iterations
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(args(&["--help"])), 0);
    assert_eq!(run(args(&["w1", "--help"])), 0);
}
